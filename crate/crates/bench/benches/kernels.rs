use criterion::{black_box, criterion_group, criterion_main, Criterion};
use slcone::cone2::{derive_params, verify_sl, ConeStrands, Grid};
use slcone::integrable::ClosedFormFields;
use slcone::ode::{initial_state, integrate_strand, potential_closed_form, IntegratorOptions};
use slcone::spectral::spectral_constants;

fn strands(c: &mut Criterion) {
    let p = derive_params(1.0, 0.3, 0.4).unwrap();
    let coeffs = p.beta_coeffs();
    let start = initial_state(&coeffs, p.b).unwrap();
    let opts = IntegratorOptions::with_tol(1e-12);
    c.bench_function("integrate_strand", |b| {
        b.iter(|| integrate_strand(&coeffs, black_box(&start), (-5.0, 5.0), &opts).unwrap())
    });
    let form = potential_closed_form(&coeffs, p.b).unwrap();
    c.bench_function("closed_form_potential", |b| b.iter(|| form.v(black_box(1.3))));
}

fn verification(c: &mut Criterion) {
    let p = derive_params(1.0, 0.3, 0.4).unwrap();
    let opts = IntegratorOptions::with_tol(1e-12);
    let st = ConeStrands::integrate(&p, (-2.0, 2.0), (-2.0, 2.0), &opts).unwrap();
    let grid = Grid::new((-2.0, 2.0), (-2.0, 2.0), 20);
    c.bench_function("verify_sl_20", |b| b.iter(|| verify_sl(&p, &st, &grid, 1e-9).unwrap()));
}

fn spectral(c: &mut Criterion) {
    let p = derive_params(0.0, 0.3, 0.5).unwrap();
    let src = ClosedFormFields::new(&p).unwrap();
    let pts = [(0.0, 0.0), (1.0, 2.0), (-2.5, 0.5)];
    c.bench_function("spectral_constants", |b| b.iter(|| spectral_constants(&src, black_box(&pts)).unwrap()));
}

criterion_group!(benches, strands, verification, spectral);
criterion_main!(benches);
