use std::io::{self, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::Serialize;
use serde_json::json;

use slcone::cone2::{
    area, area_by_quadrature, derive_params, lattice_index, period_box, verify_sl, ConeParams, ConeStrands, Grid,
    Potentials,
};
use slcone::cone3::{verify_sl3, Grid3, TripleParams, TripleStrands};
use slcone::export::{self, cone_mesh, read_ndjson, triple_mesh, write_curve_csv, write_json, write_ndjson, Mesh};
use slcone::integrable::{
    finite_type_certificate, killing_field, killing_residual, return_map_defects, toda_residual, tzitzeica_residual,
    unit_circle_samples, xi_and_classify, ClosedFormFields, FiniteTypeCertificate, HarmonicClass, ReturnMapDefects,
};
use slcone::ode::{initial_state, integrate_until_escape, IntegratorOptions, StrandCoefficients, Trajectory};
use slcone::periodicity::{find_hits, relatively_rational_period, verify_hit, SearchCase, SearchConfig, TorusRecord};
use slcone::spectral::{
    char_poly_check, cubic_identity_residual, default_lambda_grid, e_closed_form, spectral_constants, CurveForm,
    InvolutionReport, SpectralCurve,
};
use slcone::{Complex64, Error};

use crate::{
    AreaArgs, Command, ConeArgs, CurveFormArg, DiagnoseArgs, MeshArgs, MeshFormat, SearchArgs, StrandChoice, TraceArgs,
    TripleArgs, VerifyArgs,
};

/// Rejected input, reported with exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Usage>()
            || matches!(
                c.downcast_ref::<Error>(),
                Some(
                    Error::InvalidLevel(_)
                        | Error::Domain(_)
                        | Error::DegenerateAlpha
                        | Error::DegenerateLattice
                        | Error::CannotNormalize
                )
            )
    })
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(usage(format!("--{name} must be positive, got {x}")));
    }
    Ok(())
}

/// Run a subcommand; `Ok(false)` means a check did not pass.
pub fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Verify(a) => verify(a),
        Command::Diagnose(a) => diagnose(a),
        Command::TorusSearch(a) => torus_search(a),
        Command::Mesh(a) => mesh(a),
        Command::Area(a) => area_cmd(a),
        Command::StrandTrace(a) => strand_trace(a),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value).with_context(|| format!("writing {}", path.display())),
        None => {
            let v = export::versioned(value)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
    }
}

fn cone_params(c: &ConeArgs) -> Result<ConeParams> {
    Ok(derive_params(c.theta, c.b_level, c.c_level)?)
}

fn triple_params(c: &ConeArgs, t: &TripleArgs) -> Result<TripleParams> {
    let alpha = t.alpha.ok_or_else(|| usage("--three needs --alpha"))?;
    Ok(TripleParams::from_alpha(alpha, [t.a_level, c.b_level, c.c_level])?)
}

/// Integrate one strand of a three-variable family over `±span` (stopping at
/// escapes) and return the window `0.9 ×` the covered part.
fn bounded_strand(
    coeffs: StrandCoefficients,
    level: f64,
    span: f64,
    opts: &IntegratorOptions,
) -> Result<(Trajectory, (f64, f64))> {
    let traj = integrate_until_escape(&coeffs, &initial_state(&coeffs, level)?, (-span, span), opts)?;
    let (lo, hi) = traj.escapes();
    let window = (0.9 * lo.unwrap_or(-span).max(-span), 0.9 * hi.unwrap_or(span).min(span));
    Ok((traj, window))
}

struct TripleSetup {
    params: TripleParams,
    strands: TripleStrands,
    windows: [(f64, f64); 3],
}

fn triple_setup(c: &ConeArgs, t: &TripleArgs, integrator_tol: f64) -> Result<TripleSetup> {
    positive("r-max", t.r_max)?;
    positive("span", t.span)?;
    let params = triple_params(c, t)?;
    let opts = IntegratorOptions::with_tol(integrator_tol);
    let (x, wr) = bounded_strand(params.alpha_coeffs(), params.a_level, t.r_max, &opts)?;
    let (y, ws) = bounded_strand(params.beta_coeffs(), params.b_level, t.span, &opts)?;
    let (z, wt) = bounded_strand(params.gamma_coeffs(), params.c_level, t.span, &opts)?;
    Ok(TripleSetup { params, strands: TripleStrands::from_parts(x, y, z), windows: [wr, ws, wt] })
}

fn verify(a: VerifyArgs) -> Result<bool> {
    positive("tol", a.tol)?;
    positive("integrator-tol", a.integrator_tol)?;
    if a.grid < 2 {
        return Err(usage("--grid must be at least 2"));
    }
    let report = if a.triple.three {
        let setup = triple_setup(&a.cone, &a.triple, a.integrator_tol)?;
        let [r_range, s_range, t_range] = setup.windows;
        let grid = Grid3 { r_range, s_range, t_range, n: a.grid };
        verify_sl3(&setup.params, &setup.strands, &grid, a.tol)?
    } else {
        let p = cone_params(&a.cone)?;
        let (s_len, t_len) = period_box(&p)?;
        let opts = IntegratorOptions::with_tol(a.integrator_tol);
        let strands = ConeStrands::integrate(&p, (0.0, s_len), (0.0, t_len), &opts)?;
        verify_sl(&p, &strands, &Grid::new((0.0, s_len), (0.0, t_len), a.grid), a.tol)?
    };
    emit(&report, a.out.as_deref())?;
    eprintln!(
        "{}: {} samples, worst residual {:.3e} (tol {:.1e})",
        if report.pass { "pass" } else { "FAIL" },
        report.samples,
        report.maxima.worst(),
        a.tol
    );
    Ok(report.pass)
}

const POINTS: [(f64, f64); 6] = [(0.0, 0.0), (0.3, 0.7), (1.3, 2.1), (-0.8, 1.6), (2.4, -1.1), (-2.2, -2.9)];

#[derive(Serialize)]
struct Thresholds {
    return_map: f64,
    toda: f64,
    killing: f64,
    algebraic: f64,
}

const THRESHOLDS: Thresholds = Thresholds { return_map: 1e-6, toda: 1e-6, killing: 1e-5, algebraic: 1e-9 };

#[derive(Serialize)]
struct SymmetryBlock {
    killing_residual: f64,
    reality: f64,
    equivariance: f64,
    kappa: f64,
    finite_type: FiniteTypeCertificate,
}

#[derive(Serialize)]
struct SpectralBlock {
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "E")]
    e: f64,
    e_closed_form: f64,
    d_spread: f64,
    e_spread: f64,
    char_poly: f64,
    cubic_identity: f64,
    involutions: InvolutionReport,
}

#[derive(Serialize)]
struct Diagnostics {
    params: ConeParams,
    xi: Complex64,
    class: HarmonicClass,
    return_map: ReturnMapDefects,
    toda: Option<f64>,
    tzitzeica: Option<f64>,
    killing: Option<SymmetryBlock>,
    spectral: Option<SpectralBlock>,
    thresholds: Thresholds,
    pass: bool,
}

fn diagnose(a: DiagnoseArgs) -> Result<bool> {
    positive("h", a.h)?;
    positive("h-return", a.h_return)?;
    let p = cone_params(&a.cone)?;
    let (xi, class) = xi_and_classify(&p);
    let strands = ConeStrands::integrate(&p, (-4.0, 4.0), (-4.0, 4.0), &IntegratorOptions::with_tol(a.integrator_tol))?;
    let return_map = return_map_defects(&p, &strands, &POINTS, a.h_return)?;
    let mut pass = return_map.conjugate < THRESHOLDS.return_map;
    let mut report = Diagnostics {
        params: p,
        xi,
        class,
        return_map,
        toda: None,
        tzitzeica: None,
        killing: None,
        spectral: None,
        thresholds: THRESHOLDS,
        pass,
    };
    if class == HarmonicClass::Superconformal {
        let src = ClosedFormFields::new(&p)?;
        let toda = toda_residual(&src, &POINTS, a.h)?;
        let tz = tzitzeica_residual(&src, &POINTS, a.h)?;
        let lambdas = unit_circle_samples(8);
        let mut sym = SymmetryBlock {
            killing_residual: killing_residual(&src, &POINTS, a.h)?,
            reality: 0.0,
            equivariance: 0.0,
            kappa: 0.0,
            finite_type: finite_type_certificate(&src, POINTS[1].0, POINTS[1].1, -1.0)?,
        };
        let consts = spectral_constants(&src, &POINTS)?;
        let (mut poly, mut cubic) = (0.0f64, 0.0f64);
        for &(s, t) in &POINTS {
            let k = killing_field(&src, s, t)?;
            sym.reality = sym.reality.max(k.reality_residual(&lambdas));
            sym.equivariance = sym.equivariance.max(k.equivariance_residual(&lambdas));
            sym.kappa = sym.kappa.max(k.kappa_residual(&lambdas));
            for &l in &lambdas {
                poly = poly.max(char_poly_check(&k, consts.d, consts.e, consts.xi, l));
                cubic = cubic.max(cubic_identity_residual(&k, consts.d, consts.e, consts.xi, l));
            }
        }
        let form = match a.curve_form {
            CurveFormArg::Quadratic => CurveForm::Quadratic,
            CurveFormArg::Sextic => CurveForm::Sextic,
        };
        let curve = SpectralCurve { d: consts.d, e: consts.e, xi: consts.xi, form };
        let samples = curve.samples(&default_lambda_grid())?;
        let involutions = curve.involutions(&samples)?;
        if let Some(path) = &a.curve {
            write_curve_csv(path, &samples).with_context(|| format!("writing {}", path.display()))?;
        }
        let alg = THRESHOLDS.algebraic;
        pass &= toda < THRESHOLDS.toda
            && tz < THRESHOLDS.toda
            && sym.killing_residual < THRESHOLDS.killing
            && sym.reality.max(sym.equivariance).max(sym.kappa) < 1e-12
            && sym.finite_type.top_defect.max(sym.finite_type.next_defect) < alg
            && (consts.d - 1.0 / 12.0).abs() < alg
            && consts.d_spread.max(consts.e_spread) < 1e-8
            && poly.max(cubic) < alg
            && involutions.rho.max(involutions.sigma) < alg;
        report.toda = Some(toda);
        report.tzitzeica = Some(tz);
        report.killing = Some(sym);
        report.spectral = Some(SpectralBlock {
            d: consts.d,
            e: consts.e,
            e_closed_form: e_closed_form(&p),
            d_spread: consts.d_spread,
            e_spread: consts.e_spread,
            char_poly: poly,
            cubic_identity: cubic,
            involutions,
        });
    } else {
        eprintln!("isotropic parameters: Toda, Killing and spectral blocks skipped");
        if a.curve.is_some() {
            eprintln!("no spectral curve for isotropic parameters; --curve ignored");
        }
    }
    report.pass = pass;
    emit(&report, a.out.as_deref())?;
    eprintln!("{}: xi = {:.6e}{:+.6e}i ({:?})", if pass { "pass" } else { "FAIL" }, xi.re, xi.im, class);
    Ok(pass)
}

fn same_params(a: &ConeParams, b: &ConeParams) -> bool {
    (a.theta - b.theta).abs() < 1e-12 && (a.b_level - b.b_level).abs() < 1e-12 && (a.c_level - b.c_level).abs() < 1e-12
}

fn write_summary(path: &Path, records: &[TorusRecord]) -> Result<()> {
    export::write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "theta",
            "B",
            "C",
            "S",
            "T",
            "m",
            "n",
            "N",
            "area",
            "area_quadrature",
            "closure",
            "max_den",
        ])?;
        for r in records {
            csv.write_record([
                r.params.theta.to_string(),
                r.params.b_level.to_string(),
                r.params.c_level.to_string(),
                r.y.period.to_string(),
                r.z.period.to_string(),
                r.lattice.lattice[0][0].to_string(),
                r.lattice.lattice[1][1].to_string(),
                r.lattice.n.to_string(),
                r.area.to_string(),
                r.area_quadrature.map(|x| x.to_string()).unwrap_or_default(),
                r.closure_defect.map(|x| format!("{x:.3e}")).unwrap_or_default(),
                r.max_den.to_string(),
            ])?;
        }
        csv.flush()
    })
    .with_context(|| format!("writing {}", path.display()))
}

fn torus_search(a: SearchArgs) -> Result<bool> {
    positive("tol", a.tol)?;
    positive("step", a.step)?;
    let mut cfg = SearchConfig::new(a.case);
    cfg.max_den = a.max_den;
    cfg.tol = a.tol;
    cfg.step = a.step;
    cfg.limit = a.limit;
    if let Some(b) = a.b_level {
        if a.case == SearchCase::B || a.case == SearchCase::Generic {
            return Err(usage("--b-level only applies to cases a and c"));
        }
        cfg.b_level = b;
    }

    let mut records: Vec<TorusRecord> = if a.resume && a.out.exists() {
        read_ndjson(&a.out).with_context(|| format!("reading {}", a.out.display()))?
    } else {
        Vec::new()
    };
    let kept = records.len();
    let hits = find_hits(&cfg)?;
    let mut rejected = 0;
    for hit in &hits {
        if records.len() >= cfg.limit {
            break;
        }
        if records.iter().any(|r| same_params(&r.params, &hit.params)) {
            continue;
        }
        match verify_hit(hit, &cfg) {
            Ok(r) if r.closure_defect.is_some_and(|d| d < cfg.verify_tol) => {
                records.push(r);
                write_ndjson(&a.out, &records).with_context(|| format!("writing {}", a.out.display()))?;
            }
            _ => rejected += 1,
        }
    }
    write_ndjson(&a.out, &records).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.summary {
        write_summary(path, &records)?;
    }
    eprintln!(
        "{} candidates, {} records ({} resumed), {} rejected -> {}",
        hits.len(),
        records.len(),
        kept,
        rejected,
        a.out.display()
    );
    Ok(true)
}

fn write_mesh(mesh: &Mesh, format: MeshFormat, path: &Path) -> Result<()> {
    export::write_atomic(path, |w| match format {
        MeshFormat::Obj => mesh.write_obj(w),
        MeshFormat::Ply => mesh.write_ply(w),
    })
    .with_context(|| format!("writing {}", path.display()))
}

fn mesh(a: MeshArgs) -> Result<bool> {
    if a.n < 2 {
        return Err(usage("--n must be at least 2"));
    }
    positive("integrator-tol", a.integrator_tol)?;
    let mesh = if a.triple.three {
        let setup = triple_setup(&a.cone, &a.triple, a.integrator_tol)?;
        let [(r_lo, r_hi), s_win, t_win] = setup.windows;
        ensure!(r_lo < a.r && a.r < r_hi, "--r {} lies outside the window ({r_lo}, {r_hi})", a.r);
        let s_range = a.s_range.unwrap_or(s_win);
        let t_range = a.t_range.unwrap_or(t_win);
        triple_mesh(&setup.params, &setup.strands, a.r, s_range, t_range, a.n, &a.projection)?
    } else {
        let p = cone_params(&a.cone)?;
        let (s_len, t_len) = period_box(&p)?;
        let s_range = a.s_range.unwrap_or((0.0, s_len));
        let t_range = a.t_range.unwrap_or((0.0, t_len));
        let span = |r: (f64, f64)| (r.0.min(0.0), r.1.max(0.0));
        let opts = IntegratorOptions::with_tol(a.integrator_tol);
        let strands = ConeStrands::integrate(&p, span(s_range), span(t_range), &opts)?;
        cone_mesh(&strands, s_range, t_range, a.n, &a.projection)?
    };
    write_mesh(&mesh, a.format, &a.out)?;
    eprintln!("{} vertices, {} faces -> {}", mesh.vertices.len(), mesh.faces.len(), a.out.display());
    Ok(true)
}

fn strand_period(form: &slcone::ode::EllipticForm, coeffs: &StrandCoefficients, given: Option<f64>) -> Result<f64> {
    if let Some(p) = given {
        positive("period", p)?;
        return Ok(p);
    }
    if form.is_constant() {
        return relatively_rational_period(coeffs, 40, 1e-9)
            .ok_or_else(|| usage("constant potential with irrational coefficient ratios: pass --s-period/--t-period"));
    }
    Ok(form.period()?)
}

fn area_cmd(a: AreaArgs) -> Result<bool> {
    if a.panels < 2 {
        return Err(usage("--panels must be at least 2"));
    }
    let p = cone_params(&a.cone)?;
    let n = lattice_index(&a.lattice);
    if n == 0 {
        return Err(Error::DegenerateLattice.into());
    }
    let pots = Potentials::new(&p)?;
    let s = strand_period(&pots.v, &p.beta_coeffs(), a.s_period)?;
    let t = strand_period(&pots.w, &p.gamma_coeffs(), a.t_period)?;
    let closed = area(&p, s, t, &a.lattice)?;
    let strands = ConeStrands::integrate(&p, (0.0, s), (0.0, t), &IntegratorOptions::with_tol(1e-12))?;
    let quad = n as f64 * area_by_quadrature(&p, &strands, s, t, a.panels)?;
    let rel = ((closed - quad) / closed).abs();
    emit(
        &json!({
            "params": p,
            "S": s,
            "T": t,
            "lattice": a.lattice,
            "N": n,
            "area": closed,
            "area_quadrature": quad,
            "relative_difference": rel,
        }),
        a.out.as_deref(),
    )?;
    eprintln!("area {closed:.12} (quadrature {quad:.12}, relative difference {rel:.2e})");
    Ok(true)
}

fn strand_trace(a: TraceArgs) -> Result<bool> {
    positive("tol", a.tol)?;
    if !(a.from <= 0.0 && 0.0 <= a.to) || a.from == a.to {
        return Err(usage("--from and --to must bracket the initial parameter 0"));
    }
    let coeffs = match a.coeffs {
        Some(c) => StrandCoefficients::new(c)?,
        None => {
            let p = derive_params(a.theta, 0.0, 0.0)?;
            match a.strand {
                StrandChoice::Y => p.beta_coeffs(),
                StrandChoice::Z => p.gamma_coeffs(),
            }
        }
    };
    let opts = IntegratorOptions::with_tol(a.tol);
    let traj = integrate_until_escape(&coeffs, &initial_state(&coeffs, a.level)?, (a.from, a.to), &opts)?;
    let (lo, hi) = traj.escapes();
    if lo.is_some() || hi.is_some() {
        eprintln!("strand escapes: lower {lo:?}, upper {hi:?}; samples cover {:?}", traj.span());
    }
    match &a.out {
        Some(path) => export::write_atomic(path, |w| traj.write_csv(w, a.samples))
            .with_context(|| format!("writing {}", path.display()))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            traj.write_csv(&mut lock, a.samples)?;
            lock.flush()?;
        }
    }
    let (level, constraint) = traj.drift();
    eprintln!("{} steps, level drift {level:.2e}, constraint drift {constraint:.2e}", traj.knot_count());
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_are_classified() {
        assert!(is_usage_error(&anyhow::Error::from(Error::InvalidLevel(1.5))));
        assert!(is_usage_error(&usage("bad")));
        assert!(!is_usage_error(&anyhow::Error::from(Error::Aperiodic)));
        assert!(!is_usage_error(&anyhow::anyhow!("io")));
    }
}
