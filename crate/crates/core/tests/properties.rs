use std::f64::consts::TAU;

use proptest::prelude::*;

use slcone::cone2::{derive_params, verify_sl, ConeStrands, Grid};
use slcone::integrable::{finite_type_certificate, killing_field, unit_circle_samples, ClosedFormFields};
use slcone::ode::{initial_state, integrate_strand, IntegratorOptions, StrandCoefficients};
use slcone::periodicity::{closing_multiple, rationalize};
use slcone::spectral::{default_lambda_grid, spectral_constants, CurveForm, SpectralCurve};

const SAMPLES: [(f64, f64); 5] = [(0.0, 0.0), (0.7, -1.2), (2.2, 0.4), (-1.9, 2.6), (3.1, -3.3)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cones_are_special_lagrangian(theta in 0.0f64..TAU, b in -0.95f64..0.95, c in -0.95f64..0.95) {
        let p = derive_params(theta, b, c).unwrap();
        let st = ConeStrands::integrate(&p, (-2.0, 2.0), (-2.0, 2.0), &IntegratorOptions::with_tol(1e-12)).unwrap();
        let rep = verify_sl(&p, &st, &Grid::new((-2.0, 2.0), (-2.0, 2.0), 8), 1e-9).unwrap();
        prop_assert!(rep.pass, "{:?}", rep.maxima);
    }

    #[test]
    fn strand_level_is_conserved(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, level in -0.99f64..0.99) {
        let coeffs = StrandCoefficients::zero_sum([c1, c2, -c1 - c2]);
        prop_assume!(coeffs.is_ok());
        let coeffs = coeffs.unwrap();
        prop_assume!(coeffs.c.iter().any(|x| x.abs() > 0.05));
        let traj = integrate_strand(&coeffs, &initial_state(&coeffs, level).unwrap(), (-20.0, 20.0),
            &IntegratorOptions::with_tol(1e-11)).unwrap();
        let (drift, constraint) = traj.drift();
        prop_assert!(drift < 1e-8 && constraint < 1e-8);
    }

    #[test]
    fn spectral_data_is_point_independent(theta in 0.0f64..TAU, b in -0.95f64..0.95, c in -0.95f64..0.95) {
        let p = derive_params(theta, b, c).unwrap();
        prop_assume!(p.xi.norm() > 1e-2);
        let src = ClosedFormFields::new(&p).unwrap();
        let k = spectral_constants(&src, &SAMPLES).unwrap();
        prop_assert!(k.d_spread < 1e-8 && k.e_spread < 1e-8);
        prop_assert!((k.d - 1.0 / 12.0).abs() < 1e-9);
        let curve = SpectralCurve { d: k.d, e: k.e, xi: k.xi, form: CurveForm::Sextic };
        let inv = curve.involutions(&curve.samples(&default_lambda_grid()).unwrap()).unwrap();
        prop_assert!(inv.rho < 1e-9 && inv.sigma < 1e-9);
    }

    #[test]
    fn killing_symmetries(theta in 0.0f64..TAU, b in -0.95f64..0.95, c in -0.95f64..0.95, s in -4.0f64..4.0, t in -4.0f64..4.0) {
        let p = derive_params(theta, b, c).unwrap();
        prop_assume!(p.xi.norm() > 1e-2);
        let src = ClosedFormFields::new(&p).unwrap();
        let k = killing_field(&src, s, t).unwrap();
        let ls = unit_circle_samples(8);
        prop_assert!(k.reality_residual(&ls) < 1e-12);
        prop_assert!(k.kappa_residual(&ls) < 1e-12);
        let cert = finite_type_certificate(&src, s, t, -1.0).unwrap();
        prop_assert!(cert.top_defect < 1e-9 && cert.next_defect < 1e-9 && cert.degree == 7);
    }

    #[test]
    fn rationalize_recovers_fractions(p in -200i64..200, q in 1i64..40) {
        let (a, b) = rationalize(p as f64 / q as f64, 40, 1e-12).unwrap();
        prop_assert_eq!(a * q, p * b);
        prop_assert!(b <= q);
    }

    #[test]
    fn closing_multiple_closes(ps in prop::array::uniform3(-30i64..30), qs in prop::array::uniform3(1i64..12)) {
        let ratios = [0, 1, 2].map(|j| (ps[j], qs[j]));
        let n = closing_multiple(&ratios);
        for (p, q) in ratios {
            prop_assert_eq!((n * p) % (2 * q), 0);
        }
    }
}
