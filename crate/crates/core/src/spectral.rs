//! Spectral data of the polynomial Killing field: the constants `D`, `E`,
//! the characteristic polynomial of `τ(λ)` and samples of the eigenvalue
//! curve with its two real involutions.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone2::ConeParams;
use crate::cubic::depressed_complex_roots;
use crate::error::{Error, Result};
use crate::integrable::{killing_field, max_entry, CMatrix, FieldSource, KillingField, SpecialFrame};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `D` and `E` averaged over sample points, with their spreads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub xi: Complex64,
    pub d_spread: f64,
    pub e_spread: f64,
    pub samples: usize,
}

/// `D = f² + 2r²/f + 2|g|² + 3h²` at one point.
pub fn d_at(k: &KillingField, r: f64) -> f64 {
    let (f, h) = (k.f, k.h);
    f * f + 2.0 * r * r / f + 2.0 * k.g.norm_sqr() + 3.0 * h * h
}

/// `E = −f(g² + ḡ²) − 2f²h + 2r²h/f + 2|g|²h + 2h³` at one point.
pub fn e_at(k: &KillingField, r: f64) -> f64 {
    let (f, g, h) = (k.f, k.g, k.h);
    -2.0 * f * (g * g).re - 2.0 * f * f * h + 2.0 * r * r * h / f + 2.0 * g.norm_sqr() * h + 2.0 * h * h * h
}

/// `a² + 2(b² + c²)/a`, which is `1/12` throughout the normalized family.
pub fn d_closed_form(params: &ConeParams) -> f64 {
    params.a * params.a + 2.0 * (params.b * params.b + params.c * params.c) / params.a
}

/// `2(b²(1 − B²) − c²(1 − C²))`.
pub fn e_closed_form(params: &ConeParams) -> f64 {
    let (b, c) = (params.b, params.c);
    2.0 * (b * b * (1.0 - params.b_level.powi(2)) - c * c * (1.0 - params.c_level.powi(2)))
}

fn spread(xs: &[f64]) -> f64 {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Evaluate `D` and `E` at every point; errors if either varies by more
/// than `1e-6`.
pub fn spectral_constants(src: &dyn FieldSource, points: &[(f64, f64)]) -> Result<SpectralConstants> {
    let frame = SpecialFrame::new(src.params())?;
    if points.is_empty() {
        return Err(Error::Domain("no sample points".into()));
    }
    let mut ds = Vec::with_capacity(points.len());
    let mut es = Vec::with_capacity(points.len());
    for &(s, t) in points {
        let k = killing_field(src, s, t)?;
        ds.push(d_at(&k, frame.r));
        es.push(e_at(&k, frame.r));
    }
    let (d_spread, e_spread) = (spread(&ds), spread(&es));
    if d_spread.max(e_spread) > 1e-6 {
        return Err(Error::ConstancyViolation { spread: d_spread.max(e_spread) });
    }
    let n = points.len() as f64;
    Ok(SpectralConstants {
        d: ds.iter().sum::<f64>() / n,
        e: es.iter().sum::<f64>() / n,
        xi: src.params().xi,
        d_spread,
        e_spread,
        samples: points.len(),
    })
}

/// Coefficients `[c₂, c₁, c₀]` of `det(μI − M) = μ³ + c₂μ² + c₁μ + c₀`.
pub fn char_poly(m: &CMatrix) -> [Complex64; 3] {
    let tr = m.trace();
    let tr2 = (m * m).trace();
    [-tr, (tr * tr - tr2) / 2.0, -m.determinant()]
}

/// `iE + iξ²λ⁶ + iξ̄²λ⁻⁶`.
pub fn constant_term(e: f64, xi: Complex64, lambda: Complex64) -> Complex64 {
    I * (e + xi * xi * lambda.powi(6) + xi.conj() * xi.conj() * lambda.powi(-6))
}

/// Largest coefficient defect between `det(μI − τ(λ))` and
/// `μ³ + Dμ + iE + iξ²λ⁶ + iξ̄²λ⁻⁶`.
pub fn char_poly_check(k: &KillingField, d: f64, e: f64, xi: Complex64, lambda: Complex64) -> f64 {
    let [c2, c1, c0] = char_poly(&k.eval(lambda));
    c2.norm().max((c1 - d).norm()).max((c0 - constant_term(e, xi, lambda)).norm())
}

/// `|τ³ + Dτ + i(ξ²λ⁶ + E + ξ̄²λ⁻⁶)I|`.
pub fn cubic_identity_residual(k: &KillingField, d: f64, e: f64, xi: Complex64, lambda: Complex64) -> f64 {
    let t = k.eval(lambda);
    let lhs = t * t * t + t * Complex64::new(d, 0.0) + CMatrix::identity() * constant_term(e, xi, lambda);
    max_entry(&lhs)
}

/// Eigenvalues of `τ(λ)` as roots of its (trace-free) characteristic polynomial.
pub fn eigenvalues(k: &KillingField, lambda: Complex64) -> [Complex64; 3] {
    let [_, c1, c0] = char_poly(&k.eval(lambda));
    depressed_complex_roots(c1, c0)
}

/// Power of `λ` in the curve equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveForm {
    /// `μ³ + Dμ + iE + iξ²λ² + iξ̄²λ⁻² = 0`.
    Quadratic,
    /// `μ³ + Dμ + iE + iξ²λ⁶ + iξ̄²λ⁻⁶ = 0`, the eigenvalue curve of `τ`.
    Sextic,
}

impl CurveForm {
    fn power(self) -> i32 {
        match self {
            CurveForm::Quadratic => 2,
            CurveForm::Sextic => 6,
        }
    }
}

/// One `λ` with the three `μ`-roots above it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub lambda: Complex64,
    pub mu_roots: [Complex64; 3],
}

/// Spectral curve `μ³ + Dμ + iE + iξ²λᵏ + iξ̄²λ⁻ᵏ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub xi: Complex64,
    pub form: CurveForm,
}

impl SpectralCurve {
    pub fn constant(&self, lambda: Complex64) -> Complex64 {
        let k = self.form.power();
        let xi2 = self.xi * self.xi;
        I * (self.e + xi2 * lambda.powi(k) + xi2.conj() * lambda.powi(-k))
    }

    pub fn eval(&self, lambda: Complex64, mu: Complex64) -> Complex64 {
        mu * mu * mu + mu * self.d + self.constant(lambda)
    }

    pub fn roots(&self, lambda: Complex64) -> Result<[Complex64; 3]> {
        if lambda.norm() == 0.0 {
            return Err(Error::Domain("λ must be nonzero".into()));
        }
        Ok(depressed_complex_roots(Complex64::new(self.d, 0.0), self.constant(lambda)))
    }

    pub fn sample(&self, lambda: Complex64) -> Result<CurveSample> {
        Ok(CurveSample { lambda, mu_roots: self.roots(lambda)? })
    }

    /// Samples over `lambdas`, evaluated in parallel.
    pub fn samples(&self, lambdas: &[Complex64]) -> Result<Vec<CurveSample>> {
        lambdas.par_iter().map(|l| self.sample(*l)).collect()
    }

    /// Largest `|p(λ, μ)|` over the roots of the given samples.
    pub fn back_substitution(&self, samples: &[CurveSample]) -> f64 {
        samples.iter().flat_map(|s| s.mu_roots.iter().map(move |m| self.eval(s.lambda, *m).norm())).fold(0.0, f64::max)
    }

    /// Involution residuals over `samples`.
    pub fn involutions(&self, samples: &[CurveSample]) -> Result<InvolutionReport> {
        let pairs: Result<Vec<(f64, f64)>> = samples
            .par_iter()
            .map(|s| {
                let rho = multiset_distance(&s.mu_roots, &self.roots(-s.lambda)?);
                let image = s.mu_roots.map(|m| -m.conj());
                let sigma = multiset_distance(&image, &self.roots(s.lambda.conj().inv())?);
                Ok((rho, sigma))
            })
            .collect();
        let pairs = pairs?;
        Ok(InvolutionReport {
            rho: pairs.iter().map(|p| p.0).fold(0.0, f64::max),
            sigma: pairs.iter().map(|p| p.1).fold(0.0, f64::max),
            samples: samples.len(),
        })
    }
}

/// Closure residuals of `ρ: (λ, μ) ↦ (−λ, μ)` and `σ: (λ, μ) ↦ (1/λ̄, −μ̄)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvolutionReport {
    pub rho: f64,
    pub sigma: f64,
    pub samples: usize,
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Distance between two 3-element multisets under the best matching.
pub fn multiset_distance(a: &[Complex64; 3], b: &[Complex64; 3]) -> f64 {
    PERMUTATIONS
        .iter()
        .map(|p| (0..3).map(|i| (a[i] - b[p[i]]).norm()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// `n` points on the unit circle followed by `rays` radial rays of `n_ray`
/// points each, with moduli spread over `[1/4, 4]`.
pub fn lambda_grid(n: usize, rays: usize, n_ray: usize) -> Vec<Complex64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut out: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, tau * k as f64 / n as f64)).collect();
    for ray in 0..rays {
        let arg = tau * (ray as f64 + 0.5) / rays as f64 + 0.1;
        for j in 0..n_ray {
            let x = if n_ray > 1 { j as f64 / (n_ray - 1) as f64 } else { 0.5 };
            out.push(Complex64::from_polar(4f64.powf(2.0 * x - 1.0), arg));
        }
    }
    out
}

/// Default export grid: 512 unit-circle points plus 4 rays of 16.
pub fn default_lambda_grid() -> Vec<Complex64> {
    lambda_grid(512, 4, 16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone2::derive_params;
    use crate::integrable::{unit_circle_samples, zeta, ClosedFormFields};

    const POINTS: [(f64, f64); 10] = [
        (0.0, 0.0),
        (0.3, 0.7),
        (1.3, 2.1),
        (-0.8, 1.6),
        (2.4, -1.1),
        (3.3, 0.2),
        (-2.2, -2.9),
        (0.9, 3.7),
        (5.1, 1.4),
        (-4.0, 0.6),
    ];

    fn source(theta: f64, b: f64, c: f64) -> ClosedFormFields {
        ClosedFormFields::new(&derive_params(theta, b, c).unwrap()).unwrap()
    }

    #[test]
    fn d_is_one_twelfth() {
        for (theta, b, c) in [(0.3, 0.2, 0.5), (2.0, -0.7, 0.1), (4.4, 0.9, -0.9), (1.0, 0.0, 0.6)] {
            let src = source(theta, b, c);
            assert!((d_closed_form(&src.params) - 1.0 / 12.0).abs() < 1e-14);
            let k = spectral_constants(&src, &POINTS).unwrap();
            assert!(k.d_spread < 1e-8 && k.e_spread < 1e-8, "{k:?}");
            assert!((k.d - 1.0 / 12.0).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_e_examples() {
        let p = derive_params(0.0, 0.0, 0.5).unwrap();
        assert!((e_closed_form(&p) + 1.0 / 144.0).abs() < 1e-15);
        assert_eq!(e_closed_form(&derive_params(0.7, 1.0, -1.0).unwrap()), 0.0);
    }

    #[test]
    fn sampled_e_is_constant_and_opposite_to_closed_form() {
        for (theta, b, c) in [(0.3, 0.2, 0.5), (2.0, -0.7, 0.1), (1.0, 0.4, 0.6)] {
            let src = source(theta, b, c);
            let k = spectral_constants(&src, &POINTS).unwrap();
            assert!((k.e + e_closed_form(&src.params)).abs() < 1e-9, "{} {}", k.e, e_closed_form(&src.params));
        }
    }

    #[test]
    fn characteristic_polynomial_and_cubic() {
        let src = source(1.1, 0.35, -0.6);
        let consts = spectral_constants(&src, &POINTS).unwrap();
        let k = killing_field(&src, 0.7, 1.9).unwrap();
        let l = Complex64::from_polar(1.0, std::f64::consts::PI / 7.0);
        assert!(k.eval(l).trace().norm() < 1e-12);
        assert!(char_poly_check(&k, consts.d, consts.e, consts.xi, l) < 1e-9);
        for l in unit_circle_samples(8).into_iter().chain([Complex64::new(0.4, 1.3)]) {
            let a = char_poly(&k.eval(l));
            let b = char_poly(&k.eval(zeta() * l));
            assert!((0..3).all(|i| (a[i] - b[i]).norm() < 1e-12));
            let r1 = cubic_identity_residual(&k, consts.d, consts.e, consts.xi, l);
            let r2 = cubic_identity_residual(&k, consts.d, consts.e, consts.xi, zeta() * l);
            assert!(r1 < 1e-9 && (r1 - r2).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_case_cubic() {
        let src = source(0.5, 1.0, 1.0);
        let k = killing_field(&src, 0.2, 0.3).unwrap();
        assert!(k.g.norm() == 0.0 && k.h == 0.0);
        let consts = spectral_constants(&src, &POINTS).unwrap();
        for l in unit_circle_samples(8) {
            assert!(cubic_identity_residual(&k, consts.d, consts.e, consts.xi, l) < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_do_not_depend_on_the_point() {
        let src = source(2.6, -0.45, 0.3);
        let l = Complex64::new(0.6, -0.9);
        let a = eigenvalues(&killing_field(&src, 0.1, 0.2).unwrap(), l);
        let b = eigenvalues(&killing_field(&src, 7.3, -5.2).unwrap(), l);
        assert!(multiset_distance(&a, &b) < 1e-8);
    }

    #[test]
    fn real_xi_at_imaginary_lambda() {
        let curve = SpectralCurve { d: 1.0 / 12.0, e: 0.0, xi: Complex64::new(-0.03, 0.0), form: CurveForm::Quadratic };
        let s = curve.sample(I).unwrap();
        assert!((curve.constant(I) - I * (-2.0 * 0.03 * 0.03)).norm() < 1e-15);
        assert!(curve.back_substitution(&[s]) < 1e-12);
    }

    #[test]
    fn involutions_close() {
        let src = source(1.1, 0.35, -0.6);
        let consts = spectral_constants(&src, &POINTS).unwrap();
        for form in [CurveForm::Quadratic, CurveForm::Sextic] {
            let curve = SpectralCurve { d: consts.d, e: consts.e, xi: consts.xi, form };
            let samples = curve.samples(&default_lambda_grid()).unwrap();
            assert!(curve.back_substitution(&samples) < 1e-12);
            let inv = curve.involutions(&samples).unwrap();
            assert!(inv.rho < 1e-9 && inv.sigma < 1e-9, "{inv:?}");
        }
    }

    #[test]
    fn quadratic_and_sextic_forms_correspond() {
        let base =
            SpectralCurve { d: 1.0 / 12.0, e: 0.004, xi: Complex64::new(0.02, -0.05), form: CurveForm::Quadratic };
        let sextic = SpectralCurve { form: CurveForm::Sextic, ..base };
        for l in lambda_grid(16, 2, 4) {
            let a = base.roots(l.powi(3)).unwrap();
            let b = sextic.roots(l).unwrap();
            assert!(multiset_distance(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn sextic_curve_matches_eigenvalues() {
        let src = source(0.8, -0.2, 0.55);
        let consts = spectral_constants(&src, &POINTS).unwrap();
        let curve = SpectralCurve { d: consts.d, e: consts.e, xi: consts.xi, form: CurveForm::Sextic };
        let k = killing_field(&src, 1.5, -0.4).unwrap();
        for l in unit_circle_samples(8) {
            assert!(multiset_distance(&eigenvalues(&k, l), &curve.roots(l).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn matching_ignores_order() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0), Complex64::new(-3.0, 0.5)];
        let b = [a[2], a[0], a[1]];
        assert_eq!(multiset_distance(&a, &b), 0.0);
        assert!(spectral_constants(&source(0.3, 0.2, 0.5), &[]).is_err());
        assert!(SpectralCurve { d: 0.1, e: 0.0, xi: Complex64::new(1.0, 0.0), form: CurveForm::Sextic }
            .roots(Complex64::new(0.0, 0.0))
            .is_err());
    }
}
