//! Integrable-systems structure of the two-variable cones: the harmonic
//! sequence of the link, the SU(3) Toda and Tzitzéica solutions, the loop of
//! flat connections and the polynomial Killing field `τ`.
//!
//! Everything after the harmonic triple is expressed in the special
//! coordinate `z = ξ^{1/3}(s + it)`, with the principal cube root of `ξ`.
//! Derivative identities are checked with central differences, so their
//! residuals are `O(h²)`.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cone2::{ConeParams, ConeStrands, Potentials};
use crate::error::{Error, Result};
use crate::geometry::ComplexTriple;
use crate::ode::{strand_derivative, StrandState};

pub type CMatrix = Matrix3<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Largest entry modulus.
pub fn max_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Potentials and their derivatives at a point `(s, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFields {
    pub v: f64,
    pub w: f64,
    pub dv: f64,
    pub dw: f64,
    pub ddv: f64,
    pub ddw: f64,
    /// `f = a + b·v + c·w`.
    pub f: f64,
}

/// Anything that can report `v(s)`, `w(t)` and their derivatives.
pub trait FieldSource: Sync {
    fn params(&self) -> &ConeParams;
    fn fields(&self, s: f64, t: f64) -> Result<PointFields>;
}

fn assemble(params: &ConeParams, s: f64, t: f64, v: (f64, f64, f64), w: (f64, f64, f64)) -> Result<PointFields> {
    let f = params.density(v.0, w.0);
    if !(f > 0.0) {
        return Err(Error::SingularDensity { s, t, value: f });
    }
    Ok(PointFields { v: v.0, w: w.0, dv: v.1, dw: w.1, ddv: v.2, ddw: w.2, f })
}

/// Fields from the closed-form elliptic potentials.
#[derive(Clone, Debug)]
pub struct ClosedFormFields {
    pub params: ConeParams,
    pub potentials: Potentials,
}

impl ClosedFormFields {
    pub fn new(params: &ConeParams) -> Result<Self> {
        Ok(ClosedFormFields { params: *params, potentials: Potentials::new(params)? })
    }
}

impl FieldSource for ClosedFormFields {
    fn params(&self) -> &ConeParams {
        &self.params
    }

    fn fields(&self, s: f64, t: f64) -> Result<PointFields> {
        let (v, dv) = self.potentials.v.potential(s);
        let (w, dw) = self.potentials.w.potential(t);
        let ddv = if self.potentials.v.is_constant() { 0.0 } else { 2.0 * self.params.beta_coeffs().q_prime(v) };
        let ddw = if self.potentials.w.is_constant() { 0.0 } else { 2.0 * self.params.gamma_coeffs().q_prime(w) };
        assemble(&self.params, s, t, (v, dv, ddv), (w, dw, ddw))
    }
}

/// Fields from integrated strands.
#[derive(Clone, Copy, Debug)]
pub struct StrandFields<'a> {
    pub params: &'a ConeParams,
    pub strands: &'a ConeStrands,
}

impl FieldSource for StrandFields<'_> {
    fn params(&self) -> &ConeParams {
        self.params
    }

    fn fields(&self, s: f64, t: f64) -> Result<PointFields> {
        let ys = self.strands.y.state(s)?;
        let zs = self.strands.z.state(t)?;
        let ddv = 2.0 * self.params.beta_coeffs().q_prime(ys.v);
        let ddw = 2.0 * self.params.gamma_coeffs().q_prime(zs.v);
        assemble(self.params, s, t, (ys.v, ys.dv(), ddv), (zs.v, zs.dv(), ddw))
    }
}

/// Harmonic map class of the link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicClass {
    Superconformal,
    Isotropic,
}

/// `ξ = cC + ibB` and the resulting class.
pub fn xi_and_classify(params: &ConeParams) -> (Complex64, HarmonicClass) {
    let xi = params.xi;
    let class = if xi.norm() == 0.0 { HarmonicClass::Isotropic } else { HarmonicClass::Superconformal };
    (xi, class)
}

/// `φ₋₁`, `φ₀`, `φ₁` of the harmonic sequence at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTriple {
    pub phi_m1: ComplexTriple,
    pub phi_0: ComplexTriple,
    pub phi_1: ComplexTriple,
    pub f: f64,
}

/// `P_j = β_j·conj(y_k y_l)·z_j` and `R_j = γ_j·y_j·conj(z_k z_l)`.
fn p_r(params: &ConeParams, y: &ComplexTriple, z: &ComplexTriple) -> (ComplexTriple, ComplexTriple) {
    let p = ComplexTriple::from_fn(|j| (y[(j + 1) % 3] * y[(j + 2) % 3]).conj() * z[j] * params.beta[j]);
    let r = ComplexTriple::from_fn(|j| y[j] * (z[(j + 1) % 3] * z[(j + 2) % 3]).conj() * params.gamma[j]);
    (p, r)
}

pub fn harmonic_triple_from_states(params: &ConeParams, ys: &StrandState, zs: &StrandState) -> Result<HarmonicTriple> {
    let f = params.density(ys.v, zs.v);
    if !(f > 0.0) {
        return Err(Error::SingularDensity { s: ys.s, t: zs.s, value: f });
    }
    let (p, r) = p_r(params, &ys.y, &zs.y);
    let k = 1.0 / (2.0 * 3f64.sqrt());
    Ok(HarmonicTriple {
        phi_m1: (p + r.scale(I)) * (-k / f),
        phi_0: ys.y.hadamard(&zs.y) * (1.0 / 3f64.sqrt()),
        phi_1: (p - r.scale(I)) * k,
        f,
    })
}

pub fn harmonic_triple(params: &ConeParams, strands: &ConeStrands, s: f64, t: f64) -> Result<HarmonicTriple> {
    harmonic_triple_from_states(params, &strands.y.state(s)?, &strands.z.state(t)?)
}

impl HarmonicTriple {
    /// Largest violation of the orthogonality and norm identities.
    pub fn identity_residual(&self) -> f64 {
        [
            self.phi_0.hermitian(&self.phi_1).norm(),
            self.phi_m1.hermitian(&self.phi_0).norm(),
            (self.phi_m1.norm_sqr() - 1.0 / self.f).abs(),
            (self.phi_0.norm_sqr() - 1.0).abs(),
            (self.phi_1.norm_sqr() - self.f).abs(),
        ]
        .iter()
        .fold(0.0, |m, x| m.max(*x))
    }
}

/// Primed triple `(φ₀', φ₁', φ₂')` in the special coordinate, normalized so
/// that `det(φ₀' φ₁' φ₂') = 1`: `φ_k' = iξ^{−k/3}φ_k`.
pub fn primed_triple(params: &ConeParams, ys: &StrandState, zs: &StrandState) -> Result<[ComplexTriple; 3]> {
    primed_triple_with_unit(params, ys, zs, I)
}

/// `φ_k' = u·ξ^{−k/3}φ_k` for a unit `u`; the determinant scales by `u³`.
pub fn primed_triple_with_unit(
    params: &ConeParams,
    ys: &StrandState,
    zs: &StrandState,
    unit: Complex64,
) -> Result<[ComplexTriple; 3]> {
    let frame = SpecialFrame::new(params)?;
    let f = params.density(ys.v, zs.v);
    if !(f > 0.0) {
        return Err(Error::SingularDensity { s: ys.s, t: zs.s, value: f });
    }
    let (p, r) = p_r(params, &ys.y, &zs.y);
    let k = 1.0 / (2.0 * 3f64.sqrt());
    let root = frame.cube_root;
    Ok([
        ys.y.hadamard(&zs.y).scale(unit / 3f64.sqrt()),
        (p - r.scale(I)).scale(unit * k / root),
        (p + r.scale(I)).scale(-unit * root * (k / f)),
    ])
}

/// `det(φ₀' φ₁' φ₂')`, identically one.
pub fn primed_determinant(params: &ConeParams, ys: &StrandState, zs: &StrandState) -> Result<Complex64> {
    let [a, b, d] = primed_triple(params, ys, zs)?;
    Ok(crate::geometry::holomorphic_volume(&a, &b, &d))
}

/// `φ₂ = ∂φ₁/∂z − ∂(log f)/∂z·φ₁` with `∂/∂z = ½(∂_s − i∂_t)`, by central
/// differences of step `h`.
pub fn phi2_finite_difference(
    params: &ConeParams,
    strands: &ConeStrands,
    s: f64,
    t: f64,
    h: f64,
) -> Result<ComplexTriple> {
    let at = |ds: f64, dt: f64| harmonic_triple(params, strands, s + ds, t + dt);
    let (sp, sm, tp, tm) = (at(h, 0.0)?, at(-h, 0.0)?, at(0.0, h)?, at(0.0, -h)?);
    let d_phi = ((sp.phi_1 - sm.phi_1) - (tp.phi_1 - tm.phi_1).scale(I)) * (0.25 / h);
    let d_log_f = Complex64::new((sp.f.ln() - sm.f.ln()) / h, -(tp.f.ln() - tm.f.ln()) / h) * 0.25;
    let centre = at(0.0, 0.0)?;
    Ok(d_phi - centre.phi_1.scale(d_log_f))
}

/// `φ₂` from the strand equations, without differencing.
pub fn phi2_exact(params: &ConeParams, ys: &StrandState, zs: &StrandState) -> Result<ComplexTriple> {
    let tri = harmonic_triple_from_states(params, ys, zs)?;
    let dy = strand_derivative(&params.beta_coeffs(), ys).dy;
    let dz = strand_derivative(&params.gamma_coeffs(), zs).dy;
    let (y, z) = (&ys.y, &zs.y);
    let idx = |j: usize| ((j + 1) % 3, (j + 2) % 3);
    let dp_ds = ComplexTriple::from_fn(|j| {
        let (k, l) = idx(j);
        (dy[k] * y[l] + y[k] * dy[l]).conj() * z[j] * params.beta[j]
    });
    let dp_dt = ComplexTriple::from_fn(|j| {
        let (k, l) = idx(j);
        (y[k] * y[l]).conj() * dz[j] * params.beta[j]
    });
    let dr_ds = ComplexTriple::from_fn(|j| {
        let (k, l) = idx(j);
        dy[j] * (z[k] * z[l]).conj() * params.gamma[j]
    });
    let dr_dt = ComplexTriple::from_fn(|j| {
        let (k, l) = idx(j);
        y[j] * (dz[k] * z[l] + z[k] * dz[l]).conj() * params.gamma[j]
    });
    let k = 1.0 / (2.0 * 3f64.sqrt());
    let dphi1_ds = (dp_ds - dr_ds.scale(I)) * k;
    let dphi1_dt = (dp_dt - dr_dt.scale(I)) * k;
    let dphi1_dz = (dphi1_ds - dphi1_dt.scale(I)) * 0.5;
    let d_log_f = Complex64::new(params.b * ys.dv() / tri.f, -params.c * zs.dv() / tri.f) * 0.5;
    Ok(dphi1_dz - tri.phi_1.scale(d_log_f))
}

/// Maxima of the return-map defects over a set of points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapDefects {
    /// `max |φ₂ − ξφ₋₁|`.
    pub literal: f64,
    /// `max |φ₂ − ξ̄φ₋₁|`.
    pub conjugate: f64,
    /// `max |φ₂|`.
    pub phi2_norm: f64,
}

pub fn return_map_defects(
    params: &ConeParams,
    strands: &ConeStrands,
    points: &[(f64, f64)],
    h: f64,
) -> Result<ReturnMapDefects> {
    let xi = params.xi;
    let mut out = ReturnMapDefects::default();
    for &(s, t) in points {
        let phi2 = phi2_finite_difference(params, strands, s, t, h)?;
        let tri = harmonic_triple(params, strands, s, t)?;
        out.literal = out.literal.max((phi2 - tri.phi_m1.scale(xi)).max_abs());
        out.conjugate = out.conjugate.max((phi2 - tri.phi_m1.scale(xi.conj())).max_abs());
        out.phi2_norm = out.phi2_norm.max(phi2.max_abs());
    }
    Ok(out)
}

/// `max |φ₂ − ξφ₋₁|` over `points` (the identity as stated).
pub fn return_map_residual(params: &ConeParams, strands: &ConeStrands, points: &[(f64, f64)], h: f64) -> Result<f64> {
    Ok(return_map_defects(params, strands, points, h)?.literal)
}

/// `r = |ξ|`, `θ = arg ξ` and the principal cube root `ξ^{1/3}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialFrame {
    pub r: f64,
    pub theta: f64,
    pub cube_root: Complex64,
}

impl SpecialFrame {
    pub fn new(params: &ConeParams) -> Result<Self> {
        let xi = params.xi;
        if xi.norm() == 0.0 {
            return Err(Error::Isotropic);
        }
        let (r, theta) = xi.to_polar();
        Ok(SpecialFrame { r, theta, cube_root: Complex64::from_polar(r.cbrt(), theta / 3.0) })
    }

    /// `e^{ikθ/3}`.
    pub fn phase(&self, k: i32) -> Complex64 {
        Complex64::from_polar(1.0, k as f64 * self.theta / 3.0)
    }

    /// `∂/∂z` and `∂/∂z̄` of a quantity from its `s` and `t` derivatives.
    pub fn dz(&self, ds: Complex64, dt: Complex64) -> (Complex64, Complex64) {
        ((ds - I * dt) / (2.0 * self.cube_root), (ds + I * dt) / (2.0 * self.cube_root.conj()))
    }
}

/// `χ₀, χ₁, χ₂` of the SU(3) Toda solution.
pub fn toda_solution(params: &ConeParams, f: f64) -> Result<[f64; 3]> {
    let r = SpecialFrame::new(params)?.r;
    let k = r.powf(2.0 / 3.0);
    Ok([1.0, f / k, k / f])
}

/// Five-point Laplacian of a scalar field.
fn laplacian(g: &dyn Fn(f64, f64) -> Result<f64>, s: f64, t: f64, h: f64) -> Result<f64> {
    let centre = g(s, t)?;
    Ok((g(s + h, t)? + g(s - h, t)? + g(s, t + h)? + g(s, t - h)? - 4.0 * centre) / (h * h))
}

/// Max over `points` and `k = 0, 1, 2` of
/// `|Δ log χ_k /(4|ξ|^{2/3}) − (χ_{k+1}/χ_k − χ_k/χ_{k−1})|`.
pub fn toda_residual(src: &dyn FieldSource, points: &[(f64, f64)], h: f64) -> Result<f64> {
    let params = *src.params();
    let scale = 4.0 * SpecialFrame::new(&params)?.r.powf(2.0 / 3.0);
    let mut worst: f64 = 0.0;
    for &(s, t) in points {
        let chi = toda_solution(&params, src.fields(s, t)?.f)?;
        for k in 0..3 {
            let log_chi = |a: f64, b: f64| -> Result<f64> { Ok(toda_solution(&params, src.fields(a, b)?.f)?[k].ln()) };
            let lhs = laplacian(&log_chi, s, t, h)? / scale;
            let rhs = chi[(k + 1) % 3] / chi[k] - chi[k] / chi[(k + 2) % 3];
            worst = worst.max((lhs - rhs).abs());
        }
        let product = chi[0] * chi[1] * chi[2];
        worst = worst.max((product - 1.0).abs());
    }
    Ok(worst)
}

/// Max over `points` of `|Δf/(4|ξ|^{2/3}) − (e^{−2f} − e^f)|` with
/// `f = log(a + bv + cw) − (2/3)log|ξ|`.
pub fn tzitzeica_residual(src: &dyn FieldSource, points: &[(f64, f64)], h: f64) -> Result<f64> {
    let params = *src.params();
    let r = SpecialFrame::new(&params)?.r;
    let shift = 2.0 / 3.0 * r.ln();
    let scale = 4.0 * r.powf(2.0 / 3.0);
    let field = |a: f64, b: f64| -> Result<f64> { Ok(src.fields(a, b)?.f.ln() - shift) };
    let mut worst: f64 = 0.0;
    for &(s, t) in points {
        let f = field(s, t)?;
        let lhs = laplacian(&field, s, t, h)? / scale;
        worst = worst.max((lhs - ((-2.0 * f).exp() - f.exp())).abs());
    }
    Ok(worst)
}

/// Components of `α_λ = (α₁'λ + α₀')dz + (α₋₁''λ⁻¹ + α₀'')dz̄`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionCoeffs {
    pub a1p: CMatrix,
    pub a0p: CMatrix,
    pub am1pp: CMatrix,
    pub a0pp: CMatrix,
}

/// `∂_z log f` and `∂_z̄ log f` in the special coordinate.
fn dlog_f(frame: &SpecialFrame, params: &ConeParams, pf: &PointFields) -> (Complex64, Complex64) {
    frame.dz(c(params.b * pf.dv / pf.f), c(params.c * pf.dw / pf.f))
}

pub fn connection_from_fields(params: &ConeParams, pf: &PointFields) -> Result<ConnectionCoeffs> {
    let frame = SpecialFrame::new(params)?;
    let (r, f) = (frame.r, pf.f);
    let k = r.powf(-1.0 / 3.0);
    let sf = f.sqrt();
    let (dz, dzb) = dlog_f(&frame, params, pf);
    let zero = c(0.0);
    Ok(ConnectionCoeffs {
        a1p: CMatrix::new(zero, zero, c(k * sf), c(k * sf), zero, zero, zero, c(k * r / f), zero),
        a0p: CMatrix::from_diagonal(&nalgebra::Vector3::new(zero, dz * 0.5, -dz * 0.5)),
        am1pp: CMatrix::new(zero, c(-k * sf), zero, zero, zero, c(-k * r / f), c(-k * sf), zero, zero),
        a0pp: CMatrix::from_diagonal(&nalgebra::Vector3::new(zero, -dzb * 0.5, dzb * 0.5)),
    })
}

pub fn connection_coeffs(src: &dyn FieldSource, s: f64, t: f64) -> Result<ConnectionCoeffs> {
    connection_from_fields(src.params(), &src.fields(s, t)?)
}

impl ConnectionCoeffs {
    /// `(dz, dz̄)` components of `α_λ`.
    pub fn at(&self, lambda: Complex64) -> (CMatrix, CMatrix) {
        (self.a1p * lambda + self.a0p, self.am1pp / lambda + self.a0pp)
    }
}

/// `∂_z α'' − ∂_z̄ α' + [α', α'']` at `λ`, by central differences.
pub fn flatness_residual(src: &dyn FieldSource, s: f64, t: f64, h: f64, lambda: Complex64) -> Result<f64> {
    let frame = SpecialFrame::new(src.params())?;
    let at =
        |ds: f64, dt: f64| -> Result<(CMatrix, CMatrix)> { Ok(connection_coeffs(src, s + ds, t + dt)?.at(lambda)) };
    let (sp, sm, tp, tm) = (at(h, 0.0)?, at(-h, 0.0)?, at(0.0, h)?, at(0.0, -h)?);
    let d = |p: &CMatrix, m: &CMatrix| (p - m) / c(2.0 * h);
    let (ds_a1, dt_a1) = (d(&sp.0, &sm.0), d(&tp.0, &tm.0));
    let (ds_a2, dt_a2) = (d(&sp.1, &sm.1), d(&tp.1, &tm.1));
    let dz_a2 = (ds_a2 - dt_a2 * I) / (frame.cube_root * 2.0);
    let dzb_a1 = (ds_a1 + dt_a1 * I) / (frame.cube_root.conj() * 2.0);
    let (a1, a2) = at(0.0, 0.0)?;
    Ok(max_entry(&(dz_a2 - dzb_a1 + commutator(&a1, &a2))))
}

/// `ζ = e^{2πi/3}`.
pub fn zeta() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0)
}

/// `Υ = diag(1, ζ⁻¹, ζ⁻²)`.
pub fn upsilon() -> CMatrix {
    let z = zeta();
    CMatrix::from_diagonal(&nalgebra::Vector3::new(c(1.0), z.inv(), z.inv() * z.inv()))
}

/// The involution `κ`.
pub fn kappa(a: &CMatrix) -> CMatrix {
    -CMatrix::new(a[(0, 0)], a[(2, 0)], a[(1, 0)], a[(0, 2)], a[(2, 2)], a[(1, 2)], a[(0, 1)], a[(2, 1)], a[(1, 1)])
}

/// `τ(λ) = Σ_{n=−2}^{2} λⁿτ_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KillingField {
    /// `tau[n + 2] = τ_n`.
    pub tau: [CMatrix; 5],
    /// `θ = arg ξ` used for every phase factor.
    pub theta_branch: f64,
    pub f: f64,
    pub g: Complex64,
    pub h: f64,
}

pub fn killing_from_fields(params: &ConeParams, pf: &PointFields) -> Result<KillingField> {
    let frame = SpecialFrame::new(params)?;
    let (r, f) = (frame.r, pf.f);
    let g = Complex64::new(-params.b * pf.dv, params.c * pf.dw) / (2.0 * f.sqrt());
    let h = (-params.b * pf.ddv + params.c * pf.ddw) / (12.0 * f);
    let q = r / f.sqrt();
    let zero = c(0.0);
    let tau2 = CMatrix::new(zero, c(q), zero, zero, zero, c(f), c(q), zero, zero) * (I * frame.phase(2));
    let tau1 = CMatrix::new(zero, zero, g, -g, zero, zero, zero, zero, zero) * (I * frame.phase(1));
    let tau0 = CMatrix::from_diagonal(&nalgebra::Vector3::new(c(2.0 * h), c(-h), c(-h))) * I;
    let gb = g.conj();
    let taum1 = CMatrix::new(zero, -gb, zero, zero, zero, zero, gb, zero, zero) * (I * frame.phase(-1));
    let taum2 = CMatrix::new(zero, zero, c(q), c(q), zero, zero, zero, c(f), zero) * (I * frame.phase(-2));
    Ok(KillingField { tau: [taum2, taum1, tau0, tau1, tau2], theta_branch: frame.theta, f, g, h })
}

pub fn killing_field(src: &dyn FieldSource, s: f64, t: f64) -> Result<KillingField> {
    killing_from_fields(src.params(), &src.fields(s, t)?)
}

impl KillingField {
    pub fn coeff(&self, n: i32) -> CMatrix {
        if (-2..=2).contains(&n) {
            self.tau[(n + 2) as usize]
        } else {
            CMatrix::zeros()
        }
    }

    pub fn eval(&self, lambda: Complex64) -> CMatrix {
        (-2..=2).fold(CMatrix::zeros(), |acc, n| acc + self.coeff(n) * lambda.powi(n))
    }

    /// `max |τ(λ) + τ(λ)†|` over the given `λ` (unit modulus).
    pub fn reality_residual(&self, lambdas: &[Complex64]) -> f64 {
        lambdas
            .iter()
            .map(|l| {
                let m = self.eval(*l);
                max_entry(&(m + m.adjoint()))
            })
            .fold(0.0, f64::max)
    }

    /// `max |τ(ζλ) − Υ⁻¹τ(λ)Υ|`.
    pub fn equivariance_residual(&self, lambdas: &[Complex64]) -> f64 {
        let u = upsilon();
        let ui = u.try_inverse().expect("diagonal unitary");
        lambdas.iter().map(|l| max_entry(&(self.eval(zeta() * l) - ui * self.eval(*l) * u))).fold(0.0, f64::max)
    }

    /// `max |τ(ζλ) − Υτ(λ)Υ⁻¹|`, the opposite pairing of `Υ`.
    pub fn equivariance_residual_opposite(&self, lambdas: &[Complex64]) -> f64 {
        let u = upsilon();
        let ui = u.try_inverse().expect("diagonal unitary");
        lambdas.iter().map(|l| max_entry(&(self.eval(zeta() * l) - u * self.eval(*l) * ui))).fold(0.0, f64::max)
    }

    /// `max |κ(τ(λ)) + τ(−λ)|`.
    pub fn kappa_residual(&self, lambdas: &[Complex64]) -> f64 {
        lambdas.iter().map(|l| max_entry(&(kappa(&self.eval(*l)) + self.eval(-l)))).fold(0.0, f64::max)
    }

    /// Laurent coefficients of `τ²`, indexed `n + 4` for `n = −4..=4`.
    pub fn square_coeffs(&self) -> [CMatrix; 9] {
        let mut out = [CMatrix::zeros(); 9];
        for i in -2..=2 {
            for j in -2..=2 {
                out[(i + j + 4) as usize] += self.coeff(i) * self.coeff(j);
            }
        }
        out
    }
}

/// `n` unit-modulus sample points `e^{iπ(2k+1)/n}`, avoiding `λ = ±1`.
pub fn unit_circle_samples(n: usize) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * (2 * k + 1) as f64 / n as f64 + 0.1)).collect()
}

/// Max over `points` and `n = −2..=2` of the residuals of
/// `∂_zτ_n = [τ_n, α₀'] + [τ_{n−1}, α₁']` and
/// `∂_z̄τ_n = [τ_n, α₀''] + [τ_{n+1}, α₋₁'']`.
pub fn killing_residual(src: &dyn FieldSource, points: &[(f64, f64)], h: f64) -> Result<f64> {
    let frame = SpecialFrame::new(src.params())?;
    let mut worst: f64 = 0.0;
    for &(s, t) in points {
        let k = killing_field(src, s, t)?;
        let conn = connection_coeffs(src, s, t)?;
        let (sp, sm) = (killing_field(src, s + h, t)?, killing_field(src, s - h, t)?);
        let (tp, tm) = (killing_field(src, s, t + h)?, killing_field(src, s, t - h)?);
        for n in -2..=2 {
            let ds = (sp.coeff(n) - sm.coeff(n)) / c(2.0 * h);
            let dt = (tp.coeff(n) - tm.coeff(n)) / c(2.0 * h);
            let dz = (ds - dt * I) / (frame.cube_root * 2.0);
            let dzb = (ds + dt * I) / (frame.cube_root.conj() * 2.0);
            let first = commutator(&k.coeff(n), &conn.a0p) + commutator(&k.coeff(n - 1), &conn.a1p);
            let second = commutator(&k.coeff(n), &conn.a0pp) + commutator(&k.coeff(n + 1), &conn.am1pp);
            worst = worst.max(max_entry(&(dz - first))).max(max_entry(&(dzb - second)));
        }
    }
    Ok(worst)
}

/// Defects of the degree-7 Killing field `η = σ(ξ^{−4/3}λ³ − ξ̄^{−4/3}λ⁻³)τ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteTypeCertificate {
    /// Overall sign `σ` of `η`.
    pub sign: f64,
    pub degree: u32,
    /// `|η₇ − α₁'|`.
    pub top_defect: f64,
    /// `|η₆ − 2α₀'|`.
    pub next_defect: f64,
    /// `|η₈|`, zero for an honest degree-7 field.
    pub above_top: f64,
    /// `|η(λ) + η(λ)†|` on the unit circle.
    pub reality: f64,
}

/// Laurent coefficients `η_n` (index `n + 8`, `n = −8..=8`) of
/// `σ(ξ^{−4/3}λ³ − ξ̄^{−4/3}λ⁻³)τ²`.
pub fn eta_coeffs(params: &ConeParams, k: &KillingField, sign: f64) -> Result<[CMatrix; 17]> {
    let frame = SpecialFrame::new(params)?;
    let lead = frame.cube_root.powi(-4) * sign;
    let trail = frame.cube_root.conj().powi(-4) * sign;
    let sq = k.square_coeffs();
    let mut eta = [CMatrix::zeros(); 17];
    for (i, m) in sq.iter().enumerate() {
        let n = i as i32 - 4;
        eta[(n + 3 + 8) as usize] += m * lead;
        eta[(n - 3 + 8) as usize] -= m * trail;
    }
    Ok(eta)
}

/// Build `η` with overall sign `sign` and compare its top coefficients with
/// the connection. With `sign = −1` the leading coefficient of `τ²`,
/// `−λ⁴e^{4iθ/3}r·(…)`, makes `η₇ = α₁'` and `η₆ = 2α₀'` hold exactly.
pub fn finite_type_certificate(src: &dyn FieldSource, s: f64, t: f64, sign: f64) -> Result<FiniteTypeCertificate> {
    let params = src.params();
    let pf = src.fields(s, t)?;
    let k = killing_from_fields(params, &pf)?;
    let conn = connection_from_fields(params, &pf)?;
    let eta = eta_coeffs(params, &k, sign)?;
    let degree = (0..17).rev().find(|i| max_entry(&eta[*i]) > 1e-12).map(|i| i as i32 - 8).unwrap_or(0);
    let reality = unit_circle_samples(8)
        .iter()
        .map(|l| {
            let m = (0..17).fold(CMatrix::zeros(), |acc, i| acc + eta[i] * l.powi(i as i32 - 8));
            max_entry(&(m + m.adjoint()))
        })
        .fold(0.0, f64::max);
    Ok(FiniteTypeCertificate {
        sign,
        degree: degree.max(0) as u32,
        top_defect: max_entry(&(eta[15] - conn.a1p)),
        next_defect: max_entry(&(eta[14] - conn.a0p * c(2.0))),
        above_top: max_entry(&eta[16]),
        reality,
    })
}

/// Ratio `e(h)/e(h/2)` of a residual under step halving.
pub fn convergence_ratio(residual: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok(residual(h)? / residual(h / 2.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone2::derive_params;
    use crate::ode::IntegratorOptions;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const POINTS: [(f64, f64); 4] = [(0.3, 0.7), (1.3, 2.1), (-0.8, 1.6), (2.4, -1.1)];

    fn strands(p: &ConeParams) -> ConeStrands {
        ConeStrands::integrate(p, (-4.0, 4.0), (-4.0, 4.0), &IntegratorOptions::with_tol(1e-13)).unwrap()
    }

    #[test]
    fn harmonic_norms() {
        let p = derive_params(1.0, 0.3, 0.5).unwrap();
        let st = strands(&p);
        for &(s, t) in &POINTS {
            let tri = harmonic_triple(&p, &st, s, t).unwrap();
            assert!(tri.identity_residual() < 1e-9);
            assert!((tri.phi_1.norm_sqr() * tri.phi_m1.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn phi1_is_z_derivative_of_phi0() {
        let p = derive_params(2.0, -0.4, 0.2).unwrap();
        let st = strands(&p);
        let (s, t) = (0.9, -0.3);
        let want = harmonic_triple(&p, &st, s, t).unwrap().phi_1;
        let err = |h: f64| {
            let at = |a, b| harmonic_triple(&p, &st, a, b).unwrap().phi_0;
            let d = ((at(s + h, t) - at(s - h, t)) - (at(s, t + h) - at(s, t - h)).scale(I)) * (0.25 / h);
            (d - want).max_abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 1e-4);
        assert!((e1 / e2 - 4.0).abs() < 0.4);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(xi_and_classify(&derive_params(1.0, 0.0, 0.0).unwrap()).1, HarmonicClass::Isotropic);
        assert_eq!(xi_and_classify(&derive_params(0.0, 0.7, 0.0).unwrap()).1, HarmonicClass::Isotropic);
        let (xi, class) = xi_and_classify(&derive_params(0.0, 0.3, 0.5).unwrap());
        assert_eq!(class, HarmonicClass::Superconformal);
        assert!((xi.re + 0.034_020_7).abs() < 1e-7 && xi.im == 0.0);
    }

    #[test]
    fn exact_phi2_matches_differences() {
        let p = derive_params(1.0, 0.3, 0.5).unwrap();
        let st = strands(&p);
        for &(s, t) in &POINTS {
            let exact = phi2_exact(&p, &st.y.state(s).unwrap(), &st.z.state(t).unwrap()).unwrap();
            let fd = phi2_finite_difference(&p, &st, s, t, 1e-3).unwrap();
            assert!((exact - fd).max_abs() < 1e-6);
        }
    }

    #[test]
    fn isotropic_phi2_vanishes() {
        let p = derive_params(0.9, 0.0, 0.0).unwrap();
        let st = strands(&p);
        let d = return_map_defects(&p, &st, &POINTS, 1e-4).unwrap();
        assert!(d.phi2_norm < 1e-6);
    }

    #[test]
    fn primed_determinant_is_one() {
        let p = derive_params(1.7, 0.6, -0.3).unwrap();
        let st = strands(&p);
        for &(s, t) in &POINTS {
            let det = primed_determinant(&p, &st.y.state(s).unwrap(), &st.z.state(t).unwrap()).unwrap();
            assert!((det - 1.0).norm() < 1e-9, "{det}");
            let [a, b, d] = primed_triple_with_unit(&p, &st.y.state(s).unwrap(), &st.z.state(t).unwrap(), -I).unwrap();
            let flipped = crate::geometry::holomorphic_volume(&a, &b, &d);
            assert!((flipped + 1.0).norm() < 1e-9, "{flipped}");
        }
    }

    #[test]
    fn strand_and_closed_form_fields_agree() {
        let p = derive_params(1.0, 0.3, 0.5).unwrap();
        let st = strands(&p);
        let a = ClosedFormFields::new(&p).unwrap();
        let b = StrandFields { params: &p, strands: &st };
        for &(s, t) in &POINTS {
            let (x, y) = (a.fields(s, t).unwrap(), b.fields(s, t).unwrap());
            for (u, v) in [(x.v, y.v), (x.w, y.w), (x.dv, y.dv), (x.dw, y.dw), (x.ddv, y.ddv), (x.ddw, y.ddw)] {
                assert!((u - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn toda_product_and_constant_case() {
        let p = derive_params(0.4, 1.0, -1.0).unwrap();
        let r = SpecialFrame::new(&p).unwrap().r;
        assert!((r * r - p.a.powi(3)).abs() < 1e-15);
        let chi = toda_solution(&p, p.a).unwrap();
        assert!((chi[0] * chi[1] * chi[2] - 1.0).abs() < 1e-15);
        let src = ClosedFormFields::new(&p).unwrap();
        assert!(toda_residual(&src, &POINTS, 1e-3).unwrap() < 1e-10);
        assert!(tzitzeica_residual(&src, &POINTS, 1e-3).unwrap() < 1e-10);
        assert!(killing_residual(&src, &POINTS, 1e-3).unwrap() < 1e-10);
        assert!(matches!(toda_solution(&derive_params(0.0, 0.2, 0.0).unwrap(), 0.1), Err(Error::Isotropic)));
    }

    #[test]
    fn toda_and_tzitzeica_converge() {
        let p = derive_params(1.0, 0.3, 0.5).unwrap();
        let src = ClosedFormFields::new(&p).unwrap();
        assert!(toda_residual(&src, &POINTS, 1e-3).unwrap() < 1e-6);
        assert!(tzitzeica_residual(&src, &POINTS, 1e-3).unwrap() < 1e-6);
        let ratio = convergence_ratio(|h| tzitzeica_residual(&src, &POINTS, h), 0.04).unwrap();
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn connection_structure() {
        let p = derive_params(2.3, -0.5, 0.4).unwrap();
        let src = ClosedFormFields::new(&p).unwrap();
        let conn = connection_coeffs(&src, 0.4, 0.9).unwrap();
        assert_eq!(conn.a0p[(0, 0)], c(0.0));
        assert!((conn.a0p.trace()).norm() < 1e-15 && (conn.a0pp.trace()).norm() < 1e-15);
        for l in unit_circle_samples(8) {
            let (dz, dzb) = conn.at(l);
            assert!(max_entry(&(dz + dzb.adjoint())) < 1e-14);
            let (zdz, zdzb) = conn.at(zeta() * l);
            let u = upsilon();
            let ui = u.try_inverse().unwrap();
            assert!(max_entry(&(zdz - ui * dz * u)) < 1e-12);
            assert!(max_entry(&(zdzb - ui * dzb * u)) < 1e-12);
            let (mdz, mdzb) = conn.at(-l);
            assert!(max_entry(&(kappa(&dz) - mdz)) < 1e-12);
            assert!(max_entry(&(kappa(&dzb) - mdzb)) < 1e-12);
        }
        assert!(flatness_residual(&src, 0.4, 0.9, 1e-3, c(1.0)).unwrap() < 1e-6);
        assert!(flatness_residual(&src, 0.4, 0.9, 1e-3, Complex64::from_polar(1.0, 0.7)).unwrap() < 1e-6);
    }

    #[test]
    fn killing_field_properties() {
        let p = derive_params(1.0, 0.3, 0.5).unwrap();
        let src = ClosedFormFields::new(&p).unwrap();
        let k = killing_field(&src, 1.3, 2.1).unwrap();
        assert_eq!(k.coeff(0)[(0, 0)], I * (2.0 * k.h));
        let lambdas = unit_circle_samples(8);
        assert!(k.reality_residual(&lambdas) < 1e-12);
        assert!(k.equivariance_residual(&lambdas) < 1e-12);
        assert!(k.equivariance_residual_opposite(&lambdas) > 1e-3);
        assert!(k.kappa_residual(&lambdas) < 1e-12);
        assert!(killing_residual(&src, &POINTS, 1e-3).unwrap() < 1e-5);
        let ratio = convergence_ratio(|h| killing_residual(&src, &POINTS, h), 0.02).unwrap();
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn finite_type_top_coefficients() {
        let p = derive_params(2.2, -0.4, 0.7).unwrap();
        let src = ClosedFormFields::new(&p).unwrap();
        let cert = finite_type_certificate(&src, 0.5, -0.2, -1.0).unwrap();
        assert!(cert.top_defect < 1e-9 && cert.next_defect < 1e-9, "{cert:?}");
        assert_eq!(cert.degree, 7);
        assert_eq!(cert.degree % 3, 1);
        assert!(cert.above_top < 1e-12);
        assert!(cert.reality < 1e-12);
        let literal = finite_type_certificate(&src, 0.5, -0.2, 1.0).unwrap();
        assert!(literal.top_defect > 1e-3);
    }

    #[test]
    fn kappa_is_involutive_automorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut random = || CMatrix::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        for _ in 0..20 {
            let (x, y) = (random(), random());
            assert!(max_entry(&(kappa(&kappa(&x)) - x)) < 1e-12);
            assert!(max_entry(&(kappa(&commutator(&x, &y)) - commutator(&kappa(&x), &kappa(&y)))) < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn killing_algebra_holds_everywhere(theta in 0.0f64..std::f64::consts::TAU, b in -0.95f64..0.95, cl in -0.95f64..0.95, s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let p = derive_params(theta, b, cl).unwrap();
            prop_assume!(p.xi.norm() > 1e-3);
            let src = ClosedFormFields::new(&p).unwrap();
            let k = killing_field(&src, s, t).unwrap();
            let lambdas = unit_circle_samples(8);
            prop_assert!(k.reality_residual(&lambdas) < 1e-12);
            prop_assert!(k.equivariance_residual(&lambdas) < 1e-12);
            prop_assert!(k.kappa_residual(&lambdas) < 1e-12);
            let tri_ok = {
                let cert = finite_type_certificate(&src, s, t, -1.0).unwrap();
                cert.top_defect < 1e-9 && cert.next_defect < 1e-9
            };
            prop_assert!(tri_ok);
        }
    }
}
