//! The two-variable special Lagrangian cone family.
//!
//! For unit zero-sum orthogonal vectors `β`, `γ` and strands `y` (coefficients
//! `β`, level `B`) and `z` (coefficients `γ`, level `C`) the map
//!
//! ```text
//! Φ(r, s, t) = (r/√3)·(y₁(s)z₁(t), y₂(s)z₂(t), y₃(s)z₃(t))
//! ```
//!
//! is a special Lagrangian cone. The normalized family is parametrized by an
//! angle `θ`, with `a = 1/6`, `b = −β₁β₂β₃/2`, `c = −γ₁γ₂γ₃/2`, and the frame
//! satisfies `|∂Φ/∂s|² = |∂Φ/∂t|² = 2r²(a + b·v(s) + c·w(t))`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{metric, sl_plane_residual, ComplexTriple};
use crate::ode::{
    initial_state, integrate_strand, potential_closed_form, EllipticForm, IntegratorOptions, StrandCoefficients,
    StrandState, Trajectory,
};

/// Parameters of the normalized two-variable family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub theta: f64,
    #[serde(rename = "B")]
    pub b_level: f64,
    #[serde(rename = "C")]
    pub c_level: f64,
    pub beta: [f64; 3],
    pub gamma: [f64; 3],
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub xi: Complex64,
}

fn check_level(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) || !x.is_finite() {
        return Err(Error::InvalidLevel(x));
    }
    Ok(())
}

/// Build `β`, `γ`, `a`, `b`, `c` and `ξ = cC + ibB` from `(θ, B, C)`.
pub fn derive_params(theta: f64, b_level: f64, c_level: f64) -> Result<ConeParams> {
    check_level(b_level)?;
    check_level(c_level)?;
    if !theta.is_finite() {
        return Err(Error::Domain("theta must be finite".into()));
    }
    let (s2, s6) = (2f64.sqrt(), 6f64.sqrt());
    let (sn, cs) = theta.sin_cos();
    let beta = [cs / s2 - sn / s6, -cs / s2 - sn / s6, 2.0 * sn / s6];
    let gamma = [-cs / s6 - sn / s2, -cs / s6 + sn / s2, 2.0 * cs / s6];
    let a = beta.iter().map(|x| x * x).sum::<f64>() / 6.0;
    let b = -beta[0] * beta[1] * beta[2] / 2.0;
    let c = -gamma[0] * gamma[1] * gamma[2] / 2.0;
    Ok(ConeParams { theta, b_level, c_level, beta, gamma, a, b, c, xi: Complex64::new(c * c_level, b * b_level) })
}

impl ConeParams {
    pub fn beta_coeffs(&self) -> StrandCoefficients {
        StrandCoefficients { c: self.beta, zero_sum: true }
    }

    pub fn gamma_coeffs(&self) -> StrandCoefficients {
        StrandCoefficients { c: self.gamma, zero_sum: true }
    }

    /// `a + b·v + c·w`.
    pub fn density(&self, v: f64, w: f64) -> f64 {
        self.a + self.b * v + self.c * w
    }

    /// Largest violation of the parameter identities: unit, zero-sum and
    /// orthogonal `β`, `γ`, `a = 1/6` and `b² + c² = 1/216`.
    pub fn identity_residual(&self) -> f64 {
        let dot = |u: &[f64; 3], v: &[f64; 3]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        [
            dot(&self.beta, &self.beta) - 1.0,
            dot(&self.gamma, &self.gamma) - 1.0,
            dot(&self.beta, &self.gamma),
            self.beta.iter().sum(),
            self.gamma.iter().sum(),
            self.a - 1.0 / 6.0,
            self.b * self.b + self.c * self.c - 1.0 / 216.0,
        ]
        .iter()
        .map(|x: &f64| x.abs())
        .fold(0.0, f64::max)
    }
}

/// Integrated `y` and `z` strands from the canonical initial points.
#[derive(Clone, Debug)]
pub struct ConeStrands {
    pub y: Trajectory,
    pub z: Trajectory,
}

impl ConeStrands {
    pub fn integrate(
        params: &ConeParams,
        s_span: (f64, f64),
        t_span: (f64, f64),
        opts: &IntegratorOptions,
    ) -> Result<Self> {
        let by = params.beta_coeffs();
        let gz = params.gamma_coeffs();
        let y = integrate_strand(&by, &initial_state(&by, params.b_level)?, s_span, opts)?;
        let z = integrate_strand(&gz, &initial_state(&gz, params.c_level)?, t_span, opts)?;
        Ok(ConeStrands { y, z })
    }
}

/// Closed-form potentials `v(s)` and `w(t)`.
#[derive(Clone, Debug)]
pub struct Potentials {
    pub v: EllipticForm,
    pub w: EllipticForm,
}

impl Potentials {
    pub fn new(params: &ConeParams) -> Result<Self> {
        Ok(Potentials {
            v: potential_closed_form(&params.beta_coeffs(), params.b_level)?,
            w: potential_closed_form(&params.gamma_coeffs(), params.c_level)?,
        })
    }
}

/// Default verification box: one period in each variable, or length 10 when
/// the potential is constant or aperiodic (capped at 50).
pub fn period_box(params: &ConeParams) -> Result<(f64, f64)> {
    let pots = Potentials::new(params)?;
    let pick = |f: &EllipticForm| f.period().map(|p| p.min(50.0)).unwrap_or(10.0);
    Ok((pick(&pots.v), pick(&pots.w)))
}

/// `Φ` and its three partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    pub phi: ComplexTriple,
    pub d_r: ComplexTriple,
    pub d_s: ComplexTriple,
    pub d_t: ComplexTriple,
}

/// Frame from strand states, using the coefficients stored in `params`.
pub fn frame_from_states(params: &ConeParams, ys: &StrandState, zs: &StrandState, r: f64) -> TangentFrame {
    let k = 1.0 / 3f64.sqrt();
    let (y, z) = (&ys.y, &zs.y);
    let d_r = ComplexTriple::from_fn(|j| y[j] * z[j] * k);
    let d_s = ComplexTriple::from_fn(|j| {
        let (p, q) = ((j + 1) % 3, (j + 2) % 3);
        (y[p] * y[q]).conj() * z[j] * (r * k * params.beta[j])
    });
    let d_t = ComplexTriple::from_fn(|j| {
        let (p, q) = ((j + 1) % 3, (j + 2) % 3);
        y[j] * (z[p] * z[q]).conj() * (r * k * params.gamma[j])
    });
    TangentFrame { phi: d_r * r, d_r, d_s, d_t }
}

pub fn immersion(params: &ConeParams, strands: &ConeStrands, r: f64, s: f64, t: f64) -> Result<ComplexTriple> {
    Ok(tangent_frame(params, strands, r, s, t)?.phi)
}

pub fn tangent_frame(params: &ConeParams, strands: &ConeStrands, r: f64, s: f64, t: f64) -> Result<TangentFrame> {
    let ys = strands.y.state(s)?;
    let zs = strands.z.state(t)?;
    Ok(frame_from_states(params, &ys, &zs, r))
}

/// Uniform sample grid over `s_range × t_range` at each radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub s_range: (f64, f64),
    pub t_range: (f64, f64),
    pub ns: usize,
    pub nt: usize,
    pub radii: Vec<f64>,
}

impl Grid {
    pub fn new(s_range: (f64, f64), t_range: (f64, f64), n: usize) -> Self {
        Grid { s_range, t_range, ns: n, nt: n, radii: vec![0.5, 1.0, 2.0] }
    }

    fn points(range: (f64, f64), n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn s_points(&self) -> Vec<f64> {
        Self::points(self.s_range, self.ns)
    }

    pub fn t_points(&self) -> Vec<f64> {
        Self::points(self.t_range, self.nt)
    }
}

/// Maxima of the verification residuals over a grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlMaxima {
    pub omega_rs: f64,
    pub omega_rt: f64,
    pub omega_st: f64,
    pub im_omega: f64,
    /// `||Φ|² − r²|` (two-variable family only).
    pub norm_defect: f64,
    /// `|g(∂_a Φ, ∂_b Φ)|` over distinct frame pairs.
    pub orthogonality: f64,
    /// `||∂_sΦ|² − |∂_tΦ|²|` (two-variable family only).
    pub conformality: f64,
    /// `||∂_sΦ|² − 2r²(a + bv + cw)|` (two-variable family only).
    pub density: f64,
}

impl SlMaxima {
    pub fn merge(self, o: Self) -> Self {
        SlMaxima {
            omega_rs: self.omega_rs.max(o.omega_rs),
            omega_rt: self.omega_rt.max(o.omega_rt),
            omega_st: self.omega_st.max(o.omega_st),
            im_omega: self.im_omega.max(o.im_omega),
            norm_defect: self.norm_defect.max(o.norm_defect),
            orthogonality: self.orthogonality.max(o.orthogonality),
            conformality: self.conformality.max(o.conformality),
            density: self.density.max(o.density),
        }
    }

    pub fn worst(&self) -> f64 {
        [
            self.omega_rs,
            self.omega_rt,
            self.omega_st,
            self.im_omega,
            self.norm_defect,
            self.orthogonality,
            self.conformality,
            self.density,
        ]
        .iter()
        .fold(0.0, |a: f64, b| a.max(*b))
    }
}

/// Outcome of a grid verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    pub dimension: u32,
    pub params: serde_json::Value,
    pub grid: serde_json::Value,
    pub samples: usize,
    pub tol: f64,
    pub maxima: SlMaxima,
    pub pass: bool,
}

fn frame_maxima(params: &ConeParams, ys: &StrandState, zs: &StrandState, r: f64) -> SlMaxima {
    let fr = frame_from_states(params, ys, zs, r);
    let res = sl_plane_residual(&fr.d_r, &fr.d_s, &fr.d_t);
    let ns = fr.d_s.norm_sqr();
    let nt = fr.d_t.norm_sqr();
    SlMaxima {
        omega_rs: res.omega_rs,
        omega_rt: res.omega_rt,
        omega_st: res.omega_st,
        im_omega: res.im_omega,
        norm_defect: (fr.phi.norm_sqr() - r * r).abs(),
        orthogonality: res.gram_defect,
        conformality: (ns - nt).abs(),
        density: (ns - 2.0 * r * r * params.density(ys.v, zs.v)).abs(),
    }
}

/// Check every special Lagrangian, norm and conformality identity on `grid`.
pub fn verify_sl(params: &ConeParams, strands: &ConeStrands, grid: &Grid, tol: f64) -> Result<SlReport> {
    let ys: Vec<StrandState> = grid.s_points().iter().map(|s| strands.y.state(*s)).collect::<Result<_>>()?;
    let zs: Vec<StrandState> = grid.t_points().iter().map(|t| strands.z.state(*t)).collect::<Result<_>>()?;
    let maxima = ys
        .par_iter()
        .map(|y| {
            let mut m = SlMaxima::default();
            for z in &zs {
                for r in &grid.radii {
                    m = m.merge(frame_maxima(params, y, z, *r));
                }
            }
            m
        })
        .reduce(SlMaxima::default, SlMaxima::merge);
    Ok(SlReport {
        dimension: 2,
        params: serde_json::to_value(params).expect("params serialize"),
        grid: serde_json::to_value(grid).expect("grid serializes"),
        samples: ys.len() * zs.len() * grid.radii.len(),
        tol,
        pass: maxima.worst() < tol,
        maxima,
    })
}

/// Special cases of the family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeCase {
    /// `|B| = 1` or `|C| = 1`: constant potential, U(1)-invariant.
    U1InvariantA,
    /// `B = 0` or `C = 0`: one strand is real up to constant phases.
    EvolvingQuadricsB,
    /// One component of `β` or `γ` vanishes (`θ` a multiple of `π/6`).
    ReducedC,
    Generic,
}

pub fn classify_case(params: &ConeParams) -> ConeCase {
    const EPS: f64 = 1e-12;
    if (params.b_level.abs() - 1.0).abs() < EPS || (params.c_level.abs() - 1.0).abs() < EPS {
        ConeCase::U1InvariantA
    } else if params.b_level.abs() < EPS || params.c_level.abs() < EPS {
        ConeCase::EvolvingQuadricsB
    } else if params.beta.iter().chain(params.gamma.iter()).any(|x| x.abs() < EPS) {
        ConeCase::ReducedC
    } else {
        ConeCase::Generic
    }
}

/// `N = |a₁₁a₂₂ − a₁₂a₂₁|` of a period lattice.
pub fn lattice_index(lattice: &[[i64; 2]; 2]) -> i64 {
    (lattice[0][0] * lattice[1][1] - lattice[0][1] * lattice[1][0]).abs()
}

/// Area `2N(aST + bT∫₀^S v + cS∫₀^T w)` of the torus with the given periods
/// and lattice. Constant potentials contribute no integral.
pub fn area(params: &ConeParams, s_period: f64, t_period: f64, lattice: &[[i64; 2]; 2]) -> Result<f64> {
    let n = lattice_index(lattice);
    if n == 0 {
        return Err(Error::DegenerateLattice);
    }
    let pots = Potentials::new(params)?;
    let int_v = if pots.v.is_constant() { 0.0 } else { pots.v.integral_over_period()? };
    let int_w = if pots.w.is_constant() { 0.0 } else { pots.w.integral_over_period()? };
    Ok(2.0 * n as f64 * (params.a * s_period * t_period + params.b * t_period * int_v + params.c * s_period * int_w))
}

/// `∬ 2(a + bv + cw) ds dt` over `[0, s_len] × [0, t_len]` by a tensor
/// trapezoid rule on the integrated strands.
pub fn area_by_quadrature(
    params: &ConeParams,
    strands: &ConeStrands,
    s_len: f64,
    t_len: f64,
    panels: usize,
) -> Result<f64> {
    let vs: Vec<f64> = (0..=panels)
        .map(|i| strands.y.state(s_len * i as f64 / panels as f64).map(|st| st.v))
        .collect::<Result<_>>()?;
    let ws: Vec<f64> = (0..=panels)
        .map(|i| strands.z.state(t_len * i as f64 / panels as f64).map(|st| st.v))
        .collect::<Result<_>>()?;
    let weight = |i: usize| if i == 0 || i == panels { 0.5 } else { 1.0 };
    let (hs, ht) = (s_len / panels as f64, t_len / panels as f64);
    let total: f64 = (0..=panels)
        .into_par_iter()
        .map(|i| {
            let mut row = 0.0;
            for (k, w) in ws.iter().enumerate() {
                row += weight(k) * 2.0 * params.density(vs[i], *w);
            }
            weight(i) * row
        })
        .sum();
    Ok(total * hs * ht)
}

/// `g(∂_rΦ, ∂_sΦ)`, `g(∂_rΦ, ∂_tΦ)` and `g(∂_sΦ, ∂_tΦ)`.
pub fn metric_pairs(frame: &TangentFrame) -> [f64; 3] {
    [metric(&frame.d_r, &frame.d_s), metric(&frame.d_r, &frame.d_t), metric(&frame.d_s, &frame.d_t)]
}
