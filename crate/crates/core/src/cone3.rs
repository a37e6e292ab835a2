//! Three-variable special Lagrangian 3-folds
//! `Φ(r, s, t) = (x₁y₁z₁, x₂y₂z₂, x₃y₃z₃)(r, s, t)` built from three strands
//! with coefficient vectors `α`, `β`, `γ` subject to
//! `α·β = α·γ = β·γ = Σ α_jβ_jγ_j = 0`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone2::{SlMaxima, SlReport};
use crate::error::{Error, Result};
use crate::geometry::{sl_plane_residual, ComplexTriple};
use crate::ode::{
    initial_state, integrate_strand, integrate_until_escape, IntegratorOptions, StrandCoefficients, StrandState,
    Trajectory,
};

const RELATION_TOL: f64 = 1e-12;
const DEGENERATE_TOL: f64 = 1e-8;

fn dot(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

fn triple_dot(u: &[f64; 3], v: &[f64; 3], w: &[f64; 3]) -> f64 {
    (0..3).map(|j| u[j] * v[j] * w[j]).sum()
}

/// The four relations `α·β, α·γ, β·γ, Σα_jβ_jγ_j`.
pub fn relation_residuals(alpha: &[f64; 3], beta: &[f64; 3], gamma: &[f64; 3]) -> [f64; 4] {
    [dot(alpha, beta), dot(alpha, gamma), dot(beta, gamma), triple_dot(alpha, beta, gamma)]
}

/// Coefficient vectors and conserved levels of a three-variable family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleParams {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: [f64; 3],
    #[serde(rename = "A")]
    pub a_level: f64,
    #[serde(rename = "B")]
    pub b_level: f64,
    #[serde(rename = "C")]
    pub c_level: f64,
}

impl TripleParams {
    /// Validate the four relations (to `1e-12`, relative to the vector norms).
    pub fn new(alpha: [f64; 3], beta: [f64; 3], gamma: [f64; 3], levels: [f64; 3]) -> Result<Self> {
        for v in [&alpha, &beta, &gamma] {
            if v.iter().all(|x| *x == 0.0) {
                return Err(Error::Domain("coefficient vector is zero".into()));
            }
        }
        let scale = [&alpha, &beta, &gamma].iter().map(|v| dot(v, v).sqrt()).fold(1.0, f64::max).powi(3);
        let res = relation_residuals(&alpha, &beta, &gamma);
        if let Some((k, r)) = res.iter().enumerate().find(|(_, r)| r.abs() > RELATION_TOL * scale) {
            return Err(Error::Domain(format!("relation {} violated by {r:e}", k + 1)));
        }
        Ok(TripleParams { alpha, beta, gamma, a_level: levels[0], b_level: levels[1], c_level: levels[2] })
    }

    /// Normalize `α`, recover `β`, `γ` and attach the levels.
    pub fn from_alpha(alpha: [f64; 3], levels: [f64; 3]) -> Result<Self> {
        let norm = dot(&alpha, &alpha).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateAlpha);
        }
        let alpha = alpha.map(|x| x / norm);
        let (beta, gamma) = solve_bg_from_alpha(alpha)?;
        Self::new(alpha, beta, gamma, levels)
    }

    pub fn alpha_coeffs(&self) -> StrandCoefficients {
        StrandCoefficients { c: self.alpha, zero_sum: false }
    }

    pub fn beta_coeffs(&self) -> StrandCoefficients {
        StrandCoefficients { c: self.beta, zero_sum: false }
    }

    pub fn gamma_coeffs(&self) -> StrandCoefficients {
        StrandCoefficients { c: self.gamma, zero_sum: false }
    }

    pub fn relation_residual(&self) -> f64 {
        relation_residuals(&self.alpha, &self.beta, &self.gamma).iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// The trace-free symmetric form `M` with `det(α, β, αβ) = ½βᵀMβ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadricForm {
    pub matrix: Matrix3<f64>,
}

impl QuadricForm {
    pub fn new(alpha: [f64; 3]) -> Self {
        let [a1, a2, a3] = alpha;
        let m12 = a3 * (a2 - a1);
        let m13 = a2 * (a1 - a3);
        let m23 = a1 * (a3 - a2);
        QuadricForm { matrix: Matrix3::new(0.0, m12, m13, m12, 0.0, m23, m13, m23, 0.0) }
    }

    /// `Q(v) = ½vᵀMv`.
    pub fn eval(&self, v: &[f64; 3]) -> f64 {
        let v = Vector3::from(*v);
        0.5 * v.dot(&(self.matrix * v))
    }

    pub fn bilinear(&self, u: &[f64; 3], v: &[f64; 3]) -> f64 {
        0.5 * Vector3::from(*u).dot(&(self.matrix * Vector3::from(*v)))
    }

    /// `2α₁α₂α₃(α₁ − α₃)(α₂ − α₁)(α₃ − α₂)`.
    pub fn expected_determinant(alpha: [f64; 3]) -> f64 {
        let [a1, a2, a3] = alpha;
        2.0 * a1 * a2 * a3 * (a1 - a3) * (a2 - a1) * (a3 - a2)
    }
}

fn is_degenerate(alpha: &[f64; 3]) -> bool {
    let min_abs = alpha.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let min_gap = (alpha[0] - alpha[1]).abs().min((alpha[1] - alpha[2]).abs()).min((alpha[2] - alpha[0]).abs());
    min_abs < DEGENERATE_TOL || min_gap < DEGENERATE_TOL
}

/// Orthonormal basis of `α⊥`, from the two coordinate axes least aligned
/// with `α` by Gram–Schmidt.
fn perp_basis(alpha: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = Vector3::from(*alpha).normalize();
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|i, j| alpha[*i].abs().partial_cmp(&alpha[*j].abs()).unwrap());
    let mut e1 = Vector3::zeros();
    e1[axes[0]] = 1.0;
    let e1 = (e1 - a * a.dot(&e1)).normalize();
    let mut e2 = Vector3::zeros();
    e2[axes[1]] = 1.0;
    let e2 = (e2 - a * a.dot(&e2) - e1 * e1.dot(&e2)).normalize();
    (e1.into(), e2.into())
}

/// Flip `v` so its largest-magnitude component (first on ties) is positive.
fn orient(v: [f64; 3]) -> [f64; 3] {
    let mut k = 0;
    for j in 1..3 {
        if v[j].abs() > v[k].abs() + 1e-14 {
            k = j;
        }
    }
    if v[k] < 0.0 {
        v.map(|x| -x)
    } else {
        v
    }
}

/// Recover the orthonormal pair `β`, `γ` spanning `α⊥` with `Q(β) = Q(γ) = 0`.
///
/// The pair is unique up to sign and exchange; the representative returned
/// has each vector's largest component positive and `β < γ` lexicographically.
pub fn solve_bg_from_alpha(alpha: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
    let norm = dot(&alpha, &alpha).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateAlpha);
    }
    let alpha = alpha.map(|x| x / norm);
    if is_degenerate(&alpha) {
        return Err(Error::DegenerateAlpha);
    }
    let q = QuadricForm::new(alpha);
    let (e1, e2) = perp_basis(&alpha);
    let m11 = q.eval(&e1);
    let m22 = q.eval(&e2);
    let m12 = q.bilinear(&e1, &e2);
    // Restricted form: mean·I + ρ·[[cos 2φ, sin 2φ], [sin 2φ, −cos 2φ]].
    let p = 0.5 * (m11 - m22);
    let rho = p.hypot(m12);
    if rho < DEGENERATE_TOL * DEGENERATE_TOL {
        return Err(Error::DegenerateAlpha);
    }
    let phi = 0.5 * m12.atan2(p);
    let combine = |angle: f64| {
        let (s, c) = angle.sin_cos();
        [0, 1, 2].map(|k| c * e1[k] + s * e2[k])
    };
    // (u₊ ± u₋)/√2 sit at φ ± π/4.
    let quarter = std::f64::consts::FRAC_PI_4;
    let mut beta = orient(combine(phi + quarter));
    let mut gamma = orient(combine(phi - quarter));
    if gamma < beta {
        std::mem::swap(&mut beta, &mut gamma);
    }
    Ok((beta, gamma))
}

/// Permutation and sign flips applied by [`normalize_signs`]. Slot `k` of the
/// output holds input vector `permutation[k]`, negated if `flips[k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignTransform {
    pub permutation: [usize; 3],
    pub flips: [bool; 3],
}

impl SignTransform {
    pub const IDENTITY: SignTransform = SignTransform { permutation: [0, 1, 2], flips: [false; 3] };

    pub fn apply(&self, vectors: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        [0, 1, 2].map(|k| {
            let v = vectors[self.permutation[k]];
            if self.flips[k] {
                v.map(|x| -x)
            } else {
                v
            }
        })
    }
}

fn positives(v: &[f64; 3]) -> usize {
    v.iter().filter(|x| **x > 0.0).count()
}

fn is_canonical(v: &[[f64; 3]; 3]) -> bool {
    positives(&v[0]) == 3 && positives(&v[1]) == 2 && positives(&v[2]) == 2
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Permute and negate `(α, β, γ)` so that `α > 0` componentwise and `β`, `γ`
/// each have two positive components and one negative.
pub fn normalize_signs(
    alpha: [f64; 3],
    beta: [f64; 3],
    gamma: [f64; 3],
) -> Result<([f64; 3], [f64; 3], [f64; 3], SignTransform)> {
    let vectors = [alpha, beta, gamma];
    if vectors.iter().flatten().any(|x| *x == 0.0) {
        return Err(Error::CannotNormalize);
    }
    for permutation in PERMUTATIONS {
        for mask in 0..8u8 {
            let tr = SignTransform { permutation, flips: [0, 1, 2].map(|k| mask & (1 << k) != 0) };
            let out = tr.apply(&vectors);
            if is_canonical(&out) {
                return Ok((out[0], out[1], out[2], tr));
            }
        }
    }
    Err(Error::CannotNormalize)
}

/// Interval of existence of a strand through `initial`, probed out to
/// `±horizon` from the initial parameter. Zero-sum strands exist for all
/// parameters; unbounded sides are reported as infinite.
pub fn maximal_interval(
    coeffs: &StrandCoefficients,
    initial: &StrandState,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<(f64, f64)> {
    if coeffs.sum().abs() < 1e-12 {
        return Ok((f64::NEG_INFINITY, f64::INFINITY));
    }
    let traj = integrate_until_escape(coeffs, initial, (initial.s - horizon, initial.s + horizon), opts)?;
    let (lo, hi) = traj.escapes();
    Ok((lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
}

/// The three strands of a three-variable family.
#[derive(Clone, Debug)]
pub struct TripleStrands {
    pub x: Trajectory,
    pub y: Trajectory,
    pub z: Trajectory,
    /// Maximal interval of the `x` strand, as far as it was probed.
    pub interval: (f64, f64),
}

impl TripleStrands {
    /// Integrate from the canonical initial points. The `x` strand is allowed
    /// to escape inside `r_span`; the others must cover their spans.
    pub fn integrate(
        params: &TripleParams,
        r_span: (f64, f64),
        s_span: (f64, f64),
        t_span: (f64, f64),
        opts: &IntegratorOptions,
    ) -> Result<Self> {
        let (xa, yb, zc) = (params.alpha_coeffs(), params.beta_coeffs(), params.gamma_coeffs());
        let x = integrate_until_escape(&xa, &initial_state(&xa, params.a_level)?, r_span, opts)?;
        let y = integrate_strand(&yb, &initial_state(&yb, params.b_level)?, s_span, opts)?;
        let z = integrate_strand(&zc, &initial_state(&zc, params.c_level)?, t_span, opts)?;
        Ok(Self::from_parts(x, y, z))
    }

    pub fn from_parts(x: Trajectory, y: Trajectory, z: Trajectory) -> Self {
        let (lo, hi) = x.escapes();
        let interval = (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY));
        TripleStrands { x, y, z, interval }
    }

    fn x_state(&self, r: f64) -> Result<StrandState> {
        let (lo, hi) = self.interval;
        if !(lo < r && r < hi) {
            return Err(Error::OutsideInterval { at: r, lo, hi });
        }
        self.x.state(r)
    }
}

/// `Φ` and its three partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame3 {
    pub phi: ComplexTriple,
    pub d_r: ComplexTriple,
    pub d_s: ComplexTriple,
    pub d_t: ComplexTriple,
}

fn cyclic(j: usize) -> (usize, usize) {
    ((j + 1) % 3, (j + 2) % 3)
}

pub fn frame_from_states(params: &TripleParams, xs: &StrandState, ys: &StrandState, zs: &StrandState) -> Frame3 {
    let (x, y, z) = (&xs.y, &ys.y, &zs.y);
    Frame3 {
        phi: ComplexTriple::from_fn(|j| x[j] * y[j] * z[j]),
        d_r: ComplexTriple::from_fn(|j| {
            let (p, q) = cyclic(j);
            (x[p] * x[q]).conj() * y[j] * z[j] * params.alpha[j]
        }),
        d_s: ComplexTriple::from_fn(|j| {
            let (p, q) = cyclic(j);
            x[j] * (y[p] * y[q]).conj() * z[j] * params.beta[j]
        }),
        d_t: ComplexTriple::from_fn(|j| {
            let (p, q) = cyclic(j);
            x[j] * y[j] * (z[p] * z[q]).conj() * params.gamma[j]
        }),
    }
}

pub fn frame3(params: &TripleParams, strands: &TripleStrands, r: f64, s: f64, t: f64) -> Result<Frame3> {
    let xs = strands.x_state(r)?;
    Ok(frame_from_states(params, &xs, &strands.y.state(s)?, &strands.z.state(t)?))
}

pub fn immersion3(params: &TripleParams, strands: &TripleStrands, r: f64, s: f64, t: f64) -> Result<ComplexTriple> {
    Ok(frame3(params, strands, r, s, t)?.phi)
}

/// Uniform `nr × ns × nt` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub r_range: (f64, f64),
    pub s_range: (f64, f64),
    pub t_range: (f64, f64),
    pub n: usize,
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64).collect()
}

/// Check the special Lagrangian conditions and frame orthogonality on `grid`.
/// Conformality, norm and density entries of the report are zero: neither
/// holds for this family in general.
pub fn verify_sl3(params: &TripleParams, strands: &TripleStrands, grid: &Grid3, tol: f64) -> Result<SlReport> {
    let xs: Vec<StrandState> =
        linspace(grid.r_range, grid.n).into_iter().map(|r| strands.x_state(r)).collect::<Result<_>>()?;
    let ys: Vec<StrandState> =
        linspace(grid.s_range, grid.n).into_iter().map(|s| strands.y.state(s)).collect::<Result<_>>()?;
    let zs: Vec<StrandState> =
        linspace(grid.t_range, grid.n).into_iter().map(|t| strands.z.state(t)).collect::<Result<_>>()?;
    let maxima = xs
        .par_iter()
        .map(|x| {
            let mut m = SlMaxima::default();
            for y in &ys {
                for z in &zs {
                    let fr = frame_from_states(params, x, y, z);
                    let res = sl_plane_residual(&fr.d_r, &fr.d_s, &fr.d_t);
                    m = m.merge(SlMaxima {
                        omega_rs: res.omega_rs,
                        omega_rt: res.omega_rt,
                        omega_st: res.omega_st,
                        im_omega: res.im_omega,
                        orthogonality: res.gram_defect,
                        ..SlMaxima::default()
                    });
                }
            }
            m
        })
        .reduce(SlMaxima::default, SlMaxima::merge);
    Ok(SlReport {
        dimension: 3,
        params: serde_json::to_value(params).expect("params serialize"),
        grid: serde_json::to_value(grid).expect("grid serializes"),
        samples: xs.len() * ys.len() * zs.len(),
        tol,
        pass: maxima.worst() < tol,
        maxima,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone2;
    use crate::geometry::kaehler_form;
    use crate::ode::initial_state_at;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = dot(&v, &v).sqrt();
        v.map(|x| x / n)
    }

    fn eigen_oracle(alpha: [f64; 3]) -> ([f64; 3], [f64; 3]) {
        // Independent route: dense symmetric eigen-solve of the restricted form.
        let q = QuadricForm::new(alpha);
        let (e1, e2) = perp_basis(&alpha);
        let basis = nalgebra::Matrix3x2::from_columns(&[Vector3::from(e1), Vector3::from(e2)]);
        let restricted = basis.transpose() * q.matrix * basis;
        let eig = nalgebra::SymmetricEigen::new(restricted);
        let (ip, im) = if eig.eigenvalues[0] > eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let up = basis * eig.eigenvectors.column(ip);
        let um = basis * eig.eigenvectors.column(im);
        let b = (up + um) / 2f64.sqrt();
        let g = (up - um) / 2f64.sqrt();
        (b.into(), g.into())
    }

    fn same_line(u: &[f64; 3], v: &[f64; 3]) -> bool {
        (dot(u, v).abs() - 1.0).abs() < 1e-12
    }

    #[test]
    fn quadric_trace_and_determinant() {
        let alpha = unit([1.0, 2.0, 3.0]);
        let q = QuadricForm::new(alpha);
        assert_eq!(q.matrix.trace(), 0.0);
        assert!((q.matrix.determinant() - QuadricForm::expected_determinant(alpha)).abs() < 1e-12);
        assert!(q.eval(&alpha).abs() < 1e-15);
    }

    #[test]
    fn recovers_pair_for_generic_alpha() {
        let alpha = unit([1.0, 2.0, 3.0]);
        let (beta, gamma) = solve_bg_from_alpha(alpha).unwrap();
        let q = QuadricForm::new(alpha);
        assert!(q.eval(&beta).abs() < 1e-10 && q.eval(&gamma).abs() < 1e-10);
        for r in relation_residuals(&alpha, &beta, &gamma) {
            assert!(r.abs() < 1e-12);
        }
        assert!((dot(&beta, &beta) - 1.0).abs() < 1e-14);
        assert!((dot(&gamma, &gamma) - 1.0).abs() < 1e-14);
        let (ob, og) = eigen_oracle(alpha);
        assert!((same_line(&beta, &ob) && same_line(&gamma, &og)) || (same_line(&beta, &og) && same_line(&gamma, &ob)));
        assert!(beta < gamma);
    }

    #[test]
    fn degenerate_alpha() {
        assert_eq!(solve_bg_from_alpha(unit([1.0, 1.0, 1.0])), Err(Error::DegenerateAlpha));
        assert_eq!(solve_bg_from_alpha(unit([1.0, 1.0, 2.0])), Err(Error::DegenerateAlpha));
        assert_eq!(solve_bg_from_alpha([0.0, 0.6, 0.8]), Err(Error::DegenerateAlpha));
    }

    #[test]
    fn permuted_alpha_gives_permuted_pair() {
        let alpha = unit([0.3, -1.1, 2.0]);
        let (b, g) = solve_bg_from_alpha(alpha).unwrap();
        let perm = [2, 0, 1];
        let (pb, pg) = solve_bg_from_alpha(perm.map(|k| alpha[k])).unwrap();
        let (b, g) = (perm.map(|k| b[k]), perm.map(|k| g[k]));
        let canon = |u: [f64; 3], v: [f64; 3]| {
            let (u, v) = (orient(u), orient(v));
            if u < v {
                (u, v)
            } else {
                (v, u)
            }
        };
        let (x, y) = canon(b, g);
        let (px, py) = canon(pb, pg);
        for k in 0..3 {
            assert!((x[k] - px[k]).abs() < 1e-12 && (y[k] - py[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_orthogonality_and_sl_at_random_points() {
        let p = TripleParams::from_alpha([1.0, 2.0, 3.0], [0.2, -0.3, 0.4]).unwrap();
        let opts = IntegratorOptions::with_tol(1e-12);
        let st = TripleStrands::integrate(&p, (-0.3, 0.3), (-3.0, 3.0), (-3.0, 3.0), &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..125 {
            let r = rng.gen_range(-0.25..0.25);
            let s = rng.gen_range(-3.0..3.0);
            let t = rng.gen_range(-3.0..3.0);
            let fr = frame3(&p, &st, r, s, t).unwrap();
            let res = sl_plane_residual(&fr.d_r, &fr.d_s, &fr.d_t);
            assert!(res.max_sl() < 1e-9 && res.gram_defect < 1e-9);
        }
    }

    #[test]
    fn initial_points_multiply() {
        let p = TripleParams::from_alpha([1.0, 2.0, 3.0], [0.5, 0.0, -0.5]).unwrap();
        let opts = IntegratorOptions::default();
        let st = TripleStrands::integrate(&p, (-0.1, 0.1), (-1.0, 1.0), (-1.0, 1.0), &opts).unwrap();
        let phi = immersion3(&p, &st, 0.0, 0.0, 0.0).unwrap();
        let want = st.x.initial().y.hadamard(&st.y.initial().y).hadamard(&st.z.initial().y);
        assert!((phi - want).max_abs() < 1e-15);
    }

    #[test]
    fn reduces_to_two_variable_cone() {
        let c2 = cone2::derive_params(1.0, 0.3, -0.2).unwrap();
        let p = TripleParams::new([1.0; 3], c2.beta, c2.gamma, [0.0, 0.3, -0.2]).unwrap();
        let opts = IntegratorOptions::with_tol(1e-12);
        let xa = p.alpha_coeffs();
        let x0 = StrandState { y: ComplexTriple::real(1.0, 1.0, 1.0), v: 0.0, s: -1.0 };
        let x = integrate_until_escape(&xa, &x0, (-8.0, -0.125), &opts).unwrap();
        let s2 = cone2::ConeStrands::integrate(&c2, (-3.0, 3.0), (-3.0, 3.0), &opts).unwrap();
        let st = TripleStrands::from_parts(x, s2.y.clone(), s2.z.clone());
        for &(r, s, t) in &[(-1.0, 0.0, 0.0), (-0.5, 1.2, -0.7), (-4.0, -2.5, 2.0), (-0.2, 0.3, 2.9)] {
            let xr = st.x.state(r).unwrap();
            assert!((xr.y[0] - Complex64::new(-1.0 / r, 0.0)).norm() < 1e-9);
            assert!((xr.v - (1.0 / (r * r) - 1.0)).abs() < 1e-8 * (1.0 + xr.v.abs()));
            let lhs = immersion3(&p, &st, r, s, t).unwrap();
            let rhs = cone2::immersion(&c2, &s2, -3f64.sqrt() / r, s, t).unwrap();
            assert!((lhs - rhs).max_abs() < 1e-8);
        }
    }

    #[test]
    fn verify_generic_grid() {
        let p = TripleParams::from_alpha([1.0, 2.0, 3.0], [0.1, 0.3, -0.6]).unwrap();
        let opts = IntegratorOptions::with_tol(1e-12);
        let st = TripleStrands::integrate(&p, (-0.3, 0.3), (-2.0, 2.0), (-2.0, 2.0), &opts).unwrap();
        let grid = Grid3 { r_range: (-0.25, 0.25), s_range: (-2.0, 2.0), t_range: (-2.0, 2.0), n: 8 };
        let rep = verify_sl3(&p, &st, &grid, 1e-9).unwrap();
        assert!(rep.pass, "{:?}", rep.maxima);
        assert_eq!(rep.dimension, 3);
        assert_eq!(rep.samples, 512);
    }

    #[test]
    fn fourth_relation_controls_omega_rs() {
        let p = TripleParams::from_alpha([1.0, 2.0, 3.0], [0.2, 0.4, 0.3]).unwrap();
        let ab = [0, 1, 2].map(|j| p.alpha[j] * p.beta[j]);
        let nab = dot(&ab, &ab).sqrt();
        let opts = IntegratorOptions::with_tol(1e-12);
        let mut prev = None;
        for eps in [1e-3, 2e-3] {
            let mut bad = p;
            for j in 0..3 {
                bad.gamma[j] += eps * ab[j] / nab;
            }
            let violation = triple_dot(&bad.alpha, &bad.beta, &bad.gamma);
            let gc = bad.gamma_coeffs();
            let z = integrate_strand(&gc, &initial_state(&gc, bad.c_level).unwrap(), (0.0, 1.0), &opts).unwrap();
            let (xc, yc) = (p.alpha_coeffs(), p.beta_coeffs());
            let xs = initial_state(&xc, p.a_level).unwrap();
            let ys = initial_state(&yc, p.b_level).unwrap();
            let zs = z.state(0.8).unwrap();
            let fr = frame_from_states(&bad, &xs, &ys, &zs);
            let omega = kaehler_form(&fr.d_r, &fr.d_s);
            let predicted = (xs.y.product().conj() * ys.y.product()).im * zs.v * violation;
            assert!((omega - predicted).abs() < 1e-12);
            assert!(omega.abs() > 1e-6);
            if let Some(o) = prev {
                let ratio: f64 = omega / o;
                assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
            }
            prev = Some(omega);
        }
    }

    #[test]
    fn sign_normalization() {
        let a = unit([1.0, 2.0, 3.0]);
        let (b, g) = solve_bg_from_alpha(a).unwrap();
        let (na, nb, ng, tr) = normalize_signs(a, b, g).unwrap();
        assert!(is_canonical(&[na, nb, ng]));
        let (a2, b2, g2, tr2) = normalize_signs(na, nb, ng).unwrap();
        assert_eq!(tr2, SignTransform::IDENTITY);
        assert_eq!((a2, b2, g2), (na, nb, ng));
        let (_, nb3, _, tr3) = normalize_signs(na, nb.map(|x| -x), ng).unwrap();
        assert_eq!(tr3.permutation, [0, 1, 2]);
        assert_eq!(tr3.flips, [false, true, false]);
        assert_eq!(nb3, nb);
        assert_eq!(tr.apply(&[a, b, g]), [na, nb, ng]);
        assert_eq!(normalize_signs([0.0, 0.6, 0.8], b, g), Err(Error::CannotNormalize));
    }

    #[test]
    fn maximal_interval_examples() {
        let opts = IntegratorOptions::with_tol(1e-12);
        let zs = StrandCoefficients::zero_sum([1.0, -0.5, -0.5]).unwrap();
        let st = initial_state(&zs, 0.3).unwrap();
        assert_eq!(maximal_interval(&zs, &st, 50.0, &opts).unwrap(), (f64::NEG_INFINITY, f64::INFINITY));

        let ones = StrandCoefficients::new([1.0; 3]).unwrap();
        let st = initial_state(&ones, 0.0).unwrap();
        let (lo, hi) = maximal_interval(&ones, &st, 50.0, &opts).unwrap();
        assert!((hi - 1.0).abs() < 1e-8, "{hi}");
        assert_eq!(lo, f64::NEG_INFINITY);

        let pos = StrandCoefficients::new(unit([1.0, 2.0, 3.0])).unwrap();
        let small = maximal_interval(&pos, &initial_state(&pos, 0.0).unwrap(), 50.0, &opts).unwrap();
        let big = maximal_interval(&pos, &initial_state_at(&pos, 0.0, 10.0).unwrap(), 50.0, &opts).unwrap();
        assert!(small.1.is_finite() && big.1 < small.1, "{big:?} {small:?}");
        // Same level, same orbit: the interval is only translated.
        assert!(((big.1 - big.0) - (small.1 - small.0)).abs() < 1e-6);
    }

    #[test]
    fn immersion_outside_interval() {
        let p = TripleParams::from_alpha([1.0, 2.0, 3.0], [0.0, 0.0, 0.0]).unwrap();
        let opts = IntegratorOptions::default();
        let st = TripleStrands::integrate(&p, (-5.0, 5.0), (-1.0, 1.0), (-1.0, 1.0), &opts).unwrap();
        let hi = st.interval.1;
        assert!(hi.is_finite());
        assert!(matches!(immersion3(&p, &st, hi + 0.1, 0.0, 0.0), Err(Error::OutsideInterval { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn recovered_pairs_satisfy_relations(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let alpha = [a, b, c];
            let n = dot(&alpha, &alpha).sqrt();
            prop_assume!(n > 0.1);
            let alpha = alpha.map(|x| x / n);
            prop_assume!(!is_degenerate(&alpha) && alpha.iter().all(|x| x.abs() > 0.05));
            prop_assume!((a - b).abs() > 0.05 && (b - c).abs() > 0.05 && (a - c).abs() > 0.05);
            let (beta, gamma) = solve_bg_from_alpha(alpha).unwrap();
            let q = QuadricForm::new(alpha);
            prop_assert!(q.eval(&beta).abs() < 1e-10 && q.eval(&gamma).abs() < 1e-10);
            for r in relation_residuals(&alpha, &beta, &gamma) {
                prop_assert!(r.abs() < 1e-12);
            }
            prop_assert!((q.matrix.determinant() - QuadricForm::expected_determinant(alpha)).abs() < 1e-12);
        }

        #[test]
        fn positive_alpha_normalizes(a in 0.05f64..1.0, b in 0.05f64..1.0, c in 0.05f64..1.0) {
            prop_assume!((a - b).abs() > 0.02 && (b - c).abs() > 0.02 && (a - c).abs() > 0.02);
            let alpha = unit([a, b, c]);
            let (beta, gamma) = solve_bg_from_alpha(alpha).unwrap();
            prop_assume!(beta.iter().chain(gamma.iter()).all(|x| x.abs() > 1e-9));
            let (na, nb, ng, _) = normalize_signs(alpha, beta, gamma).unwrap();
            prop_assert!(is_canonical(&[na, nb, ng]));
        }
    }
}
