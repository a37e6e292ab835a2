//! Closed-form potential of a zero-sum strand.
//!
//! For zero-sum coefficients `(dv/ds)² = 4(Q(v) − B²)` with
//! `Q(v) − B² = e₃v³ + e₂v² + (1 − B²)`, where `e₂ < 0`. Starting from
//! `v(0) = 0` with `dv/ds(0) ≥ 0` the solution is one of
//!
//! * `v ≡ 0` when `|B| = 1`;
//! * `v = A sin(ωs)` with `ω = 2√(−e₂)` when `e₃ = 0`;
//! * `v = r₁ + (r₂ − r₁)·sn²(κs + u₀ | m)` when `e₃ > 0`;
//! * `v = r₃ − (r₃ − r₂)·sn²(κs − u₀ | m)` when `e₃ < 0`,
//!
//! where `r₁ < r₂ < r₃` are the roots of `Q − B²`. The cubic is solved in the
//! reciprocal variable `w = 1/v`, where it is already depressed and stays
//! well conditioned as `e₃ → 0`.

use serde::{Deserialize, Serialize};

use super::StrandCoefficients;
use crate::cubic::depressed_real_roots;
use crate::elliptic::{complete_e, complete_k, complete_pi, incomplete_f, jacobi_elliptic};
use crate::error::{Error, Result};

/// Below this `|e₃|` the cubic is treated as the quadratic degeneration.
const QUADRATIC_CUTOFF: f64 = 1e-14;

/// Functional form of the potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialShape {
    Constant,
    Trigonometric {
        amplitude: f64,
        omega: f64,
    },
    /// `v = base + sign·delta·sn²(κs + shift | m)`.
    Elliptic {
        base: f64,
        delta: f64,
        sign: f64,
        kappa: f64,
        shift: f64,
    },
}

/// Closed-form description of the potential of a zero-sum strand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticForm {
    pub coeffs: StrandCoefficients,
    pub level: f64,
    /// Real roots of `Q(v) − B²`, ascending.
    pub roots: Vec<f64>,
    pub modulus_m: f64,
    /// Time for `v` to travel between its extremes (`∞` on a separatrix).
    pub half_period: f64,
    /// `+1` when `v` oscillates in `[r₁, r₂]`, `−1` in `[r₂, r₃]`.
    pub branch_sign: f64,
    pub shape: PotentialShape,
}

/// Closed-form potential for the canonical initial point `v(0) = 0`,
/// `dv/ds(0) = 2√(1 − B²)`.
pub fn potential_closed_form(coeffs: &StrandCoefficients, level: f64) -> Result<EllipticForm> {
    if !(-1.0..=1.0).contains(&level) {
        return Err(Error::InvalidLevel(level));
    }
    if coeffs.sum().abs() >= 1e-12 {
        return Err(Error::Domain("closed form needs zero-sum coefficients".into()));
    }
    let e2 = coeffs.e2();
    let e3 = coeffs.e3();
    let rest = 1.0 - level * level;
    let base = EllipticForm {
        coeffs: *coeffs,
        level,
        roots: Vec::new(),
        modulus_m: 0.0,
        half_period: f64::INFINITY,
        branch_sign: 1.0,
        shape: PotentialShape::Constant,
    };
    if rest <= 0.0 {
        let mut roots = vec![0.0, 0.0];
        if e3 != 0.0 {
            roots.push(-e2 / e3);
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return Ok(EllipticForm { roots, ..base });
    }
    if e3.abs() < QUADRATIC_CUTOFF {
        let omega = 2.0 * (-e2).sqrt();
        let amplitude = (rest / -e2).sqrt();
        return Ok(EllipticForm {
            roots: vec![-amplitude, amplitude],
            half_period: std::f64::consts::PI / omega,
            shape: PotentialShape::Trigonometric { amplitude, omega },
            ..base
        });
    }
    let w = depressed_real_roots(e2 / rest, e3 / rest)
        .ok_or_else(|| Error::Domain("potential cubic has complex roots".into()))?;
    let mut roots: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for r in roots.iter_mut() {
        *r = polish(*r, e2, e3, rest);
    }
    let (r1, r2, r3) = (roots[0], roots[1], roots[2]);
    let (lo, delta, sign, m, kappa, p) = if e3 > 0.0 {
        let d = r2 - r1;
        (r1, d, 1.0, d / (r3 - r1), (e3 * (r3 - r1)).sqrt(), -r1 / d)
    } else {
        let d = r3 - r2;
        (r3, d, -1.0, d / (r3 - r1), (-e3 * (r3 - r1)).sqrt(), r3 / d)
    };
    let m = m.clamp(0.0, 1.0);
    let u0 = incomplete_f(p.clamp(0.0, 1.0).sqrt().asin(), m)?;
    let k = complete_k(m)?;
    Ok(EllipticForm {
        roots,
        modulus_m: m,
        half_period: k / kappa,
        branch_sign: sign,
        shape: PotentialShape::Elliptic { base: lo, delta, sign, kappa, shift: sign * u0 },
        ..base
    })
}

fn polish(v: f64, e2: f64, e3: f64, rest: f64) -> f64 {
    let f = e3 * v * v * v + e2 * v * v + rest;
    let df = 3.0 * e3 * v * v + 2.0 * e2 * v;
    if df == 0.0 {
        return v;
    }
    let next = v - f / df;
    let fnext = e3 * next * next * next + e2 * next * next + rest;
    if fnext.abs() <= f.abs() {
        next
    } else {
        v
    }
}

impl EllipticForm {
    /// `Q(v) − B²`.
    pub fn reduced_cubic(&self, v: f64) -> f64 {
        self.coeffs.q(v) - self.level * self.level
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, PotentialShape::Constant)
    }

    /// Potential and its derivative at `s`.
    pub fn potential(&self, s: f64) -> (f64, f64) {
        match self.shape {
            PotentialShape::Constant => (0.0, 0.0),
            PotentialShape::Trigonometric { amplitude, omega } => {
                let (sn, cs) = (omega * s).sin_cos();
                (amplitude * sn, amplitude * omega * cs)
            }
            PotentialShape::Elliptic { base, delta, sign, kappa, shift } => {
                let (sn, cn, dn) =
                    jacobi_elliptic(kappa * s + shift, self.modulus_m).expect("modulus is clamped into [0, 1]");
                (base + sign * delta * sn * sn, sign * delta * 2.0 * sn * cn * dn * kappa)
            }
        }
    }

    pub fn v(&self, s: f64) -> f64 {
        self.potential(s).0
    }

    /// Second derivative `d²v/ds² = 2Q'(v)`.
    pub fn ddv(&self, s: f64) -> f64 {
        if self.is_constant() {
            return 0.0;
        }
        2.0 * self.coeffs.q_prime(self.v(s))
    }

    /// Minimum and maximum of the potential.
    pub fn range(&self) -> (f64, f64) {
        match self.shape {
            PotentialShape::Constant => (0.0, 0.0),
            PotentialShape::Trigonometric { amplitude, .. } => (-amplitude, amplitude),
            PotentialShape::Elliptic { base, delta, sign, .. } => {
                if sign > 0.0 {
                    (base, base + delta)
                } else {
                    (base - delta, base)
                }
            }
        }
    }

    /// Period of `v`; errors for constant or separatrix potentials.
    pub fn period(&self) -> Result<f64> {
        if self.is_constant() {
            return Err(Error::ConstantPotential);
        }
        if !self.half_period.is_finite() {
            return Err(Error::Aperiodic);
        }
        Ok(2.0 * self.half_period)
    }

    /// `∫₀^S v ds` over one period, using `∫₀^{2K} sn² = 2(K − E)/m`.
    pub fn integral_over_period(&self) -> Result<f64> {
        let period = self.period()?;
        match self.shape {
            PotentialShape::Elliptic { base, delta, sign, kappa, .. } => {
                let m = self.modulus_m;
                let mean_sn2 =
                    if m < 1e-12 { std::f64::consts::PI / 2.0 } else { 2.0 * (complete_k(m)? - complete_e(m)?) / m };
                Ok(period * base + sign * delta * mean_sn2 / kappa)
            }
            _ => Ok(0.0),
        }
    }

    /// `∫₀^S ds / (c_j v + 1)` over one period `S`, in closed form.
    pub fn reciprocal_norm_integral(&self, j: usize) -> Result<f64> {
        let c = self.coeffs.c[j];
        let period = self.period()?;
        if c == 0.0 {
            return Ok(period);
        }
        match self.shape {
            PotentialShape::Constant => unreachable!("period() rejects constant potentials"),
            PotentialShape::Trigonometric { amplitude, .. } => {
                let x = c * amplitude;
                if x.abs() >= 1.0 {
                    return Err(Error::ConstraintViolation { j: j + 1, at: 0.0 });
                }
                Ok(period / (1.0 - x * x).sqrt())
            }
            PotentialShape::Elliptic { base, delta, sign, kappa, .. } => {
                let d0 = c * base + 1.0;
                if d0 <= 0.0 {
                    return Err(Error::ConstraintViolation { j: j + 1, at: 0.0 });
                }
                let n = -sign * c * delta / d0;
                if n >= 1.0 {
                    return Err(Error::ConstraintViolation { j: j + 1, at: 0.0 });
                }
                Ok(2.0 / (kappa * d0) * complete_pi(n, self.modulus_m)?)
            }
        }
    }

    /// For `B = 0` the potential reaches `−1/c_j` for two of the indices, where
    /// `y_j` passes through zero and changes sign once per half period.
    pub fn sign_flips(&self) -> [bool; 3] {
        let mut out = [false; 3];
        if self.level != 0.0 || self.is_constant() {
            return out;
        }
        let (lo, hi) = self.range();
        for j in 0..3 {
            let c = self.coeffs.c[j];
            if c != 0.0 {
                let scale = 1.0 + c.abs() * lo.abs().max(hi.abs());
                out[j] = (c * lo + 1.0).abs() < 1e-9 * scale || (c * hi + 1.0).abs() < 1e-9 * scale;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{initial_state, integrate_strand, IntegratorOptions};
    use crate::quad::trapezoid;

    fn unit_beta(theta: f64) -> [f64; 3] {
        let (s2, s6) = (2f64.sqrt(), 6f64.sqrt());
        [theta.cos() / s2 - theta.sin() / s6, -theta.cos() / s2 - theta.sin() / s6, 2.0 * theta.sin() / s6]
    }

    fn check_against_ode(theta: f64, level: f64) {
        let co = StrandCoefficients::zero_sum(unit_beta(theta)).unwrap();
        let form = potential_closed_form(&co, level).unwrap();
        for r in &form.roots {
            assert!(form.reduced_cubic(*r).abs() < 1e-10, "root {r}");
        }
        let period = form.period().unwrap();
        let init = initial_state(&co, level).unwrap();
        let traj = integrate_strand(&co, &init, (0.0, period), &IntegratorOptions::with_tol(1e-12)).unwrap();
        for i in 0..=400 {
            let s = period * i as f64 / 400.0;
            let (v, dv) = form.potential(s);
            let st = traj.state(s).unwrap();
            assert!((v - st.v).abs() < 1e-8, "theta {theta} B {level} s {s}: {v} vs {}", st.v);
            assert!((dv - st.dv()).abs() < 1e-7);
            assert!((dv * dv - 4.0 * form.reduced_cubic(v)).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_integration_on_both_branches() {
        check_against_ode(1.0, 0.3);
        check_against_ode(1.0 + std::f64::consts::PI, 0.3);
        check_against_ode(2.5, -0.7);
        check_against_ode(0.2, 0.0);
    }

    #[test]
    fn quadratic_degeneration() {
        let co = StrandCoefficients::zero_sum(unit_beta(0.0)).unwrap();
        let form = potential_closed_form(&co, 0.3).unwrap();
        assert!(matches!(form.shape, PotentialShape::Trigonometric { .. }));
        let expected = std::f64::consts::PI * 2f64.sqrt();
        assert!((form.period().unwrap() - expected).abs() < 1e-12);
        check_against_ode(0.0, 0.3);
    }

    #[test]
    fn unit_level_is_constant() {
        let co = StrandCoefficients::zero_sum(unit_beta(1.0)).unwrap();
        let form = potential_closed_form(&co, -1.0).unwrap();
        assert!(form.is_constant());
        assert_eq!(form.v(3.0), 0.0);
        assert!(matches!(form.period(), Err(Error::ConstantPotential)));
    }

    #[test]
    fn reciprocal_norm_integral_matches_quadrature() {
        for &(theta, level) in &[(1.0, 0.3), (2.5, -0.7), (0.0, 0.4), (4.0, 0.05)] {
            let co = StrandCoefficients::zero_sum(unit_beta(theta)).unwrap();
            let form = potential_closed_form(&co, level).unwrap();
            let period = form.period().unwrap();
            for j in 0..3 {
                let c = co.c[j];
                let direct = trapezoid(|s| 1.0 / (c * form.v(s) + 1.0), 0.0, period, 4000);
                let closed = form.reciprocal_norm_integral(j).unwrap();
                assert!((direct - closed).abs() < 1e-9 * closed.abs().max(1.0), "{theta} {level} {j}");
            }
        }
    }

    #[test]
    fn mean_potential_matches_quadrature() {
        for &(theta, level) in &[(1.0, 0.3), (2.5, -0.7), (0.0, 0.4), (4.0, 0.05)] {
            let co = StrandCoefficients::zero_sum(unit_beta(theta)).unwrap();
            let form = potential_closed_form(&co, level).unwrap();
            let period = form.period().unwrap();
            let direct = trapezoid(|s| form.v(s), 0.0, period, 4000);
            let closed = form.integral_over_period().unwrap();
            assert!((direct - closed).abs() < 1e-10, "{theta} {level}: {direct} vs {closed}");
        }
    }

    #[test]
    fn zero_level_flips_two_components() {
        let co = StrandCoefficients::zero_sum(unit_beta(1.0)).unwrap();
        let form = potential_closed_form(&co, 0.0).unwrap();
        assert_eq!(form.sign_flips().iter().filter(|f| **f).count(), 2);
    }
}
