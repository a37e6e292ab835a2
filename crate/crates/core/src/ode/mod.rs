//! The commuting strand ODEs, their conserved quantities, adaptive
//! integration and the closed-form elliptic reduction of the potential.
//!
//! A strand is a triple `y = (y₁, y₂, y₃)` with a real potential `v` solving
//!
//! ```text
//! dy₁/ds = c₁·conj(y₂y₃),  dy₂/ds = c₂·conj(y₃y₁),  dy₃/ds = c₃·conj(y₁y₂),
//! dv/ds  = 2 Re(y₁y₂y₃).
//! ```
//!
//! Along solutions `|y_j|² − c_j·v` and `Im(y₁y₂y₃)` are constant.

mod closed_form;
mod integrator;

pub use closed_form::{potential_closed_form, EllipticForm, PotentialShape};
pub use integrator::{integrate_strand, integrate_until_escape, IntegratorOptions, Trajectory};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ComplexTriple;
use crate::quad::adaptive_simpson;

/// Coefficients `(c₁, c₂, c₃)` of a strand: the `β_j`, `γ_j` or `α_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrandCoefficients {
    pub c: [f64; 3],
    pub zero_sum: bool,
}

impl StrandCoefficients {
    /// Coefficients without a zero-sum assertion.
    pub fn new(c: [f64; 3]) -> Result<Self> {
        if c.iter().all(|x| *x == 0.0) {
            return Err(Error::Domain("strand coefficients are all zero".into()));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("strand coefficients must be finite".into()));
        }
        Ok(StrandCoefficients { c, zero_sum: false })
    }

    /// Coefficients that must sum to zero (to `1e-12`).
    pub fn zero_sum(c: [f64; 3]) -> Result<Self> {
        let mut out = Self::new(c)?;
        let sum: f64 = c.iter().sum();
        if sum.abs() >= 1e-12 {
            return Err(Error::Domain(format!("coefficients sum to {sum:e}, not zero")));
        }
        out.zero_sum = true;
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.c.iter().sum()
    }

    pub fn e2(&self) -> f64 {
        let c = &self.c;
        c[0] * c[1] + c[1] * c[2] + c[2] * c[0]
    }

    pub fn e3(&self) -> f64 {
        self.c[0] * self.c[1] * self.c[2]
    }

    /// `Q(v) = (c₁v + 1)(c₂v + 1)(c₃v + 1)`.
    pub fn q(&self, v: f64) -> f64 {
        self.c.iter().map(|c| c * v + 1.0).product()
    }

    /// `Q'(v)`; note `d²v/ds² = 2Q'(v)` along any strand.
    pub fn q_prime(&self, v: f64) -> f64 {
        self.sum() + 2.0 * self.e2() * v + 3.0 * self.e3() * v * v
    }
}

/// A point on a strand trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrandState {
    pub y: ComplexTriple,
    pub v: f64,
    pub s: f64,
}

impl StrandState {
    /// Conserved level `Im(y₁y₂y₃)`.
    pub fn level(&self) -> f64 {
        self.y.product().im
    }

    /// `dv/ds = 2 Re(y₁y₂y₃)`.
    pub fn dv(&self) -> f64 {
        2.0 * self.y.product().re
    }

    /// Largest violation of `|y_j|² = c_j·v + 1`.
    pub fn constraint_residual(&self, coeffs: &StrandCoefficients) -> f64 {
        (0..3).map(|j| (self.y[j].norm_sqr() - coeffs.c[j] * self.v - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Right-hand side of the strand system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrandDerivative {
    pub dy: ComplexTriple,
    pub dv: f64,
}

pub fn strand_derivative(coeffs: &StrandCoefficients, state: &StrandState) -> StrandDerivative {
    let y = &state.y;
    let c = &coeffs.c;
    StrandDerivative {
        dy: ComplexTriple::new(c[0] * (y[1] * y[2]).conj(), c[1] * (y[2] * y[0]).conj(), c[2] * (y[0] * y[1]).conj()),
        dv: 2.0 * y.product().re,
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&level) {
        return Err(Error::InvalidLevel(level));
    }
    Ok(())
}

/// Canonical initial point: `s = 0`, `v = 0`, `y = (1, 1, e^{i·arcsin B})`.
pub fn initial_state(coeffs: &StrandCoefficients, level: f64) -> Result<StrandState> {
    initial_state_with_phases(coeffs, level, [0.0; 3])
}

/// Canonical initial point rotated by phase offsets `κ` with `κ₁ + κ₂ + κ₃ = 0`.
pub fn initial_state_with_phases(_coeffs: &StrandCoefficients, level: f64, offsets: [f64; 3]) -> Result<StrandState> {
    check_level(level)?;
    let total: f64 = offsets.iter().sum();
    if total.abs() > 1e-12 {
        return Err(Error::Domain(format!("phase offsets sum to {total:e}, not zero")));
    }
    let phases = [offsets[0], offsets[1], offsets[2] + level.asin()];
    Ok(StrandState { y: ComplexTriple::from_fn(|j| Complex64::from_polar(1.0, phases[j])), v: 0.0, s: 0.0 })
}

/// Initial point with prescribed potential `v0` and level `B`: moduli
/// `√(c_j·v0 + 1)`, phases `(0, 0, δ)` with `Re(y₁y₂y₃) ≥ 0`.
pub fn initial_state_at(coeffs: &StrandCoefficients, level: f64, v0: f64) -> Result<StrandState> {
    let mut moduli = [0.0; 3];
    for j in 0..3 {
        let n = coeffs.c[j] * v0 + 1.0;
        if n <= 0.0 {
            return Err(Error::ConstraintViolation { j: j + 1, at: 0.0 });
        }
        moduli[j] = n.sqrt();
    }
    let prod: f64 = moduli.iter().product();
    if level.abs() > prod {
        return Err(Error::InvalidLevel(level));
    }
    let delta = (level / prod).asin();
    let phases = [0.0, 0.0, delta];
    Ok(StrandState { y: ComplexTriple::from_fn(|j| Complex64::from_polar(moduli[j], phases[j])), v: v0, s: 0.0 })
}

/// Change of the phase `δ_j = arg y_j` between `trajectory.s0()` and `s`, from
/// `dδ_j/ds = −c_j·B / (c_j·v + 1)`.
pub fn phase_integral(trajectory: &Trajectory, j: usize, s: f64) -> Result<f64> {
    let coeffs = trajectory.coeffs();
    let level = trajectory.level();
    let c = coeffs.c[j];
    if level == 0.0 || c == 0.0 {
        trajectory.state(s)?;
        return Ok(0.0);
    }
    let s0 = trajectory.s0();
    trajectory.state(s)?;
    let mut failure = None;
    let value = adaptive_simpson(
        |x| match trajectory.state(x) {
            Ok(st) => {
                let n = c * st.v + 1.0;
                if n <= 0.0 {
                    failure.get_or_insert(Error::ConstraintViolation { j: j + 1, at: x });
                    0.0
                } else {
                    -c * level / n
                }
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        s0,
        s,
        1e-12,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn derivative_examples() {
        let co = StrandCoefficients::new([1.0, -1.0, 0.0]).unwrap();
        let st = StrandState { y: ComplexTriple::real(1.0, 1.0, 1.0), v: 0.0, s: 0.0 };
        let d = strand_derivative(&co, &st);
        assert_eq!(d.dy, ComplexTriple::real(1.0, -1.0, 0.0));
        assert_eq!(d.dv, 2.0);

        let st = StrandState { y: ComplexTriple::real(0.4, -2.0, 0.0), v: 0.3, s: 0.0 };
        let d = strand_derivative(&co, &st);
        assert_eq!(d.dy[0], Complex64::new(0.0, 0.0));
        assert_eq!(d.dy[1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn u1_invariant_fixture_has_stationary_potential() {
        let beta = [0.5, -0.2, -0.3];
        let kappa = [0.4, 1.1, -PI / 2.0 - 1.5];
        let co = StrandCoefficients::zero_sum(beta).unwrap();
        for s in [0.0, 0.7, 3.1] {
            let y = ComplexTriple::from_fn(|j| Complex64::from_polar(1.0, beta[j] * s + kappa[j]));
            let d = strand_derivative(&co, &StrandState { y, v: 0.0, s });
            assert!(d.dv.abs() < 1e-15);
        }
    }

    #[test]
    fn initial_state_examples() {
        let co = StrandCoefficients::zero_sum([1.0, -1.0, 0.0]).unwrap();
        let st = initial_state(&co, 0.0).unwrap();
        assert_eq!(st.y, ComplexTriple::real(1.0, 1.0, 1.0));
        assert_eq!(st.v, 0.0);

        let st = initial_state(&co, -1.0).unwrap();
        assert!((st.y[2] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(strand_derivative(&co, &st).dv.abs() < 1e-15);

        let st = initial_state(&co, 0.5).unwrap();
        assert!((st.level() - 0.5).abs() < 1e-15);
        assert!(st.y.product().re > 0.0);
        for j in 0..3 {
            assert!((st.y[j].norm() - 1.0).abs() < 1e-15);
        }
        assert!(matches!(initial_state(&co, 1.2), Err(Error::InvalidLevel(_))));
    }

    #[test]
    fn initial_state_at_potential() {
        let co = StrandCoefficients::new([0.5, 0.6, 0.7]).unwrap();
        let st = initial_state_at(&co, 0.2, 3.0).unwrap();
        assert!(st.constraint_residual(&co) < 1e-14);
        assert!((st.level() - 0.2).abs() < 1e-14);
        assert!(initial_state_at(&co, 0.2, -3.0).is_err());
    }

    #[test]
    fn coefficient_validation() {
        assert!(StrandCoefficients::new([0.0; 3]).is_err());
        assert!(StrandCoefficients::zero_sum([1.0, 1.0, 0.0]).is_err());
        assert!(StrandCoefficients::zero_sum([1.0, -0.5, -0.5]).is_ok());
    }
}
