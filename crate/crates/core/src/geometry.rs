//! Euclidean metric, Kähler form and holomorphic volume form on ℂ³.
//!
//! With the standard Hermitian product `⟨u, v⟩ = Σ u_j conj(v_j)` we have
//! `g(u, v) = Re⟨u, v⟩` and `ω(u, v) = Im⟨u, v⟩`, while `Ω(u, v, w)` is the
//! determinant of the matrix with columns `u, v, w`.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A point or tangent vector of ℂ³.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexTriple(pub [Complex64; 3]);

impl ComplexTriple {
    pub const ZERO: ComplexTriple = ComplexTriple([Complex64::new(0.0, 0.0); 3]);

    pub fn new(z1: Complex64, z2: Complex64, z3: Complex64) -> Self {
        ComplexTriple([z1, z2, z3])
    }

    /// Triple with real components.
    pub fn real(x1: f64, x2: f64, x3: f64) -> Self {
        ComplexTriple([x1.into(), x2.into(), x3.into()])
    }

    /// Standard basis vector `e_{k+1}`.
    pub fn basis(k: usize) -> Self {
        let mut out = Self::ZERO;
        out.0[k] = Complex64::new(1.0, 0.0);
        out
    }

    pub fn from_fn(mut f: impl FnMut(usize) -> Complex64) -> Self {
        ComplexTriple([f(0), f(1), f(2)])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Hermitian product `Σ u_j conj(v_j)`.
    pub fn hermitian(&self, other: &Self) -> Complex64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Largest component modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(|j| self.0[j].conj())
    }

    /// Product `z₁z₂z₃`.
    pub fn product(&self) -> Complex64 {
        self.0[0] * self.0[1] * self.0[2]
    }

    /// Componentwise product.
    pub fn hadamard(&self, other: &Self) -> Self {
        Self::from_fn(|j| self.0[j] * other.0[j])
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self::from_fn(|j| self.0[j] * k)
    }
}

impl Index<usize> for ComplexTriple {
    type Output = Complex64;
    fn index(&self, j: usize) -> &Complex64 {
        &self.0[j]
    }
}

impl IndexMut<usize> for ComplexTriple {
    fn index_mut(&mut self, j: usize) -> &mut Complex64 {
        &mut self.0[j]
    }
}

impl Add for ComplexTriple {
    type Output = ComplexTriple;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|j| self.0[j] + rhs.0[j])
    }
}

impl Sub for ComplexTriple {
    type Output = ComplexTriple;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|j| self.0[j] - rhs.0[j])
    }
}

impl Neg for ComplexTriple {
    type Output = ComplexTriple;
    fn neg(self) -> Self {
        Self::from_fn(|j| -self.0[j])
    }
}

impl Mul<f64> for ComplexTriple {
    type Output = ComplexTriple;
    fn mul(self, k: f64) -> Self {
        Self::from_fn(|j| self.0[j] * k)
    }
}

impl Mul<Complex64> for ComplexTriple {
    type Output = ComplexTriple;
    fn mul(self, k: Complex64) -> Self {
        self.scale(k)
    }
}

/// Euclidean metric `g(u, v) = Re Σ u_j conj(v_j)`.
pub fn metric(u: &ComplexTriple, v: &ComplexTriple) -> f64 {
    u.hermitian(v).re
}

/// Kähler form `ω(u, v) = Im Σ u_j conj(v_j)`.
pub fn kaehler_form(u: &ComplexTriple, v: &ComplexTriple) -> f64 {
    u.hermitian(v).im
}

/// Holomorphic volume form `Ω(u, v, w) = det(u v w)` by cofactor expansion.
pub fn holomorphic_volume(u: &ComplexTriple, v: &ComplexTriple, w: &ComplexTriple) -> Complex64 {
    u[0] * (v[1] * w[2] - v[2] * w[1]) - v[0] * (u[1] * w[2] - u[2] * w[1]) + w[0] * (u[1] * v[2] - u[2] * v[1])
}

/// Pointwise special Lagrangian defects of a tangent frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlResidual {
    pub omega_rs: f64,
    pub omega_rt: f64,
    pub omega_st: f64,
    pub im_omega: f64,
    /// Largest `|g(a, b)|` over distinct frame vectors.
    pub gram_defect: f64,
}

impl SlResidual {
    /// Largest of the three Kähler pairings and `|Im Ω|`.
    pub fn max_sl(&self) -> f64 {
        self.omega_rs.max(self.omega_rt).max(self.omega_st).max(self.im_omega)
    }
}

/// Evaluate `|ω|` on the three pairs and `|Im Ω|` on the frame `(u, v, w)`.
pub fn sl_plane_residual(u: &ComplexTriple, v: &ComplexTriple, w: &ComplexTriple) -> SlResidual {
    SlResidual {
        omega_rs: kaehler_form(u, v).abs(),
        omega_rt: kaehler_form(u, w).abs(),
        omega_st: kaehler_form(v, w).abs(),
        im_omega: holomorphic_volume(u, v, w).im.abs(),
        gram_defect: metric(u, v).abs().max(metric(u, w).abs()).max(metric(v, w).abs()),
    }
}
