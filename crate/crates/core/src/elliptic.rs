//! Carlson symmetric integrals, Legendre complete integrals and the Jacobi
//! elliptic functions sn, cn, dn.
//!
//! The Carlson forms use the duplication theorem; the Jacobi functions use
//! the descending Landen (arithmetic-geometric mean) scale followed by
//! the backward angle recurrence.

use crate::error::{Error, Result};

const TINY: f64 = 1e-300;

/// Carlson's `R_F(x, y, z)` for nonnegative arguments with at most one zero.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    let (mut x, mut y, mut z) = (x, y, z);
    loop {
        let a = (x + y + z) / 3.0;
        let dx = 1.0 - x / a;
        let dy = 1.0 - y / a;
        let dz = 1.0 - z / a;
        if dx.abs().max(dy.abs()).max(dz.abs()) < 1e-4 {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / a.sqrt();
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lam = sx * (sy + sz) + sy * sz;
        x = (x + lam) / 4.0;
        y = (y + lam) / 4.0;
        z = (z + lam) / 4.0;
    }
}

/// Carlson's degenerate integral `R_C(x, y) = R_F(x, y, y)` for `y > 0`.
pub fn carlson_rc(x: f64, y: f64) -> f64 {
    let (mut x, mut y) = (x, y);
    loop {
        let a = (x + 2.0 * y) / 3.0;
        let s = (y - x) / (3.0 * a);
        if s.abs() < 1e-4 {
            let p = s * s * (0.3 + s * (1.0 / 7.0 + s * (0.375 + s * 9.0 / 22.0)));
            return (1.0 + p) / a.sqrt();
        }
        let lam = 2.0 * x.sqrt() * y.sqrt() + y;
        x = (x + lam) / 4.0;
        y = (y + lam) / 4.0;
    }
}

/// Carlson's `R_J(x, y, z, p)` for nonnegative `x, y, z` and `p > 0`.
pub fn carlson_rj(x: f64, y: f64, z: f64, p: f64) -> f64 {
    let (mut x, mut y, mut z, mut p) = (x, y, z, p);
    let mut sum = 0.0;
    let mut fac = 1.0;
    loop {
        let a = (x + y + z + 2.0 * p) / 5.0;
        let dx = 1.0 - x / a;
        let dy = 1.0 - y / a;
        let dz = 1.0 - z / a;
        let dp = 1.0 - p / a;
        if dx.abs().max(dy.abs()).max(dz.abs()).max(dp.abs()) < 1e-4 {
            let ea = dx * (dy + dz) + dy * dz;
            let eb = dx * dy * dz;
            let ec = dp * dp;
            let ed = ea - 3.0 * ec;
            let ee = eb + 2.0 * dp * (ea - ec);
            let series = 1.0
                + ed * (-3.0 / 14.0 + 9.0 / 88.0 * ed - 9.0 / 52.0 * ee)
                + eb * (1.0 / 6.0 + dp * (-3.0 / 11.0 + dp * 3.0 / 26.0))
                + dp * ea * (1.0 / 3.0 - dp * 3.0 / 22.0)
                - dp * ec / 3.0;
            return 3.0 * sum + fac * series / (a * a.sqrt());
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lam = sx * (sy + sz) + sy * sz;
        let alpha = (p * (sx + sy + sz) + sx * sy * sz).powi(2);
        let beta = p * (p + lam).powi(2);
        sum += fac * carlson_rc(alpha, beta);
        fac /= 4.0;
        x = (x + lam) / 4.0;
        y = (y + lam) / 4.0;
        z = (z + lam) / 4.0;
        p = (p + lam) / 4.0;
    }
}

/// Carlson's `R_D(x, y, z) = R_J(x, y, z, z)`.
pub fn carlson_rd(x: f64, y: f64, z: f64) -> f64 {
    carlson_rj(x, y, z, z)
}

fn check_parameter(m: f64) -> Result<()> {
    if (0.0..=1.0).contains(&m) {
        Ok(())
    } else {
        Err(Error::Domain(format!("elliptic parameter m = {m} outside [0, 1]")))
    }
}

/// Complete integral of the first kind `K(m)`; infinite at `m = 1`.
pub fn complete_k(m: f64) -> Result<f64> {
    check_parameter(m)?;
    if m == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(carlson_rf(0.0, 1.0 - m, 1.0))
}

/// Complete integral of the second kind `E(m)`.
pub fn complete_e(m: f64) -> Result<f64> {
    check_parameter(m)?;
    if m == 1.0 {
        return Ok(1.0);
    }
    Ok(carlson_rf(0.0, 1.0 - m, 1.0) - m / 3.0 * carlson_rd(0.0, 1.0 - m, 1.0))
}

/// Incomplete integral of the first kind `F(φ | m)` for `|φ| ≤ π/2`.
pub fn incomplete_f(phi: f64, m: f64) -> Result<f64> {
    check_parameter(m)?;
    let (s, c) = phi.sin_cos();
    Ok(s * carlson_rf(c * c, 1.0 - m * s * s, 1.0))
}

/// Complete integral of the third kind `Π(n | m) = ∫₀^{π/2} dφ / ((1 − n sin²φ) √(1 − m sin²φ))`
/// for `n < 1`, `m < 1`.
pub fn complete_pi(n: f64, m: f64) -> Result<f64> {
    check_parameter(m)?;
    if n >= 1.0 || m == 1.0 {
        return Err(Error::Domain(format!("complete_pi needs n < 1 and m < 1, got n = {n}, m = {m}")));
    }
    Ok(carlson_rf(0.0, 1.0 - m, 1.0) + n / 3.0 * carlson_rj(0.0, 1.0 - m, 1.0, 1.0 - n))
}

/// Jacobi elliptic functions `(sn, cn, dn)` of argument `u` and parameter `m ∈ [0, 1]`.
pub fn jacobi_elliptic(u: f64, m: f64) -> Result<(f64, f64, f64)> {
    check_parameter(m)?;
    if !u.is_finite() {
        return Err(Error::Domain(format!("jacobi argument {u} is not finite")));
    }
    if m == 0.0 {
        let (s, c) = u.sin_cos();
        return Ok((s, c, 1.0));
    }
    if m == 1.0 {
        let sech = 1.0 / u.cosh();
        return Ok((u.tanh(), sech, sech));
    }
    // Reduce to a single real period 4K to keep the Landen angle small.
    let k = complete_k(m)?;
    let period = 4.0 * k;
    let u = u - period * (u / period).round();

    let mut a = [0.0f64; 64];
    let mut c = [0.0f64; 64];
    a[0] = 1.0;
    let mut b = (1.0 - m).sqrt();
    c[0] = m.sqrt();
    let mut n = 0;
    while c[n].abs() > f64::EPSILON * 0.5 && n < 62 {
        let an = a[n];
        a[n + 1] = (an + b) / 2.0;
        c[n + 1] = (an - b) / 2.0;
        b = (an * b).sqrt();
        n += 1;
    }
    let mut phi = 2f64.powi(n as i32) * a[n] * u;
    for i in (1..=n).rev() {
        phi = (phi + (c[i] / a[i] * phi.sin()).asin()) / 2.0;
    }
    let (sn, cn) = phi.sin_cos();
    let dn = (1.0 - m * sn * sn).max(TINY).sqrt();
    Ok((sn, cn, dn))
}
