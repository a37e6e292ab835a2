//! Closed-form cubic roots with a Newton polish step.

use num_complex::Complex64;

/// Real roots of the depressed cubic `w³ + p·w + q = 0` when all three are real
/// (`4p³ + 27q² ≤ 0`), sorted ascending. Returns `None` otherwise.
pub fn depressed_real_roots(p: f64, q: f64) -> Option<[f64; 3]> {
    if p == 0.0 && q == 0.0 {
        return Some([0.0; 3]);
    }
    if p >= 0.0 {
        return None;
    }
    let amp = 2.0 * (-p / 3.0).sqrt();
    let arg = (3.0 * q) / (p * amp);
    if arg.abs() > 1.0 + 1e-9 {
        return None;
    }
    let arg = arg.clamp(-1.0, 1.0);
    let phi = arg.acos() / 3.0;
    let mut roots = [0.0; 3];
    for (k, root) in roots.iter_mut().enumerate() {
        let w = amp * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
        *root = newton_real(w, p, q);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(roots)
}

fn newton_real(w: f64, p: f64, q: f64) -> f64 {
    let f = w * w * w + p * w + q;
    let df = 3.0 * w * w + p;
    if df.abs() > 1e-300 {
        let next = w - f / df;
        let fn_ = next * next * next + p * next + q;
        if fn_.abs() <= f.abs() {
            return next;
        }
    }
    w
}

/// The three complex roots of `μ³ + p·μ + q = 0` (Cardano), each polished
/// by one Newton step.
pub fn depressed_complex_roots(p: Complex64, q: Complex64) -> [Complex64; 3] {
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let c1 = -q / 2.0 + disc;
    let c2 = -q / 2.0 - disc;
    let big = if c1.norm() >= c2.norm() { c1 } else { c2 };
    let zero = Complex64::new(0.0, 0.0);
    if big.norm() == 0.0 {
        return [zero; 3];
    }
    let u = big.powf(1.0 / 3.0);
    let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let mut out = [zero; 3];
    let mut uk = u;
    for root in out.iter_mut() {
        let mu = uk - p / (3.0 * uk);
        *root = newton_complex(mu, p, q);
        uk *= omega;
    }
    out
}

fn newton_complex(mu: Complex64, p: Complex64, q: Complex64) -> Complex64 {
    let f = mu * mu * mu + p * mu + q;
    let df = 3.0 * mu * mu + p;
    if df.norm() > 1e-300 {
        let next = mu - f / df;
        let fnext = next * next * next + p * next + q;
        if fnext.norm() <= f.norm() {
            return next;
        }
    }
    mu
}
