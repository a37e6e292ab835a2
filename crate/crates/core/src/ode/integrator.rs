//! Adaptive Verner 6(5) integration of a strand with accurate evaluation at
//! arbitrary parameters.
//!
//! Evaluation between accepted steps re-takes a single sixth-order step from
//! the stored knot on the side of the initial point. Each such step is no
//! longer than the one the error controller accepted from that knot, so
//! evaluated values carry the same local accuracy as the knots themselves.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{StrandCoefficients, StrandState};
use crate::error::{Error, Result};
use crate::geometry::ComplexTriple;

type Vec7 = [f64; 7];

// Verner's "efficient" 6(5) pair (RKV65 IIIXb). Row 9 of A equals the
// sixth-order weights, so stage 9 is the derivative at the new point.
// The system is autonomous, so the nodes only appear in the tableau test.
const A: [[f64; 8]; 9] = [
    [0.0; 8],
    [0.06, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.019_239_962_962_962_962, 0.076_693_370_370_370_37, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.035_975, 0.0, 0.107_925, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.318_683_415_233_148_4, 0.0, -5.042_058_063_628_562, 4.220_674_648_395_414, 0.0, 0.0, 0.0, 0.0],
    [
        -41.872_591_664_327_516,
        0.0,
        159.432_562_163_137_5,
        -122.119_213_565_010_03,
        5.531_743_066_200_054,
        0.0,
        0.0,
        0.0,
    ],
    [
        -54.430_156_935_316_504,
        0.0,
        207.067_251_365_018_48,
        -158.610_813_784_59,
        6.991_816_585_950_242,
        -0.018_597_231_062_203_234,
        0.0,
        0.0,
    ],
    [
        -54.663_741_787_281_98,
        0.0,
        207.952_806_255_389_36,
        -159.288_957_474_499_5,
        7.018_743_740_796_944,
        -0.018_338_785_905_045_722,
        -5.119_484_997_882_099e-4,
        0.0,
    ],
    [
        0.034_389_578_683_570_36,
        0.0,
        0.0,
        0.258_262_455_563_350_3,
        0.420_937_118_967_353_7,
        4.405_396_469_669_31,
        -176.483_119_024_298_65,
        172.364_133_401_415_07,
    ],
];
const B6: [f64; 9] = [
    0.034_389_578_683_570_36,
    0.0,
    0.0,
    0.258_262_455_563_350_3,
    0.420_937_118_967_353_7,
    4.405_396_469_669_31,
    -176.483_119_024_298_65,
    172.364_133_401_415_07,
    0.0,
];
const B5: [f64; 9] = [
    0.049_099_676_483_824_9,
    0.0,
    0.0,
    0.225_111_222_951_652_42,
    0.469_468_225_302_956_2,
    0.806_579_224_998_886_8,
    0.0,
    -0.607_119_489_177_796,
    0.056_861_139_440_475_696,
];

fn pack(st: &StrandState) -> Vec7 {
    [st.y[0].re, st.y[0].im, st.y[1].re, st.y[1].im, st.y[2].re, st.y[2].im, st.v]
}

fn unpack(x: &Vec7, s: f64) -> StrandState {
    StrandState {
        y: ComplexTriple::new(Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]), Complex64::new(x[4], x[5])),
        v: x[6],
        s,
    }
}

fn rhs(c: &[f64; 3], x: &Vec7) -> Vec7 {
    let y1 = Complex64::new(x[0], x[1]);
    let y2 = Complex64::new(x[2], x[3]);
    let y3 = Complex64::new(x[4], x[5]);
    let d1 = c[0] * (y2 * y3).conj();
    let d2 = c[1] * (y3 * y1).conj();
    let d3 = c[2] * (y1 * y2).conj();
    [d1.re, d1.im, d2.re, d2.im, d3.re, d3.im, 2.0 * (y1 * y2 * y3).re]
}

/// One Verner step of size `h`: returns the sixth-order solution and the
/// embedded error estimate.
fn step(c: &[f64; 3], x: &Vec7, h: f64, want_error: bool) -> (Vec7, Vec7) {
    let mut k = [[0.0; 7]; 9];
    let stages = if want_error { 9 } else { 8 };
    for i in 0..stages {
        let mut xi = *x;
        for (j, aij) in A[i].iter().enumerate().take(i) {
            if *aij != 0.0 {
                for n in 0..7 {
                    xi[n] += h * aij * k[j][n];
                }
            }
        }
        k[i] = rhs(c, &xi);
    }
    let mut out = *x;
    let mut err = [0.0; 7];
    for i in 0..stages {
        for n in 0..7 {
            out[n] += h * B6[i] * k[i][n];
            if want_error {
                err[n] += h * (B6[i] - B5[i]) * k[i][n];
            }
        }
    }
    (out, err)
}

fn max_modulus(x: &Vec7) -> f64 {
    (0..3).map(|j| x[2 * j].hypot(x[2 * j + 1])).fold(0.0, f64::max)
}

/// Tolerances and safety limits for strand integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Mixed absolute/relative local error tolerance.
    pub tol: f64,
    /// `max_j |y_j|` above which the strand is declared to escape.
    pub ceiling: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { tol: 1e-10, ceiling: 1e6, h_max: 0.5, max_steps: 5_000_000 }
    }
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Self {
        IntegratorOptions { tol, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
struct Knot {
    s: f64,
    x: Vec7,
}

/// A strand solution with evaluation anywhere inside its covered span.
#[derive(Clone, Debug)]
pub struct Trajectory {
    coeffs: StrandCoefficients,
    level: f64,
    s0: f64,
    knots: Vec<Knot>,
    origin: usize,
    lo: f64,
    hi: f64,
    escape_lo: Option<f64>,
    escape_hi: Option<f64>,
}

struct Leg {
    knots: Vec<Knot>,
    end: f64,
    escape: Option<f64>,
}

fn integrate_leg(coeffs: &StrandCoefficients, x0: Vec7, s0: f64, target: f64, opts: &IntegratorOptions) -> Result<Leg> {
    let c = &coeffs.c;
    let dir = if target >= s0 { 1.0 } else { -1.0 };
    let mut knots = vec![Knot { s: s0, x: x0 }];
    if target == s0 {
        return Ok(Leg { knots, end: s0, escape: None });
    }
    let mut s = s0;
    let mut x = x0;
    let mut h = (0.01f64).min(opts.h_max).min((target - s0).abs()) * dir;
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integration(format!("step budget exhausted at s = {s}")));
        }
        let remaining = target - s;
        let last = h.abs() >= remaining.abs();
        if last {
            h = remaining;
        }
        let (xn, err) = step(c, &x, h, true);
        let mut ratio: f64 = 0.0;
        for n in 0..7 {
            let scale = opts.tol * (1.0 + x[n].abs().max(xn[n].abs()));
            ratio = ratio.max(err[n].abs() / scale);
        }
        if !ratio.is_finite() {
            h *= 0.25;
            if h.abs() < 1e-14 * (1.0 + s.abs()) {
                return Err(Error::Integration(format!("non-finite state near s = {s}")));
            }
            continue;
        }
        if ratio <= 1.0 {
            let sn = if last { target } else { s + h };
            if max_modulus(&xn) > opts.ceiling {
                let (cross, endpoint) = locate_escape(coeffs, &x, s, sn - s, opts.ceiling);
                knots.push(Knot { s: sn, x: xn });
                return Ok(Leg { knots, end: cross, escape: Some(endpoint) });
            }
            s = sn;
            x = xn;
            knots.push(Knot { s, x });
            if last {
                return Ok(Leg { knots, end: s, escape: None });
            }
        }
        let fac = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-1.0 / 6.0)).clamp(0.2, 5.0) };
        let fac = if ratio > 1.0 { fac.min(0.9) } else { fac };
        h = (h * fac).abs().min(opts.h_max) * dir;
        if h.abs() < 1e-14 * (1.0 + s.abs()) {
            return Err(Error::Integration(format!("step size underflow at s = {s}")));
        }
    }
}

/// Bisect the crossing of the modulus ceiling within a step from `(s, x)` of
/// length `h`, then extrapolate the pole using `v ~ K/(s* − s)²`, for which
/// `s* ≈ s + 2v/v'`.
fn locate_escape(coeffs: &StrandCoefficients, x: &Vec7, s: f64, h: f64, ceiling: f64) -> (f64, f64) {
    let c = &coeffs.c;
    let (mut a, mut b) = (0.0, h);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() < 1e-15 * (1.0 + s.abs()) {
            break;
        }
        let (xm, _) = step(c, x, m, false);
        if max_modulus(&xm) > ceiling {
            b = m;
        } else {
            a = m;
        }
    }
    let (xa, _) = step(c, x, a, false);
    let d = rhs(c, &xa);
    let cross = s + a;
    let endpoint = if d[6] != 0.0 { cross + 2.0 * xa[6] / d[6] } else { cross };
    (cross, endpoint)
}

/// Integrate a strand over `span`, which must contain `initial.s`.
///
/// Fails with [`Error::FiniteEscape`] if the strand leaves every bounded set
/// inside the span.
pub fn integrate_strand(
    coeffs: &StrandCoefficients,
    initial: &StrandState,
    span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let traj = integrate_until_escape(coeffs, initial, span, opts)?;
    if let Some(at) = traj.escape_hi.or(traj.escape_lo) {
        return Err(Error::FiniteEscape { at });
    }
    Ok(traj)
}

/// Integrate a strand over `span`, stopping early on either side if the strand
/// escapes. The escape points are recorded on the trajectory.
pub fn integrate_until_escape(
    coeffs: &StrandCoefficients,
    initial: &StrandState,
    span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("integration tolerance must be positive".into()));
    }
    let (lo, hi) = span;
    if !(lo <= initial.s && initial.s <= hi) {
        return Err(Error::Domain(format!("span [{lo}, {hi}] does not contain the initial parameter {}", initial.s)));
    }
    if !initial.y.is_finite() || !initial.v.is_finite() {
        return Err(Error::Domain("initial state is not finite".into()));
    }
    let x0 = pack(initial);
    let fwd = integrate_leg(coeffs, x0, initial.s, hi, opts)?;
    let bwd = integrate_leg(coeffs, x0, initial.s, lo, opts)?;
    let origin = bwd.knots.len() - 1;
    let mut knots: Vec<Knot> = bwd.knots.into_iter().rev().collect();
    knots.extend(fwd.knots.into_iter().skip(1));
    Ok(Trajectory {
        coeffs: *coeffs,
        level: initial.level(),
        s0: initial.s,
        knots,
        origin,
        lo: bwd.end,
        hi: fwd.end,
        escape_lo: bwd.escape,
        escape_hi: fwd.escape,
    })
}

impl Trajectory {
    pub fn coeffs(&self) -> &StrandCoefficients {
        &self.coeffs
    }

    /// Conserved level `Im(y₁y₂y₃)` of the initial state.
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    /// Covered parameter range.
    pub fn span(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Extrapolated escape points, if the strand left every bounded set.
    pub fn escapes(&self) -> (Option<f64>, Option<f64>) {
        (self.escape_lo, self.escape_hi)
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    /// Parameters of the accepted steps.
    pub fn knot_parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.iter().map(|k| k.s)
    }

    pub fn initial(&self) -> StrandState {
        unpack(&self.knots[self.origin].x, self.s0)
    }

    /// State at parameter `s`.
    pub fn state(&self, s: f64) -> Result<StrandState> {
        if !(self.lo <= s && s <= self.hi) || !s.is_finite() {
            return Err(Error::Coverage { at: s, lo: self.lo, hi: self.hi });
        }
        let idx = self.knots.partition_point(|k| k.s <= s);
        let base = if s >= self.s0 || (idx > 0 && self.knots[idx - 1].s == s) {
            &self.knots[idx - 1]
        } else {
            &self.knots[idx]
        };
        let h = s - base.s;
        if h == 0.0 {
            return Ok(unpack(&base.x, s));
        }
        let (x, _) = step(&self.coeffs.c, &base.x, h, false);
        Ok(unpack(&x, s))
    }

    /// `n` uniformly spaced states over `[a, b]` (inclusive).
    pub fn samples(&self, a: f64, b: f64, n: usize) -> Result<Vec<StrandState>> {
        let n = n.max(2);
        (0..n).map(|i| self.state(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
    }

    /// Largest `|Im(y₁y₂y₃) − B|` and largest norm-constraint violation over
    /// the stored knots.
    pub fn drift(&self) -> (f64, f64) {
        let mut level = 0.0f64;
        let mut constraint = 0.0f64;
        for k in &self.knots {
            let st = unpack(&k.x, k.s);
            level = level.max((st.level() - self.level).abs());
            constraint = constraint.max(st.constraint_residual(&self.coeffs));
        }
        (level, constraint)
    }

    /// Parameters in `[a, b]` where `dv/ds` changes sign from negative to
    /// positive (minima of the potential), refined by bisection.
    pub fn potential_minima(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let dv = |s: f64| self.state(s).map(|st| st.dv());
        let grid: Vec<f64> = self.knots.iter().map(|k| k.s).filter(|s| *s >= a && *s <= b).collect();
        let mut prev: Option<(f64, f64)> = None;
        for s in grid {
            let d = dv(s)?;
            if let Some((sp, dp)) = prev {
                if dp < 0.0 && d >= 0.0 {
                    let (mut lo, mut hi) = (sp, s);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if dv(mid)? < 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    out.push(0.5 * (lo + hi));
                }
            }
            prev = Some((s, d));
        }
        Ok(out)
    }

    /// Write the trajectory as CSV: `s`, real and imaginary parts of each
    /// `y_j`, `v`, and the conservation residual.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, samples: usize) -> std::io::Result<()> {
        writeln!(out, "s,re_y1,im_y1,re_y2,im_y2,re_y3,im_y3,v,conservation_residual")?;
        let n = samples.max(2);
        for i in 0..n {
            let s = self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64;
            let st = self.state(s).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.3e}",
                s,
                st.y[0].re,
                st.y[0].im,
                st.y[1].re,
                st.y[1].im,
                st.y[2].re,
                st.y[2].im,
                st.v,
                (st.level() - self.level).abs()
            )?;
        }
        Ok(())
    }
}
