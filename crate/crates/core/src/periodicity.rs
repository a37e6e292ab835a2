//! Strand periods, rotation phases and the search for doubly periodic
//! (torus) solutions.
//!
//! Over one period `S` of its potential a strand picks up phases,
//! `y_j(s + S) = e^{iη_j}y_j(s)`. When every `η_j/π` is rational the strand
//! closes up after `m` periods. A cone whose two strands both close up is a
//! cone over a torus, whose area follows from the two periods and the
//! lattice `diag(m, n)`.

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::cone2::{area, area_by_quadrature, classify_case, derive_params, ConeCase, ConeParams, ConeStrands};
use crate::error::{Error, Result};
use crate::ode::{
    initial_state, integrate_strand, potential_closed_form, EllipticForm, IntegratorOptions, StrandCoefficients,
};

/// Catalog record format version.
pub const SCHEMA_VERSION: u32 = 1;

/// Best continued-fraction convergent `p/q` of `x` with `q ≤ max_den` and
/// `|x − p/q| < tol`; the first (smallest `q`) convergent that qualifies.
pub fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<(i64, i64)> {
    if !x.is_finite() || max_den < 1 {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i64;
        let (p2, q2) = (a.checked_mul(p1)?.checked_add(p0)?, a.checked_mul(q1)?.checked_add(q0)?);
        if q2 > max_den {
            return None;
        }
        if (x - p2 as f64 / q2 as f64).abs() < tol {
            return Some((p2, q2));
        }
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    None
}

/// Period of a constant-potential strand `y_j = e^{iβ_j s}y_j(0)`: the least
/// `S` with every `β_jS ∈ 2πℤ`, if the `β_j` are relatively rational.
pub fn relatively_rational_period(coeffs: &StrandCoefficients, max_den: i64, tol: f64) -> Option<f64> {
    let c = coeffs.c;
    let k = (0..3).max_by(|i, j| c[*i].abs().total_cmp(&c[*j].abs()))?;
    let mut ratios = [(0i64, 1i64); 3];
    for j in 0..3 {
        ratios[j] = rationalize(c[j] / c[k], max_den, tol)?;
    }
    let l = ratios.iter().fold(1i64, |acc, (_, q)| acc.lcm(q));
    let g = ratios.iter().fold(0i64, |acc, (p, q)| acc.gcd(&(p * (l / q))));
    Some(2.0 * PI * (l / g.max(1)) as f64 / c[k].abs())
}

/// Period of `v` from the complete elliptic integral.
pub fn strand_period(coeffs: &StrandCoefficients, level: f64) -> Result<f64> {
    potential_closed_form(coeffs, level)?.period()
}

/// Period of `v` by event detection: spacing of successive minima of the
/// integrated potential.
pub fn event_period(coeffs: &StrandCoefficients, level: f64, opts: &IntegratorOptions) -> Result<f64> {
    let guess = strand_period(coeffs, level)?;
    let span = 3.2 * guess;
    let traj = integrate_strand(coeffs, &initial_state(coeffs, level)?, (0.0, span), opts)?;
    let minima = traj.potential_minima(0.0, span)?;
    if minima.len() < 2 {
        return Err(Error::Integration("fewer than two potential minima found".into()));
    }
    Ok((minima[minima.len() - 1] - minima[0]) / (minima.len() - 1) as f64)
}

/// `η_j = −c_j·B·∫₀^S ds/(c_jv + 1)` over one period of the closed form.
pub fn rotation_phases(form: &EllipticForm) -> Result<[f64; 3]> {
    let level = form.level;
    let mut eta = [0.0; 3];
    if level == 0.0 {
        return Ok(eta);
    }
    if form.is_constant() {
        return Err(Error::ConstantPotential);
    }
    for (j, e) in eta.iter_mut().enumerate() {
        let c = form.coeffs.c[j];
        if c != 0.0 {
            *e = -c * level * form.reciprocal_norm_integral(j)?;
        }
    }
    Ok(eta)
}

/// Period, phases and rationality data of one strand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodData {
    #[serde(rename = "S")]
    pub period: f64,
    pub eta: [f64; 3],
    /// Components that change sign over a period (only when the level is 0).
    pub flips: [bool; 3],
    /// `(p_j, q_j)` with `(η_j + π·flip_j)/π ≈ p_j/q_j`.
    pub rational_approx: Option<[(i64, i64); 3]>,
    /// Least `m` with `y_j(s + mS) = y_j(s)` for all `j`.
    pub torus_multiple: Option<i64>,
}

impl PeriodData {
    /// `η_j + π·flip_j`, the full phase change over one period.
    pub fn monodromy(&self) -> [f64; 3] {
        [0, 1, 2].map(|j| self.eta[j] + if self.flips[j] { PI } else { 0.0 })
    }

    pub fn max_denominator(&self) -> Option<i64> {
        self.rational_approx.map(|r| r.iter().map(|(_, q)| *q).max().unwrap_or(1))
    }
}

/// Least `n` with `n·p_j/q_j` even for every `j`.
pub fn closing_multiple(ratios: &[(i64, i64); 3]) -> i64 {
    let n = ratios.iter().fold(1i64, |acc, (_, q)| acc.lcm(q));
    if ratios.iter().all(|(p, q)| (n / q * p) % 2 == 0) {
        n
    } else {
        2 * n
    }
}

/// Period data of a strand. Constant potentials use the relatively rational
/// period of the coefficients.
pub fn period_data(coeffs: &StrandCoefficients, level: f64, max_den: i64, tol: f64) -> Result<PeriodData> {
    let form = potential_closed_form(coeffs, level)?;
    let (period, eta, flips) = if form.is_constant() {
        let s = relatively_rational_period(coeffs, max_den, tol).ok_or(Error::Aperiodic)?;
        (s, coeffs.c.map(|c| -c * level * s), [false; 3])
    } else {
        (form.period()?, rotation_phases(&form)?, form.sign_flips())
    };
    let mut data = PeriodData { period, eta, flips, rational_approx: None, torus_multiple: None };
    let mono = data.monodromy();
    let approx: Option<Vec<(i64, i64)>> = mono.iter().map(|m| rationalize(m / PI, max_den, tol)).collect();
    if let Some(a) = approx {
        let ratios = [a[0], a[1], a[2]];
        data.torus_multiple = Some(closing_multiple(&ratios));
        data.rational_approx = Some(ratios);
    }
    Ok(data)
}

/// Period lattice `diag`-generated by `(a₁₁S, a₁₂T)` and `(a₂₁S, a₂₂T)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusLattice {
    pub lattice: [[i64; 2]; 2],
    #[serde(rename = "N")]
    pub n: i64,
}

impl TorusLattice {
    pub fn new(lattice: [[i64; 2]; 2]) -> Result<Self> {
        let n = crate::cone2::lattice_index(&lattice);
        if n == 0 {
            return Err(Error::DegenerateLattice);
        }
        Ok(TorusLattice { lattice, n })
    }

    pub fn diagonal(m: i64, n: i64) -> Result<Self> {
        Self::new([[m, 0], [0, n]])
    }
}

/// Family searched by [`torus_search`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchCase {
    /// `|B| = 1` at `θ = 0`, sweeping `C`.
    A,
    /// `B = 0`, solving for `(θ, C)`.
    B,
    /// `θ = 0` with `0 < |B| < 1`, sweeping `C`.
    C,
    /// Coarse sweep of all three parameters.
    Generic,
}

impl std::str::FromStr for SearchCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(SearchCase::A),
            "b" => Ok(SearchCase::B),
            "c" => Ok(SearchCase::C),
            "generic" => Ok(SearchCase::Generic),
            other => Err(Error::Domain(format!("unknown search case {other:?}"))),
        }
    }
}

/// Search settings. Fixed parameters not used by a case are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub case: SearchCase,
    pub max_den: i64,
    pub tol: f64,
    pub step: f64,
    pub c_range: (f64, f64),
    /// `B` for cases (a) and (c).
    pub b_level: f64,
    /// Verify at most this many hits (smallest denominators first).
    pub limit: usize,
    pub verify_tol: f64,
    pub integrator_tol: f64,
    /// Points per axis of the generic sweep.
    pub generic_points: usize,
}

impl SearchConfig {
    pub fn new(case: SearchCase) -> Self {
        let b_level = match case {
            SearchCase::A => -1.0,
            SearchCase::B => 0.0,
            _ => 0.5,
        };
        SearchConfig {
            case,
            max_den: 40,
            tol: 1e-7,
            step: 1e-3,
            c_range: (-0.9, 0.9),
            b_level,
            limit: 12,
            verify_tol: 1e-6,
            integrator_tol: 1e-12,
            generic_points: 8,
        }
    }
}

/// A parameter set whose two strands both rationalize.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusHit {
    pub params: ConeParams,
    pub y: PeriodData,
    pub z: PeriodData,
}

impl TorusHit {
    pub fn max_denominator(&self) -> i64 {
        self.y.max_denominator().unwrap_or(i64::MAX).max(self.z.max_denominator().unwrap_or(i64::MAX))
    }
}

/// A verified torus with its lattice and area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusRecord {
    pub schema_version: u32,
    pub case: ConeCase,
    pub params: ConeParams,
    pub y: PeriodData,
    pub z: PeriodData,
    pub lattice: TorusLattice,
    pub area: f64,
    /// Direct 2-D quadrature of the area form over the lattice rectangle.
    pub area_quadrature: Option<f64>,
    /// Largest `|y(s + mS) − y(s)|`, `|z(t + nT) − z(t)|` at test points.
    pub closure_defect: Option<f64>,
    pub max_den: i64,
}

/// Lattice `diag(m, n)` and the area from the closed-form integrals.
pub fn assemble_torus(params: &ConeParams, y: &PeriodData, z: &PeriodData) -> Result<TorusRecord> {
    let (m, n) = match (y.torus_multiple, z.torus_multiple) {
        (Some(m), Some(n)) => (m, n),
        _ => return Err(Error::Domain("both strands must close up".into())),
    };
    let lattice = TorusLattice::diagonal(m, n)?;
    let a = area(params, y.period, z.period, &lattice.lattice)?;
    Ok(TorusRecord {
        schema_version: SCHEMA_VERSION,
        case: classify_case(params),
        params: *params,
        y: *y,
        z: *z,
        lattice,
        area: a,
        area_quadrature: None,
        closure_defect: None,
        max_den: y.max_denominator().unwrap_or(1).max(z.max_denominator().unwrap_or(1)),
    })
}

/// Largest closure defect of a strand over `multiple` periods, at three
/// starting points.
fn closure_defect(traj: &crate::ode::Trajectory, period: f64, multiple: i64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for frac in [0.0, 0.37, 0.71] {
        let s0 = frac * period;
        let a = traj.state(s0)?;
        let b = traj.state(s0 + multiple as f64 * period)?;
        worst = worst.max((a.y - b.y).max_abs());
    }
    Ok(worst)
}

/// Re-integrate both strands over the claimed periods, measure closure and
/// compare the area with a direct quadrature.
pub fn verify_hit(hit: &TorusHit, cfg: &SearchConfig) -> Result<TorusRecord> {
    let mut rec = assemble_torus(&hit.params, &hit.y, &hit.z)?;
    let (m, n) = (rec.lattice.lattice[0][0], rec.lattice.lattice[1][1]);
    let (s_len, t_len) = (m as f64 * hit.y.period, n as f64 * hit.z.period);
    let opts = IntegratorOptions::with_tol(cfg.integrator_tol);
    let strands = ConeStrands::integrate(&hit.params, (0.0, s_len + hit.y.period), (0.0, t_len + hit.z.period), &opts)?;
    let defect = closure_defect(&strands.y, hit.y.period, m)?.max(closure_defect(&strands.z, hit.z.period, n)?);
    let panels = (160 * m.max(n) as usize).clamp(400, 8000);
    rec.closure_defect = Some(defect);
    rec.area_quadrature = Some(area_by_quadrature(&hit.params, &strands, s_len, t_len, panels)?);
    Ok(rec)
}

fn hit_at(theta: f64, b: f64, c: f64, cfg: &SearchConfig) -> Option<TorusHit> {
    let params = derive_params(theta, b, c).ok()?;
    let y = period_data(&params.beta_coeffs(), b, cfg.max_den, cfg.tol).ok()?;
    y.rational_approx?;
    let z = period_data(&params.gamma_coeffs(), c, cfg.max_den, cfg.tol).ok()?;
    z.rational_approx?;
    Some(TorusHit { params, y, z })
}

/// `ζ_j/π` of the `z` strand (phase plus sign flips) at `(θ, C)`.
fn z_ratio(theta: f64, c: f64, j: usize) -> Option<f64> {
    let params = derive_params(theta, 0.0, c).ok()?;
    let form = potential_closed_form(&params.gamma_coeffs(), c).ok()?;
    if form.is_constant() {
        return None;
    }
    let eta = rotation_phases(&form).ok()?;
    let flip = if form.sign_flips()[j] { PI } else { 0.0 };
    Some((eta[j] + flip) / PI)
}

fn sweep_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Solve `g(x) = target` on `[a, b]` by bisection, given a sign change.
fn bisect(g: impl Fn(f64) -> Option<f64>, mut a: f64, mut b: f64, target: f64) -> Option<f64> {
    let mut ga = g(a)? - target;
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let gm = g(mid)? - target;
        if (gm < 0.0) == (ga < 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// Sweep `C` at `θ = 0`, refining every crossing of a rational `ζ₁/π` with
/// denominator at most `max_den`.
fn sweep_c(cfg: &SearchConfig) -> Vec<TorusHit> {
    let grid = sweep_grid(cfg.c_range.0, cfg.c_range.1, cfg.step);
    let values: Vec<Option<f64>> = grid.par_iter().map(|c| z_ratio(0.0, *c, 0)).collect();
    let mut roots: Vec<f64> = (0..grid.len() - 1)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut out = Vec::new();
            let (c0, c1) = (grid[i], grid[i + 1]);
            if let (Some(x0), Some(x1)) = (values[i], values[i + 1]) {
                if c0 * c1 > 0.0 && (x1 - x0).abs() < 0.5 {
                    let (lo, hi) = (x0.min(x1), x0.max(x1));
                    for q in 1..=cfg.max_den {
                        let p_lo = (lo * q as f64).ceil() as i64;
                        let p_hi = (hi * q as f64).floor() as i64;
                        for p in p_lo..=p_hi {
                            if p.gcd(&q) != 1 {
                                continue;
                            }
                            if let Some(c) = bisect(|c| z_ratio(0.0, c, 0), c0, c1, p as f64 / q as f64) {
                                out.push(c);
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    roots.par_iter().filter_map(|c| hit_at(0.0, cfg.b_level, *c, cfg)).collect()
}

/// Newton's method on `(ζ₁/π, ζ₂/π) = target` in `(θ, C)`.
fn newton_bc(start: (f64, f64), target: (f64, f64)) -> Option<(f64, f64)> {
    let f = |th: f64, c: f64| -> Option<(f64, f64)> {
        Some((z_ratio(th, c, 0)? - target.0, z_ratio(th, c, 1)? - target.1))
    };
    let (mut th, mut c) = start;
    let h = 1e-6;
    for _ in 0..40 {
        let (f1, f2) = f(th, c)?;
        if f1.hypot(f2) < 1e-13 {
            return Some((th, c));
        }
        let (a1, a2) = f(th + h, c)?;
        let (b1, b2) = f(th - h, c)?;
        let (c1, c2) = f(th, c + h)?;
        let (d1, d2) = f(th, c - h)?;
        let (j11, j21) = ((a1 - b1) / (2.0 * h), (a2 - b2) / (2.0 * h));
        let (j12, j22) = ((c1 - d1) / (2.0 * h), (c2 - d2) / (2.0 * h));
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 {
            return None;
        }
        let dth = (f1 * j22 - f2 * j12) / det;
        let dc = (j11 * f2 - j21 * f1) / det;
        let scale = (0.05 / dth.hypot(dc)).min(1.0);
        th -= scale * dth;
        c -= scale * dc;
        if !(0.02..PI / 6.0 - 0.02).contains(&th) || c.abs() < 0.02 || c.abs() > 0.95 {
            return None;
        }
    }
    None
}

/// Case (b): `B = 0`, two rationality conditions solved in `(θ, C)`.
fn search_b(cfg: &SearchConfig) -> Vec<TorusHit> {
    let thetas = sweep_grid(0.08, PI / 6.0 - 0.08, 0.06);
    let cs: Vec<f64> = sweep_grid(0.15, 0.85, 0.1).into_iter().flat_map(|c| [c, -c]).collect();
    let starts: Vec<(f64, f64)> = thetas.iter().flat_map(|t| cs.iter().map(move |c| (*t, *c))).collect();
    let small = cfg.max_den.min(8);
    let mut sols: Vec<(f64, f64)> = starts
        .par_iter()
        .flat_map_iter(|&(th, c)| {
            let mut out = Vec::new();
            if let (Some(x1), Some(x2)) = (z_ratio(th, c, 0), z_ratio(th, c, 1)) {
                let nearest = |x: f64| -> Vec<f64> {
                    let mut t: Vec<f64> = (1..=small).map(|q| (x * q as f64).round() / q as f64).collect();
                    t.sort_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()));
                    t.dedup();
                    t.truncate(2);
                    t
                };
                for t1 in nearest(x1) {
                    for t2 in nearest(x2) {
                        if let Some(s) = newton_bc((th, c), (t1, t2)) {
                            out.push(s);
                        }
                    }
                }
            }
            out
        })
        .collect();
    sols.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut unique: Vec<(f64, f64)> = Vec::new();
    for s in sols {
        if !unique.iter().any(|u| (u.0 - s.0).abs() + (u.1 - s.1).abs() < 1e-8) {
            unique.push(s);
        }
    }
    let sols = unique;
    sols.par_iter().filter_map(|&(th, c)| hit_at(th, 0.0, c, cfg)).collect()
}

/// Coarse sweep of `(θ, B, C)` requiring all phase ratios to rationalize.
fn search_generic(cfg: &SearchConfig) -> Vec<TorusHit> {
    let n = cfg.generic_points.max(2);
    let thetas = sweep_grid(0.05, 2.0 * PI - 0.05, (2.0 * PI - 0.1) / (n - 1) as f64);
    let levels = sweep_grid(-0.9, 0.9, 1.8 / (n - 1) as f64);
    let mut points = Vec::with_capacity(thetas.len() * levels.len() * levels.len());
    for t in &thetas {
        for b in &levels {
            for c in &levels {
                points.push((*t, *b, *c));
            }
        }
    }
    points.par_iter().filter_map(|&(t, b, c)| hit_at(t, b, c, cfg)).collect()
}

/// Outcome of a search: verified records plus bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub records: Vec<TorusRecord>,
    pub hits: usize,
    pub rejected: usize,
}

/// All rationalizing parameter sets of a case, sorted by max denominator.
pub fn find_hits(cfg: &SearchConfig) -> Result<Vec<TorusHit>> {
    if cfg.max_den < 1 || !(cfg.tol > 0.0) || !(cfg.step > 0.0) {
        return Err(Error::Domain("max_den, tol and step must be positive".into()));
    }
    let mut hits = match cfg.case {
        SearchCase::A => {
            if (cfg.b_level.abs() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain("case (a) needs |B| = 1".into()));
            }
            sweep_c(cfg)
        }
        SearchCase::C => {
            if cfg.b_level.abs() >= 1.0 || cfg.b_level == 0.0 {
                return Err(Error::Domain("case (c) needs 0 < |B| < 1".into()));
            }
            sweep_c(cfg)
        }
        SearchCase::B => search_b(cfg),
        SearchCase::Generic => search_generic(cfg),
    };
    hits.sort_by(|a, b| {
        a.max_denominator()
            .cmp(&b.max_denominator())
            .then(a.params.theta.total_cmp(&b.params.theta))
            .then(a.params.c_level.total_cmp(&b.params.c_level))
    });
    Ok(hits)
}

/// Find hits, then verify up to `cfg.limit` of them. Records failing closure
/// by more than `verify_tol` are counted as rejected.
pub fn torus_search(cfg: &SearchConfig) -> Result<SearchOutcome> {
    let hits = find_hits(cfg)?;
    let checked: Vec<Result<TorusRecord>> = hits.iter().take(cfg.limit).map(|h| verify_hit(h, cfg)).collect();
    let mut out = SearchOutcome { hits: hits.len(), ..Default::default() };
    for rec in checked {
        match rec {
            Ok(r) if r.closure_defect.is_some_and(|d| d < cfg.verify_tol) => out.records.push(r),
            _ => out.rejected += 1,
        }
    }
    Ok(out)
}
