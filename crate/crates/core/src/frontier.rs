//! Loss surface over model size and data, iso-loss contours, and the
//! training-time versus compute Pareto frontier.
//!
//! Every base setting `(N, D_min)` on an iso-loss contour can be trained at
//! a larger batch size `B` by paying extra compute
//! `C+ = 6 N D_min (1 + B / B_crit(D_min))`. Sweeping the compute multiplier
//! for every base traces one curve per base; the points no other point beats
//! on both time and compute form the frontier.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch_laws::{BatchLawError, BatchScalingLaw, LawKind};
use crate::numeric::{golden_section, lin_space, log_space, nelder_mead};
use crate::run_store::RunRecord;

/// Budget multipliers `C+ / C` swept per base setting.
pub const CURVE_MULTIPLIERS: usize = 64;
pub const CURVE_MULTIPLIER_RANGE: (f64, f64) = (1.0 + 1e-3, 64.0);

/// Compute values closer than this (relative) are treated as equal when
/// deciding dominance, so rounding cannot promote a point that only ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("need at least 6 (N, D) points, got {0}")]
    TooFewPoints(usize),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("non-positive {what}: {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("loss target {target} is at or below the model floor {floor} for N = {n_params}")]
    BelowModelFloor { target: f64, floor: f64, n_params: f64 },
    #[error("unit mismatch: {0}")]
    UnitMismatch(String),
    #[error("budget {budget:e} is below the base compute {base:e}")]
    BudgetBelowBase { budget: f64, base: f64 },
    #[error("curves mix loss targets {0} and {1}")]
    MixedLossTargets(f64, f64),
    #[error("loss surface fit failed: {0}")]
    NoFit(String),
    #[error(transparent)]
    Batch(#[from] BatchLawError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn positive(what: &'static str, value: f64) -> Result<f64, FrontierError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(FrontierError::NonPositive { what, value })
    }
}

/// `L(N, D) = E + n_const * N^-alpha + d_const * D^-beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChinchillaFit {
    pub irreducible: f64,
    pub n_const: f64,
    pub alpha: f64,
    pub d_const: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub r_squared: f64,
}

fn one() -> f64 {
    1.0
}

impl ChinchillaFit {
    pub fn new(irreducible: f64, n_const: f64, alpha: f64, d_const: f64, beta: f64) -> Self {
        Self {
            irreducible,
            n_const,
            alpha,
            d_const,
            beta,
            r_squared: 1.0,
        }
    }

    pub fn predict(&self, n_params: f64, d_tokens: f64) -> f64 {
        self.irreducible + self.n_const * n_params.powf(-self.alpha) + self.d_const * d_tokens.powf(-self.beta)
    }

    /// Loss with infinite data at this model size.
    pub fn model_floor(&self, n_params: f64) -> f64 {
        self.irreducible + self.n_const * n_params.powf(-self.alpha)
    }

    pub fn validate(&self) -> Result<(), FrontierError> {
        if !(self.irreducible >= 0.0 && self.irreducible.is_finite()) {
            return Err(FrontierError::NonPositive {
                what: "irreducible loss",
                value: self.irreducible,
            });
        }
        positive("N scale", self.n_const)?;
        positive("alpha", self.alpha)?;
        positive("D scale", self.d_const)?;
        positive("beta", self.beta)?;
        Ok(())
    }
}

/// Lowest loss per `(N, D)`, as `(N, D, loss)` triples.
pub fn best_per_nd(records: &[RunRecord]) -> Vec<(f64, f64, f64)> {
    let mut best: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for r in records {
        let slot = best.entry((r.n_params, r.d_tokens)).or_insert(f64::INFINITY);
        *slot = slot.min(r.val_loss);
    }
    best.into_iter().map(|((n, d), l)| (n as f64, d as f64, l)).collect()
}

/// Scale terms for fixed exponents, by linear least squares in loss space.
/// Returns `(E, n_const, d_const, ssr)`; `None` when no admissible solution
/// (E in `[0, min loss)`, positive scales) exists.
struct Profile<'a> {
    points: &'a [(f64, f64, f64)],
    min_loss: f64,
}

impl Profile<'_> {
    fn solve(&self, alpha: f64, beta: f64) -> Option<(f64, f64, f64, f64)> {
        if !(alpha > 0.0 && beta > 0.0 && alpha < 5.0 && beta < 5.0) {
            return None;
        }
        let m = self.points.len();
        // columns scaled to unit max for conditioning
        let xn: Vec<f64> = self.points.iter().map(|p| p.0.powf(-alpha)).collect();
        let xd: Vec<f64> = self.points.iter().map(|p| p.1.powf(-beta)).collect();
        let sn = xn.iter().cloned().fold(0.0, f64::max);
        let sd = xd.iter().cloned().fold(0.0, f64::max);
        let y = DVector::from_iterator(m, self.points.iter().map(|p| p.2));

        let full = DMatrix::from_fn(m, 3, |i, j| match j {
            0 => 1.0,
            1 => xn[i] / sn,
            _ => xd[i] / sd,
        });
        let score = |e: f64, a: f64, b: f64| -> Option<(f64, f64, f64, f64)> {
            if !(a > 0.0 && b > 0.0 && e >= 0.0 && e < self.min_loss) {
                return None;
            }
            let ssr: f64 = (0..m)
                .map(|i| (y[i] - e - a * xn[i] / sn - b * xd[i] / sd).powi(2))
                .sum();
            Some((e, a / sn, b / sd, ssr))
        };
        if let Some(s) = full
            .clone()
            .svd(true, true)
            .solve(&y, 1e-14)
            .ok()
            .and_then(|sol| score(sol[0], sol[1], sol[2]))
        {
            return Some(s);
        }
        // E pinned to a grid below the lowest loss
        let svd = full.columns(1, 2).into_owned().svd(true, true);
        (0..64)
            .filter_map(|k| {
                let e = self.min_loss * k as f64 / 64.0;
                let sol = svd.solve(&y.map(|v| v - e), 1e-14).ok()?;
                score(e, sol[0], sol[1])
            })
            .min_by(|x, y| x.3.total_cmp(&y.3))
    }

    fn ssr(&self, alpha: f64, beta: f64) -> f64 {
        self.solve(alpha, beta).map_or(f64::INFINITY, |s| s.3)
    }
}

/// Fits the loss surface to `(N, D, loss)` points by minimizing squared
/// loss residuals over all five parameters.
///
/// The scale terms are solved linearly for each exponent pair; the exponent
/// pair is searched on a grid over `[0.1, 0.6]^2` and the best starts are
/// polished with a simplex search.
pub fn fit_chinchilla(points: &[(f64, f64, f64)]) -> Result<ChinchillaFit, FrontierError> {
    if points.len() < 6 {
        return Err(FrontierError::TooFewPoints(points.len()));
    }
    for &(n, d, l) in points {
        positive("N", n)?;
        positive("D", d)?;
        positive("loss", l)?;
    }
    let distinct = |f: fn(&(f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = points.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct(|p| p.0) < 2 {
        return Err(FrontierError::RankDeficient("all points share one N".into()));
    }
    if distinct(|p| p.1) < 2 {
        return Err(FrontierError::RankDeficient("all points share one D".into()));
    }
    let min_loss = points.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let profile = Profile { points, min_loss };

    let grid = lin_space(0.1, 0.6, 11);
    let mut starts: Vec<(f64, f64, f64)> = Vec::new();
    for &a in &grid {
        for &b in &grid {
            let s = profile.ssr(a, b);
            if s.is_finite() {
                starts.push((s, a, b));
            }
        }
    }
    if starts.is_empty() {
        return Err(FrontierError::NoFit("no exponent pair admits positive scale terms".into()));
    }
    starts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &(_, a, b) in starts.iter().take(4) {
        let (x, v) = nelder_mead(|p| profile.ssr(p[0], p[1]), &[a, b], &[0.02, 0.02], 4000, 1e-16);
        if v < best.0 {
            best = (v, x[0], x[1]);
        }
    }
    let (alpha, beta) = (best.1, best.2);
    let (e, nc, dc, ssr) = profile
        .solve(alpha, beta)
        .ok_or_else(|| FrontierError::NoFit("refinement left the admissible region".into()))?;
    let mean = points.iter().map(|p| p.2).sum::<f64>() / points.len() as f64;
    let sst: f64 = points.iter().map(|p| (p.2 - mean).powi(2)).sum();
    Ok(ChinchillaFit {
        irreducible: e,
        n_const: nc,
        alpha,
        d_const: dc,
        beta,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 },
    })
}

/// Minimum data a model of size `n_params` needs to reach `loss_target`.
pub fn contour_dmin(fit: &ChinchillaFit, loss_target: f64, n_params: f64) -> Result<f64, FrontierError> {
    positive("N", n_params)?;
    let floor = fit.model_floor(n_params);
    if !(loss_target > floor) {
        return Err(FrontierError::BelowModelFloor {
            target: loss_target,
            floor,
            n_params,
        });
    }
    Ok((fit.d_const / (loss_target - floor)).powf(1.0 / fit.beta))
}

/// Loss-optimal split of a compute budget under `C = 6 N D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub n_opt: f64,
    pub d_opt: f64,
    pub tpp_opt: f64,
    pub loss: f64,
}

pub fn compute_optimal_allocation(fit: &ChinchillaFit, c_budget: f64) -> Result<Allocation, FrontierError> {
    fit.validate()?;
    positive("compute budget", c_budget)?;
    let (a, b) = (fit.alpha, fit.beta);
    let g = (a * fit.n_const / (b * fit.d_const)).powf(1.0 / (a + b));
    let half = c_budget / 6.0;
    let n_opt = g * half.powf(b / (a + b));
    let d_opt = half / n_opt;
    Ok(Allocation {
        n_opt,
        d_opt,
        tpp_opt: d_opt / n_opt,
        loss: fit.predict(n_opt, d_opt),
    })
}

/// Smallest compute whose optimal allocation reaches `loss_target`.
pub fn compute_for_loss(fit: &ChinchillaFit, loss_target: f64) -> Result<f64, FrontierError> {
    fit.validate()?;
    if !(loss_target > fit.irreducible) {
        return Err(FrontierError::BelowModelFloor {
            target: loss_target,
            floor: fit.irreducible,
            n_params: f64::INFINITY,
        });
    }
    let loss_at = |ln_c: f64| compute_optimal_allocation(fit, ln_c.exp()).map(|a| a.loss);
    let (mut lo, mut hi) = (1.0f64, 60.0f64);
    while loss_at(lo)? < loss_target {
        lo -= 10.0;
    }
    while loss_at(hi)? > loss_target {
        hi += 20.0;
        if hi > 700.0 {
            return Err(FrontierError::NoFit("loss target unreachable".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if loss_at(mid)? > loss_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

fn crit_in_sequences(d_min: f64, crit_law: &BatchScalingLaw) -> Result<f64, FrontierError> {
    if crit_law.kind != LawKind::BcritInDmin {
        return Err(FrontierError::UnitMismatch(format!(
            "expected a B_crit(D_min) law, got {:?}",
            crit_law.kind
        )));
    }
    let b = crit_law.predict_sequences(d_min);
    positive("B_crit", b)
}

/// `6 N D_min (1 + B / B_crit(D_min))`, with `b_sequences` in sequences.
pub fn flops_plus(n_params: f64, d_min: f64, b_sequences: f64, crit_law: &BatchScalingLaw) -> Result<f64, FrontierError> {
    positive("N", n_params)?;
    positive("D_min", d_min)?;
    if !(b_sequences >= 0.0 && b_sequences.is_finite()) {
        return Err(FrontierError::NonPositive {
            what: "batch size",
            value: b_sequences,
        });
    }
    let b_crit = crit_in_sequences(d_min, crit_law)?;
    Ok(6.0 * n_params * d_min * (1.0 + b_sequences / b_crit))
}

/// Batch size (sequences) that spends exactly `c_hat` FLOPs at this base.
pub fn batch_for_budget(n_params: f64, d_min: f64, c_hat: f64, crit_law: &BatchScalingLaw) -> Result<f64, FrontierError> {
    positive("N", n_params)?;
    positive("D_min", d_min)?;
    positive("budget", c_hat)?;
    let b_crit = crit_in_sequences(d_min, crit_law)?;
    let base = 6.0 * n_params * d_min;
    if c_hat < base {
        return Err(FrontierError::BudgetBelowBase { budget: c_hat, base });
    }
    Ok((c_hat / base - 1.0) * b_crit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeModel {
    /// Time proportional to total FLOPs over batch size, reported as `6 N S`.
    FlopsPerBatch,
    /// Time equal to optimizer steps.
    Steps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub n_params: f64,
    pub d_min: f64,
    /// Batch size in sequences.
    pub b: f64,
    pub c_plus: f64,
    /// Set by [`mark_dominance`] under the chosen time model.
    pub time: Option<f64>,
    pub actual_tpp: f64,
    pub dominated: bool,
    /// Tokens actually trained on, `D_min (1 + B / B_crit)`.
    pub d_tokens: f64,
    pub seq_len: u64,
}

impl ParetoPoint {
    pub fn base_tpp(&self) -> f64 {
        self.d_min / self.n_params
    }

    pub fn steps(&self) -> f64 {
        self.d_tokens / (self.b * self.seq_len as f64)
    }

    pub fn time_under(&self, model: TimeModel) -> f64 {
        match model {
            TimeModel::FlopsPerBatch => self.c_plus / (self.b * self.seq_len as f64),
            TimeModel::Steps => self.steps(),
        }
    }
}

/// All batch-size options for one base setting on an iso-loss contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoLossCurve {
    pub loss_target: f64,
    pub base_n: f64,
    pub base_dmin: f64,
    pub points: Vec<ParetoPoint>,
}

impl IsoLossCurve {
    /// Sweeps [`CURVE_MULTIPLIERS`] log-spaced budget multipliers.
    ///
    /// When `b_opt` is given the curve starts at that batch size with the
    /// base compute `6 N D_min`, and swept points at or below it are dropped.
    pub fn build(
        fit: &ChinchillaFit,
        crit_law: &BatchScalingLaw,
        loss_target: f64,
        n_params: f64,
        b_opt: Option<f64>,
    ) -> Result<Self, FrontierError> {
        let d_min = contour_dmin(fit, loss_target, n_params)?;
        let b_crit = crit_in_sequences(d_min, crit_law)?;
        let seq_len = crit_law.seq_len;
        let base = 6.0 * n_params * d_min;
        let mut points = Vec::with_capacity(CURVE_MULTIPLIERS + 1);
        if let Some(b) = b_opt {
            positive("B_opt", b)?;
            points.push(ParetoPoint {
                n_params,
                d_min,
                b,
                c_plus: base,
                time: None,
                actual_tpp: d_min / n_params,
                dominated: false,
                d_tokens: d_min,
                seq_len,
            });
        }
        let (lo, hi) = CURVE_MULTIPLIER_RANGE;
        for k in log_space(lo, hi, CURVE_MULTIPLIERS) {
            let b = batch_for_budget(n_params, d_min, k * base, crit_law)?;
            if b_opt.is_some_and(|r| b <= r) {
                continue;
            }
            let d_tokens = d_min * (1.0 + b / b_crit);
            points.push(ParetoPoint {
                n_params,
                d_min,
                b,
                c_plus: flops_plus(n_params, d_min, b, crit_law)?,
                time: None,
                actual_tpp: d_tokens / n_params,
                dominated: false,
                d_tokens,
                seq_len,
            });
        }
        Ok(Self {
            loss_target,
            base_n: n_params,
            base_dmin: d_min,
            points,
        })
    }
}

/// One curve per model size, built in parallel.
pub fn build_curves(
    fit: &ChinchillaFit,
    crit_law: &BatchScalingLaw,
    loss_target: f64,
    n_grid: &[f64],
) -> Result<Vec<IsoLossCurve>, FrontierError> {
    n_grid
        .par_iter()
        .map(|&n| IsoLossCurve::build(fit, crit_law, loss_target, n, None))
        .collect()
}

/// The compute-optimal model size on the `loss_target` contour, found by
/// minimizing `N * D_min(N)` over `ln N`.
pub fn contour_optimum(fit: &ChinchillaFit, loss_target: f64) -> Result<f64, FrontierError> {
    // the floor rises as N shrinks; find the smallest admissible ln N first
    let gap = loss_target - fit.irreducible;
    if !(gap > 0.0) {
        return Err(FrontierError::BelowModelFloor {
            target: loss_target,
            floor: fit.irreducible,
            n_params: f64::INFINITY,
        });
    }
    let ln_n_min = (fit.n_const / gap).ln() / fit.alpha;
    let cost = |ln_n: f64| match contour_dmin(fit, loss_target, ln_n.exp()) {
        Ok(d) => ln_n + d.ln(),
        Err(_) => f64::INFINITY,
    };
    let (x, _) = golden_section(cost, ln_n_min + 1e-9, ln_n_min + 60.0, 400);
    Ok(x.exp())
}

/// Computes every point's time and flags dominated points. Output is sorted
/// by `(time, c_plus)`.
pub fn mark_dominance(curves: &[IsoLossCurve], model: TimeModel) -> Result<Vec<ParetoPoint>, FrontierError> {
    if let Some(first) = curves.first() {
        for c in curves {
            let scale = first.loss_target.abs().max(1.0);
            if (c.loss_target - first.loss_target).abs() > 1e-12 * scale {
                return Err(FrontierError::MixedLossTargets(first.loss_target, c.loss_target));
            }
        }
    }
    let mut all: Vec<ParetoPoint> = curves
        .iter()
        .flat_map(|c| c.points.iter().copied())
        .map(|mut p| {
            p.time = Some(p.time_under(model));
            p
        })
        .collect();
    all.sort_by(|a, b| {
        a.time
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.time.unwrap_or(f64::INFINITY))
            .then(a.c_plus.total_cmp(&b.c_plus))
    });
    let mut best_c = f64::INFINITY;
    for p in &mut all {
        if p.c_plus < best_c * (1.0 - TIE_TOL) {
            best_c = p.c_plus;
            p.dominated = false;
        } else {
            p.dominated = true;
        }
    }
    Ok(all)
}

/// Non-dominated points over all curves, ordered by time.
pub fn pareto_frontier(curves: &[IsoLossCurve], model: TimeModel) -> Result<Vec<ParetoPoint>, FrontierError> {
    Ok(mark_dominance(curves, model)?
        .into_iter()
        .filter(|p| !p.dominated)
        .collect())
}

pub const POINT_CSV_HEADER: [&str; 7] = [
    "n_params",
    "base_tpp",
    "b_sequences",
    "c_plus",
    "time",
    "actual_tpp",
    "on_frontier",
];

pub fn write_points_csv<W: Write>(points: &[ParetoPoint], writer: W) -> Result<(), FrontierError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(POINT_CSV_HEADER)?;
    for p in points {
        wtr.write_record([
            p.n_params.to_string(),
            p.base_tpp().to_string(),
            p.b.to_string(),
            p.c_plus.to_string(),
            p.time.map(|t| t.to_string()).unwrap_or_default(),
            p.actual_tpp.to_string(),
            (!p.dominated).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch_laws::BatchUnits;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn planted() -> ChinchillaFit {
        ChinchillaFit::new(1.8, 400.0, 0.313, 410.0, 0.282)
    }

    fn crit() -> BatchScalingLaw {
        BatchScalingLaw::from_constants(LawKind::BcritInDmin, 0.0471, 0.462, BatchUnits::Sequences, 2048)
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn grid_points(fit: &ChinchillaFit, ns: &[f64], tpps: &[f64]) -> Vec<(f64, f64, f64)> {
        let mut pts = Vec::new();
        for &n in ns {
            for &t in tpps {
                pts.push((n, n * t, fit.predict(n, n * t)));
            }
        }
        pts
    }

    #[test]
    fn recovers_planted_surface_noiseless() {
        let truth = planted();
        let pts = grid_points(&truth, &[1e8, 4e8, 1.6e9], &[5.0, 20.0, 80.0, 320.0]);
        let fit = fit_chinchilla(&pts).unwrap();
        assert!(rel(fit.alpha, truth.alpha) < 1e-3, "{fit:?}");
        assert!(rel(fit.beta, truth.beta) < 1e-3, "{fit:?}");
        assert!(rel(fit.irreducible, truth.irreducible) < 1e-3, "{fit:?}");
        assert!(rel(fit.n_const, truth.n_const) < 1e-3, "{fit:?}");
        assert!(rel(fit.d_const, truth.d_const) < 1e-3, "{fit:?}");
    }

    #[test]
    fn noisy_surface_exponents_close() {
        let truth = planted();
        let noise = Normal::new(0.0, 0.002).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = grid_points(&truth, &[5e7, 1.5e8, 4.5e8, 1.35e9, 4e9], &[2.5, 10.0, 40.0, 160.0, 640.0])
            .into_iter()
            .map(|(n, d, l)| (n, d, l + noise.sample(&mut rng)))
            .collect();
        let fit = fit_chinchilla(&pts).unwrap();
        assert!((fit.alpha - 0.313).abs() < 0.03, "{fit:?}");
        assert!((fit.beta - 0.282).abs() < 0.03, "{fit:?}");
    }

    #[test]
    fn fit_rejects_degenerate_designs() {
        let truth = planted();
        let one_n = grid_points(&truth, &[1e8], &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        assert!(matches!(fit_chinchilla(&one_n), Err(FrontierError::RankDeficient(_))));
        let few = grid_points(&truth, &[1e8, 2e8], &[1.0, 2.0]);
        assert!(matches!(fit_chinchilla(&few), Err(FrontierError::TooFewPoints(4))));
    }

    #[test]
    fn contour_inverts_surface() {
        let f = planted();
        let (n, d) = (3e8, 7e9);
        let l = f.predict(n, d);
        assert!(rel(contour_dmin(&f, l, n).unwrap(), d) < 1e-9);
        let floor = f.model_floor(n);
        assert!(matches!(
            contour_dmin(&f, floor, n),
            Err(FrontierError::BelowModelFloor { .. })
        ));
        // no model-size term: plain inversion of E + D_const D^-beta
        let flat = ChinchillaFit::new(2.0, 0.0, 0.3, 50.0, 0.25);
        let expect = (50.0f64 / (2.5 - 2.0)).powf(1.0 / 0.25);
        assert!(rel(contour_dmin(&flat, 2.5, 1e9).unwrap(), expect) < 1e-12);
    }

    #[test]
    fn symmetric_surface_allocates_evenly() {
        let f = ChinchillaFit::new(1.5, 300.0, 0.3, 300.0, 0.3);
        let c = 6e20;
        let a = compute_optimal_allocation(&f, c).unwrap();
        assert!(rel(a.n_opt, (c / 6.0).sqrt()) < 1e-12);
        assert!(rel(a.d_opt, (c / 6.0).sqrt()) < 1e-12);
        assert!((a.tpp_opt - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planted_twenty_tpp_optimum_round_trips() {
        let (alpha, beta, e, l) = (0.313, 0.282, 1.8, 2.6);
        let (n_star, tpp): (f64, f64) = (1e9, 20.6);
        let d_star = n_star * tpp;
        // stationarity of L under 6ND = C: alpha * a = beta * b, a + b = L - E
        let a = (l - e) / (1.0 + alpha / beta);
        let b = alpha * a / beta;
        let f = ChinchillaFit::new(e, a * n_star.powf(alpha), alpha, b * d_star.powf(beta), beta);
        let c = 6.0 * n_star * d_star;
        let alloc = compute_optimal_allocation(&f, c).unwrap();
        assert!(rel(alloc.tpp_opt, tpp) < 1e-12, "{}", alloc.tpp_opt);
        assert!(rel(alloc.n_opt, n_star) < 1e-12);
        assert!((alloc.loss - l).abs() < 1e-12);
        assert!(rel(compute_for_loss(&f, l).unwrap(), c) < 1e-9);
        assert!(rel(contour_optimum(&f, l).unwrap(), n_star) < 1e-6);
    }

    #[test]
    fn flops_plus_reference_values() {
        let law = crit();
        let (n, d_min) = (266e6, 80.0 * 266e6);
        let bc = law.predict_sequences(d_min);
        let base = 6.0 * n * d_min;
        assert_eq!(flops_plus(n, d_min, 0.0, &law).unwrap(), base);
        assert!(rel(flops_plus(n, d_min, bc, &law).unwrap(), 2.0 * base) < 1e-15);
        assert!(rel(flops_plus(n, d_min, 2.0 * bc, &law).unwrap(), 3.0 * base) < 1e-15);
        assert!(rel(batch_for_budget(n, d_min, 2.0 * base, &law).unwrap(), bc) < 1e-15);
        assert_eq!(batch_for_budget(n, d_min, base, &law).unwrap(), 0.0);
        assert!(matches!(
            batch_for_budget(n, d_min, 0.5 * base, &law),
            Err(FrontierError::BudgetBelowBase { .. })
        ));
        let wrong = BatchScalingLaw::from_constants(LawKind::BoptInD, 0.0471, 0.462, BatchUnits::Sequences, 2048);
        assert!(matches!(flops_plus(n, d_min, 1.0, &wrong), Err(FrontierError::UnitMismatch(_))));
        // a token-denominated law gives the same answer
        let tokens = BatchScalingLaw::from_constants(LawKind::BcritInDmin, 0.0471 * 2048.0, 0.462, BatchUnits::Tokens, 2048);
        assert!(rel(flops_plus(n, d_min, bc, &tokens).unwrap(), 2.0 * base) < 1e-14);
    }

    #[test]
    fn single_curve_frontier_is_a_staircase() {
        let f = planted();
        let curve = IsoLossCurve::build(&f, &crit(), 2.7, 5e8, Some(64.0)).unwrap();
        assert_eq!(curve.points[0].b, 64.0);
        assert_eq!(curve.points[0].c_plus, 6.0 * 5e8 * curve.base_dmin);
        assert!(curve.points.windows(2).all(|w| w[0].b < w[1].b));
        let front = pareto_frontier(&[curve.clone()], TimeModel::FlopsPerBatch).unwrap();
        // along one curve larger B is always faster and costlier
        assert_eq!(front.len(), curve.points.len());
        assert!(front.iter().any(|p| p.b == 64.0));
        for w in front.windows(2) {
            assert!(w[0].time <= w[1].time && w[0].c_plus > w[1].c_plus);
        }
    }

    #[test]
    fn actual_tpp_doubles_at_bcrit() {
        let law = crit();
        let f = planted();
        let curve = IsoLossCurve::build(&f, &law, 2.7, 5e8, None).unwrap();
        let p = curve.points[0];
        let bc = law.predict_sequences(p.d_min);
        let at_crit = p.d_min * (1.0 + bc / bc) / p.n_params;
        assert_eq!(at_crit, 2.0 * p.base_tpp());
        for q in &curve.points {
            assert!(q.c_plus >= 6.0 * q.n_params * q.d_min);
            assert!(rel(q.actual_tpp, crate::batch_laws::extra_data(q.d_min, bc, q.b).unwrap() / q.n_params) < 1e-12);
        }
    }

    #[test]
    fn mixed_targets_rejected() {
        let f = planted();
        let a = IsoLossCurve::build(&f, &crit(), 2.7, 5e8, None).unwrap();
        let b = IsoLossCurve::build(&f, &crit(), 2.8, 5e8, None).unwrap();
        assert!(matches!(
            pareto_frontier(&[a, b], TimeModel::Steps),
            Err(FrontierError::MixedLossTargets(..))
        ));
    }

    #[test]
    fn frontier_csv_header() {
        let f = planted();
        let curves = build_curves(&f, &crit(), 2.7, &[3e8, 6e8]).unwrap();
        let pts = mark_dominance(&curves, TimeModel::Steps).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_params,base_tpp,b_sequences,c_plus,time,actual_tpp,on_frontier\n"));
        assert_eq!(text.lines().count(), 1 + 2 * CURVE_MULTIPLIERS);
    }

    fn dominates(q: &ParetoPoint, p: &ParetoPoint) -> bool {
        let (tq, tp) = (q.time.unwrap(), p.time.unwrap());
        tq <= tp && q.c_plus <= p.c_plus && (tq < tp || q.c_plus < p.c_plus)
    }

    proptest! {
        #[test]
        fn budget_round_trip(n in 1e7f64..1e11, tpp in 0.5f64..500.0, k in 1.0f64..100.0) {
            let law = crit();
            let d_min = n * tpp;
            let c_hat = k * 6.0 * n * d_min;
            let b = batch_for_budget(n, d_min, c_hat, &law).unwrap();
            prop_assert!(rel(flops_plus(n, d_min, b, &law).unwrap(), c_hat) <= 1e-12);
        }

        #[test]
        fn contour_decreases_in_model_size(n in 1e9f64..1e11, k in 1.01f64..10.0) {
            let f = planted();
            let l = 2.9;
            prop_assert!(contour_dmin(&f, l, k * n).unwrap() < contour_dmin(&f, l, n).unwrap());
        }

        #[test]
        fn doubling_compute_scales_model_size(c in 1e18f64..1e24, alpha in 0.1f64..0.6, beta in 0.1f64..0.6) {
            let f = ChinchillaFit::new(1.7, 350.0, alpha, 420.0, beta);
            let a = compute_optimal_allocation(&f, c).unwrap();
            let b = compute_optimal_allocation(&f, 2.0 * c).unwrap();
            prop_assert!(rel(b.n_opt / a.n_opt, 2f64.powf(beta / (alpha + beta))) <= 1e-12);
        }

        #[test]
        fn frontier_is_non_dominated(loss in 2.5f64..3.0, timeb in any::<bool>()) {
            let f = planted();
            let model = if timeb { TimeModel::Steps } else { TimeModel::FlopsPerBatch };
            let n_grid = log_space(2e9, 2e11, 6);
            let curves = build_curves(&f, &crit(), loss, &n_grid).unwrap();
            let front = pareto_frontier(&curves, model).unwrap();
            prop_assert!(!front.is_empty());
            for p in &front {
                for q in &front {
                    prop_assert!(!dominates(q, p));
                }
            }
        }
    }
}
