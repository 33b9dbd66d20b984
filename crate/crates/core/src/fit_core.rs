//! Curve-fitting primitives shared by the law modules.
//!
//! Four model families are supported:
//!
//! * pure power laws `y = c * x^m`, fit by ordinary least squares in log-log
//!   space ([`fit_power_law`]), with subsample-bootstrap quantiles of the
//!   exponent ([`bootstrap_exponent`]);
//! * saturating power laws `L(D) = E + D_const * D^-beta`, fit in loss space
//!   ([`fit_saturating_law`]) and inverted with [`invert_saturating`];
//! * parabolas in `(ln x, ln L)`, whose analytic vertex gives an optimum
//!   ([`fit_log_parabola_min`]);
//! * the data/steps hyperbola `(S/S_min - 1)(D/D_min - 1) = 1`
//!   ([`fit_hyperbolic_tradeoff`]).

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{grid_then_golden, lin_space, log_space, quantile_sorted};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("non-positive {what}: {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("no saturating law improves on a flat fit")]
    NoDescent,
    #[error("loss target {target} is not above the irreducible loss {irreducible}")]
    TargetBelowIrreducible { target: f64, irreducible: f64 },
    #[error("log-space parabola has no interior minimum (curvature {curvature})")]
    NoInteriorMinimum { curvature: f64 },
    #[error("step counts must be positive (got {value})")]
    InfeasibleSmin { value: f64 },
    #[error("invalid bootstrap configuration: {0}")]
    InvalidBootstrap(String),
}

/// `y = coeff * x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub coeff: f64,
    pub exponent: f64,
    /// Coefficient of determination of the log-log regression.
    pub r_squared: f64,
    pub n_points: usize,
    pub exp_q10: Option<f64>,
    pub exp_q90: Option<f64>,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.coeff * x.powf(self.exponent)
    }

    /// Inverse of [`PowerLawFit::predict`].
    pub fn invert(&self, y: f64) -> f64 {
        (y / self.coeff).powf(1.0 / self.exponent)
    }
}

/// `L(D) = irreducible + scale * D^-beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturatingLawFit {
    pub irreducible: f64,
    pub scale: f64,
    pub beta: f64,
    /// Loss-space coefficient of determination.
    pub r_squared: f64,
    pub fit_domain: (f64, f64),
}

impl SaturatingLawFit {
    pub fn predict(&self, d: f64) -> f64 {
        self.irreducible + self.scale * d.powf(-self.beta)
    }
}

/// Fitted data/steps tradeoff `D(S) = d_min * (1 + s_min / (S - s_min))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffFit {
    pub d_min: f64,
    pub s_min: f64,
    pub r_squared_log: f64,
}

impl TradeoffFit {
    /// Critical batch size in tokens, `d_min / s_min`.
    pub fn b_crit(&self) -> f64 {
        self.d_min / self.s_min
    }

    /// Tokens needed when training for `steps` optimizer steps.
    pub fn data_at_steps(&self, steps: f64) -> f64 {
        self.d_min * (1.0 + self.s_min / (steps - self.s_min))
    }
}

/// Subsample-bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Fraction of points kept (without replacement) in each resample.
    pub frac: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            frac: 0.8,
            iters: 1000,
            seed: 0,
        }
    }
}

/// Result of inverting a saturating law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub d_tokens: f64,
    /// True when the result lies outside the law's fit domain.
    pub extrapolated: bool,
}

fn check_positive(what: &'static str, value: f64) -> Result<(), FitError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FitError::NonPositive { what, value })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    for &(x, y) in points {
        check_positive("x", x)?;
        check_positive("y", y)?;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 || lx.iter().all(|&x| x == lx[0]) {
        return Err(FitError::DegenerateInput("all x values are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerLawFit {
        coeff: intercept.exp(),
        exponent: slope,
        r_squared,
        n_points: points.len(),
        exp_q10: None,
        exp_q90: None,
    })
}

/// Refits the power law on `ceil(frac * n)`-point subsets drawn without
/// replacement and returns the 10th and 90th percentiles of the exponent.
///
/// Iteration `i` draws from a ChaCha8 stream seeded by `cfg.seed` with stream
/// id `i`, so results do not depend on thread scheduling.
pub fn bootstrap_exponent(points: &[(f64, f64)], cfg: &BootstrapConfig) -> Result<(f64, f64), FitError> {
    if points.len() < 5 {
        return Err(FitError::TooFewPoints {
            needed: 5,
            got: points.len(),
        });
    }
    if !(cfg.frac > 0.0 && cfg.frac <= 1.0) {
        return Err(FitError::InvalidBootstrap(format!("frac {} not in (0, 1]", cfg.frac)));
    }
    if cfg.iters == 0 {
        return Err(FitError::InvalidBootstrap("iters must be positive".into()));
    }
    // validates positivity and distinctness once up front
    fit_power_law(points)?;

    let n = points.len();
    let m = ((cfg.frac * n as f64).ceil() as usize).clamp(2, n);
    let mut exponents: Vec<f64> = (0..cfg.iters)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let idx = rand::seq::index::sample(&mut rng, n, m);
            let subset: Vec<(f64, f64)> = idx.iter().map(|j| points[j]).collect();
            fit_power_law(&subset).ok().map(|f| f.exponent)
        })
        .collect();
    if exponents.is_empty() {
        return Err(FitError::DegenerateInput("every resample was degenerate".into()));
    }
    exponents.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&exponents, 0.1), quantile_sorted(&exponents, 0.9)))
}

/// [`fit_power_law`] with bootstrap quantiles attached when at least five
/// points are available.
pub fn fit_power_law_with_bootstrap(points: &[(f64, f64)], cfg: &BootstrapConfig) -> Result<PowerLawFit, FitError> {
    let mut fit = fit_power_law(points)?;
    if points.len() >= 5 {
        let (q10, q90) = bootstrap_exponent(points, cfg)?;
        fit.exp_q10 = Some(q10);
        fit.exp_q90 = Some(q90);
    }
    Ok(fit)
}

struct SaturatingProblem {
    ln_d: Vec<f64>,
    loss: Vec<f64>,
    ln_d_ref: f64,
    e_cap: f64,
}

impl SaturatingProblem {
    /// Best `(E, D_const)` for fixed `beta`, with `E` clamped into
    /// `[0, min L)`. Returns `(E, D_const, ssr)`.
    fn profile(&self, beta: f64) -> Option<(f64, f64, f64)> {
        if !(beta > 0.0 && beta.is_finite()) {
            return None;
        }
        // x scaled so the smallest D maps to 1
        let xs: Vec<f64> = self
            .ln_d
            .iter()
            .map(|l| (-beta * (l - self.ln_d_ref)).exp())
            .collect();
        let (mx, my) = (mean(&xs), mean(&self.loss));
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx <= 0.0 {
            return None;
        }
        let sxy: f64 = xs.iter().zip(&self.loss).map(|(x, y)| (x - mx) * (y - my)).sum();
        let mut slope = sxy / sxx;
        let mut e = my - slope * mx;
        if !(0.0..=self.e_cap).contains(&e) {
            e = e.clamp(0.0, self.e_cap);
            let sx2: f64 = xs.iter().map(|x| x * x).sum();
            slope = xs.iter().zip(&self.loss).map(|(x, y)| x * (y - e)).sum::<f64>() / sx2;
        }
        if !(slope > 0.0) {
            return None;
        }
        let ssr: f64 = xs
            .iter()
            .zip(&self.loss)
            .map(|(x, y)| (y - e - slope * x).powi(2))
            .sum();
        let scale = slope * (beta * self.ln_d_ref).exp();
        Some((e, scale, ssr))
    }

    fn ssr_params(&self, e: f64, scale: f64, beta: f64) -> f64 {
        self.ln_d
            .iter()
            .zip(&self.loss)
            .map(|(l, y)| (y - e - scale * (-beta * l).exp()).powi(2))
            .sum()
    }
}

/// Fits `L(D) = E + D_const * D^-beta` by least squares in loss space.
///
/// Starts from 32 values of `E` spread over `[0, min L)`, each solved for
/// `(D_const, beta)` by log-linear regression on `L - E`; the best start is
/// then refined by a profile search over `beta` in which `(E, D_const)` are
/// solved exactly for each candidate `beta`.
pub fn fit_saturating_law(points: &[(f64, f64)]) -> Result<SaturatingLawFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    for &(d, l) in points {
        check_positive("D", d)?;
        check_positive("loss", l)?;
    }
    let mut ds: Vec<f64> = points.iter().map(|p| p.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    if ds.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: ds.len(),
        });
    }

    let loss: Vec<f64> = points.iter().map(|p| p.1).collect();
    let min_loss = loss.iter().copied().fold(f64::INFINITY, f64::min);
    let ln_d: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let problem = SaturatingProblem {
        ln_d_ref: ds[0].ln(),
        ln_d,
        loss: loss.clone(),
        e_cap: min_loss * (1.0 - 1e-12),
    };

    // grid starts
    let mut starts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(32);
    for k in 0..32 {
        let e = min_loss * k as f64 / 32.0;
        let pts: Vec<(f64, f64)> = points.iter().map(|&(d, l)| (d, l - e)).collect();
        if let Ok(pl) = fit_power_law(&pts) {
            let beta = -pl.exponent;
            if beta > 0.0 {
                let ssr = problem.ssr_params(e, pl.coeff, beta);
                starts.push((e, pl.coeff, beta, ssr));
            }
        }
    }

    let mut ln_betas: Vec<f64> = log_space(1e-3, 4.0, 241).iter().map(|b| b.ln()).collect();
    ln_betas.extend(starts.iter().map(|s| s.2.ln()));
    ln_betas.sort_by(f64::total_cmp);
    ln_betas.dedup();
    let objective = |lb: f64| problem.profile(lb.exp()).map_or(f64::INFINITY, |p| p.2);
    let (ln_beta, _) = grid_then_golden(objective, &ln_betas, 300);

    let mut best: Option<(f64, f64, f64, f64)> = problem
        .profile(ln_beta.exp())
        .map(|(e, scale, ssr)| (e, scale, ln_beta.exp(), ssr));
    for s in &starts {
        if best.is_none_or(|b| s.3 < b.3) {
            best = Some(*s);
        }
    }
    let (e, scale, beta, ssr) = best.ok_or(FitError::NoDescent)?;

    let my = mean(&loss);
    let flat: f64 = loss.iter().map(|y| (y - my).powi(2)).sum();
    if ssr >= flat {
        return Err(FitError::NoDescent);
    }
    Ok(SaturatingLawFit {
        irreducible: e,
        scale,
        beta,
        r_squared: 1.0 - ssr / flat,
        fit_domain: (ds[0], ds[ds.len() - 1]),
    })
}

/// Tokens needed to reach `loss_target` under a fitted saturating law.
pub fn invert_saturating(fit: &SaturatingLawFit, loss_target: f64) -> Result<Inversion, FitError> {
    if !(loss_target > fit.irreducible) {
        return Err(FitError::TargetBelowIrreducible {
            target: loss_target,
            irreducible: fit.irreducible,
        });
    }
    let d = (fit.scale / (loss_target - fit.irreducible)).powf(1.0 / fit.beta);
    let (lo, hi) = fit.fit_domain;
    Ok(Inversion {
        d_tokens: d,
        extrapolated: d < lo || d > hi,
    })
}

/// Least-squares parabola in `(ln x, ln L)`; returns the `x` at its vertex.
///
/// When several points share an `x`, only the lowest loss is kept. A vertex
/// outside the sampled `x` range counts as no interior minimum.
pub fn fit_log_parabola_min(points: &[(f64, f64)]) -> Result<f64, FitError> {
    for &(x, l) in points {
        check_positive("x", x)?;
        check_positive("loss", l)?;
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sorted.dedup_by(|later, earlier| later.0 == earlier.0);
    if sorted.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: sorted.len(),
        });
    }

    let u: Vec<f64> = sorted.iter().map(|p| p.0.ln()).collect();
    let v: Vec<f64> = sorted.iter().map(|p| p.1.ln()).collect();
    let mu = mean(&u);
    let su = (u.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / u.len() as f64).sqrt();
    let t: Vec<f64> = u.iter().map(|x| (x - mu) / su).collect();

    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (ti, vi) in t.iter().zip(&v) {
        let row = Vector3::new(ti * ti, *ti, 1.0);
        ata += row * row.transpose();
        atb += row * *vi;
    }
    let coef = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| FitError::DegenerateInput("singular parabola system".into()))?;
    let (a, b) = (coef[0], coef[1]);
    if !(a > 0.0) {
        return Err(FitError::NoInteriorMinimum { curvature: a });
    }
    let t_star = -b / (2.0 * a);
    // a convex fit to monotone data puts its vertex off the sampled range
    if t_star < t[0] || t_star > t[t.len() - 1] {
        return Err(FitError::NoInteriorMinimum { curvature: a });
    }
    Ok((mu + su * t_star).exp())
}

fn logistic(q: f64) -> f64 {
    if q >= 0.0 {
        1.0 / (1.0 + (-q).exp())
    } else {
        let e = q.exp();
        e / (1.0 + e)
    }
}

/// Fits `D = d_min * (1 + s_min / (S - s_min))` to `(D, S)` pairs in log
/// space.
///
/// For each candidate `s_min < min S` the optimal `ln d_min` is closed-form,
/// so only a one-dimensional search over `s_min` remains.
pub fn fit_hyperbolic_tradeoff(pairs: &[(f64, f64)]) -> Result<TradeoffFit, FitError> {
    if pairs.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: pairs.len(),
        });
    }
    for &(d, s) in pairs {
        check_positive("D", d)?;
        if !(s > 0.0 && s.is_finite()) {
            return Err(FitError::InfeasibleSmin { value: s });
        }
    }
    let mut by_steps = pairs.to_vec();
    by_steps.sort_by(|a, b| a.1.total_cmp(&b.1));
    if by_steps.windows(2).any(|w| w[1].0 >= w[0].0) {
        log::warn!("tradeoff pairs are not strictly decreasing in D as S grows; fitting anyway");
    }

    let min_s = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ln_d: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ln_s: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    // s_min = min_s * logistic(q); S - s_min is formed without cancellation
    let residuals = |q: f64| -> (f64, f64) {
        let tail = min_s * logistic(-q);
        let r: Vec<f64> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(_, s))| ln_d[i] - ln_s[i] + ((s - min_s) + tail).ln())
            .collect();
        let m = mean(&r);
        (m, r.iter().map(|x| (x - m).powi(2)).sum())
    };
    let grid = lin_space(-40.0, 40.0, 801);
    let (q, ssr) = grid_then_golden(|q| residuals(q).1, &grid, 300);
    let (ln_dmin, _) = residuals(q);

    let md = mean(&ln_d);
    let sst: f64 = ln_d.iter().map(|x| (x - md).powi(2)).sum();
    Ok(TradeoffFit {
        d_min: ln_dmin.exp(),
        s_min: min_s * logistic(q),
        r_squared_log: if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn power_law_exact_recovery() {
        let pts: Vec<_> = [1.0, 4.0, 9.0, 16.0].iter().map(|&x: &f64| (x, 2.0 * x.sqrt())).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.coeff - 2.0).abs() < 1e-12);
        assert!((fit.exponent - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 4);
    }

    #[test]
    fn power_law_rejects_repeated_x() {
        let pts = [(3.0, 1.0), (3.0, 2.0), (3.0, 5.0)];
        assert!(matches!(fit_power_law(&pts), Err(FitError::DegenerateInput(_))));
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (0.0, 2.0)]),
            Err(FitError::NonPositive { .. })
        ));
    }

    #[test]
    fn power_law_noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::<f64>::new(0.0, 0.05).unwrap();
        let pts: Vec<_> = log_space(1e6, 1e9, 40)
            .into_iter()
            .map(|x| (x, 0.0471 * x.powf(0.462) * noise.sample(&mut rng).exp()))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent - 0.462).abs() < 0.02, "{}", fit.exponent);
    }

    #[test]
    fn bootstrap_on_exact_points_has_zero_width() {
        let pts: Vec<_> = log_space(1.0, 1e3, 8).into_iter().map(|x| (x, 3.0 * x.powf(-0.7))).collect();
        let (q10, q90) = bootstrap_exponent(&pts, &BootstrapConfig::default()).unwrap();
        assert!((q10 + 0.7).abs() < 1e-9 && (q90 + 0.7).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_interval_brackets_planted_exponent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::<f64>::new(0.0, 0.05).unwrap();
        let pts: Vec<_> = log_space(1.0, 1e3, 20)
            .into_iter()
            .map(|x| (x, 1.1 * x.powf(-0.518) * noise.sample(&mut rng).exp()))
            .collect();
        let cfg = BootstrapConfig { seed: 7, ..Default::default() };
        let (q10, q90) = bootstrap_exponent(&pts, &cfg).unwrap();
        assert!(q10 <= -0.518 && -0.518 <= q90, "({q10}, {q90})");
        // same seed, same answer
        assert_eq!(bootstrap_exponent(&pts, &cfg).unwrap(), (q10, q90));
    }

    #[test]
    fn bootstrap_needs_five_points() {
        let pts: Vec<_> = (1..=4).map(|i| (i as f64, i as f64)).collect();
        assert_eq!(
            bootstrap_exponent(&pts, &BootstrapConfig::default()),
            Err(FitError::TooFewPoints { needed: 5, got: 4 })
        );
    }

    #[test]
    fn saturating_exact_recovery() {
        let pts: Vec<_> = [1e8, 1e9, 1e10, 1e11]
            .iter()
            .map(|&d: &f64| (d, 2.0 + 10.0 * d.powf(-0.5)))
            .collect();
        let fit = fit_saturating_law(&pts).unwrap();
        assert!(rel(fit.irreducible, 2.0) < 1e-6, "{fit:?}");
        assert!(rel(fit.scale, 10.0) < 1e-6, "{fit:?}");
        assert!(rel(fit.beta, 0.5) < 1e-6, "{fit:?}");
        assert_eq!(fit.fit_domain, (1e8, 1e11));
    }

    #[test]
    fn saturating_pure_power_law_boundary() {
        let pts: Vec<_> = [1e8, 1e9, 1e10, 1e11]
            .iter()
            .map(|&d: &f64| (d, 410.0 * d.powf(-0.282)))
            .collect();
        let fit = fit_saturating_law(&pts).unwrap();
        assert!(fit.irreducible <= 1e-6, "{fit:?}");
        assert!((fit.beta - 0.282).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn saturating_needs_three_points() {
        let pts = [(1e8, 3.0), (1e9, 2.5)];
        assert!(matches!(fit_saturating_law(&pts), Err(FitError::TooFewPoints { .. })));
    }

    #[test]
    fn saturating_rejects_increasing_losses() {
        let pts = [(1e8, 2.0), (1e9, 2.5), (1e10, 3.0)];
        assert_eq!(fit_saturating_law(&pts), Err(FitError::NoDescent));
    }

    #[test]
    fn saturating_beats_every_grid_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = log_space(1e8, 1e11, 7)
            .into_iter()
            .map(|d| (d, 1.9 + 300.0 * d.powf(-0.3) + rng.random_range(-0.003..0.003)))
            .collect();
        let fit = fit_saturating_law(&pts).unwrap();
        let ssr = |e: f64, s: f64, b: f64| -> f64 { pts.iter().map(|&(d, l)| (l - e - s * d.powf(-b)).powi(2)).sum() };
        let best = ssr(fit.irreducible, fit.scale, fit.beta);
        let min_l = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        for k in 0..32 {
            let e = min_l * k as f64 / 32.0;
            let shifted: Vec<_> = pts.iter().map(|&(d, l)| (d, l - e)).collect();
            let pl = fit_power_law(&shifted).unwrap();
            assert!(best <= ssr(e, pl.coeff, -pl.exponent) * (1.0 + 1e-12));
        }
        assert!(fit.irreducible < min_l);
    }

    #[test]
    fn invert_hand_example() {
        let fit = SaturatingLawFit {
            irreducible: 2.0,
            scale: 10.0,
            beta: 0.5,
            r_squared: 1.0,
            fit_domain: (1e3, 1e5),
        };
        let inv = invert_saturating(&fit, 2.1).unwrap();
        assert!(rel(inv.d_tokens, 1e4) < 1e-12);
        assert!(!inv.extrapolated);
        assert!(invert_saturating(&fit, 2.5).unwrap().extrapolated);
        assert!(matches!(
            invert_saturating(&fit, 2.0),
            Err(FitError::TargetBelowIrreducible { .. })
        ));
    }

    #[test]
    fn invert_round_trips_fitted_law() {
        let pts: Vec<_> = log_space(1e8, 1e11, 5)
            .into_iter()
            .map(|d| (d, 1.7 + 90.0 * d.powf(-0.25)))
            .collect();
        let fit = fit_saturating_law(&pts).unwrap();
        let d_star = 3.3e9;
        let inv = invert_saturating(&fit, fit.predict(d_star)).unwrap();
        assert!(rel(inv.d_tokens, d_star) < 1e-9);
    }

    /// Vertex of the parabola through three points, by Lagrange form.
    fn three_point_vertex(p: [(f64, f64); 3]) -> f64 {
        let [(x0, y0), (x1, y1), (x2, y2)] = p;
        let num = y0 * (x1 * x1 - x2 * x2) + y1 * (x2 * x2 - x0 * x0) + y2 * (x0 * x0 - x1 * x1);
        let den = y0 * (x1 - x2) + y1 * (x2 - x0) + y2 * (x0 - x1);
        num / (2.0 * den)
    }

    #[test]
    fn log_parabola_symmetric_points() {
        let x = fit_log_parabola_min(&[(0.1, 3.0), (1.0, 2.0), (10.0, 3.0)]).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_parabola_matches_three_point_oracle() {
        let pts = [(0.5, 2.61), (1.3, 2.58), (4.0, 2.60)];
        let ln_pts = pts.map(|(x, l): (f64, f64)| (x.ln(), l.ln()));
        let expected = three_point_vertex(ln_pts).exp();
        let got = fit_log_parabola_min(&pts).unwrap();
        assert!(rel(got, expected) < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn log_parabola_rejects_monotone() {
        let pts = [(1.0, 3.0), (2.0, 2.5), (4.0, 2.2), (8.0, 2.1)];
        assert!(matches!(fit_log_parabola_min(&pts), Err(FitError::NoInteriorMinimum { .. })));
        assert!(matches!(
            fit_log_parabola_min(&[(1.0, 2.0), (1.0, 1.9), (2.0, 2.0)]),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn log_parabola_noisy_vertex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::<f64>::new(0.0, 1e-4).unwrap();
        let pts: Vec<_> = lin_space(-1.5, 3.0, 10)
            .into_iter()
            .map(|u| (u.exp(), (0.9 + 0.05 * (u - 0.7).powi(2) + noise.sample(&mut rng)).exp()))
            .collect();
        let x = fit_log_parabola_min(&pts).unwrap();
        assert!(rel(x, 0.7f64.exp()) < 0.01, "{x}");
    }

    #[test]
    fn log_parabola_keeps_lowest_duplicate() {
        let base = [(0.1, 3.0), (1.0, 2.0), (10.0, 3.0)];
        let mut with_dup = base.to_vec();
        with_dup.push((1.0, 2.5));
        with_dup.push((10.0, 3.3));
        assert_eq!(fit_log_parabola_min(&with_dup).unwrap(), fit_log_parabola_min(&base).unwrap());
    }

    fn hyperbola_pairs(d_min: f64, s_min: f64, batches: &[f64]) -> Vec<(f64, f64)> {
        let b_crit = d_min / s_min;
        batches
            .iter()
            .map(|&b| {
                let d = d_min * (1.0 + b / b_crit);
                (d, d / b)
            })
            .collect()
    }

    #[test]
    fn hyperbola_exact_recovery() {
        let batches: Vec<f64> = (0..6).map(|k| 250.0 * 2f64.powi(k)).collect();
        let pairs = hyperbola_pairs(1e9, 1e5, &batches);
        let fit = fit_hyperbolic_tradeoff(&pairs).unwrap();
        assert!(rel(fit.d_min, 1e9) < 1e-6, "{fit:?}");
        assert!(rel(fit.s_min, 1e5) < 1e-6, "{fit:?}");
        assert!(rel(fit.b_crit(), 1e4) < 1e-6);
        for &(d, s) in &pairs {
            assert!(rel(fit.data_at_steps(s), d) < 1e-6);
        }
    }

    #[test]
    fn hyperbola_noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise = Normal::<f64>::new(0.0, 0.01).unwrap();
        let batches: Vec<f64> = (0..8).map(|k| 1250.0 * 2f64.powi(k)).collect();
        let pairs: Vec<_> = hyperbola_pairs(1e9, 1e5, &batches)
            .into_iter()
            .map(|(d, s)| (d * noise.sample(&mut rng).exp(), s))
            .collect();
        let fit = fit_hyperbolic_tradeoff(&pairs).unwrap();
        assert!(rel(fit.b_crit(), 1e4) < 0.05, "{}", fit.b_crit());
    }

    #[test]
    fn hyperbola_errors() {
        assert!(matches!(
            fit_hyperbolic_tradeoff(&[(1e9, 1e5), (2e9, 3e4)]),
            Err(FitError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_hyperbolic_tradeoff(&[(1e9, 1e5), (2e9, 3e4), (3e9, 0.0)]),
            Err(FitError::InfeasibleSmin { .. })
        ));
    }

    proptest! {
        #[test]
        fn power_law_scale_equivariance(
            c in 0.01f64..100.0,
            m in -2.0f64..2.0,
            k in 0.001f64..1000.0,
            jitter in proptest::collection::vec(-0.2f64..0.2, 6),
        ) {
            let xs: [f64; 6] = [1.0, 3.0, 10.0, 30.0, 100.0, 300.0];
            let pts: Vec<_> = xs.iter().zip(&jitter).map(|(&x, j)| (x, c * x.powf(m) * j.exp())).collect();
            let scaled: Vec<_> = pts.iter().map(|&(x, y)| (k * x, y)).collect();
            let a = fit_power_law(&pts).unwrap();
            let b = fit_power_law(&scaled).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() < 1e-9);
            prop_assert!(rel(b.coeff, a.coeff * k.powf(-a.exponent)) < 1e-9);
        }

        #[test]
        fn log_parabola_invariant_to_loss_scale(k in 0.01f64..100.0, v in -1.0f64..1.0) {
            let pts: Vec<_> = lin_space(-2.0, 2.0, 7)
                .into_iter()
                .map(|u| (u.exp(), 2.5 + 0.03 * (u - v).powi(2) + 0.001 * u.powi(3)))
                .collect();
            let scaled: Vec<_> = pts.iter().map(|&(x, l)| (x, k * l)).collect();
            let a = fit_log_parabola_min(&pts).unwrap();
            let b = fit_log_parabola_min(&scaled).unwrap();
            prop_assert!(rel(a, b) < 1e-9);
        }

        #[test]
        fn hyperbola_noiseless_recovery(ln_dmin in 18.0f64..25.0, ln_bcrit in 6.0f64..16.0) {
            let d_min = ln_dmin.exp();
            let b_crit = ln_bcrit.exp();
            let batches: Vec<f64> = (0..5).map(|k| b_crit * 0.25 * 2f64.powi(k)).collect();
            let pairs = hyperbola_pairs(d_min, d_min / b_crit, &batches);
            let fit = fit_hyperbolic_tradeoff(&pairs).unwrap();
            prop_assert!(rel(fit.d_min, d_min) < 1e-6);
            prop_assert!(rel(fit.b_crit(), b_crit) < 1e-6);
        }

        #[test]
        fn saturating_inversion_is_identity_on_domain(f in 0.0f64..1.0) {
            let fit = SaturatingLawFit { irreducible: 1.8, scale: 410.0, beta: 0.282, r_squared: 1.0, fit_domain: (1e9, 1e11) };
            let d = (1e9f64.ln() + f * (1e11f64.ln() - 1e9f64.ln())).exp();
            let inv = invert_saturating(&fit, fit.predict(d)).unwrap();
            prop_assert!(rel(inv.d_tokens, d) < 1e-9);
        }
    }
}
