//! Optimal and critical batch sizes.
//!
//! The critical-batch pipeline runs in three steps: fit one saturating loss
//! law per batch size at fixed `N` ([`fit_loss_family`]), invert every law at
//! a target loss to get the tokens `D_B` each batch size needs, then fit the
//! data/steps hyperbola to the `(D_B, S = D_B / B)` pairs and read off
//! `B_crit = D_min / S_min` ([`bcrit_at_loss`]). Repeating this over targets
//! and model sizes yields points for a `B_crit(D_min)` power law
//! ([`fit_batch_scaling_law`]).
//!
//! Batch sizes are in sequences unless a name says otherwise; data is always
//! in tokens.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit_core::{
    fit_hyperbolic_tradeoff, fit_log_parabola_min, fit_power_law, fit_power_law_with_bootstrap, fit_saturating_law,
    invert_saturating, BootstrapConfig, FitError, PowerLawFit, SaturatingLawFit, TradeoffFit,
};
use crate::run_store::RunRecord;

/// How far (as a fraction of the fit domain's width in `ln D`) an inverted
/// `D_B` may fall outside its law's fit domain and still count as
/// interpolated.
pub const INTERPOLATION_SLACK: f64 = 0.10;

/// Factor between `B_zhang` (1.2x minimum data) and `B_crit` (2x).
const ZHANG_TO_BCRIT: f64 = 5.0;

const DEEPSEEK_COEFF: f64 = 0.292;
const DEEPSEEK_EXPONENT: f64 = 0.3271;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatchLawError {
    #[error("non-positive {what}: {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("batch size {batch} has {got} distinct D values; need at least 3")]
    TooFewPoints { batch: u64, got: usize },
    #[error("runs mix model sizes {0} and {1}")]
    MixedN(u64, u64),
    #[error("runs mix sequence lengths {0} and {1}")]
    MixedSeqLen(u64, u64),
    #[error("runs mix (N, D) settings: {0}")]
    MixedGroup(String),
    #[error("only {got} batch-size laws reach the target loss; need at least 3")]
    TooFewInvertible { got: usize },
    #[error("target requires extrapolation for batch sizes {0:?}")]
    ExtrapolationRejected(Vec<u64>),
    #[error("two-point estimate needs D2 != D1")]
    DegenerateRatio,
    #[error("two-point estimate gives non-positive B_crit ({0}); inputs inconsistent with the extra-data law")]
    NegativeResult(f64),
    #[error("two-point estimate needs b2 > b1 > 0 and d2 > d1 > 0")]
    InvalidOrder,
    #[error("unknown literature form `{0}` (expected zhang or deepseek)")]
    UnknownForm(String),
    #[error("D_min solve did not converge")]
    NoConvergence,
    #[error("expected a {expected:?} law, got {got:?}")]
    WrongKind { expected: LawKind, got: LawKind },
    #[error(transparent)]
    Fit(#[from] FitError),
}

fn positive(what: &'static str, value: f64) -> Result<f64, BatchLawError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BatchLawError::NonPositive { what, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchUnits {
    Sequences,
    Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawKind {
    /// Loss-optimal batch size as a function of training tokens `D`.
    #[serde(rename = "bopt-in-D")]
    BoptInD,
    /// Critical batch size as a function of minimum tokens `D_min`.
    #[serde(rename = "bcrit-in-Dmin")]
    BcritInDmin,
}

/// `B = coeff * D^exponent`, with `D` in tokens and `B` in `units`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchScalingLaw {
    pub kind: LawKind,
    pub law: PowerLawFit,
    pub units: BatchUnits,
    pub seq_len: u64,
}

impl BatchScalingLaw {
    pub fn from_constants(kind: LawKind, coeff: f64, exponent: f64, units: BatchUnits, seq_len: u64) -> Self {
        Self {
            kind,
            law: PowerLawFit {
                coeff,
                exponent,
                r_squared: 1.0,
                n_points: 0,
                exp_q10: None,
                exp_q90: None,
            },
            units,
            seq_len,
        }
    }

    pub fn predict_sequences(&self, d_tokens: f64) -> f64 {
        match self.units {
            BatchUnits::Sequences => self.law.predict(d_tokens),
            BatchUnits::Tokens => self.law.predict(d_tokens) / self.seq_len as f64,
        }
    }

    pub fn predict_tokens(&self, d_tokens: f64) -> f64 {
        match self.units {
            BatchUnits::Sequences => self.law.predict(d_tokens) * self.seq_len as f64,
            BatchUnits::Tokens => self.law.predict(d_tokens),
        }
    }

    pub fn require_kind(&self, expected: LawKind) -> Result<(), BatchLawError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(BatchLawError::WrongKind {
                expected,
                got: self.kind,
            })
        }
    }
}

/// Tokens needed at batch size `b` relative to the minimum:
/// `D = d_min * (1 + b / b_crit)`. `b` and `b_crit` share units.
pub fn extra_data(d_min: f64, b_crit: f64, b: f64) -> Result<f64, BatchLawError> {
    positive("D_min", d_min)?;
    positive("B_crit", b_crit)?;
    if !(b >= 0.0 && b.is_finite()) {
        return Err(BatchLawError::NonPositive { what: "batch size", value: b });
    }
    Ok(d_min * (1.0 + b / b_crit))
}

/// Inverts [`extra_data`] when `B_crit` itself depends on `D_min` through
/// `crit_law`: finds the `D_min` with `D = D_min * (1 + B / B_crit(D_min))`.
///
/// The map is strictly increasing in `D_min` for exponents in `(0, 1)`, so
/// bisection (in `ln D_min`) finds the unique root.
pub fn dmin_from_data(d_tokens: f64, b_sequences: f64, crit_law: &BatchScalingLaw) -> Result<f64, BatchLawError> {
    positive("D", d_tokens)?;
    if !(b_sequences >= 0.0 && b_sequences.is_finite()) {
        return Err(BatchLawError::NonPositive {
            what: "batch size",
            value: b_sequences,
        });
    }
    if b_sequences == 0.0 {
        return Ok(d_tokens);
    }
    let total = |x: f64| x * (1.0 + b_sequences / crit_law.predict_sequences(x));
    let mut lo = d_tokens / (1.0 + 2.0 * b_sequences / crit_law.predict_sequences(d_tokens));
    let mut hi = d_tokens;
    let mut widened = 0;
    while total(lo) > d_tokens {
        lo *= 0.5;
        widened += 1;
        if widened > 200 || lo <= 0.0 {
            return Err(BatchLawError::NoConvergence);
        }
    }
    for _ in 0..200 {
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > d_tokens {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    if (hi - lo) / hi > 1e-10 {
        return Err(BatchLawError::NoConvergence);
    }
    Ok(root)
}

/// Per-batch-size loss laws `L_B(D)` at fixed model size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossLawFamily {
    pub n_params: u64,
    pub seq_len: u64,
    pub laws: BTreeMap<u64, SaturatingLawFit>,
}

/// Fits one saturating law `L_B(D)` per batch size. When several runs share
/// `(B, D)` (e.g. a weight-decay sweep) the lowest loss is used. Batch sizes
/// below `min_batch` are dropped.
pub fn fit_loss_family(runs: &[RunRecord], min_batch: Option<u64>) -> Result<LossLawFamily, BatchLawError> {
    let first = runs.first().ok_or(BatchLawError::TooFewInvertible { got: 0 })?;
    let mut best: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in runs {
        if r.n_params != first.n_params {
            return Err(BatchLawError::MixedN(first.n_params, r.n_params));
        }
        if r.seq_len != first.seq_len {
            return Err(BatchLawError::MixedSeqLen(first.seq_len, r.seq_len));
        }
        if min_batch.is_some_and(|m| r.batch_sequences < m) {
            continue;
        }
        let slot = best
            .entry(r.batch_sequences)
            .or_default()
            .entry(r.d_tokens)
            .or_insert(f64::INFINITY);
        *slot = slot.min(r.val_loss);
    }
    let mut laws = BTreeMap::new();
    for (batch, by_d) in best {
        if by_d.len() < 3 {
            return Err(BatchLawError::TooFewPoints { batch, got: by_d.len() });
        }
        let points: Vec<(f64, f64)> = by_d.iter().map(|(&d, &l)| (d as f64, l)).collect();
        laws.insert(batch, fit_saturating_law(&points)?);
    }
    Ok(LossLawFamily {
        n_params: first.n_params,
        seq_len: first.seq_len,
        laws,
    })
}

/// Result of the critical-batch estimate at one target loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritPoint {
    pub loss_target: f64,
    pub d_min: f64,
    pub s_min: f64,
    pub b_crit_tokens: f64,
    pub b_crit_sequences: f64,
    pub seq_len: u64,
}

impl CritPoint {
    fn from_tradeoff(loss_target: f64, fit: &TradeoffFit, seq_len: u64) -> Self {
        let b_crit_tokens = fit.d_min / fit.s_min;
        Self {
            loss_target,
            d_min: fit.d_min,
            s_min: fit.s_min,
            b_crit_tokens,
            b_crit_sequences: b_crit_tokens / seq_len as f64,
            seq_len,
        }
    }
}

/// One `(B, D_B, S)` point on a tradeoff curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPair {
    pub batch_sequences: f64,
    pub d_tokens: f64,
    pub steps: f64,
}

/// A [`CritPoint`] together with the pairs and hyperbola it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritAnalysis {
    pub point: CritPoint,
    pub tradeoff: TradeoffFit,
    pub pairs: Vec<TradeoffPair>,
    pub n_params: u64,
}

/// Fits the hyperbola directly to `(batch_sequences, d_tokens)` pairs that
/// all reach `loss_target`.
pub fn crit_point_from_pairs(
    pairs: &[(f64, f64)],
    loss_target: f64,
    seq_len: u64,
) -> Result<CritAnalysis, BatchLawError> {
    let pairs: Vec<TradeoffPair> = pairs
        .iter()
        .map(|&(b, d)| {
            positive("batch size", b)?;
            Ok(TradeoffPair {
                batch_sequences: b,
                d_tokens: d,
                steps: d / (b * seq_len as f64),
            })
        })
        .collect::<Result<_, BatchLawError>>()?;
    let ds: Vec<(f64, f64)> = pairs.iter().map(|p| (p.d_tokens, p.steps)).collect();
    let tradeoff = fit_hyperbolic_tradeoff(&ds)?;
    Ok(CritAnalysis {
        point: CritPoint::from_tradeoff(loss_target, &tradeoff, seq_len),
        tradeoff,
        pairs,
        n_params: 0,
    })
}

/// Full critical-batch estimate at one target loss; see the module docs.
pub fn bcrit_analysis(family: &LossLawFamily, loss_target: f64) -> Result<CritAnalysis, BatchLawError> {
    let mut inverted = Vec::new();
    let mut offending = Vec::new();
    for (&batch, law) in &family.laws {
        let Ok(inv) = invert_saturating(law, loss_target) else {
            continue;
        };
        let (lo, hi) = (law.fit_domain.0.ln(), law.fit_domain.1.ln());
        let slack = INTERPOLATION_SLACK * (hi - lo);
        let x = inv.d_tokens.ln();
        if x < lo - slack || x > hi + slack {
            offending.push(batch);
        }
        inverted.push((batch as f64, inv.d_tokens));
    }
    if inverted.len() < 3 {
        return Err(BatchLawError::TooFewInvertible { got: inverted.len() });
    }
    if !offending.is_empty() {
        return Err(BatchLawError::ExtrapolationRejected(offending));
    }
    let mut analysis = crit_point_from_pairs(&inverted, loss_target, family.seq_len)?;
    analysis.n_params = family.n_params;
    Ok(analysis)
}

pub fn bcrit_at_loss(family: &LossLawFamily, loss_target: f64) -> Result<CritPoint, BatchLawError> {
    bcrit_analysis(family, loss_target).map(|a| a.point)
}

/// Output of [`two_point_bcrit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointEstimate {
    pub b_crit_sequences: f64,
    /// Implied minimum data, in the units of `d1`/`d2`.
    pub d_min: f64,
    /// The estimate is only meaningful if both runs reached the same loss;
    /// that is the caller's responsibility.
    pub assumes_equal_loss: bool,
}

/// `B_crit` from two runs that reached the same loss at batch sizes
/// `b1 < b2` using `d1 < d2` tokens: `(b2 - r b1) / (r - 1)` with
/// `r = d2 / d1`.
pub fn two_point_bcrit(b1: f64, d1: f64, b2: f64, d2: f64) -> Result<TwoPointEstimate, BatchLawError> {
    if d1 == d2 {
        return Err(BatchLawError::DegenerateRatio);
    }
    if !(b1 > 0.0 && b2 > b1 && d1 > 0.0 && d2 > d1) || ![b1, b2, d1, d2].iter().all(|v| v.is_finite()) {
        return Err(BatchLawError::InvalidOrder);
    }
    let r = d2 / d1;
    let b_crit = (b2 - r * b1) / (r - 1.0);
    if !(b_crit > 0.0) {
        return Err(BatchLawError::NegativeResult(b_crit));
    }
    Ok(TwoPointEstimate {
        b_crit_sequences: b_crit,
        d_min: d1 / (1.0 + b1 / b_crit),
        assumes_equal_loss: true,
    })
}

/// Optimal batch size of one `(N, D)` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoptPoint {
    pub n_params: u64,
    pub d_tokens: u64,
    pub b_opt: f64,
}

/// Vertex of a log-space parabola through `(batch_sequences, loss)` points.
pub fn bopt_from_losses(points: &[(f64, f64)]) -> Result<f64, BatchLawError> {
    Ok(fit_log_parabola_min(points)?)
}

/// Measures `B_opt` for a sweep at fixed `(N, D)`, using the best loss over
/// each batch size's weight-decay sweep.
pub fn measure_bopt(sweep: &[RunRecord]) -> Result<BoptPoint, BatchLawError> {
    let first = sweep.first().ok_or(FitError::TooFewPoints { needed: 3, got: 0 })?;
    let mut best: BTreeMap<u64, f64> = BTreeMap::new();
    for r in sweep {
        if r.n_params != first.n_params || r.d_tokens != first.d_tokens {
            return Err(BatchLawError::MixedGroup(format!(
                "`{}` and `{}` differ in N or D",
                first.run_id, r.run_id
            )));
        }
        let slot = best.entry(r.batch_sequences).or_insert(f64::INFINITY);
        *slot = slot.min(r.val_loss);
    }
    let points: Vec<(f64, f64)> = best.iter().map(|(&b, &l)| (b as f64, l)).collect();
    Ok(BoptPoint {
        n_params: first.n_params,
        d_tokens: first.d_tokens,
        b_opt: bopt_from_losses(&points)?,
    })
}

/// Fits `B = c * D^m` to `(d_tokens, batch_sequences)` points.
pub fn fit_batch_scaling_law(
    points: &[(f64, f64)],
    kind: LawKind,
    seq_len: u64,
    bootstrap: &BootstrapConfig,
) -> Result<BatchScalingLaw, BatchLawError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: points.len(),
        }
        .into());
    }
    let law = if points.len() >= 5 {
        fit_power_law_with_bootstrap(points, bootstrap)?
    } else {
        fit_power_law(points)?
    };
    Ok(BatchScalingLaw {
        kind,
        law,
        units: BatchUnits::Sequences,
        seq_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteratureForm {
    Zhang,
    DeepSeek,
}

impl FromStr for LiteratureForm {
    type Err = BatchLawError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zhang" => Ok(Self::Zhang),
            "deepseek" => Ok(Self::DeepSeek),
            _ => Err(BatchLawError::UnknownForm(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSize {
    pub tokens: f64,
    pub sequences: f64,
    pub seq_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum LiteratureInput {
    /// A 1.2x-data batch-size law `B = coeff * D^exponent` in tokens.
    Zhang { coeff_tokens: f64, exponent: f64 },
    /// The compute-based optimal batch law, evaluated at `compute_flops`.
    DeepSeek { compute_flops: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Converted {
    Law(BatchScalingLaw),
    Batch(BatchSize),
}

/// Restates a 1.2x-data batch law as a 2x-data (`B_crit`) law in sequences.
pub fn zhang_to_bcrit(coeff_tokens: f64, exponent: f64, seq_len: u64) -> Result<BatchScalingLaw, BatchLawError> {
    positive("coefficient", coeff_tokens)?;
    positive("sequence length", seq_len as f64)?;
    Ok(BatchScalingLaw::from_constants(
        LawKind::BcritInDmin,
        coeff_tokens * ZHANG_TO_BCRIT / seq_len as f64,
        exponent,
        BatchUnits::Sequences,
        seq_len,
    ))
}

/// `B_opt = 0.292 * C^0.3271` tokens.
pub fn deepseek_bopt(compute_flops: f64, seq_len: u64) -> Result<BatchSize, BatchLawError> {
    positive("compute", compute_flops)?;
    positive("sequence length", seq_len as f64)?;
    let tokens = DEEPSEEK_COEFF * compute_flops.powf(DEEPSEEK_EXPONENT);
    Ok(BatchSize {
        tokens,
        sequences: tokens / seq_len as f64,
        seq_len,
    })
}

pub fn convert_literature(input: LiteratureInput, seq_len: u64) -> Result<Converted, BatchLawError> {
    match input {
        LiteratureInput::Zhang { coeff_tokens, exponent } => {
            zhang_to_bcrit(coeff_tokens, exponent, seq_len).map(Converted::Law)
        }
        LiteratureInput::DeepSeek { compute_flops } => deepseek_bopt(compute_flops, seq_len).map(Converted::Batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn extra_data_cases() {
        assert_eq!(extra_data(1e9, 5e3, 5e3).unwrap(), 2e9);
        assert_eq!(extra_data(1e9, 5e3, 0.0).unwrap(), 1e9);
        let b_crit = 1e4 * 2048.0;
        assert!(rel(extra_data(1e9, b_crit, 3.0 * b_crit).unwrap(), 4e9) < 1e-15);
        assert!(extra_data(0.0, 1.0, 1.0).is_err());
        assert!(extra_data(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn two_point_reference_estimate() {
        let n = 3.3e9;
        let est = two_point_bcrit(2016.0, 23.0 * n, 4032.0, 30.0 * n).unwrap();
        let r: f64 = 30.0 / 23.0;
        assert!(rel(est.b_crit_sequences, (4032.0 - r * 2016.0) / (r - 1.0)) < 1e-12);
        assert!((est.b_crit_sequences - 4610.0).abs() <= 5.0, "{}", est.b_crit_sequences);
        // implied D_min is about 16 TPP
        assert!((est.d_min / n - 16.0).abs() < 0.05);
        assert!(est.assumes_equal_loss);
    }

    #[test]
    fn two_point_errors() {
        assert_eq!(two_point_bcrit(1.0, 5.0, 2.0, 5.0), Err(BatchLawError::DegenerateRatio));
        assert_eq!(two_point_bcrit(2.0, 5.0, 1.0, 6.0), Err(BatchLawError::InvalidOrder));
        // doubling B while needing 3x data is inconsistent
        assert!(matches!(
            two_point_bcrit(100.0, 1.0, 200.0, 3.0),
            Err(BatchLawError::NegativeResult(_))
        ));
    }

    #[test]
    fn two_point_planted_round_trip() {
        let d_min = 7.7e10;
        let d1 = extra_data(d_min, 5000.0, 1500.0).unwrap();
        let d2 = extra_data(d_min, 5000.0, 6000.0).unwrap();
        let est = two_point_bcrit(1500.0, d1, 6000.0, d2).unwrap();
        assert!(rel(est.b_crit_sequences, 5000.0) < 1e-9);
        assert!(rel(est.d_min, d_min) < 1e-9);
    }

    #[test]
    fn literature_conversions() {
        let law = zhang_to_bcrit(22.91, 0.47, 2048).unwrap();
        assert!((law.law.coeff - 0.0559).abs() < 0.0005);
        assert_eq!(law.law.exponent, 0.47);
        assert_eq!(law.units, BatchUnits::Sequences);
        let ds = deepseek_bopt(1e21, 2048).unwrap();
        let hand = 0.292 * 1e21f64.powf(0.3271);
        assert!(rel(ds.tokens, hand) < 1e-15);
        assert!(rel(ds.tokens, 2.16e6) < 0.01, "{}", ds.tokens);
        assert!((ds.sequences - 1055.0).abs() < 10.0);
        let one = deepseek_bopt(1e21, 1).unwrap();
        assert_eq!(one.tokens, one.sequences);
        assert!(matches!("kaplan".parse::<LiteratureForm>(), Err(BatchLawError::UnknownForm(_))));
        assert_eq!("DeepSeek".parse::<LiteratureForm>().unwrap(), LiteratureForm::DeepSeek);
    }

    /// Closed-form vertex of the parabola through three points.
    fn vertex3(p: [(f64, f64); 3]) -> f64 {
        let [(x0, y0), (x1, y1), (x2, y2)] = p;
        let num = y0 * (x1 * x1 - x2 * x2) + y1 * (x2 * x2 - x0 * x0) + y2 * (x0 * x0 - x1 * x1);
        let den = y0 * (x1 - x2) + y1 * (x2 - x0) + y2 * (x0 - x1);
        num / (2.0 * den)
    }

    #[test]
    fn bopt_from_reference_losses() {
        let pts = [(63.0, 2.583), (126.0, 2.565), (252.0, 2.563), (504.0, 2.570)];
        let b = bopt_from_losses(&pts).unwrap();
        assert!(b > 126.0 && b < 504.0, "{b}");
        // least-squares oracle: normal equations solved by Cramer's rule
        let (u, v): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(b, l): &(f64, f64)| (b.ln(), l.ln())).unzip();
        let s = |k: i32| u.iter().map(|x| x.powi(k)).sum::<f64>();
        let t = |k: i32| u.iter().zip(&v).map(|(x, y)| x.powi(k) * y).sum::<f64>();
        let m = [[s(4), s(3), s(2)], [s(3), s(2), s(1)], [s(2), s(1), s(0)]];
        let rhs = [t(2), t(1), t(0)];
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let mut ma = m;
        let mut mb = m;
        for i in 0..3 {
            ma[i][0] = rhs[i];
            mb[i][1] = rhs[i];
        }
        let (a, bq) = (det(ma) / det(m), det(mb) / det(m));
        assert!(rel(b, (-bq / (2.0 * a)).exp()) < 1e-9);
        // symmetric in log B around 252
        let sym = [(63.0, 2.60), (126.0, 2.57), (252.0, 2.56), (504.0, 2.57), (1008.0, 2.60)];
        assert!(rel(bopt_from_losses(&sym).unwrap(), 252.0) < 1e-12);
        let three = [(63.0, 2.583), (126.0, 2.565), (252.0, 2.563)];
        let lp = three.map(|(b, l): (f64, f64)| (b.ln(), l.ln()));
        assert!(rel(bopt_from_losses(&three).unwrap(), vertex3(lp).exp()) < 1e-10);
    }

    #[test]
    fn planted_bopt_law_recovered() {
        // loss parabolic in ln B with vertex at B_opt(D) = 0.9 * D^0.38
        let mut points = Vec::new();
        for d in [1e8, 4e8, 1.6e9, 6.4e9, 2.56e10] {
            let b_true: f64 = 0.9 * f64::powf(d, 0.38);
            let grid: Vec<f64> = (0..9).map(|k| 64.0 * 2f64.powi(k)).filter(|&b| b / b_true > 0.1 && b / b_true < 10.0).collect();
            let pts: Vec<(f64, f64)> = grid
                .iter()
                .map(|&b| (b, 2.5 * (1.0 + 0.004 * (b / b_true).ln().powi(2))))
                .collect();
            let b_opt = bopt_from_losses(&pts).unwrap();
            assert!(b_opt / b_true < 2.0 && b_true / b_opt < 2.0);
            points.push((d, b_opt));
        }
        let law = fit_batch_scaling_law(&points, LawKind::BoptInD, 2048, &BootstrapConfig::default()).unwrap();
        assert!((law.law.exponent - 0.38).abs() < 0.02, "{:?}", law.law);
    }

    #[test]
    fn batch_law_fit_recovers_constants() {
        let pts: Vec<(f64, f64)> = [1e9, 1e10, 1e11, 1e12, 3e12]
            .iter()
            .map(|&d| (d, 0.0471 * f64::powf(d, 0.462)))
            .collect();
        let law = fit_batch_scaling_law(&pts, LawKind::BcritInDmin, 2048, &BootstrapConfig::default()).unwrap();
        assert!(rel(law.law.coeff, 0.0471) < 1e-10);
        assert!((law.law.exponent - 0.462).abs() < 1e-12);
        assert!(matches!(
            fit_batch_scaling_law(&pts[..1], LawKind::BcritInDmin, 2048, &BootstrapConfig::default()),
            Err(BatchLawError::Fit(FitError::TooFewPoints { .. }))
        ));
        let json = serde_json::to_value(law).unwrap();
        assert_eq!(json["units"], "sequences");
        assert_eq!(json["seq_len"], 2048);
        assert_eq!(json["kind"], "bcrit-in-Dmin");
    }

    #[test]
    fn crit_point_from_exact_hyperbola() {
        let (d_min, b_crit_seq, seq_len) = (4e9, 900.0, 2048u64);
        let pairs: Vec<(f64, f64)> = [200.0, 400.0, 800.0, 1600.0, 3200.0]
            .iter()
            .map(|&b| (b, extra_data(d_min, b_crit_seq, b).unwrap()))
            .collect();
        let cp = crit_point_from_pairs(&pairs, 3.0, seq_len).unwrap().point;
        assert!(rel(cp.d_min, d_min) < 1e-6);
        assert!(rel(cp.b_crit_sequences, b_crit_seq) < 1e-6);
        assert_eq!(cp.b_crit_tokens, cp.d_min / cp.s_min);
        assert_eq!(cp.b_crit_sequences, cp.b_crit_tokens / seq_len as f64);
    }

    #[test]
    fn dmin_solve_cases() {
        let law = BatchScalingLaw::from_constants(LawKind::BcritInDmin, 0.0471, 0.462, BatchUnits::Sequences, 2048);
        assert_eq!(dmin_from_data(5e9, 0.0, &law).unwrap(), 5e9);
        let d_min = 2.2e9;
        let b = law.predict_sequences(d_min);
        let d = extra_data(d_min, b, b).unwrap();
        assert!(rel(dmin_from_data(d, b, &law).unwrap(), d_min) < 1e-9);
        // very large batch: the default bracket must widen
        let huge = 1e6;
        let d = extra_data(d_min, law.predict_sequences(d_min), huge).unwrap();
        assert!(rel(dmin_from_data(d, huge, &law).unwrap(), d_min) < 1e-9);
    }

    proptest! {
        #[test]
        fn extra_data_identity_and_linearity(d in 1e6f64..1e13, bc in 1.0f64..1e7, b in 0.0f64..1e7) {
            prop_assert!(rel(extra_data(d, bc, bc).unwrap(), 2.0 * d) <= 1e-12);
            let lin = extra_data(d, bc, 2.0 * b).unwrap() - d;
            let single = extra_data(d, bc, b).unwrap() - d;
            prop_assert!((lin - 2.0 * single).abs() <= 1e-9 * lin.abs().max(d));
        }

        #[test]
        fn two_point_round_trip(d_min in 1e8f64..1e12, bc in 10.0f64..1e5, b1 in 1.0f64..1e4, ratio in 1.1f64..10.0) {
            let b2 = b1 * ratio;
            let d1 = extra_data(d_min, bc, b1).unwrap();
            let d2 = extra_data(d_min, bc, b2).unwrap();
            let est = two_point_bcrit(b1, d1, b2, d2).unwrap();
            prop_assert!(rel(est.b_crit_sequences, bc) < 1e-9 * (1.0 + bc / b1));
        }

        #[test]
        fn dmin_inverts_extra_data(ln_dmin in 18.0f64..28.0, m in 0.05f64..0.95, ln_b in 0.0f64..14.0) {
            let law = BatchScalingLaw::from_constants(LawKind::BcritInDmin, 0.0471, m, BatchUnits::Sequences, 2048);
            let d_min = ln_dmin.exp();
            let b = ln_b.exp();
            let d = extra_data(d_min, law.predict_sequences(d_min), b).unwrap();
            prop_assert!(rel(dmin_from_data(d, b, &law).unwrap(), d_min) < 1e-9);
        }

        #[test]
        fn bcrit_law_monotone(c in 1e-3f64..1.0, m in 0.01f64..1.0, d in 1e8f64..1e12, k in 1.001f64..100.0) {
            let law = BatchScalingLaw::from_constants(LawKind::BcritInDmin, c, m, BatchUnits::Sequences, 2048);
            prop_assert!(law.predict_sequences(k * d) > law.predict_sequences(d));
            prop_assert_eq!(law.predict_sequences(d) * 2048.0, law.predict_tokens(d));
        }
    }
}
