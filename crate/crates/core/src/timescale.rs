//! The AdamW timescale `tau_ema = B / (eta * lambda * D)` and the laws built
//! on it: optimal-timescale extraction from weight-decay sweeps, the
//! `tau_opt(TPP)` power law, weight-decay recommendations, and the implied
//! learning-rate-vs-data law.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch_laws::{dmin_from_data, BatchScalingLaw};
use crate::fit_core::{fit_log_parabola_min, fit_power_law, fit_power_law_with_bootstrap, BootstrapConfig, FitError, PowerLawFit};
use crate::run_store::RunRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimescaleError {
    #[error("non-positive {what}: {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("sweep mixes runs from different (N, D) settings: {0}")]
    MixedGroup(String),
    #[error("fit points span only {span:.3} decades of TPP (need at least 1)")]
    InsufficientSpan { span: f64 },
    #[error(transparent)]
    Fit(#[from] FitError),
}

fn positive(what: &'static str, value: f64) -> Result<f64, TimescaleError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(TimescaleError::NonPositive { what, value })
    }
}

/// Fraction of training over which AdamW averages weight updates.
/// `batch_tokens` and `d_tokens` are both in tokens; `eta` is the peak LR.
pub fn tau_ema(batch_tokens: f64, eta: f64, weight_decay: f64, d_tokens: f64) -> Result<f64, TimescaleError> {
    positive("batch size", batch_tokens)?;
    positive("learning rate", eta)?;
    positive("weight decay", weight_decay)?;
    positive("dataset size", d_tokens)?;
    Ok(batch_tokens / (eta * weight_decay * d_tokens))
}

/// The same timescale in optimizer steps, `1 / (eta * lambda)`.
pub fn tau_iter(eta: f64, weight_decay: f64) -> Result<f64, TimescaleError> {
    positive("learning rate", eta)?;
    positive("weight decay", weight_decay)?;
    Ok(1.0 / (eta * weight_decay))
}

/// μP learning-rate transfer: `eta_base * proxy_width / target_width`.
pub fn mup_adjust_lr(eta_base: f64, proxy_width: u64, target_width: u64) -> Result<f64, TimescaleError> {
    positive("base learning rate", eta_base)?;
    positive("proxy width", proxy_width as f64)?;
    positive("target width", target_width as f64)?;
    Ok(eta_base * proxy_width as f64 / target_width as f64)
}

/// Optimal timescale of one `(N, D)` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptTau {
    pub tpp: f64,
    pub tau_opt: f64,
    pub n_params: u64,
    pub d_tokens: u64,
}

/// Extracts the loss-minimizing `tau_ema` of a sweep at fixed `(N, D)` from
/// the vertex of a parabola fit in `(ln tau, ln L)`.
pub fn find_opt_tau(sweep: &[RunRecord]) -> Result<OptTau, TimescaleError> {
    let first = sweep.first().ok_or(FitError::TooFewPoints { needed: 3, got: 0 })?;
    if let Some(other) = sweep
        .iter()
        .find(|r| r.n_params != first.n_params || r.d_tokens != first.d_tokens)
    {
        return Err(TimescaleError::MixedGroup(format!(
            "`{}` has (N={}, D={}) but `{}` has (N={}, D={})",
            first.run_id, first.n_params, first.d_tokens, other.run_id, other.n_params, other.d_tokens
        )));
    }
    let points = sweep
        .iter()
        .map(|r| {
            tau_ema(r.batch_tokens() as f64, r.eta_peak, r.weight_decay, r.d_tokens as f64).map(|t| (t, r.val_loss))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tau_opt = fit_log_parabola_min(&points)?;
    Ok(OptTau {
        tpp: first.tpp(),
        tau_opt,
        n_params: first.n_params,
        d_tokens: first.d_tokens,
    })
}

/// `tau_opt(TPP) = c_tau * TPP^m_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TauLawFile", try_from = "TauLawFile")]
pub struct TauLaw {
    pub law: PowerLawFit,
    pub fit_points: Vec<OptTau>,
}

/// On-disk layout of a [`TauLaw`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TauLawFile {
    c_tau: f64,
    m_tau: f64,
    r_squared: f64,
    q10: Option<f64>,
    q90: Option<f64>,
    fit_points: Vec<OptTau>,
}

impl From<TauLaw> for TauLawFile {
    fn from(t: TauLaw) -> Self {
        Self {
            c_tau: t.law.coeff,
            m_tau: t.law.exponent,
            r_squared: t.law.r_squared,
            q10: t.law.exp_q10,
            q90: t.law.exp_q90,
            fit_points: t.fit_points,
        }
    }
}

impl TryFrom<TauLawFile> for TauLaw {
    type Error = String;

    fn try_from(f: TauLawFile) -> Result<Self, String> {
        if !(f.c_tau > 0.0 && f.c_tau.is_finite()) {
            return Err(format!("c_tau must be positive, got {}", f.c_tau));
        }
        if !f.m_tau.is_finite() {
            return Err("m_tau must be finite".into());
        }
        Ok(TauLaw {
            law: PowerLawFit {
                coeff: f.c_tau,
                exponent: f.m_tau,
                r_squared: f.r_squared,
                n_points: f.fit_points.len(),
                exp_q10: f.q10,
                exp_q90: f.q90,
            },
            fit_points: f.fit_points,
        })
    }
}

impl TauLaw {
    /// A law with given constants and no fit provenance.
    pub fn from_constants(c_tau: f64, m_tau: f64) -> Self {
        Self {
            law: PowerLawFit {
                coeff: c_tau,
                exponent: m_tau,
                r_squared: 1.0,
                n_points: 0,
                exp_q10: None,
                exp_q90: None,
            },
            fit_points: Vec::new(),
        }
    }

    pub fn c_tau(&self) -> f64 {
        self.law.coeff
    }

    pub fn m_tau(&self) -> f64 {
        self.law.exponent
    }

    pub fn predict(&self, tpp: f64) -> f64 {
        self.law.predict(tpp)
    }

    /// TPP range covered by the fit points, if any.
    pub fn tpp_range(&self) -> Option<(f64, f64)> {
        let lo = self.fit_points.iter().map(|p| p.tpp).reduce(f64::min)?;
        let hi = self.fit_points.iter().map(|p| p.tpp).reduce(f64::max)?;
        Some((lo, hi))
    }
}

/// Fits the `tau_opt(TPP)` power law; bootstrap quantiles are attached when
/// five or more points are available.
pub fn fit_tau_law(points: &[OptTau], bootstrap: &BootstrapConfig) -> Result<TauLaw, TimescaleError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: points.len(),
        }
        .into());
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.tpp, p.tau_opt)).collect();
    let lo = xy.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = xy.iter().map(|p| p.0).fold(0.0, f64::max);
    let span = (hi / lo).log10();
    if !(span >= 1.0 - 1e-12) {
        return Err(TimescaleError::InsufficientSpan { span });
    }
    let law = if xy.len() >= 5 {
        fit_power_law_with_bootstrap(&xy, bootstrap)?
    } else {
        fit_power_law(&xy)?
    };
    Ok(TauLaw {
        law,
        fit_points: points.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecommendation {
    pub lambda: f64,
    pub tau_opt: f64,
    pub tpp: f64,
    pub warnings: Vec<String>,
}

impl LambdaRecommendation {
    /// Flags batch sizes above the critical batch size, where the optimal
    /// timescale is no longer expected to hold.
    pub fn check_bcrit(
        &mut self,
        batch_sequences: f64,
        d_tokens: f64,
        crit_law: &BatchScalingLaw,
    ) -> Result<(), crate::batch_laws::BatchLawError> {
        let d_min = dmin_from_data(d_tokens, batch_sequences, crit_law)?;
        let b_crit = crit_law.predict_sequences(d_min);
        if batch_sequences > b_crit {
            self.warnings.push(format!(
                "batch size {batch_sequences} sequences exceeds predicted B_crit {b_crit:.1}; tau_opt may drift"
            ));
        }
        Ok(())
    }
}

/// Weight decay that puts the run at the law's optimal timescale:
/// `lambda = B / (eta * D * tau_opt(D / N))`, with `B` and `D` in tokens.
///
/// Exactly linear in `batch_tokens`.
pub fn lambda_opt(
    batch_tokens: f64,
    eta_peak: f64,
    d_tokens: f64,
    n_params: f64,
    law: &TauLaw,
) -> Result<LambdaRecommendation, TimescaleError> {
    positive("batch size", batch_tokens)?;
    positive("learning rate", eta_peak)?;
    positive("dataset size", d_tokens)?;
    positive("parameter count", n_params)?;
    let tpp = d_tokens / n_params;
    let tau_opt = law.predict(tpp);
    let lambda = batch_tokens / (eta_peak * d_tokens * tau_opt);
    let mut warnings = Vec::new();
    if let Some((lo, hi)) = law.tpp_range() {
        if tpp < 0.2 * lo || tpp > 5.0 * hi {
            warnings.push(format!(
                "TPP {tpp:.3} is outside [0.2x, 5x] of the law's fit range [{lo:.3}, {hi:.3}]; extrapolating"
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LambdaRecommendation {
        lambda,
        tau_opt,
        tpp,
        warnings,
    })
}

/// `eta_opt(B, D) = B * coeff_eta_d * D^exp_eta_d`, with `B` and `D` in
/// tokens, implied by a timescale law at fixed `N` and weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaDataLaw {
    pub coeff_eta_d: f64,
    pub exp_eta_d: f64,
    pub n_params: f64,
    pub weight_decay: f64,
}

impl EtaDataLaw {
    pub fn predict(&self, batch_tokens: f64, d_tokens: f64) -> f64 {
        batch_tokens * self.coeff_eta_d * d_tokens.powf(self.exp_eta_d)
    }
}

pub fn derived_eta_law(law: &TauLaw, n_params: f64, weight_decay: f64) -> Result<EtaDataLaw, TimescaleError> {
    positive("parameter count", n_params)?;
    positive("weight decay", weight_decay)?;
    let (c, m) = (law.c_tau(), law.m_tau());
    Ok(EtaDataLaw {
        coeff_eta_d: n_params.powf(m) / (weight_decay * c),
        exp_eta_d: -(m + 1.0),
        n_params,
        weight_decay,
    })
}

/// Same as [`derived_eta_law`] but for the base μP learning rate, i.e. the
/// coefficient is divided by `proxy_width / width`.
pub fn derived_base_eta_law(
    law: &TauLaw,
    n_params: f64,
    weight_decay: f64,
    proxy_width: u64,
    width: u64,
) -> Result<EtaDataLaw, TimescaleError> {
    let mut out = derived_eta_law(law, n_params, weight_decay)?;
    let rho = positive("proxy width", proxy_width as f64)? / positive("width", width as f64)?;
    out.coeff_eta_d /= rho;
    Ok(out)
}
