//! A closed-form training world with planted laws, for plant-and-recover
//! tests of every pipeline.
//!
//! A run's loss is the loss surface evaluated at its *minimum* data
//! `D_min` (training at batch `B` wastes data per the critical-batch law),
//! plus a penalty quadratic in `ln(tau / tau_opt)` for a mistuned timescale,
//! plus optional Gaussian noise keyed on the run's inputs.
//!
//! The world has no small-batch degradation, so loss rises monotonically
//! with `B` at fixed `D` and there is no interior optimal batch size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch_laws::{dmin_from_data, BatchLawError, BatchScalingLaw, BatchUnits, LawKind};
use crate::frontier::ChinchillaFit;
use crate::numeric::mix64;
use crate::run_store::{LoadOptions, RunRecord, RunSet, RunStoreError};
use crate::timescale::{lambda_opt, tau_ema, TauLaw, TimescaleError};

pub const DEFAULT_MISTUNE_CURVATURE: f64 = 0.01;
pub const MAX_NOISE_SIGMA: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("design has no rows")]
    EmptyDesign,
    #[error(transparent)]
    Batch(#[from] BatchLawError),
    #[error(transparent)]
    Timescale(#[from] TimescaleError),
    #[error(transparent)]
    RunStore(#[from] RunStoreError),
}

/// `y = coeff * x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    pub coeff: f64,
    pub exponent: f64,
}

fn default_curvature() -> f64 {
    DEFAULT_MISTUNE_CURVATURE
}

fn default_seq_len() -> u64 {
    crate::run_store::DEFAULT_SEQ_LEN
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub chinchilla: ChinchillaFit,
    /// `B_crit` in sequences as a function of `D_min` in tokens.
    pub crit_law: PowerLawSpec,
    /// `tau_opt` as a function of tokens per parameter.
    pub tau_law: PowerLawSpec,
    /// Loss added per squared unit of `ln(tau / tau_opt)`.
    #[serde(default = "default_curvature")]
    pub mistune_curvature: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_seq_len")]
    pub seq_len: u64,
    #[serde(default)]
    pub seed: u64,
}

impl WorldSpec {
    /// Loss surface `(1.8, 400, 0.313, 410, 0.282)`, `B_crit = 0.0471 D_min^0.462`,
    /// `tau_opt = 1.084 TPP^-0.527`, noiseless.
    pub fn reference() -> Self {
        Self {
            chinchilla: ChinchillaFit::new(1.8, 400.0, 0.313, 410.0, 0.282),
            crit_law: PowerLawSpec {
                coeff: 0.0471,
                exponent: 0.462,
            },
            tau_law: PowerLawSpec {
                coeff: 1.084,
                exponent: -0.527,
            },
            mistune_curvature: DEFAULT_MISTUNE_CURVATURE,
            noise_sigma: 0.0,
            seq_len: 2048,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidWorld(m));
        if self.chinchilla.validate().is_err() {
            return bad(format!("loss surface needs positive scales and exponents: {:?}", self.chinchilla));
        }
        if !(self.crit_law.coeff > 0.0 && self.crit_law.exponent > 0.0 && self.crit_law.exponent < 1.0) {
            return bad(format!(
                "critical-batch law needs a positive coefficient and an exponent in (0, 1): {:?}",
                self.crit_law
            ));
        }
        if !(self.tau_law.coeff > 0.0 && self.tau_law.exponent.is_finite()) {
            return bad(format!("timescale law needs a positive coefficient: {:?}", self.tau_law));
        }
        if !(self.mistune_curvature >= 0.0 && self.mistune_curvature.is_finite()) {
            return bad(format!("mistune curvature {} must be non-negative", self.mistune_curvature));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma < MAX_NOISE_SIGMA) {
            return bad(format!("noise sigma {} must lie in [0, {MAX_NOISE_SIGMA})", self.noise_sigma));
        }
        if self.seq_len == 0 {
            return bad("sequence length must be positive".into());
        }
        Ok(())
    }

    pub fn crit(&self) -> BatchScalingLaw {
        BatchScalingLaw::from_constants(
            LawKind::BcritInDmin,
            self.crit_law.coeff,
            self.crit_law.exponent,
            BatchUnits::Sequences,
            self.seq_len,
        )
    }

    pub fn tau(&self) -> TauLaw {
        TauLaw::from_constants(self.tau_law.coeff, self.tau_law.exponent)
    }

    /// Weight decay that puts a run exactly at the planted optimal timescale.
    pub fn optimal_weight_decay(&self, n_params: f64, d_tokens: f64, b_sequences: f64, eta: f64) -> Result<f64, SynthError> {
        let rec = lambda_opt(b_sequences * self.seq_len as f64, eta, d_tokens, n_params, &self.tau())?;
        Ok(rec.lambda)
    }
}

/// The `D_min` a run of `d_tokens` at batch `b_sequences` is worth.
pub fn solve_dmin(d_tokens: f64, b_sequences: f64, crit_law: &BatchScalingLaw) -> Result<f64, SynthError> {
    Ok(dmin_from_data(d_tokens, b_sequences, crit_law)?)
}

fn noise_key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |h, &p| mix64(h ^ p))
}

/// Final validation loss of a run in `world`.
pub fn synth_loss(
    n_params: f64,
    d_tokens: f64,
    b_sequences: f64,
    weight_decay: f64,
    eta_peak: f64,
    world: &WorldSpec,
) -> Result<f64, SynthError> {
    world.validate()?;
    if !(n_params > 0.0 && b_sequences > 0.0) {
        return Err(SynthError::InvalidWorld(format!(
            "model size {n_params} and batch size {b_sequences} must be positive"
        )));
    }
    let d_min = solve_dmin(d_tokens, b_sequences, &world.crit())?;
    let base = world.chinchilla.predict(n_params, d_min);
    let tau = tau_ema(b_sequences * world.seq_len as f64, eta_peak, weight_decay, d_tokens)?;
    let tau_opt = world.tau().predict(d_tokens / n_params);
    let penalty = world.mistune_curvature * (tau.ln() - tau_opt.ln()).powi(2);
    let noise = if world.noise_sigma > 0.0 {
        let key = noise_key(&[
            n_params.to_bits(),
            d_tokens.to_bits(),
            b_sequences.to_bits(),
            weight_decay.to_bits(),
            eta_peak.to_bits(),
            world.seed,
        ]);
        let normal = Normal::new(0.0, world.noise_sigma).map_err(|e| SynthError::InvalidWorld(e.to_string()))?;
        normal.sample(&mut ChaCha8Rng::seed_from_u64(key))
    } else {
        0.0
    };
    Ok(base + penalty + noise)
}

/// One planned run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub n_params: u64,
    pub d_tokens: u64,
    pub batch_sequences: u64,
    pub weight_decay: f64,
    pub eta_peak: f64,
}

/// Runs every row through the world. Run ids are `synth-00000`, ...
pub fn gen_design(world: &WorldSpec, design: &[DesignRow]) -> Result<RunSet, SynthError> {
    if design.is_empty() {
        return Err(SynthError::EmptyDesign);
    }
    let records = design
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let val_loss = synth_loss(
                row.n_params as f64,
                row.d_tokens as f64,
                row.batch_sequences as f64,
                row.weight_decay,
                row.eta_peak,
                world,
            )?;
            Ok(RunRecord {
                run_id: format!("synth-{i:05}"),
                n_params: row.n_params,
                d_tokens: row.d_tokens,
                batch_sequences: row.batch_sequences,
                seq_len: world.seq_len,
                eta_base: None,
                eta_peak: row.eta_peak,
                weight_decay: row.weight_decay,
                val_loss,
                width: None,
                tags: Default::default(),
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let opts = LoadOptions {
        seq_len_default: world.seq_len,
        ..LoadOptions::default()
    };
    Ok(RunSet::new(records, opts)?)
}

/// Weight-decay sweep at fixed `(N, D, B, eta)`: one row per multiple of
/// the planted optimal weight decay.
pub fn lambda_sweep_design(
    world: &WorldSpec,
    n_params: u64,
    d_tokens: u64,
    batch_sequences: u64,
    eta_peak: f64,
    multipliers: &[f64],
) -> Result<Vec<DesignRow>, SynthError> {
    let lambda = world.optimal_weight_decay(n_params as f64, d_tokens as f64, batch_sequences as f64, eta_peak)?;
    Ok(multipliers
        .iter()
        .map(|&m| DesignRow {
            n_params,
            d_tokens,
            batch_sequences,
            weight_decay: lambda * m,
            eta_peak,
        })
        .collect())
}

/// Every `(B, D)` combination at one model size, each at its optimal weight
/// decay.
pub fn batch_data_design(
    world: &WorldSpec,
    n_params: u64,
    batches: &[u64],
    data: &[u64],
    eta_peak: f64,
) -> Result<Vec<DesignRow>, SynthError> {
    let mut rows = Vec::with_capacity(batches.len() * data.len());
    for &b in batches {
        for &d in data {
            rows.push(DesignRow {
                n_params,
                d_tokens: d,
                batch_sequences: b,
                weight_decay: world.optimal_weight_decay(n_params as f64, d as f64, b as f64, eta_peak)?,
                eta_peak,
            });
        }
    }
    Ok(rows)
}
