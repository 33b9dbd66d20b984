//! AdamW's weight update viewed as an EMA with time-varying smoothing.
//!
//! With learning rate `eta_t` and weight decay `lambda`, the parameters
//! after `S` steps are a weighted sum of the per-step updates, with update
//! `i` carrying weight `c_i = alpha_i * prod_{j>i} (1 - alpha_j)` where
//! `alpha_t = eta_t * lambda`. Whatever weight is left over stays on the
//! initial parameters.
//!
//! Plotting `c_i * S` against the data fraction `i / S` shows that two runs
//! with the same `tau_ema` but different step counts weight their data the
//! same way; [`compare_shapes`] measures how closely.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Data fractions outside this window are skipped by [`compare_shapes`]; the
/// curves' ends are dominated by discretization.
pub const COMPARE_WINDOW: (f64, f64) = (0.02, 0.98);

/// Number of uniformly spaced data fractions sampled by [`compare_shapes`].
pub const COMPARE_SAMPLES: usize = 256;

/// Entries below this are stored as zero.
const UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum EmaError {
    #[error("step {step} outside 1..={total_steps}")]
    StepOutOfRange { step: u64, total_steps: u64 },
    #[error("smoothing factor {alpha} at step {step} is outside [0, 1]")]
    AlphaOutOfRange { step: u64, alpha: f64 },
    #[error("schedules differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LrShape {
    /// Linear warmup to the peak, then linear decay to zero.
    #[default]
    WarmupLinearDecay,
    /// The peak learning rate at every step.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub total_steps: u64,
    pub warmup_frac: f64,
    pub eta_peak: f64,
    #[serde(default)]
    pub shape: LrShape,
}

impl LrSchedule {
    pub fn new(total_steps: u64, warmup_frac: f64, eta_peak: f64) -> Result<Self, EmaError> {
        let s = Self {
            total_steps,
            warmup_frac,
            eta_peak,
            shape: LrShape::WarmupLinearDecay,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(total_steps: u64, eta_peak: f64) -> Result<Self, EmaError> {
        let s = Self {
            total_steps,
            warmup_frac: 0.0,
            eta_peak,
            shape: LrShape::Constant,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EmaError> {
        if self.total_steps < 2 {
            return Err(EmaError::InvalidSchedule(format!(
                "need at least 2 steps, got {}",
                self.total_steps
            )));
        }
        if !(self.eta_peak > 0.0 && self.eta_peak.is_finite()) {
            return Err(EmaError::InvalidSchedule(format!("peak LR {} must be positive", self.eta_peak)));
        }
        if self.shape == LrShape::WarmupLinearDecay && !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(EmaError::InvalidSchedule(format!(
                "warmup fraction {} must lie in (0, 1)",
                self.warmup_frac
            )));
        }
        Ok(())
    }

    /// `round(warmup_frac * S)`, kept within `1..=S`.
    pub fn warmup_steps(&self) -> u64 {
        match self.shape {
            LrShape::Constant => 0,
            LrShape::WarmupLinearDecay => {
                ((self.warmup_frac * self.total_steps as f64).round() as u64).clamp(1, self.total_steps)
            }
        }
    }

    fn lr_unchecked(&self, step: u64) -> f64 {
        match self.shape {
            LrShape::Constant => self.eta_peak,
            LrShape::WarmupLinearDecay => {
                let (s, w) = (self.total_steps, self.warmup_steps());
                if step <= w {
                    self.eta_peak * step as f64 / w as f64
                } else {
                    self.eta_peak * (s - step) as f64 / (s - w) as f64
                }
            }
        }
    }
}

/// Learning rate at `step` (1-based).
pub fn schedule_lr(sched: &LrSchedule, step: u64) -> Result<f64, EmaError> {
    if step < 1 || step > sched.total_steps {
        return Err(EmaError::StepOutOfRange {
            step,
            total_steps: sched.total_steps,
        });
    }
    Ok(sched.lr_unchecked(step))
}

/// Weight decay giving timescale `tau` (a fraction of training) over
/// `total_steps` steps at peak LR `eta_peak`: `1 / (eta * tau * S)`.
pub fn weight_decay_for_tau(eta_peak: f64, tau: f64, total_steps: u64) -> f64 {
    1.0 / (eta_peak * tau * total_steps as f64)
}

/// Contribution of each update to the final parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaCoefficients {
    pub total_steps: u64,
    pub warmup_frac: f64,
    pub shape: LrShape,
    /// `coeffs[i - 1]` is the weight of update `i`.
    pub coeffs: Vec<f64>,
    /// Weight left on the initial parameters.
    pub init_residual: f64,
}

impl EmaCoefficients {
    /// `init_residual + sum(coeffs)`, compensated so that rounding in the
    /// summation itself does not mask the conservation property.
    pub fn total(&self) -> f64 {
        let mut sum = self.init_residual;
        let mut comp = 0.0;
        for &c in &self.coeffs {
            let t = sum + c;
            if sum.abs() >= c.abs() {
                comp += (sum - t) + c;
            } else {
                comp += (c - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    /// `c_i * S`: weight per unit of data fraction.
    pub fn density(&self) -> Vec<f64> {
        let s = self.total_steps as f64;
        self.coeffs.iter().map(|c| c * s).collect()
    }

    /// Density at data fraction `f`, interpolated linearly between the
    /// update nodes at `i / S`. Outside `[1/S, 1]` the end value is used.
    pub fn density_at(&self, f: f64) -> f64 {
        let s = self.total_steps as f64;
        let pos = (f * s).clamp(1.0, s);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(self.coeffs.len());
        let frac = pos - lo as f64;
        s * (self.coeffs[lo - 1] + frac * (self.coeffs[hi - 1] - self.coeffs[lo - 1]))
    }
}

/// Computes the coefficients for `sched` with decay `weight_decay`.
///
/// With `alpha1_is_one` the first update's smoothing is forced to 1, which
/// puts no weight on the initial parameters.
pub fn ema_coefficients(
    sched: &LrSchedule,
    weight_decay: f64,
    alpha1_is_one: bool,
) -> Result<EmaCoefficients, EmaError> {
    sched.validate()?;
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(EmaError::InvalidSchedule(format!("weight decay {weight_decay} must be non-negative")));
    }
    let s = sched.total_steps;
    let mut alphas = Vec::with_capacity(s as usize);
    for step in 1..=s {
        let alpha = if step == 1 && alpha1_is_one {
            1.0
        } else {
            sched.lr_unchecked(step) * weight_decay
        };
        if !(0.0..=1.0).contains(&alpha) {
            return Err(EmaError::AlphaOutOfRange { step, alpha });
        }
        alphas.push(alpha);
    }
    let (coeffs, init_residual) = coefficients_from_alphas(&alphas);
    Ok(EmaCoefficients {
        total_steps: s,
        warmup_frac: sched.warmup_frac,
        shape: sched.shape,
        coeffs,
        init_residual,
    })
}

/// Single backward pass accumulating the suffix product of `1 - alpha`.
fn coefficients_from_alphas(alphas: &[f64]) -> (Vec<f64>, f64) {
    let mut coeffs = vec![0.0; alphas.len()];
    let mut suffix = 1.0;
    for (i, &a) in alphas.iter().enumerate().rev() {
        let c = a * suffix;
        coeffs[i] = if c < UNDERFLOW { 0.0 } else { c };
        suffix *= 1.0 - a;
    }
    let residual = if suffix < UNDERFLOW { 0.0 } else { suffix };
    (coeffs, residual)
}

/// Fractions sampled by [`compare_shapes`]: `k / 255` inside the window.
pub fn compare_fractions() -> Vec<f64> {
    (0..COMPARE_SAMPLES)
        .map(|k| k as f64 / (COMPARE_SAMPLES - 1) as f64)
        .filter(|f| (COMPARE_WINDOW.0..=COMPARE_WINDOW.1).contains(f))
        .collect()
}

/// Largest relative gap `|a - b| / max(|a|, |b|)` between the two density
/// curves over [`compare_fractions`].
pub fn compare_shapes(a: &EmaCoefficients, b: &EmaCoefficients) -> Result<f64, EmaError> {
    if a.shape != b.shape || a.warmup_frac != b.warmup_frac {
        return Err(EmaError::ShapeMismatch(format!(
            "{:?} warmup {} vs {:?} warmup {}",
            a.shape, a.warmup_frac, b.shape, b.warmup_frac
        )));
    }
    let mut worst: f64 = 0.0;
    for f in compare_fractions() {
        let (x, y) = (a.density_at(f), b.density_at(f));
        let scale = x.abs().max(y.abs());
        if scale > 0.0 {
            worst = worst.max((x - y).abs() / scale);
        }
    }
    Ok(worst)
}

/// Writes `(data_fraction, density)` rows, one per update.
pub fn write_density_csv<W: Write>(coeffs: &EmaCoefficients, writer: W) -> Result<(), EmaError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["data_fraction", "density"])?;
    let s = coeffs.total_steps as f64;
    for (i, d) in coeffs.density().into_iter().enumerate() {
        wtr.write_record([((i + 1) as f64 / s).to_string(), d.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
