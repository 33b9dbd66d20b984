use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use powerlines_core::batch_laws::{
    bcrit_analysis, convert_literature, fit_batch_scaling_law, fit_loss_family, measure_bopt, BatchScalingLaw,
    BoptPoint, CritAnalysis, CritPoint, Converted, LawKind, LiteratureForm, LiteratureInput,
};
use powerlines_core::ema_sim::{
    compare_shapes, ema_coefficients, weight_decay_for_tau, EmaCoefficients, EmaError, LrSchedule,
};
use powerlines_core::fit_core::BootstrapConfig;
use powerlines_core::frontier::{
    best_per_nd, fit_chinchilla as fit_surface, mark_dominance, write_points_csv, ChinchillaFit, FrontierError,
    IsoLossCurve, ParetoPoint, TimeModel,
};
use powerlines_core::run_store::{
    group_runs, load_runs, write_runs, GroupKey, LoadOptions, RunFormat, RunSet,
};
use powerlines_core::synth_world::{gen_design, DesignRow, WorldSpec};
use powerlines_core::timescale::{find_opt_tau, fit_tau_law, lambda_opt, mup_adjust_lr, OptTau, TauLaw};

use crate::outputs::Outputs;
use crate::{GlobalOpts, Invalid, TimeModelArg};

/// Prints a line to stdout. A closed pipe (e.g. `| head`) is not an error:
/// the files are already written.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// Turns a library error into a validation failure, keeping its message.
fn check<T, E: std::fmt::Display>(r: std::result::Result<T, E>, what: impl FnOnce() -> String) -> Result<T> {
    r.map_err(|e| invalid(format!("{}: {e}", what())))
}

fn load(g: &GlobalOpts, path: &Path) -> Result<RunSet> {
    let opts = LoadOptions {
        proxy_width: g.proxy_width,
        seq_len_default: g.seq_len_default,
    };
    let runs = load_runs(path, RunFormat::from_path(path), opts).map_err(|e| match e {
        powerlines_core::run_store::RunStoreError::Io(io) => anyhow::Error::new(io).context(format!("reading {}", path.display())),
        other => invalid(format!("{}: {other}", path.display())),
    })?;
    if runs.is_empty() {
        return Err(invalid(format!("{} contains no runs", path.display())));
    }
    Ok(runs)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn bootstrap(g: &GlobalOpts) -> BootstrapConfig {
    BootstrapConfig {
        frac: g.bootstrap_frac,
        iters: g.bootstrap_iters,
        seed: g.seed.unwrap_or(0),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    say!("{text}");
    Ok(())
}

fn interval(q10: Option<f64>, q90: Option<f64>) -> String {
    match (q10, q90) {
        (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
        _ => "n/a (fewer than 5 points)".into(),
    }
}

#[derive(Args, Debug)]
pub struct FitTauArgs {
    /// Runs file (.csv or .jsonl)
    #[arg(long)]
    runs: PathBuf,
    /// Law file to write (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Per-group table of (tpp, tau_opt) to write as CSV
    #[arg(long)]
    table: Option<PathBuf>,
}

pub fn fit_tau(g: &GlobalOpts, a: FitTauArgs, outputs: &mut Outputs) -> Result<()> {
    let runs = load(g, &a.runs)?;
    let mut points: Vec<OptTau> = Vec::new();
    for ((n, d), group) in group_runs(&runs, &[GroupKey::NParams, GroupKey::DTokens])
        .into_iter()
        .map(|(k, v)| ((k[0], k[1]), v))
    {
        points.push(check(find_opt_tau(&group), || format!("group N={n}, D={d}"))?);
    }
    let law = check(fit_tau_law(&points, &bootstrap(g)), || "fitting tau law".into())?;
    outputs.write_json(&a.out, &law)?;
    if let Some(path) = &a.table {
        let mut w = csv::Writer::from_writer(outputs.create(path)?);
        w.write_record(["n_params", "d_tokens", "tpp", "tau_opt"])?;
        for p in &points {
            w.write_record([p.n_params.to_string(), p.d_tokens.to_string(), p.tpp.to_string(), p.tau_opt.to_string()])?;
        }
        w.flush()?;
    }
    if g.json {
        return print_json(&law);
    }
    say!("{:>14} {:>16} {:>10} {:>10}", "n_params", "d_tokens", "tpp", "tau_opt");
    for p in &points {
        say!("{:>14} {:>16} {:>10.3} {:>10.5}", p.n_params, p.d_tokens, p.tpp, p.tau_opt);
    }
    say!("tau_opt = {:.4} * TPP^{:.4}", law.c_tau(), law.m_tau());
    say!("R^2 = {:.4}", law.law.r_squared);
    say!("exponent 10-90% interval: {}", interval(law.law.exp_q10, law.law.exp_q90));
    say!("tau_opt(TPP=20) = {:.4}", law.predict(20.0));
    Ok(())
}

#[derive(Args, Debug)]
pub struct RecommendLambdaArgs {
    /// Model parameters
    #[arg(long)]
    n: f64,
    /// Training tokens
    #[arg(long)]
    d: f64,
    /// Batch size in sequences
    #[arg(long)]
    batch_seq: f64,
    /// Sequence length (defaults to --seq-len-default)
    #[arg(long)]
    seq_len: Option<u64>,
    /// Peak learning rate
    #[arg(long, conflicts_with_all = ["eta_base", "width"])]
    eta: Option<f64>,
    /// Base learning rate tuned on the proxy model
    #[arg(long, requires = "width")]
    eta_base: Option<f64>,
    /// Model width, for the muP learning-rate adjustment
    #[arg(long, requires = "eta_base")]
    width: Option<u64>,
    /// Timescale law file written by fit-tau
    #[arg(long)]
    tau_law: PathBuf,
    /// Optional critical-batch law; warns when the batch exceeds it
    #[arg(long)]
    bcrit_law: Option<PathBuf>,
}

#[derive(Serialize)]
struct LambdaReport {
    lambda: f64,
    tau_opt: f64,
    tpp: f64,
    eta_peak: f64,
    batch_tokens: f64,
    warnings: Vec<String>,
}

pub fn recommend_lambda(g: &GlobalOpts, a: RecommendLambdaArgs) -> Result<()> {
    let law: TauLaw = read_json(&a.tau_law)?;
    let eta = match (a.eta, a.eta_base, a.width) {
        (Some(e), _, _) => e,
        (None, Some(base), Some(w)) => check(mup_adjust_lr(base, g.proxy_width, w), || "muP adjustment".into())?,
        _ => return Err(invalid("give --eta, or --eta-base with --width")),
    };
    let seq_len = a.seq_len.unwrap_or(g.seq_len_default);
    let batch_tokens = a.batch_seq * seq_len as f64;
    let mut rec = check(lambda_opt(batch_tokens, eta, a.d, a.n, &law), || "recommendation".into())?;
    if let Some(path) = &a.bcrit_law {
        let crit = read_crit_law(path)?;
        check(rec.check_bcrit(a.batch_seq, a.d, &crit), || "critical-batch check".into())?;
    }
    let report = LambdaReport {
        lambda: rec.lambda,
        tau_opt: rec.tau_opt,
        tpp: rec.tpp,
        eta_peak: eta,
        batch_tokens,
        warnings: rec.warnings,
    };
    if g.json {
        return print_json(&report);
    }
    say!("lambda_opt = {:.6}", report.lambda);
    say!("tau_opt    = {:.5}", report.tau_opt);
    say!("TPP        = {:.3}", report.tpp);
    say!("eta_peak   = {:.6e}", report.eta_peak);
    for w in &report.warnings {
        say!("warning: {w}");
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitBoptArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Law file to write (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Per-(N, D) table of measured optimal batch sizes (CSV)
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Serialize)]
struct BoptReport {
    law: BatchScalingLaw,
    points: Vec<BoptPoint>,
}

pub fn fit_bopt(g: &GlobalOpts, a: FitBoptArgs, outputs: &mut Outputs) -> Result<()> {
    let runs = load(g, &a.runs)?;
    let mut points = Vec::new();
    for (key, group) in group_runs(&runs, &[GroupKey::NParams, GroupKey::DTokens]) {
        points.push(check(measure_bopt(&group), || format!("group N={}, D={}", key[0], key[1]))?);
    }
    let seq_len = runs.records()[0].seq_len;
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.d_tokens as f64, p.b_opt)).collect();
    let law = check(fit_batch_scaling_law(&xy, LawKind::BoptInD, seq_len, &bootstrap(g)), || {
        "fitting B_opt law".into()
    })?;
    let report = BoptReport { law, points };
    outputs.write_json(&a.out, &report)?;
    if let Some(path) = &a.table {
        let mut w = csv::Writer::from_writer(outputs.create(path)?);
        w.write_record(["n_params", "d_tokens", "b_opt_sequences"])?;
        for p in &report.points {
            w.write_record([p.n_params.to_string(), p.d_tokens.to_string(), p.b_opt.to_string()])?;
        }
        w.flush()?;
    }
    if g.json {
        return print_json(&report);
    }
    say!("{:>14} {:>16} {:>12}", "n_params", "d_tokens", "b_opt");
    for p in &report.points {
        say!("{:>14} {:>16} {:>12.1}", p.n_params, p.d_tokens, p.b_opt);
    }
    say!("B_opt = {:.5} * D^{:.4} sequences", law.law.coeff, law.law.exponent);
    say!("R^2 = {:.4}; exponent 10-90% interval: {}", law.law.r_squared, interval(law.law.exp_q10, law.law.exp_q90));
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitBcritArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Target losses, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    loss_targets: Vec<f64>,
    /// Output JSON: critical points and, with 3 or more, the fitted law
    #[arg(long)]
    out: PathBuf,
    /// Tradeoff pairs (steps, tokens, batch) per target, as CSV
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Ignore batch sizes below this many sequences
    #[arg(long)]
    min_batch: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct BcritReport {
    law: Option<BatchScalingLaw>,
    points: Vec<CritPoint>,
}

pub fn fit_bcrit(g: &GlobalOpts, a: FitBcritArgs, outputs: &mut Outputs) -> Result<()> {
    let runs = load(g, &a.runs)?;
    let mut analyses: Vec<CritAnalysis> = Vec::new();
    let mut seq_len = g.seq_len_default;
    for (key, group) in group_runs(&runs, &[GroupKey::NParams]) {
        let n = key[0];
        let family = check(fit_loss_family(&group, a.min_batch), || format!("model size N={n}"))?;
        seq_len = family.seq_len;
        for &target in &a.loss_targets {
            analyses.push(check(bcrit_analysis(&family, target), || format!("model size N={n}, loss {target}"))?);
        }
    }
    let points: Vec<CritPoint> = analyses.iter().map(|x| x.point).collect();
    let law = if points.len() >= 3 {
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.d_min, p.b_crit_sequences)).collect();
        Some(check(fit_batch_scaling_law(&xy, LawKind::BcritInDmin, seq_len, &bootstrap(g)), || {
            "fitting B_crit law".into()
        })?)
    } else {
        None
    };
    let report = BcritReport { law, points };
    outputs.write_json(&a.out, &report)?;
    if let Some(path) = &a.curves {
        let mut w = csv::Writer::from_writer(outputs.create(path)?);
        w.write_record(["n_params", "loss_target", "steps", "d_tokens", "b_sequences"])?;
        for x in &analyses {
            for p in &x.pairs {
                w.write_record([
                    x.n_params.to_string(),
                    x.point.loss_target.to_string(),
                    p.steps.to_string(),
                    p.d_tokens.to_string(),
                    p.batch_sequences.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    if g.json {
        return print_json(&report);
    }
    say!("{:>14} {:>8} {:>14} {:>12} {:>12}", "n_params", "loss", "d_min", "s_min", "b_crit_seq");
    for x in &analyses {
        let p = x.point;
        say!(
            "{:>14} {:>8.4} {:>14.4e} {:>12.1} {:>12.1}",
            x.n_params, p.loss_target, p.d_min, p.s_min, p.b_crit_sequences
        );
    }
    match &report.law {
        Some(l) => say!(
            "B_crit = {:.5} * D_min^{:.4} sequences (R^2 {:.4}; exponent interval {})",
            l.law.coeff,
            l.law.exponent,
            l.law.r_squared,
            interval(l.law.exp_q10, l.law.exp_q90)
        ),
        None => say!("fewer than 3 critical points; no law fitted"),
    }
    Ok(())
}

/// Accepts a bare law or a fit-bcrit report.
fn read_crit_law(path: &Path) -> Result<BatchScalingLaw> {
    let value: serde_json::Value = read_json(path)?;
    let law_value = match value.get("kind") {
        Some(_) => value,
        None => value.get("law").cloned().unwrap_or(value),
    };
    if law_value.is_null() {
        return Err(invalid(format!("{} holds no fitted law", path.display())));
    }
    serde_json::from_value(law_value).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

#[derive(Args, Debug)]
pub struct FitChinchillaArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Fit file to write (JSON)
    #[arg(long)]
    out: PathBuf,
}

pub fn fit_chinchilla(g: &GlobalOpts, a: FitChinchillaArgs, outputs: &mut Outputs) -> Result<()> {
    let runs = load(g, &a.runs)?;
    let fit = check(fit_surface(&best_per_nd(runs.records())), || "fitting loss surface".into())?;
    outputs.write_json(&a.out, &fit)?;
    if g.json {
        return print_json(&fit);
    }
    say!(
        "L(N, D) = {:.4} + {:.4} N^-{:.4} + {:.4} D^-{:.4}  (R^2 {:.5})",
        fit.irreducible, fit.n_const, fit.alpha, fit.d_const, fit.beta, fit.r_squared
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    /// Loss-surface fit (JSON)
    #[arg(long)]
    chinchilla: PathBuf,
    /// Critical-batch law: a bare law or a fit-bcrit report
    #[arg(long)]
    bcrit_law: PathBuf,
    /// Target loss shared by every curve
    #[arg(long)]
    loss: f64,
    #[arg(long, value_enum, default_value_t = TimeModelArg::FlopsPerBatch)]
    time_model: TimeModelArg,
    /// Model sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    n_grid: Vec<f64>,
    /// Every curve point, with its frontier flag (CSV)
    #[arg(long)]
    out_curves: PathBuf,
    /// Frontier points only (CSV)
    #[arg(long)]
    out_frontier: PathBuf,
    /// Frontier points as JSON
    #[arg(long)]
    out_json: Option<PathBuf>,
}

pub fn pareto(g: &GlobalOpts, a: ParetoArgs, outputs: &mut Outputs) -> Result<()> {
    let fit: ChinchillaFit = read_json(&a.chinchilla)?;
    check(fit.validate(), || a.chinchilla.display().to_string())?;
    let law = read_crit_law(&a.bcrit_law)?;
    let mut curves = Vec::new();
    for &n in &a.n_grid {
        match IsoLossCurve::build(&fit, &law, a.loss, n, None) {
            Ok(c) => curves.push(c),
            Err(FrontierError::BelowModelFloor { floor, .. }) => {
                let gap = a.loss - fit.irreducible;
                let feasible = if gap > 0.0 {
                    format!("N > {:.4e}", (fit.n_const / gap).powf(1.0 / fit.alpha))
                } else {
                    "none: loss is at or below the irreducible loss".into()
                };
                return Err(invalid(format!(
                    "loss {} is below the model floor {floor:.4} at N={n:e}; feasible model sizes: {feasible}",
                    a.loss
                )));
            }
            Err(e) => return Err(invalid(format!("N={n:e}: {e}"))),
        }
    }
    let model = match a.time_model {
        TimeModelArg::FlopsPerBatch => TimeModel::FlopsPerBatch,
        TimeModelArg::Steps => TimeModel::Steps,
    };
    let all = check(mark_dominance(&curves, model), || "frontier".into())?;
    let frontier: Vec<ParetoPoint> = all.iter().filter(|p| !p.dominated).copied().collect();
    write_points_csv(&all, outputs.create(&a.out_curves)?)?;
    write_points_csv(&frontier, outputs.create(&a.out_frontier)?)?;
    if let Some(path) = &a.out_json {
        outputs.write_json(path, &frontier)?;
    }
    if g.json {
        return print_json(&frontier);
    }
    say!(
        "{:>12} {:>9} {:>12} {:>12} {:>12} {:>10}",
        "n_params", "base_tpp", "b_seq", "c_plus", "time", "actual_tpp"
    );
    for p in &frontier {
        say!(
            "{:>12.4e} {:>9.2} {:>12.1} {:>12.4e} {:>12.4e} {:>10.2}",
            p.n_params,
            p.base_tpp(),
            p.b,
            p.c_plus,
            p.time.unwrap_or(f64::NAN),
            p.actual_tpp
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmaSimArgs {
    /// Step counts to compare, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    steps: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    warmup_frac: f64,
    #[arg(long, default_value_t = 1e-3)]
    eta_peak: f64,
    /// Timescale as a fraction of training; weight decay is set per step count
    #[arg(long)]
    tau: f64,
    /// Force the first smoothing factor to 1
    #[arg(long)]
    alpha1_is_one: bool,
    /// Coefficient curves (steps, data_fraction, density) as CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Deviation {
    steps_a: u64,
    steps_b: u64,
    max_rel_dev: f64,
}

pub fn ema_sim(g: &GlobalOpts, a: EmaSimArgs, outputs: &mut Outputs) -> Result<()> {
    if !(a.tau > 0.0 && a.tau.is_finite()) {
        return Err(invalid(format!("tau {} must be positive", a.tau)));
    }
    let mut curves: Vec<EmaCoefficients> = Vec::new();
    for &s in &a.steps {
        let sched = check(LrSchedule::new(s, a.warmup_frac, a.eta_peak), || format!("{s} steps"))?;
        let lambda = weight_decay_for_tau(a.eta_peak, a.tau, s);
        curves.push(ema_coefficients(&sched, lambda, a.alpha1_is_one).map_err(|e| match e {
            EmaError::AlphaOutOfRange { .. } => invalid(format!("{s} steps: {e}; tau too small for this schedule")),
            other => invalid(format!("{s} steps: {other}")),
        })?);
    }
    let mut w = csv::Writer::from_writer(outputs.create(&a.out)?);
    w.write_record(["steps", "data_fraction", "density"])?;
    for c in &curves {
        let s = c.total_steps as f64;
        for (i, d) in c.density().iter().enumerate() {
            w.write_record([c.total_steps.to_string(), ((i + 1) as f64 / s).to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    let mut devs = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            devs.push(Deviation {
                steps_a: curves[i].total_steps,
                steps_b: curves[j].total_steps,
                max_rel_dev: check(compare_shapes(&curves[i], &curves[j]), || "comparing curves".into())?,
            });
        }
    }
    if g.json {
        return print_json(&devs);
    }
    for c in &curves {
        say!(
            "S={:>8}  lambda={:.6e}  sum of weights={:.15}",
            c.total_steps,
            weight_decay_for_tau(a.eta_peak, a.tau, c.total_steps),
            c.total()
        );
    }
    for d in &devs {
        say!("S={} vs S={}: max relative deviation {:.4}%", d.steps_a, d.steps_b, 100.0 * d.max_rel_dev);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// World specification (JSON)
    #[arg(long)]
    world: PathBuf,
    /// Design rows: CSV or JSON array with n_params, d_tokens,
    /// batch_sequences, eta_peak and optionally weight_decay (blank means
    /// the planted optimum)
    #[arg(long)]
    design: PathBuf,
    /// Runs file to write (.csv or .jsonl)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
struct DesignInput {
    n_params: u64,
    d_tokens: u64,
    batch_sequences: u64,
    #[serde(default)]
    weight_decay: Option<f64>,
    eta_peak: f64,
}

fn read_design(path: &Path) -> Result<Vec<DesignInput>> {
    if path.extension().is_some_and(|e| e == "json") {
        return read_json(path);
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| invalid(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn synth(g: &GlobalOpts, a: SynthArgs, outputs: &mut Outputs) -> Result<()> {
    let mut world: WorldSpec = read_json(&a.world)?;
    if let Some(seed) = g.seed {
        world.seed = seed;
    }
    check(world.validate(), || a.world.display().to_string())?;
    let rows = read_design(&a.design)?
        .into_iter()
        .map(|r| {
            let weight_decay = match r.weight_decay {
                Some(w) => w,
                None => check(
                    world.optimal_weight_decay(r.n_params as f64, r.d_tokens as f64, r.batch_sequences as f64, r.eta_peak),
                    || "optimal weight decay".into(),
                )?,
            };
            Ok(DesignRow {
                n_params: r.n_params,
                d_tokens: r.d_tokens,
                batch_sequences: r.batch_sequences,
                weight_decay,
                eta_peak: r.eta_peak,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = check(gen_design(&world, &rows), || "generating runs".into())?;
    // create through the tracker so a failed write is cleaned up
    drop(outputs.create(&a.out)?);
    write_runs(&runs, &a.out, RunFormat::from_path(&a.out)).with_context(|| format!("writing {}", a.out.display()))?;
    if g.json {
        return print_json(&serde_json::json!({ "runs": runs.len(), "out": a.out }));
    }
    say!("wrote {} runs to {}", runs.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ConvertLawArgs {
    /// zhang (1.2x-data batch law in tokens) or deepseek (compute-based optimal batch)
    #[arg(long)]
    form: String,
    /// Coefficient of the zhang-form law, in tokens
    #[arg(long, default_value_t = 22.91)]
    coeff: f64,
    /// Exponent of the zhang-form law
    #[arg(long, default_value_t = 0.47)]
    exponent: f64,
    /// Compute budget in FLOPs for the deepseek form
    #[arg(long)]
    compute: Option<f64>,
    /// Sequence length (defaults to --seq-len-default)
    #[arg(long)]
    seq_len: Option<u64>,
    /// Write the converted law or batch size here (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn convert_law(g: &GlobalOpts, a: ConvertLawArgs, outputs: &mut Outputs) -> Result<()> {
    let form: LiteratureForm = check(a.form.parse(), || "--form".into())?;
    let input = match form {
        LiteratureForm::Zhang => LiteratureInput::Zhang {
            coeff_tokens: a.coeff,
            exponent: a.exponent,
        },
        LiteratureForm::DeepSeek => LiteratureInput::DeepSeek {
            compute_flops: a.compute.ok_or_else(|| invalid("the deepseek form needs --compute"))?,
        },
    };
    let seq_len = a.seq_len.unwrap_or(g.seq_len_default);
    let converted = check(convert_literature(input, seq_len), || "conversion".into())?;
    if let Some(path) = &a.out {
        outputs.write_json(path, &converted)?;
    }
    if g.json {
        return print_json(&converted);
    }
    match converted {
        Converted::Law(l) => say!(
            "B_crit = {:.5} * D_min^{} sequences (seq_len {})",
            l.law.coeff, l.law.exponent, l.seq_len
        ),
        Converted::Batch(b) => say!(
            "B_opt = {:.4e} tokens = {:.1} sequences (seq_len {})",
            b.tokens, b.sequences, b.seq_len
        ),
    }
    Ok(())
}
