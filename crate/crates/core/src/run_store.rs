//! Training-run records and their on-disk formats.
//!
//! Token counts (`d_tokens`, and batch size via [`RunRecord::batch_tokens`])
//! are the canonical unit; batch size is stored in sequences together with an
//! explicit `seq_len` so the conversion is lossless.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::timescale::mup_adjust_lr;

pub const DEFAULT_PROXY_WIDTH: u64 = 256;
pub const DEFAULT_SEQ_LEN: u64 = 2048;

/// Relative tolerance for the μP consistency check between `eta_base`,
/// `width` and `eta_peak`.
const MUP_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RunStoreError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("run `{run_id}` violates invariant: {rule}")]
    InvariantViolation { run_id: String, rule: String },
    #[error("parse error on line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn violation(run_id: &str, rule: impl Into<String>) -> RunStoreError {
    RunStoreError::InvariantViolation {
        run_id: run_id.to_string(),
        rule: rule.into(),
    }
}

/// One completed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub n_params: u64,
    pub d_tokens: u64,
    pub batch_sequences: u64,
    pub seq_len: u64,
    /// Base μP learning rate tuned on the proxy model.
    pub eta_base: Option<f64>,
    /// Width-adjusted peak learning rate.
    pub eta_peak: f64,
    pub weight_decay: f64,
    pub val_loss: f64,
    pub width: Option<u64>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn batch_tokens(&self) -> u64 {
        self.batch_sequences * self.seq_len
    }

    /// Optimizer steps, `D / B` with both in tokens.
    pub fn steps(&self) -> f64 {
        self.d_tokens as f64 / self.batch_tokens() as f64
    }

    /// Tokens per parameter.
    pub fn tpp(&self) -> f64 {
        self.d_tokens as f64 / self.n_params as f64
    }

    /// AdamW timescale as a fraction of training, evaluated at peak LR.
    /// `None` when weight decay is zero.
    pub fn tau_ema(&self) -> Option<f64> {
        crate::timescale::tau_ema(
            self.batch_tokens() as f64,
            self.eta_peak,
            self.weight_decay,
            self.d_tokens as f64,
        )
        .ok()
    }

    pub fn validate(&self, proxy_width: u64) -> Result<(), RunStoreError> {
        let id = self.run_id.as_str();
        if id.is_empty() {
            return Err(violation(id, "run_id must be non-empty"));
        }
        for (name, v) in [
            ("n_params", self.n_params),
            ("d_tokens", self.d_tokens),
            ("batch_sequences", self.batch_sequences),
            ("seq_len", self.seq_len),
        ] {
            if v == 0 {
                return Err(violation(id, format!("{name} must be positive")));
            }
        }
        let batch_tokens = self
            .batch_sequences
            .checked_mul(self.seq_len)
            .ok_or_else(|| violation(id, "batch_sequences * seq_len overflows"))?;
        if batch_tokens > self.d_tokens {
            return Err(violation(
                id,
                format!("batch_tokens ({batch_tokens}) must not exceed d_tokens ({})", self.d_tokens),
            ));
        }
        if !(self.eta_peak > 0.0 && self.eta_peak.is_finite()) {
            return Err(violation(id, "eta_peak must be positive"));
        }
        if let Some(eb) = self.eta_base {
            if !(eb > 0.0 && eb.is_finite()) {
                return Err(violation(id, "eta_base must be positive"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(violation(id, "weight_decay must be non-negative"));
        }
        if !(self.val_loss > 0.0 && self.val_loss.is_finite()) {
            return Err(violation(id, "val_loss must be positive"));
        }
        if self.width == Some(0) {
            return Err(violation(id, "width must be positive"));
        }
        if let (Some(eb), Some(w)) = (self.eta_base, self.width) {
            let expected = mup_adjust_lr(eb, proxy_width, w).map_err(|e| violation(id, e.to_string()))?;
            if ((self.eta_peak - expected) / expected).abs() > MUP_REL_TOL {
                return Err(violation(
                    id,
                    format!(
                        "eta_peak {} != eta_base * proxy_width / width = {expected}",
                        self.eta_peak
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub proxy_width: u64,
    pub seq_len_default: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            proxy_width: DEFAULT_PROXY_WIDTH,
            seq_len_default: DEFAULT_SEQ_LEN,
        }
    }
}

/// A validated, immutable collection of runs with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSet {
    records: Vec<RunRecord>,
    pub seq_len_default: u64,
}

impl RunSet {
    pub fn new(records: Vec<RunRecord>, opts: LoadOptions) -> Result<Self, RunStoreError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate(opts.proxy_width)?;
            if !seen.insert(r.run_id.as_str()) {
                return Err(violation(&r.run_id, "run_id must be unique"));
            }
        }
        Ok(Self {
            records,
            seq_len_default: opts.seq_len_default,
        })
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RunRecord> {
        self.records.iter()
    }
}

impl<'a> IntoIterator for &'a RunSet {
    type Item = &'a RunRecord;
    type IntoIter = std::slice::Iter<'a, RunRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunFormat {
    Csv,
    Jsonl,
}

impl RunFormat {
    /// Guesses the format from a file extension; anything but `.jsonl` /
    /// `.ndjson` is treated as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => RunFormat::Jsonl,
            _ => RunFormat::Csv,
        }
    }
}

const KNOWN_FIELDS: [&str; 10] = [
    "run_id",
    "n_params",
    "d_tokens",
    "batch_sequences",
    "seq_len",
    "eta_base",
    "eta_peak",
    "weight_decay",
    "val_loss",
    "width",
];

const REQUIRED_FIELDS: [&str; 7] = [
    "run_id",
    "n_params",
    "d_tokens",
    "batch_sequences",
    "seq_len",
    "weight_decay",
    "val_loss",
];

fn parse_count(text: &str) -> Result<u64, String> {
    let t = text.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = t.parse().map_err(|_| format!("`{t}` is not a number"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 {
        Ok(v as u64)
    } else {
        Err(format!("`{t}` is not a non-negative integer"))
    }
}

fn parse_real(text: &str) -> Result<f64, String> {
    let t = text.trim();
    t.parse::<f64>().map_err(|_| format!("`{t}` is not a number"))
}

/// Field values of one input row, as text, keyed by column name.
struct RawRow {
    line: u64,
    fields: BTreeMap<String, String>,
}

impl RawRow {
    fn get(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str).filter(|s| !s.trim().is_empty())
    }

    fn err(&self, message: impl Into<String>) -> RunStoreError {
        RunStoreError::ParseError {
            line: self.line,
            message: message.into(),
        }
    }

    fn required(&self, name: &str) -> Result<&str, RunStoreError> {
        self.get(name)
            .ok_or_else(|| self.err(format!("empty value for required column `{name}`")))
    }

    fn count(&self, name: &str) -> Result<u64, RunStoreError> {
        parse_count(self.required(name)?).map_err(|m| self.err(format!("{name}: {m}")))
    }

    fn opt_count(&self, name: &str) -> Result<Option<u64>, RunStoreError> {
        self.get(name)
            .map(|t| parse_count(t).map_err(|m| self.err(format!("{name}: {m}"))))
            .transpose()
    }

    fn real(&self, name: &str) -> Result<f64, RunStoreError> {
        parse_real(self.required(name)?).map_err(|m| self.err(format!("{name}: {m}")))
    }

    fn opt_real(&self, name: &str) -> Result<Option<f64>, RunStoreError> {
        self.get(name)
            .map(|t| parse_real(t).map_err(|m| self.err(format!("{name}: {m}"))))
            .transpose()
    }

    fn into_record(self, opts: &LoadOptions) -> Result<RunRecord, RunStoreError> {
        let run_id = self.required("run_id")?.trim().to_string();
        let eta_base = self.opt_real("eta_base")?;
        let width = self.opt_count("width")?;
        let eta_peak = match (self.opt_real("eta_peak")?, eta_base, width) {
            (Some(p), _, _) => p,
            (None, Some(eb), Some(w)) => mup_adjust_lr(eb, opts.proxy_width, w).map_err(|e| violation(&run_id, e.to_string()))?,
            (None, _, _) => return Err(violation(&run_id, "eta_peak missing and not derivable from eta_base + width")),
        };
        let tags = self
            .fields
            .iter()
            .filter(|(k, v)| !KNOWN_FIELDS.contains(&k.as_str()) && !v.is_empty())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(RunRecord {
            n_params: self.count("n_params")?,
            d_tokens: self.count("d_tokens")?,
            batch_sequences: self.count("batch_sequences")?,
            seq_len: self.count("seq_len")?,
            eta_base,
            eta_peak,
            weight_decay: self.real("weight_decay")?,
            val_loss: self.real("val_loss")?,
            width,
            tags,
            run_id,
        })
    }
}

fn check_columns<'a>(columns: impl IntoIterator<Item = &'a str>) -> Result<(), RunStoreError> {
    let present: BTreeSet<&str> = columns.into_iter().collect();
    for name in REQUIRED_FIELDS {
        if !present.contains(name) {
            return Err(RunStoreError::MissingColumn(name.to_string()));
        }
    }
    if !present.contains("eta_peak") {
        for name in ["eta_base", "width"] {
            if !present.contains(name) {
                return Err(RunStoreError::MissingColumn(format!("eta_peak (or {name})")));
            }
        }
    }
    Ok(())
}

/// Reads runs from CSV (header row required).
pub fn read_runs_csv<R: Read>(reader: R, opts: LoadOptions) -> Result<RunSet, RunStoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| RunStoreError::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(RunStoreError::MissingColumn(REQUIRED_FIELDS[0].to_string()));
    }
    check_columns(headers.iter())?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| RunStoreError::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let fields = headers
            .iter()
            .zip(row.iter())
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect();
        records.push(RawRow { line, fields }.into_record(&opts)?);
    }
    RunSet::new(records, opts)
}

/// Reads runs from JSON lines, one object per non-blank line.
pub fn read_runs_jsonl<R: Read>(reader: R, opts: LoadOptions) -> Result<RunSet, RunStoreError> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = serde_json::from_str(&line).map_err(|e| RunStoreError::ParseError {
            line: line_no,
            message: e.to_string(),
        })?;
        check_columns(obj.keys().map(String::as_str))?;
        let fields = obj
            .into_iter()
            .filter(|(_, v)| !v.is_null())
            .map(|(k, v)| {
                let text = match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, text)
            })
            .collect();
        records.push(RawRow { line: line_no, fields }.into_record(&opts)?);
    }
    RunSet::new(records, opts)
}

pub fn load_runs(path: &Path, format: RunFormat, opts: LoadOptions) -> Result<RunSet, RunStoreError> {
    let file = File::open(path)?;
    match format {
        RunFormat::Csv => read_runs_csv(file, opts),
        RunFormat::Jsonl => read_runs_jsonl(file, opts),
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn tag_columns(rs: &RunSet) -> Vec<String> {
    let keys: BTreeSet<&String> = rs.iter().flat_map(|r| r.tags.keys()).collect();
    keys.into_iter().cloned().collect()
}

pub fn write_runs_csv<W: Write>(rs: &RunSet, writer: W) -> Result<(), RunStoreError> {
    let tags = tag_columns(rs);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = KNOWN_FIELDS.to_vec();
    header.extend(tags.iter().map(String::as_str));
    let csv_err = |e: csv::Error| RunStoreError::Io(std::io::Error::other(e));
    wtr.write_record(&header).map_err(csv_err)?;
    for r in rs {
        let mut row = vec![
            r.run_id.clone(),
            r.n_params.to_string(),
            r.d_tokens.to_string(),
            r.batch_sequences.to_string(),
            r.seq_len.to_string(),
            r.eta_base.map(format_real).unwrap_or_default(),
            format_real(r.eta_peak),
            format_real(r.weight_decay),
            format_real(r.val_loss),
            r.width.map(|w| w.to_string()).unwrap_or_default(),
        ];
        row.extend(tags.iter().map(|k| r.tags.get(k).cloned().unwrap_or_default()));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_runs_jsonl<W: Write>(rs: &RunSet, mut writer: W) -> Result<(), RunStoreError> {
    for r in rs {
        let mut obj = Map::new();
        for (k, v) in &r.tags {
            obj.insert(k.clone(), Value::String(v.clone()));
        }
        obj.insert("run_id".into(), r.run_id.clone().into());
        obj.insert("n_params".into(), r.n_params.into());
        obj.insert("d_tokens".into(), r.d_tokens.into());
        obj.insert("batch_sequences".into(), r.batch_sequences.into());
        obj.insert("seq_len".into(), r.seq_len.into());
        obj.insert("eta_base".into(), r.eta_base.into());
        obj.insert("eta_peak".into(), r.eta_peak.into());
        obj.insert("weight_decay".into(), r.weight_decay.into());
        obj.insert("val_loss".into(), r.val_loss.into());
        obj.insert("width".into(), r.width.into());
        serde_json::to_writer(&mut writer, &obj).map_err(|e| RunStoreError::Io(e.into()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_runs(rs: &RunSet, path: &Path, format: RunFormat) -> Result<(), RunStoreError> {
    let file = File::create(path)?;
    match format {
        RunFormat::Csv => write_runs_csv(rs, file),
        RunFormat::Jsonl => write_runs_jsonl(rs, file),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    NParams,
    DTokens,
    BatchSequences,
}

impl GroupKey {
    fn of(self, r: &RunRecord) -> u64 {
        match self {
            GroupKey::NParams => r.n_params,
            GroupKey::DTokens => r.d_tokens,
            GroupKey::BatchSequences => r.batch_sequences,
        }
    }
}

/// Partitions runs by the values of `keys`, in the given key order.
pub fn group_runs(rs: &RunSet, keys: &[GroupKey]) -> BTreeMap<Vec<u64>, Vec<RunRecord>> {
    group_records(rs.records(), keys)
}

pub fn group_records(records: &[RunRecord], keys: &[GroupKey]) -> BTreeMap<Vec<u64>, Vec<RunRecord>> {
    assert!(!keys.is_empty(), "group_runs needs at least one key");
    let mut groups: BTreeMap<Vec<u64>, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        let key = keys.iter().map(|k| k.of(r)).collect();
        groups.entry(key).or_default().push(r.clone());
    }
    groups
}
