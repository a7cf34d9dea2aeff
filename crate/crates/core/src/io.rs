//! On-disk formats: data CSV, model JSON and selection report JSON.
//!
//! Real numbers are written in exponent form with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::error::Error;
use crate::loglin::{FactorBasis, LogLinearModel};
use crate::select::SelectionReport;
use crate::space::{Alphabet, Dataset};
use crate::vc::Prior;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] Error),
}

/// 17 significant digits, e.g. `5.9839427593536631e-1`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// An `f64` serialized with [`format_real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("non-finite number {}", self.0)));
        }
        RawValue::from_string(format_real(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Real)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_real(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFile {
    pub vars: Vec<usize>,
    pub values: Vec<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub alphabet: Alphabet,
    pub k: usize,
    pub lambda: Real,
    pub blocks: Vec<BlockFile>,
    pub normalized: bool,
}

impl ModelFile {
    pub fn from_model(model: &LogLinearModel) -> Self {
        let blocks = model
            .basis()
            .blocks()
            .iter()
            .map(|b| BlockFile {
                vars: b.vars().to_vec(),
                values: model.params()[b.offset()..b.offset() + b.len()]
                    .iter()
                    .map(|&v| Real(v))
                    .collect(),
            })
            .collect();
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            alphabet: model.alphabet().clone(),
            k: model.k(),
            lambda: Real(model.lambda()),
            blocks,
            normalized: model.is_normalized(),
        }
    }

    /// Rebuilds the model; block layout must match the canonical basis.
    pub fn into_model(self) -> Result<LogLinearModel, IoError> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(IoError::Format(format!(
                "unsupported model version {} (expected {MODEL_FORMAT_VERSION})",
                self.version
            )));
        }
        let basis = FactorBasis::new(self.alphabet, self.k)?;
        if self.blocks.len() != basis.blocks().len() {
            return Err(IoError::Format(format!(
                "model has {} blocks, degree {} needs {}",
                self.blocks.len(),
                self.k,
                basis.blocks().len()
            )));
        }
        let mut params = Vec::with_capacity(basis.dim());
        for (file, block) in self.blocks.iter().zip(basis.blocks()) {
            if file.vars != block.vars() || file.values.len() != block.len() {
                return Err(IoError::Format(format!(
                    "block {:?} does not match expected layout {:?} with {} values",
                    file.vars,
                    block.vars(),
                    block.len()
                )));
            }
            params.extend(file.values.iter().map(|r| r.0));
        }
        Ok(LogLinearModel::new(basis, params, self.lambda.0)?)
    }

    pub fn read(reader: impl Read) -> Result<Self, IoError> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn write(&self, mut writer: impl Write) -> Result<(), IoError> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub max_k: usize,
    pub ladder_base: Real,
    pub ladder_depth: usize,
    pub prior: Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub k: usize,
    pub n: usize,
    pub lambda: Real,
    pub h: u64,
    pub r_emp: Option<Real>,
    pub phi: Option<Real>,
    pub guaranteed_risk: Option<Real>,
    pub aic: Option<Real>,
    pub x2: Option<Real>,
    pub g2: Option<Real>,
    pub df: Option<u64>,
    pub x2_p: Option<Real>,
    pub g2_p: Option<Real>,
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinnerFile {
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    pub eta: Real,
    pub grid: GridFile,
    pub records: Vec<RecordFile>,
    pub winner: Option<WinnerFile>,
}

impl ReportFile {
    pub fn from_report(report: &SelectionReport, alphabet: &Alphabet) -> Self {
        let mut records: Vec<RecordFile> = report
            .records
            .iter()
            .map(|r| RecordFile {
                k: r.k,
                n: r.n,
                lambda: Real(r.lambda),
                h: r.h,
                r_emp: Some(Real(r.r_emp)),
                phi: Some(Real(r.phi)),
                guaranteed_risk: Some(Real(r.guaranteed_risk)),
                aic: Some(Real(r.baselines.aic)),
                x2: Some(Real(r.baselines.x2)),
                g2: Some(Real(r.baselines.g2)),
                df: Some(r.baselines.df.df),
                x2_p: Some(Real(r.baselines.x2_p)),
                g2_p: Some(Real(r.baselines.g2_p)),
                converged: Some(r.fit.converged),
                skipped_reason: None,
            })
            .collect();
        records.extend(report.skipped.iter().map(|s| RecordFile {
            k: s.k,
            n: s.n,
            lambda: Real(s.lambda),
            h: crate::vc::h_k(alphabet, s.k).unwrap_or(0),
            r_emp: None,
            phi: None,
            guaranteed_risk: None,
            aic: None,
            x2: None,
            g2: None,
            df: None,
            x2_p: None,
            g2_p: None,
            converged: None,
            skipped_reason: Some(s.reason.clone()),
        }));
        records.sort_by_key(|r| (r.k, r.n));
        ReportFile {
            version: REPORT_FORMAT_VERSION,
            eta: Real(report.eta),
            grid: GridFile {
                max_k: report.max_k,
                ladder_base: Real(report.penalty.ladder_base),
                ladder_depth: report.penalty.ladder_depth,
                prior: report.penalty.prior.clone(),
            },
            records,
            winner: report.winner.map(|(k, n)| WinnerFile { k, n }),
        }
    }

    pub fn read(reader: impl Read) -> Result<Self, IoError> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn write(&self, mut writer: impl Write) -> Result<(), IoError> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

/// Column name of the optional multiplicity column.
pub const COUNT_COLUMN: &str = "count";

/// A parsed data CSV before it is bound to an alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCsv {
    pub names: Vec<String>,
    rows: Vec<(u64, Vec<String>, u64)>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl DataCsv {
    pub fn parse(reader: impl Read) -> Result<Self, IoError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| csv_error(&e))?,
            None => return Err(IoError::Parse { line: 1, msg: "missing header".into() }),
        };
        let mut names: Vec<String> = header.iter().map(str::to_string).collect();
        let has_count = names.last().is_some_and(|n| n == COUNT_COLUMN);
        if has_count {
            names.pop();
        }
        if names.is_empty() {
            return Err(IoError::Parse { line: 1, msg: "header names no variables".into() });
        }
        if let Some(bad) = names.iter().find(|n| !valid_token(n)) {
            return Err(IoError::Parse {
                line: 1,
                msg: format!("invalid variable name `{bad}`"),
            });
        }
        let width = names.len() + usize::from(has_count);
        let mut rows = Vec::new();
        for record in records {
            let record = record.map_err(|e| csv_error(&e))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != width {
                return Err(IoError::Parse {
                    line,
                    msg: format!("expected {width} columns, found {}", record.len()),
                });
            }
            let labels: Vec<String> = record.iter().take(names.len()).map(str::to_string).collect();
            let count = if has_count {
                let raw = &record[names.len()];
                raw.parse::<u64>().map_err(|_| IoError::Parse {
                    line,
                    msg: format!("invalid count `{raw}`"),
                })?
            } else {
                1
            };
            rows.push((line, labels, count));
        }
        Ok(DataCsv { names, rows })
    }

    /// Maps labels to categories of `alphabet`, whose names must match the header.
    pub fn to_dataset(&self, alphabet: &Alphabet) -> Result<Dataset, IoError> {
        if self.names.as_slice() != alphabet.names() {
            return Err(IoError::Model(Error::AlphabetMismatch(format!(
                "data columns {:?} vs alphabet variables {:?}",
                self.names,
                alphabet.names()
            ))));
        }
        let mut counts = BTreeMap::new();
        let mut tuple = vec![0; self.names.len()];
        for (line, labels, count) in &self.rows {
            for (var, label) in labels.iter().enumerate() {
                tuple[var] = alphabet.label_index(var, label).ok_or_else(|| IoError::Parse {
                    line: *line,
                    msg: format!("unknown value `{label}` for variable `{}`", self.names[var]),
                })?;
            }
            let state = alphabet.encode(&tuple)?;
            *counts.entry(state).or_insert(0u64) += count;
        }
        Ok(Dataset::new(alphabet.clone(), counts)?)
    }
}

fn csv_error(e: &csv::Error) -> IoError {
    IoError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        msg: e.to_string(),
    }
}

/// Aggregated rows in state order with a trailing `count` column.
pub fn write_data(mut writer: impl Write, d: &Dataset) -> Result<(), IoError> {
    let alphabet = d.alphabet();
    writeln!(writer, "{},{COUNT_COLUMN}", alphabet.names().join(","))?;
    for (&s, &c) in d.counts() {
        let tuple = alphabet.decode(s)?;
        let labels: Vec<&str> = tuple
            .iter()
            .enumerate()
            .map(|(v, &x)| alphabet.value_labels()[v][x].as_str())
            .collect();
        writeln!(writer, "{},{c}", labels.join(","))?;
    }
    Ok(())
}
