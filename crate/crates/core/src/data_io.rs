//! CSV datasets, attribute-partition files and black-box oracle labels.
//!
//! The oracle protocol is line oriented: the command receives one CSV row
//! (no header) per line on stdin and must print one integer label per line
//! on stdout, in the same order, then exit with status 0.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::Deserialize;
use thiserror::Error;

use crate::evidence::{Attribute, AttributePartition};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV parse error at line {line}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Csv {
        line: u64,
        column: Option<String>,
        message: String,
    },
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle protocol error{}: {message}", line.map(|l| format!(" at output line {l}")).unwrap_or_default())]
    Oracle {
        line: Option<usize>,
        message: String,
    },
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn oracle(line: Option<usize>, message: impl Into<String>) -> Self {
        Self::Oracle {
            line,
            message: message.into(),
        }
    }
}

/// A rectangular table of finite reals with an optional label column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    /// Name of the column the labels were read from.
    pub label_column: Option<String>,
    /// `label_names[i]` is the original value mapped to label `i`, present
    /// when the label column was not already integer-valued.
    pub label_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn num_features(&self) -> usize {
        self.header.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Projects the dataset onto the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Dataset, DataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| DataError::MissingColumn(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Dataset {
            header: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i]).collect())
                .collect(),
            ..self.clone()
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_csv(file, label_column)
}

/// Parses CSV text with a header row. Row order is preserved.
pub fn read_csv<R: Read>(reader: R, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let csv_err = |e: csv::Error| DataError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        column: None,
        message: e.to_string(),
    };
    let full_header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            full_header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };
    let header: Vec<String> = full_header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(header.len());
        for (i, cell) in record.iter().enumerate() {
            if Some(i) == label_idx {
                raw_labels.push(cell.trim().to_string());
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| DataError::Csv {
                line,
                column: Some(full_header[i].clone()),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(DataError::Csv {
                    line,
                    column: Some(full_header[i].clone()),
                    message: format!("value '{cell}' is not finite"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    let (labels, label_names) = match label_idx {
        None => (None, None),
        Some(_) => {
            let ints: Option<Vec<usize>> = raw_labels.iter().map(|s| s.parse().ok()).collect();
            match ints {
                Some(ints) => (Some(ints), None),
                None => {
                    let names: Vec<String> = raw_labels
                        .iter()
                        .cloned()
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    let ints = raw_labels
                        .iter()
                        .map(|s| names.binary_search(s).expect("name collected above"))
                        .collect();
                    (Some(ints), Some(names))
                }
            }
        }
    };
    Ok(Dataset {
        header,
        rows,
        labels,
        label_column: label_column.map(str::to_string),
        label_names,
    })
}

/// Formats one row the way it is sent to an oracle: shortest round-trip
/// decimal per value, comma separated.
pub fn format_row(row: &[f64]) -> String {
    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
    cells.join(",")
}

/// Writes the dataset as CSV (features, then the label column if any).
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| DataError::Csv {
        line: 0,
        column: None,
        message: e.to_string(),
    };
    let mut header = data.header.clone();
    if data.labels.is_some() {
        header.push(data.label_column.clone().unwrap_or_else(|| "label".into()));
    }
    w.write_record(&header).map_err(wrap)?;
    for (i, row) in data.rows.iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &data.labels {
            cells.push(match &data.label_names {
                Some(names) => names[labels[i]].clone(),
                None => labels[i].to_string(),
            });
        }
        w.write_record(&cells).map_err(wrap)?;
    }
    w.flush().map_err(|e| DataError::Csv {
        line: 0,
        column: None,
        message: e.to_string(),
    })
}

/// Where class labels for training come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleSpec {
    /// Labels already stored in the named CSV column.
    LabelColumn(String),
    /// A shell command speaking the line protocol described in the module
    /// docs.
    Subprocess(String),
}

impl OracleSpec {
    pub fn from_options(
        label_column: Option<String>,
        command: Option<String>,
    ) -> Result<Self, DataError> {
        match (label_column, command) {
            (Some(c), None) => Ok(Self::LabelColumn(c)),
            (None, Some(cmd)) => Ok(Self::Subprocess(cmd)),
            (Some(_), Some(_)) => Err(DataError::Config(
                "give either a label column or an oracle command, not both".into(),
            )),
            (None, None) => Err(DataError::Config(
                "a label column or an oracle command is required".into(),
            )),
        }
    }
}

/// Labels for every row of `data`, from the stored column or by querying
/// the oracle command.
pub fn query_oracle(spec: &OracleSpec, data: &Dataset) -> Result<Vec<usize>, DataError> {
    match spec {
        OracleSpec::LabelColumn(name) => match (&data.labels, &data.label_column) {
            (Some(labels), Some(col)) if col == name => Ok(labels.clone()),
            _ => Err(DataError::MissingColumn(name.clone())),
        },
        OracleSpec::Subprocess(cmd) => run_oracle(cmd, &data.rows),
    }
}

fn run_oracle(cmd: &str, rows: &[Vec<f64>]) -> Result<Vec<usize>, DataError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| DataError::oracle(None, format!("cannot start '{cmd}': {e}")))?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let input: String = rows.iter().map(|r| format_row(r) + "\n").collect();
    let writer = std::thread::spawn(move || {
        // A child that stops reading early shows up as a count mismatch or
        // exit status below, so write errors are not reported separately.
        let _ = stdin.write_all(input.as_bytes());
    });

    let stdout = child.stdout.take().expect("stdout is piped");
    let mut labels = Vec::with_capacity(rows.len());
    let mut malformed = None;
    for (i, line) in BufReader::new(stdout).lines().enumerate() {
        let line = line.map_err(|e| DataError::oracle(Some(i + 1), e.to_string()))?;
        match line.trim().parse::<usize>() {
            Ok(label) => labels.push(label),
            Err(_) if malformed.is_none() => {
                malformed = Some(DataError::oracle(
                    Some(i + 1),
                    format!("expected a nonnegative integer label, got '{line}'"),
                ))
            }
            Err(_) => {}
        }
    }
    let _ = writer.join();
    let status = child
        .wait()
        .map_err(|e| DataError::oracle(None, e.to_string()))?;
    if !status.success() {
        return Err(DataError::oracle(
            None,
            format!("oracle exited with {status}"),
        ));
    }
    if let Some(err) = malformed {
        return Err(err);
    }
    if labels.len() != rows.len() {
        return Err(DataError::oracle(
            Some(labels.len() + 1),
            format!(
                "oracle returned {} labels for {} rows",
                labels.len(),
                rows.len()
            ),
        ));
    }
    Ok(labels)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    groups: Vec<GroupFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupFile {
    name: String,
    features: Vec<FeatureRef>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FeatureRef {
    Index(usize),
    Name(String),
}

/// Name given to the group collecting unassigned features in lenient mode.
pub const RESIDUAL_GROUP_NAME: &str = "unassigned";

pub fn load_partition(
    path: impl AsRef<Path>,
    header: &[String],
    lenient: bool,
) -> Result<AttributePartition, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_partition(&text, header, lenient)
}

/// Parses `{"groups":[{"name":…,"features":[index or name, …]}, …]}`.
/// Group order is kept. Features left out are an error unless `lenient`, in
/// which case they form a trailing group named [`RESIDUAL_GROUP_NAME`].
pub fn parse_partition(
    text: &str,
    header: &[String],
    lenient: bool,
) -> Result<AttributePartition, DataError> {
    let file: PartitionFile = serde_json::from_str(text)
        .map_err(|e| DataError::Config(format!("partition file: {e}")))?;
    let n = header.len();
    let mut owner: Vec<Option<&str>> = vec![None; n];
    let mut groups = Vec::with_capacity(file.groups.len());
    for g in &file.groups {
        if g.features.is_empty() {
            return Err(DataError::Config(format!("group '{}' is empty", g.name)));
        }
        let mut features = Vec::with_capacity(g.features.len());
        for f in &g.features {
            let idx = match f {
                FeatureRef::Index(i) if *i < n => *i,
                FeatureRef::Index(i) => {
                    return Err(DataError::Config(format!(
                        "group '{}': feature index {i} out of range for {n} features",
                        g.name
                    )))
                }
                FeatureRef::Name(name) => {
                    header.iter().position(|h| h == name).ok_or_else(|| {
                        DataError::Config(format!("group '{}': unknown feature '{name}'", g.name))
                    })?
                }
            };
            if let Some(prev) = owner[idx] {
                return Err(DataError::Config(format!(
                    "group '{}': feature '{}' already assigned to group '{prev}'",
                    g.name, header[idx]
                )));
            }
            owner[idx] = Some(&g.name);
            features.push(idx);
        }
        groups.push(Attribute::named(g.name.clone(), features));
    }
    let unassigned: Vec<usize> = (0..n).filter(|&i| owner[i].is_none()).collect();
    if !unassigned.is_empty() {
        if !lenient {
            let names: Vec<&str> = unassigned.iter().map(|&i| header[i].as_str()).collect();
            return Err(DataError::Config(format!(
                "features not assigned to any group: {}",
                names.join(", ")
            )));
        }
        groups.push(Attribute::named(RESIDUAL_GROUP_NAME, unassigned));
    }
    AttributePartition::new(groups, n).map_err(|e| DataError::Config(e.to_string()))
}
