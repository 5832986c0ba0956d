//! CSV ingestion with schema inference, numeric standardisation and
//! deterministic row splitting.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CbmError, Result};
use crate::types::{Dataset, EncodedMatrix, TargetVector, MISSING_LEVEL};

/// Lower bound applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// How the target column should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskHint {
    #[default]
    Infer,
    Binary,
    Multiclass,
    Regression,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Target column; `None` reads a scoring file without labels.
    pub target_column: Option<String>,
    pub task: TaskHint,
    pub delimiter: u8,
    pub na_tokens: Vec<String>,
    /// Fraction of non-NA cells allowed to fail float parsing in a column
    /// still inferred as numeric; failing cells are then imputed.
    pub max_float_parse_failures: f64,
    /// Columns read as categorical regardless of their content.
    pub categorical_columns: Vec<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            target_column: None,
            task: TaskHint::Infer,
            delimiter: b',',
            na_tokens: vec![String::new(), "NA".into(), "null".into()],
            max_float_parse_failures: 0.0,
            categorical_columns: Vec::new(),
        }
    }
}

impl IngestOptions {
    pub fn with_target(target: &str, task: TaskHint) -> Self {
        IngestOptions {
            target_column: Some(target.to_owned()),
            task,
            ..Default::default()
        }
    }

    fn is_na(&self, cell: &str) -> bool {
        self.na_tokens.iter().any(|t| t == cell)
    }
}

pub fn read_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CbmError::io(path, e))?;
    read_csv_from_reader(file, opts)
}

pub fn read_csv_from_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => CbmError::InvalidData(format!(
                "row {} has {len} fields, header has {expected_len}",
                i + 1
            )),
            _ => CbmError::Csv(e),
        })?;
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.to_owned());
        }
    }
    let n_rows = cells.first().map_or(0, Vec::len);
    if n_rows == 0 {
        return Err(CbmError::InvalidData("file has no data rows".into()));
    }

    let target_index = match &opts.target_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            CbmError::InvalidData(format!("target column '{name}' not found in header"))
        })?),
        None => None,
    };

    let mut builder = Dataset::builder();
    for (i, (name, column)) in headers.iter().zip(&cells).enumerate() {
        if Some(i) == target_index {
            continue;
        }
        let forced = opts.categorical_columns.iter().any(|c| c == name);
        match (!forced).then(|| infer_numeric(column, opts)).flatten() {
            Some(values) => builder = builder.numeric(name, values),
            None => {
                let levels: Vec<&str> = column
                    .iter()
                    .map(|c| {
                        if opts.is_na(c) {
                            MISSING_LEVEL
                        } else {
                            c.as_str()
                        }
                    })
                    .collect();
                builder = builder.categorical(name, &levels);
            }
        }
    }
    if let Some(t) = target_index {
        let (target, labels) = parse_target(&headers[t], &cells[t], opts)?;
        builder = builder.target(target);
        if let Some(labels) = labels {
            builder = builder.target_labels(labels);
        }
    }
    builder.build()
}

/// Parsed, mean-imputed values when the column qualifies as numeric.
fn infer_numeric(column: &[String], opts: &IngestOptions) -> Option<Vec<f64>> {
    let parsed: Vec<Option<f64>> = column
        .iter()
        .map(|c| {
            if opts.is_na(c) {
                None
            } else {
                c.trim().parse::<f64>().ok().filter(|v| v.is_finite())
            }
        })
        .collect();
    let non_na = column.iter().filter(|c| !opts.is_na(c)).count();
    let ok = parsed.iter().flatten().count();
    if non_na == 0 || ok == 0 {
        return None;
    }
    let failures = (non_na - ok) as f64 / non_na as f64;
    if failures > opts.max_float_parse_failures {
        return None;
    }
    let mean = parsed.iter().flatten().sum::<f64>() / ok as f64;
    Some(parsed.into_iter().map(|v| v.unwrap_or(mean)).collect())
}

fn parse_target(
    name: &str,
    column: &[String],
    opts: &IngestOptions,
) -> Result<(TargetVector, Option<Vec<String>>)> {
    if let Some(row) = column.iter().position(|c| opts.is_na(c)) {
        return Err(CbmError::InvalidData(format!(
            "target column '{name}' is missing a value at row {}",
            row + 1
        )));
    }
    let numeric: Option<Vec<f64>> = column
        .iter()
        .map(|c| c.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    let zero_one = numeric
        .as_ref()
        .is_some_and(|v| v.iter().all(|&x| x == 0.0 || x == 1.0));
    let distinct: BTreeSet<&str> = column.iter().map(String::as_str).collect();

    let task = match opts.task {
        TaskHint::Infer if zero_one => TaskHint::Binary,
        TaskHint::Infer if numeric.is_some() => TaskHint::Regression,
        TaskHint::Infer if distinct.len() == 2 => TaskHint::Binary,
        TaskHint::Infer => TaskHint::Multiclass,
        hint => hint,
    };
    match task {
        TaskHint::Regression => {
            let values = numeric.ok_or_else(|| {
                CbmError::InvalidData(format!("regression target '{name}' has non-numeric values"))
            })?;
            Ok((TargetVector::Regression(values), None))
        }
        TaskHint::Binary if zero_one => {
            let values = numeric.expect("checked above");
            let y = values.iter().map(|&v| v as u8).collect();
            Ok((TargetVector::Binary(y), Some(vec!["0".into(), "1".into()])))
        }
        TaskHint::Binary => {
            if distinct.len() != 2 {
                return Err(CbmError::InvalidData(format!(
                    "binary target '{name}' has {} distinct values",
                    distinct.len()
                )));
            }
            let labels = ordered_labels(column);
            let positive = &labels[1];
            let y = column.iter().map(|c| u8::from(c == positive)).collect();
            Ok((TargetVector::Binary(y), Some(labels)))
        }
        TaskHint::Multiclass => {
            let labels = ordered_labels(column);
            if labels.len() < 2 {
                return Err(CbmError::InvalidData(format!(
                    "multiclass target '{name}' has a single class"
                )));
            }
            let index: HashMap<&str, u32> = labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i as u32))
                .collect();
            let ids = column.iter().map(|c| index[c.as_str()]).collect();
            Ok((
                TargetVector::Multiclass {
                    classes: labels.len(),
                    ids,
                },
                Some(labels),
            ))
        }
        TaskHint::Infer => unreachable!("resolved above"),
    }
}

/// Distinct labels, numerically ordered when all parse as numbers and
/// lexicographically otherwise.
fn ordered_labels(column: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&str> = column.iter().map(String::as_str).collect();
    let mut labels: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
    let numeric: Option<Vec<f64>> = labels
        .iter()
        .map(|l| l.trim().parse::<f64>().ok())
        .collect();
    if let Some(keys) = numeric {
        let mut paired: Vec<(f64, String)> = keys.into_iter().zip(labels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        labels = paired.into_iter().map(|(_, l)| l).collect();
    }
    labels
}

/// Writes an encoded matrix as CSV with its column labels as header.
pub fn write_matrix_csv<W: Write>(z: &EncodedMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(z.column_labels())?;
    let mut buf = Vec::with_capacity(z.width());
    for row in z.rows() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush().map_err(|e| CbmError::io("<csv output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub std: f64,
}

impl ColumnScale {
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return ColumnScale {
                mean: 0.0,
                std: 1.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        ColumnScale {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Per-column standardisation of numeric columns, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<(String, ColumnScale)>,
}

impl ScalerParams {
    pub fn fit(data: &Dataset) -> Self {
        ScalerParams {
            columns: data
                .numeric_columns()
                .map(|(s, v)| (s.name.clone(), ColumnScale::fit(v)))
                .collect(),
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnScale> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// Standardises every numeric column of `data`; each must have been seen
    /// at fit time.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        data.map_numeric(|name, values| {
            let scale = self.column(name).ok_or_else(|| {
                CbmError::SchemaMismatch(format!("numeric column '{name}' was not scaled at fit"))
            })?;
            Ok(values.iter().map(|&v| scale.apply(v)).collect())
        })
    }
}

/// Partition of `0..n` into `k` folds whose sizes differ by at most one.
/// With `stratify`, each class is spread so that its per-fold count is within
/// one of proportional.
pub fn kfold_indices(
    n: usize,
    k: usize,
    seed: u64,
    stratify: Option<&[u32]>,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(CbmError::InvalidParameter(format!(
            "k-fold needs 2 <= k <= N, got k={k}, N={n}"
        )));
    }
    let order = shuffled_order(n, seed, stratify)?;
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (i, row) in order.into_iter().enumerate() {
        folds[i % k].push(row);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Rows shuffled under `seed`; with strata the classes are laid out one
/// after another so round-robin dealing preserves proportions.
fn shuffled_order(n: usize, seed: u64, stratify: Option<&[u32]>) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match stratify {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            Ok(order)
        }
        Some(labels) => {
            let groups = strata_groups(n, labels)?;
            let mut order = Vec::with_capacity(n);
            for mut group in groups.into_values() {
                group.shuffle(&mut rng);
                order.extend(group);
            }
            Ok(order)
        }
    }
}

fn strata_groups(n: usize, labels: &[u32]) -> Result<std::collections::BTreeMap<u32, Vec<usize>>> {
    if labels.len() != n {
        return Err(CbmError::InvalidParameter(format!(
            "{} strata labels for {n} rows",
            labels.len()
        )));
    }
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (row, &label) in labels.iter().enumerate() {
        groups.entry(label).or_default().push(row);
    }
    Ok(groups)
}

/// Disjoint (train, test) cover of `0..n` with `|test| = round(n * fraction)`.
pub fn train_test_split(
    n: usize,
    test_fraction: f64,
    seed: u64,
    stratify: Option<&[u32]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CbmError::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(CbmError::InvalidParameter(format!(
            "test fraction {test_fraction} of {n} rows leaves an empty side"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::with_capacity(n_test);
    let mut train = Vec::with_capacity(n - n_test);
    match stratify {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            test.extend_from_slice(&order[..n_test]);
            train.extend_from_slice(&order[n_test..]);
        }
        Some(labels) => {
            let groups: Vec<Vec<usize>> = strata_groups(n, labels)?.into_values().collect();
            // largest-remainder allocation of the test quota across classes
            let quotas: Vec<f64> = groups
                .iter()
                .map(|g| g.len() as f64 * n_test as f64 / n as f64)
                .collect();
            let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
            let mut remaining = n_test - take.iter().sum::<usize>();
            let mut by_remainder: Vec<usize> = (0..groups.len()).collect();
            by_remainder.sort_by(|&a, &b| {
                let ra = quotas[a] - quotas[a].floor();
                let rb = quotas[b] - quotas[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            for &g in by_remainder.iter().cycle() {
                if remaining == 0 {
                    break;
                }
                if take[g] < groups[g].len() {
                    take[g] += 1;
                    remaining -= 1;
                }
            }
            for (mut group, t) in groups.into_iter().zip(take) {
                group.shuffle(&mut rng);
                test.extend_from_slice(&group[..t]);
                train.extend_from_slice(&group[t..]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
