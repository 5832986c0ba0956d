//! Shared data model: task kinds, datasets with interned categorical levels,
//! target vectors and the dense encoded matrix produced by every encoder.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CbmError, Result};

/// Reserved level assigned to missing categorical cells.
pub const MISSING_LEVEL: &str = "__missing__";

/// The learning problem a target describes. Binary and two-class multiclass
/// are distinct: the former is encoded with a Beta posterior, the latter with
/// a Dirichlet posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Binary,
    Multiclass { classes: usize },
    Regression,
}

impl TaskKind {
    pub fn multiclass(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(CbmError::InvalidParameter(format!(
                "multiclass task needs at least 2 classes, got {classes}"
            )));
        }
        Ok(TaskKind::Multiclass { classes })
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Binary => "binary",
            TaskKind::Multiclass { .. } => "multiclass",
            TaskKind::Regression => "regression",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Multiclass { classes } => write!(f, "multiclass({classes})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Number of posterior moments emitted per model parameter (Q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum MomentCount {
    One,
    Two,
}

impl MomentCount {
    pub fn new(q: usize) -> Result<Self> {
        match q {
            1 => Ok(MomentCount::One),
            2 => Ok(MomentCount::Two),
            other => Err(CbmError::UnsupportedMomentCount(other)),
        }
    }

    pub fn get(self) -> usize {
        match self {
            MomentCount::One => 1,
            MomentCount::Two => 2,
        }
    }
}

impl TryFrom<usize> for MomentCount {
    type Error = CbmError;

    fn try_from(q: usize) -> Result<Self> {
        MomentCount::new(q)
    }
}

impl From<MomentCount> for usize {
    fn from(q: MomentCount) -> usize {
        q.get()
    }
}

/// Width contributed by one encoded categorical column.
pub fn block_width(task: TaskKind, q: MomentCount) -> usize {
    let q = q.get();
    match task {
        TaskKind::Binary => q,
        TaskKind::Multiclass { classes } => classes * q,
        TaskKind::Regression => 2 * q,
    }
}

/// Total width of a CBM-encoded matrix: one block per categorical column
/// followed by the numeric passthrough columns.
pub fn encoded_width(
    task: TaskKind,
    categorical_count: usize,
    q: usize,
    numeric_count: usize,
) -> Result<usize> {
    let q = MomentCount::new(q)?;
    Ok(categorical_count * block_width(task, q) + numeric_count)
}

/// Interned identifier of a categorical level within one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelId(u32);

impl LevelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// String interner for categorical levels, shared by every categorical
/// column of a dataset.
#[derive(Debug, Clone, Default)]
pub struct LevelInterner {
    levels: Vec<String>,
    ids: HashMap<String, LevelId>,
}

impl LevelInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, level: &str) -> LevelId {
        if let Some(&id) = self.ids.get(level) {
            return id;
        }
        let id = LevelId(self.levels.len() as u32);
        self.levels.push(level.to_owned());
        self.ids.insert(level.to_owned(), id);
        id
    }

    pub fn get(&self, level: &str) -> Option<LevelId> {
        self.ids.get(level).copied()
    }

    pub fn resolve(&self, id: LevelId) -> &str {
        &self.levels[id.index()]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Categorical(Vec<LevelId>),
    Numeric(Vec<f64>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Categorical(v) => v.len(),
            ColumnData::Numeric(v) => v.len(),
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect())
            }
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Observed target values, one variant per task kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum TargetVector {
    Binary(Vec<u8>),
    Multiclass { classes: usize, ids: Vec<u32> },
    Regression(Vec<f64>),
}

impl TargetVector {
    pub fn len(&self) -> usize {
        match self {
            TargetVector::Binary(v) => v.len(),
            TargetVector::Multiclass { ids, .. } => ids.len(),
            TargetVector::Regression(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> TaskKind {
        match self {
            TargetVector::Binary(_) => TaskKind::Binary,
            TargetVector::Multiclass { classes, .. } => TaskKind::Multiclass { classes: *classes },
            TargetVector::Regression(_) => TaskKind::Regression,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetVector::Binary(v) => {
                if let Some(bad) = v.iter().find(|&&y| y > 1) {
                    return Err(CbmError::InvalidData(format!(
                        "binary target value {bad} is not 0 or 1"
                    )));
                }
            }
            TargetVector::Multiclass { classes, ids } => {
                if *classes < 2 {
                    return Err(CbmError::InvalidData(format!(
                        "multiclass target needs at least 2 classes, got {classes}"
                    )));
                }
                if let Some(bad) = ids.iter().find(|&&y| y as usize >= *classes) {
                    return Err(CbmError::InvalidData(format!(
                        "class id {bad} out of range for {classes} classes"
                    )));
                }
            }
            TargetVector::Regression(v) => {
                if let Some(bad) = v.iter().find(|y| !y.is_finite()) {
                    return Err(CbmError::InvalidData(format!(
                        "regression target value {bad} is not finite"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn select(&self, rows: &[usize]) -> TargetVector {
        match self {
            TargetVector::Binary(v) => TargetVector::Binary(rows.iter().map(|&r| v[r]).collect()),
            TargetVector::Multiclass { classes, ids } => TargetVector::Multiclass {
                classes: *classes,
                ids: rows.iter().map(|&r| ids[r]).collect(),
            },
            TargetVector::Regression(v) => {
                TargetVector::Regression(rows.iter().map(|&r| v[r]).collect())
            }
        }
    }

    /// Class labels usable for stratified splitting; `None` for regression.
    pub fn strata(&self) -> Option<Vec<u32>> {
        match self {
            TargetVector::Binary(v) => Some(v.iter().map(|&y| y as u32).collect()),
            TargetVector::Multiclass { ids, .. } => Some(ids.clone()),
            TargetVector::Regression(_) => None,
        }
    }
}

/// Typed columnar table: categorical columns hold interned level ids,
/// numeric columns hold finite reals, and an optional target vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Vec<ColumnSchema>,
    columns: Vec<ColumnData>,
    n_rows: usize,
    levels: Arc<LevelInterner>,
    target: Option<TargetVector>,
    target_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn levels(&self) -> &LevelInterner {
        &self.levels
    }

    pub fn level_str(&self, id: LevelId) -> &str {
        self.levels.resolve(id)
    }

    pub fn target(&self) -> Option<&TargetVector> {
        self.target.as_ref()
    }

    pub fn require_target(&self) -> Result<&TargetVector> {
        self.target
            .as_ref()
            .ok_or_else(|| CbmError::InvalidData("dataset has no target column".into()))
    }

    /// Original labels of a classification target, indexed by class id.
    pub fn target_labels(&self) -> Option<&[String]> {
        self.target_labels.as_deref()
    }

    pub fn column(&self, name: &str) -> Option<(&ColumnSchema, &ColumnData)> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .map(|i| (&self.schema[i], &self.columns[i]))
    }

    pub fn categorical_columns(&self) -> impl Iterator<Item = (&ColumnSchema, &[LevelId])> {
        self.schema
            .iter()
            .zip(&self.columns)
            .filter_map(|(s, c)| match c {
                ColumnData::Categorical(v) => Some((s, v.as_slice())),
                ColumnData::Numeric(_) => None,
            })
    }

    pub fn numeric_columns(&self) -> impl Iterator<Item = (&ColumnSchema, &[f64])> {
        self.schema
            .iter()
            .zip(&self.columns)
            .filter_map(|(s, c)| match c {
                ColumnData::Numeric(v) => Some((s, v.as_slice())),
                ColumnData::Categorical(_) => None,
            })
    }

    pub fn categorical_count(&self) -> usize {
        self.categorical_columns().count()
    }

    pub fn numeric_count(&self) -> usize {
        self.numeric_columns().count()
    }

    /// Level ids of the named categorical column.
    pub fn categorical(&self, name: &str) -> Result<&[LevelId]> {
        match self.column(name) {
            Some((_, ColumnData::Categorical(v))) => Ok(v),
            Some(_) => Err(CbmError::SchemaMismatch(format!(
                "column '{name}' is numeric, expected categorical"
            ))),
            None => Err(CbmError::SchemaMismatch(format!(
                "column '{name}' not found"
            ))),
        }
    }

    /// Values of the named numeric column.
    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            Some((_, ColumnData::Numeric(v))) => Ok(v),
            Some(_) => Err(CbmError::SchemaMismatch(format!(
                "column '{name}' is categorical, expected numeric"
            ))),
            None => Err(CbmError::SchemaMismatch(format!(
                "column '{name}' not found"
            ))),
        }
    }

    /// Row subset in the given order. The level interner is shared.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
            levels: Arc::clone(&self.levels),
            target: self.target.as_ref().map(|t| t.select(rows)),
            target_labels: self.target_labels.clone(),
        }
    }

    /// Copy with numeric columns replaced by `f(name, values)`.
    pub(crate) fn map_numeric(
        &self,
        mut f: impl FnMut(&str, &[f64]) -> Result<Vec<f64>>,
    ) -> Result<Dataset> {
        let mut out = self.clone();
        for (schema, column) in out.schema.iter().zip(out.columns.iter_mut()) {
            if let ColumnData::Numeric(values) = column {
                *values = f(&schema.name, values)?;
            }
        }
        Ok(out)
    }

    pub fn with_target(mut self, target: TargetVector) -> Result<Dataset> {
        if target.len() != self.n_rows {
            return Err(CbmError::InvalidData(format!(
                "target has {} entries, dataset has {} rows",
                target.len(),
                self.n_rows
            )));
        }
        target.validate()?;
        self.target = Some(target);
        Ok(self)
    }
}

/// Incremental constructor for [`Dataset`].
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    names: Vec<String>,
    columns: Vec<ColumnData>,
    levels: LevelInterner,
    target: Option<TargetVector>,
    target_labels: Option<Vec<String>>,
}

impl DatasetBuilder {
    pub fn categorical<S: AsRef<str>>(mut self, name: &str, values: &[S]) -> Self {
        let ids = values
            .iter()
            .map(|v| self.levels.intern(v.as_ref()))
            .collect();
        self.names.push(name.to_owned());
        self.columns.push(ColumnData::Categorical(ids));
        self
    }

    pub fn numeric(mut self, name: &str, values: Vec<f64>) -> Self {
        self.names.push(name.to_owned());
        self.columns.push(ColumnData::Numeric(values));
        self
    }

    pub fn target(mut self, target: TargetVector) -> Self {
        self.target = Some(target);
        self
    }

    pub fn target_labels(mut self, labels: Vec<String>) -> Self {
        self.target_labels = Some(labels);
        self
    }

    pub fn build(self) -> Result<Dataset> {
        let n_rows = match (self.columns.first(), &self.target) {
            (Some(c), _) => c.len(),
            (None, Some(t)) => t.len(),
            (None, None) => 0,
        };
        let mut schema = Vec::with_capacity(self.names.len());
        for (index, (name, column)) in self.names.iter().zip(&self.columns).enumerate() {
            if self.names[..index].contains(name) {
                return Err(CbmError::InvalidData(format!(
                    "duplicate column name '{name}'"
                )));
            }
            if column.len() != n_rows {
                return Err(CbmError::InvalidData(format!(
                    "column '{name}' has {} entries, expected {n_rows}",
                    column.len()
                )));
            }
            let kind = match column {
                ColumnData::Categorical(_) => ColumnKind::Categorical,
                ColumnData::Numeric(values) => {
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(CbmError::InvalidData(format!(
                            "numeric column '{name}' contains non-finite values"
                        )));
                    }
                    ColumnKind::Numeric
                }
            };
            schema.push(ColumnSchema {
                name: name.clone(),
                kind,
                index,
            });
        }
        let dataset = Dataset {
            schema,
            columns: self.columns,
            n_rows,
            levels: Arc::new(self.levels),
            target: None,
            target_labels: self.target_labels,
        };
        match self.target {
            Some(t) => dataset.with_target(t),
            None => Ok(dataset),
        }
    }
}

/// Dense row-major N x D matrix with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    n_rows: usize,
    width: usize,
    values: Vec<f64>,
    column_labels: Vec<String>,
}

impl EncodedMatrix {
    pub fn zeros(n_rows: usize, column_labels: Vec<String>) -> Self {
        let width = column_labels.len();
        EncodedMatrix {
            n_rows,
            width,
            values: vec![0.0; n_rows * width],
            column_labels,
        }
    }

    pub fn from_rows(n_rows: usize, values: Vec<f64>, column_labels: Vec<String>) -> Result<Self> {
        let width = column_labels.len();
        if values.len() != n_rows * width {
            return Err(CbmError::InvalidParameter(format!(
                "{} values do not fill a {n_rows}x{width} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CbmError::InvalidData(
                "encoded matrix has non-finite entries".into(),
            ));
        }
        Ok(EncodedMatrix {
            n_rows,
            width,
            values,
            column_labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.width..(r + 1) * self.width]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, zero-width matrices still have rows
        (0..self.n_rows).map(move |r| self.row(r))
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }
}
