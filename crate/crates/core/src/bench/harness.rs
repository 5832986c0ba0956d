//! k-fold encoder/learner comparison with fold-isolated encoder fits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{
    BinaryEncoder, HashingEncoder, OneHotEncoder, OrdinalEncoder, TargetEncoder, DEFAULT_HASH_SEED,
};
use crate::data::{kfold_indices, ScalerParams, STD_FLOOR};
use crate::encoder::CbmEncoder;
use crate::error::{CbmError, Result};
use crate::learners::{fit_logistic, fit_multinomial, fit_ridge, GdOptions, LinearModel};
use crate::metrics;
use crate::types::{ColumnData, Dataset, EncodedMatrix, TargetVector, TaskKind};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CBM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EncoderChoice {
    /// Conjugate model picked from the task.
    Cbm,
    Beta,
    Dirichlet,
    Nig,
    OneHot,
    Ordinal,
    Binary,
    Hashing,
    Target,
}

impl EncoderChoice {
    pub fn name(self) -> &'static str {
        match self {
            EncoderChoice::Cbm => "cbm",
            EncoderChoice::Beta => "beta",
            EncoderChoice::Dirichlet => "dirichlet",
            EncoderChoice::Nig => "nig",
            EncoderChoice::OneHot => "onehot",
            EncoderChoice::Ordinal => "ordinal",
            EncoderChoice::Binary => "binary",
            EncoderChoice::Hashing => "hashing",
            EncoderChoice::Target => "target",
        }
    }

    pub fn is_cbm(self) -> bool {
        matches!(
            self,
            EncoderChoice::Cbm
                | EncoderChoice::Beta
                | EncoderChoice::Dirichlet
                | EncoderChoice::Nig
        )
    }

    /// Rejects encoder/task combinations that have no meaning.
    pub fn check_task(self, task: TaskKind) -> Result<()> {
        let ok = match self {
            EncoderChoice::Beta => task == TaskKind::Binary,
            EncoderChoice::Dirichlet => matches!(task, TaskKind::Multiclass { .. }),
            EncoderChoice::Nig => task == TaskKind::Regression,
            EncoderChoice::Target => !matches!(task, TaskKind::Multiclass { .. }),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(CbmError::Unsupported(format!(
                "encoder {} cannot be used for a {task} task",
                self.name()
            )))
        }
    }

    /// Parses a comma-separated list such as `beta,onehot`.
    pub fn parse_list(s: &str) -> Result<Vec<EncoderChoice>> {
        let list: Vec<EncoderChoice> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(CbmError::InvalidParameter("empty encoder list".into()));
        }
        Ok(list)
    }
}

impl FromStr for EncoderChoice {
    type Err = CbmError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "cbm" => EncoderChoice::Cbm,
            "beta" => EncoderChoice::Beta,
            "dirichlet" => EncoderChoice::Dirichlet,
            "nig" | "gig" => EncoderChoice::Nig,
            "onehot" | "one-hot" => EncoderChoice::OneHot,
            "ordinal" => EncoderChoice::Ordinal,
            "binary" => EncoderChoice::Binary,
            "hashing" | "hash" => EncoderChoice::Hashing,
            "target" => EncoderChoice::Target,
            other => {
                return Err(CbmError::InvalidParameter(format!(
                    "unknown encoder '{other}'"
                )))
            }
        })
    }
}

impl fmt::Display for EncoderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerChoice {
    /// Logistic, multinomial or ridge according to the task.
    Auto,
    Logistic,
    Multinomial,
    Ridge,
}

impl LearnerChoice {
    pub fn resolve(self, task: TaskKind) -> Result<LearnerChoice> {
        let resolved = match (self, task) {
            (LearnerChoice::Auto, TaskKind::Binary) => LearnerChoice::Logistic,
            (LearnerChoice::Auto, TaskKind::Multiclass { .. }) => LearnerChoice::Multinomial,
            (LearnerChoice::Auto, TaskKind::Regression) => LearnerChoice::Ridge,
            (LearnerChoice::Logistic, TaskKind::Binary)
            | (LearnerChoice::Multinomial, TaskKind::Multiclass { .. })
            | (LearnerChoice::Ridge, TaskKind::Regression) => self,
            _ => {
                return Err(CbmError::Unsupported(format!(
                    "learner {} cannot be used for a {task} task",
                    self.name()
                )))
            }
        };
        Ok(resolved)
    }

    pub fn name(self) -> &'static str {
        match self {
            LearnerChoice::Auto => "auto",
            LearnerChoice::Logistic => "logistic",
            LearnerChoice::Multinomial => "multinomial",
            LearnerChoice::Ridge => "ridge",
        }
    }
}

impl FromStr for LearnerChoice {
    type Err = CbmError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "auto" => LearnerChoice::Auto,
            "logistic" => LearnerChoice::Logistic,
            "multinomial" | "softmax" => LearnerChoice::Multinomial,
            "ridge" => LearnerChoice::Ridge,
            other => {
                return Err(CbmError::InvalidParameter(format!(
                    "unknown learner '{other}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub q: usize,
    /// Training-time noise for CBM and target encoders.
    pub noise_sigma: f64,
    pub onehot_threshold: usize,
    pub hash_dimensions: usize,
    pub hash_seed: u64,
    pub target_smoothing: f64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        EncoderParams {
            q: 1,
            noise_sigma: 0.0,
            onehot_threshold: 150,
            hash_dimensions: 1000,
            hash_seed: DEFAULT_HASH_SEED,
            target_smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub ridge_l2: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        let gd = GdOptions::default();
        LearnerParams {
            l2: gd.l2,
            max_iter: gd.max_iter,
            tol: gd.tol,
            ridge_l2: 1.0,
        }
    }
}

impl LearnerParams {
    fn gd(&self) -> GdOptions {
        GdOptions {
            l2: self.l2,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub encoders: Vec<EncoderChoice>,
    pub learner: LearnerChoice,
    pub k: usize,
    pub seed: u64,
    /// Stratify folds on the class label (ignored for regression).
    pub stratify: bool,
    pub threads: usize,
    pub encoder_params: EncoderParams,
    pub learner_params: LearnerParams,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            encoders: vec![EncoderChoice::Cbm],
            learner: LearnerChoice::Auto,
            k: 10,
            seed: 0,
            stratify: true,
            threads: threads_from_env(),
            encoder_params: EncoderParams::default(),
            learner_params: LearnerParams::default(),
        }
    }
}

/// Worker count from `CBM_THREADS`, defaulting to 1.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1)
}

/// Encoder fitted on one training split.
#[derive(Debug, Clone)]
pub enum FittedEncoder {
    Cbm(CbmEncoder),
    OneHot(OneHotEncoder),
    Ordinal(OrdinalEncoder),
    Binary(BinaryEncoder),
    Hashing(HashingEncoder),
    Target(TargetEncoder),
}

impl FittedEncoder {
    /// Fits on `train` and returns the encoded training matrix, with
    /// training-time noise where the encoder supports it.
    pub fn fit_transform(
        choice: EncoderChoice,
        params: &EncoderParams,
        train: &Dataset,
        seed: u64,
    ) -> Result<(FittedEncoder, EncodedMatrix)> {
        let task = train.require_target()?.task();
        choice.check_task(task)?;
        Ok(match choice {
            c if c.is_cbm() => {
                let (enc, z) =
                    CbmEncoder::fit_transform(train, task, params.q, params.noise_sigma, seed)?;
                (FittedEncoder::Cbm(enc), z)
            }
            EncoderChoice::OneHot => {
                let enc = OneHotEncoder::fit(train, params.onehot_threshold)?;
                let z = enc.transform(train)?;
                (FittedEncoder::OneHot(enc), z)
            }
            EncoderChoice::Ordinal => {
                let enc = OrdinalEncoder::fit(train)?;
                let z = enc.transform(train)?;
                (FittedEncoder::Ordinal(enc), z)
            }
            EncoderChoice::Binary => {
                let enc = BinaryEncoder::fit(train)?;
                let z = enc.transform(train)?;
                (FittedEncoder::Binary(enc), z)
            }
            EncoderChoice::Hashing => {
                let enc = HashingEncoder::new(train, params.hash_dimensions, params.hash_seed)?;
                let z = enc.transform(train)?;
                (FittedEncoder::Hashing(enc), z)
            }
            EncoderChoice::Target => {
                let (enc, z) = TargetEncoder::fit_transform(
                    train,
                    params.target_smoothing,
                    params.noise_sigma,
                    seed,
                )?;
                (FittedEncoder::Target(enc), z)
            }
            _ => unreachable!("cbm variants handled above"),
        })
    }

    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        match self {
            FittedEncoder::Cbm(e) => e.transform(data),
            FittedEncoder::OneHot(e) => e.transform(data),
            FittedEncoder::Ordinal(e) => e.transform(data),
            FittedEncoder::Binary(e) => e.transform(data),
            FittedEncoder::Hashing(e) => e.transform(data),
            FittedEncoder::Target(e) => e.transform(data),
        }
    }
}

/// Per-column affine map to zero mean and unit variance, fitted on a
/// training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStandardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl MatrixStandardizer {
    pub fn fit(z: &EncodedMatrix) -> Self {
        let n = z.n_rows().max(1) as f64;
        let d = z.width();
        let mut means = vec![0.0; d];
        for row in z.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for row in z.rows() {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        MatrixStandardizer { means, stds }
    }

    pub fn apply(&self, z: &mut EncodedMatrix) -> Result<()> {
        if z.width() != self.means.len() {
            return Err(CbmError::SchemaMismatch(format!(
                "standardizer fitted on width {}, got {}",
                self.means.len(),
                z.width()
            )));
        }
        for r in 0..z.n_rows() {
            for ((v, m), s) in z.row_mut(r).iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Fits the task's learner and scores it on held-out rows.
pub fn fit_and_score(
    learner: LearnerChoice,
    params: &LearnerParams,
    z_train: &EncodedMatrix,
    y_train: &TargetVector,
    z_test: &EncodedMatrix,
    y_test: &TargetVector,
) -> Result<BTreeMap<String, f64>> {
    let model = fit_learner(learner, params, z_train, y_train)?;
    score_model(&model, z_test, y_test)
}

pub fn fit_learner(
    learner: LearnerChoice,
    params: &LearnerParams,
    z: &EncodedMatrix,
    y: &TargetVector,
) -> Result<LinearModel> {
    match (learner.resolve(y.task())?, y) {
        (LearnerChoice::Logistic, TargetVector::Binary(v)) => fit_logistic(z, v, &params.gd()),
        (LearnerChoice::Multinomial, TargetVector::Multiclass { classes, ids }) => {
            fit_multinomial(z, ids, *classes, &params.gd())
        }
        (LearnerChoice::Ridge, TargetVector::Regression(v)) => fit_ridge(z, v, params.ridge_l2),
        _ => unreachable!("resolve pairs learners with their task"),
    }
}

pub fn score_model(
    model: &LinearModel,
    z: &EncodedMatrix,
    y: &TargetVector,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    match y {
        TargetVector::Binary(v) => {
            let probs = model.predict_proba(z)?;
            let pred: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            out.insert("accuracy".to_owned(), metrics::accuracy(v, &pred)?);
            out.insert("auc".to_owned(), metrics::auc(v, &probs)?);
        }
        TargetVector::Multiclass { classes, ids } => {
            let pred = model.predict_classes(z)?;
            out.insert("accuracy".to_owned(), metrics::accuracy(ids, &pred)?);
            out.insert("qwk".to_owned(), metrics::qwk(ids, &pred, *classes)?);
        }
        TargetVector::Regression(v) => {
            let pred = model.predict(z)?;
            out.insert("r2".to_owned(), metrics::r2(v, &pred)?);
        }
    }
    Ok(out)
}

/// Everything that happens to one (train, test) split: numeric scaling and
/// encoder fitted on `train` only, encoded matrices standardized with
/// training statistics, learner fitted and scored on `test`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub encoded_width: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Encoder fit + transform of the training rows + learner fit.
    pub train_seconds: f64,
}

pub fn evaluate_split(
    train: &Dataset,
    test: &Dataset,
    encoder: EncoderChoice,
    learner: LearnerChoice,
    encoder_params: &EncoderParams,
    learner_params: &LearnerParams,
    seed: u64,
) -> Result<SplitOutcome> {
    let start = Instant::now();
    let scaler = ScalerParams::fit(train);
    let train = scaler.transform(train)?;
    let (fitted, mut z_train) =
        FittedEncoder::fit_transform(encoder, encoder_params, &train, seed)?;
    let standardizer = MatrixStandardizer::fit(&z_train);
    standardizer.apply(&mut z_train)?;
    let model = fit_learner(learner, learner_params, &z_train, train.require_target()?)?;
    let train_seconds = start.elapsed().as_secs_f64();

    let test = scaler.transform(test)?;
    let mut z_test = fitted.transform(&test)?;
    standardizer.apply(&mut z_test)?;
    let metrics = score_model(&model, &z_test, test.require_target()?)?;
    Ok(SplitOutcome {
        encoded_width: z_train.width(),
        metrics,
        train_seconds,
    })
}

/// Sees the row sets of every fold before the encoder is fitted.
pub trait FoldObserver: Sync {
    fn on_fold(&self, encoder: EncoderChoice, fold: usize, fit_rows: &[usize], eval_rows: &[usize]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub categorical_columns: usize,
    pub numeric_columns: usize,
    /// SHA-256 of the column names, cell values and target.
    pub content_hash: String,
}

impl DatasetFingerprint {
    pub fn of(data: &Dataset) -> Self {
        let mut h = Sha256::new();
        for (schema, column) in data.schema().iter().zip(data_columns(data)) {
            h.update(schema.name.as_bytes());
            h.update([0x1e]);
            match column {
                ColumnData::Categorical(ids) => {
                    h.update(b"c");
                    for &id in ids {
                        h.update(data.level_str(id).as_bytes());
                        h.update([0x1f]);
                    }
                }
                ColumnData::Numeric(values) => {
                    h.update(b"n");
                    for v in values {
                        h.update(v.to_bits().to_le_bytes());
                    }
                }
            }
        }
        match data.target() {
            None => h.update(b"-"),
            Some(TargetVector::Binary(v)) => {
                h.update(b"b");
                h.update(v);
            }
            Some(TargetVector::Multiclass { classes, ids }) => {
                h.update(b"m");
                h.update((*classes as u64).to_le_bytes());
                for id in ids {
                    h.update(id.to_le_bytes());
                }
            }
            Some(TargetVector::Regression(v)) => {
                h.update(b"r");
                for x in v {
                    h.update(x.to_bits().to_le_bytes());
                }
            }
        }
        let content_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        DatasetFingerprint {
            rows: data.n_rows(),
            categorical_columns: data.categorical_count(),
            numeric_columns: data.numeric_count(),
            content_hash,
        }
    }
}

fn data_columns(data: &Dataset) -> impl Iterator<Item = &ColumnData> {
    data.schema()
        .iter()
        .map(move |s| data.column(&s.name).expect("schema column present").1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub stddev: f64,
    pub folds: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let (mean, stddev) = mean_stddev(&values);
        Summary {
            mean,
            stddev,
            folds: values,
        }
    }
}

/// Mean and sample (n − 1) standard deviation; the deviation is 0 for a
/// single value.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub encoder: String,
    pub learner: String,
    /// Width of the first fold's encoded matrix.
    pub encoded_width: usize,
    pub fold_widths: Vec<usize>,
    pub metrics: BTreeMap<String, Summary>,
    /// Seconds of encoder fit + transform + learner fit per fold.
    pub training_time: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub task: TaskKind,
    pub seed: u64,
    pub k: usize,
    pub stratified: bool,
    pub encoder_params: EncoderParams,
    pub learner_params: LearnerParams,
    pub dataset: DatasetFingerprint,
    pub cells: Vec<CellReport>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: BenchmarkReport = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(CbmError::UnsupportedVersion {
                found: report.schema_version as u64,
                supported: REPORT_SCHEMA_VERSION as u64,
            });
        }
        Ok(report)
    }

    /// The report as JSON with every wall-clock field removed.
    pub fn without_timing(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(cells) = v.get_mut("cells").and_then(|c| c.as_array_mut()) {
            for cell in cells {
                if let Some(obj) = cell.as_object_mut() {
                    obj.remove("training_time");
                }
            }
        }
        v
    }

    pub fn cell(&self, encoder: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.encoder == encoder)
    }
}

pub fn run_benchmark(data: &Dataset, config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    run_benchmark_observed(data, config, None)
}

pub fn run_benchmark_observed(
    data: &Dataset,
    config: &BenchmarkConfig,
    observer: Option<&dyn FoldObserver>,
) -> Result<BenchmarkReport> {
    let target = data.require_target()?;
    let task = target.task();
    if config.encoders.is_empty() {
        return Err(CbmError::InvalidParameter("no encoders requested".into()));
    }
    if data.n_rows() < config.k {
        return Err(CbmError::InvalidParameter(format!(
            "{} rows cannot be split into {} folds",
            data.n_rows(),
            config.k
        )));
    }
    for &e in &config.encoders {
        e.check_task(task)?;
    }
    let learner = config.learner.resolve(task)?;
    let strata = if config.stratify {
        target.strata()
    } else {
        None
    };
    let folds = kfold_indices(data.n_rows(), config.k, config.seed, strata.as_deref())?;
    let splits: Vec<(Vec<usize>, &[usize])> = folds
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let train = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect::<Vec<_>>();
            let mut train = train;
            train.sort_unstable();
            (train, test.as_slice())
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..config.encoders.len())
        .flat_map(|e| (0..config.k).map(move |f| (e, f)))
        .collect();
    let run_job = |&(e, f): &(usize, usize)| -> Result<SplitOutcome> {
        let encoder = config.encoders[e];
        let (train_rows, test_rows) = (&splits[f].0, splits[f].1);
        if let Some(obs) = observer {
            obs.on_fold(encoder, f, train_rows, test_rows);
        }
        evaluate_split(
            &data.select_rows(train_rows),
            &data.select_rows(test_rows),
            encoder,
            learner,
            &config.encoder_params,
            &config.learner_params,
            config.seed.wrapping_add(f as u64 + 1),
        )
    };
    let outcomes = run_parallel(&jobs, config.threads, run_job)?;

    let mut cells = Vec::with_capacity(config.encoders.len());
    for (e, encoder) in config.encoders.iter().enumerate() {
        let per_fold = &outcomes[e * config.k..(e + 1) * config.k];
        let fold_widths: Vec<usize> = per_fold.iter().map(|o| o.encoded_width).collect();
        let mut metric_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for o in per_fold {
            for (name, &v) in &o.metrics {
                metric_values.entry(name.clone()).or_default().push(v);
            }
        }
        cells.push(CellReport {
            encoder: encoder.name().to_owned(),
            learner: learner.name().to_owned(),
            encoded_width: fold_widths[0],
            fold_widths,
            metrics: metric_values
                .into_iter()
                .map(|(k, v)| (k, Summary::of(v)))
                .collect(),
            training_time: Summary::of(per_fold.iter().map(|o| o.train_seconds).collect()),
        });
    }
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task,
        seed: config.seed,
        k: config.k,
        stratified: strata.is_some(),
        encoder_params: config.encoder_params,
        learner_params: config.learner_params,
        dataset: DatasetFingerprint::of(data),
        cells,
    })
}

/// Runs `f` over `jobs` on up to `threads` scoped workers, returning results
/// in job order. The first error wins.
pub(crate) fn run_parallel<J, T, F>(jobs: &[J], threads: usize, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|s| s.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::builder()
            .categorical("c", &["a", "a", "b", "b", "c", "c", "a", "b", "c", "a"])
            .numeric(
                "x",
                vec![0.1, 0.5, -0.3, 1.2, 0.0, 0.7, -1.1, 0.4, 0.9, -0.2],
            )
            .target(TargetVector::Binary(vec![1, 1, 0, 0, 1, 0, 1, 0, 1, 0]))
            .build()
            .unwrap()
    }

    #[test]
    fn parse_aliases() {
        assert_eq!("gig".parse::<EncoderChoice>().unwrap(), EncoderChoice::Nig);
        assert_eq!(
            EncoderChoice::parse_list("beta, onehot").unwrap(),
            vec![EncoderChoice::Beta, EncoderChoice::OneHot]
        );
        assert!("sparse".parse::<EncoderChoice>().is_err());
        assert!(EncoderChoice::parse_list(" , ").is_err());
        assert_eq!(
            "softmax".parse::<LearnerChoice>().unwrap(),
            LearnerChoice::Multinomial
        );
    }

    #[test]
    fn two_fold_toy_reports_stddev() {
        let config = BenchmarkConfig {
            encoders: vec![EncoderChoice::Beta, EncoderChoice::OneHot],
            k: 2,
            threads: 1,
            ..Default::default()
        };
        let report = run_benchmark(&toy(), &config).unwrap();
        assert_eq!(report.cells.len(), 2);
        for cell in &report.cells {
            assert_eq!(cell.metrics["accuracy"].folds.len(), 2);
            assert!(cell.metrics["accuracy"].stddev.is_finite());
            assert_eq!(cell.training_time.folds.len(), 2);
            assert!(cell.training_time.folds.iter().all(|&t| t >= 0.0));
        }
        assert_eq!(report.cell("beta").unwrap().encoded_width, 2);
        assert!(report.stratified);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut config = BenchmarkConfig {
            encoders: vec![
                EncoderChoice::Beta,
                EncoderChoice::Hashing,
                EncoderChoice::Target,
            ],
            k: 5,
            threads: 1,
            ..Default::default()
        };
        let a = run_benchmark(&toy(), &config).unwrap();
        config.threads = 3;
        let b = run_benchmark(&toy(), &config).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
    }

    #[test]
    fn rejects_bad_combinations() {
        let config = BenchmarkConfig {
            encoders: vec![EncoderChoice::Nig],
            k: 2,
            ..Default::default()
        };
        assert!(matches!(
            run_benchmark(&toy(), &config),
            Err(CbmError::Unsupported(_))
        ));
        let config = BenchmarkConfig {
            k: 11,
            ..Default::default()
        };
        assert!(run_benchmark(&toy(), &config).is_err());
        let config = BenchmarkConfig {
            learner: LearnerChoice::Ridge,
            k: 2,
            ..Default::default()
        };
        assert!(matches!(
            run_benchmark(&toy(), &config),
            Err(CbmError::Unsupported(_))
        ));
    }

    #[test]
    fn target_encoder_rejects_multiclass() {
        let data = Dataset::builder()
            .categorical("c", &["a", "b", "a", "b"])
            .target(TargetVector::Multiclass {
                classes: 3,
                ids: vec![0, 1, 2, 0],
            })
            .build()
            .unwrap();
        let config = BenchmarkConfig {
            encoders: vec![EncoderChoice::Target],
            k: 2,
            ..Default::default()
        };
        assert!(matches!(
            run_benchmark(&data, &config),
            Err(CbmError::Unsupported(_))
        ));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = DatasetFingerprint::of(&toy());
        assert_eq!(a, DatasetFingerprint::of(&toy()));
        assert_eq!(a.content_hash.len(), 64);
        let other = toy().select_rows(&[1, 0, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_ne!(a.content_hash, DatasetFingerprint::of(&other).content_hash);
    }

    #[test]
    fn standardizer_centres_training_columns() {
        let z = EncodedMatrix::from_rows(
            3,
            vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut t = z.clone();
        MatrixStandardizer::fit(&z).apply(&mut t).unwrap();
        assert!(t.column(0).iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(t.column(1), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn report_json_round_trip() {
        let config = BenchmarkConfig {
            k: 2,
            ..Default::default()
        };
        let report = run_benchmark(&toy(), &config).unwrap();
        let back = BenchmarkReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
