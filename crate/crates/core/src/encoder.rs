//! CBM encoding: per-level conjugate posteriors (local layer) materialised as
//! a lookup from (column, level) to posterior moments (encoding layer).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conjugate::{population_stats, PosteriorParams};
use crate::data::ScalerParams;
use crate::error::{CbmError, Result};
use crate::types::{
    block_width, Dataset, EncodedMatrix, LevelId, MomentCount, TargetVector, TaskKind,
};

/// Version written by [`CbmEncoder::save`].
pub const FORMAT_VERSION: u64 = 1;

/// Posterior of one level together with its precomputed moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPosterior {
    pub params: PosteriorParams,
    pub moments: Vec<f64>,
    pub count: u64,
}

/// The fitted lookup f(m, ·) for one categorical column.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedColumnEncoding {
    column_name: String,
    prior: PosteriorParams,
    levels: BTreeMap<String, LevelPosterior>,
    fallback_moments: Vec<f64>,
}

impl FittedColumnEncoding {
    pub fn column_name(&self) -> &str {
        &self.column_name
    }

    pub fn prior(&self) -> &PosteriorParams {
        &self.prior
    }

    pub fn levels(&self) -> &BTreeMap<String, LevelPosterior> {
        &self.levels
    }

    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }

    /// Moments emitted for levels never seen during fit.
    pub fn fallback_moments(&self) -> &[f64] {
        &self.fallback_moments
    }

    pub fn level_count(&self, level: &str) -> u64 {
        self.levels.get(level).map_or(0, |l| l.count)
    }

    pub fn lookup(&self, level: &str) -> &[f64] {
        self.levels
            .get(level)
            .map_or(&self.fallback_moments, |l| &l.moments)
    }
}

/// Column labels of one encoded block, in moment order.
pub fn moment_labels(column: &str, task: TaskKind, q: MomentCount) -> Vec<String> {
    let q = q.get();
    match task {
        TaskKind::Binary => (1..=q).map(|m| format!("{column}__m{m}")).collect(),
        TaskKind::Multiclass { classes } => (1..=q)
            .flat_map(|m| (0..classes).map(move |k| format!("{column}__c{k}_m{m}")))
            .collect(),
        TaskKind::Regression => (1..=q)
            .flat_map(|m| [format!("{column}__mu_m{m}"), format!("{column}__var_m{m}")])
            .collect(),
    }
}

/// A fitted CBM encoder: one [`FittedColumnEncoding`] per categorical column
/// plus the numeric columns passed through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct CbmEncoder {
    task: TaskKind,
    q: MomentCount,
    columns: Vec<FittedColumnEncoding>,
    numeric_columns: Vec<String>,
    noise_sigma: f64,
    scaler: Option<ScalerParams>,
}

impl CbmEncoder {
    /// Fits every categorical column of `data` with a prior initialised from
    /// the full training target.
    pub fn fit(data: &Dataset, task: TaskKind, q: usize) -> Result<Self> {
        let target = training_target(data, task)?;
        let prior = PosteriorParams::prior_for(task, target)?;
        Self::fit_with_prior(data, task, q, &prior)
    }

    /// Fits with an explicit prior shared by all columns.
    pub fn fit_with_prior(
        data: &Dataset,
        task: TaskKind,
        q: usize,
        prior: &PosteriorParams,
    ) -> Result<Self> {
        let q = MomentCount::new(q)?;
        let target = training_target(data, task)?;
        if !prior.matches(task) {
            return Err(CbmError::InvalidParameter(format!(
                "{} prior cannot encode a {task} target",
                prior.family()
            )));
        }
        prior.validate()?;
        let fallback = prior.moments(q)?;
        let columns = data
            .categorical_columns()
            .map(|(schema, ids)| {
                let levels = fit_levels(data, ids, target, prior, q)?;
                Ok(FittedColumnEncoding {
                    column_name: schema.name.clone(),
                    prior: prior.clone(),
                    levels,
                    fallback_moments: fallback.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CbmEncoder {
            task,
            q,
            columns,
            numeric_columns: data
                .numeric_columns()
                .map(|(s, _)| s.name.clone())
                .collect(),
            noise_sigma: 0.0,
            scaler: None,
        })
    }

    /// Fit followed by transform of the training data. With `noise_sigma > 0`
    /// every encoded categorical cell receives independent N(0, σ²) noise
    /// drawn from `seed`; numeric passthrough columns and the returned encoder
    /// are untouched by noise.
    pub fn fit_transform(
        data: &Dataset,
        task: TaskKind,
        q: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<(Self, EncodedMatrix)> {
        let mut encoder = Self::fit(data, task, q)?;
        encoder.set_noise_sigma(noise_sigma)?;
        let mut z = encoder.transform(data)?;
        let encoded_cols = encoder.columns.len() * encoder.block_width();
        add_training_noise(&mut z, 0..encoded_cols, noise_sigma, seed)?;
        Ok((encoder, z))
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn moment_count(&self) -> MomentCount {
        self.q
    }

    pub fn columns(&self) -> &[FittedColumnEncoding] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&FittedColumnEncoding> {
        self.columns.iter().find(|c| c.column_name == name)
    }

    pub fn numeric_columns(&self) -> &[String] {
        &self.numeric_columns
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn set_noise_sigma(&mut self, sigma: f64) -> Result<()> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(CbmError::InvalidParameter(format!(
                "noise sigma must be a non-negative real, got {sigma}"
            )));
        }
        self.noise_sigma = sigma;
        Ok(())
    }

    pub fn scaler(&self) -> Option<&ScalerParams> {
        self.scaler.as_ref()
    }

    /// Attaches numeric standardisation applied by [`transform`](Self::transform)
    /// to the passthrough columns.
    pub fn set_scaler(&mut self, scaler: Option<ScalerParams>) {
        self.scaler = scaler;
    }

    /// Width of one categorical block.
    pub fn block_width(&self) -> usize {
        block_width(self.task, self.q)
    }

    pub fn width(&self) -> usize {
        self.columns.len() * self.block_width() + self.numeric_columns.len()
    }

    pub fn column_labels(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|c| moment_labels(&c.column_name, self.task, self.q))
            .chain(self.numeric_columns.iter().cloned())
            .collect()
    }

    /// Encodes `data`: block m holds f(X_nm, m) for every row n, unseen levels
    /// take the prior moments, and numeric columns follow the blocks.
    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        let n = data.n_rows();
        let w = self.block_width();
        let mut z = EncodedMatrix::zeros(n, self.column_labels());
        for (m, column) in self.columns.iter().enumerate() {
            let ids = data.categorical(&column.column_name)?;
            let mut cache: HashMap<LevelId, &[f64]> = HashMap::new();
            let offset = m * w;
            for (row, &id) in ids.iter().enumerate() {
                let moments = *cache
                    .entry(id)
                    .or_insert_with(|| column.lookup(data.level_str(id)));
                z.row_mut(row)[offset..offset + w].copy_from_slice(moments);
            }
        }
        let offset = self.columns.len() * w;
        for (j, name) in self.numeric_columns.iter().enumerate() {
            let values = data.numeric(name)?;
            let scale = match &self.scaler {
                Some(s) => Some(s.column(name).ok_or_else(|| {
                    CbmError::SchemaMismatch(format!("scaler has no entry for column '{name}'"))
                })?),
                None => None,
            };
            for (row, &v) in values.iter().enumerate() {
                z.row_mut(row)[offset + j] = match scale {
                    Some(s) => s.apply(v),
                    None => v,
                };
            }
        }
        Ok(z)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| CbmError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| CbmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CbmError::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &ModelFile::from_encoder(self))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_encoder(self))
            .expect("model file serialisation is infallible for finite values")
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_reader(r).map_err(|e| CbmError::MalformedModel(e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| CbmError::MalformedModel("missing format_version".into()))?
            .as_u64()
            .ok_or_else(|| CbmError::MalformedModel("format_version is not an integer".into()))?;
        if version != FORMAT_VERSION {
            return Err(CbmError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| CbmError::MalformedModel(e.to_string()))?;
        file.into_encoder()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

fn training_target(data: &Dataset, task: TaskKind) -> Result<&TargetVector> {
    if data.n_rows() == 0 {
        return Err(CbmError::EmptyDataset);
    }
    let target = data.require_target()?;
    if target.task() != task {
        return Err(CbmError::TargetMismatch {
            task: task.to_string(),
            detail: format!("target is {}", target.task()),
        });
    }
    Ok(target)
}

/// Groups the target by level and computes each level's posterior.
fn fit_levels(
    data: &Dataset,
    ids: &[LevelId],
    target: &TargetVector,
    prior: &PosteriorParams,
    q: MomentCount,
) -> Result<BTreeMap<String, LevelPosterior>> {
    let mut posteriors = Vec::new();
    match (prior, target) {
        (PosteriorParams::Beta(p), TargetVector::Binary(y)) => {
            let mut stats: HashMap<LevelId, (u64, u64)> = HashMap::new();
            for (&id, &v) in ids.iter().zip(y) {
                let e = stats.entry(id).or_default();
                e.0 += v as u64;
                e.1 += 1;
            }
            for (id, (s, n)) in stats {
                posteriors.push((id, PosteriorParams::Beta(p.update_counts(s, n)), n));
            }
        }
        (PosteriorParams::Dirichlet(p), TargetVector::Multiclass { ids: y, .. }) => {
            let k = p.classes();
            let mut stats: HashMap<LevelId, Vec<u64>> = HashMap::new();
            for (&id, &c) in ids.iter().zip(y) {
                stats.entry(id).or_insert_with(|| vec![0; k])[c as usize] += 1;
            }
            for (id, counts) in stats {
                let n = counts.iter().sum();
                posteriors.push((id, PosteriorParams::Dirichlet(p.update_counts(&counts)), n));
            }
        }
        (PosteriorParams::NormalInverseGamma(p), TargetVector::Regression(y)) => {
            let mut groups: HashMap<LevelId, Vec<f64>> = HashMap::new();
            for (&id, &v) in ids.iter().zip(y) {
                groups.entry(id).or_default().push(v);
            }
            for (id, values) in groups {
                let (n, mean, var) = population_stats(&values).expect("groups are non-empty");
                let post = p.update_stats(n, mean, var);
                posteriors.push((id, PosteriorParams::NormalInverseGamma(post), n as u64));
            }
        }
        _ => {
            return Err(CbmError::TargetMismatch {
                task: prior.family().to_string(),
                detail: format!("target is {}", target.task()),
            })
        }
    }
    posteriors
        .into_iter()
        .map(|(id, params, count)| {
            let moments = params.moments(q)?;
            Ok((
                data.level_str(id).to_owned(),
                LevelPosterior {
                    params,
                    moments,
                    count,
                },
            ))
        })
        .collect()
}

/// Adds i.i.d. N(0, σ²) noise to the given columns of every row.
pub(crate) fn add_training_noise(
    z: &mut EncodedMatrix,
    columns: std::ops::Range<usize>,
    sigma: f64,
    seed: u64,
) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(CbmError::InvalidParameter(format!(
            "noise sigma must be a non-negative real, got {sigma}"
        )));
    }
    if sigma == 0.0 || columns.is_empty() {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| CbmError::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..z.n_rows() {
        for cell in &mut z.row_mut(r)[columns.clone()] {
            *cell += normal.sample(&mut rng);
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    task: TaskKind,
    #[serde(rename = "Q")]
    q: MomentCount,
    noise_sigma: f64,
    priors: BTreeMap<String, PosteriorParams>,
    columns: Vec<ModelColumn>,
    numeric_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<ScalerParams>,
}

#[derive(Serialize, Deserialize)]
struct ModelColumn {
    name: String,
    levels: BTreeMap<String, LevelPosterior>,
    fallback: Vec<f64>,
}

impl ModelFile {
    fn from_encoder(enc: &CbmEncoder) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            task: enc.task,
            q: enc.q,
            noise_sigma: enc.noise_sigma,
            priors: enc
                .columns
                .iter()
                .map(|c| (c.column_name.clone(), c.prior.clone()))
                .collect(),
            columns: enc
                .columns
                .iter()
                .map(|c| ModelColumn {
                    name: c.column_name.clone(),
                    levels: c.levels.clone(),
                    fallback: c.fallback_moments.clone(),
                })
                .collect(),
            numeric_columns: enc.numeric_columns.clone(),
            scaler: enc.scaler.clone(),
        }
    }

    fn into_encoder(self) -> Result<CbmEncoder> {
        let malformed = |msg: String| Err(CbmError::MalformedModel(msg));
        if let TaskKind::Multiclass { classes } = self.task {
            if classes < 2 {
                return malformed(format!("multiclass task with {classes} classes"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return malformed(format!("noise_sigma {}", self.noise_sigma));
        }
        let width = block_width(self.task, self.q);
        let mut priors = self.priors;
        let mut columns = Vec::with_capacity(self.columns.len());
        for col in self.columns {
            if columns
                .iter()
                .any(|c: &FittedColumnEncoding| c.column_name == col.name)
            {
                return malformed(format!("duplicate column '{}'", col.name));
            }
            let Some(prior) = priors.remove(&col.name) else {
                return malformed(format!("no prior for column '{}'", col.name));
            };
            if !prior.matches(self.task) {
                return malformed(format!("{} prior for a {} task", prior.family(), self.task));
            }
            prior
                .validate()
                .map_err(|e| CbmError::MalformedModel(format!("prior of '{}': {e}", col.name)))?;
            let expected = prior
                .moments(self.q)
                .map_err(|e| CbmError::MalformedModel(e.to_string()))?;
            if col.fallback != expected {
                return malformed(format!(
                    "fallback of '{}' differs from its prior moments",
                    col.name
                ));
            }
            for (level, post) in &col.levels {
                if post.moments.len() != width || post.moments.iter().any(|m| !m.is_finite()) {
                    return malformed(format!(
                        "moments of level '{level}' in '{}' must be {width} finite values",
                        col.name
                    ));
                }
                if !post.params.matches(self.task) {
                    return malformed(format!(
                        "level '{level}' has a {} posterior",
                        post.params.family()
                    ));
                }
            }
            columns.push(FittedColumnEncoding {
                column_name: col.name,
                prior,
                levels: col.levels,
                fallback_moments: col.fallback,
            });
        }
        if let Some(extra) = priors.keys().next() {
            return malformed(format!("prior for unknown column '{extra}'"));
        }
        Ok(CbmEncoder {
            task: self.task,
            q: self.q,
            columns,
            numeric_columns: self.numeric_columns,
            noise_sigma: self.noise_sigma,
            scaler: self.scaler,
        })
    }
}
