//! Comparison encoders: truncated one-hot, ordinal, binary (bit-packed
//! ordinal), signed feature hashing and smoothed target encoding.
//!
//! Every encoder lays out its categorical blocks in dataset column order and
//! appends the numeric columns unchanged, like [`CbmEncoder`](crate::encoder::CbmEncoder).

use std::collections::{BTreeMap, HashMap};

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::encoder::add_training_noise;
use crate::error::{CbmError, Result};
use crate::types::{Dataset, EncodedMatrix, LevelId, TargetVector};

/// Level name of the shared one-hot indicator for rare and unseen levels.
pub const OTHER_LEVEL: &str = "__other__";
/// Seed of the feature-hashing function unless overridden.
pub const DEFAULT_HASH_SEED: u64 = 0x00C0_FFEE_CB3E_2019;

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineEncoderSpec {
    OneHot { truncation_threshold: usize },
    Ordinal,
    Binary,
    Hashing { dimensions: usize },
    Target { smoothing: f64, noise_sigma: f64 },
}

/// Names of the numeric columns of `data`, in order.
fn numeric_names(data: &Dataset) -> Vec<String> {
    data.numeric_columns()
        .map(|(s, _)| s.name.clone())
        .collect()
}

fn categorical_names(data: &Dataset) -> Vec<String> {
    data.categorical_columns()
        .map(|(s, _)| s.name.clone())
        .collect()
}

/// Copies named numeric columns into `z` starting at column `offset`.
fn write_passthrough(
    z: &mut EncodedMatrix,
    data: &Dataset,
    names: &[String],
    offset: usize,
) -> Result<()> {
    for (j, name) in names.iter().enumerate() {
        for (r, &v) in data.numeric(name)?.iter().enumerate() {
            z.row_mut(r)[offset + j] = v;
        }
    }
    Ok(())
}

/// Per-column lookup from a dataset's level ids to a fitted value, built
/// once per transform.
fn map_levels<'a, T>(data: &Dataset, ids: &[LevelId], mut f: impl FnMut(&str) -> T + 'a) -> Vec<T>
where
    T: Copy,
{
    let mut cache: HashMap<LevelId, T> = HashMap::new();
    ids.iter()
        .map(|&id| *cache.entry(id).or_insert_with(|| f(data.level_str(id))))
        .collect()
}

fn level_counts<'a>(data: &'a Dataset, ids: &[LevelId]) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for &id in ids {
        *counts.entry(data.level_str(id)).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
struct OneHotColumn {
    name: String,
    kept: Vec<String>,
    index: HashMap<String, usize>,
}

/// One indicator per level seen at least `threshold` times, plus a shared
/// `__other__` indicator for everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotEncoder {
    threshold: usize,
    columns: Vec<OneHotColumn>,
    numeric_columns: Vec<String>,
}

impl OneHotEncoder {
    pub fn fit(data: &Dataset, threshold: usize) -> Result<Self> {
        let columns = data
            .categorical_columns()
            .map(|(schema, ids)| {
                let kept: Vec<String> = level_counts(data, ids)
                    .into_iter()
                    .filter(|&(_, c)| c >= threshold)
                    .map(|(l, _)| l.to_owned())
                    .collect();
                let index = kept
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.clone(), i))
                    .collect();
                OneHotColumn {
                    name: schema.name.clone(),
                    kept,
                    index,
                }
            })
            .collect();
        Ok(OneHotEncoder {
            threshold,
            columns,
            numeric_columns: numeric_names(data),
        })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn column_labels(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|c| {
                c.kept
                    .iter()
                    .map(String::as_str)
                    .chain([OTHER_LEVEL])
                    .map(move |l| format!("{}__{l}", c.name))
            })
            .chain(self.numeric_columns.iter().cloned())
            .collect()
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.kept.len() + 1).sum::<usize>() + self.numeric_columns.len()
    }

    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        let mut z = EncodedMatrix::zeros(data.n_rows(), self.column_labels());
        let mut offset = 0;
        for col in &self.columns {
            let ids = data.categorical(&col.name)?;
            let other = col.kept.len();
            let slots = map_levels(data, ids, |l| col.index.get(l).copied().unwrap_or(other));
            for (r, slot) in slots.into_iter().enumerate() {
                z.row_mut(r)[offset + slot] = 1.0;
            }
            offset += other + 1;
        }
        write_passthrough(&mut z, data, &self.numeric_columns, offset)?;
        Ok(z)
    }
}

/// Levels numbered 1..=K in lexicographic order; unseen levels map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalEncoder {
    columns: Vec<(String, HashMap<String, u32>)>,
    numeric_columns: Vec<String>,
}

impl OrdinalEncoder {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let columns = data
            .categorical_columns()
            .map(|(schema, ids)| {
                let codes = level_counts(data, ids)
                    .into_keys()
                    .enumerate()
                    .map(|(i, l)| (l.to_owned(), i as u32 + 1))
                    .collect();
                (schema.name.clone(), codes)
            })
            .collect();
        Ok(OrdinalEncoder {
            columns,
            numeric_columns: numeric_names(data),
        })
    }

    pub fn code(&self, column: &str, level: &str) -> Option<u32> {
        self.columns
            .iter()
            .find(|(n, _)| n == column)
            .map(|(_, codes)| codes.get(level).copied().unwrap_or(0))
    }

    pub fn width(&self) -> usize {
        self.columns.len() + self.numeric_columns.len()
    }

    fn codes(&self, data: &Dataset) -> Result<Vec<Vec<u32>>> {
        self.columns
            .iter()
            .map(|(name, codes)| {
                let ids = data.categorical(name)?;
                Ok(map_levels(data, ids, |l| {
                    codes.get(l).copied().unwrap_or(0)
                }))
            })
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        let labels = self
            .columns
            .iter()
            .map(|(n, _)| n.clone())
            .chain(self.numeric_columns.iter().cloned())
            .collect();
        let mut z = EncodedMatrix::zeros(data.n_rows(), labels);
        for (m, codes) in self.codes(data)?.into_iter().enumerate() {
            for (r, c) in codes.into_iter().enumerate() {
                z.row_mut(r)[m] = c as f64;
            }
        }
        write_passthrough(&mut z, data, &self.numeric_columns, self.columns.len())?;
        Ok(z)
    }
}

/// Ordinal codes written as ceil(log2(K + 1)) bits, least significant first.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryEncoder {
    ordinal: OrdinalEncoder,
    bits: Vec<usize>,
}

impl BinaryEncoder {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let ordinal = OrdinalEncoder::fit(data)?;
        let bits = ordinal
            .columns
            .iter()
            .map(|(_, codes)| bits_for(codes.len()))
            .collect();
        Ok(BinaryEncoder { ordinal, bits })
    }

    pub fn width(&self) -> usize {
        self.bits.iter().sum::<usize>() + self.ordinal.numeric_columns.len()
    }

    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        let labels = self
            .ordinal
            .columns
            .iter()
            .zip(&self.bits)
            .flat_map(|((name, _), &b)| (0..b).map(move |i| format!("{name}__bit{i}")))
            .chain(self.ordinal.numeric_columns.iter().cloned())
            .collect();
        let mut z = EncodedMatrix::zeros(data.n_rows(), labels);
        let mut offset = 0;
        for (codes, &bits) in self.ordinal.codes(data)?.into_iter().zip(&self.bits) {
            for (r, c) in codes.into_iter().enumerate() {
                let row = z.row_mut(r);
                for b in 0..bits {
                    row[offset + b] = ((c >> b) & 1) as f64;
                }
            }
            offset += bits;
        }
        write_passthrough(&mut z, data, &self.ordinal.numeric_columns, offset)?;
        Ok(z)
    }
}

/// Number of bits needed for codes 0..=K.
fn bits_for(levels: usize) -> usize {
    (usize::BITS - levels.leading_zeros()) as usize
}

/// Index and sign of a (column, level) pair under signed feature hashing.
pub fn hash_slot(column: &str, level: &str, dimensions: u64, seed: u64) -> (u64, f64) {
    let mut key = Vec::with_capacity(column.len() + level.len() + 1);
    key.extend_from_slice(column.as_bytes());
    key.push(0x1f);
    key.extend_from_slice(level.as_bytes());
    let h = xxh3_64_with_seed(&key, seed);
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (h % dimensions, sign)
}

/// Stateless signed hashing of every categorical column into a shared
/// `dimensions`-wide block.
#[derive(Debug, Clone, PartialEq)]
pub struct HashingEncoder {
    dimensions: usize,
    seed: u64,
    categorical_columns: Vec<String>,
    numeric_columns: Vec<String>,
}

impl HashingEncoder {
    /// Uses the categorical and numeric columns of `schema_source`; no
    /// statistics are learned.
    pub fn new(schema_source: &Dataset, dimensions: usize, seed: u64) -> Result<Self> {
        if dimensions == 0 {
            return Err(CbmError::InvalidParameter(
                "hashing needs at least one dimension".into(),
            ));
        }
        Ok(HashingEncoder {
            dimensions,
            seed,
            categorical_columns: categorical_names(schema_source),
            numeric_columns: numeric_names(schema_source),
        })
    }

    pub fn width(&self) -> usize {
        self.dimensions + self.numeric_columns.len()
    }

    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        let labels = (0..self.dimensions)
            .map(|i| format!("hash_{i}"))
            .chain(self.numeric_columns.iter().cloned())
            .collect();
        let mut z = EncodedMatrix::zeros(data.n_rows(), labels);
        for name in &self.categorical_columns {
            let ids = data.categorical(name)?;
            let slots = map_levels(data, ids, |l| {
                let (i, s) = hash_slot(name, l, self.dimensions as u64, self.seed);
                (i as usize, s)
            });
            for (r, (i, s)) in slots.into_iter().enumerate() {
                z.row_mut(r)[i] += s;
            }
        }
        write_passthrough(&mut z, data, &self.numeric_columns, self.dimensions)?;
        Ok(z)
    }
}

/// Smoothed mean-target encoding: (n_v·ȳ_v + s·ȳ)/(n_v + s), unseen → ȳ.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEncoder {
    smoothing: f64,
    noise_sigma: f64,
    global_mean: f64,
    columns: Vec<(String, HashMap<String, f64>)>,
    numeric_columns: Vec<String>,
}

impl TargetEncoder {
    pub fn fit(data: &Dataset, smoothing: f64, noise_sigma: f64) -> Result<Self> {
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(CbmError::InvalidParameter(format!(
                "smoothing must be a non-negative real, got {smoothing}"
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(CbmError::InvalidParameter(format!(
                "noise sigma must be a non-negative real, got {noise_sigma}"
            )));
        }
        if data.n_rows() == 0 {
            return Err(CbmError::EmptyDataset);
        }
        let y: Vec<f64> = match data.require_target()? {
            TargetVector::Binary(v) => v.iter().map(|&b| b as f64).collect(),
            TargetVector::Regression(v) => v.clone(),
            TargetVector::Multiclass { .. } => {
                return Err(CbmError::Unsupported(
                    "target encoding needs a binary or regression target".into(),
                ))
            }
        };
        let global_mean = y.iter().sum::<f64>() / y.len() as f64;
        let columns = data
            .categorical_columns()
            .map(|(schema, ids)| {
                let mut sums: HashMap<LevelId, (f64, usize)> = HashMap::new();
                for (&id, &v) in ids.iter().zip(&y) {
                    let e = sums.entry(id).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
                let values = sums
                    .into_iter()
                    .map(|(id, (sum, n))| {
                        let n = n as f64;
                        let v = (sum + smoothing * global_mean) / (n + smoothing);
                        (data.level_str(id).to_owned(), v)
                    })
                    .collect();
                (schema.name.clone(), values)
            })
            .collect();
        Ok(TargetEncoder {
            smoothing,
            noise_sigma,
            global_mean,
            columns,
            numeric_columns: numeric_names(data),
        })
    }

    /// Fit, then transform the training rows with training-time noise.
    pub fn fit_transform(
        data: &Dataset,
        smoothing: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<(Self, EncodedMatrix)> {
        let enc = Self::fit(data, smoothing, noise_sigma)?;
        let mut z = enc.transform(data)?;
        add_training_noise(&mut z, 0..enc.columns.len(), noise_sigma, seed)?;
        Ok((enc, z))
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn width(&self) -> usize {
        self.columns.len() + self.numeric_columns.len()
    }

    pub fn transform(&self, data: &Dataset) -> Result<EncodedMatrix> {
        let labels = self
            .columns
            .iter()
            .map(|(n, _)| format!("{n}__target"))
            .chain(self.numeric_columns.iter().cloned())
            .collect();
        let mut z = EncodedMatrix::zeros(data.n_rows(), labels);
        for (m, (name, values)) in self.columns.iter().enumerate() {
            let ids = data.categorical(name)?;
            let encoded = map_levels(data, ids, |l| {
                values.get(l).copied().unwrap_or(self.global_mean)
            });
            for (r, v) in encoded.into_iter().enumerate() {
                z.row_mut(r)[m] = v;
            }
        }
        write_passthrough(&mut z, data, &self.numeric_columns, self.columns.len())?;
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(levels: &[&str]) -> Dataset {
        Dataset::builder().categorical("c", levels).build().unwrap()
    }

    #[test]
    fn onehot_truncation() {
        let mut levels = vec!["a"; 200];
        levels.extend(vec!["b"; 10]);
        let d = cat(&levels);
        let enc = OneHotEncoder::fit(&d, 150).unwrap();
        assert_eq!(enc.column_labels(), ["c__a", "c____other__"]);
        let z = enc.transform(&cat(&["a", "b", "zzz"])).unwrap();
        assert_eq!(z.values(), &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn onehot_threshold_zero_keeps_all_seen() {
        let d = cat(&["b", "a", "b", "c"]);
        let enc = OneHotEncoder::fit(&d, 0).unwrap();
        assert_eq!(
            enc.column_labels(),
            ["c__a", "c__b", "c__c", "c____other__"]
        );
        let z = enc.transform(&cat(&["zzz"])).unwrap();
        assert_eq!(z.row(0), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ordinal_lexicographic() {
        let enc = OrdinalEncoder::fit(&cat(&["b", "a", "c"])).unwrap();
        assert_eq!(enc.code("c", "a"), Some(1));
        assert_eq!(enc.code("c", "b"), Some(2));
        assert_eq!(enc.code("c", "c"), Some(3));
        assert_eq!(enc.code("c", "zzz"), Some(0));
        let single = OrdinalEncoder::fit(&cat(&["only", "only"])).unwrap();
        assert_eq!(single.code("c", "only"), Some(1));
        let z = enc.transform(&cat(&["c", "new"])).unwrap();
        assert_eq!(z.values(), &[3.0, 0.0]);
    }

    #[test]
    fn binary_bits() {
        assert_eq!(
            (bits_for(1), bits_for(2), bits_for(3), bits_for(4)),
            (1, 2, 2, 3)
        );
        let enc = BinaryEncoder::fit(&cat(&["a", "b", "c"])).unwrap();
        assert_eq!(enc.width(), 2);
        let z = enc.transform(&cat(&["a", "b", "c", "zzz"])).unwrap();
        assert_eq!(z.values(), &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn hashing_single_dimension_collides() {
        let d = cat(&["a", "b", "c", "a"]);
        let enc = HashingEncoder::new(&d, 1, DEFAULT_HASH_SEED).unwrap();
        let z = enc.transform(&d).unwrap();
        assert!(z.values().iter().all(|v| v.abs() == 1.0));
        assert_eq!(z.row(0), z.row(3));
        assert!(HashingEncoder::new(&d, 0, 0).is_err());
    }

    #[test]
    fn hash_slot_is_stable() {
        // pinned so benchmark numbers stay comparable across platforms
        assert_eq!(
            hash_slot("city", "Paris", 1000, DEFAULT_HASH_SEED),
            (71, 1.0)
        );
        assert_eq!(
            hash_slot("city", "Lyon", 1 << 32, DEFAULT_HASH_SEED),
            (4210050917, -1.0)
        );
        assert_ne!(
            hash_slot("city", "Paris", 1 << 32, DEFAULT_HASH_SEED),
            hash_slot("cit", "yParis", 1 << 32, DEFAULT_HASH_SEED)
        );
    }

    #[test]
    fn target_encoding_examples() {
        let d = Dataset::builder()
            .categorical("c", &["a", "a", "a", "b"])
            .target(TargetVector::Binary(vec![1, 1, 0, 0]))
            .build()
            .unwrap();
        let enc = TargetEncoder::fit(&d, 0.0, 0.0).unwrap();
        let z = enc.transform(&cat(&["a", "zzz"])).unwrap();
        assert!((z.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(z.get(1, 0), enc.global_mean());
        assert_eq!(enc.global_mean(), 0.5);
        let heavy = TargetEncoder::fit(&d, 1e6, 0.0).unwrap();
        let z = heavy.transform(&cat(&["a", "b"])).unwrap();
        assert!(z.values().iter().all(|v| (v - 0.5).abs() < 1e-3));
    }

    #[test]
    fn target_encoding_rejects_multiclass() {
        let d = Dataset::builder()
            .categorical("c", &["a", "b"])
            .target(TargetVector::Multiclass {
                classes: 3,
                ids: vec![0, 2],
            })
            .build()
            .unwrap();
        assert!(matches!(
            TargetEncoder::fit(&d, 1.0, 0.0),
            Err(CbmError::Unsupported(_))
        ));
    }

    #[test]
    fn baselines_pass_numeric_through() {
        let d = Dataset::builder()
            .categorical("c", &["a", "b"])
            .numeric("x", vec![3.0, 4.0])
            .target(TargetVector::Binary(vec![0, 1]))
            .build()
            .unwrap();
        let z = OneHotEncoder::fit(&d, 0).unwrap().transform(&d).unwrap();
        assert_eq!(z.column(3), vec![3.0, 4.0]);
        let z = HashingEncoder::new(&d, 8, 1)
            .unwrap()
            .transform(&d)
            .unwrap();
        assert_eq!(z.width(), 9);
        assert_eq!(z.column(8), vec![3.0, 4.0]);
        let z = TargetEncoder::fit(&d, 1.0, 0.0)
            .unwrap()
            .transform(&d)
            .unwrap();
        assert_eq!(z.column(1), vec![3.0, 4.0]);
    }
}
