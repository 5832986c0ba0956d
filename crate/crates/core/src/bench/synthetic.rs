//! Seeded synthetic binary-classification data with known per-level
//! positive rates, so the Bayes-optimal AUC is available analytically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{CbmError, Result};
use crate::types::{Dataset, TargetVector};

/// Stream offsets keep level probabilities independent of row sampling, so
/// a level's true rate does not change with `n_rows`.
const PROBABILITY_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
const ROW_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cardinality {
    Fixed(usize),
    /// `n_rows / divisor` levels (at least one).
    Proportional {
        divisor: usize,
    },
}

impl Cardinality {
    pub fn levels_for(&self, n_rows: usize) -> usize {
        match *self {
            Cardinality::Fixed(k) => k,
            Cardinality::Proportional { divisor } => (n_rows / divisor.max(1)).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    /// Column `cat0` carries the signal; further categorical columns are
    /// independent of the target.
    pub n_cat_columns: usize,
    pub cardinality: Cardinality,
    pub signal_alpha: f64,
    pub signal_beta: f64,
    pub n_numeric: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 20_000,
            n_cat_columns: 1,
            cardinality: Cardinality::Fixed(1000),
            signal_alpha: 1.0,
            signal_beta: 1.0,
            n_numeric: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// True P(y = 1) of each level of the signal column, indexed by level
    /// number (`L<i>`).
    pub level_probabilities: Vec<f64>,
}

pub fn level_name(i: usize) -> String {
    format!("L{i}")
}

impl SyntheticSpec {
    pub fn with_rows(&self, n_rows: usize) -> Self {
        SyntheticSpec {
            n_rows,
            ..self.clone()
        }
    }

    pub fn cardinality_for_rows(&self) -> usize {
        self.cardinality.levels_for(self.n_rows)
    }

    fn validate(&self) -> Result<usize> {
        let levels = self.cardinality_for_rows();
        if self.n_rows == 0 {
            return Err(CbmError::InvalidParameter(
                "synthetic spec needs rows".into(),
            ));
        }
        if self.n_cat_columns == 0 {
            return Err(CbmError::InvalidParameter(
                "synthetic spec needs a signal column".into(),
            ));
        }
        if levels == 0 || levels > self.n_rows {
            return Err(CbmError::InvalidParameter(format!(
                "cardinality {levels} must lie in 1..={}",
                self.n_rows
            )));
        }
        Ok(levels)
    }

    /// True positive rate of the first `levels` levels; a prefix of the same
    /// sequence for any `levels`.
    pub fn level_probabilities(&self, levels: usize) -> Result<Vec<f64>> {
        let dist = Beta::new(self.signal_alpha, self.signal_beta)
            .map_err(|e| CbmError::InvalidParameter(format!("signal Beta distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ PROBABILITY_STREAM);
        // keep rates strictly inside (0, 1)
        Ok((0..levels)
            .map(|_| dist.sample(&mut rng).clamp(1e-9, 1.0 - 1e-9))
            .collect())
    }

    pub fn generate(&self) -> Result<SyntheticData> {
        let levels = self.validate()?;
        let probs = self.level_probabilities(levels)?;
        let names: Vec<String> = (0..levels).map(level_name).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ROW_STREAM);
        let n = self.n_rows;
        let mut cat: Vec<Vec<&str>> = vec![Vec::with_capacity(n); self.n_cat_columns];
        let mut num: Vec<Vec<f64>> = vec![Vec::with_capacity(n); self.n_numeric];
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let signal = rng.random_range(0..levels);
            y.push(u8::from(rng.random::<f64>() < probs[signal]));
            cat[0].push(names[signal].as_str());
            for col in cat.iter_mut().skip(1) {
                col.push(names[rng.random_range(0..levels)].as_str());
            }
            for col in num.iter_mut() {
                col.push(StandardNormal.sample(&mut rng));
            }
        }
        let mut builder = Dataset::builder();
        for (c, values) in cat.iter().enumerate() {
            builder = builder.categorical(&format!("cat{c}"), values);
        }
        for (c, values) in num.into_iter().enumerate() {
            builder = builder.numeric(&format!("num{c}"), values);
        }
        let dataset = builder.target(TargetVector::Binary(y)).build()?;
        Ok(SyntheticData {
            dataset,
            level_probabilities: probs,
        })
    }
}

/// AUC of the Bayes scorer `s(x) = P(y = 1 | level)` when levels are drawn
/// uniformly, by enumerating every (positive level, negative level) pair.
pub fn bayes_auc(level_probabilities: &[f64]) -> Result<f64> {
    let pos_mass: f64 = level_probabilities.iter().sum();
    let neg_mass: f64 = level_probabilities.iter().map(|p| 1.0 - p).sum();
    if pos_mass <= 0.0 || neg_mass <= 0.0 {
        return Err(CbmError::UndefinedMetric(
            "Bayes AUC needs both classes".into(),
        ));
    }
    let mut concordant = 0.0;
    for &pi in level_probabilities {
        for &pj in level_probabilities {
            let weight = pi * (1.0 - pj);
            if pi > pj {
                concordant += weight;
            } else if pi == pj {
                concordant += 0.5 * weight;
            }
        }
    }
    Ok(concordant / (pos_mass * neg_mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auc;

    #[test]
    fn probabilities_are_prefix_stable() {
        let spec = SyntheticSpec::default();
        let short = spec.level_probabilities(10).unwrap();
        let long = spec.level_probabilities(100).unwrap();
        assert_eq!(short[..], long[..10]);
        assert!(long.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SyntheticSpec {
            n_rows: 500,
            n_cat_columns: 2,
            n_numeric: 1,
            cardinality: Cardinality::Fixed(20),
            ..Default::default()
        };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.dataset.target(), b.dataset.target());
        assert_eq!(
            a.dataset.numeric("num0").unwrap(),
            b.dataset.numeric("num0").unwrap()
        );
        assert_eq!(a.dataset.categorical_count(), 2);
        let other = SyntheticSpec { seed: 1, ..spec }.generate().unwrap();
        assert_ne!(a.dataset.target(), other.dataset.target());
    }

    #[test]
    fn proportional_cardinality() {
        let spec = SyntheticSpec {
            cardinality: Cardinality::Proportional { divisor: 10 },
            ..Default::default()
        };
        assert_eq!(spec.with_rows(2000).cardinality_for_rows(), 200);
        assert_eq!(spec.with_rows(5).cardinality_for_rows(), 1);
        assert!(SyntheticSpec {
            cardinality: Cardinality::Fixed(11),
            n_rows: 10,
            ..Default::default()
        }
        .generate()
        .is_err());
    }

    #[test]
    fn bayes_auc_two_levels() {
        // positives: 0.9 from a, 0.1 from b; negatives: 0.1 from a, 0.9 from b
        let v = bayes_auc(&[0.9, 0.1]).unwrap();
        let expected = (0.9 * 0.9 + 0.5 * 0.9 * 0.1 + 0.5 * 0.1 * 0.9) / 1.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((bayes_auc(&[0.3, 0.3, 0.3]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bayes_auc_matches_large_sample() {
        let spec = SyntheticSpec {
            n_rows: 200_000,
            cardinality: Cardinality::Fixed(30),
            ..Default::default()
        };
        let data = spec.generate().unwrap();
        let ids = data.dataset.categorical("cat0").unwrap();
        let scores: Vec<f64> = ids
            .iter()
            .map(|&id| {
                let name = data.dataset.level_str(id);
                data.level_probabilities[name[1..].parse::<usize>().unwrap()]
            })
            .collect();
        let TargetVector::Binary(y) = data.dataset.target().unwrap() else {
            unreachable!()
        };
        let empirical = auc(y, &scores).unwrap();
        let analytic = bayes_auc(&data.level_probabilities).unwrap();
        assert!(
            (empirical - analytic).abs() < 0.005,
            "{empirical} vs {analytic}"
        );
    }
}
