//! Training time and held-out accuracy against sample size on synthetic
//! data whose cardinality grows with the number of rows.

use std::io::Write;

use serde::Serialize;

use super::harness::{
    evaluate_split, run_parallel, EncoderChoice, EncoderParams, LearnerChoice, LearnerParams,
};
use super::synthetic::{Cardinality, SyntheticSpec};
use crate::data::train_test_split;
use crate::error::{CbmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    /// Template; `n_rows` is replaced by each size.
    pub spec: SyntheticSpec,
    pub sizes: Vec<usize>,
    pub encoders: Vec<EncoderChoice>,
    pub test_fraction: f64,
    /// Seed of the hold-out split and training noise.
    pub seed: u64,
    pub encoder_params: EncoderParams,
    pub learner_params: LearnerParams,
    /// Trailing moving-average window applied to the reported curves.
    pub window: usize,
    /// Sizes evaluated concurrently; encoders within a size always run one
    /// after another.
    pub threads: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            spec: SyntheticSpec {
                cardinality: Cardinality::Proportional { divisor: 10 },
                ..SyntheticSpec::default()
            },
            sizes: (1..=25).map(|i| i * 2000).collect(),
            encoders: vec![EncoderChoice::Beta, EncoderChoice::OneHot],
            test_fraction: 0.3,
            seed: 0,
            encoder_params: EncoderParams {
                onehot_threshold: 0,
                ..EncoderParams::default()
            },
            learner_params: LearnerParams {
                max_iter: 50,
                ..LearnerParams::default()
            },
            window: 5,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n_rows: usize,
    pub encoder: String,
    pub cardinality: usize,
    pub encoded_width: usize,
    pub test_rows: usize,
    pub train_seconds: f64,
    pub accuracy: f64,
    pub train_seconds_ma: f64,
    pub accuracy_ma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCurves {
    pub window: usize,
    pub rows: Vec<ScalingRow>,
}

impl ScalingCurves {
    /// Rows of one encoder in ascending size order.
    pub fn series(&self, encoder: &str) -> Vec<&ScalingRow> {
        self.rows.iter().filter(|r| r.encoder == encoder).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| CbmError::Csv(e.into()))?;
        Ok(())
    }
}

/// Parses `start:end:step` (inclusive) or a comma-separated list; sizes must
/// be strictly ascending.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let bad = || CbmError::InvalidParameter(format!("invalid size list '{s}'"));
    let sizes: Vec<usize> = if s.contains(':') {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, end, step] = parts[..] else {
            return Err(bad());
        };
        if step == 0 || start == 0 || end < start {
            return Err(bad());
        }
        (start..=end).step_by(step).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CbmError::InvalidParameter(format!(
            "sizes must be non-empty and strictly ascending: '{s}'"
        )));
    }
    Ok(sizes)
}

/// Trailing moving average: entry i averages the last `window` values up to
/// and including i (fewer at the start of the series).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

pub fn run_scaling(config: &ScalingConfig) -> Result<ScalingCurves> {
    if config.encoders.is_empty() {
        return Err(CbmError::InvalidParameter("no encoders requested".into()));
    }
    if config.sizes.is_empty() || config.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CbmError::InvalidParameter(
            "sizes must be strictly ascending".into(),
        ));
    }
    let per_size = run_parallel(&config.sizes, config.threads, |&n| {
        let synthetic = config.spec.with_rows(n).generate()?;
        let data = &synthetic.dataset;
        let strata = data.require_target()?.strata();
        let (train_rows, test_rows) =
            train_test_split(n, config.test_fraction, config.seed, strata.as_deref())?;
        let train = data.select_rows(&train_rows);
        let test = data.select_rows(&test_rows);
        config
            .encoders
            .iter()
            .map(|&encoder| {
                let out = evaluate_split(
                    &train,
                    &test,
                    encoder,
                    LearnerChoice::Logistic,
                    &config.encoder_params,
                    &config.learner_params,
                    config.seed,
                )?;
                Ok(ScalingRow {
                    n_rows: n,
                    encoder: encoder.name().to_owned(),
                    cardinality: synthetic.level_probabilities.len(),
                    encoded_width: out.encoded_width,
                    test_rows: test_rows.len(),
                    train_seconds: out.train_seconds,
                    accuracy: out.metrics["accuracy"],
                    train_seconds_ma: f64::NAN,
                    accuracy_ma: f64::NAN,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::with_capacity(config.sizes.len() * config.encoders.len());
    for e in 0..config.encoders.len() {
        let mut series: Vec<ScalingRow> = per_size.iter().map(|s| s[e].clone()).collect();
        let times: Vec<f64> = series.iter().map(|r| r.train_seconds).collect();
        let accs: Vec<f64> = series.iter().map(|r| r.accuracy).collect();
        for ((row, t), a) in series
            .iter_mut()
            .zip(moving_average(&times, config.window))
            .zip(moving_average(&accs, config.window))
        {
            row.train_seconds_ma = t;
            row.accuracy_ma = a;
        }
        rows.extend(series);
    }
    Ok(ScalingCurves {
        window: config.window,
        rows,
    })
}
