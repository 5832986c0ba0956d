//! Evaluation metrics.

use crate::error::{CbmError, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CbmError::InvalidParameter(format!(
            "length mismatch: {a} vs {b}"
        )));
    }
    if a == 0 {
        return Err(CbmError::UndefinedMetric("no observations".into()));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(y_true: &[T], y_pred: &[T]) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic, ties receiving
/// midranks.
pub fn auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    check_len(y_true.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(CbmError::InvalidData("scores contain NaN".into()));
    }
    let n_pos = y_true.iter().filter(|&&t| t == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CbmError::UndefinedMetric(
            "AUC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if y_true[idx] == 1 {
                pos_rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Coefficient of determination, 1 − SS_res / SS_tot.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(CbmError::UndefinedMetric(
            "R² undefined for a constant target".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Quadratic weighted kappa over `classes` ordered classes.
pub fn qwk(y_true: &[u32], y_pred: &[u32], classes: usize) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    if classes < 2 {
        return Err(CbmError::InvalidParameter(
            "QWK needs at least 2 classes".into(),
        ));
    }
    if y_true.iter().chain(y_pred).any(|&c| c as usize >= classes) {
        return Err(CbmError::InvalidData(format!(
            "class id out of range for {classes} classes"
        )));
    }
    let k = classes;
    let n = y_true.len() as f64;
    let mut observed = vec![0.0; k * k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        observed[t as usize * k + p as usize] += 1.0;
        row[t as usize] += 1.0;
        col[p as usize] += 1.0;
    }
    let denom_w = ((k - 1) * (k - 1)) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / denom_w;
            num += w * observed[i * k + j];
            den += w * row[i] * col[j] / n;
        }
    }
    if den == 0.0 {
        return Err(CbmError::UndefinedMetric(
            "QWK undefined when expected disagreement is zero".into(),
        ));
    }
    Ok(1.0 - num / den)
}
