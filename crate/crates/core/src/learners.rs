//! Deterministic linear meta-learners: L2-regularised logistic and softmax
//! regression fitted by full-batch gradient descent with backtracking line
//! search, and ridge regression via the normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{CbmError, Result};
use crate::types::{EncodedMatrix, TaskKind};

/// Sufficient-decrease constant of the Armijo condition.
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions {
            l2: 1e-4,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

/// Weights are row-major `classes x width` for multiclass models and a
/// single row otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    task: TaskKind,
    width: usize,
    weights: Vec<f64>,
    intercepts: Vec<f64>,
    l2: f64,
    meta: TrainingMeta,
}

fn check_inputs(z: &EncodedMatrix, n_targets: usize, l2: f64) -> Result<()> {
    if z.n_rows() != n_targets {
        return Err(CbmError::InvalidParameter(format!(
            "{} rows but {n_targets} targets",
            z.n_rows()
        )));
    }
    if z.n_rows() == 0 {
        return Err(CbmError::EmptyDataset);
    }
    if z.values().iter().any(|v| !v.is_finite()) {
        return Err(CbmError::InvalidData(
            "design matrix has non-finite entries".into(),
        ));
    }
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(CbmError::InvalidParameter(format!(
            "l2 must be >= 0, got {l2}"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log(1 + e^m) without overflow.
fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood plus (l2/2)·‖w‖² at the given margins.
fn logistic_loss(margins: &[f64], y: &[u8], w_sq: f64, l2: f64) -> f64 {
    let n = margins.len() as f64;
    let nll: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| softplus(m) - t as f64 * m)
        .sum();
    nll / n + 0.5 * l2 * w_sq
}

/// Objective and gradient (weights then intercept) of the logistic loss.
#[cfg(test)]
fn logistic_objective_gradient(
    z: &EncodedMatrix,
    y: &[u8],
    w: &[f64],
    b: f64,
    l2: f64,
) -> (f64, Vec<f64>) {
    let margins: Vec<f64> = z.rows().map(|row| dot(row, w) + b).collect();
    let obj = logistic_loss(&margins, y, dot(w, w), l2);
    let (gw, gb) = logistic_gradient(z, y, &margins, w, l2);
    let mut g = gw;
    g.push(gb);
    (obj, g)
}

fn logistic_gradient(
    z: &EncodedMatrix,
    y: &[u8],
    margins: &[f64],
    w: &[f64],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = z.n_rows() as f64;
    let mut gw = vec![0.0; z.width()];
    let mut gb = 0.0;
    for ((row, &m), &t) in z.rows().zip(margins).zip(y) {
        let r = sigmoid(m) - t as f64;
        gb += r;
        if r != 0.0 {
            for (g, &x) in gw.iter_mut().zip(row) {
                *g += r * x;
            }
        }
    }
    for (g, &wj) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wj;
    }
    (gw, gb / n)
}

/// Binary logistic regression.
pub fn fit_logistic(z: &EncodedMatrix, y: &[u8], opts: &GdOptions) -> Result<LinearModel> {
    check_inputs(z, y.len(), opts.l2)?;
    if y.iter().any(|&t| t > 1) {
        return Err(CbmError::InvalidData("logistic target must be 0/1".into()));
    }
    let d = z.width();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut margins = vec![0.0; z.n_rows()];
    let mut step = 1.0_f64;
    let mut meta = TrainingMeta {
        iterations: 0,
        final_objective: logistic_loss(&margins, y, 0.0, opts.l2),
        converged: false,
    };
    for iter in 0..opts.max_iter {
        let (gw, gb) = logistic_gradient(z, y, &margins, &w, opts.l2);
        let gmax = gw.iter().fold(gb.abs(), |a, g| a.max(g.abs()));
        if gmax < opts.tol {
            meta.converged = true;
            break;
        }
        // margins move along -(Z gw + gb)
        let dm: Vec<f64> = z.rows().map(|row| -(dot(row, &gw) + gb)).collect();
        let g_sq = dot(&gw, &gw) + gb * gb;
        let w_sq = dot(&w, &w);
        let w_g = dot(&w, &gw);
        let gw_sq = dot(&gw, &gw);
        let f0 = meta.final_objective;
        let along = |t: f64| -> f64 {
            let moved: Vec<f64> = margins.iter().zip(&dm).map(|(m, d)| m + t * d).collect();
            logistic_loss(&moved, y, w_sq - 2.0 * t * w_g + t * t * gw_sq, opts.l2)
        };
        let mut t = (step * 2.0).min(1e8);
        let mut ft = along(t);
        while ft > f0 - ARMIJO_C * t * g_sq {
            t *= 0.5;
            if t < MIN_STEP {
                break;
            }
            ft = along(t);
        }
        meta.iterations = iter + 1;
        if t < MIN_STEP {
            break;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= t * g;
        }
        b -= t * gb;
        for (m, d) in margins.iter_mut().zip(&dm) {
            *m += t * d;
        }
        meta.final_objective = ft;
        step = t;
    }
    Ok(LinearModel {
        task: TaskKind::Binary,
        width: d,
        weights: w,
        intercepts: vec![b],
        l2: opts.l2,
        meta,
    })
}

/// Mean softmax cross-entropy plus (l2/2)·‖W‖²; `margins` is row-major N x K.
fn softmax_loss(margins: &[f64], y: &[u32], k: usize, w_sq: f64, l2: f64) -> f64 {
    let n = y.len() as f64;
    let nll: f64 = margins
        .chunks_exact(k)
        .zip(y)
        .map(|(m, &c)| log_sum_exp(m) - m[c as usize])
        .sum();
    nll / n + 0.5 * l2 * w_sq
}

fn log_sum_exp(m: &[f64]) -> f64 {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + m.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_into(m: &[f64], out: &mut [f64]) {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(m) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Multinomial (softmax) logistic regression over `classes` classes.
pub fn fit_multinomial(
    z: &EncodedMatrix,
    y: &[u32],
    classes: usize,
    opts: &GdOptions,
) -> Result<LinearModel> {
    check_inputs(z, y.len(), opts.l2)?;
    if classes < 2 {
        return Err(CbmError::InvalidParameter(format!(
            "multinomial needs at least 2 classes, got {classes}"
        )));
    }
    if y.iter().any(|&c| c as usize >= classes) {
        return Err(CbmError::InvalidData(format!(
            "class id out of range for {classes} classes"
        )));
    }
    let (n, d, k) = (z.n_rows(), z.width(), classes);
    let nf = n as f64;
    let mut w = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    let mut margins = vec![0.0; n * k];
    let mut probs = vec![0.0; k];
    let mut step = 1.0_f64;
    let mut meta = TrainingMeta {
        iterations: 0,
        final_objective: softmax_loss(&margins, y, k, 0.0, opts.l2),
        converged: false,
    };
    for iter in 0..opts.max_iter {
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        for ((row, m), &c) in z.rows().zip(margins.chunks_exact(k)).zip(y) {
            softmax_into(m, &mut probs);
            probs[c as usize] -= 1.0;
            for (class, &r) in probs.iter().enumerate() {
                gb[class] += r;
                for (g, &x) in gw[class * d..(class + 1) * d].iter_mut().zip(row) {
                    *g += r * x;
                }
            }
        }
        for (g, &wj) in gw.iter_mut().zip(&w) {
            *g = *g / nf + opts.l2 * wj;
        }
        for g in gb.iter_mut() {
            *g /= nf;
        }
        let gmax = gw.iter().chain(&gb).fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < opts.tol {
            meta.converged = true;
            break;
        }
        let mut dm = vec![0.0; n * k];
        for (row, out) in z.rows().zip(dm.chunks_exact_mut(k)) {
            for (class, o) in out.iter_mut().enumerate() {
                *o = -(dot(row, &gw[class * d..(class + 1) * d]) + gb[class]);
            }
        }
        let gw_sq = dot(&gw, &gw);
        let g_sq = gw_sq + dot(&gb, &gb);
        let w_sq = dot(&w, &w);
        let w_g = dot(&w, &gw);
        let f0 = meta.final_objective;
        let along = |t: f64| -> f64 {
            let moved: Vec<f64> = margins.iter().zip(&dm).map(|(m, d)| m + t * d).collect();
            softmax_loss(&moved, y, k, w_sq - 2.0 * t * w_g + t * t * gw_sq, opts.l2)
        };
        let mut t = (step * 2.0).min(1e8);
        let mut ft = along(t);
        while ft > f0 - ARMIJO_C * t * g_sq {
            t *= 0.5;
            if t < MIN_STEP {
                break;
            }
            ft = along(t);
        }
        meta.iterations = iter + 1;
        if t < MIN_STEP {
            break;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= t * g;
        }
        for (bj, g) in b.iter_mut().zip(&gb) {
            *bj -= t * g;
        }
        for (m, dv) in margins.iter_mut().zip(&dm) {
            *m += t * dv;
        }
        meta.final_objective = ft;
        step = t;
    }
    Ok(LinearModel {
        task: TaskKind::Multiclass { classes },
        width: d,
        weights: w,
        intercepts: b,
        l2: opts.l2,
        meta,
    })
}

/// Ridge regression: minimises ‖y − Zw − b‖² + l2·‖w‖² with an unpenalised
/// intercept. Requires `l2 > 0`.
pub fn fit_ridge(z: &EncodedMatrix, y: &[f64], l2: f64) -> Result<LinearModel> {
    check_inputs(z, y.len(), l2)?;
    if l2 <= 0.0 {
        return Err(CbmError::InvalidParameter(
            "ridge needs l2 > 0 to guarantee a non-singular system".into(),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CbmError::InvalidData(
            "ridge target has non-finite values".into(),
        ));
    }
    let (n, d) = (z.n_rows(), z.width());
    let nf = n as f64;
    let col_means: Vec<f64> = (0..d)
        .map(|c| z.rows().map(|r| r[c]).sum::<f64>() / nf)
        .collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let centered = DMatrix::from_fn(n, d, |r, c| z.get(r, c) - col_means[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = centered.tr_mul(&centered);
    for i in 0..d {
        gram[(i, i)] += l2;
    }
    let rhs = centered.tr_mul(&yc);
    let w = gram
        .cholesky()
        .ok_or_else(|| {
            CbmError::InvalidData("ridge normal equations are not positive definite".into())
        })?
        .solve(&rhs);
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - dot(&col_means, &weights);
    let residual: f64 = z
        .rows()
        .zip(y)
        .map(|(row, &t)| {
            let e = t - dot(row, &weights) - intercept;
            e * e
        })
        .sum();
    Ok(LinearModel {
        task: TaskKind::Regression,
        width: d,
        weights,
        intercepts: vec![intercept],
        l2,
        meta: TrainingMeta {
            iterations: 1,
            final_objective: residual + l2 * w.norm_squared(),
            converged: true,
        },
    })
}

impl LinearModel {
    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    fn check_width(&self, z: &EncodedMatrix) -> Result<()> {
        if z.width() != self.width {
            return Err(CbmError::SchemaMismatch(format!(
                "model expects width {}, matrix has {}",
                self.width,
                z.width()
            )));
        }
        Ok(())
    }

    fn row_scores(&self, row: &[f64], out: &mut [f64]) {
        let d = self.width;
        for (k, o) in out.iter_mut().enumerate() {
            *o = dot(row, &self.weights[k * d..(k + 1) * d]) + self.intercepts[k];
        }
    }

    /// Linear scores: N values for binary/regression, N x K row-major for
    /// multiclass.
    pub fn decision_function(&self, z: &EncodedMatrix) -> Result<Vec<f64>> {
        self.check_width(z)?;
        let k = self.intercepts.len();
        let mut out = vec![0.0; z.n_rows() * k];
        for (row, o) in z.rows().zip(out.chunks_exact_mut(k)) {
            self.row_scores(row, o);
        }
        Ok(out)
    }

    /// P(y = 1) for binary models; row-major class probabilities for
    /// multiclass models.
    pub fn predict_proba(&self, z: &EncodedMatrix) -> Result<Vec<f64>> {
        let mut scores = self.decision_function(z)?;
        match self.task {
            TaskKind::Binary => scores.iter_mut().for_each(|s| *s = sigmoid(*s)),
            TaskKind::Multiclass { classes } => {
                let mut buf = vec![0.0; classes];
                for row in scores.chunks_exact_mut(classes) {
                    softmax_into(row, &mut buf);
                    row.copy_from_slice(&buf);
                }
            }
            TaskKind::Regression => {
                return Err(CbmError::Unsupported(
                    "regression model has no probabilities".into(),
                ))
            }
        }
        Ok(scores)
    }

    /// Hard class predictions (threshold 0.5 for binary, argmax otherwise).
    pub fn predict_classes(&self, z: &EncodedMatrix) -> Result<Vec<u32>> {
        let probs = self.predict_proba(z)?;
        Ok(match self.task {
            TaskKind::Binary => probs.iter().map(|&p| u32::from(p >= 0.5)).collect(),
            TaskKind::Multiclass { classes } => probs
                .chunks_exact(classes)
                .map(|row| {
                    let mut best = 0;
                    for (c, &p) in row.iter().enumerate() {
                        if p > row[best] {
                            best = c;
                        }
                    }
                    best as u32
                })
                .collect(),
            TaskKind::Regression => unreachable!("predict_proba rejects regression"),
        })
    }

    /// Real-valued predictions of a regression model.
    pub fn predict(&self, z: &EncodedMatrix) -> Result<Vec<f64>> {
        if self.task != TaskKind::Regression {
            return Err(CbmError::Unsupported(format!(
                "predict on a {} model",
                self.task
            )));
        }
        self.decision_function(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> EncodedMatrix {
        let width = rows.first().map_or(0, |r| r.len());
        let labels = (0..width).map(|i| format!("x{i}")).collect();
        EncodedMatrix::from_rows(rows.len(), rows.concat(), labels).unwrap()
    }

    /// Small deterministic pseudo-random design for optimisation tests.
    fn design(n: usize, d: usize) -> EncodedMatrix {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let values = (0..n * d).map(|_| next()).collect();
        EncodedMatrix::from_rows(n, values, (0..d).map(|i| format!("x{i}")).collect()).unwrap()
    }

    #[test]
    fn separable_sign_recovery() {
        let z = matrix(&[&[-1.0], &[1.0], &[-1.0], &[1.0]]);
        let y = [0, 1, 0, 1];
        let opts = GdOptions {
            l2: 0.1,
            ..Default::default()
        };
        let m = fit_logistic(&z, &y, &opts).unwrap();
        assert!(m.weights()[0] > 0.0);
        assert_eq!(m.predict_classes(&z).unwrap(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn all_zero_target_drives_intercept_down() {
        let z = matrix(&[&[0.3], &[-0.2], &[1.0], &[0.0]]);
        let m = fit_logistic(&z, &[0, 0, 0, 0], &GdOptions::default()).unwrap();
        assert!(m.intercepts()[0] < -3.0);
        assert!(m.predict_proba(&z).unwrap().iter().all(|&p| p < 0.5));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let z = design(40, 3);
        let y: Vec<u8> = (0..40)
            .map(|i| u8::from(z.get(i, 0) + 0.3 * z.get(i, 2) > 0.1))
            .collect();
        let opts = GdOptions {
            l2: 0.05,
            max_iter: 2000,
            tol: 1e-10,
        };
        let m = fit_logistic(&z, &y, &opts).unwrap();
        let mut theta: Vec<f64> = m.weights().to_vec();
        theta.push(m.intercepts()[0]);
        let eval = |t: &[f64]| logistic_objective_gradient(&z, &y, &t[..3], t[3], opts.l2);
        let (_, grad) = eval(&theta);
        // also probe away from the optimum where the gradient is not ~0
        let probe: Vec<f64> = theta.iter().map(|v| v + 0.37).collect();
        for point in [theta.as_slice(), probe.as_slice()] {
            let (_, analytic) = eval(point);
            for j in 0..4 {
                let h = 1e-6;
                let mut up = point.to_vec();
                let mut down = point.to_vec();
                up[j] += h;
                down[j] -= h;
                let fd = (eval(&up).0 - eval(&down).0) / (2.0 * h);
                let scale = analytic[j].abs().max(1e-3);
                assert!(
                    (fd - analytic[j]).abs() / scale < 1e-5,
                    "j={j} fd={fd} an={}",
                    analytic[j]
                );
            }
        }
        assert!(grad.iter().all(|g| g.abs() < 1e-6), "{grad:?}");
    }

    #[test]
    fn multinomial_two_classes_matches_logistic() {
        let z = design(60, 2);
        let y: Vec<u8> = (0..60)
            .map(|i| u8::from(z.get(i, 0) - 0.5 * z.get(i, 1) + 0.2 * ((i % 7) as f64 - 3.0) > 0.0))
            .collect();
        let tight = GdOptions {
            l2: 0.02,
            max_iter: 20_000,
            tol: 1e-10,
        };
        let logistic = fit_logistic(&z, &y, &tight).unwrap();
        // softmax splits the weight across two rows, halving the penalty
        let soft_opts = GdOptions {
            l2: 2.0 * tight.l2,
            ..tight
        };
        let ids: Vec<u32> = y.iter().map(|&v| v as u32).collect();
        let soft = fit_multinomial(&z, &ids, 2, &soft_opts).unwrap();
        let p1 = logistic.predict_proba(&z).unwrap();
        let p2 = soft.predict_proba(&z).unwrap();
        for (a, row) in p1.iter().zip(p2.chunks_exact(2)) {
            assert!((a - row[1]).abs() < 1e-4);
        }
    }

    #[test]
    fn multinomial_learns_three_classes() {
        let z = design(90, 2);
        let y: Vec<u32> = (0..90)
            .map(|i| {
                let x = z.get(i, 0);
                if x < -0.33 {
                    0
                } else if x < 0.33 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let m = fit_multinomial(
            &z,
            &y,
            3,
            &GdOptions {
                l2: 1e-4,
                max_iter: 3000,
                tol: 1e-8,
            },
        )
        .unwrap();
        let pred = m.predict_classes(&z).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 90.0;
        assert!(acc > 0.9, "accuracy {acc}");
        let probs = m.predict_proba(&z).unwrap();
        assert!(probs
            .chunks_exact(3)
            .all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ridge_recovers_slope() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 4.0 - 2.0).collect();
        let z = EncodedMatrix::from_rows(20, xs.clone(), vec!["x".into()]).unwrap();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let m = fit_ridge(&z, &y, 1e-8).unwrap();
        assert!((m.weights()[0] - 2.0).abs() < 1e-4);
        assert!(m.intercepts()[0].abs() < 1e-6);
        let pred = m.predict(&z).unwrap();
        assert!(pred.iter().zip(&y).all(|(p, t)| (p - t).abs() < 1e-4));
    }

    #[test]
    fn ridge_shrinks_with_l2() {
        let z = design(30, 2);
        let y: Vec<f64> = (0..30)
            .map(|i| 3.0 * z.get(i, 0) - z.get(i, 1) + 0.5)
            .collect();
        let mut last = f64::INFINITY;
        for l2 in [1e-6, 1e-2, 1.0, 10.0, 100.0, 1e4] {
            let norm = dot(
                fit_ridge(&z, &y, l2).unwrap().weights(),
                fit_ridge(&z, &y, l2).unwrap().weights(),
            );
            assert!(norm < last);
            last = norm;
        }
        assert!(fit_ridge(&z, &y, 0.0).is_err());
    }

    #[test]
    fn learners_reject_bad_input() {
        let z = matrix(&[&[1.0], &[2.0]]);
        assert!(fit_logistic(&z, &[0], &GdOptions::default()).is_err());
        assert!(fit_logistic(&z, &[0, 2], &GdOptions::default()).is_err());
        assert!(fit_multinomial(&z, &[0, 3], 3, &GdOptions::default()).is_err());
        let mut bad = EncodedMatrix::zeros(2, vec!["x".into()]);
        bad.row_mut(0)[0] = f64::NAN;
        assert!(matches!(
            fit_logistic(&bad, &[0, 1], &GdOptions::default()),
            Err(CbmError::InvalidData(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let z = design(50, 4);
        let y: Vec<u8> = (0..50).map(|i| u8::from(z.get(i, 3) > 0.0)).collect();
        let a = fit_logistic(&z, &y, &GdOptions::default()).unwrap();
        let b = fit_logistic(&z, &y, &GdOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
