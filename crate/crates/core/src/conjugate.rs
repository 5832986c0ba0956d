//! Conjugate prior families used by the local layer.
//!
//! | prior               | likelihood  | posterior update                                   |
//! |---------------------|-------------|----------------------------------------------------|
//! | Beta(α, β)          | Bernoulli   | (α + s, β + n − s)                                 |
//! | Dirichlet(α)        | Categorical | α_k + n_k                                          |
//! | N-Inv-Gamma(μ,ν,α,β)| Gaussian    | ((νμ + n x̄)/(ν+n), ν+n, α+n/2, β + ½nσ̂² + nν(x̄−μ)²/(2(ν+n))) |
//!
//! `n` is always the evidence count of the level being updated and σ̂² the
//! population variance of that evidence.

use serde::{Deserialize, Serialize};

use crate::error::{CbmError, Result};
use crate::types::{MomentCount, TargetVector, TaskKind};

/// Clamp applied to degenerate Beta and Dirichlet priors.
pub const PRIOR_EPSILON: f64 = 1e-3;
/// Floor applied to the NIG prior scale when the target has zero variance.
pub const VARIANCE_FLOOR: f64 = 1e-9;
/// NIG prior pseudo-count.
pub const NIG_PRIOR_NU: f64 = 1.0;
/// NIG prior shape; the smallest integer shape with a finite Var[σ²].
pub const NIG_PRIOR_ALPHA: f64 = 3.0;

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CbmError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        positive_finite("beta alpha", alpha)?;
        positive_finite("beta beta", beta)?;
        Ok(BetaParams { alpha, beta })
    }

    /// Prior centred on the training positive rate: α = ȳ, β = 1 − ȳ, both
    /// clamped to [ε, 1 − ε].
    pub fn from_target(y: &[u8]) -> Result<Self> {
        if y.is_empty() {
            return Err(CbmError::EmptyTarget);
        }
        let positives = y.iter().filter(|&&v| v == 1).count();
        let mean = positives as f64 / y.len() as f64;
        let clamp = |v: f64| v.clamp(PRIOR_EPSILON, 1.0 - PRIOR_EPSILON);
        Ok(BetaParams {
            alpha: clamp(mean),
            beta: clamp(1.0 - mean),
        })
    }

    pub fn update(&self, y: &[u8]) -> Self {
        let successes = y.iter().filter(|&&v| v == 1).count() as u64;
        self.update_counts(successes, y.len() as u64)
    }

    /// Update from sufficient statistics: `successes` ones among `trials`.
    pub fn update_counts(&self, successes: u64, trials: u64) -> Self {
        debug_assert!(successes <= trials);
        BetaParams {
            alpha: self.alpha + successes as f64,
            beta: self.beta + (trials - successes) as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let total = self.alpha + self.beta;
        self.alpha * self.beta / (total * total * (total + 1.0))
    }

    /// `[mean]` or `[mean, variance]`.
    pub fn moments(&self, q: MomentCount) -> Vec<f64> {
        match q {
            MomentCount::One => vec![self.mean()],
            MomentCount::Two => vec![self.mean(), self.variance()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    pub alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(CbmError::InvalidParameter(format!(
                "dirichlet needs at least 2 concentrations, got {}",
                alpha.len()
            )));
        }
        for &a in &alpha {
            positive_finite("dirichlet alpha", a)?;
        }
        Ok(DirichletParams { alpha })
    }

    /// Prior proportional to the training class frequencies. Unseen classes
    /// get count ε before the concentrations are renormalised to sum to 1.
    pub fn from_target(y: &[u32], classes: usize) -> Result<Self> {
        if y.is_empty() {
            return Err(CbmError::EmptyTarget);
        }
        if classes < 2 {
            return Err(CbmError::InvalidParameter(format!(
                "dirichlet needs at least 2 classes, got {classes}"
            )));
        }
        let counts = class_counts(y, classes)?;
        let clamped: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64).max(PRIOR_EPSILON))
            .collect();
        let total: f64 = clamped.iter().sum();
        Ok(DirichletParams {
            alpha: clamped.into_iter().map(|a| a / total).collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }

    /// Ids outside `0..K` are ignored; validated targets never contain them.
    pub fn update(&self, y: &[u32]) -> Self {
        let mut counts = vec![0u64; self.classes()];
        for &c in y {
            if let Some(slot) = counts.get_mut(c as usize) {
                *slot += 1;
            }
        }
        self.update_counts(&counts)
    }

    pub fn update_counts(&self, counts: &[u64]) -> Self {
        debug_assert_eq!(counts.len(), self.alpha.len());
        DirichletParams {
            alpha: self
                .alpha
                .iter()
                .zip(counts)
                .map(|(a, &c)| a + c as f64)
                .collect(),
        }
    }

    pub fn concentration(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// All K means followed, for Q = 2, by all K marginal variances.
    pub fn moments(&self, q: MomentCount) -> Vec<f64> {
        let total = self.concentration();
        let mut out: Vec<f64> = self.alpha.iter().map(|a| a / total).collect();
        if q == MomentCount::Two {
            let denom = total * total * (total + 1.0);
            out.extend(self.alpha.iter().map(|a| a * (total - a) / denom));
        }
        out
    }
}

fn class_counts(y: &[u32], classes: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; classes];
    for &c in y {
        let slot = counts.get_mut(c as usize).ok_or_else(|| {
            CbmError::InvalidData(format!("class id {c} out of range for {classes} classes"))
        })?;
        *slot += 1;
    }
    Ok(counts)
}

/// Normal-inverse-gamma parameters over (mean m, variance σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub mu: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    pub fn new(mu: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(CbmError::InvalidParameter(format!(
                "nig mu must be finite, got {mu}"
            )));
        }
        positive_finite("nig nu", nu)?;
        positive_finite("nig alpha", alpha)?;
        positive_finite("nig beta", beta)?;
        Ok(NigParams {
            mu,
            nu,
            alpha,
            beta,
        })
    }

    /// μ = ȳ and β = σ̂² of the training target; ν and α take the fixed
    /// defaults [`NIG_PRIOR_NU`] and [`NIG_PRIOR_ALPHA`].
    pub fn from_target(y: &[f64]) -> Result<Self> {
        let (n, mean, var) = population_stats(y).ok_or(CbmError::EmptyTarget)?;
        debug_assert!(n > 0);
        Ok(NigParams {
            mu: mean,
            nu: NIG_PRIOR_NU,
            alpha: NIG_PRIOR_ALPHA,
            beta: var.max(VARIANCE_FLOOR),
        })
    }

    pub fn update(&self, y: &[f64]) -> Self {
        match population_stats(y) {
            None => *self,
            Some((n, mean, var)) => self.update_stats(n, mean, var),
        }
    }

    /// Update from sufficient statistics of `n > 0` observations.
    pub fn update_stats(&self, n: usize, mean: f64, population_var: f64) -> Self {
        if n == 0 {
            return *self;
        }
        let n = n as f64;
        let nu_post = self.nu + n;
        let diff = mean - self.mu;
        NigParams {
            mu: (self.nu * self.mu + n * mean) / nu_post,
            nu: nu_post,
            alpha: self.alpha + n / 2.0,
            beta: self.beta
                + 0.5 * n * population_var
                + (n * self.nu / nu_post) * (diff * diff / 2.0),
        }
    }

    /// `[E[m], E[σ²]]`, extended with `[Var[m], Var[σ²]]` for Q = 2.
    pub fn moments(&self, q: MomentCount) -> Result<Vec<f64>> {
        let required = match q {
            MomentCount::One => 1.0,
            MomentCount::Two => 2.0,
        };
        if self.alpha <= required {
            return Err(CbmError::UndefinedMoment(format!(
                "NIG moments up to order {} need alpha > {required}, got {}",
                q.get(),
                self.alpha
            )));
        }
        let am1 = self.alpha - 1.0;
        let mut out = vec![self.mu, self.beta / am1];
        if q == MomentCount::Two {
            out.push(self.beta / (self.nu * am1));
            out.push(self.beta * self.beta / (am1 * am1 * (self.alpha - 2.0)));
        }
        Ok(out)
    }
}

/// (count, mean, population variance) computed in two passes.
pub(crate) fn population_stats(y: &[f64]) -> Option<(usize, f64, f64)> {
    if y.is_empty() {
        return None;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((y.len(), mean, var))
}

/// Prior or posterior of any supported family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PosteriorParams {
    Beta(BetaParams),
    Dirichlet(DirichletParams),
    NormalInverseGamma(NigParams),
}

impl PosteriorParams {
    /// Prior for `task` initialised from the full training target.
    pub fn prior_for(task: TaskKind, target: &TargetVector) -> Result<Self> {
        match (task, target) {
            (TaskKind::Binary, TargetVector::Binary(y)) => {
                Ok(PosteriorParams::Beta(BetaParams::from_target(y)?))
            }
            (TaskKind::Multiclass { classes }, TargetVector::Multiclass { classes: k, ids })
                if classes == *k =>
            {
                Ok(PosteriorParams::Dirichlet(DirichletParams::from_target(
                    ids, classes,
                )?))
            }
            (TaskKind::Regression, TargetVector::Regression(y)) => Ok(
                PosteriorParams::NormalInverseGamma(NigParams::from_target(y)?),
            ),
            (task, target) => Err(CbmError::TargetMismatch {
                task: task.to_string(),
                detail: format!("target is {}", target.task()),
            }),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            PosteriorParams::Beta(_) => "beta",
            PosteriorParams::Dirichlet(_) => "dirichlet",
            PosteriorParams::NormalInverseGamma(_) => "normal_inverse_gamma",
        }
    }

    /// Whether this family is the conjugate prior used for `task`.
    pub fn matches(&self, task: TaskKind) -> bool {
        match (self, task) {
            (PosteriorParams::Beta(_), TaskKind::Binary) => true,
            (PosteriorParams::Dirichlet(d), TaskKind::Multiclass { classes }) => {
                d.classes() == classes
            }
            (PosteriorParams::NormalInverseGamma(_), TaskKind::Regression) => true,
            _ => false,
        }
    }

    pub fn moments(&self, q: MomentCount) -> Result<Vec<f64>> {
        match self {
            PosteriorParams::Beta(p) => Ok(p.moments(q)),
            PosteriorParams::Dirichlet(p) => Ok(p.moments(q)),
            PosteriorParams::NormalInverseGamma(p) => p.moments(q),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PosteriorParams::Beta(p) => BetaParams::new(p.alpha, p.beta).map(|_| ()),
            PosteriorParams::Dirichlet(p) => DirichletParams::new(p.alpha.clone()).map(|_| ()),
            PosteriorParams::NormalInverseGamma(p) => {
                NigParams::new(p.mu, p.nu, p.alpha, p.beta).map(|_| ())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: MomentCount = MomentCount::One;
    const TWO: MomentCount = MomentCount::Two;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn all_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
    }

    #[test]
    fn beta_prior_examples() {
        assert_eq!(
            BetaParams::from_target(&[1, 0, 0, 1]).unwrap(),
            BetaParams {
                alpha: 0.5,
                beta: 0.5
            }
        );
        assert_eq!(
            BetaParams::from_target(&[1, 0, 0, 0]).unwrap(),
            BetaParams {
                alpha: 0.25,
                beta: 0.75
            }
        );
        let p = BetaParams::from_target(&[1, 1, 1, 1]).unwrap();
        assert!(close(p.alpha, 0.999, 1e-15) && close(p.beta, 0.001, 1e-15));
        let p = BetaParams::from_target(&[0, 0]).unwrap();
        assert!(close(p.alpha, 0.001, 1e-15) && close(p.beta, 0.999, 1e-15));
        assert!(matches!(
            BetaParams::from_target(&[]),
            Err(CbmError::EmptyTarget)
        ));
    }

    #[test]
    fn beta_update_examples() {
        let uniform = BetaParams {
            alpha: 1.0,
            beta: 1.0,
        };
        assert_eq!(
            uniform.update(&[1, 1, 0]),
            BetaParams {
                alpha: 3.0,
                beta: 2.0
            }
        );
        let p = BetaParams {
            alpha: 0.25,
            beta: 0.75,
        };
        assert_eq!(p.update(&[]), p);
        let half = BetaParams {
            alpha: 0.5,
            beta: 0.5,
        };
        assert_eq!(
            half.update(&[0, 0, 0, 0]),
            BetaParams {
                alpha: 0.5,
                beta: 4.5
            }
        );
    }

    #[test]
    fn beta_moment_examples() {
        assert!(all_close(
            &BetaParams {
                alpha: 3.0,
                beta: 2.0
            }
            .moments(TWO),
            &[0.6, 0.04],
            1e-15
        ));
        assert_eq!(
            BetaParams {
                alpha: 1.0,
                beta: 1.0
            }
            .moments(ONE),
            vec![0.5]
        );
        assert!(all_close(
            &BetaParams {
                alpha: 2.0,
                beta: 2.0
            }
            .moments(TWO),
            &[0.5, 0.05],
            1e-15
        ));
    }

    #[test]
    fn dirichlet_prior_examples() {
        let p = DirichletParams::from_target(&[0, 0, 1, 2], 3).unwrap();
        assert_eq!(p.alpha, vec![0.5, 0.25, 0.25]);
        let p = DirichletParams::from_target(&[0, 0], 2).unwrap();
        assert!(close(p.alpha[0], 2.0 / 2.001, 1e-15));
        assert!(close(p.alpha[1], 0.001 / 2.001, 1e-15));
        assert!(close(p.alpha[0], 0.9995, 1e-6) && close(p.alpha[1], 0.0005, 1e-6));
        let p = DirichletParams::from_target(&[0, 1, 2], 3).unwrap();
        assert!(all_close(&p.alpha, &[1.0 / 3.0; 3], 1e-15));
        assert!(matches!(
            DirichletParams::from_target(&[], 3),
            Err(CbmError::EmptyTarget)
        ));
        assert!(DirichletParams::from_target(&[0, 3], 3).is_err());
    }

    #[test]
    fn dirichlet_update_examples() {
        let p = DirichletParams {
            alpha: vec![1.0, 1.0, 1.0],
        };
        assert_eq!(p.update(&[0, 0, 2]).alpha, vec![3.0, 1.0, 2.0]);
        let p = DirichletParams {
            alpha: vec![0.5, 0.5],
        };
        assert_eq!(p.update(&[]).alpha, vec![0.5, 0.5]);
        let p = DirichletParams {
            alpha: vec![1.0, 2.0],
        };
        assert_eq!(p.update(&[1, 1, 1]).alpha, vec![1.0, 5.0]);
    }

    #[test]
    fn dirichlet_moment_examples() {
        let p = DirichletParams {
            alpha: vec![3.0, 1.0, 2.0],
        };
        assert!(all_close(
            &p.moments(ONE),
            &[0.5, 1.0 / 6.0, 1.0 / 3.0],
            1e-15
        ));
        let expected = [
            0.5,
            1.0 / 6.0,
            1.0 / 3.0,
            1.0 / 28.0,
            5.0 / 252.0,
            8.0 / 252.0,
        ];
        assert!(all_close(&p.moments(TWO), &expected, 1e-15));
        let sym = DirichletParams {
            alpha: vec![1.0, 1.0],
        };
        assert_eq!(sym.moments(ONE), vec![0.5, 0.5]);
    }

    #[test]
    fn nig_prior_examples() {
        assert_eq!(
            NigParams::from_target(&[0.0, 2.0]).unwrap(),
            NigParams {
                mu: 1.0,
                nu: 1.0,
                alpha: 3.0,
                beta: 1.0
            }
        );
        assert_eq!(
            NigParams::from_target(&[5.0, 5.0, 5.0]).unwrap(),
            NigParams {
                mu: 5.0,
                nu: 1.0,
                alpha: 3.0,
                beta: 1e-9
            }
        );
        let p = NigParams::from_target(&[1.0, 3.0, 5.0]).unwrap();
        assert_eq!((p.mu, p.nu, p.alpha), (3.0, 1.0, 3.0));
        assert!(close(p.beta, 8.0 / 3.0, 1e-15));
        assert!(matches!(
            NigParams::from_target(&[]),
            Err(CbmError::EmptyTarget)
        ));
    }

    #[test]
    fn nig_update_examples() {
        let prior = NigParams {
            mu: 0.0,
            nu: 1.0,
            alpha: 3.0,
            beta: 1.0,
        };
        let p = prior.update(&[2.0, 2.0]);
        assert!(close(p.mu, 4.0 / 3.0, 1e-15) && p.nu == 3.0 && p.alpha == 4.0);
        assert!(close(p.beta, 7.0 / 3.0, 1e-15));
        assert_eq!(prior.update(&[]), prior);
        let p = prior.update(&[1.0, 3.0]);
        assert!(close(p.mu, 4.0 / 3.0, 1e-15) && p.nu == 3.0 && p.alpha == 4.0);
        assert!(close(p.beta, 10.0 / 3.0, 1e-15));
    }

    #[test]
    fn nig_moment_examples() {
        let p = NigParams {
            mu: 4.0 / 3.0,
            nu: 3.0,
            alpha: 4.0,
            beta: 7.0 / 3.0,
        };
        assert!(all_close(
            &p.moments(ONE).unwrap(),
            &[4.0 / 3.0, 7.0 / 9.0],
            1e-15
        ));
        let expected = [4.0 / 3.0, 7.0 / 9.0, 7.0 / 27.0, 49.0 / 162.0];
        assert!(all_close(&p.moments(TWO).unwrap(), &expected, 1e-15));
        let prior = NigParams {
            mu: 0.0,
            nu: 1.0,
            alpha: 3.0,
            beta: 1.0,
        };
        assert_eq!(prior.moments(ONE).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn nig_moments_undefined_for_small_shape() {
        let p = NigParams {
            mu: 0.0,
            nu: 1.0,
            alpha: 1.5,
            beta: 1.0,
        };
        assert!(p.moments(ONE).is_ok());
        assert!(matches!(p.moments(TWO), Err(CbmError::UndefinedMoment(_))));
        let p = NigParams {
            mu: 0.0,
            nu: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        assert!(matches!(p.moments(ONE), Err(CbmError::UndefinedMoment(_))));
    }

    #[test]
    fn beta_posterior_mean_between_prior_and_sample() {
        let prior = BetaParams {
            alpha: 0.3,
            beta: 0.7,
        };
        let y = [1, 1, 1, 0];
        let post = prior.update(&y).mean();
        assert!(post > prior.mean() && post < 0.75);
    }

    #[test]
    fn prior_for_rejects_mismatched_task() {
        let y = TargetVector::Binary(vec![0, 1]);
        assert!(matches!(
            PosteriorParams::prior_for(TaskKind::Regression, &y),
            Err(CbmError::TargetMismatch { .. })
        ));
        let y = TargetVector::Multiclass {
            classes: 3,
            ids: vec![0, 1, 2],
        };
        assert!(PosteriorParams::prior_for(TaskKind::multiclass(4).unwrap(), &y).is_err());
        assert!(PosteriorParams::prior_for(TaskKind::multiclass(3).unwrap(), &y).is_ok());
    }
}
