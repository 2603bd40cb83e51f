//! Source-vs-target domain classifier and the importance weights derived
//! from it.
//!
//! The discriminator is a logistic regression on per-column standardized
//! inputs, trained full batch on regularized binary cross-entropy with
//! source samples labeled 0 and target samples labeled 1.

use rand_distr::{Distribution, Normal};

use crate::kernels::Matrix;
use crate::seed::rng_for;

pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum DiscriminatorError {
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("both domains need at least one sample")]
    EmptyDomain,
    #[error("invalid training config: {0}")]
    BadConfig(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<(), DiscriminatorError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(DiscriminatorError::BadConfig("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(DiscriminatorError::BadConfig("epochs must be at least 1"));
        }
        if self.l2_penalty.is_nan() || self.l2_penalty < 0.0 {
            return Err(DiscriminatorError::BadConfig("l2_penalty must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorModel {
    /// Coefficients on standardized columns, bias last.
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub train_counts: (usize, usize),
    /// Objective value after each epoch (index 0 is the initial loss).
    pub loss_history: Vec<f64>,
}

impl DiscriminatorModel {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn logit(&self, row: &[f64]) -> f64 {
        let d = self.dim();
        let terms = self.weights[..d].iter().zip(row).zip(&self.means).zip(&self.scales);
        terms.fold(self.weights[d], |z, (((w, x), m), s)| z + w * (x - m) / s)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let d = x.cols();
    let mut means = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; d];
    for row in x.iter_rows() {
        for j in 0..d {
            vars[j] += (row[j] - means[j]).powi(2);
        }
    }
    let scales = vars
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            // Constant columns carry no signal; leave them unscaled.
            if s > 1e-12 { s } else { 1.0 }
        })
        .collect();
    (means, scales)
}

/// Mean cross-entropy plus `l2/2 * |w|²` (bias excluded).
fn objective(z: &[f64], y: &[f64], weights: &[f64], l2: f64) -> f64 {
    let n = z.len() as f64;
    let bce: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| if y > 0.5 { softplus(-z) } else { softplus(z) })
        .sum::<f64>()
        / n;
    let d = weights.len() - 1;
    bce + 0.5 * l2 * weights[..d].iter().map(|w| w * w).sum::<f64>()
}

pub fn train_discriminator(
    source: &Matrix,
    target: &Matrix,
    config: &TrainConfig,
) -> Result<DiscriminatorModel, DiscriminatorError> {
    config.check()?;
    if source.cols() != target.cols() {
        return Err(DiscriminatorError::DimensionMismatch {
            expected: source.cols(),
            got: target.cols(),
        });
    }
    if source.rows() == 0 || target.rows() == 0 {
        return Err(DiscriminatorError::EmptyDomain);
    }
    let d = source.cols();
    let all = source.vstack(target);
    let (means, scales) = column_stats(&all);
    let n = all.rows();
    let mut xs = Vec::with_capacity(n * d);
    for row in all.iter_rows() {
        xs.extend(row.iter().zip(&means).zip(&scales).map(|((v, m), s)| (v - m) / s));
    }
    let y: Vec<f64> = (0..n).map(|i| if i < source.rows() { 0.0 } else { 1.0 }).collect();

    // Standardized columns have unit mean square, so the logistic loss is
    // (d + 1) / 4 smooth at most; step sizes above the inverse of that bound
    // can make the loss oscillate.
    let smoothness = 0.25 * (d as f64 + 1.0) + config.l2_penalty;
    let lr = config.learning_rate.min(1.0 / smoothness);

    let mut rng = rng_for(config.seed, &[0xd15c]);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut weights: Vec<f64> = (0..=d).map(|_| init.sample(&mut rng)).collect();

    let mut z = vec![0.0; n];
    let eval_logits = |w: &[f64], z: &mut [f64]| {
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &xs[i * d..(i + 1) * d];
            *zi = w[d] + row.iter().zip(w).map(|(x, w)| x * w).sum::<f64>();
        }
    };
    eval_logits(&weights, &mut z);
    let mut history = vec![objective(&z, &y, &weights, config.l2_penalty)];
    let mut grad = vec![0.0; d + 1];
    for epoch in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let r = sigmoid(z[i]) - y[i];
            let row = &xs[i * d..(i + 1) * d];
            for (g, x) in grad.iter_mut().zip(row) {
                *g += r * x;
            }
            grad[d] += r;
        }
        for j in 0..=d {
            grad[j] /= n as f64;
            if j < d {
                grad[j] += config.l2_penalty * weights[j];
            }
            weights[j] -= lr * grad[j];
        }
        eval_logits(&weights, &mut z);
        let loss = objective(&z, &y, &weights, config.l2_penalty);
        if !loss.is_finite() {
            return Err(DiscriminatorError::NonFiniteLoss(epoch));
        }
        history.push(loss);
    }
    Ok(DiscriminatorModel {
        weights,
        means,
        scales,
        train_counts: (source.rows(), target.rows()),
        loss_history: history,
    })
}

/// Target-membership probabilities clamped to `[1e-6, 1 - 1e-6]`.
pub fn predict_target_prob(model: &DiscriminatorModel, x: &Matrix) -> Result<Vec<f64>, DiscriminatorError> {
    if x.cols() != model.dim() {
        return Err(DiscriminatorError::DimensionMismatch {
            expected: model.dim(),
            got: x.cols(),
        });
    }
    Ok(x
        .iter_rows()
        .map(|row| sigmoid(model.logit(row)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        .collect())
}

/// Importance weights `(n_source / n_target) * p / (1 - p)`.
pub fn density_ratio_weights(probs: &[f64], n_source: usize, n_target: usize) -> Vec<f64> {
    let ratio = n_source as f64 / n_target as f64;
    probs
        .iter()
        .map(|&p| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            ratio * p / (1.0 - p)
        })
        .collect()
}
