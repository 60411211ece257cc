//! Logistic regression trained by mini-batch SGD with momentum.
//!
//! Vectors passed to [`loss`], [`gradient`] and [`sgd_step`] carry the bias
//! input (constant 1) as their last component; the matching weight is left
//! out of the regularizer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ClassifierError;

const P_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Features followed by the bias input 1.
    pub x: Vec<f64>,
    /// 1 for target, 0 for background.
    pub y: f64,
}

impl Sample {
    pub fn new(mut features: Vec<f64>, y: f64) -> Self {
        features.push(1.0);
        Self { x: features, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl ModelState {
    pub fn zeros(len: usize) -> Self {
        Self {
            w: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `v <- mu v - alpha grad; w <- w + v`.
    #[default]
    Momentum,
    /// `w <- mu w - alpha grad`, kept for comparison only.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub rng_seed: u64,
    pub update_rule: UpdateRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            mu: 0.9,
            lambda: 1e-4,
            batch_size: 32,
            max_iterations: 500,
            rng_seed: 0,
            update_rule: UpdateRule::Momentum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn predict(w: &[f64], x: &[f64]) -> f64 {
    sigmoid(dot(w, x))
}

/// Half squared norm of all weights except the trailing bias.
fn regularizer(w: &[f64]) -> f64 {
    0.5 * w[..w.len() - 1].iter().map(|v| v * v).sum::<f64>()
}

/// Mean binary cross-entropy plus `lambda * R(w)`.
pub fn loss(w: &[f64], batch: &[Sample], lambda: f64) -> f64 {
    assert!(!batch.is_empty(), "loss of empty batch");
    let ce: f64 = batch
        .iter()
        .map(|s| {
            let p = predict(w, &s.x).clamp(P_CLAMP, 1.0 - P_CLAMP);
            -(s.y * p.ln() + (1.0 - s.y) * (1.0 - p).ln())
        })
        .sum();
    ce / batch.len() as f64 + lambda * regularizer(w)
}

pub fn gradient(w: &[f64], batch: &[Sample], lambda: f64) -> Vec<f64> {
    assert!(!batch.is_empty(), "gradient of empty batch");
    let n = batch.len() as f64;
    let mut g = vec![0.0; w.len()];
    for s in batch {
        let r = predict(w, &s.x) - s.y;
        for (gi, xi) in g.iter_mut().zip(&s.x) {
            *gi += r * xi;
        }
    }
    let last = w.len() - 1;
    for (i, gi) in g.iter_mut().enumerate() {
        *gi /= n;
        if i < last {
            *gi += lambda * w[i];
        }
    }
    g
}

/// Applies one update from an already computed gradient. A non-finite
/// gradient is rejected and the state is returned untouched in the error path.
pub fn apply_update(
    state: &ModelState,
    grad: &[f64],
    cfg: &TrainConfig,
) -> Result<ModelState, ClassifierError> {
    if grad.len() != state.w.len() {
        return Err(ClassifierError::InvalidConfig(format!(
            "gradient length {} does not match weight length {}",
            grad.len(),
            state.w.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(ClassifierError::NonFiniteGradient { index: i });
    }
    let mut next = state.clone();
    match cfg.update_rule {
        UpdateRule::Momentum => {
            for (i, g) in grad.iter().enumerate() {
                next.v[i] = cfg.mu * state.v[i] - cfg.alpha * g;
                next.w[i] = state.w[i] + next.v[i];
            }
        }
        UpdateRule::Literal => {
            for (i, g) in grad.iter().enumerate() {
                next.w[i] = cfg.mu * state.w[i] - cfg.alpha * g;
            }
        }
    }
    next.t += 1;
    Ok(next)
}

pub fn sgd_step(
    state: &ModelState,
    batch: &[Sample],
    cfg: &TrainConfig,
) -> Result<ModelState, ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    if batch.len() > cfg.batch_size {
        return Err(ClassifierError::InvalidConfig(format!(
            "batch of {} exceeds batch_size {}",
            batch.len(),
            cfg.batch_size
        )));
    }
    apply_update(state, &gradient(&state.w, batch, cfg.lambda), cfg)
}

pub fn accuracy(w: &[f64], samples: &[Sample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let correct = samples
        .iter()
        .filter(|s| (predict(w, &s.x) > 0.5) == (s.y > 0.5))
        .count();
    Some(correct as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: ModelState,
    /// Entry 0 describes the initial state; entry `k` the state after step `k`.
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    /// First iteration at which training accuracy reached `target`.
    pub fn iterations_to_accuracy(&self, target: f64) -> Option<usize> {
        self.curve
            .iter()
            .find(|c| c.train_accuracy >= target)
            .map(|c| c.iteration)
    }
}

/// Seeded mini-batch training from zero weights. Batches walk a shuffled
/// permutation of the training set, reshuffled at each pass.
pub fn train_samples(
    train: &[Sample],
    validation: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ClassifierError> {
    cfg.validate()?;
    let has = |y: f64| train.iter().any(|s| (s.y > 0.5) == (y > 0.5));
    if !has(1.0) || !has(0.0) {
        return Err(ClassifierError::SingleClass);
    }
    let dim = train[0].x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut state = ModelState::zeros(dim);
    let point = |it: usize, w: &[f64]| CurvePoint {
        iteration: it,
        train_loss: loss(w, train, cfg.lambda),
        train_accuracy: accuracy(w, train).unwrap_or(0.0),
        validation_accuracy: accuracy(w, validation),
    };
    let mut curve = vec![point(0, &state.w)];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for it in 1..=cfg.max_iterations {
        batch.clear();
        while batch.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train[order[cursor]].clone());
            cursor += 1;
        }
        state = sgd_step(&state, &batch, cfg)?;
        curve.push(point(it, &state.w));
    }
    Ok(TrainOutcome { state, curve })
}

/// Z-score parameters fitted on training features; zero spread maps to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                std[i] += (r[i] - mean[i]).powi(2) / n;
            }
        }
        let std = std
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Two Gaussian blobs along a random unit direction, means at ±3σ, with
/// points inside the band |projection| < σ rejected, so a 2σ gap separates
/// the classes. Returns `(features, label)` pairs, classes interleaved.
pub fn separable_features(n_per_class: usize, dim: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let offset: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut out = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for (label, sign) in [(1.0, 1.0), (0.0, -1.0)] {
            loop {
                let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let proj: f64 = 3.0 * sign + dot(&noise, &dir);
                if proj * sign >= 1.0 {
                    let x = (0..dim)
                        .map(|i| offset[i] + noise[i] + 3.0 * sign * dir[i])
                        .collect();
                    out.push((x, label));
                    break;
                }
            }
        }
    }
    out
}
