//! Supervised training: cross-entropy of the expert's choice under a softmax
//! over candidates, optimised with AdamW.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureLevel, TrainingSample};
use crate::scalar::Scalar;

use super::scorer::{softmax, ScorerParams};

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the number of threads.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub level: FeatureLevel,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Number of top-ranked candidates that get multi-step look-ahead.
    pub k: usize,
    /// Extension depth of the multi-step look-ahead.
    pub m: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            level: FeatureLevel::Osla,
            hidden: vec![128, 128, 128],
            learning_rate: 1e-3,
            weight_decay: 0.01,
            batch_size: 256,
            epochs: 100,
            seed: 0,
            k: 5,
            m: 1,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidParameter(
                "hidden widths must be non-empty and positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter("batch size and epochs must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub params: ScorerParams<T>,
    /// Mean per-sample training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn sample_loss_and_grad<T: Scalar>(
    params: &ScorerParams<T>,
    layout: &super::scorer::Layout,
    sample: &TrainingSample<T>,
    weight: T,
    grad: &mut [T],
) -> Result<T> {
    let (logits, traces) = params.forward_traced(layout, &sample.set)?;
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    let loss = lse - logits[sample.target];
    let probs = softmax(&logits);
    for (j, (p, tr)) in probs.into_iter().zip(&traces).enumerate() {
        let indicator = if j == sample.target { T::one() } else { T::zero() };
        let d = (p - indicator) * weight;
        if d != T::zero() {
            params.backward(layout, tr, d, grad);
        }
    }
    Ok(loss)
}

/// Mean cross-entropy over `batch` and its gradient with respect to `theta`.
pub fn loss_and_grad<T: Scalar>(params: &ScorerParams<T>, batch: &[&TrainingSample<T>]) -> Result<(T, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let layout = params.layout();
    let weight = T::one() / T::of_usize(batch.len());
    let partials: Vec<(T, Vec<T>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = vec![T::zero(); params.num_params()];
            let mut loss = T::zero();
            for s in chunk {
                loss = loss + sample_loss_and_grad(params, &layout, s, weight, &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let mut total = T::zero();
    let mut grad = vec![T::zero(); params.num_params()];
    for (l, g) in partials {
        total = total + l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + b;
        }
    }
    Ok((total * weight, grad))
}

/// Mean cross-entropy without gradients.
pub fn mean_loss<T: Scalar>(params: &ScorerParams<T>, samples: &[TrainingSample<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Empty("samples".into()));
    }
    let losses: Vec<T> = samples
        .par_iter()
        .map(|s| {
            let logits = params.score(&s.set)?;
            let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
            Ok(lse - logits[s.target])
        })
        .collect::<Result<_>>()?;
    Ok(losses.into_iter().sum::<T>() / T::of_usize(samples.len()))
}

struct AdamW<T> {
    lr: T,
    weight_decay: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Vec<T>,
    v: Vec<T>,
    decays: Vec<bool>,
}

impl<T: Scalar> AdamW<T> {
    fn new(n: usize, lr: f64, weight_decay: f64, decays: Vec<bool>) -> Self {
        Self {
            lr: T::of(lr),
            weight_decay: T::of(weight_decay),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            decays,
        }
    }

    fn update(&mut self, theta: &mut [T], grad: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            if self.decays[i] {
                theta[i] = theta[i] - self.lr * self.weight_decay * theta[i];
            }
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] = theta[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Input rows (candidate row followed by context) of every candidate in `samples`.
fn input_rows<T: Scalar>(samples: &[TrainingSample<T>]) -> impl Iterator<Item = Vec<T>> + '_ {
    samples
        .iter()
        .flat_map(|s| (0..s.set.len()).map(move |i| s.set.row(i).iter().chain(&s.set.context).copied().collect()))
}

/// Trains a fresh scorer on `samples`. Deterministic given `config.seed`.
pub fn train<T: Scalar>(samples: &[TrainingSample<T>], config: &PolicyConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.level != config.level) {
        return Err(Error::InvalidParameter(format!(
            "sample {}:{} has level {}, config wants {}",
            s.instance_id, s.step, s.level, config.level
        )));
    }
    let input_dim = config.level.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ScorerParams::<T>::init(input_dim, &config.hidden, &mut rng)?;
    params.fit_normalization(input_rows(samples));
    let mut opt = AdamW::new(
        params.num_params(),
        config.learning_rate,
        config.weight_decay,
        params.layout().decays(),
    );
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingSample<T>> = idx.iter().map(|&i| &samples[i]).collect();
            let (loss, grad) = loss_and_grad(&params, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    detail: format!("loss={loss}, first sample {}:{}", batch[0].instance_id, batch[0].step),
                });
            }
            acc += loss.as_f64() * batch.len() as f64;
            opt.update(&mut params.theta, &grad);
        }
        let mean = acc / samples.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { params, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CandidateSet;
    use rand::Rng;

    fn toy_sample(rng: &mut ChaCha8Rng, candidates: usize, dim: usize, ctx: usize) -> TrainingSample<f64> {
        TrainingSample {
            instance_id: "toy".into(),
            step: 0,
            level: FeatureLevel::Static,
            set: CandidateSet {
                candidates: (1..=candidates).collect(),
                rows: (0..candidates * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                row_dim: dim,
                context: (0..ctx).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            },
            target: rng.gen_range(0..candidates),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = ScorerParams::<f64>::init(7, &[12, 10, 8], &mut rng).unwrap();
        // non-trivial LayerNorm gains and shifts
        for v in params.theta.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let samples: Vec<_> = (0..5).map(|_| toy_sample(&mut rng, 4, 4, 3)).collect();
        let batch: Vec<&TrainingSample<f64>> = samples.iter().collect();
        let (_, grad) = loss_and_grad(&params, &batch).unwrap();
        let h = 1e-5;
        for _ in 0..40 {
            let i = rng.gen_range(0..params.num_params());
            let orig = params.theta[i];
            params.theta[i] = orig + h;
            let up = loss_and_grad(&params, &batch).unwrap().0;
            params.theta[i] = orig - h;
            let down = loss_and_grad(&params, &batch).unwrap().0;
            params.theta[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-7);
            assert!(rel < 1e-4, "coordinate {i}: analytic {} numeric {numeric}", grad[i]);
        }
    }

    #[test]
    fn single_sample_is_memorised() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample = toy_sample(&mut rng, 5, 12, 16);
        let config = PolicyConfig {
            level: FeatureLevel::Static,
            hidden: vec![32, 32],
            epochs: 200,
            learning_rate: 1e-2,
            ..PolicyConfig::default()
        };
        let out = train(&[sample], &config).unwrap();
        assert!(out.epoch_losses[0] > 0.5);
        assert!(
            *out.epoch_losses.last().unwrap() < 1e-2,
            "{:?}",
            out.epoch_losses.last()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<_> = (0..40).map(|_| toy_sample(&mut rng, 3, 12, 16)).collect();
        let config = PolicyConfig {
            level: FeatureLevel::Static,
            hidden: vec![16],
            epochs: 3,
            batch_size: 8,
            ..Default::default()
        };
        let a = train(&samples, &config).unwrap();
        let b = train(&samples, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn mixed_levels_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = toy_sample(&mut rng, 3, 12, 16);
        let config = PolicyConfig {
            level: FeatureLevel::Dynamic,
            ..Default::default()
        };
        assert!(train(&[s], &config).is_err());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = toy_sample(&mut rng, 3, 12, 16);
        s.set.rows[0] = f64::NAN;
        let config = PolicyConfig {
            level: FeatureLevel::Static,
            hidden: vec![8],
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(train(&[s], &config), Err(Error::NonFiniteLoss { .. })));
    }
}
