//! Shared per-candidate feed-forward scorer.
//!
//! Every candidate row (concatenated with the step context) goes through the
//! same stack of `Linear -> LayerNorm -> ReLU` blocks and a final linear unit
//! that yields one logit. All trainable values live in one flat vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CandidateSet;
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BlockLayout {
    fan_in: usize,
    width: usize,
    weights: usize,
    bias: usize,
    gain: usize,
    shift: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    blocks: Vec<BlockLayout>,
    out_weights: usize,
    out_bias: usize,
    len: usize,
}

impl Layout {
    fn new(input_dim: usize, hidden: &[usize]) -> Self {
        let mut at = 0;
        let mut fan_in = input_dim;
        let mut blocks = Vec::with_capacity(hidden.len());
        for &width in hidden {
            let b = BlockLayout {
                fan_in,
                width,
                weights: at,
                bias: at + width * fan_in,
                gain: at + width * fan_in + width,
                shift: at + width * fan_in + 2 * width,
            };
            at = b.shift + width;
            fan_in = width;
            blocks.push(b);
        }
        Self {
            blocks,
            out_weights: at,
            out_bias: at + fan_in,
            len: at + fan_in + 1,
        }
    }

    /// True for entries subject to weight decay (linear weights only).
    pub(crate) fn decays(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len];
        for b in &self.blocks {
            mask[b.weights..b.bias].iter_mut().for_each(|m| *m = true);
        }
        mask[self.out_weights..self.out_bias].iter_mut().for_each(|m| *m = true);
        mask
    }
}

/// Weights of the candidate scorer plus the input standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ScorerParams<T: Scalar> {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Inputs are standardised as `(x - input_mean) * input_inv_std`.
    pub input_mean: Vec<T>,
    pub input_inv_std: Vec<T>,
    pub theta: Vec<T>,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct Trace<T> {
    /// Input of each block; the last entry is the input of the output unit.
    inputs: Vec<Vec<T>>,
    normalized: Vec<Vec<T>>,
    inv_std: Vec<T>,
    pre_relu: Vec<Vec<T>>,
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

impl<T: Scalar> ScorerParams<T> {
    /// Fan-in scaled uniform weights, zero biases, unit LayerNorm gains.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        let layout = Layout::new(input_dim, hidden);
        let mut theta = vec![T::zero(); layout.len];
        for b in &layout.blocks {
            let bound = 1.0 / (b.fan_in as f64).sqrt();
            for w in &mut theta[b.weights..b.bias] {
                *w = T::of(rng.gen_range(-bound..bound));
            }
            theta[b.gain..b.shift].iter_mut().for_each(|g| *g = T::one());
        }
        let last = hidden.last().copied().unwrap_or(input_dim);
        let bound = 1.0 / (last as f64).sqrt();
        for w in &mut theta[layout.out_weights..layout.out_bias] {
            *w = T::of(rng.gen_range(-bound..bound));
        }
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            input_mean: vec![T::zero(); input_dim],
            input_inv_std: vec![T::one(); input_dim],
            theta,
        })
    }

    /// All-zero weights: every candidate gets the same logit.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let layout = Layout::new(input_dim, hidden);
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            input_mean: vec![T::zero(); input_dim],
            input_inv_std: vec![T::one(); input_dim],
            theta: vec![T::zero(); layout.len],
        }
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.input_dim, &self.hidden)
    }

    /// Checks shapes and finiteness, e.g. after deserialisation.
    pub fn validate(&self) -> Result<()> {
        let layout = Layout::new(self.input_dim, &self.hidden);
        if self.theta.len() != layout.len {
            return Err(Error::DimensionMismatch {
                expected: layout.len,
                got: self.theta.len(),
            });
        }
        for v in [&self.input_mean, &self.input_inv_std] {
            if v.len() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim,
                    got: v.len(),
                });
            }
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(&self.theta) || !finite(&self.input_mean) || !finite(&self.input_inv_std) {
            return Err(Error::InvalidParameter("scorer parameters must be finite".into()));
        }
        Ok(())
    }

    /// Sets the input standardisation from raw input rows.
    pub fn fit_normalization(&mut self, rows: impl Iterator<Item = Vec<T>>) {
        let d = self.input_dim;
        let mut count = 0usize;
        let mut sum = vec![0.0f64; d];
        let mut sq = vec![0.0f64; d];
        for row in rows {
            count += 1;
            for (j, v) in row.iter().enumerate() {
                let v = v.as_f64();
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        if count == 0 {
            return;
        }
        let c = count as f64;
        for j in 0..d {
            let mean = sum[j] / c;
            let var = (sq[j] / c - mean * mean).max(0.0);
            let std = var.sqrt();
            self.input_mean[j] = T::of(mean);
            self.input_inv_std[j] = T::of(if std > 1e-8 { 1.0 / std } else { 1.0 });
        }
    }

    fn standardize(&self, row: &[T], context: &[T]) -> Vec<T> {
        row.iter()
            .chain(context)
            .zip(self.input_mean.iter().zip(&self.input_inv_std))
            .map(|(&x, (&m, &s))| (x - m) * s)
            .collect()
    }

    fn check_set(&self, set: &CandidateSet<T>) -> Result<()> {
        let got = set.row_dim + set.context.len();
        if got != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got,
            });
        }
        Ok(())
    }

    fn block_forward(&self, b: &BlockLayout, input: &[T], trace: Option<&mut Trace<T>>) -> Vec<T> {
        let th = &self.theta;
        let w = b.width;
        let mut z: Vec<T> = (0..w)
            .map(|o| dot(&th[b.weights + o * b.fan_in..b.weights + (o + 1) * b.fan_in], input) + th[b.bias + o])
            .collect();
        let wt = T::of_usize(w);
        let mean = z.iter().copied().sum::<T>() / wt;
        let var = z.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / wt;
        let inv = T::one() / (var + T::of(LN_EPS)).sqrt();
        for v in z.iter_mut() {
            *v = (*v - mean) * inv;
        }
        let y: Vec<T> = (0..w).map(|o| th[b.gain + o] * z[o] + th[b.shift + o]).collect();
        let out = y.iter().map(|&v| v.max(T::zero())).collect();
        if let Some(tr) = trace {
            tr.inputs.push(input.to_vec());
            tr.normalized.push(z);
            tr.inv_std.push(inv);
            tr.pre_relu.push(y);
        }
        out
    }

    fn forward_one(&self, layout: &Layout, x: Vec<T>, mut trace: Option<&mut Trace<T>>) -> T {
        let mut h = x;
        for b in &layout.blocks {
            h = self.block_forward(b, &h, trace.as_deref_mut());
        }
        let out = dot(&self.theta[layout.out_weights..layout.out_bias], &h) + self.theta[layout.out_bias];
        if let Some(tr) = trace {
            tr.inputs.push(h);
        }
        out
    }

    /// One logit per candidate.
    pub fn score(&self, set: &CandidateSet<T>) -> Result<Vec<T>> {
        self.check_set(set)?;
        let layout = self.layout();
        Ok((0..set.len())
            .map(|i| self.forward_one(&layout, self.standardize(set.row(i), &set.context), None))
            .collect())
    }

    pub(crate) fn forward_traced(&self, layout: &Layout, set: &CandidateSet<T>) -> Result<(Vec<T>, Vec<Trace<T>>)> {
        self.check_set(set)?;
        let mut logits = Vec::with_capacity(set.len());
        let mut traces = Vec::with_capacity(set.len());
        for i in 0..set.len() {
            let mut tr = Trace {
                inputs: Vec::new(),
                normalized: Vec::new(),
                inv_std: Vec::new(),
                pre_relu: Vec::new(),
            };
            logits.push(self.forward_one(layout, self.standardize(set.row(i), &set.context), Some(&mut tr)));
            traces.push(tr);
        }
        Ok((logits, traces))
    }

    /// Accumulates `d_logit * d(logit)/d(theta)` into `grad`.
    pub(crate) fn backward(&self, layout: &Layout, trace: &Trace<T>, d_logit: T, grad: &mut [T]) {
        let th = &self.theta;
        let last_in = trace.inputs.last().expect("traced forward");
        axpy(d_logit, last_in, &mut grad[layout.out_weights..layout.out_bias]);
        grad[layout.out_bias] = grad[layout.out_bias] + d_logit;
        let mut d_h: Vec<T> = th[layout.out_weights..layout.out_bias]
            .iter()
            .map(|&w| w * d_logit)
            .collect();
        for (li, b) in layout.blocks.iter().enumerate().rev() {
            let w = b.width;
            let zhat = &trace.normalized[li];
            let y = &trace.pre_relu[li];
            let input = &trace.inputs[li];
            let mut d_zhat = vec![T::zero(); w];
            for o in 0..w {
                let dy = if y[o] > T::zero() { d_h[o] } else { T::zero() };
                grad[b.gain + o] = grad[b.gain + o] + dy * zhat[o];
                grad[b.shift + o] = grad[b.shift + o] + dy;
                d_zhat[o] = dy * th[b.gain + o];
            }
            let wt = T::of_usize(w);
            let mean_d = d_zhat.iter().copied().sum::<T>() / wt;
            let mean_dz = d_zhat.iter().zip(zhat).map(|(&a, &b)| a * b).sum::<T>() / wt;
            let inv = trace.inv_std[li];
            let mut d_in = if li > 0 { vec![T::zero(); b.fan_in] } else { Vec::new() };
            for o in 0..w {
                let dz = inv * (d_zhat[o] - mean_d - zhat[o] * mean_dz);
                if dz == T::zero() {
                    continue;
                }
                let row = b.weights + o * b.fan_in;
                axpy(dz, input, &mut grad[row..row + b.fan_in]);
                grad[b.bias + o] = grad[b.bias + o] + dz;
                if li > 0 {
                    axpy(dz, &th[row..row + b.fan_in], &mut d_in);
                }
            }
            d_h = d_in;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total = exps.iter().copied().sum::<T>();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(rows: Vec<Vec<f64>>, context: Vec<f64>) -> CandidateSet<f64> {
        let row_dim = rows[0].len();
        CandidateSet {
            candidates: (1..=rows.len()).collect(),
            rows: rows.into_iter().flatten().collect(),
            row_dim,
            context,
        }
    }

    fn params(input: usize) -> ScorerParams<f64> {
        ScorerParams::init(input, &[16, 16, 16], &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn single_candidate_has_probability_one() {
        let p = params(5);
        let s = set(vec![vec![0.3, -1.0, 2.0]], vec![0.5, 0.1]);
        let logits = p.score(&s).unwrap();
        assert_eq!(softmax(&logits), vec![1.0]);
    }

    #[test]
    fn duplicated_rows_get_equal_logits_and_order_does_not_matter() {
        let p = params(5);
        let a = vec![0.3, -1.0, 2.0];
        let b = vec![1.3, 0.4, -0.2];
        let l1 = p
            .score(&set(vec![a.clone(), b.clone(), a.clone()], vec![0.5, 0.1]))
            .unwrap();
        assert_eq!(l1[0], l1[2]);
        let l2 = p.score(&set(vec![b, a], vec![0.5, 0.1])).unwrap();
        assert_eq!(l1[0], l2[1]);
        assert_eq!(l1[1], l2[0]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let l = vec![0.1, 2.0, -0.7];
        let shifted: Vec<f64> = l.iter().map(|v| v + 13.0).collect();
        for (a, b) in softmax(&l).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = params(6);
        let s = set(vec![vec![0.0; 3]], vec![0.0; 2]);
        assert!(matches!(
            p.score(&s),
            Err(Error::DimensionMismatch { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn zero_scorer_is_flat() {
        let p = ScorerParams::<f64>::zeros(4, &[8, 8]);
        let logits = p
            .score(&set(vec![vec![1.0, 2.0], vec![-3.0, 0.5]], vec![0.0, 1.0]))
            .unwrap();
        assert_eq!(logits, vec![0.0, 0.0]);
        assert_eq!(argmax(&logits), Some(0));
    }

    #[test]
    fn serde_round_trip_restores_layout() {
        let p = params(5);
        let json = serde_json::to_string(&p).unwrap();
        let mut q: ScorerParams<f64> = serde_json::from_str(&json).unwrap();
        q.validate().unwrap();
        let s = set(vec![vec![0.3, -1.0, 2.0], vec![0.0, 0.0, 1.0]], vec![0.5, 0.1]);
        assert_eq!(p.score(&s).unwrap(), q.score(&s).unwrap());
        q.theta.pop();
        assert!(q.validate().is_err());
    }
}
