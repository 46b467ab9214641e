//! Route construction with a trained scorer, and the time-offset sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{expected_tour_constant, DatasetRecord};
use crate::error::{Error, Result};
use crate::features::{
    build_training_samples, CandidateSet, FeatureLevel, InstanceContext, Lookahead, LookaheadRanker, TrainingSample,
};
use crate::problem::{propagate, Instance, PartialTour, Schedule, Tour};
use crate::scalar::Scalar;

use super::scorer::{argmax, softmax, ScorerParams};
use super::train::{train, PolicyConfig};

/// A trained scorer with the configuration it was trained for. Multi-step
/// look-ahead policies carry the one-step policy they rank candidates with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Policy<T: Scalar> {
    pub config: PolicyConfig,
    pub scorer: ScorerParams<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookahead: Option<Box<Policy<T>>>,
}

impl<T: Scalar> Policy<T> {
    pub fn new(config: PolicyConfig, scorer: ScorerParams<T>, lookahead: Option<Policy<T>>) -> Result<Self> {
        let p = Self {
            config,
            scorer,
            lookahead: lookahead.map(Box::new),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn level(&self) -> FeatureLevel {
        self.config.level
    }

    pub fn validate(&self) -> Result<()> {
        self.scorer.validate()?;
        let expected = self.config.level.input_dim();
        if self.scorer.input_dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.scorer.input_dim,
            });
        }
        match (self.config.level, &self.lookahead) {
            (FeatureLevel::Musla, None) => Err(Error::InvalidParameter(
                "musla policy needs a one-step look-ahead policy".into(),
            )),
            (FeatureLevel::Musla, Some(la)) if la.level() != FeatureLevel::Osla => Err(Error::InvalidParameter(
                format!("look-ahead policy must be osla level, got {}", la.level()),
            )),
            (_, Some(la)) => la.validate(),
            _ => Ok(()),
        }
    }

    fn lookahead(&self) -> Option<Lookahead<'_, T>> {
        self.lookahead.as_deref().map(|la| Lookahead {
            ranker: la as &dyn LookaheadRanker<T>,
            k: self.config.k,
            m: self.config.m,
        })
    }

    /// Candidate set and logits at `state` (whose clock may be perceived).
    pub fn logits(
        &self,
        ctx: &InstanceContext<T>,
        inst: &Instance<T>,
        state: &PartialTour<T>,
    ) -> Result<(CandidateSet<T>, Vec<T>)> {
        let la = self.lookahead();
        let set = CandidateSet::build(ctx, inst, state, self.config.level, la.as_ref())?;
        let logits = self.scorer.score(&set)?;
        Ok((set, logits))
    }
}

impl<T: Scalar> LookaheadRanker<T> for Policy<T> {
    fn scores(&self, inst: &Instance<T>, state: &PartialTour<T>) -> Result<Vec<(usize, T)>> {
        let ctx = InstanceContext::new(inst);
        let (set, logits) = self.logits(&ctx, inst, state)?;
        Ok(set.candidates.into_iter().zip(logits).collect())
    }
}

/// Expert-prefix samples for every record, in corpus order. Multi-step
/// look-ahead levels rank candidates with `lookahead` using `config.k` and `config.m`.
pub fn corpus_samples<T: Scalar>(
    records: &[DatasetRecord],
    config: &PolicyConfig,
    lookahead: Option<&Policy<T>>,
) -> Result<Vec<TrainingSample<T>>> {
    let la = lookahead.map(|p| Lookahead {
        ranker: p as &dyn LookaheadRanker<T>,
        k: config.k,
        m: config.m,
    });
    let per_record = records
        .par_iter()
        .map(|r| build_training_samples(r, config.level, la.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

/// Trains a policy at `config.level` on labeled records.
pub fn fit_policy<T: Scalar>(
    records: &[DatasetRecord],
    config: &PolicyConfig,
    lookahead: Option<Policy<T>>,
) -> Result<(Policy<T>, Vec<f64>)> {
    if config.level == FeatureLevel::Musla && lookahead.is_none() {
        return Err(Error::InvalidParameter(
            "musla training needs a trained osla policy".into(),
        ));
    }
    let samples = corpus_samples(records, config, lookahead.as_ref())?;
    let out = train(&samples, config)?;
    let lookahead = lookahead.filter(|_| config.level == FeatureLevel::Musla);
    Ok((Policy::new(config.clone(), out.params, lookahead)?, out.epoch_losses))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decode {
    #[default]
    Greedy,
    /// Sample from the softmax; for experiments only.
    Sample { seed: u64 },
}

/// Builds a full tour with `policy`, features seeing the true clock plus
/// `offset`. Legality of the result is judged on true times.
pub fn construct_route_with_offset<T: Scalar>(
    inst: &Instance<T>,
    policy: &Policy<T>,
    offset: T,
    decode: Decode,
) -> Result<(Tour, Schedule<T>)> {
    let ctx = InstanceContext::new(inst);
    let mut state = PartialTour::start(inst);
    let mut rng = match decode {
        Decode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Decode::Greedy => None,
    };
    while !state.is_complete() {
        let perceived = state.with_time(state.time + offset);
        let (set, logits) = policy.logits(&ctx, inst, &perceived)?;
        let pick = match rng.as_mut() {
            None => argmax(&logits).expect("candidates remain"),
            Some(rng) => {
                let probs = softmax(&logits);
                let u = T::of(rng.gen::<f64>());
                let mut acc = T::zero();
                probs
                    .iter()
                    .position(|&p| {
                        acc = acc + p;
                        u < acc
                    })
                    .unwrap_or(probs.len() - 1)
            }
        };
        state.push(inst, set.candidates[pick])?;
    }
    let schedule = propagate(inst, &state.prefix)?;
    Ok((Tour::new(state.prefix), schedule))
}

pub fn construct_route<T: Scalar>(
    inst: &Instance<T>,
    policy: &Policy<T>,
    decode: Decode,
) -> Result<(Tour, Schedule<T>)> {
    construct_route_with_offset(inst, policy, T::zero(), decode)
}

/// Non-negative perceived-time offsets, ascending, always including 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpsilonGrid<T: Scalar> {
    offsets: Vec<T>,
}

pub const DEFAULT_EPSILON_FACTORS: [f64; 6] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2];

impl<T: Scalar> EpsilonGrid<T> {
    pub fn new(mut offsets: Vec<T>) -> Result<Self> {
        if offsets.iter().any(|e| !e.is_finite() || *e < T::zero()) {
            return Err(Error::InvalidParameter(
                "offsets must be finite and non-negative".into(),
            ));
        }
        if !offsets.contains(&T::zero()) {
            offsets.push(T::zero());
        }
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        offsets.dedup();
        Ok(Self { offsets })
    }

    /// Offsets as fractions of `T_n` for instances with `n` customers.
    pub fn scaled(n: usize, factors: &[f64]) -> Result<Self> {
        let t_n = expected_tour_constant(n);
        Self::new(factors.iter().map(|f| T::of(f * t_n)).collect())
    }

    pub fn default_for(n: usize) -> Self {
        Self::scaled(n, &DEFAULT_EPSILON_FACTORS).expect("default factors are valid")
    }

    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome<T> {
    pub tour: Tour,
    pub schedule: Schedule<T>,
    pub epsilon: T,
}

impl<T: Scalar> AdaptOutcome<T> {
    pub fn is_legal(&self) -> bool {
        self.schedule.is_on_time()
    }
}

/// Decodes once per offset and keeps the shortest legal tour (smaller offset
/// on ties). Falls back to the zero-offset tour when none is legal.
pub fn musla_adapt_solve<T: Scalar>(
    inst: &Instance<T>,
    policy: &Policy<T>,
    grid: &EpsilonGrid<T>,
) -> Result<AdaptOutcome<T>> {
    let mut fallback = None;
    let mut best: Option<AdaptOutcome<T>> = None;
    for &eps in grid.offsets() {
        let (tour, schedule) = construct_route_with_offset(inst, policy, eps, Decode::Greedy)?;
        let out = AdaptOutcome {
            tour,
            schedule,
            epsilon: eps,
        };
        if out.is_legal()
            && best
                .as_ref()
                .is_none_or(|b| out.schedule.total_length < b.schedule.total_length)
        {
            best = Some(out.clone());
        }
        if eps == T::zero() {
            fallback = Some(out);
        }
    }
    Ok(best.or(fallback).expect("grid contains zero"))
}
