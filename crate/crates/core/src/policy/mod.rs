//! Route-construction policies: rule-based baselines, the learned candidate
//! scorer with its supervised training, and inference with time offsets.

mod baselines;
mod decode;
mod scorer;
mod train;

pub use baselines::{greedy_es, greedy_lt, greedy_mt};
pub use decode::{
    construct_route, construct_route_with_offset, corpus_samples, fit_policy, musla_adapt_solve, AdaptOutcome, Decode,
    EpsilonGrid, Policy, DEFAULT_EPSILON_FACTORS,
};
pub use scorer::{argmax, softmax, ScorerParams};
pub use train::{loss_and_grad, mean_loss, train, PolicyConfig, TrainOutcome};
