use crate::error::{Error, Result};
use crate::problem::{Instance, PartialTour};
use crate::scalar::Scalar;

use super::LOOKAHEAD_DIM;

/// Summary of the future after hypothetically visiting one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookaheadFeatures<T> {
    /// 1 if some remaining node is already unreachable before its deadline.
    pub late: T,
    pub max_overage: T,
    pub sum_overage: T,
    /// Distance to the remaining node with the smallest visit time.
    pub greedy_distance: T,
    /// Time spent reaching that node, waiting included.
    pub greedy_overhead: T,
    /// 1 when the block carries information.
    pub present: T,
}

impl<T: Scalar> LookaheadFeatures<T> {
    pub fn absent() -> Self {
        Self {
            late: T::zero(),
            max_overage: T::zero(),
            sum_overage: T::zero(),
            greedy_distance: T::zero(),
            greedy_overhead: T::zero(),
            present: T::zero(),
        }
    }

    pub fn to_array(&self) -> [T; LOOKAHEAD_DIM] {
        [
            self.late,
            self.max_overage,
            self.sum_overage,
            self.greedy_distance,
            self.greedy_overhead,
            self.present,
        ]
    }
}

/// One-step look-ahead for candidate `x` from `state`.
///
/// Visits `x` under the waiting rule (from the state's clock, which may be
/// perceived), then over the nodes still unvisited: counts those whose
/// deadline can no longer be met even going straight there, and finds the
/// node reachable soonest.
pub fn osla_features<T: Scalar>(inst: &Instance<T>, state: &PartialTour<T>, x: usize) -> Result<LookaheadFeatures<T>> {
    if x >= state.visited.len() || state.visited[x] {
        return Err(Error::VisitedCandidate(x));
    }
    let t_next = state.arrival_at(inst, x);
    let mut late = false;
    let mut max_over = T::zero();
    let mut sum_over = T::zero();
    let mut greedy: Option<(usize, T)> = None;
    for y in state.unvisited().filter(|&y| y != x) {
        let leg = inst.dist(x, y);
        let w = inst.window(y);
        if !w.end_unconstrained {
            let over = t_next + leg - w.end;
            if over > T::zero() {
                max_over = if late { max_over.max(over) } else { over };
                sum_over = sum_over + over;
                late = true;
            }
        }
        let visit = (leg + t_next).max(w.start);
        if greedy.is_none_or(|(_, best)| visit < best) {
            greedy = Some((y, visit));
        }
    }
    let (greedy_distance, greedy_overhead) = match greedy {
        Some((y, visit)) => (inst.dist(x, y), visit - t_next),
        None => (T::zero(), T::zero()),
    };
    Ok(LookaheadFeatures {
        late: if late { T::one() } else { T::zero() },
        max_overage: max_over,
        sum_overage: sum_over,
        greedy_distance,
        greedy_overhead,
        present: T::one(),
    })
}

/// A trained one-step look-ahead policy, used to rank candidates and to
/// extend hypothetical routes.
pub trait LookaheadRanker<T>: Sync {
    /// Scores for every unvisited node of `state`, in ascending node order.
    fn scores(&self, inst: &Instance<T>, state: &PartialTour<T>) -> Result<Vec<(usize, T)>>;
}

/// Ranker plus search width `k` and extension depth `m`.
#[derive(Clone, Copy)]
pub struct Lookahead<'a, T> {
    pub ranker: &'a dyn LookaheadRanker<T>,
    pub k: usize,
    pub m: usize,
}

/// Multi-step look-ahead rows aligned with the state's unvisited nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MuslaBlock<T> {
    pub candidates: Vec<usize>,
    pub rows: Vec<LookaheadFeatures<T>>,
    pub in_top_k: Vec<bool>,
}

fn argmax<T: Scalar>(scores: &[(usize, T)]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for &(v, s) in scores {
        // strict comparison keeps the lowest node on ties
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((v, s));
        }
    }
    best.map(|(v, _)| v)
}

/// Ranks candidates with the look-ahead policy; for each of the top `k`,
/// follows the policy's greedy choice for `m` further steps and records the
/// one-step look-ahead of the final choice. Other candidates get absent rows.
///
/// With `m = 0` the block is the candidate's own one-step look-ahead.
pub fn musla_features<T: Scalar>(
    inst: &Instance<T>,
    state: &PartialTour<T>,
    lookahead: &Lookahead<'_, T>,
) -> Result<MuslaBlock<T>> {
    if lookahead.k == 0 {
        return Err(Error::InvalidParameter("look-ahead width k must be at least 1".into()));
    }
    let scores = lookahead.ranker.scores(inst, state)?;
    let candidates: Vec<usize> = scores.iter().map(|&(v, _)| v).collect();
    let mut ranked: Vec<usize> = (0..scores.len()).collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .1
            .partial_cmp(&scores[a].1)
            .unwrap()
            .then(scores[a].0.cmp(&scores[b].0))
    });
    let mut in_top_k = vec![false; candidates.len()];
    for &i in ranked.iter().take(lookahead.k) {
        in_top_k[i] = true;
    }
    let enough = state.unvisited_count() > lookahead.m;
    let rows = candidates
        .iter()
        .zip(&in_top_k)
        .map(|(&x, &top)| {
            if !top || !enough {
                return Ok(LookaheadFeatures::absent());
            }
            extended_lookahead(inst, state, x, lookahead)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MuslaBlock {
        candidates,
        rows,
        in_top_k,
    })
}

fn extended_lookahead<T: Scalar>(
    inst: &Instance<T>,
    state: &PartialTour<T>,
    x: usize,
    lookahead: &Lookahead<'_, T>,
) -> Result<LookaheadFeatures<T>> {
    let mut cur = state.clone();
    let mut next = x;
    for _ in 0..lookahead.m {
        cur.push(inst, next)?;
        let scores = lookahead.ranker.scores(inst, &cur)?;
        next = argmax(&scores).ok_or_else(|| Error::Empty("no node left to extend the route".into()))?;
    }
    osla_features(inst, &cur, next)
}
