//! Feature extraction for route construction.
//!
//! Four blocks feed the candidate scorer: static node and edge descriptors,
//! dynamic per-candidate descriptors relative to the current node and clock,
//! one-step look-ahead (OSLA) and multi-step look-ahead (MUSLA) summaries.
//! Unconstrained window ends are encoded as 0 everywhere.

mod lookahead;
mod samples;

pub use lookahead::{musla_features, osla_features, Lookahead, LookaheadFeatures, LookaheadRanker, MuslaBlock};
pub use samples::{build_training_samples, CandidateSet, TrainingSample};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::datagen::expected_tour_constant;
use crate::error::{Error, Result};
use crate::problem::{Instance, PartialTour};
use crate::scalar::Scalar;

pub const STATIC_NODE_DIM: usize = 7;
pub const EDGE_DIM: usize = 5;
pub const DYNAMIC_DIM: usize = 12;
pub const LOOKAHEAD_DIM: usize = 6;
/// Mean static node row, current node static row, step fraction, scaled clock.
pub const CONTEXT_DIM: usize = 2 * STATIC_NODE_DIM + 2;

/// Which feature blocks a policy sees, from least to most informed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLevel {
    Static,
    Dynamic,
    Osla,
    Musla,
}

impl FeatureLevel {
    pub const ALL: [FeatureLevel; 4] = [Self::Static, Self::Dynamic, Self::Osla, Self::Musla];

    /// Width of one candidate row at this level.
    pub fn row_dim(self) -> usize {
        let base = STATIC_NODE_DIM + EDGE_DIM;
        match self {
            Self::Static => base,
            Self::Dynamic => base + DYNAMIC_DIM,
            Self::Osla => base + DYNAMIC_DIM + LOOKAHEAD_DIM,
            Self::Musla => base + DYNAMIC_DIM + 2 * LOOKAHEAD_DIM,
        }
    }

    /// Scorer input width: candidate row plus context.
    pub fn input_dim(self) -> usize {
        self.row_dim() + CONTEXT_DIM
    }
}

impl fmt::Display for FeatureLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Static => "static",
            Self::Dynamic => "dynamic",
            Self::Osla => "osla",
            Self::Musla => "musla",
        })
    }
}

impl FromStr for FeatureLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "dynamic" => Ok(Self::Dynamic),
            "osla" => Ok(Self::Osla),
            "musla" => Ok(Self::Musla),
            other => Err(Error::InvalidParameter(format!("unknown feature level `{other}`"))),
        }
    }
}

/// Per node: coordinates, window, offset from the depot, distance to the depot.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticNodeFeatures<T> {
    pub rows: Vec<[T; STATIC_NODE_DIM]>,
}

pub fn static_node_features<T: Scalar>(inst: &Instance<T>) -> StaticNodeFeatures<T> {
    let depot = inst.point(0);
    let rows = (0..inst.node_count())
        .map(|i| {
            let a = inst.point(i);
            let w = inst.window(i);
            [
                a.x,
                a.y,
                w.start,
                w.end_feature(),
                a.x - depot.x,
                a.y - depot.y,
                inst.dist(i, 0),
            ]
        })
        .collect();
    StaticNodeFeatures { rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeature<T> {
    pub to: usize,
    /// `L_ij, s_j - s_i, s_j - e_i, e_j - s_i, e_j - e_i`.
    pub values: [T; EDGE_DIM],
}

/// Nearest-neighbour edges of every node, sorted by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticEdgeFeatures<T> {
    pub neighbors: Vec<Vec<EdgeFeature<T>>>,
}

/// Neighbours kept per node: the nearest 20% of all nodes, at least one.
pub fn neighbor_count(node_count: usize) -> usize {
    let k = (node_count as f64 * 0.2 - 1e-9).ceil() as usize;
    k.max(1).min(node_count.saturating_sub(1))
}

pub fn static_edge_features<T: Scalar>(inst: &Instance<T>) -> StaticEdgeFeatures<T> {
    let m = inst.node_count();
    let k = neighbor_count(m);
    let neighbors = (0..m)
        .map(|i| {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| inst.dist(i, a).partial_cmp(&inst.dist(i, b)).unwrap().then(a.cmp(&b)));
            let (si, ei) = (inst.window(i).start, inst.window(i).end_feature());
            others
                .into_iter()
                .take(k)
                .map(|j| {
                    let (sj, ej) = (inst.window(j).start, inst.window(j).end_feature());
                    EdgeFeature {
                        to: j,
                        values: [inst.dist(i, j), sj - si, sj - ei, ej - si, ej - ei],
                    }
                })
                .collect()
        })
        .collect();
    StaticEdgeFeatures { neighbors }
}

/// Dynamic descriptor of candidate `x` against the state's current node and clock:
/// position (2), offset from current node (2), distance (1), visit cost under the
/// waiting rule (1), window relative to the clock (2), window differences (4).
pub fn dynamic_row<T: Scalar>(inst: &Instance<T>, state: &PartialTour<T>, x: usize) -> [T; DYNAMIC_DIM] {
    let c = state.current();
    let t = state.time;
    let (a, ac) = (inst.point(x), inst.point(c));
    let (w, wc) = (inst.window(x), inst.window(c));
    let l = inst.dist(x, c);
    let (sx, ex, sc, ec) = (w.start, w.end_feature(), wc.start, wc.end_feature());
    [
        a.x,
        a.y,
        a.x - ac.x,
        a.y - ac.y,
        l,
        (l + t).max(sx) - t,
        sx - t,
        ex - t,
        sx - sc,
        ex - sc,
        sx - ec,
        ex - ec,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFeatures<T> {
    pub candidates: Vec<usize>,
    pub rows: Vec<[T; DYNAMIC_DIM]>,
}

/// Dynamic rows for every unvisited node, in ascending node order.
/// `time` is the clock the features should see (true or perceived).
pub fn dynamic_features<T: Scalar>(inst: &Instance<T>, prefix: &[usize], time: T) -> Result<DynamicFeatures<T>> {
    let state = PartialTour::from_prefix(inst, prefix)?.with_time(time);
    let candidates: Vec<usize> = state.unvisited().collect();
    let rows = candidates.iter().map(|&x| dynamic_row(inst, &state, x)).collect();
    Ok(DynamicFeatures { candidates, rows })
}

/// Instance-level quantities reused at every construction step.
#[derive(Debug, Clone)]
pub struct InstanceContext<T> {
    pub nodes: StaticNodeFeatures<T>,
    pub edges: StaticEdgeFeatures<T>,
    pub edge_means: Vec<[T; EDGE_DIM]>,
    pub node_mean: [T; STATIC_NODE_DIM],
    /// `T_n`, the clock normaliser.
    pub time_scale: T,
}

impl<T: Scalar> InstanceContext<T> {
    pub fn new(inst: &Instance<T>) -> Self {
        let nodes = static_node_features(inst);
        let edges = static_edge_features(inst);
        let edge_means = edges
            .neighbors
            .iter()
            .map(|list| {
                let mut acc = [T::zero(); EDGE_DIM];
                for e in list {
                    for (a, v) in acc.iter_mut().zip(e.values) {
                        *a = *a + v;
                    }
                }
                let k = T::of_usize(list.len().max(1));
                acc.map(|a| a / k)
            })
            .collect();
        let mut node_mean = [T::zero(); STATIC_NODE_DIM];
        for row in &nodes.rows {
            for (a, v) in node_mean.iter_mut().zip(row) {
                *a = *a + *v;
            }
        }
        let m = T::of_usize(nodes.rows.len());
        let node_mean = node_mean.map(|a| a / m);
        Self {
            nodes,
            edges,
            edge_means,
            node_mean,
            time_scale: T::of(expected_tour_constant(inst.n())),
        }
    }

    /// Global context for the scorer at `state`.
    pub fn context(&self, inst: &Instance<T>, state: &PartialTour<T>) -> Vec<T> {
        let mut ctx = Vec::with_capacity(CONTEXT_DIM);
        ctx.extend_from_slice(&self.node_mean);
        ctx.extend_from_slice(&self.nodes.rows[state.current()]);
        ctx.push(T::of_usize(state.step()) / T::of_usize(inst.n().max(1)));
        ctx.push(state.time / self.time_scale);
        ctx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Point, TimeWindow};

    fn inst(points: &[(f64, f64)], windows: Vec<TimeWindow<f64>>) -> Instance<f64> {
        Instance::new(points.iter().map(|&(x, y)| Point::new(x, y)).collect(), windows).unwrap()
    }

    #[test]
    fn static_node_rows() {
        let i = inst(
            &[(0.0, 0.0), (0.0, 1.0)],
            vec![TimeWindow::open(0.0), TimeWindow::new(2.0, 5.0)],
        );
        let f = static_node_features(&i);
        assert_eq!(f.rows[0], [0.0; 7]);
        assert_eq!(f.rows[1], [0.0, 1.0, 2.0, 5.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn static_node_translation_invariance() {
        let pts = [(0.1, 0.2), (0.5, 0.9), (0.7, 0.3)];
        let w = vec![
            TimeWindow::open(0.0),
            TimeWindow::new(1.0, 2.0),
            TimeWindow::new(0.5, 3.0),
        ];
        let a = static_node_features(&inst(&pts, w.clone()));
        let moved: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x + 0.25, y - 0.125)).collect();
        let b = static_node_features(&inst(&moved, w));
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for c in 4..7 {
                assert!((ra[c] - rb[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn neighbor_counts() {
        assert_eq!(neighbor_count(21), 5);
        assert_eq!(neighbor_count(11), 3);
        assert_eq!(neighbor_count(5), 1);
        assert_eq!(neighbor_count(2), 1);
    }

    #[test]
    fn edge_features_sorted_and_square_symmetric() {
        let i = inst(
            &[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)],
            vec![
                TimeWindow::open(0.0),
                TimeWindow::new(1.0, 3.0),
                TimeWindow::new(2.0, 4.0),
                TimeWindow::open(0.0),
            ],
        );
        let e = static_edge_features(&i);
        let mut min_pair = f64::MAX;
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    min_pair = min_pair.min(i.dist(a, b));
                }
            }
        }
        for list in &e.neighbors {
            assert_eq!(list.len(), 1);
            assert_eq!(list[0].values[0], 1.0);
        }
        assert_eq!(e.neighbors[0][0].values[0], min_pair);
        // node 1 -> nearest is 0 (tie with 2, lower index wins)
        assert_eq!(e.neighbors[1][0].to, 0);
        let (s1, e1) = (1.0, 3.0);
        assert_eq!(e.neighbors[1][0].values, [1.0, 0.0 - s1, 0.0 - e1, 0.0 - s1, 0.0 - e1]);
    }

    #[test]
    fn dynamic_visit_cost() {
        let i = inst(
            &[(0.0, 0.0), (0.0, 1.0), (0.0, 0.5)],
            vec![
                TimeWindow::open(0.0),
                TimeWindow::new(2.0, 5.0),
                TimeWindow::new(0.1, 5.0),
            ],
        );
        let d = dynamic_features(&i, &[0], 0.0).unwrap();
        assert_eq!(d.candidates, vec![1, 2]);
        assert_eq!(d.rows[0][4], 1.0);
        assert_eq!(d.rows[0][5], 2.0);
        assert_eq!(d.rows[1][5], 0.5);
        for r in &d.rows {
            assert!(r[5] >= r[4]);
        }
        let later = dynamic_features(&i, &[0], 0.75).unwrap();
        for (a, b) in d.rows.iter().zip(&later.rows) {
            assert!((a[6] - 0.75 - b[6]).abs() < 1e-12);
            assert!((a[7] - 0.75 - b[7]).abs() < 1e-12);
        }
    }

    #[test]
    fn level_dims() {
        assert_eq!(FeatureLevel::Static.row_dim(), 12);
        assert_eq!(FeatureLevel::Dynamic.row_dim(), 24);
        assert_eq!(FeatureLevel::Osla.row_dim(), 30);
        assert_eq!(FeatureLevel::Musla.row_dim(), 36);
        for l in FeatureLevel::ALL {
            assert_eq!(l.to_string().parse::<FeatureLevel>().unwrap(), l);
        }
    }
}
