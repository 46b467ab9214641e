//! Benchmark instance generators.
//!
//! Coordinates are uniform in the unit square. Window scales are expressed in
//! multiples of `T_n`, the expected length of a random tour over `n + 1` nodes.
//! Every record draws from its own ChaCha stream keyed by `(seed, index)`, so
//! serial and parallel generation give identical corpora.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Instance, Point, TimeWindow, Tour};

/// Mean distance between two uniform points in the unit square.
pub const MEAN_UNIT_SQUARE_DISTANCE: f64 = 0.5214;

/// Expected length of a random tour over `n + 1` unit-square nodes.
pub fn expected_tour_constant(n: usize) -> f64 {
    MEAN_UNIT_SQUARE_DISTANCE * (n as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Override for `T_n`; `None` uses [`expected_tour_constant`].
    pub t_n: Option<f64>,
}

impl MediumParams {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            alpha: 0.5,
            beta: 0.75,
            t_n: None,
        }
    }

    pub fn scale(&self) -> f64 {
        self.t_n.unwrap_or_else(|| expected_tour_constant(self.n))
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= self.beta && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < alpha <= beta, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.scale() > 0.0 && self.scale().is_finite()) {
            return Err(Error::InvalidParameter("T_n must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardParams {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub group_fraction: f64,
    /// Fixed group count; `None` applies the size-dependent rule in [`group_count`].
    pub group_count: Option<usize>,
}

impl HardParams {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            alpha: 0.5,
            beta: 0.75,
            group_fraction: 0.3,
            group_count: None,
        }
    }

    /// Number of regrouped nodes, `floor(group_fraction * n)`.
    pub fn grouped_nodes(&self) -> usize {
        (self.group_fraction * self.n as f64).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        MediumParams {
            n: self.n,
            alpha: self.alpha,
            beta: self.beta,
            t_n: None,
        }
        .validate()?;
        if !(self.group_fraction > 0.0 && self.group_fraction < 1.0) {
            return Err(Error::InvalidParameter("group_fraction must lie in (0, 1)".into()));
        }
        if self.group_count == Some(0) {
            return Err(Error::InvalidParameter("group_count must be positive".into()));
        }
        Ok(())
    }
}

/// Group count for the grouped generators: 2 below 35 nodes, otherwise uniform on {2..7}.
pub fn group_count<R: Rng>(n: usize, rng: &mut R) -> usize {
    if n < 35 {
        2
    } else {
        rng.gen_range(2..=7)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeta {
    pub members: Vec<usize>,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupMeta>>,
    /// Configuration of the run that wrote the record, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

/// An instance with optional expert label and its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub instance: Instance<f64>,
    pub expert_tour: Option<Tour>,
    pub expert_length: Option<f64>,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    pub fn is_labeled(&self) -> bool {
        self.expert_tour.is_some()
    }
}

/// Independent stream for record `index` of a corpus seeded with `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn unit_points<R: Rng>(n: usize, rng: &mut R) -> Vec<Point<f64>> {
    (0..=n)
        .map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>()))
        .collect()
}

fn medium_window<R: Rng>(scale: f64, alpha: f64, beta: f64, rng: &mut R) -> TimeWindow<f64> {
    let start = rng.gen_range(0.0..=scale);
    let width = scale * rng.gen_range(alpha..=beta);
    TimeWindow::new(start, start + width)
}

fn generate(
    count: usize,
    seed: u64,
    name: &str,
    n: usize,
    params: serde_json::Value,
    make: impl Fn(&mut ChaCha8Rng) -> (Vec<Point<f64>>, Vec<TimeWindow<f64>>, Option<Vec<GroupMeta>>) + Sync,
) -> Result<Vec<DatasetRecord>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(seed, i as u64);
            let (points, windows, groups) = make(&mut rng);
            Ok(DatasetRecord {
                id: format!("{name}-n{n}-s{seed}-{i:06}"),
                instance: Instance::new(points, windows)?,
                expert_tour: None,
                expert_length: None,
                meta: RecordMeta {
                    generator: name.to_string(),
                    params: params.clone(),
                    seed,
                    groups,
                    run: None,
                },
            })
        })
        .collect()
}

fn medium_layout<R: Rng>(p: &MediumParams, rng: &mut R) -> (Vec<Point<f64>>, Vec<TimeWindow<f64>>) {
    let points = unit_points(p.n, rng);
    let scale = p.scale();
    let mut windows = Vec::with_capacity(p.n + 1);
    windows.push(TimeWindow::open(0.0));
    for _ in 0..p.n {
        windows.push(medium_window(scale, p.alpha, p.beta, rng));
    }
    (points, windows)
}

/// Medium: `t^s ~ U[0, T_n]`, `t^e = t^s + T_n * U[alpha, beta]`.
pub fn gen_medium(params: &MediumParams, count: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    params.validate()?;
    let p = *params;
    generate(count, seed, "medium", p.n, serde_json::to_value(p)?, move |rng| {
        let (pts, w) = medium_layout(&p, rng);
        (pts, w, None)
    })
}

/// Picks `floor(fraction * n)` customers and splits them round-robin into groups.
fn pick_groups<R: Rng>(p: &HardParams, rng: &mut R) -> Vec<Vec<usize>> {
    let picked = p.grouped_nodes();
    let wanted = p.group_count.unwrap_or_else(|| group_count(p.n, rng));
    let k = wanted.min(picked);
    if k == 0 {
        return Vec::new();
    }
    let mut nodes: Vec<usize> = (1..=p.n).collect();
    nodes.shuffle(rng);
    let mut groups = vec![Vec::new(); k];
    for (i, &v) in nodes[..picked].iter().enumerate() {
        groups[i % k].push(v);
    }
    groups
}

/// Hard training data: Medium windows, then a random subset regrouped with
/// group-sized Medium windows shifted by `t_p ~ U[0, T_n]`.
pub fn gen_hard_train(params: &HardParams, count: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    params.validate()?;
    let p = *params;
    let medium = MediumParams {
        n: p.n,
        alpha: p.alpha,
        beta: p.beta,
        t_n: None,
    };
    generate(count, seed, "hard-train", p.n, serde_json::to_value(p)?, move |rng| {
        let (pts, mut windows) = medium_layout(&medium, rng);
        let t_n = expected_tour_constant(p.n);
        let groups = pick_groups(&p, rng);
        let mut meta = Vec::with_capacity(groups.len());
        for members in groups {
            let t_group = expected_tour_constant(members.len());
            for &v in &members {
                windows[v] = medium_window(t_group, p.alpha, p.beta, rng);
            }
            let shift = rng.gen_range(0.0..=t_n);
            for &v in &members {
                windows[v].start += shift;
                windows[v].end += shift;
            }
            meta.push(GroupMeta { members, shift });
        }
        (pts, windows, Some(meta))
    })
}

/// Hard evaluation data: constant windows `[0, T_n]`, regrouped nodes get
/// `[0, T_{n_p}]` before the same random shift.
pub fn gen_hard_eval(params: &HardParams, count: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    params.validate()?;
    let p = *params;
    generate(count, seed, "hard-eval", p.n, serde_json::to_value(p)?, move |rng| {
        let pts = unit_points(p.n, rng);
        let t_n = expected_tour_constant(p.n);
        let mut windows = vec![TimeWindow::new(0.0, t_n); p.n + 1];
        windows[0] = TimeWindow::open(0.0);
        let groups = pick_groups(&p, rng);
        let mut meta = Vec::with_capacity(groups.len());
        for members in groups {
            let t_group = expected_tour_constant(members.len());
            let shift = rng.gen_range(0.0..=t_n);
            for &v in &members {
                windows[v] = TimeWindow::new(shift, shift + t_group);
            }
            meta.push(GroupMeta { members, shift });
        }
        (pts, windows, Some(meta))
    })
}

/// Weakly constrained variant: Medium sampling, then every start set to 0.
pub fn gen_weak_no_start(params: &MediumParams, count: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    params.validate()?;
    let p = *params;
    generate(
        count,
        seed,
        "weak-no-start",
        p.n,
        serde_json::to_value(p)?,
        move |rng| {
            let (pts, mut windows) = medium_layout(&p, rng);
            for w in windows.iter_mut().skip(1) {
                w.start = 0.0;
            }
            (pts, windows, None)
        },
    )
}

/// Plain TSP: no window on either side.
pub fn gen_unconstrained(n: usize, count: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let params = serde_json::json!({ "n": n });
    generate(count, seed, "unconstrained", n, params, move |rng| {
        let pts = unit_points(n, rng);
        (pts, vec![TimeWindow::open(0.0); n + 1], None)
    })
}

/// Grouped Medium: all customers split into groups whose windows follow
/// Medium sampling at the group's own scale; group `i` is shifted by the
/// latest window end of group `i - 1`, so groups never overlap.
pub fn gen_grouped_medium(
    params: &MediumParams,
    group_count_override: Option<usize>,
    count: usize,
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    params.validate()?;
    if group_count_override == Some(0) {
        return Err(Error::InvalidParameter("group_count must be positive".into()));
    }
    let p = *params;
    let value = serde_json::json!({ "medium": p, "group_count": group_count_override });
    generate(count, seed, "grouped-medium", p.n, value, move |rng| {
        let pts = unit_points(p.n, rng);
        let k = group_count_override.unwrap_or_else(|| group_count(p.n, rng)).min(p.n);
        let mut nodes: Vec<usize> = (1..=p.n).collect();
        nodes.shuffle(rng);
        let mut groups = vec![Vec::new(); k];
        for (i, &v) in nodes.iter().enumerate() {
            groups[i % k].push(v);
        }
        let mut windows = vec![TimeWindow::open(0.0); p.n + 1];
        let mut meta = Vec::with_capacity(k);
        let mut shift = 0.0;
        for members in groups {
            // A single group spanning every node keeps the plain Medium scale.
            let scale = if members.len() == p.n {
                p.scale()
            } else {
                expected_tour_constant(members.len())
            };
            let mut latest_end = shift;
            for &v in &members {
                let w = medium_window(scale, p.alpha, p.beta, rng);
                windows[v] = TimeWindow::new(w.start + shift, w.end + shift);
                latest_end = f64::max(latest_end, windows[v].end);
            }
            meta.push(GroupMeta { members, shift });
            shift = latest_end;
        }
        (pts, windows, Some(meta))
    })
}

/// Mixing proportions of Medium, Hard and supplementary records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixRatio {
    pub medium: usize,
    pub hard: usize,
    pub supplementary: usize,
}

impl Default for MixRatio {
    fn default() -> Self {
        Self {
            medium: 1,
            hard: 1,
            supplementary: 3,
        }
    }
}

/// Takes the largest prefix of each list that honours `ratio` and shuffles
/// the union deterministically.
pub fn mix_training_corpus(
    medium: Vec<DatasetRecord>,
    hard: Vec<DatasetRecord>,
    supplementary: Vec<DatasetRecord>,
    ratio: MixRatio,
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    let parts = [
        (medium, ratio.medium),
        (hard, ratio.hard),
        (supplementary, ratio.supplementary),
    ];
    let unit = parts
        .iter()
        .filter(|(_, r)| *r > 0)
        .map(|(v, r)| v.len() / r)
        .min()
        .ok_or_else(|| Error::InvalidParameter("mixing ratio is all zero".into()))?;
    if unit == 0 {
        return Err(Error::Empty("not enough records to honour the mixing ratio".into()));
    }
    let mut out = Vec::with_capacity(unit * (ratio.medium + ratio.hard + ratio.supplementary));
    for (records, r) in parts {
        out.extend(records.into_iter().take(unit * r));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::check_legality;
    use std::collections::HashSet;

    #[test]
    fn tour_constant_values() {
        assert!((expected_tour_constant(20) - 10.9494).abs() < 1e-12);
        assert!((expected_tour_constant(1) - 1.0428).abs() < 1e-12);
        assert!((expected_tour_constant(50) - 26.5914).abs() < 1e-12);
    }

    #[test]
    fn tour_constant_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let (ax, ay, bx, by): (f64, f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen(), rng.gen());
            acc += ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
        }
        let estimate = 2.0 * acc / samples as f64;
        assert!((estimate / expected_tour_constant(1) - 1.0).abs() < 0.01, "{estimate}");

        // random tours over 51 nodes
        let mut total = 0.0;
        let tours = 4000;
        for _ in 0..tours {
            let pts = unit_points(50, &mut rng);
            for i in 0..pts.len() {
                total += crate::problem::distance(pts[i], pts[(i + 1) % pts.len()]);
            }
        }
        let estimate = total / tours as f64;
        assert!((estimate / expected_tour_constant(50) - 1.0).abs() < 0.01, "{estimate}");
    }

    #[test]
    fn medium_support_and_width() {
        let p = MediumParams::new(20);
        let recs = gen_medium(&p, 500, 3).unwrap();
        let t_n = p.scale();
        for r in &recs {
            let inst = &r.instance;
            assert_eq!(inst.n(), 20);
            assert!(inst.window(0).end_unconstrained);
            assert_eq!(inst.window(0).start, 0.0);
            for w in &inst.windows()[1..] {
                assert!(w.start >= 0.0 && w.start <= t_n);
                let width = w.end - w.start;
                assert!(width >= 0.5 * t_n - 1e-12 && width <= 0.75 * t_n + 1e-12);
            }
            for pt in inst.points() {
                assert!((0.0..1.0).contains(&pt.x) && (0.0..1.0).contains(&pt.y));
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let p = MediumParams::new(10);
        assert_eq!(gen_medium(&p, 20, 7).unwrap(), gen_medium(&p, 20, 7).unwrap());
        assert_ne!(gen_medium(&p, 20, 7).unwrap(), gen_medium(&p, 20, 8).unwrap());
        let h = HardParams::new(20);
        assert_eq!(gen_hard_train(&h, 10, 1).unwrap(), gen_hard_train(&h, 10, 1).unwrap());
        assert_eq!(
            gen_grouped_medium(&p, None, 10, 1).unwrap(),
            gen_grouped_medium(&p, None, 10, 1).unwrap()
        );
        // prefix stability: a record depends only on (seed, index)
        let long = gen_medium(&p, 30, 7).unwrap();
        assert_eq!(&long[..20], &gen_medium(&p, 20, 7).unwrap()[..]);
    }

    #[test]
    fn hard_train_groups_n20() {
        let recs = gen_hard_train(&HardParams::new(20), 200, 11).unwrap();
        for r in recs {
            let groups = r.meta.groups.as_ref().unwrap();
            assert_eq!(groups.len(), 2);
            let members: Vec<usize> = groups.iter().flat_map(|g| g.members.clone()).collect();
            assert_eq!(members.len(), 6);
            assert_eq!(members.iter().collect::<HashSet<_>>().len(), 6);
            assert!(groups.iter().all(|g| g.members.len() == 3));
            for g in groups {
                let t_group = expected_tour_constant(g.members.len());
                for &v in &g.members {
                    let w = r.instance.window(v);
                    let width = w.end - w.start;
                    assert!(width >= 0.5 * t_group - 1e-9 && width <= 0.75 * t_group + 1e-9);
                    assert!(w.start >= g.shift);
                }
            }
        }
    }

    #[test]
    fn hard_train_n50_group_count_range() {
        let recs = gen_hard_train(&HardParams::new(50), 300, 5).unwrap();
        let mut seen = HashSet::new();
        for r in recs {
            let groups = r.meta.groups.unwrap();
            assert!((2..=7).contains(&groups.len()));
            assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), 15);
            seen.insert(groups.len());
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn small_n_clamps_group_count() {
        // floor(0.3 * 5) = 1 node cannot form two groups
        let recs = gen_hard_train(&HardParams::new(5), 10, 5).unwrap();
        for r in recs {
            let groups = r.meta.groups.unwrap();
            assert_eq!(groups.len(), 1);
            assert_eq!(groups[0].members.len(), 1);
        }
        let recs = gen_hard_train(&HardParams::new(2), 3, 5).unwrap();
        assert!(recs.iter().all(|r| r.meta.groups.as_ref().unwrap().is_empty()));
    }

    #[test]
    fn hard_eval_windows() {
        let recs = gen_hard_eval(&HardParams::new(20), 100, 2).unwrap();
        let t_n = expected_tour_constant(20);
        for r in recs {
            let groups = r.meta.groups.as_ref().unwrap();
            let grouped: HashSet<usize> = groups.iter().flat_map(|g| g.members.iter().copied()).collect();
            for v in 1..=20 {
                if !grouped.contains(&v) {
                    assert_eq!(*r.instance.window(v), TimeWindow::new(0.0, t_n));
                }
            }
            for g in groups {
                let t_group = expected_tour_constant(g.members.len());
                for &v in &g.members {
                    assert_eq!(*r.instance.window(v), TimeWindow::new(g.shift, g.shift + t_group));
                }
            }
        }
    }

    #[test]
    fn weak_variants() {
        let p = MediumParams::new(10);
        let a = gen_weak_no_start(&p, 50, 4).unwrap();
        let m = gen_medium(&p, 50, 4).unwrap();
        for (ra, rm) in a.iter().zip(&m) {
            for v in 1..=10 {
                assert_eq!(ra.instance.window(v).start, 0.0);
                assert_eq!(ra.instance.window(v).end, rm.instance.window(v).end);
            }
        }
        let b = gen_unconstrained(6, 20, 4).unwrap();
        for r in &b {
            assert!(r
                .instance
                .windows()
                .iter()
                .all(|w| w.end_unconstrained && w.start == 0.0));
            let mut order: Vec<usize> = (1..=6).rev().collect();
            order.insert(0, 0);
            assert!(check_legality(&r.instance, &Tour::new(order)).is_legal);
        }
    }

    #[test]
    fn grouped_medium_groups_do_not_overlap() {
        let p = MediumParams::new(12);
        for r in gen_grouped_medium(&p, Some(3), 1000, 9).unwrap() {
            let groups = r.meta.groups.as_ref().unwrap();
            assert_eq!(groups.len(), 3);
            for pair in groups.windows(2) {
                let prev_end = pair[0]
                    .members
                    .iter()
                    .map(|&v| r.instance.window(v).end)
                    .fold(f64::MIN, f64::max);
                assert_eq!(pair[1].shift, prev_end);
                for &v in &pair[1].members {
                    assert!(r.instance.window(v).start >= prev_end);
                }
            }
        }
    }

    #[test]
    fn grouped_medium_single_group_is_medium_shaped() {
        let p = MediumParams::new(10);
        let t_n = p.scale();
        for r in gen_grouped_medium(&p, Some(1), 200, 9).unwrap() {
            assert_eq!(r.meta.groups.as_ref().unwrap()[0].shift, 0.0);
            for w in &r.instance.windows()[1..] {
                assert!(w.start <= t_n);
                let width = w.end - w.start;
                assert!(width >= 0.5 * t_n - 1e-12 && width <= 0.75 * t_n + 1e-12);
            }
        }
    }

    #[test]
    fn mixing_ratios() {
        let p = MediumParams::new(5);
        let m = gen_medium(&p, 100, 1).unwrap();
        let h = gen_hard_train(&HardParams::new(5), 100, 2).unwrap();
        let s = gen_unconstrained(5, 300, 3).unwrap();
        let mixed = mix_training_corpus(m.clone(), h.clone(), s.clone(), MixRatio::default(), 0).unwrap();
        assert_eq!(mixed.len(), 500);
        let ids: HashSet<&str> = mixed.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids.len(), 500);
        let only = mix_training_corpus(
            m,
            h,
            s,
            MixRatio {
                medium: 1,
                hard: 0,
                supplementary: 0,
            },
            0,
        )
        .unwrap();
        assert_eq!(only.len(), 100);
        assert!(only.iter().all(|r| r.meta.generator == "medium"));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(gen_medium(
            &MediumParams {
                alpha: 0.8,
                ..MediumParams::new(5)
            },
            1,
            0
        )
        .is_err());
        assert!(gen_medium(&MediumParams::new(5), 0, 0).is_err());
        assert!(gen_hard_train(
            &HardParams {
                group_fraction: 1.0,
                ..HardParams::new(5)
            },
            1,
            0
        )
        .is_err());
    }
}
