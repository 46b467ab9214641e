//! Solver evaluation: illegal rate, optimality gap, timeout, timing, the
//! weighted score and its sweep, and the dataset-quality probe.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{expected_tour_constant, record_rng, DatasetRecord, RecordMeta};
use crate::error::{Error, Result};
use crate::expert::{dp_solve, label_dataset, ExpertSolver};
use crate::policy::{construct_route, greedy_es, greedy_lt, greedy_mt, musla_adapt_solve, Decode, EpsilonGrid, Policy};
use crate::problem::{check_legality, propagate, tour_length, Instance, Point, TimeWindow, Tour};

/// L / L* − 1.
pub fn gap(length: f64, expert_length: f64) -> Result<f64> {
    if expert_length.is_nan() || expert_length <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "expert length must be positive, got {expert_length}"
        )));
    }
    Ok(length / expert_length - 1.0)
}

/// γ·Illegal + (1−γ)·Gap, both in percent.
pub fn weighted_score(illegal_pct: f64, gap_pct: f64, gamma: f64) -> f64 {
    gamma * illegal_pct + (1.0 - gamma) * gap_pct
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub tour: Tour,
    /// Chosen time offset, for solvers that sweep one.
    pub epsilon: Option<f64>,
}

impl From<Tour> for Solution {
    fn from(tour: Tour) -> Self {
        Self { tour, epsilon: None }
    }
}

pub trait Solver: Sync {
    fn name(&self) -> &str;
    fn solve(&self, record: &DatasetRecord) -> Result<Solution>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    GreedyMt,
    GreedyLt,
    GreedyEs,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::GreedyMt, Baseline::GreedyLt, Baseline::GreedyEs];
}

impl Solver for Baseline {
    fn name(&self) -> &str {
        match self {
            Baseline::GreedyMt => "greedy-mt",
            Baseline::GreedyLt => "greedy-lt",
            Baseline::GreedyEs => "greedy-es",
        }
    }

    fn solve(&self, record: &DatasetRecord) -> Result<Solution> {
        let inst = &record.instance;
        Ok(match self {
            Baseline::GreedyMt => greedy_mt(inst),
            Baseline::GreedyLt => greedy_lt(inst),
            Baseline::GreedyEs => greedy_es(inst),
        }
        .into())
    }
}

/// Replays the record's label, solving exactly when there is none.
/// Infeasible unlabeled instances fall back to index order (illegal).
#[derive(Debug, Clone, Copy, Default)]
pub struct Expert;

impl Solver for Expert {
    fn name(&self) -> &str {
        "expert"
    }

    fn solve(&self, record: &DatasetRecord) -> Result<Solution> {
        if let Some(t) = &record.expert_tour {
            return Ok(t.clone().into());
        }
        let tour = match dp_solve(&record.instance)? {
            Some((t, _)) => t,
            None => Tour::new((0..record.instance.node_count()).collect()),
        };
        Ok(tour.into())
    }
}

pub struct PolicySolver<'a> {
    pub name: String,
    pub policy: &'a Policy<f64>,
    pub decode: Decode,
}

impl Solver for PolicySolver<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, record: &DatasetRecord) -> Result<Solution> {
        Ok(construct_route(&record.instance, self.policy, self.decode)?.0.into())
    }
}

/// Time-offset sweep; offsets are `factors · T_n` per instance.
pub struct AdaptSolver<'a> {
    pub name: String,
    pub policy: &'a Policy<f64>,
    pub factors: Vec<f64>,
}

impl Solver for AdaptSolver<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, record: &DatasetRecord) -> Result<Solution> {
        let grid = EpsilonGrid::scaled(record.instance.n(), &self.factors)?;
        let out = musla_adapt_solve(&record.instance, self.policy, &grid)?;
        Ok(Solution {
            tour: out.tour,
            epsilon: Some(out.epsilon),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub legal: bool,
    /// Absent for malformed tours.
    pub length: Option<f64>,
    pub total_timeout: f64,
    /// Fraction; only for legal rows of labeled records.
    pub gap: Option<f64>,
    pub seconds: f64,
    /// Chosen offset as a multiple of T_n.
    pub epsilon_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub solver: String,
    pub instances: usize,
    pub illegal_pct: f64,
    /// Mean gap in percent over legal, labeled rows; absent if there are none.
    pub gap_pct: Option<f64>,
    pub mean_timeout: f64,
    /// Wall-clock seconds of the whole run scaled to 1000 instances.
    pub seconds_per_1000: f64,
    pub workers: usize,
}

impl Aggregates {
    /// Weighted score; a solver with no legal rows has no gap and scores NaN
    /// except at γ = 1.
    pub fn score(&self, gamma: f64) -> f64 {
        match self.gap_pct {
            Some(g) => weighted_score(self.illegal_pct, g, gamma),
            None if gamma == 1.0 => self.illegal_pct,
            None => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub aggregates: Aggregates,
    pub rows: Vec<ReportRow>,
}

fn score_row(record: &DatasetRecord, sol: &Solution, seconds: f64) -> ReportRow {
    let inst = &record.instance;
    let report = check_legality(inst, &sol.tour);
    let length = sol
        .tour
        .validate(inst.node_count())
        .is_ok()
        .then(|| tour_length(inst, &sol.tour));
    let gap = match (report.is_legal, length, record.expert_length) {
        (true, Some(l), Some(e)) if e > 0.0 => Some(l / e - 1.0),
        _ => None,
    };
    ReportRow {
        id: record.id.clone(),
        legal: report.is_legal,
        length,
        total_timeout: report.total_timeout,
        gap,
        seconds,
        epsilon_factor: sol.epsilon.map(|e| e / expected_tour_constant(inst.n())),
    }
}

pub fn aggregate(solver: &str, rows: &[ReportRow], wall_seconds: f64, workers: usize) -> Result<Aggregates> {
    if rows.is_empty() {
        return Err(Error::Empty("evaluation corpus".into()));
    }
    let count = rows.len() as f64;
    let illegal = rows.iter().filter(|r| !r.legal).count() as f64;
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let gap_pct = (!gaps.is_empty()).then(|| 100.0 * gaps.iter().sum::<f64>() / gaps.len() as f64);
    Ok(Aggregates {
        solver: solver.to_string(),
        instances: rows.len(),
        illegal_pct: 100.0 * illegal / count,
        gap_pct,
        mean_timeout: rows.iter().map(|r| r.total_timeout).sum::<f64>() / count,
        seconds_per_1000: wall_seconds * 1000.0 / count,
        workers,
    })
}

/// Runs `solver` on every record in parallel. Rows keep corpus order.
pub fn evaluate(records: &[DatasetRecord], solver: &dyn Solver) -> Result<SolverReport> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation corpus".into()));
    }
    let start = Instant::now();
    let rows = records
        .par_iter()
        .map(|rec| {
            let t = Instant::now();
            let sol = solver.solve(rec)?;
            Ok(score_row(rec, &sol, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let wall = start.elapsed().as_secs_f64();
    let aggregates = aggregate(solver.name(), &rows, wall, rayon::current_num_threads())?;
    Ok(SolverReport { aggregates, rows })
}

/// Count of rows per chosen offset factor, ascending.
pub fn epsilon_histogram(rows: &[ReportRow]) -> Vec<(f64, usize)> {
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for f in rows.iter().filter_map(|r| r.epsilon_factor) {
        let e = bins.entry((f * 1e9).round() as i64).or_insert((f, 0));
        e.1 += 1;
    }
    bins.into_values().map(|(f, c)| ((f * 1e9).round() / 1e9, c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub solver: String,
    pub gamma: f64,
    pub score: f64,
}

/// γ range where γ·Illegal / ((1−γ)·Gap) lies in [1/10, 10].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub solver: String,
    pub gamma_low: f64,
    pub gamma_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub bands: Vec<Band>,
}

impl SweepTable {
    pub fn curve(&self, solver: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.solver == solver)
            .map(|r| (r.gamma, r.score))
            .collect()
    }
}

/// Band boundaries, absent when either metric is zero or missing.
pub fn reasonable_band(agg: &Aggregates) -> Option<(f64, f64)> {
    let g = agg.gap_pct?;
    let i = agg.illegal_pct;
    if !(g > 0.0 && i > 0.0) {
        return None;
    }
    let at = |c: f64| c * g / (i + c * g);
    Some((at(0.1), at(10.0)))
}

pub fn score_sweep(reports: &[Aggregates], gammas: &[f64]) -> Result<SweepTable> {
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::InvalidParameter(format!("gamma {g} outside [0, 1]")));
    }
    let mut rows = Vec::with_capacity(reports.len() * gammas.len());
    let mut bands = Vec::new();
    for agg in reports {
        rows.extend(gammas.iter().map(|&gamma| SweepRow {
            solver: agg.solver.clone(),
            gamma,
            score: agg.score(gamma),
        }));
        if let Some((lo, hi)) = reasonable_band(agg) {
            bands.push(Band {
                solver: agg.solver.clone(),
                gamma_low: lo,
                gamma_high: hi,
            });
        }
    }
    Ok(SweepTable { rows, bands })
}

/// γ in [0, 1] where two solvers score equally, if their lines cross there.
pub fn crossing_gamma(a: &Aggregates, b: &Aggregates) -> Option<f64> {
    let (g1, g2) = (a.gap_pct?, b.gap_pct?);
    let (i1, i2) = (a.illegal_pct, b.illegal_pct);
    let denom = (i1 - i2) + (g2 - g1);
    if denom == 0.0 {
        return None;
    }
    let gamma = (g2 - g1) / denom;
    (0.0..=1.0).contains(&gamma).then_some(gamma)
}

pub const TOO_EASY_PCT: f64 = 1.0;
pub const TOO_HARD_SCREENED_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub baselines: Vec<Aggregates>,
    pub labeled: usize,
    pub screened: usize,
    pub too_easy: bool,
    pub too_hard: bool,
}

/// Greedy baselines over a labeled corpus. `screened` is how many
/// infeasible instances labeling dropped from it.
pub fn dataset_probe(records: &[DatasetRecord], screened: usize) -> Result<ProbeReport> {
    let labeled: Vec<DatasetRecord> = records.iter().filter(|r| r.is_labeled()).cloned().collect();
    let total = labeled.len() + screened;
    if total == 0 {
        return Err(Error::Empty("probe corpus".into()));
    }
    let baselines = if labeled.is_empty() {
        Vec::new()
    } else {
        Baseline::ALL
            .iter()
            .map(|b| evaluate(&labeled, b).map(|r| r.aggregates))
            .collect::<Result<Vec<_>>>()?
    };
    let too_easy = baselines
        .iter()
        .any(|a| a.illegal_pct <= TOO_EASY_PCT && a.gap_pct.is_some_and(|g| g <= TOO_EASY_PCT));
    let too_hard = screened as f64 / total as f64 > TOO_HARD_SCREENED_FRACTION;
    Ok(ProbeReport {
        baselines,
        labeled: labeled.len(),
        screened,
        too_easy,
        too_hard,
    })
}

/// Probe fixture in the style of older datasets: windows are drawn around
/// the visit times of a nearest-neighbor route, so that route is feasible
/// and greedy methods follow it.
pub fn gen_route_derived(n: usize, count: usize, half_width: f64, seed: u64) -> Result<Vec<DatasetRecord>> {
    if n == 0 || half_width.is_nan() || half_width <= 0.0 {
        return Err(Error::InvalidParameter(
            "route-derived fixture needs n ≥ 1 and positive half width".into(),
        ));
    }
    let params = serde_json::json!({ "n": n, "half_width": half_width });
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(seed, i as u64);
            let points: Vec<Point<f64>> = (0..=n).map(|_| Point::new(rng.gen(), rng.gen())).collect();
            let open = Instance::new(points.clone(), vec![TimeWindow::open(0.0); n + 1])?;
            let route = nearest_neighbor(&open);
            let sched = propagate(&open, &route)?;
            let mut windows = vec![TimeWindow::open(0.0); n + 1];
            for (&v, &t) in route.iter().zip(&sched.visit_times).skip(1) {
                let lo = (t - half_width * rng.gen::<f64>()).max(0.0);
                windows[v] = TimeWindow::new(lo, t + half_width * rng.gen::<f64>());
            }
            Ok(DatasetRecord {
                id: format!("route-derived-n{n}-s{seed}-{i:06}"),
                instance: Instance::new(points, windows)?,
                expert_tour: None,
                expert_length: None,
                meta: RecordMeta {
                    generator: "route-derived".into(),
                    params: params.clone(),
                    seed,
                    groups: None,
                    run: None,
                },
            })
        })
        .collect()
}

fn nearest_neighbor(inst: &Instance<f64>) -> Vec<usize> {
    let mut route = vec![0];
    let mut left: Vec<usize> = (1..inst.node_count()).collect();
    while !left.is_empty() {
        let cur = *route.last().unwrap();
        let (pos, _) = left
            .iter()
            .enumerate()
            .min_by(|a, b| inst.dist(cur, *a.1).total_cmp(&inst.dist(cur, *b.1)))
            .unwrap();
        route.push(left.remove(pos));
    }
    route
}

/// Labels with the exact solver and runs the probe.
pub fn probe_unlabeled(records: Vec<DatasetRecord>) -> Result<ProbeReport> {
    let (labeled, screened) = label_dataset(records, ExpertSolver::Dp)?;
    dataset_probe(&labeled, screened)
}

/// Deterministic subset of `count` records.
pub fn subsample(records: &[DatasetRecord], count: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut record_rng(seed, u64::MAX));
    idx.truncate(count);
    idx.sort_unstable();
    idx.into_iter().map(|i| records[i].clone()).collect()
}

pub fn write_rows_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(aggs: &[Aggregates], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for a in aggs {
        w.serialize(a).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format sweep: solver, gamma, score.
pub fn write_sweep_csv<W: Write>(table: &SweepTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &table.rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One solver's curve as two columns, gamma and score.
pub fn write_curve_csv<W: Write>(table: &SweepTable, solver: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gamma", "score"]).map_err(csv_err)?;
    for (g, s) in table.curve(solver) {
        w.write_record([g.to_string(), s.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}
