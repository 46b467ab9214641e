//! Exact expert solvers and dataset labeling.
//!
//! [`dp_solve`] is a bi-criteria Held-Karp: each `(subset, last)` state keeps
//! the Pareto frontier of `(length, arrival)` labels, because with time
//! windows a longer partial path may arrive earlier and still be the only one
//! that completes legally.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::DatasetRecord;
use crate::error::{Error, Result};
use crate::problem::{check_legality, tour_length, Instance, Tour};
use crate::scalar::Scalar;

pub const BRUTE_FORCE_LIMIT: usize = 10;
pub const DP_LIMIT: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label<T> {
    pub length: T,
    pub arrival: T,
    pred_last: u32,
    pred_index: u32,
}

/// Labels sorted by length ascending with arrival strictly descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFrontier<T> {
    labels: Vec<Label<T>>,
}

impl<T> Default for ParetoFrontier<T> {
    fn default() -> Self {
        Self { labels: Vec::new() }
    }
}

impl<T: Scalar> ParetoFrontier<T> {
    pub fn labels(&self) -> &[Label<T>] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Inserts `(length, arrival)` unless an existing label is at least as
    /// good on both criteria; drops labels the new one dominates.
    /// Returns whether the label was kept.
    pub fn insert(&mut self, length: T, arrival: T) -> bool {
        self.insert_label(Label {
            length,
            arrival,
            pred_last: 0,
            pred_index: 0,
        })
    }

    fn insert_label(&mut self, label: Label<T>) -> bool {
        let labels = &mut self.labels;
        let upto = labels.partition_point(|l| l.length <= label.length);
        if upto > 0 && labels[upto - 1].arrival <= label.arrival {
            return false;
        }
        let from = labels.partition_point(|l| l.length < label.length);
        let mut end = upto;
        while end < labels.len() && labels[end].arrival >= label.arrival {
            end += 1;
        }
        labels.splice(from..end, std::iter::once(label));
        true
    }
}

fn check_size<T: Scalar>(inst: &Instance<T>, limit: usize) -> Result<()> {
    if inst.n() > limit {
        return Err(Error::TooLarge { n: inst.n(), limit });
    }
    Ok(())
}

/// Exhaustive search over all visiting orders in lexicographic order.
///
/// Returns the shortest legal tour, the lexicographically smallest among
/// equal lengths, or `None` if no legal tour exists. Prefixes that are
/// already late are cut since lateness cannot be undone.
pub fn brute_force_solve<T: Scalar>(inst: &Instance<T>) -> Result<Option<(Tour, T)>> {
    check_size(inst, BRUTE_FORCE_LIMIT)?;
    let n = inst.n();
    if n == 0 {
        return Ok(Some((Tour::new(vec![0]), T::zero())));
    }
    struct Search<'a, T> {
        inst: &'a Instance<T>,
        order: Vec<usize>,
        used: Vec<bool>,
        best: Option<(Vec<usize>, T)>,
    }
    impl<T: Scalar> Search<'_, T> {
        fn go(&mut self, len: T, time: T) {
            let last = *self.order.last().unwrap();
            if self.order.len() == self.used.len() {
                let total = len + self.inst.dist(last, 0);
                if self.best.as_ref().is_none_or(|(_, b)| total < *b) {
                    self.best = Some((self.order.clone(), total));
                }
                return;
            }
            for v in 1..self.used.len() {
                if self.used[v] {
                    continue;
                }
                let leg = self.inst.dist(last, v);
                let w = self.inst.window(v);
                let t = (time + leg).max(w.start);
                if w.lateness(t) > T::zero() {
                    continue;
                }
                self.used[v] = true;
                self.order.push(v);
                self.go(len + leg, t);
                self.order.pop();
                self.used[v] = false;
            }
        }
    }
    let mut used = vec![false; n + 1];
    used[0] = true;
    let mut s = Search {
        inst,
        order: vec![0],
        used,
        best: None,
    };
    s.go(T::zero(), inst.start_time());
    Ok(s.best.map(|(o, l)| (Tour::new(o), l)))
}

/// Exact bi-criteria Held-Karp with Pareto `(length, arrival)` labels.
pub fn dp_solve<T: Scalar>(inst: &Instance<T>) -> Result<Option<(Tour, T)>> {
    dp_solve_with_limit(inst, DP_LIMIT)
}

pub fn dp_solve_with_limit<T: Scalar>(inst: &Instance<T>, limit: usize) -> Result<Option<(Tour, T)>> {
    check_size(inst, limit)?;
    let n = inst.n();
    if n == 0 {
        return Ok(Some((Tour::new(vec![0]), T::zero())));
    }
    let full = (1usize << n) - 1;
    let idx = |mask: usize, v: usize| mask * n + (v - 1);
    let mut states: Vec<ParetoFrontier<T>> = vec![ParetoFrontier::default(); (full + 1) * n];
    let t0 = inst.start_time();
    for v in 1..=n {
        let w = inst.window(v);
        let leg = inst.dist(0, v);
        let t = (t0 + leg).max(w.start);
        if w.lateness(t) == T::zero() {
            states[idx(1 << (v - 1), v)].insert_label(Label {
                length: T::zero() + leg,
                arrival: t,
                pred_last: 0,
                pred_index: 0,
            });
        }
    }
    for mask in 1..=full {
        for last in 1..=n {
            if mask & (1 << (last - 1)) == 0 {
                continue;
            }
            let here = idx(mask, last);
            if states[here].is_empty() {
                continue;
            }
            let labels = std::mem::take(&mut states[here].labels);
            for w in 1..=n {
                let bit = 1 << (w - 1);
                if mask & bit != 0 {
                    continue;
                }
                let window = inst.window(w);
                let leg = inst.dist(last, w);
                let target = idx(mask | bit, w);
                for (k, l) in labels.iter().enumerate() {
                    let t = (l.arrival + leg).max(window.start);
                    if window.lateness(t) > T::zero() {
                        continue;
                    }
                    states[target].insert_label(Label {
                        length: l.length + leg,
                        arrival: t,
                        pred_last: last as u32,
                        pred_index: k as u32,
                    });
                }
            }
            states[here].labels = labels;
        }
    }
    let mut best: Option<(usize, usize, T)> = None;
    for last in 1..=n {
        for (k, l) in states[idx(full, last)].labels.iter().enumerate() {
            let total = l.length + inst.dist(last, 0);
            if best.is_none_or(|(_, _, b)| total < b) {
                best = Some((last, k, total));
            }
        }
    }
    let Some((mut last, mut k, total)) = best else {
        return Ok(None);
    };
    let mut rev = Vec::with_capacity(n + 1);
    let mut mask = full;
    while last != 0 {
        rev.push(last);
        let l = states[idx(mask, last)].labels[k];
        mask &= !(1 << (last - 1));
        last = l.pred_last as usize;
        k = l.pred_index as usize;
    }
    rev.push(0);
    rev.reverse();
    Ok(Some((Tour::new(rev), total)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertSolver {
    Dp,
    BruteForce,
}

impl ExpertSolver {
    pub fn solve<T: Scalar>(&self, inst: &Instance<T>) -> Result<Option<(Tour, T)>> {
        match self {
            ExpertSolver::Dp => dp_solve(inst),
            ExpertSolver::BruteForce => brute_force_solve(inst),
        }
    }
}

/// Attaches expert tours and drops instances without a legal tour.
/// Returns the labeled records and how many were screened out.
pub fn label_dataset(records: Vec<DatasetRecord>, solver: ExpertSolver) -> Result<(Vec<DatasetRecord>, usize)> {
    let total = records.len();
    let solved: Vec<Option<DatasetRecord>> = records
        .into_par_iter()
        .map(|mut r| {
            Ok(solver.solve(&r.instance)?.map(|(tour, len)| {
                r.expert_tour = Some(tour);
                r.expert_length = Some(len);
                r
            }))
        })
        .collect::<Result<_>>()?;
    let labeled: Vec<DatasetRecord> = solved.into_iter().flatten().collect();
    let screened = total - labeled.len();
    Ok((labeled, screened))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImportIssue {
    Malformed(String),
    UnknownId(String),
    Illegal {
        id: String,
        reason: String,
    },
    /// Warning only: a later row replaced an earlier one.
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportDiagnostic {
    pub line: usize,
    pub issue: ImportIssue,
}

impl ImportDiagnostic {
    pub fn is_warning(&self) -> bool {
        matches!(self.issue, ImportIssue::Duplicate(_))
    }
}

/// Attaches tours from a text file with rows `<id> <node> <node> ...`.
///
/// Every tour is checked for legality before it is attached; bad rows are
/// reported per line and skipped. Repeated ids: the last accepted row wins.
pub fn import_external_solutions(
    mut records: Vec<DatasetRecord>,
    text: &str,
) -> (Vec<DatasetRecord>, Vec<ImportDiagnostic>) {
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut diags = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-empty line").to_string();
        let order: std::result::Result<Vec<usize>, _> = fields.map(str::parse).collect();
        let order = match order {
            Ok(o) if !o.is_empty() => o,
            Ok(_) => {
                diags.push(ImportDiagnostic {
                    line: lineno,
                    issue: ImportIssue::Malformed("row has no tour".into()),
                });
                continue;
            }
            Err(e) => {
                diags.push(ImportDiagnostic {
                    line: lineno,
                    issue: ImportIssue::Malformed(e.to_string()),
                });
                continue;
            }
        };
        let Some(&ri) = index.get(&id) else {
            diags.push(ImportDiagnostic {
                line: lineno,
                issue: ImportIssue::UnknownId(id),
            });
            continue;
        };
        if let Some(prev) = seen.insert(id.clone(), lineno) {
            log::warn!("solution for {id} on line {lineno} replaces line {prev}");
            diags.push(ImportDiagnostic {
                line: lineno,
                issue: ImportIssue::Duplicate(id.clone()),
            });
        }
        let tour = Tour::new(order);
        let rec = &mut records[ri];
        let report = check_legality(&rec.instance, &tour);
        if !report.is_legal {
            diags.push(ImportDiagnostic {
                line: lineno,
                issue: ImportIssue::Illegal {
                    id,
                    reason: report.reason.unwrap_or_default(),
                },
            });
            continue;
        }
        rec.expert_length = Some(tour_length(&rec.instance, &tour));
        rec.expert_tour = Some(tour);
    }
    (records, diags)
}
