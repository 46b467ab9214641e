//! Problem representation: instances, tours, time propagation and legality.
//!
//! Travel time equals Euclidean distance. A salesman arriving before a node's
//! window opens waits until it opens; arriving after it closes is lateness,
//! which makes the whole tour illegal but never stops propagation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> Point<U> {
        Point::new(U::of(self.x.as_f64()), U::of(self.y.as_f64()))
    }
}

/// Euclidean distance between two points.
#[inline]
pub fn distance<T: Scalar>(a: Point<T>, b: Point<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Visiting window `[start, end]`. When `end_unconstrained` is set the `end`
/// value is ignored and the node can never be late.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow<T> {
    pub start: T,
    pub end: T,
    pub end_unconstrained: bool,
}

impl<T: Scalar> TimeWindow<T> {
    pub fn new(start: T, end: T) -> Self {
        Self {
            start,
            end,
            end_unconstrained: false,
        }
    }

    /// Window that opens at `start` and never closes.
    pub fn open(start: T) -> Self {
        Self {
            start,
            end: T::zero(),
            end_unconstrained: true,
        }
    }

    /// `max(0, arrival - end)`, zero for unconstrained ends.
    #[inline]
    pub fn lateness(&self, arrival: T) -> T {
        if self.end_unconstrained {
            T::zero()
        } else {
            (arrival - self.end).max(T::zero())
        }
    }

    /// End value as seen by feature extraction (unconstrained ends encode as 0).
    #[inline]
    pub fn end_feature(&self) -> T {
        if self.end_unconstrained {
            T::zero()
        } else {
            self.end
        }
    }

    pub fn cast<U: Scalar>(&self) -> TimeWindow<U> {
        TimeWindow {
            start: U::of(self.start.as_f64()),
            end: U::of(self.end.as_f64()),
            end_unconstrained: self.end_unconstrained,
        }
    }
}

/// One TSPTW problem. Node 0 is the depot; nodes `1..=n` are customers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    points: Vec<Point<T>>,
    windows: Vec<TimeWindow<T>>,
    dist: Vec<T>,
}

impl<T: Scalar> Instance<T> {
    pub fn new(points: Vec<Point<T>>, windows: Vec<TimeWindow<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("instance needs at least the depot".into()));
        }
        if points.len() != windows.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} windows",
                points.len(),
                windows.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("node {i} has non-finite coordinates")));
        }
        for (i, w) in windows.iter().enumerate() {
            if !w.start.is_finite() || w.start < T::zero() {
                return Err(Error::InvalidParameter(format!("node {i} has invalid window start")));
            }
            if !w.end_unconstrained && !(w.end.is_finite() && w.start <= w.end) {
                return Err(Error::InvalidParameter(format!("node {i} has window end before start")));
            }
        }
        let m = points.len();
        let mut dist = vec![T::zero(); m * m];
        for i in 0..m {
            for j in 0..m {
                dist[i * m + j] = distance(points[i], points[j]);
            }
        }
        Ok(Self { points, windows, dist })
    }

    /// Number of customer nodes (depot excluded).
    #[inline]
    pub fn n(&self) -> usize {
        self.points.len() - 1
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn point(&self, i: usize) -> Point<T> {
        self.points[i]
    }

    #[inline]
    pub fn window(&self, i: usize) -> &TimeWindow<T> {
        &self.windows[i]
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn windows(&self) -> &[TimeWindow<T>] {
        &self.windows
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> T {
        self.dist[i * self.points.len() + j]
    }

    /// Departure time from the depot.
    #[inline]
    pub fn start_time(&self) -> T {
        self.windows[0].start.max(T::zero())
    }

    /// Copy with every coordinate and every window endpoint multiplied by `c`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        let points = self.points.iter().map(|p| Point::new(p.x * c, p.y * c)).collect();
        let windows = self
            .windows
            .iter()
            .map(|w| TimeWindow {
                start: w.start * c,
                end: w.end * c,
                end_unconstrained: w.end_unconstrained,
            })
            .collect();
        Self::new(points, windows)
    }

    /// Copy with every window replaced by `f(node, window)`.
    pub fn with_windows(&self, f: impl Fn(usize, &TimeWindow<T>) -> TimeWindow<T>) -> Result<Self> {
        let windows = self.windows.iter().enumerate().map(|(i, w)| f(i, w)).collect();
        Self::new(self.points.clone(), windows)
    }

    pub fn cast<U: Scalar>(&self) -> Instance<U> {
        Instance::new(
            self.points.iter().map(Point::cast).collect(),
            self.windows.iter().map(TimeWindow::cast).collect(),
        )
        .expect("casting a valid instance")
    }
}

/// A visiting order starting at the depot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Self { order }
    }

    /// Checks that the order is a permutation of `0..node_count` starting at 0.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        if self.order.len() != node_count {
            return Err(Error::MalformedTour(format!(
                "not a permutation: length {} for {} nodes",
                self.order.len(),
                node_count
            )));
        }
        if self.order.first() != Some(&0) {
            return Err(Error::MalformedTour("tour does not start at the depot".into()));
        }
        check_prefix(&self.order, node_count).map_err(|_| Error::MalformedTour("not a permutation".into()))
    }
}

fn check_prefix(prefix: &[usize], node_count: usize) -> Result<()> {
    if prefix.first() != Some(&0) {
        return Err(Error::MalformedTour("prefix does not start at the depot".into()));
    }
    let mut seen = vec![false; node_count];
    for &v in prefix {
        if v >= node_count {
            return Err(Error::MalformedTour(format!("node {v} out of range")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::MalformedTour(format!("node {v} repeated")));
        }
    }
    Ok(())
}

/// Visit times, waits and lateness along a (partial) tour, indexed by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    pub order: Vec<usize>,
    pub visit_times: Vec<T>,
    pub waits: Vec<T>,
    pub lateness: Vec<T>,
    /// Sum of edge lengths along the order, without the return edge.
    pub path_length: T,
    /// Path length plus the edge back to the depot.
    pub total_length: T,
    pub total_timeout: T,
}

impl<T: Scalar> Schedule<T> {
    pub fn is_on_time(&self) -> bool {
        self.lateness.iter().all(|&l| l == T::zero())
    }

    /// Time at the last node of the order.
    pub fn current_time(&self) -> T {
        *self.visit_times.last().expect("schedule has the depot")
    }
}

/// Propagates visit times along `prefix` with the waiting rule
/// `t_i = max(t_{i-1} + L(x_{i-1}, x_i), start(x_i))`.
pub fn propagate<T: Scalar>(inst: &Instance<T>, prefix: &[usize]) -> Result<Schedule<T>> {
    check_prefix(prefix, inst.node_count())?;
    let k = prefix.len();
    let mut visit_times = Vec::with_capacity(k);
    let mut waits = Vec::with_capacity(k);
    let mut lateness = Vec::with_capacity(k);
    let t0 = inst.start_time();
    visit_times.push(t0);
    waits.push(T::zero());
    lateness.push(inst.window(0).lateness(t0));
    let mut path_length = T::zero();
    let mut t = t0;
    for w in prefix.windows(2) {
        let (u, v) = (w[0], w[1]);
        let leg = inst.dist(u, v);
        path_length = path_length + leg;
        let arrival = t + leg;
        let start = inst.window(v).start;
        t = arrival.max(start);
        visit_times.push(t);
        waits.push(t - arrival);
        lateness.push(inst.window(v).lateness(t));
    }
    let last = *prefix.last().expect("non-empty prefix");
    let total_length = path_length + inst.dist(last, 0);
    let total_timeout = lateness.iter().copied().sum();
    Ok(Schedule {
        order: prefix.to_vec(),
        visit_times,
        waits,
        lateness,
        path_length,
        total_length,
        total_timeout,
    })
}

/// Tour length including the return edge, summed in visiting order.
pub fn tour_length<T: Scalar>(inst: &Instance<T>, tour: &Tour) -> T {
    let order = &tour.order;
    let mut len = T::zero();
    for w in order.windows(2) {
        len = len + inst.dist(w[0], w[1]);
    }
    match order.last() {
        Some(&last) => len + inst.dist(last, order[0]),
        None => len,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegalityReport<T> {
    pub is_legal: bool,
    /// Lateness per node index; empty when the tour is malformed.
    pub lateness: Vec<T>,
    pub total_timeout: T,
    pub reason: Option<String>,
}

/// Legality of a complete tour. Never fails: malformed tours are reported illegal.
pub fn check_legality<T: Scalar>(inst: &Instance<T>, tour: &Tour) -> LegalityReport<T> {
    if let Err(e) = tour.validate(inst.node_count()) {
        let reason = match e {
            Error::MalformedTour(msg) => msg,
            other => other.to_string(),
        };
        return LegalityReport {
            is_legal: false,
            lateness: Vec::new(),
            total_timeout: T::zero(),
            reason: Some(reason),
        };
    }
    let sched = propagate(inst, &tour.order).expect("validated tour propagates");
    let mut lateness = vec![T::zero(); inst.node_count()];
    for (&v, &l) in sched.order.iter().zip(&sched.lateness) {
        lateness[v] = l;
    }
    let is_legal = sched.total_timeout == T::zero();
    LegalityReport {
        is_legal,
        lateness,
        total_timeout: sched.total_timeout,
        reason: (!is_legal).then(|| "deadline missed".to_string()),
    }
}

/// Construction state: the visited prefix and the clock at its last node.
///
/// `time` is whatever clock the caller wants features to see. Extending the
/// state applies the waiting rule from that clock, so a state built with an
/// offset clock stays offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTour<T> {
    pub prefix: Vec<usize>,
    pub visited: Vec<bool>,
    pub time: T,
}

impl<T: Scalar> PartialTour<T> {
    pub fn start(inst: &Instance<T>) -> Self {
        let mut visited = vec![false; inst.node_count()];
        visited[0] = true;
        Self {
            prefix: vec![0],
            visited,
            time: inst.start_time(),
        }
    }

    /// State after following `prefix` with the waiting rule.
    pub fn from_prefix(inst: &Instance<T>, prefix: &[usize]) -> Result<Self> {
        let sched = propagate(inst, prefix)?;
        let mut visited = vec![false; inst.node_count()];
        for &v in prefix {
            visited[v] = true;
        }
        Ok(Self {
            prefix: prefix.to_vec(),
            visited,
            time: sched.current_time(),
        })
    }

    #[inline]
    pub fn current(&self) -> usize {
        *self.prefix.last().expect("prefix has the depot")
    }

    /// Number of completed construction steps (edges in the prefix).
    #[inline]
    pub fn step(&self) -> usize {
        self.prefix.len() - 1
    }

    pub fn unvisited(&self) -> impl Iterator<Item = usize> + '_ {
        self.visited.iter().enumerate().filter(|(_, &v)| !v).map(|(i, _)| i)
    }

    pub fn unvisited_count(&self) -> usize {
        self.visited.len() - self.prefix.len()
    }

    pub fn is_complete(&self) -> bool {
        self.unvisited_count() == 0
    }

    /// Time at which `v` would be visited next.
    #[inline]
    pub fn arrival_at(&self, inst: &Instance<T>, v: usize) -> T {
        (self.time + inst.dist(self.current(), v)).max(inst.window(v).start)
    }

    pub fn push(&mut self, inst: &Instance<T>, v: usize) -> Result<()> {
        if v >= self.visited.len() {
            return Err(Error::MalformedTour(format!("node {v} out of range")));
        }
        if self.visited[v] {
            return Err(Error::VisitedCandidate(v));
        }
        self.time = self.arrival_at(inst, v);
        self.visited[v] = true;
        self.prefix.push(v);
        Ok(())
    }

    pub fn extended(&self, inst: &Instance<T>, v: usize) -> Result<Self> {
        let mut next = self.clone();
        next.push(inst, v)?;
        Ok(next)
    }

    pub fn with_time(&self, time: T) -> Self {
        Self { time, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Point<f64> {
        Point::new(x, y)
    }

    fn square(wide: bool) -> Instance<f64> {
        let pts = vec![p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0), p(1.0, 0.0)];
        let w = |s, e| {
            if wide {
                TimeWindow::new(0.0, 100.0)
            } else {
                TimeWindow::new(s, e)
            }
        };
        Instance::new(
            pts,
            vec![TimeWindow::open(0.0), w(0.0, 100.0), w(0.0, 100.0), w(0.0, 100.0)],
        )
        .unwrap()
    }

    fn two_node(window: TimeWindow<f64>) -> Instance<f64> {
        Instance::new(vec![p(0.0, 0.0), p(0.0, 1.0)], vec![TimeWindow::open(0.0), window]).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(p(0.0, 0.0), p(0.0, 0.0)), 0.0);
        assert_relative_eq!(distance(p(0.0, 0.0), p(0.6, 0.8)), 1.0, epsilon = 1e-15);
        // sqrt(0.25 + 0.16)
        assert_relative_eq!(distance(p(0.2, 0.1), p(0.7, 0.5)), 0.41f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(distance(p(0.2, 0.1), p(0.7, 0.5)), 0.640312, epsilon = 1e-6);
    }

    #[test]
    fn propagate_waits_for_window() {
        let inst = two_node(TimeWindow::new(2.0, 5.0));
        let s = propagate(&inst, &[0, 1]).unwrap();
        assert_eq!(s.visit_times, vec![0.0, 2.0]);
        assert_eq!(s.waits, vec![0.0, 1.0]);
        assert_eq!(s.lateness, vec![0.0, 0.0]);
    }

    #[test]
    fn propagate_records_lateness_and_continues() {
        let inst = two_node(TimeWindow::new(0.0, 0.5));
        let s = propagate(&inst, &[0, 1]).unwrap();
        assert_eq!(s.visit_times[1], 1.0);
        assert_eq!(s.lateness[1], 0.5);
        assert_eq!(s.total_timeout, 0.5);
    }

    #[test]
    fn propagate_depot_only() {
        let inst = two_node(TimeWindow::new(0.0, 0.5));
        let s = propagate(&inst, &[0]).unwrap();
        assert_eq!(s.visit_times, vec![0.0]);
    }

    #[test]
    fn propagate_rejects_repeats() {
        let inst = square(true);
        assert!(matches!(propagate(&inst, &[0, 1, 1]), Err(Error::MalformedTour(_))));
        assert!(matches!(propagate(&inst, &[1, 0]), Err(Error::MalformedTour(_))));
    }

    #[test]
    fn tour_length_examples() {
        let inst = square(true);
        assert_eq!(tour_length(&inst, &Tour::new(vec![0, 1, 2, 3])), 4.0);
        let two = two_node(TimeWindow::new(0.0, 10.0));
        assert_eq!(tour_length(&two, &Tour::new(vec![0, 1])), 2.0);
    }

    #[test]
    fn legality_examples() {
        let inst = square(true);
        let r = check_legality(&inst, &Tour::new(vec![0, 1, 2, 3]));
        assert!(r.is_legal);
        assert_eq!(r.total_timeout, 0.0);

        let two = two_node(TimeWindow::new(0.0, 0.5));
        let r = check_legality(&two, &Tour::new(vec![0, 1]));
        assert!(!r.is_legal);
        assert_eq!(r.total_timeout, 0.5);
        assert_eq!(r.lateness, vec![0.0, 0.5]);

        let r = check_legality(&inst, &Tour::new(vec![0, 1, 1, 3]));
        assert!(!r.is_legal);
        assert_eq!(r.reason.as_deref(), Some("not a permutation"));
    }

    #[test]
    fn unconstrained_windows_never_late() {
        let inst = two_node(TimeWindow::open(0.0));
        assert!(check_legality(&inst, &Tour::new(vec![0, 1])).is_legal);
    }

    #[test]
    fn instance_validation() {
        assert!(Instance::<f64>::new(vec![], vec![]).is_err());
        assert!(Instance::new(vec![p(0.0, 0.0)], vec![TimeWindow::new(2.0, 1.0)]).is_err());
        assert!(Instance::new(vec![p(f64::NAN, 0.0)], vec![TimeWindow::open(0.0)]).is_err());
    }

    #[test]
    fn partial_tour_tracks_waiting_rule() {
        let inst = two_node(TimeWindow::new(2.0, 5.0));
        let mut st = PartialTour::start(&inst);
        assert_eq!(st.unvisited().collect::<Vec<_>>(), vec![1]);
        st.push(&inst, 1).unwrap();
        assert_eq!(st.time, 2.0);
        assert!(st.is_complete());
        assert!(matches!(st.push(&inst, 1), Err(Error::VisitedCandidate(1))));
    }

    #[test]
    fn generic_over_f32() {
        let inst = Instance::<f32>::new(
            vec![Point::new(0.0, 0.0), Point::new(0.6, 0.8)],
            vec![TimeWindow::open(0.0), TimeWindow::new(2.0, 5.0)],
        )
        .unwrap();
        let s = propagate(&inst, &[0, 1]).unwrap();
        assert_eq!(s.visit_times[1], 2.0f32);
        assert!((tour_length(&inst, &Tour::new(vec![0, 1])) - 2.0).abs() < 1e-6);
    }
}
