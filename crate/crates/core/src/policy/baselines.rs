//! Rule-based construction baselines.

use crate::problem::{Instance, PartialTour, Tour};
use crate::scalar::Scalar;

/// Greedy minimum arrival time: always visit the unvisited node that can be
/// reached soonest, waiting included. Ties go to the lowest index.
pub fn greedy_mt<T: Scalar>(inst: &Instance<T>) -> Tour {
    let mut state = PartialTour::start(inst);
    while !state.is_complete() {
        let mut best: Option<(usize, T)> = None;
        for v in state.unvisited() {
            let t = state.arrival_at(inst, v);
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((v, t));
            }
        }
        let (v, _) = best.expect("an unvisited node remains");
        state.push(inst, v).expect("unvisited node");
    }
    Tour::new(state.prefix)
}

fn sorted_by_key<T: Scalar>(inst: &Instance<T>, key: impl Fn(usize) -> (bool, T)) -> Tour {
    let mut rest: Vec<usize> = (1..inst.node_count()).collect();
    rest.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.partial_cmp(&kb.1).expect("finite window"))
            .then(a.cmp(&b))
    });
    let mut order = Vec::with_capacity(inst.node_count());
    order.push(0);
    order.extend(rest);
    Tour::new(order)
}

/// Greedy latest-time: ascending deadline; unconstrained deadlines go last.
pub fn greedy_lt<T: Scalar>(inst: &Instance<T>) -> Tour {
    sorted_by_key(inst, |v| {
        let w = inst.window(v);
        (w.end_unconstrained, if w.end_unconstrained { T::zero() } else { w.end })
    })
}

/// Greedy earliest-start: ascending window start.
pub fn greedy_es<T: Scalar>(inst: &Instance<T>) -> Tour {
    sorted_by_key(inst, |v| (false, inst.window(v).start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_medium, gen_unconstrained, MediumParams};
    use crate::problem::{Point, TimeWindow};

    fn nearest_neighbour(inst: &Instance<f64>) -> Vec<usize> {
        let mut order = vec![0];
        let mut left: Vec<usize> = (1..inst.node_count()).collect();
        while !left.is_empty() {
            let cur = *order.last().unwrap();
            let (pos, _) = left
                .iter()
                .enumerate()
                .min_by(|a, b| inst.dist(cur, *a.1).partial_cmp(&inst.dist(cur, *b.1)).unwrap())
                .unwrap();
            order.push(left.remove(pos));
        }
        order
    }

    #[test]
    fn mt_is_nearest_neighbour_without_windows() {
        for r in gen_unconstrained(9, 30, 5).unwrap() {
            assert_eq!(greedy_mt(&r.instance).order, nearest_neighbour(&r.instance));
        }
    }

    #[test]
    fn mt_skips_node_that_opens_late() {
        // node 1 is close but opens at 5; node 2 is farther and open
        let inst = Instance::new(
            vec![Point::new(0.0, 0.0), Point::new(0.1, 0.0), Point::new(0.0, 0.6)],
            vec![
                TimeWindow::open(0.0),
                TimeWindow::new(5.0, 9.0),
                TimeWindow::new(0.0, 9.0),
            ],
        )
        .unwrap();
        assert_eq!(greedy_mt(&inst).order, vec![0, 2, 1]);
    }

    #[test]
    fn lt_and_es_orders() {
        let inst = Instance::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(0.1, 0.0),
                Point::new(0.0, 0.6),
                Point::new(0.3, 0.3),
            ],
            vec![
                TimeWindow::open(0.0),
                TimeWindow::new(2.0, 3.0),
                TimeWindow::open(1.0),
                TimeWindow::new(2.0, 2.5),
            ],
        )
        .unwrap();
        assert_eq!(greedy_lt(&inst).order, vec![0, 3, 1, 2]);
        assert_eq!(greedy_es(&inst).order, vec![0, 2, 1, 3]);
        let all_open = inst.with_windows(|_, _| TimeWindow::open(0.0)).unwrap();
        assert_eq!(greedy_lt(&all_open).order, vec![0, 1, 2, 3]);
        assert_eq!(greedy_es(&all_open).order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lt_ignores_coordinates() {
        let recs = gen_medium(&MediumParams::new(8), 10, 1).unwrap();
        for r in recs {
            let moved = crate::problem::Instance::new(
                r.instance.points().iter().map(|p| Point::new(1.0 - p.y, p.x)).collect(),
                r.instance.windows().to_vec(),
            )
            .unwrap();
            assert_eq!(greedy_lt(&r.instance), greedy_lt(&moved));
            let t = greedy_mt(&r.instance);
            t.validate(r.instance.node_count()).unwrap();
        }
    }
}
