use serde::{Deserialize, Serialize};

use crate::datagen::DatasetRecord;
use crate::error::{Error, Result};
use crate::problem::{Instance, PartialTour};
use crate::scalar::Scalar;

use super::{dynamic_row, musla_features, osla_features, FeatureLevel, InstanceContext, Lookahead, CONTEXT_DIM};

/// Scorer inputs for every unvisited node at one construction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CandidateSet<T: Scalar> {
    pub candidates: Vec<usize>,
    /// Row-major, `candidates.len() * row_dim` values.
    pub rows: Vec<T>,
    pub row_dim: usize,
    pub context: Vec<T>,
}

impl<T: Scalar> CandidateSet<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i * self.row_dim..(i + 1) * self.row_dim]
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Assembles rows at `level` from `state` (whose clock may be perceived).
    pub fn build(
        ctx: &InstanceContext<T>,
        inst: &Instance<T>,
        state: &PartialTour<T>,
        level: FeatureLevel,
        lookahead: Option<&Lookahead<'_, T>>,
    ) -> Result<Self> {
        let candidates: Vec<usize> = state.unvisited().collect();
        let musla = match level {
            FeatureLevel::Musla => {
                let la = lookahead.ok_or_else(|| {
                    Error::InvalidParameter("musla features need a one-step look-ahead policy".into())
                })?;
                Some(musla_features(inst, state, la)?)
            }
            _ => None,
        };
        let row_dim = level.row_dim();
        let mut rows = Vec::with_capacity(candidates.len() * row_dim);
        for (i, &x) in candidates.iter().enumerate() {
            rows.extend_from_slice(&ctx.nodes.rows[x]);
            rows.extend_from_slice(&ctx.edge_means[x]);
            if level >= FeatureLevel::Dynamic {
                rows.extend_from_slice(&dynamic_row(inst, state, x));
            }
            if level >= FeatureLevel::Osla {
                rows.extend_from_slice(&osla_features(inst, state, x)?.to_array());
            }
            if let Some(block) = &musla {
                debug_assert_eq!(block.candidates[i], x);
                rows.extend_from_slice(&block.rows[i].to_array());
            }
        }
        debug_assert_eq!(rows.len(), candidates.len() * row_dim);
        let mut context = ctx.context(inst, state);
        if level == FeatureLevel::Static {
            // Progress and clock are dynamic information.
            context[CONTEXT_DIM - 2] = T::zero();
            context[CONTEXT_DIM - 1] = T::zero();
        }
        Ok(Self {
            candidates,
            rows,
            row_dim,
            context,
        })
    }
}

/// One supervised example: the candidate set at an expert prefix and the
/// position of the expert's next node within it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainingSample<T: Scalar> {
    pub instance_id: String,
    pub step: usize,
    pub level: FeatureLevel,
    pub set: CandidateSet<T>,
    pub target: usize,
}

/// One sample per construction step along the expert tour. Look-ahead
/// features are computed at expert prefixes; no policy rollout happens.
pub fn build_training_samples<T: Scalar>(
    record: &DatasetRecord,
    level: FeatureLevel,
    lookahead: Option<&Lookahead<'_, T>>,
) -> Result<Vec<TrainingSample<T>>> {
    let tour = record
        .expert_tour
        .as_ref()
        .ok_or_else(|| Error::Unlabeled(record.id.clone()))?;
    tour.validate(record.instance.node_count())?;
    let inst: Instance<T> = record.instance.cast();
    let ctx = InstanceContext::new(&inst);
    let mut state = PartialTour::start(&inst);
    let mut out = Vec::with_capacity(inst.n());
    for (step, &next) in tour.order.iter().enumerate().skip(1) {
        let set = CandidateSet::build(&ctx, &inst, &state, level, lookahead)?;
        let target = set
            .candidates
            .iter()
            .position(|&c| c == next)
            .expect("expert node is unvisited");
        out.push(TrainingSample {
            instance_id: record.id.clone(),
            step: step - 1,
            level,
            set,
            target,
        });
        state.push(&inst, next)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_medium, MediumParams};
    use crate::expert::{label_dataset, ExpertSolver};
    use crate::features::{LookaheadRanker, CONTEXT_DIM, STATIC_NODE_DIM};

    fn labeled(n: usize) -> DatasetRecord {
        let recs = gen_medium(&MediumParams::new(n), 20, 3).unwrap();
        let (mut l, _) = label_dataset(recs, ExpertSolver::Dp).unwrap();
        l.remove(0)
    }

    #[test]
    fn one_sample_per_step() {
        let rec = labeled(8);
        let samples = build_training_samples::<f64>(&rec, FeatureLevel::Dynamic, None).unwrap();
        assert_eq!(samples.len(), 8);
        assert_eq!(samples[0].set.len(), 8);
        assert_eq!(samples[7].set.len(), 1);
        let tour = rec.expert_tour.as_ref().unwrap();
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.step, i);
            assert_eq!(s.set.candidates[s.target], tour.order[i + 1]);
            assert_eq!(s.set.context.len(), CONTEXT_DIM);
            assert_eq!(s.set.rows.len(), s.set.len() * FeatureLevel::Dynamic.row_dim());
        }
    }

    #[test]
    fn osla_rows_match_direct_recomputation() {
        let rec = labeled(7);
        let samples = build_training_samples::<f64>(&rec, FeatureLevel::Osla, None).unwrap();
        let tour = rec.expert_tour.as_ref().unwrap();
        for s in &samples {
            let st = PartialTour::from_prefix(&rec.instance, &tour.order[..=s.step]).unwrap();
            for (i, &x) in s.set.candidates.iter().enumerate() {
                let direct = osla_features(&rec.instance, &st, x).unwrap().to_array();
                assert_eq!(&s.set.row(i)[24..30], &direct);
                assert_eq!(
                    &s.set.row(i)[..STATIC_NODE_DIM],
                    &InstanceContext::new(&rec.instance).nodes.rows[x]
                );
            }
        }
    }

    struct ByIndex;
    impl LookaheadRanker<f64> for ByIndex {
        fn scores(&self, _: &Instance<f64>, state: &PartialTour<f64>) -> Result<Vec<(usize, f64)>> {
            Ok(state.unvisited().map(|v| (v, -(v as f64))).collect())
        }
    }

    #[test]
    fn musla_level_requires_lookahead() {
        let rec = labeled(6);
        assert!(build_training_samples::<f64>(&rec, FeatureLevel::Musla, None).is_err());
        let la = Lookahead {
            ranker: &ByIndex,
            k: 2,
            m: 1,
        };
        let samples = build_training_samples::<f64>(&rec, FeatureLevel::Musla, Some(&la)).unwrap();
        assert_eq!(samples[0].set.row_dim, 36);
        let present: usize = (0..samples[0].set.len())
            .filter(|&i| samples[0].set.row(i)[35] == 1.0)
            .count();
        assert_eq!(present, 2);
    }

    #[test]
    fn static_level_hides_progress_and_clock() {
        let rec = labeled(6);
        let st = build_training_samples::<f64>(&rec, FeatureLevel::Static, None).unwrap();
        let dy = build_training_samples::<f64>(&rec, FeatureLevel::Dynamic, None).unwrap();
        let last = &dy[5].set.context;
        assert!(last[CONTEXT_DIM - 2] > 0.0 && last[CONTEXT_DIM - 1] > 0.0);
        for (s, d) in st.iter().zip(&dy) {
            assert_eq!(&s.set.context[CONTEXT_DIM - 2..], &[0.0, 0.0]);
            assert_eq!(&s.set.context[..CONTEXT_DIM - 2], &d.set.context[..CONTEXT_DIM - 2]);
        }
    }

    #[test]
    fn unlabeled_record_rejected() {
        let rec = gen_medium(&MediumParams::new(4), 1, 0).unwrap().remove(0);
        assert!(matches!(
            build_training_samples::<f64>(&rec, FeatureLevel::Static, None),
            Err(Error::Unlabeled(_))
        ));
    }

    #[test]
    fn f32_samples() {
        let rec = labeled(5);
        let s = build_training_samples::<f32>(&rec, FeatureLevel::Osla, None).unwrap();
        assert_eq!(s.len(), 5);
    }
}
