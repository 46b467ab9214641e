//! On-disk formats: JSONL dataset records and JSON policy checkpoints.
//!
//! A record line looks like
//! `{"id":..,"n":2,"coords":[[x,y],..],"tw":[[0,0,true],[s,e],..],"meta":{..},"expert_tour":[..],"expert_length":..}`.
//! A window is `[start, end]`, or `[start, 0, true]` when its end is unconstrained.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetRecord, RecordMeta};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::problem::{Instance, Point, TimeWindow, Tour};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum WindowRepr {
    Closed(f64, f64),
    Flagged(f64, f64, bool),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordRepr {
    id: String,
    n: usize,
    coords: Vec<[f64; 2]>,
    tw: Vec<WindowRepr>,
    meta: RecordMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expert_tour: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expert_length: Option<f64>,
}

impl From<&DatasetRecord> for RecordRepr {
    fn from(r: &DatasetRecord) -> Self {
        let inst = &r.instance;
        Self {
            id: r.id.clone(),
            n: inst.n(),
            coords: inst.points().iter().map(|p| [p.x, p.y]).collect(),
            tw: inst
                .windows()
                .iter()
                .map(|w| {
                    if w.end_unconstrained {
                        WindowRepr::Flagged(w.start, 0.0, true)
                    } else {
                        WindowRepr::Closed(w.start, w.end)
                    }
                })
                .collect(),
            meta: r.meta.clone(),
            expert_tour: r.expert_tour.as_ref().map(|t| t.order.clone()),
            expert_length: r.expert_length,
        }
    }
}

impl TryFrom<RecordRepr> for DatasetRecord {
    type Error = Error;

    fn try_from(r: RecordRepr) -> Result<Self> {
        if r.coords.len() != r.n + 1 || r.tw.len() != r.n + 1 {
            return Err(Error::Parse(format!(
                "record {}: n = {} but {} coords and {} windows",
                r.id,
                r.n,
                r.coords.len(),
                r.tw.len()
            )));
        }
        let points = r.coords.iter().map(|c| Point::new(c[0], c[1])).collect();
        let windows =
            r.tw.iter()
                .map(|w| match *w {
                    WindowRepr::Closed(s, e) | WindowRepr::Flagged(s, e, false) => TimeWindow::new(s, e),
                    WindowRepr::Flagged(s, _, true) => TimeWindow::open(s),
                })
                .collect();
        let instance = Instance::new(points, windows).map_err(|e| Error::Parse(format!("record {}: {e}", r.id)))?;
        let expert_tour = r.expert_tour.map(Tour::new);
        if let Some(t) = &expert_tour {
            t.validate(instance.node_count())
                .map_err(|e| Error::Parse(format!("record {}: {e}", r.id)))?;
        }
        Ok(DatasetRecord {
            id: r.id,
            instance,
            expert_tour,
            expert_length: r.expert_length,
            meta: r.meta,
        })
    }
}

pub fn record_to_line(record: &DatasetRecord) -> Result<String> {
    Ok(serde_json::to_string(&RecordRepr::from(record))?)
}

pub fn record_from_line(line: &str) -> Result<DatasetRecord> {
    let repr: RecordRepr = serde_json::from_str(line)?;
    repr.try_into()
}

pub fn write_records<W: Write>(records: &[DatasetRecord], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", record_to_line(r)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one record per non-blank line; errors name the offending line.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(record_from_line(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub const CHECKPOINT_FORMAT: &str = "tsptw-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained policy with the run configuration and seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// Free-form run configuration, stored for provenance.
    pub run_config: serde_json::Value,
    pub epoch_losses: Vec<f64>,
    pub policy: Policy<f64>,
}

impl Checkpoint {
    pub fn new(policy: Policy<f64>, seed: u64, run_config: serde_json::Value, epoch_losses: Vec<f64>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            run_config,
            epoch_losses,
            policy,
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read<R: std::io::Read>(input: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(input)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                ck.format, ck.version
            )));
        }
        ck.policy.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_hard_train, gen_unconstrained, HardParams};
    use crate::expert::{label_dataset, ExpertSolver};
    use crate::features::FeatureLevel;
    use crate::policy::{PolicyConfig, ScorerParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn records_round_trip_exactly() {
        let recs = gen_hard_train(&HardParams::new(8), 5, 3).unwrap();
        let (mut recs, _) = label_dataset(recs, ExpertSolver::Dp).unwrap();
        recs.extend(gen_unconstrained(4, 2, 1).unwrap());
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        let mut again = Vec::new();
        write_records(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn window_forms() {
        let line = r#"{"id":"x","n":2,"coords":[[0,0],[0,1],[1,1]],"tw":[[0,0,true],[2,5],[1,3,false]],"meta":{"generator":"hand","params":null,"seed":0}}"#;
        let r = record_from_line(line).unwrap();
        assert!(r.instance.window(0).end_unconstrained);
        assert_eq!(*r.instance.window(1), TimeWindow::new(2.0, 5.0));
        assert_eq!(*r.instance.window(2), TimeWindow::new(1.0, 3.0));
        assert!(!r.is_labeled());
        let out = record_to_line(&r).unwrap();
        assert!(out.contains(r#""tw":[[0.0,0.0,true],[2.0,5.0],[1.0,3.0]]"#), "{out}");
    }

    #[test]
    fn bad_lines_are_reported() {
        let bad_count =
            r#"{"id":"x","n":3,"coords":[[0,0]],"tw":[[0,0,true]],"meta":{"generator":"h","params":null,"seed":0}}"#;
        let err = read_records(format!("\n{bad_count}\n").as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let bad_tour = r#"{"id":"x","n":1,"coords":[[0,0],[1,0]],"tw":[[0,0,true],[0,9]],"meta":{"generator":"h","params":null,"seed":0},"expert_tour":[0,0]}"#;
        assert!(record_from_line(bad_tour).is_err());
        assert!(record_from_line(r#"{"id":"x","bogus":1}"#).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let level = FeatureLevel::Osla;
        let config = PolicyConfig {
            level,
            hidden: vec![6, 5],
            ..Default::default()
        };
        let scorer = ScorerParams::init(level.input_dim(), &[6, 5], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let policy = Policy::new(config, scorer, None).unwrap();
        let ck = Checkpoint::new(policy, 9, serde_json::json!({"epochs": 3}), vec![1.5, 0.25]);
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        assert_eq!(Checkpoint::read(buf.as_slice()).unwrap(), ck);

        let mut wrong = ck.clone();
        wrong.version = 99;
        let mut buf = Vec::new();
        wrong.write(&mut buf).unwrap();
        assert!(Checkpoint::read(buf.as_slice()).is_err());
    }
}
