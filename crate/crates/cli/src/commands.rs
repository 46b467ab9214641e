use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tsptw::datagen::{
    gen_grouped_medium, gen_hard_eval, gen_hard_train, gen_medium, gen_unconstrained, gen_weak_no_start,
    mix_training_corpus, HardParams, MediumParams, MixRatio,
};
use tsptw::eval::{
    crossing_gamma, epsilon_histogram, evaluate, gen_route_derived, score_sweep, write_aggregates_csv, write_curve_csv,
    write_rows_csv, write_sweep_csv, AdaptSolver, Aggregates, Band, Baseline, Expert, PolicySolver, Solver,
};
use tsptw::expert::{import_external_solutions, label_dataset, ExpertSolver};
use tsptw::io::{read_records, write_records, Checkpoint};
use tsptw::policy::{fit_policy, Decode, Policy};
use tsptw::problem::check_legality;
use tsptw::{DatasetRecord, FeatureLevel};

use crate::config::{derive_seed, GenConfig, GenKind, LabelSolver, RunConfig, Stream};
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
    read_records(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_policy(path: &Path) -> Result<Policy<f64>> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open checkpoint {}: {e}", path.display())))?;
    Ok(Checkpoint::read(BufReader::new(file))
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .policy)
}

fn stamp(records: &mut [DatasetRecord], run: serde_json::Value) {
    for r in records {
        let previous = r.meta.run.take();
        let mut run = run.clone();
        if let Some(p) = previous {
            run["source"] = p;
        }
        r.meta.run = Some(run);
    }
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    kind: Option<GenKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
}

fn generate(g: &GenConfig, seed: u64) -> tsptw::Result<Vec<DatasetRecord>> {
    let medium = MediumParams {
        n: g.n,
        alpha: g.alpha,
        beta: g.beta,
        t_n: g.t_n,
    };
    let hard = HardParams {
        n: g.n,
        alpha: g.alpha,
        beta: g.beta,
        group_fraction: g.group_fraction,
        group_count: g.group_count,
    };
    match g.kind {
        GenKind::Medium => gen_medium(&medium, g.count, seed),
        GenKind::HardTrain => gen_hard_train(&hard, g.count, seed),
        GenKind::HardEval => gen_hard_eval(&hard, g.count, seed),
        GenKind::WeakNoStart => gen_weak_no_start(&medium, g.count, seed),
        GenKind::Unconstrained => gen_unconstrained(g.n, g.count, seed),
        GenKind::GroupedMedium => gen_grouped_medium(&medium, g.group_count, g.count, seed),
        GenKind::RouteDerived => gen_route_derived(g.n, g.count, g.half_width, seed),
        GenKind::Mixed => {
            let ratio = MixRatio {
                medium: g.mix[0],
                hard: g.mix[1],
                supplementary: g.mix[2],
            };
            let total: usize = g.mix.iter().sum();
            if total == 0 {
                return Err(tsptw::Error::InvalidParameter("mix ratio is all zero".into()));
            }
            let unit = g.count / total;
            let supp = unit * ratio.supplementary;
            let mut supplementary = gen_weak_no_start(&medium, supp - 2 * (supp / 3), seed.wrapping_add(3))?;
            supplementary.extend(gen_unconstrained(g.n, supp / 3, seed.wrapping_add(4))?);
            supplementary.extend(gen_grouped_medium(
                &medium,
                g.group_count,
                supp / 3,
                seed.wrapping_add(5),
            )?);
            mix_training_corpus(
                gen_medium(&medium, unit * ratio.medium, seed.wrapping_add(1))?,
                gen_hard_train(&hard, unit * ratio.hard, seed.wrapping_add(2))?,
                supplementary,
                ratio,
                seed,
            )
        }
    }
}

pub fn gen(cfg: &mut RunConfig, a: GenArgs) -> Result<()> {
    let g = &mut cfg.gen;
    if let Some(k) = a.kind {
        g.kind = k;
    }
    g.n = a.n.unwrap_or(g.n);
    g.count = a.count.unwrap_or(g.count);
    g.alpha = a.alpha.unwrap_or(g.alpha);
    g.beta = a.beta.unwrap_or(g.beta);
    let mut records = generate(&cfg.gen, derive_seed(cfg.seed, Stream::Gen))?;
    stamp(&mut records, cfg.provenance("gen")?);
    write_records(&records, create(&a.out)?)?;
    println!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

#[derive(Args)]
pub struct LabelArgs {
    /// Input JSONL dataset.
    #[arg(long)]
    data: PathBuf,
    /// Output JSONL dataset.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    solver: Option<LabelSolver>,
    /// Import tours from a file with rows `<id> <node> <node> ...` instead of solving.
    #[arg(long)]
    solutions: Option<PathBuf>,
}

pub fn label(cfg: &mut RunConfig, a: LabelArgs) -> Result<()> {
    if let Some(s) = a.solver {
        cfg.label.solver = s;
    }
    let records = load_records(&a.data)?;
    let mut out = match &a.solutions {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let (records, diags) = import_external_solutions(records, &text);
            for d in &diags {
                eprintln!("{}:{}: {:?}", path.display(), d.line, d.issue);
            }
            let rejected = diags.iter().filter(|d| !d.is_warning()).count();
            let attached = records.iter().filter(|r| r.is_labeled()).count();
            println!("attached {attached} tours, rejected {rejected} rows");
            records
        }
        None => {
            let solver = match cfg.label.solver {
                LabelSolver::Dp => ExpertSolver::Dp,
                LabelSolver::BruteForce => ExpertSolver::BruteForce,
            };
            let (labeled, screened) = label_dataset(records, solver)?;
            println!("labeled {} records, screened {screened}", labeled.len());
            labeled
        }
    };
    stamp(&mut out, cfg.provenance("label")?);
    write_records(&out, create(&a.out)?)?;
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Labeled JSONL dataset.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    level: Option<FeatureLevel>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// One-step look-ahead checkpoint (musla level).
    #[arg(long)]
    lookahead: Option<PathBuf>,
    /// Per-epoch loss CSV; defaults next to the checkpoint.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

pub fn train(cfg: &mut RunConfig, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    t.level = a.level.unwrap_or(t.level);
    t.epochs = a.epochs.unwrap_or(t.epochs);
    if let Some(h) = a.hidden {
        t.hidden = h;
    }
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    if a.lookahead.is_some() {
        t.lookahead = a.lookahead;
    }
    let config = cfg.train.policy_config(derive_seed(cfg.seed, Stream::Train));
    config.validate()?;
    let lookahead = match (&cfg.train.lookahead, config.level) {
        (None, FeatureLevel::Musla) => bail!(usage(
            "musla level needs a one-step look-ahead checkpoint (--lookahead)"
        )),
        (Some(path), FeatureLevel::Musla) => {
            let p = load_policy(path)?;
            if p.level() != FeatureLevel::Osla {
                bail!(usage(format!(
                    "{} is a {} policy, musla needs osla",
                    path.display(),
                    p.level()
                )));
            }
            Some(p)
        }
        _ => None,
    };
    let records = load_records(&a.data)?;
    if let Some(r) = records.iter().find(|r| !r.is_labeled()) {
        bail!(usage(format!(
            "record {} has no expert tour; run `tsptw label` first",
            r.id
        )));
    }
    let (policy, losses) = fit_policy(&records, &config, lookahead)?;
    let ck = Checkpoint::new(policy, cfg.seed, cfg.provenance("train")?, losses.clone());
    let mut w = create(&a.out)?;
    ck.write(&mut w)?;
    w.flush()?;
    let loss_path = a.loss_csv.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let mut w = create(&loss_path)?;
    writeln!(w, "epoch,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{i},{l:e}")?;
    }
    w.flush()?;
    println!("final loss {:.15e}", losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

struct Solvers {
    policy: Option<Policy<f64>>,
    factors: Vec<f64>,
}

impl Solvers {
    fn new(cfg: &RunConfig, names: &[String]) -> Result<Self> {
        let needs = names.iter().any(|n| n.starts_with("checkpoint"));
        let policy = match (&cfg.eval.checkpoint, needs) {
            (Some(p), true) => Some(load_policy(p)?),
            (None, true) => bail!(usage("checkpoint solvers need --checkpoint")),
            _ => None,
        };
        Ok(Self {
            policy,
            factors: cfg.eval.epsilon_factors.clone(),
        })
    }

    fn get(&self, name: &str) -> Result<Box<dyn Solver + '_>> {
        Ok(match name {
            "greedy-mt" => Box::new(Baseline::GreedyMt),
            "greedy-lt" => Box::new(Baseline::GreedyLt),
            "greedy-es" => Box::new(Baseline::GreedyEs),
            "expert" => Box::new(Expert),
            "checkpoint" => Box::new(PolicySolver {
                name: name.into(),
                policy: self.policy.as_ref().expect("loaded"),
                decode: Decode::Greedy,
            }),
            "checkpoint-adapt" => Box::new(AdaptSolver {
                name: name.into(),
                policy: self.policy.as_ref().expect("loaded"),
                factors: self.factors.clone(),
            }),
            other => bail!(usage(format!(
                "unknown solver `{other}` (greedy-mt, greedy-lt, greedy-es, checkpoint, checkpoint-adapt, expert)"
            ))),
        })
    }
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    solver: String,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output JSONL, one tour per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SolvedLine<'a> {
    id: &'a str,
    tour: &'a [usize],
    legal: bool,
    total_timeout: f64,
    epsilon: Option<f64>,
}

pub fn solve(cfg: &mut RunConfig, a: SolveArgs) -> Result<()> {
    if a.checkpoint.is_some() {
        cfg.eval.checkpoint = a.checkpoint;
    }
    let solvers = Solvers::new(cfg, std::slice::from_ref(&a.solver))?;
    let solver = solvers.get(&a.solver)?;
    let records = load_records(&a.data)?;
    let solved = records
        .par_iter()
        .map(|r| solver.solve(r))
        .collect::<tsptw::Result<Vec<_>>>()?;
    let mut w = create(&a.out)?;
    let mut legal = 0;
    for (r, s) in records.iter().zip(&solved) {
        let rep = check_legality(&r.instance, &s.tour);
        legal += rep.is_legal as usize;
        let line = SolvedLine {
            id: &r.id,
            tour: &s.tour.order,
            legal: rep.is_legal,
            total_timeout: rep.total_timeout,
            epsilon: s.epsilon,
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    w.flush()?;
    println!("{}: {legal}/{} legal", solver.name(), records.len());
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Solvers to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    solver: Option<Vec<String>>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Offset factors for checkpoint-adapt, comma separated.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
pub struct Summary {
    pub run: serde_json::Value,
    pub data: PathBuf,
    pub reports: Vec<Aggregates>,
    #[serde(default)]
    pub epsilon_histograms: BTreeMap<String, Vec<(f64, usize)>>,
}

pub fn eval(cfg: &mut RunConfig, a: EvalArgs) -> Result<()> {
    if let Some(s) = a.solver {
        cfg.eval.solvers = s;
    }
    if a.checkpoint.is_some() {
        cfg.eval.checkpoint = a.checkpoint;
    }
    if let Some(e) = a.epsilon {
        cfg.eval.epsilon_factors = e;
    }
    let solvers = Solvers::new(cfg, &cfg.eval.solvers)?;
    let built = cfg
        .eval
        .solvers
        .iter()
        .map(|n| solvers.get(n))
        .collect::<Result<Vec<_>>>()?;
    let records = load_records(&a.data)?;
    let mut reports = Vec::new();
    let mut histograms = BTreeMap::new();
    for s in &built {
        let rep = evaluate(&records, s.as_ref())?;
        write_rows_csv(&rep.rows, create(&a.out_dir.join(format!("rows_{}.csv", s.name())))?)?;
        let hist = epsilon_histogram(&rep.rows);
        if !hist.is_empty() {
            let mut w = create(&a.out_dir.join(format!("epsilon_{}.csv", s.name())))?;
            writeln!(w, "epsilon_factor,count")?;
            for (f, c) in &hist {
                writeln!(w, "{f},{c}")?;
            }
            w.flush()?;
            histograms.insert(s.name().to_string(), hist);
        }
        let g = rep.aggregates.gap_pct.map_or("-".into(), |g| format!("{g:.2}"));
        println!(
            "{:<18} illegal {:>6.2}%  gap {:>6}%  timeout {:.4}  {:.2}s/1000",
            s.name(),
            rep.aggregates.illegal_pct,
            g,
            rep.aggregates.mean_timeout,
            rep.aggregates.seconds_per_1000
        );
        reports.push(rep.aggregates);
    }
    write_aggregates_csv(&reports, create(&a.out_dir.join("aggregates.csv"))?)?;
    let summary = Summary {
        run: cfg.provenance("eval")?,
        data: a.data,
        reports,
        epsilon_histograms: histograms,
    };
    let mut w = create(&a.out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush()?;
    Ok(())
}

#[derive(Args)]
pub struct SweepArgs {
    /// Evaluation summaries (summary.json) to combine.
    #[arg(long, required = true, num_args = 1..)]
    summary: Vec<PathBuf>,
    /// γ grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct Crossing {
    a: String,
    b: String,
    gamma: f64,
}

#[derive(Serialize)]
struct SweepMeta {
    run: serde_json::Value,
    bands: Vec<Band>,
    crossings: Vec<Crossing>,
}

pub fn sweep(cfg: &mut RunConfig, a: SweepArgs) -> Result<()> {
    if let Some(g) = a.gamma {
        cfg.sweep.gammas = g;
    }
    let mut aggs: Vec<Aggregates> = Vec::new();
    for path in &a.summary {
        let file = File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
        let s: Summary = serde_json::from_reader(BufReader::new(file)).with_context(|| path.display().to_string())?;
        aggs.extend(s.reports);
    }
    let table = score_sweep(&aggs, &cfg.sweep.gammas)?;
    write_sweep_csv(&table, create(&a.out_dir.join("sweep.csv"))?)?;
    for agg in &aggs {
        write_curve_csv(
            &table,
            &agg.solver,
            create(&a.out_dir.join(format!("curve_{}.csv", agg.solver)))?,
        )?;
    }
    let mut crossings = Vec::new();
    for (i, x) in aggs.iter().enumerate() {
        for y in &aggs[i + 1..] {
            if let Some(gamma) = crossing_gamma(x, y) {
                crossings.push(Crossing {
                    a: x.solver.clone(),
                    b: y.solver.clone(),
                    gamma,
                });
            }
        }
    }
    let meta = SweepMeta {
        run: cfg.provenance("sweep")?,
        bands: table.bands.clone(),
        crossings,
    };
    let mut w = create(&a.out_dir.join("sweep.json"))?;
    serde_json::to_writer_pretty(&mut w, &meta)?;
    w.flush()?;
    println!("{} solvers × {} γ values", aggs.len(), cfg.sweep.gammas.len());
    Ok(())
}

#[derive(Args)]
pub struct ProbeArgs {
    /// Dataset; unlabeled records are labeled with the exact solver first.
    #[arg(long)]
    data: PathBuf,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn probe(cfg: &mut RunConfig, a: ProbeArgs) -> Result<()> {
    let records = load_records(&a.data)?;
    let (labeled, unlabeled): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.is_labeled());
    let (mut fresh, screened) = label_dataset(unlabeled, ExpertSolver::Dp)?;
    fresh.extend(labeled);
    let report = tsptw::eval::dataset_probe(&fresh, screened)?;
    for b in &report.baselines {
        println!("{:<10} illegal {:>6.2}%  gap {:?}", b.solver, b.illegal_pct, b.gap_pct);
    }
    println!("too easy: {}  too hard: {}", report.too_easy, report.too_hard);
    if let Some(out) = a.out {
        let mut w = create(&out)?;
        serde_json::to_writer_pretty(
            &mut w,
            &serde_json::json!({ "run": cfg.provenance("probe")?, "report": report }),
        )?;
        w.flush()?;
    }
    Ok(())
}
