use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::{train_oracle, Oracle};
use crate::rng::derive_stream;

use super::config::ExperimentConfig;
use super::metrics::{summarize_arm, ArmSummary};
use super::trial::{run_trial, TrialResult};

pub const RETURNS_FILE: &str = "returns.csv";
pub const QUERIES_FILE: &str = "queries.csv";
pub const POSTERIORS_FILE: &str = "trainer_posteriors.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SMOOTHED_FILE: &str = "curves.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEDGER_DIR: &str = "ledgers";
pub const ORACLE_FILE: &str = "oracle.csv";

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Ordered by arm (config order) then trial index.
    pub results: Vec<TrialResult>,
    pub summaries: Vec<ArmSummary>,
}

impl ExperimentOutput {
    pub fn summary(&self, arm: &str) -> Option<&ArmSummary> {
        self.summaries.iter().find(|s| s.arm == arm)
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    status: &'a str,
    arms: Vec<String>,
    trials: usize,
    episodes: usize,
    completed: Vec<(String, usize)>,
    failed: Vec<FailedJob>,
}

#[derive(Debug, Serialize)]
struct FailedJob {
    arm: String,
    trial: usize,
    error: String,
}

/// Loads the oracle from `oracle_path`, or trains one on a stream derived from the base seed.
pub fn obtain_oracle(cfg: &ExperimentConfig) -> Result<Oracle> {
    match &cfg.oracle_path {
        Some(path) => {
            let (oracle, _label) = Oracle::read_dump(BufReader::new(File::open(path)?))?;
            let env = cfg.agent_env().build()?;
            if oracle.q_table.num_states() != env.num_states() || oracle.q_table.num_actions() != env.num_actions() {
                return Err(Error::InvalidConfig(format!(
                    "oracle at {} has shape {}x{}, environment needs {}x{}",
                    path.display(),
                    oracle.q_table.num_states(),
                    oracle.q_table.num_actions(),
                    env.num_states(),
                    env.num_actions()
                )));
            }
            Ok(oracle)
        }
        None => train_oracle(&cfg.env, &cfg.oracle, &mut derive_stream(cfg.base_seed, "oracle", 0)),
    }
}

/// Runs every arm × trial (in parallel), aggregates metrics and, if `out_dir`
/// is given, writes the CSV artifacts there.
///
/// A failed trial aborts the experiment: the manifest then lists what
/// completed and what failed, and only the completed trials are written.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let specs = cfg.arm_specs();
    if let Some(s) = specs.iter().find(|s| s.kind.uses_feedback() && s.trainers.is_empty()) {
        return Err(Error::InvalidConfig(format!(
            "feedback arm {} needs at least one simulated trainer",
            s.label
        )));
    }
    let oracle = if specs.iter().any(|s| s.kind.uses_feedback()) {
        Some(obtain_oracle(cfg)?)
    } else {
        None
    };
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|a| (0..cfg.trials).map(move |t| (a, t)))
        .collect();
    let run = || -> Vec<Result<TrialResult>> {
        jobs.par_iter()
            .map(|&(a, t)| {
                run_trial(cfg, &specs[a], t, oracle.as_ref()).map_err(|e| Error::Trial {
                    arm: specs[a].label.clone(),
                    trial: t,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let outcomes = if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    };

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for r in outcomes {
        match r {
            Ok(res) => results.push(res),
            Err(e) => failures.push(e),
        }
    }
    let summaries = specs
        .iter()
        .map(|s| {
            let curves: Vec<Vec<f64>> = results
                .iter()
                .filter(|r| r.arm == s.label)
                .map(|r| r.returns.clone())
                .collect();
            summarize_arm(&s.label, &curves)
        })
        .collect();
    let output = ExperimentOutput { results, summaries };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            status: if failures.is_empty() { "complete" } else { "failed" },
            arms: specs.iter().map(|s| s.label.clone()).collect(),
            trials: cfg.trials,
            episodes: cfg.episodes,
            completed: output.results.iter().map(|r| (r.arm.clone(), r.trial_index)).collect(),
            failed: failures
                .iter()
                .map(|e| match e {
                    Error::Trial { arm, trial, source } => FailedJob {
                        arm: arm.clone(),
                        trial: *trial,
                        error: source.to_string(),
                    },
                    other => FailedJob {
                        arm: String::new(),
                        trial: 0,
                        error: other.to_string(),
                    },
                })
                .collect(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        fs::write(dir.join("config.json"), cfg.to_json_pretty())?;
        write_outputs(&output, cfg.smoothing_window, dir)?;
        if let Some(o) = &oracle {
            o.write_dump(&cfg.env.label(), BufWriter::new(File::create(dir.join(ORACLE_FILE))?))?;
        }
    }
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(output),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes all CSV artifacts of an experiment into `dir`.
pub fn write_outputs(out: &ExperimentOutput, smoothing_window: usize, dir: &Path) -> Result<()> {
    let mut w = csv_writer(&dir.join(RETURNS_FILE))?;
    w.write_record(["arm", "trial", "episode", "return"])?;
    for r in &out.results {
        for (ep, ret) in r.returns.iter().enumerate() {
            w.serialize((&r.arm, r.trial_index, ep, ret))?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(QUERIES_FILE))?;
    w.write_record([
        "arm", "trial", "episode", "rank", "state", "action", "entropy", "p_fused",
    ])?;
    for r in &out.results {
        for q in &r.queries {
            w.serialize((
                &r.arm,
                r.trial_index,
                q.episode,
                q.rank,
                q.query.state.0,
                q.query.action.0,
                q.query.entropy,
                q.query.p_fused,
            ))?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(POSTERIORS_FILE))?;
    w.write_record(["arm", "trial", "episode", "trainer_id", "c_mean"])?;
    for r in &out.results {
        for p in &r.posteriors {
            w.serialize((&r.arm, r.trial_index, p.episode, p.trainer_id.0, p.c_mean))?;
        }
    }
    w.flush()?;

    write_summary(&out.summaries, &dir.join(SUMMARY_FILE))?;

    let mut w = csv_writer(&dir.join(SMOOTHED_FILE))?;
    w.write_record(["arm", "episode", "mean", "lower", "upper", "mean_smoothed"])?;
    for s in &out.summaries {
        let smoothed = super::metrics::smooth(&s.mean_curve, smoothing_window);
        for (ep, m) in s.mean_curve.iter().enumerate() {
            let (lo, hi) = match &s.bands {
                Some(b) => (b.lower[ep], b.upper[ep]),
                None => (*m, *m),
            };
            w.serialize((&s.arm, ep, m, lo, hi, smoothed[ep]))?;
        }
    }
    w.flush()?;

    let ledgers = dir.join(LEDGER_DIR);
    fs::create_dir_all(&ledgers)?;
    for r in &out.results {
        if !r.ledger.is_empty() {
            let name = format!("{}_trial{}.csv", r.arm.replace(['@', '/'], "_"), r.trial_index);
            r.ledger.write_csv(BufWriter::new(File::create(ledgers.join(name))?))?;
        }
    }
    Ok(())
}

pub fn write_summary(summaries: &[ArmSummary], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["arm", "auc", "auc_ci_low", "auc_ci_high"])?;
    for s in summaries {
        w.serialize((&s.arm, s.auc, s.auc_ci_low, s.auc_ci_high))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `returns.csv` back into per-arm trial curves, arms in first-seen order.
pub fn read_returns(path: &Path) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<usize, Vec<(usize, f64)>>> = BTreeMap::new();
    for rec in rdr.deserialize::<(String, usize, usize, f64)>() {
        let (arm, trial, ep, ret) = rec?;
        if !table.contains_key(&arm) {
            order.push(arm.clone());
        }
        table.entry(arm).or_default().entry(trial).or_default().push((ep, ret));
    }
    Ok(order
        .into_iter()
        .map(|arm| {
            let trials = table.remove(&arm).unwrap_or_default();
            let curves = trials
                .into_values()
                .map(|mut eps| {
                    eps.sort_by_key(|&(e, _)| e);
                    eps.into_iter().map(|(_, r)| r).collect()
                })
                .collect();
            (arm, curves)
        })
        .collect())
}

/// Recomputes the per-arm summary from a run directory's `returns.csv`.
pub fn report(in_dir: &Path) -> Result<Vec<ArmSummary>> {
    let path = in_dir.join(RETURNS_FILE);
    if !path.exists() {
        return Err(Error::InvalidConfig(format!("{} not found", path.display())));
    }
    Ok(read_returns(&path)?
        .into_iter()
        .map(|(arm, curves)| summarize_arm(&arm, &curves))
        .collect())
}

/// Fixed-width AUC table.
pub fn format_table(summaries: &[ArmSummary]) -> String {
    let width = summaries.iter().map(|s| s.arm.len()).max().unwrap_or(3).max(3);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<width$}  {:>6}  {:>12}  {:>12}  {:>12}  {:>12}\n",
        "arm", "trials", "auc", "auc_ci_low", "auc_ci_high", "last100_mean"
    ));
    for s in summaries {
        let tail = &s.mean_curve[s.mean_curve.len().saturating_sub(100)..];
        let last = if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>12.2}  {:>12.2}  {:>12.2}  {:>12.3}\n",
            s.arm, s.trials, s.auc, s.auc_ci_low, s.auc_ci_high, last
        ));
    }
    out
}
