//! Experiment orchestration and CSV emission.
//!
//! Each (sweep value, seed) pair is an independent work item: it trains a
//! learner, evaluates the learned and greedy policies by simulation and
//! exactly, and writes its own per-seed files. Rows are merged in grid
//! order afterwards, so output bytes do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::csv::{fmt_real, Table};
use crate::error::HarnessError;
use crate::learner::{train, TrainOutcome};
use crate::model::ModelParams;
use crate::oracle::{
    exact_average_reward, optimal_policy_table, policy_table, solve_optimal, OptimalPolicy,
};
use crate::policy::{extract_thresholds, ParamVector, PolicyKind, SigmoidPolicy};
use crate::simulator::{run_trajectory, write_step_log, Metrics, SimConfig, RNG_ID};
use crate::stats::MeanEstimate;

/// Added to a run seed to get its evaluation seed, keeping the evaluation
/// stream disjoint from the training stream.
pub const EVAL_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Slack allowed between a learned policy's exact value and the optimum.
pub const OPTIMALITY_SLACK: f64 = 1e-8;

pub const RESULTS_HEADER: [&str; 21] = [
    "sweep_value",
    "seed",
    "theta_b",
    "theta_c",
    "theta_s",
    "threshold_b",
    "threshold_c",
    "threshold_s",
    "psi_learned_mc",
    "psi_learned_exact",
    "psi_greedy_mc",
    "psi_greedy_exact",
    "psi_star",
    "accepted_b",
    "accepted_c",
    "accepted_s",
    "greedy_accepted_b",
    "greedy_accepted_c",
    "greedy_accepted_s",
    "avg_energy",
    "greedy_avg_energy",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub theta: ParamVector,
    pub thresholds: [u32; 3],
    pub psi_learned_mc: f64,
    pub psi_learned_exact: f64,
    pub psi_greedy_mc: f64,
    pub psi_greedy_exact: f64,
    pub psi_star: f64,
    /// Accepted requests per class over the evaluation window.
    pub accepted: [u64; 3],
    pub greedy_accepted: [u64; 3],
    pub avg_energy: f64,
    pub greedy_avg_energy: f64,
}

impl ResultRow {
    pub fn total_accepted(&self) -> u64 {
        self.accepted.iter().sum()
    }

    pub fn greedy_total_accepted(&self) -> u64 {
        self.greedy_accepted.iter().sum()
    }

    fn cells(&self) -> Vec<String> {
        let mut c = vec![
            self.sweep_value.map(fmt_real).unwrap_or_default(),
            self.seed.to_string(),
        ];
        c.extend(self.theta.to_array().map(fmt_real));
        c.extend(self.thresholds.map(|t| t.to_string()));
        c.extend(
            [
                self.psi_learned_mc,
                self.psi_learned_exact,
                self.psi_greedy_mc,
                self.psi_greedy_exact,
                self.psi_star,
            ]
            .map(fmt_real),
        );
        c.extend(self.accepted.map(|a| a.to_string()));
        c.extend(self.greedy_accepted.map(|a| a.to_string()));
        c.push(fmt_real(self.avg_energy));
        c.push(fmt_real(self.greedy_avg_energy));
        c
    }
}

type Metric = (&'static str, fn(&ResultRow) -> f64);

const SUMMARY_METRICS: [Metric; 11] = [
    ("psi_learned_mc", |r| r.psi_learned_mc),
    ("psi_learned_exact", |r| r.psi_learned_exact),
    ("psi_greedy_mc", |r| r.psi_greedy_mc),
    ("psi_greedy_exact", |r| r.psi_greedy_exact),
    ("psi_star", |r| r.psi_star),
    ("accepted_total", |r| r.total_accepted() as f64),
    ("greedy_accepted_total", |r| {
        r.greedy_total_accepted() as f64
    }),
    ("avg_energy", |r| r.avg_energy),
    ("greedy_avg_energy", |r| r.greedy_avg_energy),
    ("psi_gap", |r| r.psi_learned_exact - r.psi_greedy_exact),
    ("advantage_ratio", |r| {
        r.psi_learned_exact / r.psi_greedy_exact
    }),
];

/// Seed-aggregated statistics at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: Option<f64>,
    pub n_seeds: usize,
    /// One entry per summary metric, in column order.
    pub metrics: Vec<(&'static str, MeanEstimate)>,
}

impl SummaryRow {
    pub fn get(&self, name: &str) -> Option<MeanEstimate> {
        self.metrics
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| *m)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn rows_at(&self, value: f64) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(move |r| r.sweep_value == Some(value))
    }

    pub fn summary_at(&self, value: Option<f64>) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.sweep_value == value)
    }
}

/// Per-value quantities shared by every seed.
struct Reference {
    params: ModelParams,
    greedy_exact: f64,
    optimal: OptimalPolicy,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_table(table: &Table, path: &Path) -> Result<(), HarnessError> {
    table.write_to(path).map_err(io_err(path))
}

fn file_tag(value: Option<f64>, seed: Option<u64>) -> String {
    let mut tag = String::new();
    if let Some(v) = value {
        tag.push_str(&format!("_value{v}"));
    }
    if let Some(s) = seed {
        tag.push_str(&format!("_seed{s}"));
    }
    tag
}

fn eval_config(sim: &SimConfig, seed: u64) -> SimConfig {
    SimConfig {
        seed: seed.wrapping_add(EVAL_SEED_OFFSET),
        ..*sim
    }
}

fn summarize(value: Option<f64>, rows: &[&ResultRow]) -> SummaryRow {
    let metrics = SUMMARY_METRICS
        .iter()
        .map(|(name, f)| {
            let samples: Vec<f64> = rows.iter().map(|r| f(r)).collect();
            (*name, MeanEstimate::from_samples(&samples))
        })
        .collect();
    SummaryRow {
        sweep_value: value,
        n_seeds: rows.len(),
        metrics,
    }
}

fn summary_table(summary: &[SummaryRow]) -> Table {
    let mut header = vec!["sweep_value".to_owned(), "n_seeds".to_owned()];
    for (name, _) in SUMMARY_METRICS {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_se"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for s in summary {
        let mut row = vec![
            s.sweep_value.map(fmt_real).unwrap_or_default(),
            s.n_seeds.to_string(),
        ];
        for (_, m) in &s.metrics {
            row.push(fmt_real(m.mean));
            row.push(fmt_real(m.std_error));
        }
        t.push_raw(row);
    }
    t
}

fn metadata_text(config: &ExperimentConfig) -> String {
    format!(
        "rng = {RNG_ID}\nexperiment = {:?}\nschedule = {:?}\nschedule_satisfies_robbins_monro = {}\neval_seed_offset = {EVAL_SEED_OFFSET}\n",
        config.experiment,
        config.learn.schedule,
        config.learn.schedule.satisfies_robbins_monro()
    )
}

fn evaluate(
    sim: &SimConfig,
    policy: &PolicyKind,
    params: &ModelParams,
    keep_log: bool,
) -> (Metrics, Option<Vec<crate::simulator::TrajectoryStep>>) {
    let t = run_trajectory(sim, policy, params, keep_log);
    (t.metrics, t.steps)
}

/// Train (or, for single-eval, take the initial parameters), evaluate and
/// write the per-seed files of one work item.
fn run_item(
    config: &ExperimentConfig,
    reference: &Reference,
    value: Option<f64>,
    seed: u64,
) -> Result<ResultRow, HarnessError> {
    let params = &reference.params;
    let dir = &config.output_dir;
    let tag = file_tag(value, Some(seed));
    let slope = config.learn.slope;

    let theta = if config.experiment == ExperimentKind::SingleEval {
        config.learn.initial_theta
    } else {
        let learn = crate::learner::LearnConfig {
            seed,
            ..config.learn
        };
        let outcome: TrainOutcome = train(&learn, params)?;
        write_table(&outcome.trace_table(), &dir.join(format!("trace{tag}.csv")))?;
        outcome.final_state.theta
    };

    let learned = PolicyKind::Sigmoid(SigmoidPolicy::with_slope(theta, slope));
    write_table(
        &policy_table(&learned, params.battery_capacity),
        &dir.join(format!("policy{tag}.csv")),
    )?;

    let psi_learned_exact = exact_average_reward(&learned, params)?;
    if psi_learned_exact > reference.optimal.psi_star + OPTIMALITY_SLACK {
        return Err(HarnessError::Invariant(format!(
            "learned value {psi_learned_exact} exceeds optimum {} at seed {seed}",
            reference.optimal.psi_star
        )));
    }

    let sim = eval_config(&config.sim, seed);
    let (m_learned, steps) = evaluate(&sim, &learned, params, config.write_step_log);
    let (m_greedy, _) = evaluate(&sim, &PolicyKind::Greedy, params, false);
    if let Some(steps) = steps {
        let path = dir.join(format!("steps{tag}.csv"));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_step_log(std::io::BufWriter::new(file), &steps).map_err(io_err(&path))?;
    }

    Ok(ResultRow {
        sweep_value: value,
        seed,
        theta,
        thresholds: extract_thresholds(&theta, params.battery_capacity),
        psi_learned_mc: m_learned.average_reward,
        psi_learned_exact,
        psi_greedy_mc: m_greedy.average_reward,
        psi_greedy_exact: reference.greedy_exact,
        psi_star: reference.optimal.psi_star,
        accepted: m_learned.accepted,
        greedy_accepted: m_greedy.accepted,
        avg_energy: m_learned.average_energy,
        greedy_avg_energy: m_greedy.average_energy,
    })
}

/// Run whatever experiment the config names.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config_path = dir.join("effective_config.toml");
    fs::write(
        &config_path,
        format!("# rng: {RNG_ID}\n{}", config.to_toml()),
    )
    .map_err(io_err(&config_path))?;
    let meta_path = dir.join("metadata.txt");
    fs::write(&meta_path, metadata_text(config)).map_err(io_err(&meta_path))?;

    let values: Vec<Option<f64>> = if config.experiment.is_sweep() {
        config.grid().iter().map(|&v| Some(v)).collect()
    } else {
        vec![None]
    };

    let references: Vec<Reference> = values
        .par_iter()
        .map(|&v| -> Result<Reference, HarnessError> {
            let params = v.map_or(config.model, |v| config.params_for(v));
            let greedy_exact = exact_average_reward(&PolicyKind::Greedy, &params)?;
            let optimal = solve_optimal(&params)?;
            let path = dir.join(format!("optimal_policy{}.csv", file_tag(v, None)));
            write_table(&optimal_policy_table(&optimal), &path)?;
            Ok(Reference {
                params,
                greedy_exact,
                optimal,
            })
        })
        .collect::<Result<_, _>>()?;

    let items: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|i| config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let rows: Vec<ResultRow> = items
        .par_iter()
        .map(|&(i, seed)| run_item(config, &references[i], values[i], seed))
        .collect::<Result<_, _>>()?;

    let mut results = Table::new(&RESULTS_HEADER);
    for r in &rows {
        results.push_raw(r.cells());
    }
    write_table(&results, &dir.join("results.csv"))?;

    let summary: Vec<SummaryRow> = values
        .iter()
        .map(|&v| {
            let at: Vec<&ResultRow> = rows.iter().filter(|r| r.sweep_value == v).collect();
            summarize(v, &at)
        })
        .collect();
    write_table(&summary_table(&summary), &dir.join("summary.csv"))?;

    Ok(ExperimentReport {
        kind: config.experiment,
        output_dir: dir.clone(),
        rows,
        summary,
    })
}

fn run_kind(
    config: &ExperimentConfig,
    kind: ExperimentKind,
) -> Result<ExperimentReport, HarnessError> {
    let mut c = config.clone();
    if c.experiment != kind {
        c.experiment = kind;
        c.sweep = None;
    }
    run_experiment(&c.resolve()?)
}

pub fn run_convergence(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_kind(config, ExperimentKind::Convergence)
}

pub fn run_capacity_sweep(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_kind(config, ExperimentKind::CapacitySweep)
}

pub fn run_energy_rate_sweep(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_kind(config, ExperimentKind::EnergyRateSweep)
}

pub fn run_single_eval(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_kind(config, ExperimentKind::SingleEval)
}
