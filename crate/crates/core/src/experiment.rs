//! Seeded Monte Carlo experiments over parameter sweeps.
//!
//! An [`ExperimentSpec`] is usually read from a TOML file:
//!
//! ```toml
//! [scenario]
//! n_faps = 6
//! n_rrhs = 3
//! seed = 100          # trial t uses seed 100 + t
//!
//! [joint]
//! x_max = 30
//!
//! [experiment]
//! algorithms = ["joint", "oma"]
//! trials = 50
//! out_path = "out"
//! traces = true
//!
//! [experiment.sweep]
//! parameter = "n_faps"
//! values = [2, 4, 6, 8]
//! ```
//!
//! Every section and field is optional and falls back to its default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{exhaustive_search, fixed_power_baseline, oma_baseline, random_rb_baseline, OmaMode};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::joint::{joint_allocate, JointConfig, JointResult};
use crate::power::is_feasible;
use crate::scenario::{generate_scenario, ScenarioParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Joint,
    Exhaustive,
    Oma,
    FixedPower,
    RandomRb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Joint, Algorithm::Exhaustive, Algorithm::Oma, Algorithm::FixedPower, Algorithm::RandomRb];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Joint => "joint",
            Algorithm::Exhaustive => "exhaustive",
            Algorithm::Oma => "oma",
            Algorithm::FixedPower => "fixed_power",
            Algorithm::RandomRb => "random_rb",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Parses `joint,oma,...`.
pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Scenario parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NFaps,
    ZMax,
    NRrhs,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::NFaps => "n_faps",
            SweepParameter::ZMax => "z_max",
            SweepParameter::NRrhs => "n_rrhs",
        }
    }

    fn apply(self, params: &mut ScenarioParams, value: usize) {
        match self {
            SweepParameter::NFaps => params.n_faps = value,
            SweepParameter::ZMax => params.z_max = value,
            SweepParameter::NRrhs => params.n_rrhs = value,
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParameter::NFaps, SweepParameter::ZMax, SweepParameter::NRrhs]
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}` (expected n_faps, z_max or n_rrhs)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
}

impl FromStr for Sweep {
    type Err = Error;

    /// Parses `name=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, values) =
            s.split_once('=').ok_or_else(|| Error::Config(format!("sweep `{s}` is not of the form name=v1,v2,...")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|e| Error::Config(format!("sweep value `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let sweep = Sweep { parameter: name.parse()?, values };
        sweep.validate()?;
        Ok(sweep)
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.contains(&0) {
            return Err(Error::Config(format!("{} sweep values must be positive", self.parameter.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub algorithms: Vec<Algorithm>,
    pub sweep: Option<Sweep>,
    pub trials: usize,
    pub out_path: PathBuf,
    /// Power split used by `fixed_power`.
    pub fixed_alpha: [f64; 2],
    pub oma_mode: OmaMode,
    /// Write `traces.csv` with the outer iterations of every joint run.
    pub traces: bool,
    /// Report the running best instead of the raw rate in `traces.csv`.
    pub best_seen_traces: bool,
    /// Measure wall-clock runtimes; when off, `runtime_ms` is written as 0
    /// and repeated runs produce identical files.
    pub timing: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Joint],
            sweep: None,
            trials: 1,
            out_path: PathBuf::from("out"),
            fixed_alpha: [0.2, 0.8],
            oma_mode: OmaMode::default(),
            traces: false,
            best_seen_traces: false,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Base scenario; its seed is the seed of trial 0.
    pub scenario: ScenarioParams,
    pub joint: JointConfig,
    pub experiment: ExperimentSettings,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let ex = &self.experiment;
        if ex.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if ex.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if !is_feasible(ex.fixed_alpha) {
            return Err(Error::Config(format!("fixed_alpha {:?} is infeasible", ex.fixed_alpha)));
        }
        self.joint.validate()?;
        if let Some(sweep) = &ex.sweep {
            sweep.validate()?;
        }
        for value in self.sweep_values() {
            self.params_for(value, 0).validate()?;
        }
        Ok(())
    }

    /// Sweep values, or a single `None` when nothing is swept.
    pub fn sweep_values(&self) -> Vec<Option<usize>> {
        match &self.experiment.sweep {
            Some(sweep) => sweep.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    /// Scenario parameters of one cell.
    pub fn params_for(&self, sweep_value: Option<usize>, trial: usize) -> ScenarioParams {
        let mut p = self.scenario.clone();
        if let (Some(sweep), Some(v)) = (&self.experiment.sweep, sweep_value) {
            sweep.parameter.apply(&mut p, v);
        }
        p.seed = self.scenario.seed.wrapping_add(trial as u64);
        p
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: Option<usize>,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub weighted_sum_rate: Option<f64>,
    pub iterations_used: Option<usize>,
    pub runtime_ms: f64,
    pub feasible: bool,
    pub error: Option<String>,
}

/// One outer iteration of a joint run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep_value: Option<usize>,
    pub n_faps: usize,
    pub trial: usize,
    /// Counted from 1.
    pub outer_iteration: usize,
    pub weighted_sum_rate: f64,
}

/// Mean and standard error of one (sweep value, algorithm) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sweep_value: Option<usize>,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub errors: usize,
    pub mean_weighted_sum_rate: Option<f64>,
    pub stderr_weighted_sum_rate: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceRow>,
    pub summary: Vec<CellSummary>,
}

struct Cell {
    rows: Vec<ResultRow>,
    traces: Vec<TraceRow>,
}

fn run_algorithm(spec: &ExperimentSpec, algorithm: Algorithm, s: &crate::scenario::Scenario) -> Result<JointResult> {
    let ex = &spec.experiment;
    match algorithm {
        Algorithm::Joint => joint_allocate(s, &spec.joint),
        Algorithm::Exhaustive => exhaustive_search(s, &spec.joint.sca),
        Algorithm::Oma => Ok(oma_baseline(s, ex.oma_mode)),
        Algorithm::FixedPower => fixed_power_baseline(s, ex.fixed_alpha),
        Algorithm::RandomRb => random_rb_baseline(s, &spec.joint.sca, spec.joint.seed.wrapping_add(s.params().seed)),
    }
}

fn run_cell(spec: &ExperimentSpec, sweep_value: Option<usize>, trial: usize) -> Result<Cell> {
    let params = spec.params_for(sweep_value, trial);
    let s = generate_scenario(&params)?;
    let ex = &spec.experiment;
    let mut cell = Cell { rows: Vec::new(), traces: Vec::new() };
    for &algorithm in &ex.algorithms {
        let start = Instant::now();
        let outcome = run_algorithm(spec, algorithm, &s);
        let runtime_ms = if ex.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let row = match outcome {
            Ok(r) => {
                if algorithm == Algorithm::Joint && ex.traces {
                    let trace = if ex.best_seen_traces { r.best_seen_trace() } else { r.outer_trace.clone() };
                    cell.traces.extend(trace.into_iter().enumerate().map(|(k, rate)| TraceRow {
                        sweep_value,
                        n_faps: params.n_faps,
                        trial,
                        outer_iteration: k + 1,
                        weighted_sum_rate: rate,
                    }));
                }
                ResultRow {
                    sweep_value,
                    trial,
                    algorithm,
                    weighted_sum_rate: Some(r.weighted_sum_rate()),
                    iterations_used: Some(r.iterations_used),
                    runtime_ms,
                    feasible: r.is_feasible(&s),
                    error: None,
                }
            }
            Err(e @ Error::InstanceTooLarge { .. }) => ResultRow {
                sweep_value,
                trial,
                algorithm,
                weighted_sum_rate: None,
                iterations_used: None,
                runtime_ms,
                feasible: false,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        log::debug!("{} trial {trial} sweep {sweep_value:?}: {:?}", algorithm, row.weighted_sum_rate);
        cell.rows.push(row);
    }
    Ok(cell)
}

fn summarize(spec: &ExperimentSpec, rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for sweep_value in spec.sweep_values() {
        for &algorithm in &spec.experiment.algorithms {
            let cell: Vec<&ResultRow> =
                rows.iter().filter(|r| r.sweep_value == sweep_value && r.algorithm == algorithm).collect();
            let rates: Vec<f64> = cell.iter().filter_map(|r| r.weighted_sum_rate).collect();
            let iters: Vec<f64> = cell.iter().filter_map(|r| r.iterations_used.map(|k| k as f64)).collect();
            out.push(CellSummary {
                sweep_value,
                algorithm,
                trials: cell.len(),
                errors: cell.iter().filter(|r| r.error.is_some()).count(),
                mean_weighted_sum_rate: mean(&rates),
                stderr_weighted_sum_rate: standard_error(&rates),
                mean_iterations: mean(&iters),
                feasible_fraction: cell.iter().filter(|r| r.feasible).count() as f64 / cell.len().max(1) as f64,
            });
        }
    }
    out
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation over `sqrt(n)`; zero for a single sample.
pub fn standard_error(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some((var / xs.len() as f64).sqrt())
}

/// Runs every (sweep value, trial) cell and collects rows in
/// (sweep value, trial, algorithm) order. Cells run in parallel.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let jobs: Vec<(Option<usize>, usize)> = spec
        .sweep_values()
        .into_iter()
        .flat_map(|v| (0..spec.experiment.trials).map(move |t| (v, t)))
        .collect();
    let cells = jobs.into_par_iter().map(|(v, t)| run_cell(spec, v, t)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for cell in cells {
        rows.extend(cell.rows);
        traces.extend(cell.traces);
    }
    let summary = summarize(spec, &rows);
    Ok(ExperimentOutput { rows, traces, summary })
}

/// Outer-iteration traces of the joint solver for every cell of `spec`.
pub fn emit_convergence_trace(spec: &ExperimentSpec) -> Result<Vec<TraceRow>> {
    if !spec.experiment.algorithms.contains(&Algorithm::Joint) {
        return Err(Error::Config("convergence traces need the joint algorithm".into()));
    }
    let mut only_joint = spec.clone();
    only_joint.experiment.algorithms = vec![Algorithm::Joint];
    only_joint.experiment.traces = true;
    Ok(run_experiment(&only_joint)?.traces)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn to_csv(header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in records {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

impl ExperimentOutput {
    pub fn results_csv(&self) -> String {
        to_csv(
            &["sweep_value", "trial", "algorithm", "weighted_sum_rate", "iterations_used", "runtime_ms", "feasible", "error"],
            self.rows.iter().map(|r| {
                vec![
                    opt(r.sweep_value),
                    r.trial.to_string(),
                    r.algorithm.to_string(),
                    opt(r.weighted_sum_rate.map(sig6)),
                    opt(r.iterations_used),
                    sig6(r.runtime_ms),
                    r.feasible.to_string(),
                    r.error.clone().unwrap_or_default(),
                ]
            }),
        )
    }

    pub fn traces_csv(&self) -> String {
        to_csv(
            &["n_faps", "sweep_value", "trial", "outer_iteration", "weighted_sum_rate"],
            self.traces.iter().map(|t| {
                vec![
                    t.n_faps.to_string(),
                    opt(t.sweep_value),
                    t.trial.to_string(),
                    t.outer_iteration.to_string(),
                    sig6(t.weighted_sum_rate),
                ]
            }),
        )
    }

    pub fn summary_json(&self, spec: &ExperimentSpec) -> serde_json::Value {
        serde_json::json!({
            "sweep_parameter": spec.experiment.sweep.as_ref().map(|s| s.parameter.name()),
            "trials": spec.experiment.trials,
            "base_seed": spec.scenario.seed,
            "cells": self.summary,
        })
    }

    /// Writes `results.csv`, `summary.json` and, when traces were requested,
    /// `traces.csv` into `dir`, creating it if needed.
    pub fn write_to(&self, spec: &ExperimentSpec, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.results_csv())?;
        let summary = serde_json::to_string_pretty(&self.summary_json(spec)).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("summary.json"), summary + "\n")?;
        if spec.experiment.traces {
            std::fs::write(dir.join("traces.csv"), self.traces_csv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::default();
        spec.experiment.timing = false;
        spec
    }

    #[test]
    fn one_trial_one_row() {
        let out = run_experiment(&small_spec()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.rows[0].feasible);
        assert_eq!(out.results_csv().lines().count(), 2);
        assert!(out.traces.is_empty());
    }

    #[test]
    fn rows_follow_sweep_trial_algorithm_order() {
        let mut spec = small_spec();
        spec.experiment.algorithms = vec![Algorithm::Oma, Algorithm::Joint];
        spec.experiment.trials = 3;
        spec.experiment.sweep = Some("n_faps=2,4".parse().unwrap());
        let out = run_experiment(&spec).unwrap();
        let keys: Vec<(Option<usize>, usize, Algorithm)> =
            out.rows.iter().map(|r| (r.sweep_value, r.trial, r.algorithm)).collect();
        let mut expected = Vec::new();
        for v in [2, 4] {
            for t in 0..3 {
                expected.push((Some(v), t, Algorithm::Oma));
                expected.push((Some(v), t, Algorithm::Joint));
            }
        }
        assert_eq!(keys, expected);
        assert_eq!(out.summary.len(), 4);
        assert!(out.summary.iter().all(|c| c.trials == 3 && c.feasible_fraction == 1.0));
    }

    #[test]
    fn guard_breach_becomes_an_error_row() {
        let mut spec = small_spec();
        spec.scenario.n_faps = 12;
        spec.scenario.n_rrhs = 6;
        spec.experiment.algorithms = vec![Algorithm::Exhaustive, Algorithm::Oma];
        let out = run_experiment(&spec).unwrap();
        assert!(out.rows[0].error.as_deref().unwrap().contains("too large"));
        assert!(out.rows[0].weighted_sum_rate.is_none());
        assert!(out.rows[1].error.is_none());
        assert_eq!(out.summary[0].errors, 1);
        assert!(out.summary[0].mean_weighted_sum_rate.is_none());
        let csv = out.results_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with(",0,exhaustive,,,"));
    }

    #[test]
    fn traces_cover_every_outer_iteration() {
        let mut spec = small_spec();
        spec.experiment.trials = 2;
        spec.experiment.traces = true;
        spec.experiment.best_seen_traces = true;
        let out = run_experiment(&spec).unwrap();
        for row in &out.rows {
            let t: Vec<&TraceRow> = out.traces.iter().filter(|t| t.trial == row.trial).collect();
            assert_eq!(t.len(), row.iterations_used.unwrap());
            assert!(t.windows(2).all(|w| w[1].weighted_sum_rate >= w[0].weighted_sum_rate));
            assert_eq!(t.last().unwrap().weighted_sum_rate, row.weighted_sum_rate.unwrap());
        }
        assert_eq!(emit_convergence_trace(&spec).unwrap(), out.traces);
    }

    #[test]
    fn convergence_trace_requires_joint() {
        let mut spec = small_spec();
        spec.experiment.algorithms = vec![Algorithm::Oma];
        assert!(emit_convergence_trace(&spec).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = |f: fn(&mut ExperimentSpec)| {
            let mut spec = small_spec();
            f(&mut spec);
            spec.validate().is_err()
        };
        assert!(bad(|s| s.experiment.trials = 0));
        assert!(bad(|s| s.experiment.algorithms.clear()));
        assert!(bad(|s| s.experiment.fixed_alpha = [0.7, 0.7]));
        assert!(bad(|s| s.experiment.sweep = Some(Sweep { parameter: SweepParameter::ZMax, values: vec![] })));
        assert!(bad(|s| s.experiment.sweep = Some(Sweep { parameter: SweepParameter::ZMax, values: vec![0, 1] })));
        assert!(bad(|s| s.joint.x_max = 0));
        assert!(bad(|s| s.scenario.n_faps = 0));
    }

    #[test]
    fn parses_sweeps_and_algorithm_lists() {
        let s: Sweep = "z_max=1, 2,3".parse().unwrap();
        assert_eq!(s, Sweep { parameter: SweepParameter::ZMax, values: vec![1, 2, 3] });
        assert!("z_max".parse::<Sweep>().is_err());
        assert!("bandwidth=1".parse::<Sweep>().is_err());
        assert!("n_faps=2,x".parse::<Sweep>().is_err());
        assert_eq!(parse_algorithms("joint,random_rb").unwrap(), vec![Algorithm::Joint, Algorithm::RandomRb]);
        assert!(parse_algorithms("joint,magic").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            [scenario]
            n_faps = 4
            seed = 9
            [joint]
            x_max = 5
            [joint.sca]
            alpha_init = { fixed = [0.1, 0.9] }
            [experiment]
            algorithms = ["joint", "fixed_power"]
            trials = 3
            oma_mode = "time_sharing"
            [experiment.sweep]
            parameter = "n_rrhs"
            values = [1, 2]
        "#;
        let spec = ExperimentSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.scenario.n_faps, 4);
        assert_eq!(spec.joint.x_max, 5);
        assert_eq!(spec.experiment.oma_mode, OmaMode::TimeSharing);
        assert_eq!(spec.params_for(Some(2), 1).n_rrhs, 2);
        assert_eq!(spec.params_for(Some(2), 1).seed, 10);
        let again = ExperimentSpec::from_toml_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
        assert!(ExperimentSpec::from_toml_str("[experiment]\nbogus = 1").is_err());
    }

    #[test]
    fn standard_error_matches_hand_computation() {
        assert_eq!(standard_error(&[]), None);
        assert_eq!(standard_error(&[3.0]), Some(0.0));
        // sample sd of 1,2,3,4 is sqrt(5/3)
        let se = standard_error(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }
}
