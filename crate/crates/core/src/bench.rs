//! Replicated method comparisons: prediction-error metrics, experiment
//! configuration, CSV/JSON-lines output, timing summaries and the 2-D score
//! field scenarios.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion, ScoreSheet, DEFAULT_TAU_S};
use crate::error::{Error, Result};
use crate::gp::{Design, GpModel};
use crate::kernels::KernelSpec;
use crate::likelihood::MleConfig;
use crate::points::{format_f64, PointSet};
use crate::sampling::{latin_hypercube, maximin_lhd, minimax_lhd, regular_grid, snap_to, CandidatePool};
use crate::seed;
use crate::seq_design::{
    run_one_shot, run_sequential, HyperSpec, OneShot, PoolSpec, RunRecord, SequentialConfig, Validation,
    DEFAULT_NUGGET, ONE_SHOT_POOL,
};
use crate::testbed::{Objective, ObjectiveName, GRF_LENGTHSCALES};

/// Design sizes of the one-shot comparisons.
pub const ONE_SHOT_SIZES: [usize; 4] = [50, 75, 100, 120];

/// Prediction error over a validation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmspe: f64,
    /// RMSPE divided by the range of the true outputs.
    pub rmspe_normalized: f64,
    pub max_abs_error: f64,
}

fn check_lengths(predictions: &[f64], truths: &[f64]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: truths.len() });
    }
    if truths.is_empty() {
        return Err(Error::InvalidParameter("no validation points".into()));
    }
    Ok(())
}

/// Root mean squared prediction error.
pub fn rmspe(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    let ss: f64 = predictions.iter().zip(truths).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok((ss / truths.len() as f64).sqrt())
}

/// RMSPE divided by max − min of the truths.
pub fn normalized_rmspe(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    let r = rmspe(predictions, truths)?;
    let (lo, hi) = truths.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(*t), hi.max(*t)));
    if hi - lo <= 0.0 {
        return Err(Error::ZeroOutputRange);
    }
    Ok(r / (hi - lo))
}

pub fn prediction_metrics(predictions: &[f64], truths: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        rmspe: rmspe(predictions, truths)?,
        rmspe_normalized: normalized_rmspe(predictions, truths)?,
        max_abs_error: predictions.iter().zip(truths).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max),
    })
}

/// What an experiment arm runs.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    Sequential { criterion: Criterion, n_cand: usize, tau_s: Option<f64>, lengthscales: Option<Vec<f64>> },
    OneShot(OneShot),
}

/// One arm, e.g. `mice-150`, `mice-150:tau_s=0.1`, `mi-441:ell=1/1`,
/// `random-150` or `lhd-maximin`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub kind: MethodKind,
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let label = s.trim().to_string();
        let mut parts = label.split(':');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let kind = match head.as_str() {
            "lhd-maximin" | "mmlhd" => MethodKind::OneShot(OneShot::MmLhd),
            "lhd-minimax" | "mmlhd-minimax" => MethodKind::OneShot(OneShot::MMLhd),
            _ => {
                let (name, n) = head
                    .rsplit_once('-')
                    .ok_or_else(|| Error::Config(format!("method '{s}' needs a candidate count, e.g. mice-150")))?;
                let criterion: Criterion = name.parse()?;
                let n_cand: usize =
                    n.parse().map_err(|_| Error::Config(format!("bad candidate count in method '{s}'")))?;
                if n_cand == 0 {
                    return Err(Error::Config(format!("method '{s}' needs at least one candidate")));
                }
                let mut tau_s = None;
                let mut lengthscales = None;
                for opt in parts.by_ref() {
                    let (k, v) =
                        opt.split_once('=').ok_or_else(|| Error::Config(format!("bad option '{opt}' in '{s}'")))?;
                    match k {
                        "tau_s" => tau_s = Some(v.parse().map_err(|_| Error::Config(format!("bad tau_s in '{s}'")))?),
                        "ell" => {
                            let ell = v
                                .split('/')
                                .map(str::parse)
                                .collect::<std::result::Result<Vec<f64>, _>>()
                                .map_err(|_| Error::Config(format!("bad lengthscales in '{s}'")))?;
                            lengthscales = Some(ell);
                        }
                        _ => return Err(Error::Config(format!("unknown option '{k}' in '{s}'"))),
                    }
                }
                return Ok(MethodSpec {
                    label,
                    kind: MethodKind::Sequential { criterion, n_cand, tau_s, lengthscales },
                });
            }
        };
        if parts.next().is_some() {
            return Err(Error::Config(format!("one-shot method '{s}' takes no options")));
        }
        Ok(MethodSpec { label, kind })
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<MethodSpec>> {
    let methods = list.split(',').filter(|m| !m.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    Ok(methods)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveName,
    pub methods: Vec<MethodSpec>,
    pub replicates: usize,
    /// Final design size N.
    pub budget: usize,
    pub tau_s: f64,
    pub nugget: f64,
    pub mle_budget: usize,
    pub mle_every: usize,
    pub seed: u64,
    pub validation_size: usize,
    pub checkpoints: Vec<usize>,
    /// LHDs considered per step when building fresh candidate pools.
    pub lhd_pool: usize,
}

/// Every 5 points up to `budget`, plus the one-shot sizes and `budget` itself.
pub fn default_checkpoints(budget: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (1..=budget / 5).map(|i| 5 * i).chain(ONE_SHOT_SIZES).chain([budget]).collect();
    c.retain(|n| *n <= budget);
    c.sort_unstable();
    c.dedup();
    c
}

impl ExperimentConfig {
    pub fn new(objective: ObjectiveName, methods: Vec<MethodSpec>) -> Self {
        let budget = match objective {
            ObjectiveName::Grf2d => 30,
            ObjectiveName::Branin => 60,
            _ => 150,
        };
        ExperimentConfig {
            objective,
            methods,
            replicates: 10,
            budget,
            tau_s: DEFAULT_TAU_S,
            nugget: DEFAULT_NUGGET,
            mle_budget: 1024,
            mle_every: 1,
            seed: 1,
            validation_size: 1000,
            checkpoints: default_checkpoints(budget),
            lhd_pool: 100,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self.checkpoints = default_checkpoints(budget);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.budget < 3 {
            return Err(Error::Config("budget must be at least 3".into()));
        }
        if let Some(c) = self.checkpoints.iter().find(|c| **c > self.budget) {
            return Err(Error::Config(format!("checkpoint {c} exceeds the budget {}", self.budget)));
        }
        if !(self.tau_s > 0.0) || !(self.nugget >= 0.0) {
            return Err(Error::Config("tau_s must be > 0 and nugget >= 0".into()));
        }
        if self.mle_every == 0 || self.mle_budget < 2 {
            return Err(Error::Config("mle_every must be >= 1 and mle_budget >= 2".into()));
        }
        if self.validation_size == 0 {
            return Err(Error::Config("validation size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One checkpoint of one arm in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub replicate: usize,
    pub n: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct ArmRun {
    pub method: String,
    pub replicate: usize,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub replicate: usize,
    pub error: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    /// Sorted by (method, replicate, n).
    pub rows: Vec<ResultRow>,
    pub runs: Vec<ArmRun>,
    pub failures: Vec<Failure>,
}

impl ExperimentResult {
    /// Mean normalized RMSPE of `method` at design size `n` over the
    /// replicates that reached it.
    pub fn mean_rmspe(&self, method: &str, n: usize) -> Option<f64> {
        let v: Vec<f64> =
            self.rows.iter().filter(|r| r.method == method && r.n == n).map(|r| r.metrics.rmspe_normalized).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn runs_of<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ArmRun> + 'a {
        self.runs.iter().filter(move |r| r.method == method)
    }
}

/// Everything fixed per objective: simulator, kernel family, pools and
/// validation policy.
struct Setup {
    objective: Objective,
    kernel: KernelSpec,
    known_lengthscales: Option<Vec<f64>>,
    fixed_grid: Option<(PointSet, PointSet)>,
    fixed_validation: Option<PointSet>,
}

fn grf_subgrid(grid: &PointSet) -> (PointSet, PointSet) {
    let step = 1.0 / 20.0;
    let on_sub = |x: &[f64]| x.iter().all(|v| ((v / step).round() as i64) % 2 == 0);
    let (mut sub, mut rest) = (PointSet::new(2), PointSet::new(2));
    for x in grid.iter() {
        if on_sub(x) { sub.push(x) } else { rest.push(x) }.expect("2-D points");
    }
    (sub, rest)
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    let objective = Objective::by_name(config.objective, seed::derive(config.seed, &[u64::MAX]))?;
    let p = objective.dim();
    Ok(match config.objective {
        ObjectiveName::Grf2d => {
            let grid = objective.lookup_grid().expect("lookup objective").clone();
            let (sub, rest) = grf_subgrid(&grid);
            Setup {
                objective,
                kernel: KernelSpec::squared_exponential(GRF_LENGTHSCALES.to_vec())?,
                known_lengthscales: Some(GRF_LENGTHSCALES.to_vec()),
                fixed_grid: Some((sub.clone(), sub)),
                fixed_validation: Some(rest),
            }
        }
        ObjectiveName::Branin => {
            let grid = regular_grid(2, 21)?;
            Setup {
                objective,
                kernel: KernelSpec::matern52(vec![1.0; 2])?,
                known_lengthscales: None,
                fixed_grid: Some((grid.clone(), grid)),
                fixed_validation: None,
            }
        }
        _ => Setup {
            objective,
            kernel: KernelSpec::matern52(vec![1.0; p])?,
            known_lengthscales: None,
            fixed_grid: None,
            fixed_validation: None,
        },
    })
}

fn evaluate_objective(objective: &Objective) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x: &[f64]| objective.eval_scaled(x)
}

struct Replicate {
    initial: PointSet,
    validation: Validation,
}

fn replicate_inputs(config: &ExperimentConfig, setup: &Setup, rep: usize) -> Result<Replicate> {
    let p = setup.objective.dim();
    let f = evaluate_objective(&setup.objective);
    let mut initial = minimax_lhd(2, p, ONE_SHOT_POOL, ONE_SHOT_POOL, seed::derive(config.seed, &[rep as u64, 0]))?;
    if let Some((_, candidates)) = &setup.fixed_grid {
        initial = snap_to(&initial, candidates);
    }
    let points = match &setup.fixed_validation {
        Some(v) => v.clone(),
        None => latin_hypercube(config.validation_size, p, seed::derive(config.seed, &[rep as u64, 1])),
    };
    Ok(Replicate { initial, validation: Validation::evaluate(points, &f)? })
}

fn sequential_config(
    config: &ExperimentConfig,
    setup: &Setup,
    rep: usize,
    method: &MethodSpec,
    validation: &Validation,
) -> SequentialConfig {
    let p = setup.objective.dim();
    let (criterion, pool, tau_s, ell) = match &method.kind {
        MethodKind::Sequential { criterion, n_cand, tau_s, lengthscales } => {
            let pool = match &setup.fixed_grid {
                Some((grid, cands)) => {
                    PoolSpec::Fixed { grid: grid.clone(), candidates: cands.clone(), reference: cands.clone() }
                }
                None => PoolSpec::Fresh { n_grid: *n_cand, n_cand: *n_cand, n_ref: *n_cand, lhd_pool: config.lhd_pool },
            };
            (*criterion, pool, tau_s.unwrap_or(config.tau_s), lengthscales.clone())
        }
        MethodKind::OneShot(_) => (Criterion::Random, PoolSpec::fresh(1), config.tau_s, None),
    };
    let hyper = match ell.or_else(|| setup.known_lengthscales.clone()) {
        Some(ell) => HyperSpec::Fixed(ell),
        None => {
            let mut mle = MleConfig::for_dim(p, seed::derive(config.seed, &[rep as u64, 3]));
            mle.budget = config.mle_budget;
            mle.population = mle.population.min(config.mle_budget);
            mle.update_schedule = config.mle_every;
            HyperSpec::Estimate(mle)
        }
    };
    SequentialConfig {
        criterion,
        budget: config.budget,
        pool,
        nugget: config.nugget,
        tau_s,
        kernel: setup.kernel.clone(),
        hyper,
        input_bounds: setup.objective.natural_bounds().to_vec(),
        checkpoints: config.checkpoints.clone(),
        validation: Some(validation.clone()),
        // Arms of one replicate share their random streams.
        seed: seed::derive(config.seed, &[rep as u64, 2]),
    }
}

type JobOutcome = (usize, usize, std::result::Result<RunRecord, Error>, Option<RunRecord>);

/// Runs every arm on every replicate. Arms of a replicate start from the
/// same initial design and are scored on the same validation set. A failing
/// arm is recorded and the others continue.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let setup = setup(config)?;
    let reps = (0..config.replicates).map(|r| replicate_inputs(config, &setup, r)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.replicates).flat_map(|r| (0..config.methods.len()).map(move |m| (r, m))).collect();
    let f = evaluate_objective(&setup.objective);
    let outcomes: Vec<JobOutcome> = jobs
        .par_iter()
        .map(|&(r, m)| {
            let method = &config.methods[m];
            let rep = &reps[r];
            let sc = sequential_config(config, &setup, r, method, &rep.validation);
            log::info!("replicate {r}: running {}", method.label);
            match &method.kind {
                MethodKind::OneShot(kind) => {
                    let sizes: Vec<usize> = ONE_SHOT_SIZES.iter().copied().filter(|n| *n <= config.budget).collect();
                    let mut sc = sc;
                    sc.seed = seed::derive(config.seed, &[r as u64, 4, m as u64]);
                    (r, m, run_one_shot(&f, *kind, &sizes, &sc), None)
                }
                MethodKind::Sequential { .. } => match run_sequential(&f, &sc, &rep.initial) {
                    Ok(rec) => (r, m, Ok(rec), None),
                    Err(a) => (r, m, Err(a.source), Some(*a.partial)),
                },
            }
        })
        .collect();

    let mut result = ExperimentResult::default();
    for (r, m, outcome, partial) in outcomes {
        let label = config.methods[m].label.clone();
        let record = match outcome {
            Ok(rec) => Some(rec),
            Err(e) => {
                log::error!("replicate {r}, method {label} failed: {e}");
                result.failures.push(Failure {
                    method: label.clone(),
                    replicate: r,
                    error: e.to_string(),
                    numerical: e.is_numerical(),
                });
                partial
            }
        };
        if let Some(record) = record {
            for c in &record.checkpoints {
                result.rows.push(ResultRow { method: label.clone(), replicate: r, n: c.n, metrics: c.metrics });
            }
            result.runs.push(ArmRun { method: label, replicate: r, record });
        }
    }
    result.rows.sort_by(|a, b| (&a.method, a.replicate, a.n).cmp(&(&b.method, b.replicate, b.n)));
    result.runs.sort_by(|a, b| (&a.method, a.replicate).cmp(&(&b.method, b.replicate)));
    result.failures.sort_by(|a, b| (&a.method, a.replicate).cmp(&(&b.method, b.replicate)));
    Ok(result)
}

/// Writes the per-checkpoint results; contains no timings, so identical
/// configurations give byte-identical files.
pub fn write_results_csv<W: Write>(result: &ExperimentResult, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["method", "replicate", "n", "rmspe", "rmspe_normalized", "max_abs_error"])?;
    for r in &result.rows {
        wtr.write_record([
            r.method.clone(),
            r.replicate.to_string(),
            r.n.to_string(),
            format_f64(r.metrics.rmspe),
            format_f64(r.metrics.rmspe_normalized),
            format_f64(r.metrics.max_abs_error),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Replicate means and standard errors of the normalized RMSPE.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, w: W) -> Result<()> {
    let mut groups: BTreeMap<(&str, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in &result.rows {
        groups.entry((r.method.as_str(), r.n)).or_default().push(r);
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "method",
        "n",
        "replicates",
        "mean_rmspe_normalized",
        "se_rmspe_normalized",
        "mean_max_abs_error",
    ])?;
    for ((method, n), rows) in groups {
        let m = rows.len() as f64;
        let vals: Vec<f64> = rows.iter().map(|r| r.metrics.rmspe_normalized).collect();
        let mean = vals.iter().sum::<f64>() / m;
        let se = if rows.len() > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        let max_err = rows.iter().map(|r| r.metrics.max_abs_error).sum::<f64>() / m;
        wtr.write_record([
            method.to_string(),
            n.to_string(),
            rows.len().to_string(),
            format_f64(mean),
            format_f64(se),
            format_f64(max_err),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per sequential step: replicate, method, k, x1..xp, y, score,
/// rmspe_if_evaluated, t_mle_ms, t_cand_ms, t_select_ms.
pub fn write_trajectory_csv<W: Write>(result: &ExperimentResult, dim: usize, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["replicate", "method", "k"].map(String::from).to_vec();
    header.extend((1..=dim).map(|d| format!("x{d}")));
    header.extend(["y", "score", "rmspe_if_evaluated", "t_mle_ms", "t_cand_ms", "t_select_ms"].map(String::from));
    wtr.write_record(&header)?;
    for run in &result.runs {
        for s in &run.record.steps {
            let mut rec = vec![run.replicate.to_string(), run.method.clone(), s.k.to_string()];
            rec.extend(s.point.iter().map(|v| format_f64(*v)));
            rec.push(format_f64(s.y));
            rec.push(format_f64(s.score));
            rec.push(run.record.checkpoint(s.k).map(|c| format_f64(c.metrics.rmspe_normalized)).unwrap_or_default());
            rec.extend([s.t_mle_ms, s.t_cand_ms, s.t_select_ms].map(format_f64));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One JSON object per step, tagged with method and replicate.
pub fn write_trajectory_jsonl<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        method: &'a str,
        replicate: usize,
        #[serde(flatten)]
        step: &'a crate::seq_design::StepRecord,
    }
    for run in &result.runs {
        for step in &run.record.steps {
            serde_json::to_writer(&mut w, &Line { method: &run.method, replicate: run.replicate, step })?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub runs: usize,
    /// Cumulative per-run means, milliseconds.
    pub t_mle_ms: f64,
    pub t_cand_ms: f64,
    pub t_select_ms: f64,
    pub t_total_ms: f64,
    /// Slope of log T_select against log k over the steps in the fit window.
    pub select_growth_exponent: Option<f64>,
}

/// Least-squares slope of log t against log k over steps with
/// k_min ≤ k ≤ k_max and t > 0.
pub fn growth_exponent(ks: &[usize], ts: &[f64], k_min: usize, k_max: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(ts)
        .filter(|(k, t)| **k >= k_min && **k <= k_max && **t > 0.0 && **k > 0)
        .map(|(k, t)| ((*k as f64).ln(), t.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-method cumulative cost buckets (means over runs) and the growth
/// exponent of the per-step selection time, pooled over runs, for k in
/// [k_min, k_max].
pub fn timing_report(runs: &[ArmRun], k_min: usize, k_max: usize) -> Vec<TimingRow> {
    let mut by_method: BTreeMap<&str, Vec<&ArmRun>> = BTreeMap::new();
    for r in runs {
        if !r.record.steps.is_empty() {
            by_method.entry(r.method.as_str()).or_default().push(r);
        }
    }
    by_method
        .into_iter()
        .map(|(method, rs)| {
            let m = rs.len() as f64;
            let sum = |f: fn(&crate::seq_design::StepRecord) -> f64| {
                rs.iter().map(|r| r.record.steps.iter().map(f).sum::<f64>()).sum::<f64>() / m
            };
            let (t_mle, t_cand, t_select) = (sum(|s| s.t_mle_ms), sum(|s| s.t_cand_ms), sum(|s| s.t_select_ms));
            let ks: Vec<usize> = rs.iter().flat_map(|r| r.record.steps.iter().map(|s| s.k)).collect();
            let ts: Vec<f64> = rs.iter().flat_map(|r| r.record.steps.iter().map(|s| s.t_select_ms)).collect();
            TimingRow {
                method: method.to_string(),
                runs: rs.len(),
                t_mle_ms: t_mle,
                t_cand_ms: t_cand,
                t_select_ms: t_select,
                t_total_ms: t_mle + t_cand + t_select,
                select_growth_exponent: growth_exponent(&ks, &ts, k_min, k_max),
            }
        })
        .collect()
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "method",
        "runs",
        "t_mle_ms",
        "t_cand_ms",
        "t_select_ms",
        "t_total_ms",
        "select_growth_exponent",
    ])?;
    for r in rows {
        wtr.write_record([
            r.method.clone(),
            r.runs.to_string(),
            format_f64(r.t_mle_ms),
            format_f64(r.t_cand_ms),
            format_f64(r.t_select_ms),
            format_f64(r.t_total_ms),
            r.select_growth_exponent.map(format_f64).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes results.csv, summary.csv, failures.csv, timing.csv,
/// trajectory.csv and trajectory.jsonl into `dir`.
pub fn write_outputs(result: &ExperimentResult, dim: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results_csv(result, fs::File::create(dir.join("results.csv"))?)?;
    write_summary_csv(result, fs::File::create(dir.join("summary.csv"))?)?;
    let mut wtr = csv::Writer::from_writer(fs::File::create(dir.join("failures.csv"))?);
    wtr.write_record(["method", "replicate", "numerical", "error"])?;
    for f in &result.failures {
        wtr.write_record([f.method.clone(), f.replicate.to_string(), f.numerical.to_string(), f.error.clone()])?;
    }
    wtr.flush()?;
    write_timing_csv(&timing_report(&result.runs, 1, usize::MAX), fs::File::create(dir.join("timing.csv"))?)?;
    write_trajectory_csv(result, dim, fs::File::create(dir.join("trajectory.csv"))?)?;
    write_trajectory_jsonl(result, std::io::BufWriter::new(fs::File::create(dir.join("trajectory.jsonl"))?))?;
    Ok(())
}

/// The 2-D score-field scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldScenario {
    /// 7×7 equidistant grid.
    Grid7,
    /// The 7×7 grid plus the point (2/3, 0.15).
    Grid7Cluster,
    /// First of two maximin LHDs of 100 points, given a fixed 5-point design.
    Lhd100A,
    /// Second of the two maximin LHDs.
    Lhd100B,
}

impl FromStr for FieldScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid7" => Ok(FieldScenario::Grid7),
            "grid7-cluster" => Ok(FieldScenario::Grid7Cluster),
            "lhd100-a" => Ok(FieldScenario::Lhd100A),
            "lhd100-b" => Ok(FieldScenario::Lhd100B),
            _ => Err(Error::Config(format!(
                "unknown score-field scenario '{s}' (grid7, grid7-cluster, lhd100-a, lhd100-b)"
            ))),
        }
    }
}

/// The clustered extra discretization point.
pub const CLUSTER_POINT: [f64; 2] = [2.0 / 3.0, 0.15];

/// Design, kernel and discretization of a score-field scenario. The
/// discretization doubles as the candidate set.
pub fn field_scenario(scenario: FieldScenario, nugget: f64) -> Result<(GpModel, CandidatePool)> {
    let (design_pts, grid) = match scenario {
        FieldScenario::Grid7 | FieldScenario::Grid7Cluster => {
            let mut grid = regular_grid(2, 7)?;
            if scenario == FieldScenario::Grid7Cluster {
                grid.push(&CLUSTER_POINT)?;
            }
            (PointSet::from_rows(2, &[[0.3, 0.6], [0.7, 0.4]])?, grid)
        }
        FieldScenario::Lhd100A | FieldScenario::Lhd100B => {
            let which = u64::from(scenario == FieldScenario::Lhd100B);
            (maximin_lhd(5, 2, ONE_SHOT_POOL, 5)?, maximin_lhd(100, 2, 100, seed::derive(100, &[which]))?)
        }
    };
    let ys: Vec<f64> = design_pts.iter().map(|x| (4.0 * x[0]).sin() + x[1]).collect();
    let design = Design::from_data(&design_pts, &ys)?;
    let kernel = KernelSpec::matern52(vec![0.4, 1.0])?.with_nugget(nugget)?;
    let model = GpModel::fit(&design, &kernel)?;
    let pool = CandidatePool::from_parts(design.inputs(), &grid, &grid, PointSet::new(2))?;
    Ok((model, pool))
}

/// Per-candidate scores of `criterion` for a 2-D scenario, including the raw
/// values of excluded candidates.
pub fn score_field_dump(scenario: FieldScenario, criterion: Criterion, nugget: f64, tau_s: f64) -> Result<ScoreSheet> {
    let (model, pool) = field_scenario(scenario, nugget)?;
    if model.design().dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: model.design().dim() });
    }
    let pool = if criterion == Criterion::Alc {
        let c = pool.candidates().clone();
        CandidatePool::from_parts(model.design().inputs(), pool.grid(), &c, c.clone())?
    } else {
        pool
    };
    criteria::score(criterion, &model, &pool, tau_s, &mut seed::stream(0, &[]))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmspe_examples() {
        assert_eq!(rmspe(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(rmspe(&[1.5, 2.5, 0.5], &[1.0, 2.0, 0.0]).unwrap(), 0.5);
        assert_relative_eq!(rmspe(&[1.0, 2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(), 3f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(normalized_rmspe(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::ZeroOutputRange)));
        assert!(matches!(rmspe(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn method_parsing() {
        let m: MethodSpec = "mice-150:tau_s=0.1".parse().unwrap();
        assert_eq!(
            m.kind,
            MethodKind::Sequential { criterion: Criterion::Mice, n_cand: 150, tau_s: Some(0.1), lengthscales: None }
        );
        let m: MethodSpec = "mi-441:ell=1/1".parse().unwrap();
        assert!(matches!(m.kind, MethodKind::Sequential { lengthscales: Some(ref l), .. } if l == &[1.0, 1.0]));
        assert_eq!("lhd-minimax".parse::<MethodSpec>().unwrap().kind, MethodKind::OneShot(OneShot::MMLhd));
        assert!("mice".parse::<MethodSpec>().is_err());
        assert!("mice-0".parse::<MethodSpec>().is_err());
        assert!("alm-10:foo=1".parse::<MethodSpec>().is_err());
        assert_eq!(parse_methods("alm-10, random-10").unwrap().len(), 2);
    }

    #[test]
    fn checkpoints_include_one_shot_sizes() {
        let c = default_checkpoints(120);
        assert!(ONE_SHOT_SIZES.iter().all(|n| c.contains(n)));
        assert_eq!(default_checkpoints(12), vec![5, 10, 12]);
    }

    #[test]
    fn growth_exponent_of_power_law() {
        let ks: Vec<usize> = (10..60).collect();
        let ts: Vec<f64> = ks.iter().map(|k| 3.0 * (*k as f64).powi(2)).collect();
        assert_relative_eq!(growth_exponent(&ks, &ts, 0, 100).unwrap(), 2.0, epsilon = 1e-12);
        assert!(growth_exponent(&[5], &[1.0], 0, 10).is_none());
    }

    #[test]
    fn key_value_files() {
        let kv = parse_key_values("# comment\nobjective = branin\nmle_every=5 # trailing\n\n").unwrap();
        assert_eq!(kv["objective"], "branin");
        assert_eq!(kv["mle-every"], "5");
        assert!(parse_key_values("oops").is_err());
    }

    #[test]
    fn grf_subgrid_split() {
        let (sub, rest) = grf_subgrid(&regular_grid(2, 21).unwrap());
        assert_eq!(sub.len(), 121);
        assert_eq!(rest.len(), 320);
    }
}
