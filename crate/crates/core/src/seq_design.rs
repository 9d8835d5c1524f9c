//! The sequential design loop and the one-shot LHD baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bench::{prediction_metrics, Metrics};
use crate::criteria::{self, Criterion};
use crate::error::{Error, Result};
use crate::gp::{Design, GpModel};
use crate::kernels::KernelSpec;
use crate::likelihood::{maximize_likelihood, should_update, tentative_lengthscales, MleConfig};
use crate::points::PointSet;
use crate::sampling::{candidate_pool_for_step, maximin_lhd, minimax_lhd, CandidatePool};
use crate::seed;

/// A simulator on the scaled unit cube.
pub type ObjectiveFn<'a> = &'a (dyn Fn(&[f64]) -> Result<f64> + Sync);

/// Default nugget of the emulator.
pub const DEFAULT_NUGGET: f64 = 1e-8;

/// Pool size used by the one-shot LHD selectors and the minimax reference set.
pub const ONE_SHOT_POOL: usize = 1000;

/// Where each step's candidates come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolSpec {
    /// A new maximin-to-design LHD of `n_grid` points every step.
    Fresh { n_grid: usize, n_cand: usize, n_ref: usize, lhd_pool: usize },
    /// The same discretization, candidates and references at every step.
    Fixed { grid: PointSet, candidates: PointSet, reference: PointSet },
}

impl PoolSpec {
    /// N_G = N_cand, N_ref = N_cand, 100 LHDs per step.
    pub fn fresh(n_cand: usize) -> Self {
        PoolSpec::Fresh { n_grid: n_cand, n_cand, n_ref: n_cand, lhd_pool: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperSpec {
    /// Known lengthscales, never re-estimated.
    Fixed(Vec<f64>),
    Estimate(MleConfig),
}

/// Held-out points (scaled) and their true outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub points: PointSet,
    pub truths: Vec<f64>,
}

impl Validation {
    pub fn evaluate(points: PointSet, objective: ObjectiveFn<'_>) -> Result<Self> {
        let truths = points.iter().map(objective).collect::<Result<Vec<_>>>()?;
        Ok(Validation { points, truths })
    }
}

#[derive(Debug, Clone)]
pub struct SequentialConfig {
    pub criterion: Criterion,
    /// Final design size N.
    pub budget: usize,
    pub pool: PoolSpec,
    /// Emulator nugget τ².
    pub nugget: f64,
    /// MICE smoothing nugget τ²_s.
    pub tau_s: f64,
    /// Correlation family and smoothness; lengthscales are replaced.
    pub kernel: KernelSpec,
    pub hyper: HyperSpec,
    /// Natural-unit bounds of the inputs, for the design record.
    pub input_bounds: Vec<(f64, f64)>,
    /// Design sizes at which prediction error is measured.
    pub checkpoints: Vec<usize>,
    pub validation: Option<Validation>,
    pub seed: u64,
}

impl SequentialConfig {
    fn validate(&self, initial: usize) -> Result<()> {
        if self.budget <= initial {
            return Err(Error::Config(format!("budget {} must exceed the initial design size {initial}", self.budget)));
        }
        if let PoolSpec::Fresh { n_grid, n_cand, .. } = self.pool {
            if n_cand == 0 || n_cand > n_grid {
                return Err(Error::Config(format!("need 1 <= N_cand <= N_G, got {n_cand} and {n_grid}")));
            }
        }
        if let HyperSpec::Estimate(m) = &self.hyper {
            m.validate()?;
        }
        if self.input_bounds.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch { expected: self.kernel.dim(), got: self.input_bounds.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Design size before this step's point was added.
    pub k: usize,
    pub point: Vec<f64>,
    pub y: f64,
    pub score: f64,
    pub xi_hat: Vec<f64>,
    pub excluded: usize,
    pub t_mle_ms: f64,
    pub t_cand_ms: f64,
    pub t_select_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub metrics: Metrics,
    pub xi_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub initial_size: usize,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_design: Design,
}

impl RunRecord {
    pub fn checkpoint(&self, n: usize) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.n == n)
    }

    pub fn total_select_ms(&self) -> f64 {
        self.steps.iter().map(|s| s.t_select_ms).sum()
    }
}

/// A run that stopped early; `partial` holds everything up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("sequential run aborted after {} steps: {source}", partial.steps.len())]
pub struct RunAborted {
    pub partial: Box<RunRecord>,
    #[source]
    pub source: Error,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn fit_kernel(template: &KernelSpec, ell: &[f64], nugget: f64) -> Result<KernelSpec> {
    template.with_lengthscales(ell.to_vec())?.with_nugget(nugget)
}

fn checkpoint_metrics(model: &GpModel, validation: &Validation) -> Result<Metrics> {
    let preds = validation.points.iter().map(|x| model.predict_mean_original(x)).collect::<Result<Vec<_>>>()?;
    prediction_metrics(&preds, &validation.truths)
}

/// Runs the sequential design from `initial` (scaled points) to
/// `config.budget` points.
///
/// Each step: re-estimate lengthscales when gated, fit, record prediction
/// error at checkpoints, build the candidate pool, score it, evaluate the
/// objective at the winner and append. Outputs are re-normalized after each
/// append. Time for the MLE, the pool and the fit plus scoring go to the
/// three cost buckets.
pub fn run_sequential(
    objective: ObjectiveFn<'_>,
    config: &SequentialConfig,
    initial: &PointSet,
) -> std::result::Result<RunRecord, RunAborted> {
    let mut record = RunRecord {
        initial_size: initial.len(),
        steps: Vec::new(),
        checkpoints: Vec::new(),
        final_design: Design::unit(initial.dim().max(1)),
    };
    let abort = |record: &RunRecord, design: &Design, source: Error| {
        let mut partial = record.clone();
        partial.final_design = design.clone();
        RunAborted { partial: Box::new(partial), source }
    };

    let mut design = match Design::new(config.input_bounds.clone()) {
        Ok(d) => d,
        Err(e) => return Err(abort(&record, &record.final_design.clone(), e)),
    };
    if let Err(e) = config.validate(initial.len()) {
        return Err(abort(&record, &design, e));
    }
    for x in initial.iter() {
        if let Err(e) = objective(x).and_then(|y| design.append(x, y)) {
            return Err(abort(&record, &design, e));
        }
    }
    design.normalize_outputs();

    let dim = design.dim();
    let mut xi = match &config.hyper {
        HyperSpec::Fixed(ell) => ell.clone(),
        HyperSpec::Estimate(_) => tentative_lengthscales(dim),
    };

    loop {
        let k = design.len();
        let mut t_mle_ms = 0.0;
        if let HyperSpec::Estimate(mle) = &config.hyper {
            if should_update(k, mle) {
                let t = Instant::now();
                let mut step_cfg = mle.clone();
                step_cfg.seed = seed::derive(mle.seed, &[k as u64]);
                let template = match fit_kernel(&config.kernel, &xi, config.nugget) {
                    Ok(t) => t,
                    Err(e) => return Err(abort(&record, &design, e)),
                };
                match maximize_likelihood(&design, &template, &step_cfg) {
                    Ok(r) => xi = r.xi_hat,
                    Err(e) => return Err(abort(&record, &design, e)),
                }
                t_mle_ms = ms(t);
            }
        }

        let t_fit = Instant::now();
        let model = match fit_kernel(&config.kernel, &xi, config.nugget).and_then(|kern| GpModel::fit(&design, &kern)) {
            Ok(m) => m,
            Err(e) => return Err(abort(&record, &design, e)),
        };
        let fit_ms = ms(t_fit);

        if let Some(v) = &config.validation {
            if config.checkpoints.contains(&k) {
                match checkpoint_metrics(&model, v) {
                    Ok(metrics) => record.checkpoints.push(Checkpoint { n: k, metrics, xi_hat: xi.clone() }),
                    Err(e) => return Err(abort(&record, &design, e)),
                }
            }
        }
        if k >= config.budget {
            break;
        }

        let t = Instant::now();
        let pool = match &config.pool {
            PoolSpec::Fresh { n_grid, n_cand, n_ref, lhd_pool } => candidate_pool_for_step(
                design.inputs(),
                *n_grid,
                *n_cand,
                if config.criterion == Criterion::Alc { *n_ref } else { 0 },
                *lhd_pool,
                seed::derive(config.seed, &[k as u64, 1]),
            ),
            PoolSpec::Fixed { grid, candidates, reference } => {
                CandidatePool::from_parts(design.inputs(), grid, candidates, reference.clone())
            }
        };
        let pool = match pool {
            Ok(p) => p,
            Err(e) => return Err(abort(&record, &design, e)),
        };
        let t_cand_ms = ms(t);

        let t = Instant::now();
        let mut rng = seed::stream(config.seed, &[k as u64, 2]);
        let sheet = match criteria::score(config.criterion, &model, &pool, config.tau_s, &mut rng) {
            Ok(s) => s,
            Err(e) => return Err(abort(&record, &design, e)),
        };
        let t_select_ms = fit_ms + ms(t);

        let x = sheet.chosen().to_vec();
        let y = match objective(&x) {
            Ok(y) => y,
            Err(e) => return Err(abort(&record, &design, e)),
        };
        if let Err(e) = design.append(&x, y) {
            return Err(abort(&record, &design, e));
        }
        design.normalize_outputs();
        record.steps.push(StepRecord {
            k,
            point: x,
            y,
            score: sheet.chosen_score(),
            xi_hat: xi.clone(),
            excluded: sheet.excluded.iter().filter(|e| **e).count(),
            t_mle_ms,
            t_cand_ms,
            t_select_ms,
        });
    }
    record.final_design = design;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OneShot {
    /// Maximin-distance LHD.
    MmLhd,
    /// Minimax-distance LHD.
    MMLhd,
}

impl OneShot {
    pub fn label(self) -> &'static str {
        match self {
            OneShot::MmLhd => "lhd-maximin",
            OneShot::MMLhd => "lhd-minimax",
        }
    }

    /// The selected LHD of `n` points in `p` dimensions.
    pub fn design(self, n: usize, p: usize, seed: u64) -> Result<PointSet> {
        match self {
            OneShot::MmLhd => maximin_lhd(n, p, ONE_SHOT_POOL, seed),
            OneShot::MMLhd => minimax_lhd(n, p, ONE_SHOT_POOL, ONE_SHOT_POOL, seed),
        }
    }
}

/// Fits a fresh one-shot design of each size and records its prediction
/// error. `config.criterion`, `pool`, `budget` and `tau_s` are ignored.
pub fn run_one_shot(
    objective: ObjectiveFn<'_>,
    design_type: OneShot,
    sizes: &[usize],
    config: &SequentialConfig,
) -> Result<RunRecord> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("one-shot sizes must be strictly ascending".into()));
    }
    let dim = config.kernel.dim();
    let mut record =
        RunRecord { initial_size: 0, steps: Vec::new(), checkpoints: Vec::new(), final_design: Design::unit(dim) };
    for &n in sizes {
        let points = design_type.design(n, dim, seed::derive(config.seed, &[n as u64]))?;
        let mut design = Design::new(config.input_bounds.clone())?;
        for x in points.iter() {
            design.append(x, objective(x)?)?;
        }
        design.normalize_outputs();
        let xi = match &config.hyper {
            HyperSpec::Fixed(ell) => ell.clone(),
            HyperSpec::Estimate(mle) if n >= 2 => {
                let mut c = mle.clone();
                c.seed = seed::derive(mle.seed, &[n as u64]);
                maximize_likelihood(
                    &design,
                    &fit_kernel(&config.kernel, &tentative_lengthscales(dim), config.nugget)?,
                    &c,
                )?
                .xi_hat
            }
            HyperSpec::Estimate(_) => tentative_lengthscales(dim),
        };
        let model = GpModel::fit(&design, &fit_kernel(&config.kernel, &xi, config.nugget)?)?;
        if let Some(v) = &config.validation {
            record.checkpoints.push(Checkpoint { n, metrics: checkpoint_metrics(&model, v)?, xi_hat: xi });
        }
        record.final_design = design;
    }
    Ok(record)
}
