//! Profile likelihood for the correlation lengthscales and its maximization
//! with a real-coded genetic algorithm.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{factorize, Design};
use crate::kernels::KernelSpec;
use crate::seed;

/// Returned for lengthscales whose correlation matrix cannot be factorized
/// or whose plug-in variance degenerates.
pub const SENTINEL: f64 = f64::INFINITY;

const CROSSOVER_RATE: f64 = 0.9;
const BLEND_ALPHA: f64 = 0.5;
const MUTATION_RATE: f64 = 0.1;
const MUTATION_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    /// Bounds on log₁₀ ℓ per input dimension.
    pub search_box: Vec<(f64, f64)>,
    /// Total number of likelihood evaluations.
    pub budget: usize,
    pub population: usize,
    pub seed: u64,
    /// Re-estimate every this many steps once unfrozen.
    pub update_schedule: usize,
    /// Design size below which the tentative lengthscales are used.
    pub freeze_until: usize,
}

impl MleConfig {
    /// log₁₀ ℓ ∈ [−2, 1], 1024 evaluations, population 32, re-estimation at
    /// every step after 10 points (20 when p > 4).
    pub fn for_dim(dim: usize, seed: u64) -> Self {
        MleConfig {
            search_box: vec![(-2.0, 1.0); dim],
            budget: 1024,
            population: 32,
            seed,
            update_schedule: 1,
            freeze_until: if dim > 4 { 20 } else { 10 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.budget < self.population {
            return Err(Error::InvalidParameter(format!(
                "need budget >= population >= 2, got budget {} population {}",
                self.budget, self.population
            )));
        }
        if self.update_schedule == 0 {
            return Err(Error::InvalidParameter("update schedule must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.search_box.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(Error::InvalidParameter(format!("invalid search bounds [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub xi_hat: Vec<f64>,
    /// Plug-in process variance σ̂² in normalized output units.
    pub sigma2_hat: f64,
    /// n ln σ̂² + ln det K at ξ̂ (lower is better).
    pub negloglik: f64,
    /// Profile log-likelihood at ξ̂, up to an additive constant: −negloglik / 2.
    pub loglik: f64,
    pub evals_used: usize,
}

/// Lengthscales used before the design is large enough to estimate them.
pub fn tentative_lengthscales(dim: usize) -> Vec<f64> {
    vec![1.0; dim]
}

/// Whether the lengthscales should be re-estimated at design size `k`.
pub fn should_update(k: usize, config: &MleConfig) -> bool {
    k >= config.freeze_until && (k - config.freeze_until).is_multiple_of(config.update_schedule.max(1))
}

/// n ln σ̂² + ln det(K + τ²I) for the kernel's lengthscales and nugget, on
/// the design's normalized outputs. Returns [`SENTINEL`] when the matrix is
/// not positive definite or σ̂² collapses.
pub fn profile_negloglik(design: &Design, kernel: &KernelSpec) -> Result<f64> {
    if design.len() < 2 {
        return Err(Error::InvalidParameter("likelihood needs at least two points".into()));
    }
    if kernel.dim() != design.dim() {
        return Err(Error::DimensionMismatch { expected: design.dim(), got: kernel.dim() });
    }
    let k = kernel.correlation_matrix(design.inputs())?;
    let y = DVector::from_vec(design.normalized_outputs());
    Ok(negloglik_and_sigma2(k, &y).0)
}

fn negloglik_and_sigma2(k: DMatrix<f64>, y: &DVector<f64>) -> (f64, f64) {
    let n = y.len();
    let Some(chol) = factorize(k) else {
        return (SENTINEL, f64::NAN);
    };
    let l = chol.l_dirty();
    let ln_det = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let mut u = DVector::from_element(n, 1.0);
    l.solve_lower_triangular_mut(&mut u);
    let mut z = y.clone();
    l.solve_lower_triangular_mut(&mut z);
    let beta = u.dot(&z) / u.norm_squared();
    let resid = z - u * beta;
    let sigma2 = resid.norm_squared() / n as f64;
    let scale = 1.0 + y.norm_squared() / n as f64;
    if !(sigma2.is_finite() && sigma2 > 1e-20 * scale) {
        return (SENTINEL, sigma2);
    }
    let v = n as f64 * sigma2.ln() + ln_det;
    if v.is_finite() {
        (v, sigma2)
    } else {
        (SENTINEL, sigma2)
    }
}

/// Per-axis absolute differences of every design pair, computed once so that
/// each likelihood evaluation only rescales them.
struct PairDiffs {
    n: usize,
    dim: usize,
    diffs: Vec<f64>,
}

impl PairDiffs {
    fn new(design: &Design) -> Self {
        let xs = design.inputs();
        let (n, dim) = (xs.len(), xs.dim());
        let mut diffs = Vec::with_capacity(n * (n - 1) / 2 * dim);
        for i in 0..n {
            for j in 0..i {
                diffs.extend(xs.row(i).iter().zip(xs.row(j)).map(|(a, b)| (a - b).abs()));
            }
        }
        PairDiffs { n, dim, diffs }
    }

    fn matrix(&self, kernel: &KernelSpec, lengthscales: &[f64]) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n, self.n);
        let mut chunks = self.diffs.chunks_exact(self.dim);
        for i in 0..self.n {
            k[(i, i)] = 1.0 + kernel.nugget();
            for j in 0..i {
                let v = kernel.corr_from_diffs(chunks.next().expect("pair count"), lengthscales);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

struct Evaluator<'a> {
    kernel: &'a KernelSpec,
    pairs: PairDiffs,
    y: DVector<f64>,
}

impl Evaluator<'_> {
    fn eval(&self, genes: &[f64]) -> f64 {
        let ell: Vec<f64> = genes.iter().map(|g| 10f64.powf(*g)).collect();
        negloglik_and_sigma2(self.pairs.matrix(self.kernel, &ell), &self.y).0
    }
}

#[derive(Clone)]
struct Individual {
    genes: Vec<f64>,
    fitness: f64,
}

/// Binary tournament; ties go to the lower index.
fn tournament<R: Rng>(pop: &[Individual], rng: &mut R) -> usize {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    let (lo, hi) = (a.min(b), a.max(b));
    if pop[hi].fitness < pop[lo].fitness {
        hi
    } else {
        lo
    }
}

fn best_index(pop: &[Individual]) -> usize {
    let mut best = 0;
    for (i, ind) in pop.iter().enumerate() {
        if ind.fitness < pop[best].fitness {
            best = i;
        }
    }
    best
}

/// Maximizes the profile likelihood over log₁₀ ℓ within the search box.
///
/// `kernel` supplies the family, smoothness and nugget; its lengthscales are
/// ignored. Generation 0 is `population` uniform draws; each later generation
/// keeps the best individual and breeds the rest by binary tournament, blend
/// crossover and Gaussian mutation. Every offspring draws from its own
/// stream keyed by (seed, generation, index), so results do not depend on
/// evaluation order.
pub fn maximize_likelihood(design: &Design, kernel: &KernelSpec, config: &MleConfig) -> Result<MleResult> {
    config.validate()?;
    let dim = design.dim();
    if config.search_box.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: config.search_box.len() });
    }
    if kernel.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: kernel.dim() });
    }
    if design.len() < 2 {
        return Err(Error::InvalidParameter("likelihood needs at least two points".into()));
    }
    let eval = Evaluator { kernel, pairs: PairDiffs::new(design), y: DVector::from_vec(design.normalized_outputs()) };
    let bounds = &config.search_box;
    let clip = |g: f64, d: usize| g.clamp(bounds[d].0, bounds[d].1);

    let initial: Vec<Vec<f64>> = (0..config.population)
        .map(|i| {
            let mut rng = seed::stream(config.seed, &[0, i as u64]);
            bounds.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect()
        })
        .collect();
    let mut pop: Vec<Individual> =
        initial.into_par_iter().map(|genes| Individual { fitness: eval.eval(&genes), genes }).collect();
    let mut evals = pop.len();

    let mut generation = 1u64;
    while evals < config.budget {
        let n_children = (config.population - 1).min(config.budget - evals);
        let elite = pop[best_index(&pop)].clone();
        let children: Vec<Vec<f64>> = (1..=n_children)
            .map(|i| {
                let mut rng = seed::stream(config.seed, &[generation, i as u64]);
                let a = &pop[tournament(&pop, &mut rng)].genes;
                let b = &pop[tournament(&pop, &mut rng)].genes;
                let mut child: Vec<f64> = if rng.random::<f64>() < CROSSOVER_RATE {
                    a.iter()
                        .zip(b)
                        .enumerate()
                        .map(|(d, (x, y))| {
                            let (lo, hi) = (x.min(*y), x.max(*y));
                            let ext = BLEND_ALPHA * (hi - lo);
                            if hi - lo > 0.0 {
                                clip(rng.random_range(lo - ext..=hi + ext), d)
                            } else {
                                lo
                            }
                        })
                        .collect()
                } else {
                    a.clone()
                };
                for (d, g) in child.iter_mut().enumerate() {
                    if rng.random::<f64>() < MUTATION_RATE {
                        let sd = MUTATION_WIDTH * (bounds[d].1 - bounds[d].0);
                        let step = Normal::new(0.0, sd).expect("positive width").sample(&mut rng);
                        *g = clip(*g + step, d);
                    }
                }
                child
            })
            .collect();
        let mut next = vec![elite];
        next.par_extend(children.into_par_iter().map(|genes| Individual { fitness: eval.eval(&genes), genes }));
        evals += n_children;
        pop = next;
        generation += 1;
    }

    let best = &pop[best_index(&pop)];
    if best.fitness == SENTINEL {
        return Err(Error::AllInfeasible);
    }
    let xi_hat: Vec<f64> = best.genes.iter().map(|g| 10f64.powf(*g)).collect();
    let (negloglik, sigma2_hat) = negloglik_and_sigma2(eval.pairs.matrix(kernel, &xi_hat), &eval.y);
    Ok(MleResult { xi_hat, sigma2_hat, negloglik, loglik: -0.5 * negloglik, evals_used: evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::PointSet;
    use approx::assert_relative_eq;

    fn toy_design() -> Design {
        let pts = PointSet::from_rows(2, &[[0.1, 0.2], [0.8, 0.3], [0.5, 0.9], [0.3, 0.6], [0.9, 0.95], [0.05, 0.7]])
            .unwrap();
        let ys: Vec<f64> = pts.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[1]).collect();
        let mut d = Design::from_data(&pts, &ys).unwrap();
        d.normalize_outputs();
        d
    }

    #[test]
    fn schedule_gating() {
        let mut c = MleConfig::for_dim(2, 0);
        assert!(!should_update(5, &c));
        assert!(should_update(10, &c));
        c.update_schedule = 5;
        assert!(!should_update(13, &c));
        assert!(should_update(15, &c));
        assert_eq!(MleConfig::for_dim(5, 0).freeze_until, 20);
    }

    #[test]
    fn cached_matrix_matches_kernel() {
        let d = toy_design();
        for k in [
            KernelSpec::matern52(vec![0.3, 0.7]).unwrap().with_nugget(1e-6).unwrap(),
            KernelSpec::squared_exponential(vec![0.3, 0.7]).unwrap(),
            KernelSpec::matern(vec![0.3, 0.7], 4.5).unwrap(),
        ] {
            let direct = k.correlation_matrix(d.inputs()).unwrap();
            let cached = PairDiffs::new(&d).matrix(&k, &[0.3, 0.7]);
            assert!((direct - cached).abs().max() < 1e-15);
        }
    }

    #[test]
    fn constant_outputs_give_sentinel() {
        let pts = PointSet::from_rows(1, &[[0.1], [0.5], [0.9]]).unwrap();
        let d = Design::from_data(&pts, &[2.0, 2.0, 2.0]).unwrap();
        let v = profile_negloglik(&d, &KernelSpec::matern52(vec![0.3]).unwrap()).unwrap();
        assert_eq!(v, SENTINEL);
    }

    #[test]
    fn single_generation_is_best_of_initial_population() {
        let d = toy_design();
        let k = KernelSpec::matern52(vec![1.0, 1.0]).unwrap().with_nugget(1e-8).unwrap();
        let mut c = MleConfig::for_dim(2, 11);
        c.budget = c.population;
        let r = maximize_likelihood(&d, &k, &c).unwrap();
        assert_eq!(r.evals_used, 32);
        let best = (0..32)
            .map(|i| {
                let mut rng = seed::stream(11, &[0, i]);
                let ell: Vec<f64> = (0..2).map(|_| 10f64.powf(rng.random_range(-2.0..=1.0))).collect();
                profile_negloglik(&d, &k.with_lengthscales(ell).unwrap()).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(r.negloglik, best, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_and_monotone_in_budget() {
        let d = toy_design();
        let k = KernelSpec::matern52(vec![1.0, 1.0]).unwrap().with_nugget(1e-8).unwrap();
        let mut c = MleConfig::for_dim(2, 3);
        c.budget = 200;
        let a = maximize_likelihood(&d, &k, &c).unwrap();
        let b = maximize_likelihood(&d, &k, &c).unwrap();
        assert_eq!(a.xi_hat, b.xi_hat);
        c.budget = 400;
        let big = maximize_likelihood(&d, &k, &c).unwrap();
        assert!(big.negloglik <= a.negloglik);
        assert_eq!(big.evals_used, 400);
    }
}
