//! Space-filling point sets: Latin hypercubes, maximin/minimax selection from
//! LHD pools, regular grids, per-step candidate pools and GRF realizations.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::factorize_with_jitter;
use crate::kernels::KernelSpec;
use crate::points::{PointSet, COINCIDENCE_TOL};
use crate::seed;

/// Default cap on the number of points in a regular grid.
pub const GRID_CAP: usize = 1_000_000;

/// Nugget added before factorizing a covariance to sample a realization.
pub const GRF_JITTER: f64 = 1e-10;

/// Stream id for reference points, kept apart from pool member ids.
const REFERENCE_STREAM: u64 = u64::MAX;

/// Random LHD: one point per stratum [i/n, (i+1)/n) in every coordinate,
/// uniformly placed within its stratum.
pub fn latin_hypercube(n: usize, p: usize, seed: u64) -> PointSet {
    lhd_from_rng(n, p, &mut seed::stream(seed, &[]))
}

fn lhd_from_rng<R: Rng>(n: usize, p: usize, rng: &mut R) -> PointSet {
    let mut data = vec![0.0; n * p];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..p {
        perm.shuffle(rng);
        for (i, &s) in perm.iter().enumerate() {
            data[i * p + d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    PointSet::from_flat(p.max(1), data).expect("consistent buffer")
}

/// The `i`-th member of the LHD pool drawn from `seed`.
pub fn pool_member(n: usize, p: usize, seed: u64, i: usize) -> PointSet {
    latin_hypercube(n, p, seed::derive(seed, &[i as u64]))
}

/// Minimax score: the largest distance from a reference point to its
/// nearest design point.
pub fn minimax_score(design: &PointSet, reference: &PointSet) -> f64 {
    reference.iter().map(|r| design.nearest_distance(r)).fold(0.0, f64::max)
}

/// Reference points for the minimax selectors.
pub fn minimax_reference(n_ref: usize, p: usize, seed: u64) -> PointSet {
    latin_hypercube(n_ref, p, seed::derive(seed, &[REFERENCE_STREAM]))
}

/// Index of the best score, first index on ties.
fn argbest(scores: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        match best {
            Some((_, b)) if !better(s, b) => {}
            _ => best = Some((i, s)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// The pool member with the largest minimum pairwise distance.
pub fn maximin_lhd(n: usize, p: usize, pool_size: usize, seed: u64) -> Result<PointSet> {
    if n < 2 || pool_size == 0 {
        return Err(Error::InvalidParameter(format!("maximin LHD needs n >= 2 and a non-empty pool, got n={n}")));
    }
    let i = argbest((0..pool_size).map(|i| pool_member(n, p, seed, i).min_pairwise_distance()), |a, b| a > b);
    Ok(pool_member(n, p, seed, i))
}

/// The pool member with the smallest minimax score against `n_ref`
/// reference points drawn as one LHD.
pub fn minimax_lhd(n: usize, p: usize, pool_size: usize, n_ref: usize, seed: u64) -> Result<PointSet> {
    if n < 1 || pool_size == 0 || n_ref == 0 {
        return Err(Error::InvalidParameter("minimax LHD needs n, pool size and reference size >= 1".into()));
    }
    let reference = minimax_reference(n_ref, p, seed);
    let i = argbest((0..pool_size).map(|i| minimax_score(&pool_member(n, p, seed, i), &reference)), |a, b| a < b);
    Ok(pool_member(n, p, seed, i))
}

/// Full-factorial equidistant grid on [0,1]^p, last coordinate varying fastest.
pub fn regular_grid(p: usize, points_per_axis: usize) -> Result<PointSet> {
    regular_grid_capped(p, points_per_axis, GRID_CAP)
}

pub fn regular_grid_capped(p: usize, points_per_axis: usize, cap: usize) -> Result<PointSet> {
    if p == 0 || points_per_axis < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs p >= 1 and at least 2 points per axis, got p={p}, m={points_per_axis}"
        )));
    }
    let size = u32::try_from(p)
        .ok()
        .and_then(|e| points_per_axis.checked_pow(e))
        .filter(|s| *s <= cap)
        .ok_or(Error::SizeOverflow { size: points_per_axis.saturating_pow(p as u32), cap })?;
    let step = 1.0 / (points_per_axis - 1) as f64;
    let mut out = PointSet::with_capacity(p, size);
    let mut idx = vec![0usize; p];
    let mut row = vec![0.0; p];
    for _ in 0..size {
        for (r, i) in row.iter_mut().zip(&idx) {
            *r = if *i == points_per_axis - 1 { 1.0 } else { *i as f64 * step };
        }
        out.push(&row)?;
        for d in (0..p).rev() {
            idx[d] += 1;
            if idx[d] < points_per_axis {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

/// Discretization and candidate set for one selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    /// Current design followed by the fresh discretization points.
    grid: PointSet,
    design_len: usize,
    candidates: PointSet,
    /// Position of each candidate within `grid`.
    candidate_grid_index: Vec<usize>,
    reference: PointSet,
}

impl CandidatePool {
    /// Builds a pool from explicit point sets. Grid and candidate points that
    /// coincide with the design are dropped; candidates missing from the grid
    /// are added to it.
    pub fn from_parts(design: &PointSet, grid: &PointSet, candidates: &PointSet, reference: PointSet) -> Result<Self> {
        let p = design.dim();
        for set in [grid, candidates, &reference] {
            if !set.is_empty() && set.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, got: set.dim() });
            }
        }
        let mut all = design.clone();
        for g in grid.iter() {
            if !all.contains(g) {
                all.push(g)?;
            }
        }
        let mut cands = PointSet::new(p);
        let mut index = Vec::new();
        for c in candidates.iter() {
            if design.contains(c) || cands.contains(c) {
                continue;
            }
            let pos = match all.position_of(c) {
                Some(pos) => pos,
                None => {
                    all.push(c)?;
                    all.len() - 1
                }
            };
            cands.push(c)?;
            index.push(pos);
        }
        Ok(CandidatePool {
            grid: all,
            design_len: design.len(),
            candidates: cands,
            candidate_grid_index: index,
            reference,
        })
    }

    pub fn grid(&self) -> &PointSet {
        &self.grid
    }

    pub fn design_len(&self) -> usize {
        self.design_len
    }

    /// X_G ∖ X_k: the discretization points that are not design points.
    pub fn complement(&self) -> PointSet {
        let idx: Vec<usize> = (self.design_len..self.grid.len()).collect();
        self.grid.select(&idx)
    }

    pub fn candidates(&self) -> &PointSet {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Position of candidate `j` within [`CandidatePool::complement`].
    pub fn complement_index(&self, j: usize) -> usize {
        self.candidate_grid_index[j] - self.design_len
    }

    pub fn reference(&self) -> &PointSet {
        &self.reference
    }
}

/// Fresh pool for one step.
///
/// Among `lhd_pool` LHDs of `n_g` points, picks the one whose closest point
/// to the current design is farthest (the most spread one when the design is
/// empty). The grid is the design plus that LHD; the candidates are the
/// whole LHD, or its `n_cand` points farthest from the design. `n_ref`
/// reference points are a separate LHD.
pub fn candidate_pool_for_step(
    design: &PointSet,
    n_g: usize,
    n_cand: usize,
    n_ref: usize,
    lhd_pool: usize,
    seed: u64,
) -> Result<CandidatePool> {
    if n_cand == 0 || n_cand > n_g || lhd_pool == 0 {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_cand <= n_g and a non-empty LHD pool, got n_cand={n_cand}, n_g={n_g}"
        )));
    }
    let p = design.dim();
    let score = |lhd: &PointSet| {
        if design.is_empty() {
            lhd.min_pairwise_distance()
        } else {
            lhd.iter().map(|x| design.nearest_distance(x)).fold(f64::INFINITY, f64::min)
        }
    };
    let best = argbest((0..lhd_pool).map(|i| score(&pool_member(n_g, p, seed, i))), |a, b| a > b);
    let fresh = pool_member(n_g, p, seed, best);
    let candidates = if n_cand == n_g {
        fresh.clone()
    } else {
        let mut order: Vec<usize> = (0..n_g).collect();
        let dist: Vec<f64> = fresh.iter().map(|x| design.nearest_distance(x)).collect();
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        let mut keep = order[..n_cand].to_vec();
        keep.sort_unstable();
        fresh.select(&keep)
    };
    let reference =
        if n_ref > 0 { latin_hypercube(n_ref, p, seed::derive(seed, &[REFERENCE_STREAM])) } else { PointSet::new(p) };
    CandidatePool::from_parts(design, &fresh, &candidates, reference)
}

/// One realization y = L z of a zero-mean GP on `grid`, where L L^T is the
/// covariance σ²(K + τ²I) with a small jitter added to τ².
pub fn sample_grf_realization(grid: &PointSet, kernel: &KernelSpec, seed: u64) -> Result<Vec<f64>> {
    let (chol, _) = factorize_with_jitter(kernel, grid, kernel.nugget() + GRF_JITTER)?;
    let mut rng = seed::stream(seed, &[]);
    let z = DVector::from_iterator(grid.len(), (0..grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = chol.l() * z * kernel.process_variance().sqrt();
    Ok(y.iter().copied().collect())
}

/// Snaps each point to its nearest member of `targets`, skipping targets
/// already taken. Used to place initial designs on a finite candidate set.
pub fn snap_to(points: &PointSet, targets: &PointSet) -> PointSet {
    let mut out = PointSet::new(points.dim());
    for x in points.iter() {
        let best = targets
            .iter()
            .filter(|t| !out.contains(t))
            .min_by(|a, b| crate::points::sq_dist(a, x).total_cmp(&crate::points::sq_dist(b, x)));
        if let Some(t) = best {
            out.push(t).expect("same dimension");
        }
    }
    out
}

/// Whether every coordinate lies in [0, 1] up to the coincidence tolerance.
pub fn in_unit_cube(points: &PointSet) -> bool {
    points.as_flat().iter().all(|v| (-COINCIDENCE_TOL..=1.0 + COINCIDENCE_TOL).contains(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhd_is_stratified() {
        let x = latin_hypercube(1000, 4, 9);
        for d in 0..4 {
            let mut bins = [0usize; 10];
            for r in x.iter() {
                bins[(r[d] * 10.0) as usize] += 1;
            }
            assert!(bins.iter().all(|b| *b == 100));
        }
        let one = latin_hypercube(1, 3, 1);
        assert!(one.row(0).iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn grid_examples() {
        assert_eq!(regular_grid(1, 3).unwrap().as_flat(), &[0.0, 0.5, 1.0]);
        assert_eq!(regular_grid(2, 21).unwrap().len(), 441);
        assert_eq!(regular_grid(2, 7).unwrap().len(), 49);
        assert!(matches!(regular_grid(7, 10), Err(Error::SizeOverflow { .. })));
    }

    #[test]
    fn single_member_pools_are_identity() {
        assert_eq!(maximin_lhd(5, 2, 1, 3).unwrap(), pool_member(5, 2, 3, 0));
        assert_eq!(minimax_lhd(5, 2, 1, 50, 3).unwrap(), pool_member(5, 2, 3, 0));
    }

    #[test]
    fn empty_design_pool_is_the_lhd() {
        let pool = candidate_pool_for_step(&PointSet::new(2), 20, 20, 20, 5, 4).unwrap();
        assert_eq!(pool.grid().len(), 20);
        assert_eq!(pool.len(), 20);
        assert_eq!(pool.reference().len(), 20);
    }

    #[test]
    fn from_parts_drops_design_points() {
        let design = PointSet::from_rows(1, &[[0.5]]).unwrap();
        let grid = regular_grid(1, 3).unwrap();
        let pool = CandidatePool::from_parts(&design, &grid, &grid, PointSet::new(1)).unwrap();
        assert_eq!(pool.grid().len(), 3);
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.complement().len(), 2);
        for j in 0..2 {
            assert_eq!(pool.complement().row(pool.complement_index(j)), pool.candidates().row(j));
        }
    }

    #[test]
    fn snapping_avoids_repeats() {
        let targets = regular_grid(1, 3).unwrap();
        let pts = PointSet::from_rows(1, &[[0.1], [0.05]]).unwrap();
        assert_eq!(snap_to(&pts, &targets).as_flat(), &[0.0, 0.5]);
    }
}
