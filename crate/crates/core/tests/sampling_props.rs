use approx::assert_relative_eq;
use mice_core::sampling::{
    candidate_pool_for_step, latin_hypercube, maximin_lhd, minimax_lhd, minimax_reference, minimax_score, pool_member,
    regular_grid, regular_grid_capped, sample_grf_realization,
};
use mice_core::{Error, KernelSpec, PointSet};
use proptest::prelude::*;

proptest! {
    #[test]
    fn every_lhd_hits_each_stratum_once(n in 1usize..60, p in 1usize..8, seed in any::<u64>()) {
        let x = latin_hypercube(n, p, seed);
        prop_assert_eq!(x.len(), n);
        for d in 0..p {
            let mut hits = vec![0; n];
            for row in x.iter() {
                prop_assert!((0.0..=1.0).contains(&row[d]));
                hits[((row[d] * n as f64) as usize).min(n - 1)] += 1;
            }
            prop_assert!(hits.iter().all(|h| *h == 1));
        }
    }

    #[test]
    fn fresh_pool_keeps_design_and_candidates_apart(k in 1usize..15, seed in any::<u64>()) {
        let design = latin_hypercube(k, 3, seed);
        let pool = candidate_pool_for_step(&design, 40, 25, 10, 8, seed).unwrap();
        prop_assert_eq!(pool.len(), 25);
        prop_assert_eq!(pool.grid().len(), k + 40);
        prop_assert_eq!(pool.reference().len(), 10);
        let complement = pool.complement();
        for (j, c) in pool.candidates().iter().enumerate() {
            prop_assert!(!design.contains(c));
            prop_assert_eq!(complement.row(pool.complement_index(j)), c);
        }
    }
}

#[test]
fn maximin_winner_beats_every_pool_member() {
    let best = maximin_lhd(12, 3, 30, 5).unwrap();
    for i in 0..30 {
        assert!(best.min_pairwise_distance() >= pool_member(12, 3, 5, i).min_pairwise_distance());
    }
}

#[test]
fn minimax_winner_beats_every_pool_member() {
    let best = minimax_lhd(10, 2, 25, 200, 6).unwrap();
    let reference = minimax_reference(200, 2, 6);
    for i in 0..25 {
        assert!(minimax_score(&best, &reference) <= minimax_score(&pool_member(10, 2, 6, i), &reference));
    }
}

#[test]
fn winning_pool_is_farthest_from_design() {
    let design = latin_hypercube(10, 2, 1);
    let pool = candidate_pool_for_step(&design, 150, 150, 0, 20, 9).unwrap();
    let gap = |x: &PointSet| x.iter().map(|r| design.nearest_distance(r)).fold(f64::INFINITY, f64::min);
    let won = gap(pool.candidates());
    for i in 0..20 {
        assert!(won >= gap(&pool_member(150, 2, 9, i)));
    }
}

#[test]
fn grids() {
    let g = regular_grid(2, 7).unwrap();
    assert_eq!(g.len(), 49);
    assert_eq!(g.row(1), &[0.0, 1.0 / 6.0]);
    assert_eq!(g.row(48), &[1.0, 1.0]);
    assert!(matches!(regular_grid_capped(8, 10, 1_000_000), Err(Error::SizeOverflow { .. })));
    assert!(regular_grid(2, 1).is_err());
}

#[test]
fn grf_marginals_and_correlation() {
    let grid = PointSet::from_rows(2, &[[0.5, 0.5], [0.55, 0.5], [0.0, 0.0]]).unwrap();
    let kernel = KernelSpec::squared_exponential(vec![0.8, 0.5]).unwrap();
    let draws: Vec<Vec<f64>> = (0..500).map(|s| sample_grf_realization(&grid, &kernel, s).unwrap()).collect();
    let m = draws.len() as f64;
    let mean = draws.iter().map(|d| d[0]).sum::<f64>() / m;
    assert!(mean.abs() < 3.0 / 200f64.sqrt());
    let var0 = draws.iter().map(|d| d[0] * d[0]).sum::<f64>() / m;
    let var1 = draws.iter().map(|d| d[1] * d[1]).sum::<f64>() / m;
    assert!((var0 - 1.0).abs() < 0.2, "var {var0}");
    let cov = draws.iter().map(|d| d[0] * d[1]).sum::<f64>() / m;
    let corr = cov / (var0 * var1).sqrt();
    assert!((corr - (-0.05f64.powi(2) / (2.0 * 0.64)).exp()).abs() < 0.01, "corr {corr}");
}

#[test]
fn grf_is_deterministic() {
    let grid = regular_grid(2, 5).unwrap();
    let kernel = KernelSpec::squared_exponential(vec![0.8, 0.5]).unwrap();
    let a = sample_grf_realization(&grid, &kernel, 3).unwrap();
    let b = sample_grf_realization(&grid, &kernel, 3).unwrap();
    assert_eq!(a, b);
    let c = sample_grf_realization(&grid, &kernel.with_process_variance(4.0).unwrap(), 3).unwrap();
    assert_relative_eq!(c[7], 2.0 * a[7], max_relative = 1e-12);
}
