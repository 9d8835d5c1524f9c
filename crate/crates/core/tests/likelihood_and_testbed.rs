use approx::assert_relative_eq;
use mice_core::likelihood::{maximize_likelihood, profile_negloglik, should_update, MleConfig, SENTINEL};
use mice_core::sampling::{latin_hypercube, sample_grf_realization};
use mice_core::testbed::{eval_piston, Objective, ObjectiveName, PISTON_BOUNDS};
use mice_core::{Design, Error, KernelSpec, PointSet};
use nalgebra::DVector;

fn data(n: usize, seed: u64) -> Design {
    let x = latin_hypercube(n, 2, seed);
    let y: Vec<f64> = x.iter().map(|r| (5.0 * r[0]).sin() + r[1] * r[1]).collect();
    let mut d = Design::from_data(&x, &y).unwrap();
    d.normalize_outputs();
    d
}

#[test]
fn profile_likelihood_matches_dense_formula() {
    let d = data(15, 1);
    let kernel = KernelSpec::matern52(vec![0.3, 0.7]).unwrap().with_nugget(1e-6).unwrap();
    let k = kernel.correlation_matrix(d.inputs()).unwrap();
    let kinv = k.clone().try_inverse().unwrap();
    let y = DVector::from_vec(d.normalized_outputs());
    let ones = DVector::from_element(15, 1.0);
    let beta = ones.dot(&(&kinv * &y)) / ones.dot(&(&kinv * &ones));
    let r = &y - &ones * beta;
    let sigma2 = r.dot(&(&kinv * &r)) / 15.0;
    let expected = 15.0 * sigma2.ln() + k.determinant().ln();
    assert_relative_eq!(profile_negloglik(&d, &kernel).unwrap(), expected, max_relative = 1e-9);
}

#[test]
fn singular_correlation_gives_the_sentinel() {
    let x = PointSet::from_rows(1, &[[0.0], [1e-9], [1.0]]).unwrap();
    let mut d = Design::from_data(&x, &[0.0, 1.0, 2.0]).unwrap();
    d.normalize_outputs();
    let v = profile_negloglik(&d, &KernelSpec::squared_exponential(vec![10.0]).unwrap()).unwrap();
    assert_eq!(v, SENTINEL);
}

#[test]
fn search_result_is_in_the_box_and_reproducible() {
    let d = data(20, 2);
    let kernel = KernelSpec::matern52(vec![1.0, 1.0]).unwrap().with_nugget(1e-8).unwrap();
    let mut cfg = MleConfig::for_dim(2, 5);
    cfg.budget = 256;
    let a = maximize_likelihood(&d, &kernel, &cfg).unwrap();
    let b = maximize_likelihood(&d, &kernel, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.evals_used <= 256);
    assert!(a.xi_hat.iter().all(|l| (0.01..=10.0).contains(l)));
    assert_relative_eq!(a.loglik, -a.negloglik / 2.0);
    let at_hat = profile_negloglik(&d, &kernel.with_lengthscales(a.xi_hat.clone()).unwrap()).unwrap();
    assert_relative_eq!(at_hat, a.negloglik, max_relative = 1e-9);
    // The search should beat the tentative guess.
    assert!(a.negloglik <= profile_negloglik(&d, &kernel).unwrap());
}

#[test]
fn recovers_a_known_lengthscale() {
    let x = latin_hypercube(80, 1, 0);
    let kernel = KernelSpec::matern52(vec![0.5]).unwrap();
    let y = sample_grf_realization(&x, &kernel, 1000).unwrap();
    let mut d = Design::from_data(&x, &y).unwrap();
    d.normalize_outputs();
    let r = maximize_likelihood(&d, &kernel.with_nugget(1e-8).unwrap(), &MleConfig::for_dim(1, 0)).unwrap();
    assert!((0.25..=1.0).contains(&r.xi_hat[0]), "{:?}", r.xi_hat);
}

#[test]
fn update_gating() {
    let mut cfg = MleConfig::for_dim(2, 0);
    cfg.update_schedule = 5;
    assert!(!should_update(9, &cfg));
    assert!(should_update(10, &cfg));
    assert!(!should_update(11, &cfg));
    assert!(should_update(15, &cfg));
    cfg.budget = 1;
    assert!(cfg.validate().is_err());
}

#[test]
fn piston_sweep_matches_reference_values() {
    // Independent 40-digit evaluations along x1 with the other inputs at mid-range.
    let reference = [
        0.626_438_233_961_255_5,
        0.700_252_412_504_471_2,
        0.766_942_724_144_179_4,
        0.828_229_171_870_097_2,
        0.885_232_549_606_168_3,
    ];
    let obj = Objective::by_name(ObjectiveName::Piston, 0).unwrap();
    for (i, r) in reference.iter().enumerate() {
        let mut u = vec![0.5; 7];
        u[0] = i as f64 / 4.0;
        assert_relative_eq!(obj.eval_scaled(&u).unwrap(), *r, max_relative = 1e-12);
    }
    let mut lo: Vec<f64> = PISTON_BOUNDS.iter().map(|b| b.0).collect();
    lo[0] = 29.0;
    assert!(matches!(eval_piston(&lo), Err(Error::OutOfBounds { .. })));
}

#[test]
fn scaled_round_trip() {
    for name in [ObjectiveName::Branin, ObjectiveName::Piston, ObjectiveName::Oscillatory8d] {
        let obj = Objective::by_name(name, 0).unwrap();
        for u in latin_hypercube(20, obj.dim(), 3).iter() {
            let back = obj.to_scaled(&obj.to_natural(u));
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-14);
            }
            assert!(obj.eval_scaled(u).unwrap().is_finite());
        }
        assert!(matches!(obj.eval_scaled(&[0.5]), Err(Error::DimensionMismatch { .. })));
    }
}
