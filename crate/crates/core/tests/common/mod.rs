#![allow(dead_code)]

use mice_core::sampling::latin_hypercube;
use mice_core::{Design, GpModel, KernelSpec, PointSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn toy_outputs(xs: &PointSet) -> Vec<f64> {
    xs.iter().map(|x| x.iter().enumerate().map(|(d, v)| ((d + 1) as f64 * 3.0 * v).sin()).sum()).collect()
}

pub fn toy_model(n: usize, p: usize, ell: f64, nugget: f64, seed: u64) -> GpModel {
    let xs = latin_hypercube(n, p, seed);
    let design = Design::from_data(&xs, &toy_outputs(&xs)).unwrap();
    GpModel::fit(&design, &KernelSpec::matern52(vec![ell; p]).unwrap().with_nugget(nugget).unwrap()).unwrap()
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, p: usize) -> PointSet {
    PointSet::from_flat(p, (0..n * p).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Mean and variance from the textbook formulas with an explicit inverse.
pub struct DenseOracle {
    pub ainv: DMatrix<f64>,
    pub ys: DVector<f64>,
    pub beta: f64,
    pub s: f64,
}

impl DenseOracle {
    pub fn new(model: &GpModel) -> Self {
        let kernel = model.kernel();
        let a = kernel.correlation_matrix(model.design().inputs()).unwrap();
        let ainv = a.try_inverse().unwrap();
        let n = ainv.nrows();
        let ones = DVector::from_element(n, 1.0);
        let ys = DVector::from_vec(model.design().normalized_outputs());
        let s = ones.dot(&(&ainv * &ones));
        let beta = ones.dot(&(&ainv * &ys)) / s;
        DenseOracle { ainv, ys, beta, s }
    }

    fn kvec(model: &GpModel, x: &[f64]) -> DVector<f64> {
        model.kernel().cross_correlation_vector(model.design().inputs(), x).unwrap()
    }

    pub fn mean(&self, model: &GpModel, x: &[f64]) -> f64 {
        let k = Self::kvec(model, x);
        let n = k.len();
        self.beta + k.dot(&(&self.ainv * (&self.ys - DVector::from_element(n, self.beta))))
    }

    pub fn covariance(&self, model: &GpModel, x: &[f64], x2: &[f64]) -> f64 {
        let (k1, k2) = (Self::kvec(model, x), Self::kvec(model, x2));
        let n = k1.len();
        let ones = DVector::from_element(n, 1.0);
        let g1 = 1.0 - ones.dot(&(&self.ainv * &k1));
        let g2 = 1.0 - ones.dot(&(&self.ainv * &k2));
        let c = model.kernel().correlation(x, x2).unwrap();
        model.kernel().process_variance() * (c - k1.dot(&(&self.ainv * &k2)) + g1 * g2 / self.s)
    }
}

/// ALC by refitting on X_k ∪ {x} for every candidate: the mean reduction in
/// predictive variance over the reference points.
pub fn alc_brute_force(model: &GpModel, candidates: &PointSet, reference: &PointSet) -> Vec<f64> {
    candidates
        .iter()
        .map(|x| {
            let mut d = model.design().clone();
            d.append(x, 0.0).unwrap();
            let refit = GpModel::fit(&d, model.kernel()).unwrap();
            reference
                .iter()
                .map(|r| model.predict_variance(r).unwrap() - refit.predict_variance(r).unwrap())
                .sum::<f64>()
                / reference.len() as f64
        })
        .collect()
}

/// MI-type ratio by refitting the denominator GP on X_G ∖ (X_k ∪ {x}) for
/// every candidate.
pub fn ratio_brute_force(model: &GpModel, complement: &PointSet, candidates: &PointSet, den_nugget: f64) -> Vec<f64> {
    let kernel = model.kernel().with_nugget(den_nugget).unwrap();
    candidates
        .iter()
        .map(|x| {
            let rest: Vec<usize> = (0..complement.len()).filter(|&i| complement.row(i) != x).collect();
            let sub = complement.select(&rest);
            let d = Design::from_data(&sub, &vec![0.0; sub.len()]).unwrap();
            let den = GpModel::fit(&d, &kernel).unwrap().predict_variance(x).unwrap();
            model.predict_variance(x).unwrap() / den
        })
        .collect()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
}
