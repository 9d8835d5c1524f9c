//! Constant-mean GP emulator: BLUP mean, MSPE variance and covariance, plus
//! the inverse-update identities used by the design criteria.
//!
//! All internal arithmetic runs on normalized outputs. Variances are returned
//! in units of the process variance σ² of the fitted kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::points::{PointSet, COINCIDENCE_TOL};

/// Normalized variances below this are treated as genuine breakdown rather
/// than round-off.
pub const VARIANCE_CLAMP: f64 = -1e-12;

/// Nugget floor used when the requested nugget fails to factorize.
pub const JITTER_FLOOR: f64 = 1e-8;

const SCHUR_FLOOR: f64 = 1e-12;

/// Input-output data in the scaled unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    inputs: PointSet,
    outputs: Vec<f64>,
    input_bounds: Vec<(f64, f64)>,
    output_shift: f64,
    output_scale: f64,
}

impl Design {
    /// Empty design over the given natural-unit bounds.
    pub fn new(input_bounds: Vec<(f64, f64)>) -> Result<Self> {
        if input_bounds.is_empty() {
            return Err(Error::InvalidParameter("design needs at least one input".into()));
        }
        if let Some((lo, hi)) = input_bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(Error::InvalidParameter(format!("invalid bounds [{lo}, {hi}]")));
        }
        Ok(Design {
            inputs: PointSet::new(input_bounds.len()),
            outputs: Vec::new(),
            input_bounds,
            output_shift: 0.0,
            output_scale: 1.0,
        })
    }

    /// Empty design whose natural units already are [0, 1]^p.
    pub fn unit(dim: usize) -> Self {
        Design::new(vec![(0.0, 1.0); dim]).expect("unit bounds are valid")
    }

    /// Design over [0, 1]^p built from scaled inputs and raw outputs.
    pub fn from_data(inputs: &PointSet, outputs: &[f64]) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::LengthMismatch { left: inputs.len(), right: outputs.len() });
        }
        let mut d = Design::unit(inputs.dim());
        for (x, y) in inputs.iter().zip(outputs) {
            d.append(x, *y)?;
        }
        Ok(d)
    }

    /// Appends a scaled input and its raw output. Rejects points outside the
    /// unit cube and points that duplicate an existing row.
    pub fn append(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (d, &v) in x.iter().enumerate() {
            if !(-COINCIDENCE_TOL..=1.0 + COINCIDENCE_TOL).contains(&v) {
                return Err(Error::OutOfBounds { dim: d, value: v, lo: 0.0, hi: 1.0 });
            }
        }
        if !y.is_finite() {
            return Err(Error::NumericalBreakdown(format!("non-finite output {y}")));
        }
        if self.inputs.contains(x) {
            return Err(Error::DuplicatePoint);
        }
        self.inputs.push(x)?;
        self.outputs.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn inputs(&self) -> &PointSet {
        &self.inputs
    }

    /// Raw outputs in natural units.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn input_bounds(&self) -> &[(f64, f64)] {
        &self.input_bounds
    }

    pub fn output_shift(&self) -> f64 {
        self.output_shift
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// Recomputes the zero-mean, unit-variance output normalization from the
    /// current outputs. A single output or a constant output keeps scale 1.
    pub fn normalize_outputs(&mut self) {
        let n = self.outputs.len();
        if n == 0 {
            self.output_shift = 0.0;
            self.output_scale = 1.0;
            return;
        }
        let mean = self.outputs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            self.outputs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        self.output_shift = mean;
        self.output_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    }

    pub fn normalized_outputs(&self) -> Vec<f64> {
        self.outputs.iter().map(|y| (y - self.output_shift) / self.output_scale).collect()
    }

    pub fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.input_bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }

    pub fn to_scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_bounds).map(|(x, (lo, hi))| (x - lo) / (hi - lo)).collect()
    }
}

/// Cholesky factorization that also rejects zero or non-finite pivots.
pub(crate) fn factorize(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.is_finite() && d > 0.0
    });
    ok.then_some(chol)
}

/// Factorizes K + τ²I over `xs`, retrying once with a larger nugget when the
/// requested one is numerically insufficient. Returns the factor and the
/// nugget that succeeded.
pub(crate) fn factorize_with_jitter(
    kernel: &KernelSpec,
    xs: &PointSet,
    nugget: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = factorize(kernel.correlation_matrix_with_nugget(xs, nugget)?) {
        return Ok((c, nugget));
    }
    let retry = (100.0 * nugget).max(JITTER_FLOOR);
    log::warn!("Cholesky failed at nugget {nugget:e} for {} points; retrying with {retry:e}", xs.len());
    factorize(kernel.correlation_matrix_with_nugget(xs, retry)?)
        .map(|c| (c, retry))
        .ok_or(Error::CholeskyFailure { nugget: retry })
}

/// A fitted emulator. Immutable after [`GpModel::fit`].
#[derive(Debug, Clone)]
pub struct GpModel {
    design: Design,
    kernel: KernelSpec,
    chol: Cholesky<f64, Dyn>,
    /// K + τ²I, kept for residual refinement.
    gram: DMatrix<f64>,
    /// L⁻¹1
    ones_white: DVector<f64>,
    /// 1ᵀ(K+τ²I)⁻¹1
    ones_quad: f64,
    beta_hat: f64,
    weights: DVector<f64>,
}

impl GpModel {
    /// Fits the constant-mean BLUP on the design's normalized outputs.
    pub fn fit(design: &Design, kernel: &KernelSpec) -> Result<Self> {
        if design.is_empty() {
            return Err(Error::InvalidParameter("cannot fit an empty design".into()));
        }
        if kernel.dim() != design.dim() {
            return Err(Error::DimensionMismatch { expected: design.dim(), got: kernel.dim() });
        }
        let (chol, nugget) = factorize_with_jitter(kernel, design.inputs(), kernel.nugget())?;
        let kernel = if nugget != kernel.nugget() { kernel.with_nugget(nugget)? } else { kernel.clone() };
        let gram = kernel.correlation_matrix_with_nugget(design.inputs(), nugget)?;
        let n = design.len();
        let y = DVector::from_vec(design.normalized_outputs());
        let ones = DVector::from_element(n, 1.0);
        let ones_white = lower_solve(&chol, &ones);
        let ones_quad = ones_white.norm_squared();
        let y_white = lower_solve(&chol, &y);
        let beta_hat = ones_white.dot(&y_white) / ones_quad;
        let resid = y - &ones * beta_hat;
        let weights = chol.solve(&resid);
        let mut model =
            GpModel { design: design.clone(), kernel, chol, gram, ones_white, ones_quad, beta_hat, weights };
        let (r, dr) = model.refined_solve(&ones);
        model.ones_quad = compensated_dot(0.0, r.iter().copied(), std::iter::repeat(1.0)) + dr.sum();
        Ok(model)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Kernel actually used, including any jitter added during the fit.
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }

    /// GLS estimate of the constant mean, in normalized output units.
    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }

    /// (K+τ²I)⁻¹(y − 1β̂)
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn lower_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Explicit (K+τ²I)⁻¹.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn ones_quadratic(&self) -> f64 {
        self.ones_quad
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.design.dim() {
            return Err(Error::DimensionMismatch { expected: self.design.dim(), got: x.len() });
        }
        Ok(())
    }

    pub(crate) fn cross(&self, x: &[f64]) -> DVector<f64> {
        self.kernel.cross_unchecked(self.design.inputs(), x)
    }

    /// L⁻¹k(x), the whitened cross-correlation vector.
    pub(crate) fn whiten(&self, x: &[f64]) -> DVector<f64> {
        lower_solve(&self.chol, &self.cross(x))
    }

    /// BLUP mean in normalized output units.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.beta_hat + self.cross(x).dot(&self.weights))
    }

    /// BLUP mean mapped back to the design's natural output units.
    pub fn predict_mean_original(&self, x: &[f64]) -> Result<f64> {
        Ok(self.design.output_shift() + self.design.output_scale() * self.predict_mean(x)?)
    }

    /// MSPE of the BLUP at `x`.
    ///
    /// Near design points with a small nugget, 1 − kᵀK⁻¹k loses most of its
    /// digits to cancellation, so the solve is refined once with compensated
    /// residuals. The criteria use the cheaper whitened form instead.
    pub fn predict_variance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let k = self.cross(x);
        let n = k.len();
        let (w, dw) = self.refined_solve(&k);
        let q = compensated_dot(1.0, k.iter().copied(), w.iter().map(|v| -v)) - k.dot(&dw);
        let g = compensated_dot(1.0, std::iter::repeat_n(1.0, n), w.iter().map(|v| -v)) - dw.sum();
        let s = clamp_variance(q + g * g / self.ones_quad)?;
        Ok(self.kernel.process_variance() * s)
    }

    /// Unclamped σ²-normalized variances at the rows of `xs`, whitening
    /// blocks of points with one triangular solve each.
    pub(crate) fn raw_variances(&self, xs: &PointSet) -> Vec<f64> {
        const BLOCK: usize = 256;
        let inputs = self.design.inputs();
        let starts: Vec<usize> = (0..xs.len()).step_by(BLOCK).collect();
        starts
            .into_par_iter()
            .flat_map_iter(|start| {
                let end = (start + BLOCK).min(xs.len());
                let mut block = DMatrix::from_fn(inputs.len(), end - start, |i, j| {
                    self.kernel.corr(inputs.row(i), xs.row(start + j))
                });
                self.chol.l_dirty().solve_lower_triangular_mut(&mut block);
                (0..end - start)
                    .map(|j| {
                        let v = block.column(j);
                        let g = 1.0 - self.ones_white.dot(&v);
                        1.0 - v.norm_squared() + g * g / self.ones_quad
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Solves (K+τ²I)w = b and returns w with one refinement correction,
    /// the residual being accumulated in compensated arithmetic.
    fn refined_solve(&self, b: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let w = self.chol.solve(b);
        let resid = DVector::from_iterator(
            b.len(),
            (0..b.len()).map(|j| compensated_dot(b[j], self.gram.row(j).iter().copied(), w.iter().map(|v| -v))),
        );
        let dw = self.chol.solve(&resid);
        (w, dw)
    }

    /// Predictive covariance V(x, x') of the BLUP errors.
    pub fn predict_covariance(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x2)?;
        let v1 = self.whiten(x);
        let v2 = self.whiten(x2);
        let g1 = 1.0 - self.ones_white.dot(&v1);
        let g2 = 1.0 - self.ones_white.dot(&v2);
        let prior = self.kernel.corr(x, x2);
        Ok(self.kernel.process_variance() * (prior - v1.dot(&v2) + g1 * g2 / self.ones_quad))
    }

    /// Closed-form predictive variance at design point `i` in terms of the
    /// nugget τ² and M = (K+τ²I)⁻¹:
    /// σ²(τ² − τ⁴ M_ii + τ⁴ (M1)_i² / 1ᵀM1).
    pub fn nugget_variance_identity(&self, i: usize) -> Result<f64> {
        let n = self.len();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        // The nugget as it actually sits on the diagonal: fl(1 + τ²) − 1 can
        // differ from τ² by an ulp of 1, which matters when τ² is tiny.
        let tau2 = self.gram[(i, i)] - 1.0;
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let (m_col, dm) = self.refined_solve(&e);
        let m_ii = m_col[i] + dm[i];
        let r_i = compensated_dot(0.0, m_col.iter().copied(), std::iter::repeat(1.0)) + dm.sum();
        let t4 = tau2 * tau2;
        Ok(self.kernel.process_variance() * (tau2 - t4 * m_ii + t4 * r_i * r_i / self.ones_quad))
    }

    /// (b₁, b₂): the largest diagonal entry of M = (K+τ²I)⁻¹ and the largest
    /// (M1)_i² / 1ᵀM1 over the fitted points.
    pub fn variance_bound_constants(&self) -> (f64, f64) {
        let m = self.chol.inverse();
        let r: DVector<f64> = m.column_sum();
        let s = r.sum();
        let b1 = (0..m.nrows()).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
        let b2 = r.iter().map(|ri| ri * ri / s).fold(f64::NEG_INFINITY, f64::max);
        (b1, b2)
    }
}

pub(crate) fn clamp_variance(s: f64) -> Result<f64> {
    if s >= 0.0 {
        Ok(s)
    } else if s >= VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NumericalBreakdown(format!("predictive variance {s:e} below clamp threshold")))
    }
}

/// init + Σ aᵢbᵢ evaluated as if in twice the working precision
/// (Ogita, Rump and Oishi's Dot2).
fn compensated_dot(init: f64, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let mut sum = init;
    let mut err = 0.0;
    for (x, y) in a.zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = sum + p;
        let z = t - sum;
        let se = (sum - (t - z)) + (p - z);
        sum = t;
        err += pe + se;
    }
    sum + err
}

pub(crate) fn lower_solve(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut x);
    x
}

/// Differential entropy, in bits, of a zero-mean Gaussian vector with
/// correlation matrix `k`: ½·log₂((2πe)ⁿ det K).
pub fn entropy(k: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    let chol = factorize(k.clone()).ok_or(Error::CholeskyFailure { nugget: 0.0 })?;
    let l = chol.l_dirty();
    let ln_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    Ok(0.5 * (n as f64 * two_pi_e.log2() + ln_det / std::f64::consts::LN_2))
}

/// Inverse of the bordered matrix [[K, k], [kᵀ, d]] given K⁻¹, in O(k²).
pub fn rank_one_inverse_update(kinv: &DMatrix<f64>, k_vec: &DVector<f64>, diag: f64) -> Result<DMatrix<f64>> {
    let n = kinv.nrows();
    if kinv.ncols() != n || k_vec.len() != n {
        return Err(Error::LengthMismatch { left: n, right: k_vec.len() });
    }
    let a = kinv * k_vec;
    let c = diag - k_vec.dot(&a);
    if c.is_nan() || c <= SCHUR_FLOOR {
        return Err(Error::DegenerateAugmentation { schur: c });
    }
    let mut out = DMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = kinv[(i, j)] + a[i] * a[j] / c;
        }
        out[(n, j)] = -a[j] / c;
        out[(j, n)] = -a[j] / c;
    }
    out[(n, n)] = 1.0 / c;
    Ok(out)
}

/// Inverse of the matrix with row and column `j` removed, given the full
/// inverse M: M₋ⱼ − M₋ⱼ,ⱼ Mⱼ,₋ⱼ / Mⱼⱼ, in O(m²).
pub fn deletion_inverse_update(m_full: &DMatrix<f64>, j: usize) -> Result<DMatrix<f64>> {
    let m = m_full.nrows();
    if j >= m {
        return Err(Error::IndexOutOfRange { index: j, len: m });
    }
    if m < 2 {
        return Err(Error::InvalidParameter("cannot delete from a 1x1 system".into()));
    }
    let b = m_full[(j, j)];
    let keep: Vec<usize> = (0..m).filter(|&i| i != j).collect();
    let mut out = DMatrix::zeros(m - 1, m - 1);
    for (cj, &oj) in keep.iter().enumerate() {
        let bj = m_full[(j, oj)];
        for (ci, &oi) in keep.iter().enumerate() {
            out[(ci, cj)] = m_full[(oi, oj)] - m_full[(oi, j)] * bj / b;
        }
    }
    Ok(out)
}

/// Constant-mean predictive variances at each member of a point set given
/// all the other members, from a single factorization.
///
/// With M = (K+τ²I)⁻¹, r = M1 and S = 1ᵀM1, the variance at member j given
/// the rest is
/// σ²[(1/M_jj − τ²) + (r_j/M_jj)² / (S − r_j²/M_jj)],
/// which reads the partitioned inverse of the bordered system directly.
#[derive(Debug, Clone)]
pub struct LeaveOneOutVariances {
    diag: Vec<f64>,
    row_sums: Vec<f64>,
    total: f64,
    nugget: f64,
    process_variance: f64,
}

impl LeaveOneOutVariances {
    pub fn new(kernel: &KernelSpec, xs: &PointSet, nugget: f64) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::InvalidParameter("leave-one-out needs at least two points".into()));
        }
        let (chol, nugget) = factorize_with_jitter(kernel, xs, nugget)?;
        let m = xs.len();
        let mut linv = DMatrix::identity(m, m);
        chol.l_dirty().solve_lower_triangular_mut(&mut linv);
        let diag: Vec<f64> = (0..m).map(|j| linv.column(j).rows(j, m - j).norm_squared()).collect();
        let r = chol.solve(&DVector::from_element(m, 1.0));
        let total = r.sum();
        Ok(LeaveOneOutVariances {
            diag,
            row_sums: r.iter().copied().collect(),
            total,
            nugget,
            process_variance: kernel.process_variance(),
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Nugget actually used, after any jitter.
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// σ²-normalized leave-one-out variance at member `j`, unclamped.
    pub fn raw(&self, j: usize) -> f64 {
        let mjj = self.diag[j];
        let rj = self.row_sums[j];
        let simple = 1.0 / mjj - self.nugget;
        let g = rj / mjj;
        simple + g * g / (self.total - rj * rj / mjj)
    }

    pub fn variance(&self, j: usize) -> Result<f64> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange { index: j, len: self.len() });
        }
        Ok(self.process_variance * clamp_variance(self.raw(j))?)
    }
}
