//! Stationary product-form correlation functions.
//!
//! Correlations are evaluated per input dimension and multiplied, so every
//! lengthscale acts on its own axis. The Matérn family is supported for
//! half-integer smoothness ν = m + 1/2 through its closed form; ν = 1/2, 3/2
//! and 5/2 have dedicated fast paths.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Correlations below this are flushed to zero.
pub const CORRELATION_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    SquaredExponential,
    Matern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: Family,
    lengthscales: Vec<f64>,
    smoothness: f64,
    process_variance: f64,
    nugget: f64,
}

impl KernelSpec {
    pub fn new(
        family: Family,
        lengthscales: Vec<f64>,
        smoothness: f64,
        process_variance: f64,
        nugget: f64,
    ) -> Result<Self> {
        let spec = KernelSpec { family, lengthscales, smoothness, process_variance, nugget };
        spec.validate()?;
        Ok(spec)
    }

    /// Squared-exponential correlation, unit variance, no nugget.
    pub fn squared_exponential(lengthscales: Vec<f64>) -> Result<Self> {
        KernelSpec::new(Family::SquaredExponential, lengthscales, 2.5, 1.0, 0.0)
    }

    /// Matérn correlation with ν = 5/2, unit variance, no nugget.
    pub fn matern52(lengthscales: Vec<f64>) -> Result<Self> {
        KernelSpec::new(Family::Matern, lengthscales, 2.5, 1.0, 0.0)
    }

    pub fn matern(lengthscales: Vec<f64>, nu: f64) -> Result<Self> {
        KernelSpec::new(Family::Matern, lengthscales, nu, 1.0, 0.0)
    }

    fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidParameter("no lengthscales".into()));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!("lengthscale {l} must be positive")));
        }
        if !(self.process_variance.is_finite() && self.process_variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "process variance {} must be positive",
                self.process_variance
            )));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::InvalidParameter(format!("nugget {} must be >= 0", self.nugget)));
        }
        if !(self.smoothness.is_finite() && self.smoothness > 0.0) {
            return Err(Error::InvalidParameter(format!("smoothness {} must be > 0", self.smoothness)));
        }
        if self.family == Family::Matern {
            let m = self.smoothness - 0.5;
            if m < 0.0 || (m - m.round()).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "Matérn smoothness {} is not a half-integer",
                    self.smoothness
                )));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn process_variance(&self) -> f64 {
        self.process_variance
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn with_lengthscales(&self, lengthscales: Vec<f64>) -> Result<Self> {
        KernelSpec::new(self.family, lengthscales, self.smoothness, self.process_variance, self.nugget)
    }

    pub fn with_process_variance(&self, sigma2: f64) -> Result<Self> {
        KernelSpec::new(self.family, self.lengthscales.clone(), self.smoothness, sigma2, self.nugget)
    }

    pub fn with_nugget(&self, nugget: f64) -> Result<Self> {
        KernelSpec::new(self.family, self.lengthscales.clone(), self.smoothness, self.process_variance, nugget)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    /// Correlation without dimension checks; callers guarantee matching lengths.
    #[inline]
    pub(crate) fn corr(&self, x: &[f64], y: &[f64]) -> f64 {
        self.corr_from_scaled(x.iter().zip(y).zip(&self.lengthscales).map(|((a, b), l)| (a - b).abs() / l))
    }

    /// Correlation from per-axis absolute differences under other lengthscales.
    #[inline]
    pub(crate) fn corr_from_diffs(&self, diffs: &[f64], lengthscales: &[f64]) -> f64 {
        self.corr_from_scaled(diffs.iter().zip(lengthscales).map(|(d, l)| d / l))
    }

    /// Correlation from per-axis scaled distances |xᵢ − x'ᵢ| / ℓᵢ.
    #[inline]
    fn corr_from_scaled(&self, scaled: impl Iterator<Item = f64>) -> f64 {
        let k = match self.family {
            Family::SquaredExponential => (-0.5 * scaled.map(|t| t * t).sum::<f64>()).exp(),
            Family::Matern => {
                // Orders up to 2 factor as poly(s)·exp(−c·s) per axis, so the
                // product needs a single exponential.
                let order = (self.smoothness - 0.5).round() as u64;
                let c = match order {
                    0 => 1.0,
                    1 => 3f64.sqrt(),
                    2 => 5f64.sqrt(),
                    _ => {
                        let mut prod = 1.0;
                        for s in scaled {
                            prod *= matern_1d(s, self.smoothness);
                            if prod < CORRELATION_FLOOR {
                                return 0.0;
                            }
                        }
                        return prod;
                    }
                };
                let mut poly = 1.0;
                let mut sum = 0.0;
                for s in scaled {
                    let z = c * s;
                    sum += z;
                    poly *= match order {
                        0 => 1.0,
                        1 => 1.0 + z,
                        _ => 1.0 + z + z * z / 3.0,
                    };
                }
                poly * (-sum).exp()
            }
        };
        if k < CORRELATION_FLOOR {
            0.0
        } else {
            k
        }
    }

    /// K(x, x'), a value in [0, 1].
    pub fn correlation(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        Ok(self.corr(x, y))
    }

    /// K + τ²I over the points of `xs`.
    pub fn correlation_matrix(&self, xs: &PointSet) -> Result<DMatrix<f64>> {
        self.correlation_matrix_with_nugget(xs, self.nugget)
    }

    pub(crate) fn correlation_matrix_with_nugget(&self, xs: &PointSet, nugget: f64) -> Result<DMatrix<f64>> {
        if xs.is_empty() {
            return Err(Error::InvalidParameter("empty point set".into()));
        }
        self.check_dim(xs.dim())?;
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0 + nugget;
            for j in 0..i {
                let v = self.corr(xs.row(i), xs.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Correlations between `x` and each point of `xs`; no nugget.
    pub fn cross_correlation_vector(&self, xs: &PointSet, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(xs.dim())?;
        self.check_dim(x.len())?;
        Ok(self.cross_unchecked(xs, x))
    }

    pub(crate) fn cross_unchecked(&self, xs: &PointSet, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(xs.len(), xs.iter().map(|r| self.corr(r, x)))
    }
}

/// One-dimensional Matérn correlation at scaled distance `s = r/ℓ`.
fn matern_1d(s: f64, nu: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let order = (nu - 0.5).round() as u64;
    match order {
        0 => (-s).exp(),
        1 => {
            let z = 3f64.sqrt() * s;
            (1.0 + z) * (-z).exp()
        }
        2 => {
            let z = 5f64.sqrt() * s;
            (1.0 + z + z * z / 3.0) * (-z).exp()
        }
        m => matern_half_integer(s, m),
    }
}

/// Closed form for ν = m + 1/2:
/// exp(−√(2ν)s) · m!/(2m)! · Σ_{i=0}^{m} (m+i)!/(i!(m−i)!) · (2√(2ν)s)^{m−i},
/// summed in log space so large orders stay finite.
fn matern_half_integer(s: f64, m: u64) -> f64 {
    let nu = m as f64 + 0.5;
    let z = (2.0 * nu).sqrt() * s;
    let ln_w = (2.0 * z).ln();
    let mf = m as f64;
    let ln_prefactor = statrs::function::gamma::ln_gamma(mf + 1.0) - statrs::function::gamma::ln_gamma(2.0 * mf + 1.0);
    // term_i = (m+i)!/(i!(m−i)!) w^{m−i}; term_{i+1}/term_i = (m+i+1)(m−i)/((i+1) w)
    let mut ln_term = mf * ln_w;
    let mut max_ln = ln_term;
    let mut terms = Vec::with_capacity(m as usize + 1);
    terms.push(ln_term);
    for i in 0..m {
        let fi = i as f64;
        ln_term += ((mf + fi + 1.0) * (mf - fi) / (fi + 1.0)).ln() - ln_w;
        max_ln = max_ln.max(ln_term);
        terms.push(ln_term);
    }
    let sum: f64 = terms.iter().map(|t| (t - max_ln).exp()).sum();
    (ln_prefactor + max_ln + sum.ln() - z).exp()
}
