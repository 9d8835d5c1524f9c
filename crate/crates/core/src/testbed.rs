//! Closed-form test functions standing in for simulators.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::points::PointSet;
use crate::sampling::{regular_grid, sample_grf_realization};

pub const OSCILLATORY_4D_C: [f64; 4] = [1.85, 2.51, 1.94, 2.70];
pub const OSCILLATORY_4D_W: f64 = 0.43;
pub const OSCILLATORY_8D_C: [f64; 8] = [0.14, 1.69, 0.81, 1.73, 2.10, 0.42, 0.14, 1.97];
pub const OSCILLATORY_8D_W: f64 = 0.4;

pub const BRANIN_BOUNDS: [(f64, f64); 2] = [(-5.0, 10.0), (0.0, 15.0)];

pub const PISTON_BOUNDS: [(f64, f64); 7] = [
    (30.0, 60.0),
    (1000.0, 5000.0),
    (0.005, 0.020),
    (90000.0, 110000.0),
    (0.002, 0.010),
    (340.0, 360.0),
    (290.0, 296.0),
];

/// Lengthscales of the GRF test surface.
pub const GRF_LENGTHSCALES: [f64; 2] = [0.8, 0.5];
pub const GRF_POINTS_PER_AXIS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveName {
    Grf2d,
    Branin,
    Oscillatory4d,
    Oscillatory8d,
    Piston,
}

impl fmt::Display for ObjectiveName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveName::Grf2d => "grf2d",
            ObjectiveName::Branin => "branin",
            ObjectiveName::Oscillatory4d => "oscillatory4d",
            ObjectiveName::Oscillatory8d => "oscillatory8d",
            ObjectiveName::Piston => "piston",
        })
    }
}

impl FromStr for ObjectiveName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "grf2d" | "grf" => Ok(ObjectiveName::Grf2d),
            "branin" => Ok(ObjectiveName::Branin),
            "oscillatory4d" | "osc4d" => Ok(ObjectiveName::Oscillatory4d),
            "oscillatory8d" | "osc8d" => Ok(ObjectiveName::Oscillatory8d),
            "piston" => Ok(ObjectiveName::Piston),
            _ => Err(Error::UnknownObjective(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Branin,
    Oscillatory { c: Vec<f64>, w: f64 },
    Piston,
    Lookup { grid: PointSet, values: Vec<f64> },
}

/// A named test function with its natural-unit domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    name: ObjectiveName,
    bounds: Vec<(f64, f64)>,
    kind: Kind,
}

fn check_bounds(x: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if x.len() != bounds.len() {
        return Err(Error::DimensionMismatch { expected: bounds.len(), got: x.len() });
    }
    for (d, (v, (lo, hi))) in x.iter().zip(bounds).enumerate() {
        let slack = 1e-12 * (hi - lo);
        if !(*v >= lo - slack && *v <= hi + slack) {
            return Err(Error::OutOfBounds { dim: d, value: *v, lo: *lo, hi: *hi });
        }
    }
    Ok(())
}

/// Branin on [−5, 10] × [0, 15].
pub fn eval_branin(x: &[f64]) -> Result<f64> {
    check_bounds(x, &BRANIN_BOUNDS)?;
    let (x1, x2) = (x[0], x[1]);
    let t = x2 - 5.1 * x1 * x1 / (4.0 * PI * PI) + 5.0 / PI * x1 - 6.0;
    Ok(t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x1.cos() + 10.0)
}

/// Genz oscillatory function cos(c·x + 2πw).
pub fn eval_oscillatory(x: &[f64], c: &[f64], w: f64) -> Result<f64> {
    if x.len() != c.len() {
        return Err(Error::DimensionMismatch { expected: c.len(), got: x.len() });
    }
    let dot: f64 = x.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok((dot + 2.0 * PI * w).cos())
}

/// Piston cycle time in seconds.
pub fn eval_piston(x: &[f64]) -> Result<f64> {
    check_bounds(x, &PISTON_BOUNDS)?;
    let [m, k, s, p0, v0, t0, ta] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6]];
    let g2 = s * p0 + 19.62 * m - k * v0 / s;
    let disc = g2 * g2 + 4.0 * k * (p0 * v0 / t0) * ta;
    if disc < 0.0 {
        return Err(Error::NonPhysical(format!("negative discriminant {disc}")));
    }
    let g1 = s / (2.0 * k) * (disc.sqrt() - g2);
    if g1 <= 0.0 {
        return Err(Error::NonPhysical(format!("non-positive volume {g1}")));
    }
    let denom = k + s * s * (p0 * v0 / t0) * (ta / g1);
    let ratio = m / denom;
    if !(ratio > 0.0) {
        return Err(Error::NonPhysical(format!("non-positive frequency ratio {ratio}")));
    }
    Ok(2.0 * PI * ratio.sqrt())
}

/// A GP realization on `grid`, queried by exact lookup.
pub fn make_grf_objective(kernel: &KernelSpec, grid: &PointSet, seed: u64) -> Result<Objective> {
    let values = sample_grf_realization(grid, kernel, seed)?;
    Ok(Objective {
        name: ObjectiveName::Grf2d,
        bounds: vec![(0.0, 1.0); grid.dim()],
        kind: Kind::Lookup { grid: grid.clone(), values },
    })
}

impl Objective {
    /// The registered objective for `name`. `seed` only affects the GRF
    /// realization.
    pub fn by_name(name: ObjectiveName, seed: u64) -> Result<Self> {
        let (bounds, kind) = match name {
            ObjectiveName::Branin => (BRANIN_BOUNDS.to_vec(), Kind::Branin),
            ObjectiveName::Oscillatory4d => {
                (vec![(0.0, 1.0); 4], Kind::Oscillatory { c: OSCILLATORY_4D_C.to_vec(), w: OSCILLATORY_4D_W })
            }
            ObjectiveName::Oscillatory8d => {
                (vec![(0.0, 1.0); 8], Kind::Oscillatory { c: OSCILLATORY_8D_C.to_vec(), w: OSCILLATORY_8D_W })
            }
            ObjectiveName::Piston => (PISTON_BOUNDS.to_vec(), Kind::Piston),
            ObjectiveName::Grf2d => {
                let kernel = KernelSpec::squared_exponential(GRF_LENGTHSCALES.to_vec())?;
                return make_grf_objective(&kernel, &regular_grid(2, GRF_POINTS_PER_AXIS)?, seed);
            }
        };
        Ok(Objective { name, bounds, kind })
    }

    pub fn name(&self) -> ObjectiveName {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn natural_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Lookup grid for table objectives.
    pub fn lookup_grid(&self) -> Option<&PointSet> {
        match &self.kind {
            Kind::Lookup { grid, .. } => Some(grid),
            _ => None,
        }
    }

    pub fn eval_natural(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            Kind::Branin => eval_branin(x),
            Kind::Oscillatory { c, w } => {
                check_bounds(x, &self.bounds)?;
                eval_oscillatory(x, c, *w)
            }
            Kind::Piston => eval_piston(x),
            Kind::Lookup { grid, values } => {
                if x.len() != grid.dim() {
                    return Err(Error::DimensionMismatch { expected: grid.dim(), got: x.len() });
                }
                grid.position_of(x).map(|i| values[i]).ok_or(Error::NonGridQuery)
            }
        }
    }

    pub fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }

    pub fn to_scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(x, (lo, hi))| (x - lo) / (hi - lo)).collect()
    }

    /// Evaluates at a point of the scaled unit cube.
    pub fn eval_scaled(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        match self.kind {
            Kind::Lookup { .. } => self.eval_natural(u),
            _ => self.eval_natural(&self.to_natural(u)),
        }
    }
}
