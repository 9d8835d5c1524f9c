//! Row-major point sets and small geometric helpers shared by every module.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance under which two points are considered the same location.
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// A set of `len()` points in `dim()` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        PointSet { dim, data: Vec::with_capacity(dim * n) }
    }

    /// Builds a point set from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "flat buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(PointSet { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut set = PointSet::with_capacity(dim, rows.len());
        for r in rows {
            set.push(r.as_ref())?;
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        self.data.extend_from_slice(x);
        Ok(())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Points at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut out = PointSet::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    /// Index of the first point within [`COINCIDENCE_TOL`] of `x`, if any.
    pub fn position_of(&self, x: &[f64]) -> Option<usize> {
        self.iter().position(|r| coincident(r, x))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.position_of(x).is_some()
    }

    /// Euclidean distance from `x` to the nearest member; `+inf` when empty.
    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        self.iter().map(|r| sq_dist(r, x)).fold(f64::INFINITY, f64::min).sqrt()
    }

    /// Smallest pairwise Euclidean distance; `+inf` for fewer than two points.
    pub fn min_pairwise_distance(&self) -> f64 {
        let n = self.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.min(sq_dist(self.row(i), self.row(j)));
            }
        }
        best.sqrt()
    }

    /// Writes one row per point, full round-trip precision, no header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in self.iter() {
            wtr.write_record(r.iter().map(|v| format_f64(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut set: Option<PointSet> = None;
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("bad number in point CSV: {e}")))?;
            set.get_or_insert_with(|| PointSet::new(row.len())).push(&row)?;
        }
        set.ok_or_else(|| Error::Config("empty point CSV".into()))
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn coincident(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= COINCIDENCE_TOL)
}

/// 17 significant digits, scientific notation.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
