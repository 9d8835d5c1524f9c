//! Next-point selection rules: ALM, ALC, MI and MICE.
//!
//! Every rule maps a fitted model and a candidate pool to one score per
//! candidate and picks the largest, lowest index first on ties. Candidates
//! whose score cannot be computed reliably are flagged as excluded and never
//! chosen; their raw value is kept for inspection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpModel, LeaveOneOutVariances};
use crate::points::{format_f64, PointSet};
use crate::sampling::CandidatePool;

/// σ²-normalized variances at or below this are treated as zero.
pub const VARIANCE_UNDERFLOW: f64 = 1e-14;

/// Default smoothing nugget for the MICE denominator.
pub const DEFAULT_TAU_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Alm,
    Alc,
    Mi,
    Mice,
    Random,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Alm => "alm",
            Criterion::Alc => "alc",
            Criterion::Mi => "mi",
            Criterion::Mice => "mice",
            Criterion::Random => "random",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alm" => Ok(Criterion::Alm),
            "alc" => Ok(Criterion::Alc),
            "mi" => Ok(Criterion::Mi),
            "mice" => Ok(Criterion::Mice),
            "random" => Ok(Criterion::Random),
            other => Err(Error::Config(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Per-candidate scores for one selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub candidates: PointSet,
    /// Scores used for selection; 0 for excluded candidates.
    pub scores: Vec<f64>,
    /// Scores before exclusion, possibly huge or non-finite.
    pub raw_scores: Vec<f64>,
    pub excluded: Vec<bool>,
    pub chosen_index: usize,
    /// Whether more than one candidate attained the maximum.
    pub tie_policy_applied: bool,
}

impl ScoreSheet {
    fn build(candidates: &PointSet, raw: Vec<Option<f64>>, raw_values: Vec<f64>) -> Result<Self> {
        let excluded: Vec<bool> = raw.iter().map(Option::is_none).collect();
        let scores: Vec<f64> = raw.iter().map(|s| s.unwrap_or(0.0)).collect();
        let mut best: Option<usize> = None;
        let mut ties = false;
        for (j, s) in raw.iter().enumerate() {
            let Some(s) = s else { continue };
            match best {
                None => best = Some(j),
                Some(b) if *s > scores[b] => {
                    best = Some(j);
                    ties = false;
                }
                Some(b) if *s == scores[b] => ties = true,
                _ => {}
            }
        }
        let chosen_index = best.ok_or(Error::AllCandidatesExcluded)?;
        let n_excluded = excluded.iter().filter(|e| **e).count();
        if n_excluded > 0 {
            log::warn!("{n_excluded} of {} candidates excluded from scoring", excluded.len());
        }
        Ok(ScoreSheet {
            candidates: candidates.clone(),
            scores,
            raw_scores: raw_values,
            excluded,
            chosen_index,
            tie_policy_applied: ties,
        })
    }

    pub fn chosen(&self) -> &[f64] {
        self.candidates.row(self.chosen_index)
    }

    pub fn chosen_score(&self) -> f64 {
        self.scores[self.chosen_index]
    }

    /// Columns x1..xp, score, raw_score, excluded.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let p = self.candidates.dim();
        let mut header: Vec<String> = (1..=p).map(|d| format!("x{d}")).collect();
        header.extend(["score", "raw_score", "excluded"].map(String::from));
        wtr.write_record(&header)?;
        for j in 0..self.candidates.len() {
            let mut rec: Vec<String> = self.candidates.row(j).iter().map(|v| format_f64(*v)).collect();
            rec.push(format_f64(self.scores[j]));
            rec.push(format_f64(self.raw_scores[j]));
            rec.push(u8::from(self.excluded[j]).to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_pool(pool: &CandidatePool) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(())
}

/// ALM: the predictive variance ŝ²_k(x).
pub fn score_alm(model: &GpModel, pool: &CandidatePool) -> Result<ScoreSheet> {
    check_pool(pool)?;
    let sigma2 = model.kernel().process_variance();
    let raw = model.raw_variances(pool.candidates());
    let scores = raw.iter().map(|s| (*s >= crate::gp::VARIANCE_CLAMP).then(|| sigma2 * s.max(0.0))).collect();
    ScoreSheet::build(pool.candidates(), scores, raw.iter().map(|s| sigma2 * s).collect())
}

/// aᵀ M b for a dense square M.
fn bilinear(m: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for (j, bj) in b.iter().enumerate() {
        total += bj * m.column(j).dot(a);
    }
    total
}

/// ALC: (1/N_ref) Σᵢ V_k(x, xᵢ)² / ŝ²_k(x) over the pool's reference points.
///
/// Each covariance V_k(x, xᵢ) is a bilinear form through the explicit
/// K_k⁻¹, O(k²) per candidate-reference pair.
pub fn score_alc(model: &GpModel, pool: &CandidatePool) -> Result<ScoreSheet> {
    check_pool(pool)?;
    if pool.reference().is_empty() {
        return Err(Error::InvalidParameter("ALC needs reference points".into()));
    }
    let kinv = model.inverse();
    let n = kinv.nrows();
    let ones = DVector::from_element(n, 1.0);
    let kinv_ones = &kinv * &ones;
    let s = ones.dot(&kinv_ones);
    let sigma2 = model.kernel().process_variance();
    let kernel = model.kernel();
    let refs: Vec<(DVector<f64>, f64)> = pool
        .reference()
        .iter()
        .map(|r| {
            let k = model.cross(r);
            let g = 1.0 - kinv_ones.dot(&k);
            (k, g)
        })
        .collect();
    let n_ref = refs.len() as f64;
    let raw: Vec<(Option<f64>, f64)> = (0..pool.len())
        .into_par_iter()
        .map(|j| {
            let x = pool.candidates().row(j);
            let kx = model.cross(x);
            let gx = 1.0 - kinv_ones.dot(&kx);
            let var = 1.0 - bilinear(&kinv, &kx, &kx) + gx * gx / s;
            if var <= VARIANCE_UNDERFLOW {
                return (None, f64::NAN);
            }
            let total: f64 = pool
                .reference()
                .iter()
                .zip(&refs)
                .map(|(r, (kr, gr))| {
                    let v = kernel.corr(x, r) - bilinear(&kinv, &kx, kr) + gx * gr / s;
                    v * v
                })
                .sum();
            let score = sigma2 * total / (n_ref * var);
            (Some(score), score)
        })
        .collect();
    let (scores, raw_values) = raw.into_iter().unzip();
    ScoreSheet::build(pool.candidates(), scores, raw_values)
}

/// MI: ŝ²_k(x; τ²) / ŝ²_{G∖(k∪x)}(x; τ²), both with the model's nugget.
pub fn score_mi(model: &GpModel, pool: &CandidatePool) -> Result<ScoreSheet> {
    score_ratio(model, pool, model.kernel().nugget())
}

/// MICE: ŝ²_k(x; τ²) / ŝ²_{G∖(k∪x)}(x; max{τ², τ²_s}). The denominator GP
/// shares the model's correlation parameters.
pub fn score_mice(model: &GpModel, pool: &CandidatePool, tau_s: f64) -> Result<ScoreSheet> {
    if !(tau_s.is_finite() && tau_s > 0.0) {
        return Err(Error::InvalidParameter(format!("smoothing nugget {tau_s} must be positive")));
    }
    score_ratio(model, pool, model.kernel().nugget().max(tau_s))
}

fn score_ratio(model: &GpModel, pool: &CandidatePool, denominator_nugget: f64) -> Result<ScoreSheet> {
    check_pool(pool)?;
    let complement = pool.complement();
    if complement.len() < 2 {
        return Err(Error::InvalidParameter(
            "the discretization must hold at least one point besides each candidate".into(),
        ));
    }
    let loo = LeaveOneOutVariances::new(model.kernel(), &complement, denominator_nugget)?;
    let nums = model.raw_variances(pool.candidates());
    let raw: Vec<(Option<f64>, f64)> = (0..pool.len())
        .into_par_iter()
        .map(|j| {
            let num = nums[j];
            let den = loo.raw(pool.complement_index(j));
            let ratio = num / den;
            let ok = num >= crate::gp::VARIANCE_CLAMP && den > VARIANCE_UNDERFLOW && ratio.is_finite();
            (ok.then(|| num.max(0.0) / den), ratio)
        })
        .collect();
    let (scores, raw_values) = raw.into_iter().unzip();
    ScoreSheet::build(pool.candidates(), scores, raw_values)
}

/// Uniform choice among the candidates; every score is 0.
pub fn score_random<R: Rng>(pool: &CandidatePool, rng: &mut R) -> Result<ScoreSheet> {
    check_pool(pool)?;
    let n = pool.len();
    let chosen_index = rng.random_range(0..n);
    Ok(ScoreSheet {
        candidates: pool.candidates().clone(),
        scores: vec![0.0; n],
        raw_scores: vec![0.0; n],
        excluded: vec![false; n],
        chosen_index,
        tie_policy_applied: false,
    })
}

/// Dispatches to the rule for `criterion`. `tau_s` is used by MICE only.
pub fn score<R: Rng>(
    criterion: Criterion,
    model: &GpModel,
    pool: &CandidatePool,
    tau_s: f64,
    rng: &mut R,
) -> Result<ScoreSheet> {
    match criterion {
        Criterion::Alm => score_alm(model, pool),
        Criterion::Alc => score_alc(model, pool),
        Criterion::Mi => score_mi(model, pool),
        Criterion::Mice => score_mice(model, pool, tau_s),
        Criterion::Random => score_random(pool, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Design;
    use crate::kernels::KernelSpec;
    use crate::sampling::regular_grid;

    fn model_2d(pts: &[[f64; 2]], nugget: f64) -> GpModel {
        let ps = PointSet::from_rows(2, pts).unwrap();
        let ys: Vec<f64> = pts.iter().map(|x| x[0] - 2.0 * x[1]).collect();
        let k = KernelSpec::matern52(vec![0.4, 0.4]).unwrap().with_nugget(nugget).unwrap();
        GpModel::fit(&Design::from_data(&ps, &ys).unwrap(), &k).unwrap()
    }

    fn pool(design: &GpModel, cands: &[[f64; 2]], refs: &[[f64; 2]]) -> CandidatePool {
        let c = PointSet::from_rows(2, cands).unwrap();
        CandidatePool::from_parts(design.design().inputs(), &c, &c, PointSet::from_rows(2, refs).unwrap()).unwrap()
    }

    #[test]
    fn parse_round_trip() {
        for c in [Criterion::Alm, Criterion::Alc, Criterion::Mi, Criterion::Mice, Criterion::Random] {
            assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
        }
        assert!("eigf".parse::<Criterion>().is_err());
    }

    #[test]
    fn alm_prefers_far_corner() {
        let m = model_2d(&[[0.3, 0.3], [0.6, 0.6]], 0.0);
        let p = pool(&m, &[[0.45, 0.45], [1.0, 0.0]], &[]);
        assert_eq!(score_alm(&m, &p).unwrap().chosen_index, 1);
        let single = pool(&m, &[[0.45, 0.45]], &[]);
        assert_eq!(score_alm(&m, &single).unwrap().chosen_index, 0);
    }

    #[test]
    fn alc_self_reference_reduces_to_alm() {
        let m = model_2d(&[[0.3, 0.3], [0.6, 0.6], [0.1, 0.9]], 0.0);
        let x = [0.8, 0.2];
        let p = pool(&m, &[x], &[x]);
        let alc = score_alc(&m, &p).unwrap().scores[0];
        let alm = m.predict_variance(&x).unwrap();
        assert!((alc - alm).abs() < 1e-10 * alm);
    }

    #[test]
    fn mice_with_model_nugget_equals_mi() {
        let m = model_2d(&[[0.3, 0.3], [0.6, 0.6]], 1e-6);
        let grid = regular_grid(2, 5).unwrap();
        let p = CandidatePool::from_parts(m.design().inputs(), &grid, &grid, PointSet::new(2)).unwrap();
        assert_eq!(score_mi(&m, &p).unwrap(), score_mice(&m, &p, 1e-6).unwrap());
    }

    #[test]
    fn empty_pool_is_an_error() {
        let m = model_2d(&[[0.3, 0.3], [0.6, 0.6]], 0.0);
        let p = pool(&m, &[[0.3, 0.3]], &[]);
        assert!(matches!(score_alm(&m, &p), Err(Error::EmptyPool)));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let m = model_2d(&[[0.5, 0.5], [0.5, 0.25]], 0.0);
        let p = pool(&m, &[[0.25, 0.5], [0.75, 0.5]], &[]);
        let s = score_alm(&m, &p).unwrap();
        assert_eq!(s.scores[0], s.scores[1]);
        assert_eq!(s.chosen_index, 0);
        assert!(s.tie_policy_applied);
        let r = score_random(&p, &mut crate::seed::stream(0, &[])).unwrap();
        assert!(r.chosen_index < 2 && r.scores.iter().all(|s| *s == 0.0));
    }
}
