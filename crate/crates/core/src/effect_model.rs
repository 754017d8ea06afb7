//! Reading-time models: OLS with sliding condition contrasts, and a
//! local-linear smoother of reading time on information gain.
//!
//! When records carry a subject id, reading times are centred within subject
//! (subject mean removed, grand mean added back) before any fit. This absorbs
//! by-subject intercepts without a mixed model.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::HashMap;
use thiserror::Error;

use crate::glyphs::Condition;
use crate::reading_sim::ReadingRecord;
use crate::seeds::{self, Stream};

pub const MIN_LINEAR_RECORDS: usize = 10;
pub const MIN_SMOOTH_RECORDS: usize = 30;
pub const DEFAULT_GRID_POINTS: usize = 50;

/// Relative residual norm below which a column counts as a combination of earlier ones.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("column {column} is collinear with [{}]", with.join(", "))]
    Collinear { column: String, with: Vec<String> },
    #[error("record {row} has no value for {column}")]
    MissingValue { column: String, row: usize },
    #[error("either every record has a subject or none does (record {row} differs)")]
    MixedSubjects { row: usize },
    #[error("no predictors requested")]
    NoPredictors,
    #[error("predictor {0} listed twice")]
    DuplicatePredictor(&'static str),
    #[error("ig is constant ({0}); nothing to smooth over")]
    ConstantIg(f64),
    #[error("bandwidth {bandwidth} leaves the window around ig = {at} with fewer than two distinct points")]
    BandwidthTooSmall { bandwidth: f64, at: f64 },
    #[error("bandwidth must be > 0, got {0}")]
    InvalidBandwidth(f64),
    #[error("grid needs at least 2 points, got {0}")]
    InvalidGrid(usize),
    #[error("non-finite value in column {column} at record {row}")]
    NonFinite { column: String, row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Predictor {
    Ig,
    ConditionContrasts,
    LogFreq,
    Length,
    Surprisal,
    ContextualEntropy,
}

impl Predictor {
    pub fn as_str(self) -> &'static str {
        match self {
            Predictor::Ig => "ig",
            Predictor::ConditionContrasts => "condition",
            Predictor::LogFreq => "log_freq",
            Predictor::Length => "length",
            Predictor::Surprisal => "surprisal",
            Predictor::ContextualEntropy => "contextual_entropy",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Predictor::ConditionContrasts => &[CONTRAST_UPPER_FULL, CONTRAST_LOWER_UPPER],
            Predictor::Ig => &["ig"],
            Predictor::LogFreq => &["log_freq"],
            Predictor::Length => &["length"],
            Predictor::Surprisal => &["surprisal"],
            Predictor::ContextualEntropy => &["contextual_entropy"],
        }
    }

    fn values(self, r: &ReadingRecord, row: usize) -> Result<Vec<f64>, FitError> {
        let v = match self {
            Predictor::Ig => vec![r.ig_nats],
            Predictor::ConditionContrasts => sliding_contrasts(r.condition).to_vec(),
            Predictor::LogFreq => vec![r.log_freq],
            Predictor::Length => vec![r.length as f64],
            Predictor::Surprisal => vec![r.surprisal_nats],
            Predictor::ContextualEntropy => vec![r.contextual_entropy_nats.ok_or(FitError::MissingValue {
                column: "contextual_entropy_nats".into(),
                row,
            })?],
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FitError::NonFinite {
                column: self.as_str().into(),
                row,
            });
        }
        Ok(v)
    }
}

impl std::str::FromStr for Predictor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ig" => Predictor::Ig,
            "condition" | "condition_contrasts" => Predictor::ConditionContrasts,
            "log_freq" => Predictor::LogFreq,
            "length" => Predictor::Length,
            "surprisal" => Predictor::Surprisal,
            "contextual_entropy" => Predictor::ContextualEntropy,
            other => return Err(format!("unknown predictor {other:?}")),
        })
    }
}

pub const CONTRAST_UPPER_FULL: &str = "upper_minus_full";
pub const CONTRAST_LOWER_UPPER: &str = "lower_minus_upper";
pub const SLIDING_SCHEME: &str = "sliding: UpperVisible-Full, LowerVisible-UpperVisible";

/// Successive-difference codes for the level order Full, UpperVisible, LowerVisible.
pub fn sliding_contrasts(condition: Condition) -> [f64; 2] {
    match condition {
        Condition::Full => [-2.0 / 3.0, -1.0 / 3.0],
        Condition::UpperVisible => [1.0 / 3.0, -1.0 / 3.0],
        Condition::LowerVisible => [1.0 / 3.0, 2.0 / 3.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    /// `intercept` first, then design columns in predictor order.
    pub coefficients: IndexMap<String, Coefficient>,
    pub r_squared: f64,
    pub n: usize,
    pub predictors: Vec<Predictor>,
    pub contrast_scheme: String,
    pub residual_df: usize,
    pub subject_centered: bool,
}

impl RegressionFit {
    pub fn get(&self, column: &str) -> Option<&Coefficient> {
        self.coefficients.get(column)
    }
}

/// Reading times, centred within subject when subjects are present.
pub fn response(records: &[ReadingRecord]) -> Result<(Vec<f64>, bool), FitError> {
    for (i, r) in records.iter().enumerate() {
        if !r.rt_ms.is_finite() {
            return Err(FitError::NonFinite {
                column: "rt_ms".into(),
                row: i,
            });
        }
    }
    let with_subject = records.first().is_some_and(|r| r.subject.is_some());
    if let Some(row) = records.iter().position(|r| r.subject.is_some() != with_subject) {
        return Err(FitError::MixedSubjects { row });
    }
    let rt: Vec<f64> = records.iter().map(|r| r.rt_ms).collect();
    if !with_subject {
        return Ok((rt, false));
    }
    let grand = rt.iter().sum::<f64>() / rt.len() as f64;
    let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
    for r in records {
        let e = sums.entry(r.subject.as_deref().unwrap()).or_default();
        e.0 += r.rt_ms;
        e.1 += 1;
    }
    let centered = records
        .iter()
        .map(|r| {
            let (s, c) = sums[r.subject.as_deref().unwrap()];
            r.rt_ms - s / c as f64 + grand
        })
        .collect();
    Ok((centered, true))
}

struct Design {
    names: Vec<String>,
    x: DMatrix<f64>,
}

fn design(records: &[ReadingRecord], predictors: &[Predictor]) -> Result<Design, FitError> {
    let mut names = vec!["intercept".to_string()];
    for p in predictors {
        names.extend(p.columns().iter().map(|s| s.to_string()));
    }
    let mut x = DMatrix::zeros(records.len(), names.len());
    for (i, r) in records.iter().enumerate() {
        x[(i, 0)] = 1.0;
        let mut col = 1;
        for p in predictors {
            for v in p.values(r, i)? {
                x[(i, col)] = v;
                col += 1;
            }
        }
    }
    Ok(Design { names, x })
}

/// Modified Gram–Schmidt over the columns in order. The first column that is
/// (numerically) a combination of earlier ones is reported together with the
/// earlier columns that carry nonzero weight in that combination.
fn check_rank(d: &Design) -> Result<(), FitError> {
    let n = d.x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..d.x.ncols() {
        let orig = d.x.column(j).into_owned();
        let scale = orig.norm();
        let mut v = orig.clone();
        for q in &basis {
            v -= q * q.dot(&v);
        }
        let norm = v.norm();
        if scale == 0.0 || norm <= COLLINEAR_TOL * scale * (n as f64).sqrt() {
            let prev = d.x.columns(0, j).into_owned();
            let weights = prev
                .clone()
                .svd(true, true)
                .solve(&orig, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(j));
            let with = (0..j)
                .filter(|&k| (weights[k] * prev.column(k).norm()).abs() > 1e-8 * scale.max(1.0))
                .map(|k| d.names[k].clone())
                .collect();
            return Err(FitError::Collinear {
                column: d.names[j].clone(),
                with,
            });
        }
        basis.push(v / norm);
    }
    Ok(())
}

fn two_sided_p(t: f64, df: usize) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

/// Ordinary least squares with an intercept.
pub fn fit_linear(records: &[ReadingRecord], predictors: &[Predictor]) -> Result<RegressionFit, FitError> {
    if predictors.is_empty() {
        return Err(FitError::NoPredictors);
    }
    for (i, p) in predictors.iter().enumerate() {
        if predictors[..i].contains(p) {
            return Err(FitError::DuplicatePredictor(p.as_str()));
        }
    }
    let d = design(records, predictors)?;
    let params = d.names.len();
    let needed = MIN_LINEAR_RECORDS.max(params + 1);
    if records.len() < needed {
        return Err(FitError::TooFewRecords {
            needed,
            got: records.len(),
        });
    }
    check_rank(&d)?;
    let (y, subject_centered) = response(records)?;
    let y = DVector::from_vec(y);
    let n = records.len();

    let xtx = d.x.transpose() * &d.x;
    let xty = d.x.transpose() * &y;
    let chol = xtx.clone().cholesky().ok_or_else(|| FitError::Collinear {
        column: d.names[params - 1].clone(),
        with: d.names[..params - 1].to_vec(),
    })?;
    let beta = chol.solve(&xty);
    let inv = chol.inverse();
    let resid = &y - &d.x * &beta;
    let rss = resid.norm_squared();
    let mean = y.mean();
    let tss = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let df = n - params;
    let sigma2 = rss / df as f64;

    let mut coefficients = IndexMap::new();
    for (j, name) in d.names.iter().enumerate() {
        let b = beta[j];
        let se = (sigma2 * inv[(j, j)]).max(0.0).sqrt();
        let t = if se > 0.0 {
            b / se
        } else if b == 0.0 {
            0.0
        } else {
            b.signum() * f64::INFINITY
        };
        coefficients.insert(
            name.clone(),
            Coefficient {
                beta: b,
                se,
                t,
                p: two_sided_p(t, df),
            },
        );
    }
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    let contrast_scheme = if predictors.contains(&Predictor::ConditionContrasts) {
        SLIDING_SCHEME.to_string()
    } else {
        "none".to_string()
    };
    Ok(RegressionFit {
        coefficients,
        r_squared,
        n,
        predictors: predictors.to_vec(),
        contrast_scheme,
        residual_df: df,
        subject_centered,
    })
}

/// OLS residuals, for diagnostics.
pub fn residuals(records: &[ReadingRecord], fit: &RegressionFit) -> Result<Vec<f64>, FitError> {
    let d = design(records, &fit.predictors)?;
    let (y, _) = response(records)?;
    Ok((0..records.len())
        .map(|i| {
            let pred: f64 = d.names.iter().enumerate().map(|(j, n)| d.x[(i, j)] * fit.coefficients[n].beta).sum();
            y[i] - pred
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub ig: f64,
    pub fitted: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Local slope in ms per nat.
    pub slope: f64,
    pub slope_ci_low: f64,
    pub slope_ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothFit {
    pub grid: Vec<GridPoint>,
    /// Fraction of the ig range.
    pub bandwidth: f64,
    pub resamples: usize,
    /// Resamples dropped because some grid window was empty.
    pub failed_resamples: usize,
    pub controls: Vec<Predictor>,
    /// Bootstrap curves on the same shifted scale as `grid`.
    #[serde(skip)]
    pub boot_curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SmoothFit {
    /// Mean slope between grid points `from` and `to`, with a percentile
    /// interval over the bootstrap curves.
    pub fn mean_slope(&self, from: usize, to: usize) -> Interval {
        let dx = self.grid[to].ig - self.grid[from].ig;
        let estimate = (self.grid[to].fitted - self.grid[from].fitted) / dx;
        let mut boot: Vec<f64> = self.boot_curves.iter().map(|c| (c[to] - c[from]) / dx).collect();
        let (lo, hi) = percentile_band(&mut boot, estimate);
        Interval {
            estimate,
            ci_low: lo,
            ci_high: hi,
        }
    }

    /// Share of the curve's total decline (first to last grid point) that
    /// falls between `from` and the last point.
    pub fn decline_share_from(&self, from: usize) -> f64 {
        let first = self.grid[0].fitted;
        let last = self.grid[self.grid.len() - 1].fitted;
        (self.grid[from].fitted - last) / (first - last)
    }
}

/// 2.5/97.5 percentiles (linear interpolation), widened to contain `point`.
fn percentile_band(values: &mut [f64], point: f64) -> (f64, f64) {
    if values.is_empty() {
        return (point, point);
    }
    values.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
    };
    (q(0.025).min(point), q(0.975).max(point))
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        (1.0 - u * u * u).powi(3)
    }
}

/// Local-linear fit at each grid point; `(level, slope)` per point.
fn local_linear(x: &[f64], y: &[f64], grid: &[f64], h: f64, bandwidth: f64) -> Result<Vec<(f64, f64)>, FitError> {
    grid.iter()
        .map(|&x0| {
            let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
            let w: Vec<f64> = x.iter().map(|&xi| tricube((xi - x0).abs() / h)).collect();
            for ((&wi, &xi), &yi) in w.iter().zip(x).zip(y) {
                sw += wi;
                swx += wi * xi;
                swy += wi * yi;
            }
            let too_small = FitError::BandwidthTooSmall { bandwidth, at: x0 };
            if sw <= 0.0 {
                return Err(too_small);
            }
            let (xm, ym) = (swx / sw, swy / sw);
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for ((&wi, &xi), &yi) in w.iter().zip(x).zip(y) {
                sxx += wi * (xi - xm) * (xi - xm);
                sxy += wi * (xi - xm) * (yi - ym);
            }
            if sxx <= 1e-12 * sw * h * h {
                return Err(too_small);
            }
            let slope = sxy / sxx;
            Ok((ym + slope * (x0 - xm), slope))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothOptions {
    /// Window half-width as a fraction of the observed ig range.
    pub bandwidth: f64,
    pub resamples: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Linear controls removed from rt before smoothing.
    pub controls: Vec<Predictor>,
}

impl Default for SmoothOptions {
    fn default() -> Self {
        Self {
            bandwidth: 0.3,
            resamples: 200,
            seed: 0,
            grid_points: DEFAULT_GRID_POINTS,
            controls: Vec::new(),
        }
    }
}

/// Local-linear regression of rt on ig with tricube weights, shifted so the
/// highest-ig grid point sits at 0, with bootstrap percentile bands.
///
/// Controls enter as partial residuals: rt minus each control's contribution
/// from the joint OLS fit of rt on ig and the controls.
pub fn smooth_fit(records: &[ReadingRecord], opts: &SmoothOptions) -> Result<SmoothFit, FitError> {
    if records.len() < MIN_SMOOTH_RECORDS {
        return Err(FitError::TooFewRecords {
            needed: MIN_SMOOTH_RECORDS,
            got: records.len(),
        });
    }
    if !(opts.bandwidth > 0.0 && opts.bandwidth.is_finite()) {
        return Err(FitError::InvalidBandwidth(opts.bandwidth));
    }
    if opts.grid_points < 2 {
        return Err(FitError::InvalidGrid(opts.grid_points));
    }
    let controls: Vec<Predictor> = opts.controls.iter().copied().filter(|&p| p != Predictor::Ig).collect();
    let x: Vec<f64> = records.iter().map(|r| r.ig_nats).collect();
    if let Some(row) = x.iter().position(|v| !v.is_finite()) {
        return Err(FitError::NonFinite {
            column: "ig".into(),
            row,
        });
    }
    let (mut y, _) = response(records)?;
    if !controls.is_empty() {
        let mut with_ig = vec![Predictor::Ig];
        with_ig.extend(&controls);
        let fit = fit_linear(records, &with_ig)?;
        let d = design(records, &controls)?;
        for (i, yi) in y.iter_mut().enumerate() {
            for (j, name) in d.names.iter().enumerate().skip(1) {
                *yi -= d.x[(i, j)] * fit.coefficients[name].beta;
            }
        }
    }

    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(FitError::ConstantIg(lo));
    }
    let m = opts.grid_points;
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let h = opts.bandwidth * (hi - lo);
    let main = local_linear(&x, &y, &grid, h, opts.bandwidth)?;
    let offset = main[m - 1].0;

    let boots: Vec<Option<Vec<(f64, f64)>>> = (0..opts.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds::rng(seeds::item_seed(opts.seed, r as u64), Stream::Bootstrap);
            let n = x.len();
            let (mut bx, mut by) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let i = rng.random_range(0..n);
                bx.push(x[i]);
                by.push(y[i]);
            }
            local_linear(&bx, &by, &grid, h, opts.bandwidth).ok()
        })
        .collect();
    let ok: Vec<Vec<(f64, f64)>> = boots.iter().flatten().cloned().collect();
    let failed_resamples = opts.resamples - ok.len();

    let points = (0..m)
        .map(|g| {
            let fitted = main[g].0 - offset;
            let slope = main[g].1;
            let mut levels: Vec<f64> = ok.iter().map(|c| c[g].0 - offset).collect();
            let mut slopes: Vec<f64> = ok.iter().map(|c| c[g].1).collect();
            let (ci_low, ci_high) = percentile_band(&mut levels, fitted);
            let (slope_ci_low, slope_ci_high) = percentile_band(&mut slopes, slope);
            GridPoint {
                ig: grid[g],
                fitted,
                ci_low,
                ci_high,
                slope,
                slope_ci_low,
                slope_ci_high,
            }
        })
        .collect();
    Ok(SmoothFit {
        grid: points,
        bandwidth: opts.bandwidth,
        resamples: opts.resamples,
        failed_resamples,
        controls,
        boot_curves: ok.iter().map(|c| c.iter().map(|(l, _)| l - offset).collect()).collect(),
    })
}
