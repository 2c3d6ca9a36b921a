//! Indecisiveness regulator: choose the IS threshold that balances the RMSE
//! of confident grades against the share of answers sent to a human.
//!
//! For each candidate threshold the sweep records the confident count, the
//! confident RMSE and the penalty `1 - N_k/N`. A three-parameter logistic
//! is fitted to the RMSE (standardised for S-CAL, max-normalised for N-CAL)
//! and a quartic to the penalty; each CAL curve is the equal-weight sum of
//! the two fits. S-CAL is optimised at its minimum, N-CAL at the first
//! sign change of its second derivative.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{confident_rmse, ScoredItem};

/// Dense-grid resolution for optimum search.
pub const SEARCH_GRID_POINTS: usize = 2001;
pub const SEARCH_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_EXCLUSION_CUTOFF: f64 = 0.02;
/// CAL weights are fixed: half loss, half penalty.
pub const CAL_WEIGHT: f64 = 0.5;

const LM_MAX_ITERATIONS: usize = 500;
const LM_STEP_TOLERANCE: f64 = 1e-9;
const FLAT_STEEPNESS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrmError {
    #[error("threshold grid must be non-empty and ascending")]
    BadGrid,
    #[error("no items to calibrate on")]
    NoItems,
    #[error("no threshold in the grid admits a confident item")]
    AllUndefined,
    #[error("need at least {needed} points for the fit, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("logistic fit diverged (best so far L={}, k={}, t0={})", best.l, best.k, best.t0)]
    FitDiverged { best: LogisticFit },
    #[error("polynomial fit is rank deficient: {distinct} distinct x values")]
    RankDeficient { distinct: usize },
    #[error("second derivative never changes sign on [{0}, {1}]")]
    NoInflection(f64, f64),
}

/// 0.000, 0.005, ..., 0.500.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 200.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub s_k: f64,
    pub n_k: usize,
    /// Confident-subset RMSE; `None` when no item is confident.
    pub e_k: Option<f64>,
    /// 1 - N_k / N.
    pub penalty: f64,
    /// E_k / max E_k over defined points.
    pub e_norm: Option<f64>,
    /// (E_k - mean) / sample sd over defined points.
    pub z_e: Option<f64>,
}

pub fn threshold_sweep(items: &[ScoredItem], grid: &[f64]) -> Result<Vec<ThresholdPoint>, IrmError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(IrmError::BadGrid);
    }
    if items.is_empty() {
        return Err(IrmError::NoItems);
    }
    let total = items.len() as f64;
    let mut points: Vec<ThresholdPoint> = grid
        .iter()
        .map(|&s_k| {
            let c = confident_rmse(items, s_k);
            ThresholdPoint { s_k, n_k: c.n_k, e_k: c.e_k, penalty: 1.0 - c.n_k as f64 / total, e_norm: None, z_e: None }
        })
        .collect();

    let defined: Vec<f64> = points.iter().filter_map(|p| p.e_k).collect();
    if defined.is_empty() {
        return Err(IrmError::AllUndefined);
    }
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let sd = if defined.len() > 1 {
        (defined.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    for p in &mut points {
        if let Some(e) = p.e_k {
            p.e_norm = Some(if max > 0.0 { e / max } else { 0.0 });
            p.z_e = Some(if sd > 0.0 { (e - mean) / sd } else { 0.0 });
        }
    }
    Ok(points)
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `l / (1 + exp(-k (x - t0)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub l: f64,
    pub k: f64,
    pub t0: f64,
    pub residual_rms: f64,
    /// |k| < 1e-3: the data carry no usable transition. A flat fit is the
    /// saturated limit and evaluates to the constant `l`.
    pub flat: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn eval(&self, x: f64) -> f64 {
        if self.flat {
            return self.l;
        }
        self.l * sigmoid(self.k * (x - self.t0))
    }

    pub fn first_derivative(&self, x: f64) -> f64 {
        if self.flat {
            return 0.0;
        }
        let s = sigmoid(self.k * (x - self.t0));
        self.l * self.k * s * (1.0 - s)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if self.flat {
            return 0.0;
        }
        let s = sigmoid(self.k * (x - self.t0));
        self.l * self.k * self.k * s * (1.0 - s) * (1.0 - 2.0 * s)
    }
}

fn sse(params: &Vector3<f64>, xs: &[f64], ys: &[f64]) -> f64 {
    let f = LogisticFit { l: params[0], k: params[1], t0: params[2], residual_rms: 0.0, flat: false, iterations: 0 };
    xs.iter().zip(ys).map(|(x, y)| (f.eval(*x) - y).powi(2)).sum()
}

/// One Levenberg-Marquardt run from `start`.
fn levenberg_marquardt(start: Vector3<f64>, xs: &[f64], ys: &[f64]) -> (Vector3<f64>, f64, usize) {
    let mut p = start;
    let mut cost = sse(&p, xs, ys);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < LM_MAX_ITERATIONS {
        iterations += 1;
        let (l, k, t0) = (p[0], p[1], p[2]);
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (&x, &y) in xs.iter().zip(ys) {
            let s = sigmoid(k * (x - t0));
            let ds = s * (1.0 - s);
            let j = Vector3::new(s, l * ds * (x - t0), -l * ds * k);
            let r = l * s - y;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut stepped = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = p + delta;
            let c = sse(&candidate, xs, ys);
            if c.is_finite() && c <= cost {
                let small = (0..3).all(|i| delta[i].abs() < LM_STEP_TOLERANCE * (1.0 + p[i].abs()));
                p = candidate;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                stepped = true;
                if small {
                    return (p, cost, iterations);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped || cost == 0.0 {
            break;
        }
    }
    (p, cost, iterations)
}

/// Nonlinear least squares fit of `l / (1 + exp(-k (x - t0)))`.
///
/// Starts from L = max|y| (signed), t0 at the half-range crossing and
/// k = +-4 / x-span, plus a few alternative midpoints and steepnesses; the
/// lowest residual wins.
pub fn fit_logistic(xs: &[f64], ys: &[f64]) -> Result<LogisticFit, IrmError> {
    if xs.len() != ys.len() {
        return Err(IrmError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 4 {
        return Err(IrmError::InsufficientPoints { needed: 4, got: xs.len() });
    }
    let n = xs.len() as f64;
    let (xmin, xmax) = min_max(xs);
    let (ymin, ymax) = min_max(ys);
    let span = (xmax - xmin).max(f64::EPSILON);

    if ymax - ymin <= 1e-12 * ymax.abs().max(1.0) {
        let c = ys.iter().sum::<f64>() / n;
        let residual = (ys.iter().map(|y| (y - c).powi(2)).sum::<f64>() / n).sqrt();
        return Ok(LogisticFit {
            l: c,
            k: 0.0,
            t0: 0.5 * (xmin + xmax),
            residual_rms: residual,
            flat: true,
            iterations: 0,
        });
    }

    let l0 = if ymax.abs() >= ymin.abs() { ymax } else { ymin };
    let half = 0.5 * (ymin + ymax);
    let t0_cross = half_crossing(xs, ys, half).unwrap_or(0.5 * (xmin + xmax));
    // Direction of the trend in y, flipped when the amplitude is negative.
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let dir = if (cov >= 0.0) == (l0 >= 0.0) { 1.0 } else { -1.0 };
    let k0 = dir * 4.0 / span;

    let mut starts = vec![Vector3::new(l0, k0, t0_cross)];
    for frac in [0.25, 0.5, 0.75] {
        for kmul in [1.0, 4.0, 16.0] {
            starts.push(Vector3::new(l0, k0 * kmul, xmin + frac * span));
        }
    }
    starts.push(Vector3::new(l0, k0 * 4.0, t0_cross));
    starts.push(Vector3::new(l0, k0 * 16.0, t0_cross));

    let mut best: Option<(Vector3<f64>, f64, usize)> = None;
    for s in starts {
        let (p, cost, it) = levenberg_marquardt(s, xs, ys);
        if !cost.is_finite() || !p.iter().all(|v| v.is_finite()) {
            continue;
        }
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((p, cost, it));
        }
    }
    let Some((p, cost, iterations)) = best else {
        let fallback = LogisticFit { l: l0, k: k0, t0: t0_cross, residual_rms: f64::NAN, flat: false, iterations: 0 };
        return Err(IrmError::FitDiverged { best: fallback });
    };
    if p[1].abs() < FLAT_STEEPNESS {
        let c = ys.iter().sum::<f64>() / n;
        let residual = (ys.iter().map(|y| (y - c).powi(2)).sum::<f64>() / n).sqrt();
        return Ok(LogisticFit { l: c, k: 0.0, t0: p[2], residual_rms: residual, flat: true, iterations });
    }
    Ok(LogisticFit { l: p[0], k: p[1], t0: p[2], residual_rms: (cost / n).sqrt(), flat: false, iterations })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn half_crossing(xs: &[f64], ys: &[f64], half: f64) -> Option<f64> {
    xs.windows(2).zip(ys.windows(2)).find_map(|(xw, yw)| {
        let (a, b) = (yw[0] - half, yw[1] - half);
        if a == 0.0 {
            Some(xw[0])
        } else if a * b < 0.0 {
            Some(xw[0] + (xw[1] - xw[0]) * a / (a - b))
        } else {
            None
        }
    })
}

/// `p0 + p1 x + p2 x^2 + p3 x^3 + p4 x^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub coefficients: [f64; 5],
    pub residual_rms: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn first_derivative(&self, x: f64) -> f64 {
        let p = &self.coefficients;
        p[1] + 2.0 * p[2] * x + 3.0 * p[3] * x * x + 4.0 * p[4] * x.powi(3)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let p = &self.coefficients;
        2.0 * p[2] + 6.0 * p[3] * x + 12.0 * p[4] * x * x
    }
}

/// Least-squares quartic via Householder QR of the (column-scaled)
/// Vandermonde matrix.
pub fn fit_poly4(xs: &[f64], ys: &[f64]) -> Result<PolyFit, IrmError> {
    if xs.len() != ys.len() {
        return Err(IrmError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 5 {
        return Err(IrmError::InsufficientPoints { needed: 5, got: xs.len() });
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 5 {
        return Err(IrmError::RankDeficient { distinct: sorted.len() });
    }
    // Scale x into [-1, 1] so the columns are comparable, then undo it on
    // the coefficients.
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(xs.len(), 5, |i, j| (xs[i] / scale).powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let qr = a.qr();
    let r = qr.r();
    let r_max = (0..5).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..5).any(|i| r[(i, i)].abs() <= 1e-13 * r_max) {
        return Err(IrmError::RankDeficient { distinct: sorted.len() });
    }
    let qtb = qr.q().transpose() * &b;
    let c = r.solve_upper_triangular(&qtb).ok_or(IrmError::RankDeficient { distinct: sorted.len() })?;
    let mut coefficients = [0.0; 5];
    for (j, slot) in coefficients.iter_mut().enumerate() {
        *slot = c[j] / scale.powi(j as i32);
    }
    let mut fit = PolyFit { coefficients, residual_rms: 0.0 };
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (fit.eval(*x) - y).powi(2)).sum();
    fit.residual_rms = (ss / xs.len() as f64).sqrt();
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalMode {
    #[serde(rename = "s-cal")]
    Scal,
    #[serde(rename = "n-cal")]
    Ncal,
}

/// `0.5 * rmse_fit(x) + 0.5 * penalty_fit(x)` on `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalCurve {
    pub mode: CalMode,
    pub rmse_fit: LogisticFit,
    pub penalty_fit: PolyFit,
    pub domain: (f64, f64),
}

impl CalCurve {
    pub fn eval(&self, x: f64) -> f64 {
        CAL_WEIGHT * self.rmse_fit.eval(x) + CAL_WEIGHT * self.penalty_fit.eval(x)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        CAL_WEIGHT * self.rmse_fit.second_derivative(x) + CAL_WEIGHT * self.penalty_fit.second_derivative(x)
    }

    fn search_grid(&self) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = self.domain;
        let step = (hi - lo) / (SEARCH_GRID_POINTS - 1) as f64;
        (0..SEARCH_GRID_POINTS).map(move |i| if i == SEARCH_GRID_POINTS - 1 { hi } else { lo + step * i as f64 })
    }
}

/// Fits both curves of one CAL variant. Points with S_k below
/// `exclusion_cutoff` (and points with undefined RMSE) are left out of the
/// logistic fit only. Returns the curve and the excluded S_k values.
pub fn assemble_cal(
    sweep: &[ThresholdPoint],
    mode: CalMode,
    exclusion_cutoff: f64,
) -> Result<(CalCurve, Vec<f64>), IrmError> {
    if sweep.is_empty() {
        return Err(IrmError::BadGrid);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for p in sweep {
        let y = match mode {
            CalMode::Scal => p.z_e,
            CalMode::Ncal => p.e_norm,
        };
        if p.s_k < exclusion_cutoff {
            excluded.push(p.s_k);
            continue;
        }
        if let Some(y) = y {
            xs.push(p.s_k);
            ys.push(y);
        }
    }
    let rmse_fit = fit_logistic(&xs, &ys)?;
    let px: Vec<f64> = sweep.iter().map(|p| p.s_k).collect();
    let py: Vec<f64> = sweep.iter().map(|p| p.penalty).collect();
    let penalty_fit = fit_poly4(&px, &py)?;
    let domain = (px[0], px[px.len() - 1]);
    Ok((CalCurve { mode, rmse_fit, penalty_fit, domain }, excluded))
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Argmin of the curve: dense-grid scan, then golden-section refinement
/// between the neighbours of the best grid point. Ties go to the smaller IS.
pub fn find_scal_minimum(curve: &CalCurve) -> f64 {
    let grid: Vec<f64> = curve.search_grid().collect();
    let mut best = 0;
    let mut best_val = curve.eval(grid[0]);
    for (i, &x) in grid.iter().enumerate().skip(1) {
        let v = curve.eval(x);
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let refined = golden_section_min(|x| curve.eval(x), a, b, SEARCH_TOLERANCE);
    let refined_val = curve.eval(refined);
    if refined_val < best_val || (refined_val == best_val && refined < grid[best]) {
        refined
    } else {
        grid[best]
    }
}

/// Smallest x where the curve's second derivative changes sign: sign scan
/// over the dense grid, then bisection to 1e-6.
pub fn find_ncal_first_inflection(curve: &CalCurve) -> Result<f64, IrmError> {
    let grid: Vec<f64> = curve.search_grid().collect();
    let d2: Vec<f64> = grid.iter().map(|&x| curve.second_derivative(x)).collect();
    for i in 0..grid.len() - 1 {
        let (a, b) = (d2[i], d2[i + 1]);
        if a == 0.0 {
            // Exact zero on the grid: an inflection only if the sign flips across it.
            if i > 0 && d2[i - 1] * b < 0.0 {
                return Ok(grid[i]);
            }
            continue;
        }
        if a * b < 0.0 {
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            let sign_lo = a.signum();
            while hi - lo > SEARCH_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let v = curve.second_derivative(mid);
                if v == 0.0 {
                    return Ok(mid);
                }
                if v.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(IrmError::NoInflection(curve.domain.0, curve.domain.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    NcalInflection,
    ScalMinimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub optimal_is_scal: f64,
    pub optimal_is_ncal: f64,
    /// True when N-CAL had no inflection and fell back to the S-CAL minimum.
    pub ncal_fallback: bool,
    pub sweep: Vec<ThresholdPoint>,
    pub excluded_points: Vec<f64>,
    pub exclusion_cutoff: f64,
    pub scal: CalCurve,
    pub ncal: CalCurve,
}

impl CalibrationResult {
    pub fn threshold(&self, mode: ThresholdMode) -> f64 {
        match mode {
            ThresholdMode::NcalInflection => self.optimal_is_ncal,
            ThresholdMode::ScalMinimum => self.optimal_is_scal,
        }
    }
}

/// Full threshold calibration: sweep, both CAL curves, both optima.
pub fn calibrate(items: &[ScoredItem], grid: &[f64], exclusion_cutoff: f64) -> Result<CalibrationResult, IrmError> {
    let sweep = threshold_sweep(items, grid)?;
    let (scal, excluded) = assemble_cal(&sweep, CalMode::Scal, exclusion_cutoff)?;
    let (ncal, _) = assemble_cal(&sweep, CalMode::Ncal, exclusion_cutoff)?;
    let optimal_is_scal = find_scal_minimum(&scal);
    let (optimal_is_ncal, ncal_fallback) = match find_ncal_first_inflection(&ncal) {
        Ok(x) => (x, false),
        Err(e) => {
            log::warn!("{e}; using the S-CAL minimum for N-CAL");
            (optimal_is_scal, true)
        }
    };
    Ok(CalibrationResult {
        optimal_is_scal,
        optimal_is_ncal,
        ncal_fallback,
        sweep,
        excluded_points: excluded,
        exclusion_cutoff,
        scal,
        ncal,
    })
}
