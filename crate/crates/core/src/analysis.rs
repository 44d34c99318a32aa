//! Fits of depth against hopping strength and the critical-point estimates
//! built on them.
//!
//! The fit model is the even rational function
//! `f(t) = (a t² + b t⁴ + e t⁶) / (1 + c t² + d t⁴ + f t⁶)`, refined by
//! Levenberg–Marquardt from several starts. Peaks of `f′` per system size are
//! extrapolated linearly in `1/N`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::par_map_range;

pub const MAX_ITERATIONS: usize = 500;
pub const REL_TOLERANCE: f64 = 1e-10;
pub const PEAK_GRID_STEP: f64 = 1e-4;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Perturbed starts on top of the polynomial and linearized ones.
pub const PERTURBED_STARTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("need at least 3 distinct sizes, got {0}")]
    TooFewSizes(usize),
    #[error("invalid data point {index}: {reason}")]
    BadPoint { index: usize, reason: &'static str },
    #[error("search interval [{0}, {1}] is empty or outside the data")]
    BadInterval(f64, f64),
    #[error("fit is not usable")]
    UnusableFit,
}

/// `(a, b, c, d, e, f)` in the order of the model above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rational(pub [f64; 6]);

impl Rational {
    fn parts(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let [a, b, c, d, e, f] = self.0;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t2 * t2, t2 * t3);
        let p = [a * t2 + b * t4 + e * t4 * t2, 2.0 * a * t + 4.0 * b * t3 + 6.0 * e * t5, 2.0 * a + 12.0 * b * t2 + 30.0 * e * t4];
        let q = [1.0 + c * t2 + d * t4 + f * t4 * t2, 2.0 * c * t + 4.0 * d * t3 + 6.0 * f * t5, 2.0 * c + 12.0 * d * t2 + 30.0 * f * t4];
        (p, q)
    }

    pub fn value(&self, t: f64) -> f64 {
        let (p, q) = self.parts(t);
        p[0] / q[0]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (p, q) = self.parts(t);
        (p[1] * q[0] - p[0] * q[1]) / (q[0] * q[0])
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let (p, q) = self.parts(t);
        let num = p[1] * q[0] - p[0] * q[1];
        ((p[2] * q[0] - p[0] * q[2]) * q[0] - 2.0 * q[1] * num) / (q[0] * q[0] * q[0])
    }

    pub fn denominator(&self, t: f64) -> f64 {
        self.parts(t).1[0]
    }

    /// Gradient of `f(t)` with respect to the six coefficients.
    fn gradient(&self, t: f64) -> [f64; 6] {
        let (p, q) = self.parts(t);
        let (t2, t4) = (t * t, t.powi(4));
        let t6 = t4 * t2;
        let r = p[0] / (q[0] * q[0]);
        [t2 / q[0], t4 / q[0], -r * t2, -r * t4, t6 / q[0], -r * t6]
    }
}

/// One `(t, y)` observation with its least-squares weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub t: f64,
    pub y: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Rational,
    /// `sqrt(Σ w (y − f)²)`.
    pub residual: f64,
    pub converged: bool,
    /// False when no start converged to a positive denominator.
    pub usable: bool,
    pub iterations: usize,
    /// Row-major 6×6, scaled by the reduced χ² when there are spare points.
    pub covariance: Vec<f64>,
    pub t_range: (f64, f64),
}

fn ssr(model: &Rational, pts: &[WeightedPoint]) -> f64 {
    pts.iter().map(|p| p.w * (p.y - model.value(p.t)).powi(2)).sum()
}

fn denominator_positive(model: &Rational, pts: &[WeightedPoint]) -> bool {
    pts.iter().all(|p| model.denominator(p.t) > 0.0)
}

/// `(JᵀWJ, JᵀW r)` at `model`.
fn normal_equations(model: &Rational, pts: &[WeightedPoint]) -> (Mat<f64>, Mat<f64>) {
    let mut jtj = Mat::<f64>::zeros(6, 6);
    let mut jtr = Mat::<f64>::zeros(6, 1);
    for p in pts {
        let g = model.gradient(p.t);
        let r = p.y - model.value(p.t);
        for i in 0..6 {
            jtr[(i, 0)] += p.w * g[i] * r;
            for j in 0..6 {
                jtj[(i, j)] += p.w * g[i] * g[j];
            }
        }
    }
    (jtj, jtr)
}

fn solve(a: &Mat<f64>, b: &Mat<f64>) -> Option<Vec<f64>> {
    let x = a.partial_piv_lu().solve(b);
    let v: Vec<f64> = (0..x.nrows()).map(|i| x[(i, 0)]).collect();
    v.iter().all(|x| x.is_finite()).then_some(v)
}

/// Ridge-stabilized linear least squares `min Σ w (y − Σ_k c_k φ_k)²`.
fn linear_fit(rows: &[(Vec<f64>, f64, f64)]) -> Option<Vec<f64>> {
    let k = rows.first()?.0.len();
    let mut a = Mat::<f64>::zeros(k, k);
    let mut b = Mat::<f64>::zeros(k, 1);
    for (phi, y, w) in rows {
        for i in 0..k {
            b[(i, 0)] += w * phi[i] * y;
            for j in 0..k {
                a[(i, j)] += w * phi[i] * phi[j];
            }
        }
    }
    let scale = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
    for i in 0..k {
        a[(i, i)] += 1e-14 * scale;
    }
    solve(&a, &b)
}

struct Descent {
    model: Rational,
    ssr: f64,
    converged: bool,
    iterations: usize,
}

/// Levenberg–Marquardt with Marquardt's diagonal scaling. Only steps that
/// lower the residual and keep the denominator positive are accepted.
fn descend(start: Rational, pts: &[WeightedPoint]) -> Option<Descent> {
    if !denominator_positive(&start, pts) {
        return None;
    }
    let scale: f64 = pts.iter().map(|p| p.w * p.y * p.y).sum();
    let mut model = start;
    let mut cur = ssr(&model, pts);
    if !cur.is_finite() {
        return None;
    }
    let mut mu = 1e-3;
    for it in 0..MAX_ITERATIONS {
        if cur <= 1e-30 * scale.max(1e-300) {
            return Some(Descent { model, ssr: cur, converged: true, iterations: it });
        }
        let (jtj, jtr) = normal_equations(&model, pts);
        let mut accepted = false;
        while mu < 1e20 {
            let mut damped = jtj.clone();
            for i in 0..6 {
                damped[(i, i)] += mu * jtj[(i, i)].max(1e-300);
            }
            if let Some(step) = solve(&damped, &jtr) {
                let mut next = model;
                for i in 0..6 {
                    next.0[i] += step[i];
                }
                let s = ssr(&next, pts);
                if s.is_finite() && s < cur && denominator_positive(&next, pts) {
                    let rel = (cur - s) / cur;
                    model = next;
                    cur = s;
                    mu = (mu / 3.0).max(1e-15);
                    accepted = true;
                    if rel <= REL_TOLERANCE {
                        return Some(Descent { model, ssr: cur, converged: true, iterations: it + 1 });
                    }
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent direction left: a stationary point
            return Some(Descent { model, ssr: cur, converged: true, iterations: it });
        }
    }
    Some(Descent { model, ssr: cur, converged: false, iterations: MAX_ITERATIONS })
}

/// Starting coefficient sets: the polynomial fit (`c = d = f = 0`), the
/// linearized fit of `y·Q = P`, and perturbations of the polynomial fit.
fn starts(pts: &[WeightedPoint]) -> Vec<Rational> {
    let mut out = Vec::new();
    let poly_rows: Vec<_> = pts.iter().map(|p| (vec![p.t.powi(2), p.t.powi(4), p.t.powi(6)], p.y, p.w)).collect();
    let poly = linear_fit(&poly_rows).map(|v| Rational([v[0], v[1], 0.0, 0.0, v[2], 0.0]));
    if let Some(p) = poly {
        out.push(p);
    }
    let lin_rows: Vec<_> = pts
        .iter()
        .map(|p| {
            let (t2, t4, t6) = (p.t.powi(2), p.t.powi(4), p.t.powi(6));
            (vec![t2, t4, -p.y * t2, -p.y * t4, t6, -p.y * t6], p.y, p.w)
        })
        .collect();
    if let Some(v) = linear_fit(&lin_rows) {
        out.push(Rational([v[0], v[1], v[2], v[3], v[4], v[5]]));
    }
    let base = poly.unwrap_or(Rational([0.0; 6]));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..PERTURBED_STARTS {
        let mut c = base;
        for i in [0, 1, 4] {
            let z: f64 = StandardNormal.sample(&mut rng);
            c.0[i] *= 1.0 + 0.5 * z;
        }
        for i in [2, 3, 5] {
            let z: f64 = StandardNormal.sample(&mut rng);
            c.0[i] = 0.5 * z.abs();
        }
        out.push(c);
    }
    out
}

fn covariance(model: &Rational, pts: &[WeightedPoint], ssr: f64) -> Vec<f64> {
    let (jtj, _) = normal_equations(model, pts);
    let inv = jtj.partial_piv_lu().inverse();
    let dof = pts.len().saturating_sub(6);
    let s2 = if dof > 0 { ssr / dof as f64 } else { 1.0 };
    let mut out = vec![0.0; 36];
    for i in 0..6 {
        for j in 0..6 {
            let v = inv[(i, j)] * s2;
            out[i * 6 + j] = if v.is_finite() { v } else { 0.0 };
        }
    }
    out
}

/// Weighted rational fit from all starts; keeps the lowest converged residual.
pub fn fit_rational(pts: &[WeightedPoint]) -> Result<FitResult, AnalysisError> {
    if pts.len() < 8 {
        return Err(AnalysisError::TooFewPoints { need: 8, got: pts.len() });
    }
    for (index, p) in pts.iter().enumerate() {
        if !(p.t.is_finite() && p.y.is_finite() && p.w.is_finite()) {
            return Err(AnalysisError::BadPoint { index, reason: "non-finite value" });
        }
        if p.t < 0.0 {
            return Err(AnalysisError::BadPoint { index, reason: "negative t" });
        }
        if p.w <= 0.0 {
            return Err(AnalysisError::BadPoint { index, reason: "non-positive weight" });
        }
    }
    let t_range = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.t), hi.max(p.t)));
    let runs: Vec<Descent> = starts(pts).into_iter().filter_map(|s| descend(s, pts)).collect();
    let pick = |converged: bool| {
        runs.iter()
            .filter(|d| d.converged || !converged)
            .min_by(|a, b| a.ssr.total_cmp(&b.ssr))
    };
    let (best, usable) = match pick(true) {
        Some(d) => (d, true),
        None => match pick(false) {
            Some(d) => (d, false),
            None => {
                return Ok(FitResult {
                    coefficients: Rational([0.0; 6]),
                    residual: f64::NAN,
                    converged: false,
                    usable: false,
                    iterations: 0,
                    covariance: vec![0.0; 36],
                    t_range,
                })
            }
        },
    };
    Ok(FitResult {
        coefficients: best.model,
        residual: best.ssr.sqrt(),
        converged: best.converged,
        usable: usable && denominator_positive(&best.model, pts),
        iterations: best.iterations,
        covariance: covariance(&best.model, pts, best.ssr),
        t_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakKind {
    Interior,
    /// An interior maximum exists but an endpoint of the interval is higher.
    BoundaryDominated,
    /// `f′` has no interior local maximum on the interval.
    NoInteriorPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t: f64,
    /// `f′(t*)`.
    pub value: f64,
    /// `f‴(t*)`, negative at a proper maximum.
    pub curvature: f64,
    pub kind: PeakKind,
}

/// Maximizes `f′` on `[lo, hi]`: grid search, then golden-section refinement.
pub fn derivative_peak_of(model: &Rational, lo: f64, hi: f64) -> Result<Peak, AnalysisError> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(AnalysisError::BadInterval(lo, hi));
    }
    let n = ((hi - lo) / PEAK_GRID_STEP).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| (lo + i as f64 * PEAK_GRID_STEP).min(hi)).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| model.derivative(t)).collect();
    let interior = (1..n)
        .filter(|&i| vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] && (vals[i] > vals[i - 1] || vals[i] > vals[i + 1]))
        .max_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let curvature = |t: f64| {
        let h = 1e-4;
        (model.second_derivative(t + h) - model.second_derivative(t - h)) / (2.0 * h)
    };
    let Some(i) = interior else {
        let i = if vals[n] > vals[0] { n } else { 0 };
        return Ok(Peak { t: grid[i], value: vals[i], curvature: curvature(grid[i]), kind: PeakKind::NoInteriorPeak });
    };
    let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (model.derivative(x1), model.derivative(x2));
    while b - a > 1e-10 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = model.derivative(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = model.derivative(x1);
        }
    }
    let t = 0.5 * (a + b);
    let value = model.derivative(t);
    let kind = if vals[0] > value || vals[n] > value { PeakKind::BoundaryDominated } else { PeakKind::Interior };
    Ok(Peak { t, value, curvature: curvature(t), kind })
}

/// [`derivative_peak_of`] for a fit, restricted to its data range.
pub fn derivative_peak(fit: &FitResult, lo: f64, hi: f64) -> Result<Peak, AnalysisError> {
    if !fit.usable {
        return Err(AnalysisError::UnusableFit);
    }
    let (tmin, tmax) = fit.t_range;
    if lo < tmin - 1e-12 || hi > tmax + 1e-12 {
        return Err(AnalysisError::BadInterval(lo, hi));
    }
    derivative_peak_of(&fit.coefficients, lo, hi)
}

/// Standard deviation of the peak location over coefficient draws from the
/// fit covariance. Draws whose peak is not interior are ignored.
pub fn bootstrap_peak_sigma(fit: &FitResult, lo: f64, hi: f64, resamples: usize, seed: u64) -> Result<f64, AnalysisError> {
    let center = derivative_peak(fit, lo, hi)?;
    let chol = cholesky6(&fit.covariance);
    let peaks: Vec<Option<f64>> = par_map_range(resamples, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let z: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let mut c = fit.coefficients;
        for i in 0..6 {
            c.0[i] += (0..=i).map(|j| chol[i * 6 + j] * z[j]).sum::<f64>();
        }
        let p = derivative_peak_of(&c, lo, hi).ok()?;
        (p.kind != PeakKind::NoInteriorPeak).then_some(p.t)
    });
    let ts: Vec<f64> = peaks.into_iter().flatten().collect();
    if ts.len() < 2 {
        return Ok(0.0);
    }
    let var = ts.iter().map(|t| (t - center.t).powi(2)).sum::<f64>() / (ts.len() - 1) as f64;
    Ok(var.sqrt())
}

/// Lower-triangular factor of a 6×6 covariance; non-positive pivots (flat
/// directions) are zeroed.
fn cholesky6(cov: &[f64]) -> Vec<f64> {
    let mut l = vec![0.0; 36];
    for i in 0..6 {
        for j in 0..=i {
            let s = cov[i * 6 + j] - (0..j).map(|k| l[i * 6 + k] * l[j * 6 + k]).sum::<f64>();
            if i == j {
                l[i * 6 + i] = if s > 0.0 { s.sqrt() } else { 0.0 };
            } else if l[j * 6 + j] > 0.0 {
                l[i * 6 + j] = s / l[j * 6 + j];
            }
        }
    }
    l
}

/// Weighted straight line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

/// With every `σ > 0` the errors are taken as absolute; otherwise unit
/// weights are used and the errors come from the scatter of the points.
pub fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> LineFit {
    let known = sigma.iter().all(|s| s.is_finite() && *s > 0.0);
    let w: Vec<f64> = if known { sigma.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; x.len()] };
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        s += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    let det = s * sxx - sx * sx;
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let scale = if known {
        1.0
    } else {
        let ssr: f64 = (0..x.len()).map(|i| (y[i] - intercept - slope * x[i]).powi(2)).sum();
        if x.len() > 2 { ssr / (x.len() - 2) as f64 } else { 0.0 }
    };
    LineFit {
        intercept,
        slope,
        intercept_se: (sxx / det * scale).sqrt(),
        slope_se: (s / det * scale).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizePeak {
    pub n: usize,
    pub t: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub peaks: Vec<SizePeak>,
    pub t_c: f64,
    pub slope: f64,
    pub t_c_se: f64,
}

/// `t*(N) = t_c + slope/N`, weighted by `1/σ²`.
pub fn finite_size_extrapolate(peaks: &[SizePeak]) -> Result<ScalingResult, AnalysisError> {
    let mut sizes: Vec<usize> = peaks.iter().map(|p| p.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(AnalysisError::TooFewSizes(sizes.len()));
    }
    if sizes.len() != peaks.len() {
        return Err(AnalysisError::BadPoint { index: 0, reason: "repeated size" });
    }
    let x: Vec<f64> = peaks.iter().map(|p| 1.0 / p.n as f64).collect();
    let y: Vec<f64> = peaks.iter().map(|p| p.t).collect();
    let s: Vec<f64> = peaks.iter().map(|p| p.sigma).collect();
    let line = weighted_line(&x, &y, &s);
    Ok(ScalingResult {
        peaks: peaks.to_vec(),
        t_c: line.intercept,
        slope: line.slope,
        t_c_se: line.intercept_se,
    })
}

/// Leave-one-out estimate: returns `(full-sample value, jackknife standard error)`.
pub fn jackknife(n: usize, estimate: impl Fn(Option<usize>) -> f64) -> (f64, f64) {
    let full = estimate(None);
    let loo: Vec<f64> = (0..n).map(|i| estimate(Some(i))).collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
    (full, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ordered,
    Disordered,
    Inconclusive,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Ordered => "ordered",
            Phase::Disordered => "disordered",
            Phase::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPoint {
    pub n: usize,
    pub d_tot: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScaling {
    pub slope: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    pub phase: Phase,
}

/// Linear fit of `d_tot/N` against `1/N`. A vanishing intercept means finite
/// depth in the thermodynamic limit, i.e. order.
pub fn normalized_depth_scaling(data: &[DepthPoint]) -> Result<NormalizedScaling, AnalysisError> {
    let mut sizes: Vec<usize> = data.iter().map(|p| p.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(AnalysisError::TooFewSizes(sizes.len()));
    }
    let x: Vec<f64> = data.iter().map(|p| 1.0 / p.n as f64).collect();
    let y: Vec<f64> = data.iter().map(|p| p.d_tot / p.n as f64).collect();
    let s: Vec<f64> = data.iter().map(|p| p.sem / p.n as f64).collect();
    let line = weighted_line(&x, &y, &s);
    let (b, se) = (line.intercept, line.intercept_se);
    let phase = if !(b.is_finite() && se.is_finite()) {
        Phase::Inconclusive
    } else if b.abs() <= 2.0 * se {
        Phase::Ordered
    } else if b > 2.0 * se {
        Phase::Disordered
    } else {
        Phase::Inconclusive
    };
    Ok(NormalizedScaling {
        slope: line.slope,
        intercept: b,
        intercept_se: se,
        phase,
    })
}

/// `(t, f, f′)` rows on a uniform grid, for plotting.
pub fn curve_table(model: &Rational, lo: f64, hi: f64, points: usize) -> Vec<[f64; 3]> {
    let n = points.max(2) - 1;
    (0..=n)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            [t, model.value(t), model.derivative(t)]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_derivatives_match_differences() {
        let m = Rational([1.0, 0.5, 0.2, 0.1, 0.05, 0.02]);
        let h = 1e-6;
        for t in [0.1, 0.7, 1.3] {
            let fd = (m.value(t + h) - m.value(t - h)) / (2.0 * h);
            assert!((fd - m.derivative(t)).abs() < 1e-8);
            let fd2 = (m.derivative(t + h) - m.derivative(t - h)) / (2.0 * h);
            assert!((fd2 - m.second_derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let m = Rational([1.0, 0.5, 0.2, 0.1, 0.05, 0.02]);
        let g = m.gradient(0.9);
        for k in 0..6 {
            let (mut up, mut dn) = (m, m);
            up.0[k] += 1e-6;
            dn.0[k] -= 1e-6;
            let fd = (up.value(0.9) - dn.value(0.9)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8, "{k}");
        }
    }

    #[test]
    fn model_is_even() {
        let m = Rational([0.3, -1.0, 2.0, 0.4, 0.7, 0.1]);
        for t in [0.2, 0.9, 1.7] {
            assert_eq!(m.value(t), m.value(-t));
        }
    }

    #[test]
    fn line_through_exact_points() {
        let l = weighted_line(&[0.1, 0.05, 0.025], &[0.8, 0.75, 0.725], &[0.0; 3]);
        assert!((l.intercept - 0.7).abs() < 1e-14);
        assert!((l.slope - 1.0).abs() < 1e-12);
        assert!(l.intercept_se < 1e-7);
    }
}
