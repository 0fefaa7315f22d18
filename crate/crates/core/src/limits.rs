//! Limiting covariance structures of the empirical process and of partial
//! sums, and the threshold constants `a(ell, alpha)`.
//!
//! Sums over `k in Z` are truncated at a lag cutoff `K` and use stationarity,
//! `Cov(u_0, v_{-k}) = Cov(u_k, v_0)`, so that only nonnegative lags are
//! estimated. Every estimate is averaged over independent orbits and its
//! standard error is the between-orbit spread.

use num_bigint::BigUint;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{simulate_orbits, SampleSeries};
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::torus::TorusAutomorphism;

/// Shared simulation settings for covariance estimates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitEnsemble {
    pub n_orbits: usize,
    pub orbit_length: usize,
    /// Denominator of the random rational starting points.
    #[serde(with = "crate::serde_biguint")]
    pub q: BigUint,
}

impl OrbitEnsemble {
    fn check(&self, lag_cutoff: usize) -> Result<()> {
        if self.n_orbits < 2 {
            return Err(Error::InvalidInput("at least two orbits are needed for a standard error".into()));
        }
        let required = (10 * lag_cutoff).max(2);
        if self.orbit_length < required {
            return Err(Error::InsufficientLength { length: self.orbit_length, required });
        }
        Ok(())
    }

    fn simulate<R: Rng + ?Sized>(
        &self,
        t: &TorusAutomorphism,
        f: &Observable,
        rng: &mut R,
    ) -> Result<Vec<SampleSeries>> {
        simulate_orbits(t, f, &self.q, self.n_orbits, self.orbit_length, rng.random())
    }
}

/// A truncated long-run (co)variance `sum_{|k|<=K} Cov(u_0, v_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Term `k`: `c_0(u, v)` for `k = 0`, `c_k(u, v) + c_k(v, u)` afterwards.
    pub lag_terms: Vec<f64>,
    pub lag_std_errors: Vec<f64>,
    /// Running sums of `lag_terms`.
    pub partial_sums: Vec<f64>,
    pub lag_cutoff: usize,
    pub n_orbits: usize,
    pub orbit_length: usize,
}

impl LongRunEstimate {
    /// True when the last lag term is within three standard errors of zero.
    pub fn truncation_ok(&self) -> bool {
        let k = self.lag_cutoff;
        self.lag_terms[k].abs() < 3.0 * self.lag_std_errors[k] || self.lag_terms[k] == 0.0
    }
}

fn centered(x: &[f64], center: Option<f64>) -> Vec<f64> {
    let c = center.unwrap_or_else(|| x.iter().sum::<f64>() / x.len() as f64);
    x.iter().map(|v| v - c).collect()
}

/// `(1/L) sum_i u_i v_{i+k}`.
fn lag_product(u: &[f64], v: &[f64], k: usize) -> f64 {
    let l = u.len();
    u[..l - k].iter().zip(&v[k..]).map(|(a, b)| a * b).sum::<f64>() / l as f64
}

/// Per-lag terms for one orbit of centered data.
fn orbit_terms(u: &[f64], v: &[f64], lag_cutoff: usize) -> Vec<f64> {
    (0..=lag_cutoff)
        .map(|k| if k == 0 { lag_product(u, v, 0) } else { lag_product(u, v, k) + lag_product(v, u, k) })
        .collect()
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Combines per-orbit lag terms (in orbit order) into one estimate.
fn combine(per_orbit: Vec<Vec<f64>>, lag_cutoff: usize, orbit_length: usize) -> LongRunEstimate {
    let n_orbits = per_orbit.len();
    let mut lag_terms = Vec::with_capacity(lag_cutoff + 1);
    let mut lag_std_errors = Vec::with_capacity(lag_cutoff + 1);
    for k in 0..=lag_cutoff {
        let column: Vec<f64> = per_orbit.iter().map(|t| t[k]).collect();
        let (m, se) = mean_and_se(&column);
        lag_terms.push(m);
        lag_std_errors.push(se);
    }
    let totals: Vec<f64> = per_orbit.iter().map(|t| t.iter().sum()).collect();
    let (value, std_error) = mean_and_se(&totals);
    let partial_sums = lag_terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    LongRunEstimate { value, std_error, lag_terms, lag_std_errors, partial_sums, lag_cutoff, n_orbits, orbit_length }
}

/// Truncated long-run covariance of paired scalar series, one pair per orbit.
/// With `centers = None` each orbit is centered at its own sample mean.
pub fn long_run_covariance(
    u: &[Vec<f64>],
    v: &[Vec<f64>],
    lag_cutoff: usize,
    centers: Option<(f64, f64)>,
) -> Result<LongRunEstimate> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(Error::InvalidInput("need at least two paired orbits".into()));
    }
    let length = u[0].len();
    if u.iter().chain(v).any(|s| s.len() != length) {
        return Err(Error::InvalidInput("orbits must share one length".into()));
    }
    let required = (10 * lag_cutoff).max(2);
    if length < required {
        return Err(Error::InsufficientLength { length, required });
    }
    let per_orbit: Vec<Vec<f64>> = u
        .par_iter()
        .zip(v.par_iter())
        .map(|(a, b)| {
            let a = centered(a, centers.map(|c| c.0));
            let b = centered(b, centers.map(|c| c.1));
            orbit_terms(&a, &b, lag_cutoff)
        })
        .collect();
    Ok(combine(per_orbit, lag_cutoff, length))
}

fn scalar_paths(series: &[SampleSeries]) -> Result<Vec<Vec<f64>>> {
    series
        .iter()
        .map(|s| if s.ell() == 1 { Ok(s.values().to_vec()) } else { Err(Error::UnsupportedDimension(s.ell())) })
        .collect()
}

/// Long-run variance `sigma^2(f)` from given orbits. Centered at `mean`
/// when supplied, otherwise at each orbit's sample mean.
pub fn sigma_squared_from_series(
    series: &[SampleSeries],
    lag_cutoff: usize,
    mean: Option<f64>,
) -> Result<LongRunEstimate> {
    let paths = scalar_paths(series)?;
    long_run_covariance(&paths, &paths, lag_cutoff, mean.map(|m| (m, m)))
}

/// `sigma^2(f) = Var f + 2 sum_{k>0} Cov(f, f o T^k)`, truncated at `lag_cutoff`,
/// on fresh orbits. Uses the exact mean of `f` when it is known.
pub fn sigma_squared<R: Rng + ?Sized>(
    t: &TorusAutomorphism,
    f: &Observable,
    lag_cutoff: usize,
    ensemble: &OrbitEnsemble,
    rng: &mut R,
) -> Result<LongRunEstimate> {
    if f.ell() != 1 {
        return Err(Error::UnsupportedDimension(f.ell()));
    }
    ensemble.check(lag_cutoff)?;
    let series = ensemble.simulate(t, f, rng)?;
    sigma_squared_from_series(&series, lag_cutoff, f.known_mean().map(|m| m[0]))
}

/// Estimated `Lambda(s, s')` on a set of level points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceGrid {
    pub s_grid: Vec<Vec<f64>>,
    pub lag_cutoff: usize,
    /// Row-major `m x m`, exactly symmetric.
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub n_orbits: usize,
    pub orbit_length: usize,
}

impl CovarianceGrid {
    pub fn size(&self) -> usize {
        self.s_grid.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.estimates[i * self.size() + j]
    }

    pub fn std_error(&self, i: usize, j: usize) -> f64 {
        self.standard_errors[i * self.size() + j]
    }
}

/// `Lambda(s, s') = sum_{k in Z} Cov(1{f <= s}, 1{f o T^k <= s'})` from given orbits.
pub fn covariance_lambda_from_series(
    series: &[SampleSeries],
    s_points: &[Vec<f64>],
    lag_cutoff: usize,
) -> Result<CovarianceGrid> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("need at least two orbits".into()));
    }
    let ell = series[0].ell();
    let length = series[0].n();
    if series.iter().any(|s| s.ell() != ell || s.n() != length) {
        return Err(Error::InvalidInput("orbits must share one shape".into()));
    }
    if let Some(bad) = s_points.iter().find(|s| s.len() != ell) {
        return Err(Error::DimensionMismatch { expected: ell, got: bad.len() });
    }
    let required = (10 * lag_cutoff).max(2);
    if length < required {
        return Err(Error::InsufficientLength { length, required });
    }
    let m = s_points.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    // per orbit: the truncated sum for every pair i <= j
    let per_orbit: Vec<Vec<f64>> = series
        .par_iter()
        .map(|s| {
            let indicators: Vec<Vec<f64>> = s_points
                .iter()
                .map(|p| {
                    let raw: Vec<f64> =
                        (0..length).map(|k| s.row(k).iter().zip(p).all(|(x, y)| x <= y) as u8 as f64).collect();
                    centered(&raw, None)
                })
                .collect();
            pairs.iter().map(|&(i, j)| orbit_terms(&indicators[i], &indicators[j], lag_cutoff).iter().sum()).collect()
        })
        .collect();
    let mut estimates = vec![0.0; m * m];
    let mut standard_errors = vec![0.0; m * m];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        let column: Vec<f64> = per_orbit.iter().map(|o| o[idx]).collect();
        let (mean, se) = mean_and_se(&column);
        for (a, b) in [(i, j), (j, i)] {
            estimates[a * m + b] = mean;
            standard_errors[a * m + b] = se;
        }
    }
    Ok(CovarianceGrid {
        s_grid: s_points.to_vec(),
        lag_cutoff,
        estimates,
        standard_errors,
        n_orbits: series.len(),
        orbit_length: length,
    })
}

pub fn covariance_lambda<R: Rng + ?Sized>(
    t: &TorusAutomorphism,
    f: &Observable,
    s_points: &[Vec<f64>],
    lag_cutoff: usize,
    ensemble: &OrbitEnsemble,
    rng: &mut R,
) -> Result<CovarianceGrid> {
    ensemble.check(lag_cutoff)?;
    let series = ensemble.simulate(t, f, rng)?;
    covariance_lambda_from_series(&series, s_points, lag_cutoff)
}

/// Cells of the antiderivative grid used by `covariance_lambda_p`.
pub const ANTIDERIVATIVE_CELLS: usize = 1 << 14;

/// Trapezoidal antiderivative `G(s) = int_{-M}^s g` on a uniform grid,
/// evaluated by linear interpolation.
struct Antiderivative {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl Antiderivative {
    fn new(g: &dyn Fn(f64) -> f64, m: f64) -> Self {
        let h = 2.0 * m / ANTIDERIVATIVE_CELLS as f64;
        let mut values = Vec::with_capacity(ANTIDERIVATIVE_CELLS + 1);
        let mut acc = 0.0;
        let mut prev = g(-m);
        values.push(0.0);
        for i in 1..=ANTIDERIVATIVE_CELLS {
            let cur = g(-m + i as f64 * h);
            acc += 0.5 * h * (prev + cur);
            values.push(acc);
            prev = cur;
        }
        Self { lo: -m, h, values }
    }

    fn eval(&self, s: f64) -> f64 {
        let pos = ((s - self.lo) / self.h).clamp(0.0, ANTIDERIVATIVE_CELLS as f64);
        let i = (pos.floor() as usize).min(ANTIDERIVATIVE_CELLS - 1);
        let w = pos - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    fn total(&self) -> f64 {
        self.values[ANTIDERIVATIVE_CELLS]
    }
}

/// `Lambda_p(g, h) = sum_k Cov(int g(s) 1{f <= s} ds, int h(s) 1{f o T^k <= s} ds)`
/// over `s in [-M, M]`, from given orbits. Uses
/// `int g(s) 1{y <= s} ds = G(M) - G(y)`.
pub fn covariance_lambda_p_from_series(
    series: &[SampleSeries],
    g: &dyn Fn(f64) -> f64,
    h: &dyn Fn(f64) -> f64,
    m: f64,
    lag_cutoff: usize,
) -> Result<LongRunEstimate> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidInput(format!("support bound must be positive, got {m}")));
    }
    let paths = scalar_paths(series)?;
    let (gg, hh) = (Antiderivative::new(g, m), Antiderivative::new(h, m));
    let transform = |a: &Antiderivative| -> Vec<Vec<f64>> {
        paths.iter().map(|p| p.iter().map(|&y| a.total() - a.eval(y)).collect()).collect()
    };
    long_run_covariance(&transform(&gg), &transform(&hh), lag_cutoff, None)
}

#[allow(clippy::too_many_arguments)]
pub fn covariance_lambda_p<R: Rng + ?Sized>(
    t: &TorusAutomorphism,
    f: &Observable,
    g: &dyn Fn(f64) -> f64,
    h: &dyn Fn(f64) -> f64,
    m: f64,
    lag_cutoff: usize,
    ensemble: &OrbitEnsemble,
    rng: &mut R,
) -> Result<LongRunEstimate> {
    if f.ell() != 1 {
        return Err(Error::UnsupportedDimension(f.ell()));
    }
    ensemble.check(lag_cutoff)?;
    let series = ensemble.simulate(t, f, rng)?;
    covariance_lambda_p_from_series(&series, g, h, m, lag_cutoff)
}

fn check_ell_alpha(ell: u32, alpha: f64) -> Result<()> {
    if ell == 0 {
        return Err(Error::DomainError("ell must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::DomainError(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// `k(p) = max(p / (alpha (p - 2 ell)), (p - 1)(2 alpha + p) / (p alpha))`.
pub fn k_function(ell: u32, alpha: f64, p: f64) -> Result<f64> {
    check_ell_alpha(ell, alpha)?;
    let two_ell = 2.0 * ell as f64;
    if !(p > two_ell) {
        return Err(Error::DomainError(format!("k is defined for p > 2 ell = {two_ell}, got {p}")));
    }
    let first = p / (alpha * (p - two_ell));
    let second = (p - 1.0) * (2.0 * alpha + p) / (p * alpha);
    Ok(first.max(second))
}

/// Coefficients of the monic cubic `p^3 + b p^2 + c p + d` whose root in
/// `(2 ell, 4 ell)` balances the two branches of `k`.
pub fn balance_cubic(ell: u32, alpha: f64) -> (f64, f64, f64) {
    let (l, a) = (ell as f64, alpha);
    (2.0 * a - 2.0 - 2.0 * l, 2.0 * l - 2.0 * a - 4.0 * a * l, 4.0 * a * l)
}

/// Output of the Cardan solution of the balance cubic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardanRoot {
    pub p0: f64,
    pub p_prime: f64,
    pub q: f64,
    pub delta: f64,
}

/// Trigonometric Cardan root of the balance cubic.
pub fn cardan_p0(ell: u32, alpha: f64) -> Result<CardanRoot> {
    check_ell_alpha(ell, alpha)?;
    let (b, c, d) = balance_cubic(ell, alpha);
    let p_prime = c - b * b / 3.0;
    let q = b / 27.0 * (2.0 * b * b - 9.0 * c) + d;
    let delta = q * q + 4.0 / 27.0 * p_prime.powi(3);
    if !(delta < 0.0) {
        return Err(Error::InternalInconsistency(format!("discriminant {delta} is not negative")));
    }
    let arg = (-q / 2.0 * (27.0 / -p_prime.powi(3)).sqrt()).clamp(-1.0, 1.0);
    let p0 = -b / 3.0 + 2.0 * (-p_prime / 3.0).sqrt() * (arg.acos() / 3.0).cos();
    let two_ell = 2.0 * ell as f64;
    if !(p0 > two_ell && p0 < 2.0 * two_ell) {
        return Err(Error::InternalInconsistency(format!("root {p0} outside ({two_ell}, {})", 2.0 * two_ell)));
    }
    Ok(CardanRoot { p0, p_prime, q, delta })
}

/// `a(ell, alpha)` with the intermediate quantities of its computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConstants {
    pub ell: u32,
    pub alpha: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub p_prime: f64,
    pub q_cardan: f64,
    pub delta: f64,
    pub p0: f64,
    pub p1: f64,
    pub a_value: f64,
    /// `p0^3 + b p0^2 + c p0 + d`.
    pub cubic_residual: f64,
    /// Minimum of `k` found by the independent grid search.
    pub grid_minimum: f64,
}

impl ThresholdConstants {
    pub fn k(&self, p: f64) -> Result<f64> {
        k_function(self.ell, self.alpha, p)
    }
}

/// Lower end of the admissible range `p >= max(ell + 2, 2 ell)`.
fn admissible_start(ell: u32) -> f64 {
    (ell as f64 + 2.0).max(2.0 * ell as f64)
}

/// Minimum of `k` over `[start + 1e-9, 12 ell]` by a dense grid refined with
/// ternary search (`k` is unimodal: one branch decreases, the other increases).
pub fn grid_minimum_of_k(ell: u32, alpha: f64) -> Result<f64> {
    const POINTS: usize = 20_000;
    let lo = admissible_start(ell) + 1e-9;
    let hi = 12.0 * ell as f64;
    let step = (hi - lo) / POINTS as f64;
    let k = |p: f64| k_function(ell, alpha, p);
    let mut best = (k(lo)?, 0usize);
    for i in 1..=POINTS {
        let v = k(lo + i as f64 * step)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    let (mut a, mut b) = (lo + best.1.saturating_sub(1) as f64 * step, (lo + (best.1 + 1) as f64 * step).min(hi));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if k(m1)? <= k(m2)? {
            b = m2;
        } else {
            a = m1;
        }
    }
    Ok(best.0.min(k(0.5 * (a + b))?))
}

/// `a(ell, alpha) = k(p1)` with `p1 = max(3, p0)`, cross-checked against a
/// grid search of `k` over the admissible range.
pub fn a_constant(ell: u32, alpha: f64) -> Result<ThresholdConstants> {
    let root = cardan_p0(ell, alpha)?;
    let (b, c, d) = balance_cubic(ell, alpha);
    let p1 = root.p0.max(3.0);
    let a_value = k_function(ell, alpha, p1)?;
    let p0 = root.p0;
    let cubic_residual = ((p0 + b) * p0 + c) * p0 + d;
    let grid_minimum = grid_minimum_of_k(ell, alpha)?;
    if grid_minimum < a_value - 1e-6 {
        return Err(Error::InternalInconsistency(format!("grid minimum {grid_minimum} of k lies below a = {a_value}")));
    }
    Ok(ThresholdConstants {
        ell,
        alpha,
        b,
        c,
        d,
        p_prime: root.p_prime,
        q_cardan: root.q,
        delta: root.delta,
        p0,
        p1,
        a_value,
        cubic_residual,
        grid_minimum,
    })
}
