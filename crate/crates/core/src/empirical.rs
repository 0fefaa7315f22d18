//! Sample series along orbits, empirical distribution functions and the
//! sequential empirical process `S_[nt](s) / sqrt(n)`.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::{ClosedFormCdf, Observable};
use crate::rng::stream_rng;
use crate::torus::{random_point, RationalTorusPoint, TorusAutomorphism};

/// Observations `f(T^k x0)`, `k = 1..n`, stored row-major as `n x ell`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    values: Vec<f64>,
    n: usize,
    ell: usize,
}

impl SampleSeries {
    pub fn new(values: Vec<f64>, ell: usize) -> Result<Self> {
        if ell == 0 || values.is_empty() || !values.len().is_multiple_of(ell) {
            return Err(Error::InvalidInput(format!(
                "series of {} values does not split into rows of {ell}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series contains non-finite values".into()));
        }
        let n = values.len() / ell;
        Ok(Self { values, n, ell })
    }

    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Observation `k` (0-based, i.e. `f(T^(k+1) x0)`).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.ell..(k + 1) * self.ell]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.ell).copied().collect()
    }

    fn require_scalar(&self) -> Result<&[f64]> {
        if self.ell != 1 {
            return Err(Error::UnsupportedDimension(self.ell));
        }
        Ok(&self.values)
    }
}

/// `f(T^k x0)` for `k = 1..n`.
pub fn observe_orbit(t: &TorusAutomorphism, f: &Observable, x0: &RationalTorusPoint, n: usize) -> Result<SampleSeries> {
    if n == 0 {
        return Err(Error::InvalidInput("series length must be positive".into()));
    }
    let ell = f.ell();
    let mut values = vec![0.0; n * ell];
    let mut cursor = t.cursor(x0);
    let mut x = vec![0.0; t.dim()];
    for row in values.chunks_exact_mut(ell) {
        cursor.advance();
        cursor.coords_into(&mut x);
        f.eval_into(&x, row);
    }
    SampleSeries::new(values, ell)
}

/// Independent orbits from uniform rational starting points with denominator
/// `q`. Orbit `i` draws its starting point from stream `i` of `seed`, so the
/// result does not depend on the thread count.
pub fn simulate_orbits(
    t: &TorusAutomorphism,
    f: &Observable,
    q: &BigUint,
    n_orbits: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<SampleSeries>> {
    (0..n_orbits)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x0 = random_point(q, t.dim(), &mut rng);
            observe_orbit(t, f, &x0, length)
        })
        .collect()
}

/// `(1/n) #{k : f(T^k x0) <= s}` componentwise.
pub fn empirical_cdf(series: &SampleSeries, s: &[f64]) -> f64 {
    let hits = (0..series.n()).filter(|&k| below(series.row(k), s)).count();
    hits as f64 / series.n() as f64
}

#[inline]
fn below(x: &[f64], s: &[f64]) -> bool {
    x.iter().zip(s).all(|(a, b)| a <= b)
}

/// A one-dimensional reference distribution function `F`.
#[derive(Clone)]
pub enum ReferenceCdf {
    Closed(ClosedFormCdf),
    /// Step function with `F(atoms[i]) = cumulative[i]` for sorted `atoms`.
    Discrete {
        atoms: Vec<f64>,
        cumulative: Vec<f64>,
    },
    /// Linear interpolation between `(knots[i], values[i])`, constant outside.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// Any continuous distribution function; integrals over it use midpoint sums.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ReferenceCdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceCdf::Closed(c) => f.debug_tuple("Closed").field(c).finish(),
            ReferenceCdf::Discrete { atoms, .. } => write!(f, "Discrete({} atoms)", atoms.len()),
            ReferenceCdf::PiecewiseLinear { knots, .. } => write!(f, "PiecewiseLinear({} knots)", knots.len()),
            ReferenceCdf::Function(_) => f.write_str("Function"),
        }
    }
}

impl ReferenceCdf {
    /// Discrete law from atoms and nonnegative weights summing to 1.
    pub fn discrete(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        check_measure(atoms, weights)?;
        let mut pairs: Vec<(f64, f64)> = atoms.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cumulative = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (_, w) in &pairs {
            acc += w;
            cumulative.push(acc);
        }
        Ok(ReferenceCdf::Discrete { atoms: pairs.into_iter().map(|p| p.0).collect(), cumulative })
    }

    /// Empirical law of `n` values of `f` at uniform points, as a discrete reference.
    pub fn monte_carlo<R: Rng + ?Sized>(f: &Observable, dim: usize, n: usize, rng: &mut R) -> Result<Self> {
        if f.ell() != 1 {
            return Err(Error::UnsupportedDimension(f.ell()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("Monte-Carlo reference needs n >= 1".into()));
        }
        let mut x = vec![0.0; dim];
        let mut atoms: Vec<f64> = (0..n)
            .map(|_| {
                x.iter_mut().for_each(|v| *v = rng.random::<f64>());
                f.eval_scalar(&x)
            })
            .collect();
        atoms.sort_by(f64::total_cmp);
        let cumulative = (1..=n).map(|i| i as f64 / n as f64).collect();
        Ok(ReferenceCdf::Discrete { atoms, cumulative })
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ReferenceCdf::Closed(c) => c.cdf(s),
            ReferenceCdf::Discrete { atoms, cumulative } => {
                let i = atoms.partition_point(|&a| a <= s);
                if i == 0 {
                    0.0
                } else {
                    cumulative[i - 1]
                }
            }
            ReferenceCdf::PiecewiseLinear { knots, values } => {
                let i = knots.partition_point(|&k| k <= s);
                if i == 0 {
                    values[0]
                } else if i == knots.len() {
                    values[knots.len() - 1]
                } else {
                    let w = (s - knots[i - 1]) / (knots[i] - knots[i - 1]);
                    values[i - 1] + w * (values[i] - values[i - 1])
                }
            }
            ReferenceCdf::Function(g) => g(s),
        }
    }

    /// Breakpoints between which `F` is affine, or `None` if it is not
    /// piecewise affine.
    fn affine_knots(&self) -> Option<Vec<f64>> {
        match self {
            ReferenceCdf::Closed(ClosedFormCdf::Uniform { lo, hi }) => Some(vec![*lo, *hi]),
            ReferenceCdf::Closed(ClosedFormCdf::PointMass { at }) => Some(vec![*at]),
            ReferenceCdf::Closed(ClosedFormCdf::Cosine { .. }) | ReferenceCdf::Function(_) => None,
            ReferenceCdf::Discrete { atoms, .. } => Some(atoms.clone()),
            ReferenceCdf::PiecewiseLinear { knots, .. } => Some(knots.clone()),
        }
    }

    /// Smallest interval carrying all the mass, when known.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            ReferenceCdf::Closed(c) => Some(c.support()),
            ReferenceCdf::Discrete { atoms, .. } => Some((atoms[0], atoms[atoms.len() - 1])),
            ReferenceCdf::PiecewiseLinear { knots, .. } => Some((knots[0], knots[knots.len() - 1])),
            ReferenceCdf::Function(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum CdfMethod {
    Analytic,
    MonteCarlo { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfValue {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// `F(s) = lambda(f <= s)` for the law of `f` under Lebesgue measure.
pub fn reference_cdf<R: Rng + ?Sized>(
    f: &Observable,
    dim: usize,
    s: &[f64],
    method: CdfMethod,
    rng: &mut R,
) -> Result<CdfValue> {
    if s.len() != f.ell() {
        return Err(Error::DimensionMismatch { expected: f.ell(), got: s.len() });
    }
    match method {
        CdfMethod::Analytic => match (f.ell(), f.closed_form_cdf()) {
            (1, Some(c)) => Ok(CdfValue { value: c.cdf(s[0]), std_error: None }),
            _ => Err(Error::AnalyticUnavailable),
        },
        CdfMethod::MonteCarlo { n } => {
            if n == 0 {
                return Err(Error::InvalidInput("Monte-Carlo reference needs n >= 1".into()));
            }
            let mut x = vec![0.0; dim];
            let mut out = vec![0.0; f.ell()];
            let mut hits = 0usize;
            for _ in 0..n {
                x.iter_mut().for_each(|v| *v = rng.random::<f64>());
                f.eval_into(&x, &mut out);
                hits += below(&out, s) as usize;
            }
            let p = hits as f64 / n as f64;
            Ok(CdfValue { value: p, std_error: Some((p * (1.0 - p) / n as f64).sqrt()) })
        }
    }
}

/// Values of `S_[nt](s) / sqrt(n)` on a `(t, s)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalProcessGrid {
    pub t_grid: Vec<f64>,
    /// One increasing grid per component; the `s` points are their product.
    pub s_grid: Vec<Vec<f64>>,
    /// Row `i` holds the values at `t_grid[i]`, over the `s` points in
    /// row-major (last component fastest) order.
    pub values: Vec<f64>,
    pub n: usize,
}

impl EmpiricalProcessGrid {
    pub fn s_points(&self) -> usize {
        self.s_grid.iter().map(Vec::len).product()
    }

    pub fn row(&self, ti: usize) -> &[f64] {
        let m = self.s_points();
        &self.values[ti * m..(ti + 1) * m]
    }

    /// The `s` point with flat index `j`.
    pub fn s_point(&self, j: usize) -> Vec<f64> {
        s_point(&self.s_grid, j)
    }

    /// Largest absolute value over the grid (a proxy for the sup norm).
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn s_point(grid: &[Vec<f64>], mut j: usize) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (i, g) in grid.iter().enumerate().rev() {
        out[i] = g[j % g.len()];
        j /= g.len();
    }
    out
}

/// `[n t]`, clamped to `0..=n`.
pub fn prefix_len(n: usize, t: f64) -> usize {
    ((n as f64 * t).floor().max(0.0) as usize).min(n)
}

fn check_sorted(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput(format!("{what} must be non-empty and strictly increasing")));
    }
    Ok(())
}

/// `S_k(s) / sqrt(n)` from scratch at a single `(t, s)`.
pub fn process_value(series: &SampleSeries, t: f64, s: &[f64], reference: &dyn Fn(&[f64]) -> f64) -> f64 {
    let k = prefix_len(series.n(), t);
    let hits = (0..k).filter(|&i| below(series.row(i), s)).count();
    scaled(hits, k, reference(s), series.n())
}

#[inline]
fn scaled(hits: usize, k: usize, f_s: f64, n: usize) -> f64 {
    (hits as f64 - k as f64 * f_s) / (n as f64).sqrt()
}

/// The sequential empirical process on a grid, one pass over the series per `s` point.
pub fn sequential_process(
    series: &SampleSeries,
    t_grid: &[f64],
    s_grid: &[Vec<f64>],
    reference: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<EmpiricalProcessGrid> {
    check_sorted(t_grid, "t grid")?;
    if t_grid[0] < 0.0 || t_grid[t_grid.len() - 1] > 1.0 {
        return Err(Error::InvalidInput("t grid must lie in [0, 1]".into()));
    }
    if s_grid.len() != series.ell() {
        return Err(Error::DimensionMismatch { expected: series.ell(), got: s_grid.len() });
    }
    for g in s_grid {
        check_sorted(g, "s grid")?;
    }
    let n = series.n();
    let m: usize = s_grid.iter().map(Vec::len).product();
    let cuts: Vec<usize> = t_grid.iter().map(|&t| prefix_len(n, t)).collect();
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let s = s_point(s_grid, j);
            let f_s = reference(&s);
            let mut col = Vec::with_capacity(cuts.len());
            let (mut k, mut hits) = (0, 0);
            for &cut in &cuts {
                while k < cut {
                    hits += below(series.row(k), &s) as usize;
                    k += 1;
                }
                col.push(scaled(hits, cut, f_s, n));
            }
            col
        })
        .collect();
    let mut values = vec![0.0; t_grid.len() * m];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * m + j] = *v;
        }
    }
    Ok(EmpiricalProcessGrid { t_grid: t_grid.to_vec(), s_grid: s_grid.to_vec(), values, n })
}

/// `max |x|` over a component, nudged up so that every sample lies strictly inside.
pub fn default_support_bound(values: &[f64]) -> f64 {
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    m.next_up()
}

/// Sample quantiles at 64 evenly spaced probability levels, deduplicated,
/// with `-m` and `m` appended.
pub fn default_s_grid(values: &[f64], m: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut grid = vec![-m];
    for i in 0..64 {
        let level = (i as f64 + 0.5) / 64.0;
        let idx = ((level * n as f64).ceil() as usize).clamp(1, n) - 1;
        grid.push(sorted[idx]);
    }
    grid.push(m);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// An `L^p` norm over `s`, with an indication of how it was integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpNorm {
    pub value: f64,
    /// True when the integral is exact up to rounding (piecewise-affine `F`).
    pub exact: bool,
    /// Midpoint-rule step used for non-affine pieces.
    pub step: Option<f64>,
}

/// Number of midpoint cells across `[-M, M]` for non-affine references.
pub const MIDPOINT_CELLS: usize = 1 << 14;

/// `||S_k||_{L^p([-M, M])}` where `S_k(s) = sum_{i<k} 1{x_i <= s} - k F(s)`
/// is the unnormalized process row built from the first `k` observations.
pub fn lp_norm_in_s(series: &SampleSeries, k: usize, reference: &ReferenceCdf, p: f64, m: f64) -> Result<LpNorm> {
    let xs = series.require_scalar()?;
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("p must be at least 1, got {p}")));
    }
    if k > xs.len() {
        return Err(Error::InvalidInput(format!("prefix {k} exceeds series length {}", xs.len())));
    }
    let mut prefix = xs[..k].to_vec();
    prefix.sort_by(f64::total_cmp);
    let integral = StepIntegral::new(reference, m)?;
    Ok(integral.lp(&prefix, p))
}

/// Integration of `|c(s) - k F(s)|^p` over `[-M, M]` where `c` counts the
/// sorted samples `<= s`.
struct StepIntegral<'a> {
    reference: &'a ReferenceCdf,
    m: f64,
    knots: Option<Vec<f64>>,
    step: f64,
}

impl<'a> StepIntegral<'a> {
    fn new(reference: &'a ReferenceCdf, m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidInput(format!("support bound must be finite and nonnegative, got {m}")));
        }
        let knots = reference.affine_knots().map(|k| k.into_iter().filter(|&v| v > -m && v < m).collect::<Vec<_>>());
        Ok(Self { reference, m, knots, step: 2.0 * m / MIDPOINT_CELLS as f64 })
    }

    fn lp(&self, sorted: &[f64], p: f64) -> LpNorm {
        if sorted.iter().any(|&x| x < -self.m || x > self.m) {
            // samples outside [-M, M] are treated as sitting at the nearest end
            let clamped: Vec<f64> = sorted.iter().map(|x| x.clamp(-self.m, self.m)).collect();
            return self.lp(&clamped, p);
        }
        let k = sorted.len() as f64;
        let mut breaks: Vec<f64> = Vec::with_capacity(sorted.len() + 2);
        breaks.push(-self.m);
        breaks.extend_from_slice(sorted);
        if let Some(knots) = &self.knots {
            breaks.extend_from_slice(knots);
        }
        breaks.push(self.m);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut total = 0.0;
        let mut count = 0usize;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            while count < sorted.len() && sorted[count] <= a {
                count += 1;
            }
            let c = count as f64;
            if self.knots.is_some() {
                // F is affine on the open interval; use its one-sided limits
                let (fa, fb) = self.affine_ends(a, b);
                total += affine_power_integral(c - k * fa, c - k * fb, b - a, p);
            } else {
                let cells = ((b - a) / self.step).ceil().max(1.0) as usize;
                let h = (b - a) / cells as f64;
                for j in 0..cells {
                    let s = a + (j as f64 + 0.5) * h;
                    total += (c - k * self.reference.eval(s)).abs().powf(p) * h;
                }
            }
        }
        LpNorm {
            value: total.powf(1.0 / p),
            exact: self.knots.is_some(),
            step: if self.knots.is_some() { None } else { Some(self.step) },
        }
    }

    /// Limits of `F` at `a+` and `b-`; evaluated at interior points so that
    /// jumps at the ends are excluded, then extended affinely.
    fn affine_ends(&self, a: f64, b: f64) -> (f64, f64) {
        let (u, v) = (a + 0.25 * (b - a), a + 0.75 * (b - a));
        let (fu, fv) = (self.reference.eval(u), self.reference.eval(v));
        if fu == fv {
            return (fu, fu);
        }
        let slope = (fv - fu) / (v - u);
        (fu - slope * (u - a), fv + slope * (b - v))
    }
}

/// `int_0^len |g|^p` for the affine `g` going from `u` to `v`.
fn affine_power_integral(u: f64, v: f64, len: f64, p: f64) -> f64 {
    let (au, av) = (u.abs(), v.abs());
    if len == 0.0 || (au == 0.0 && av == 0.0) {
        return 0.0;
    }
    if u * v < 0.0 {
        return len * (au.powf(p + 1.0) + av.powf(p + 1.0)) / ((p + 1.0) * (au + av));
    }
    if au == av {
        return len * au.powf(p);
    }
    if p == 1.0 {
        return len * 0.5 * (au + av);
    }
    len * (av.powf(p + 1.0) - au.powf(p + 1.0)) / ((p + 1.0) * (av - au))
}

/// `K(mu_n, mu) = int |F_n - F|` over `[-M, M]`; identical to
/// `lp_norm_in_s(series, n, reference, 1, M) / n`.
pub fn kantorovich_continuous(series: &SampleSeries, reference: &ReferenceCdf, m: f64) -> Result<f64> {
    let n = series.n();
    Ok(lp_norm_in_s(series, n, reference, 1.0, m)?.value / n as f64)
}

/// `max_{1<=k<=n} ||S_k||_{L^1} / sqrt(n)`, which equals
/// `sup_k sqrt(n) K(mu_{n,k}, mu)` for the mixtures
/// `mu_{n,k} = (1/n) sum_{i<=k} delta_{x_i} + ((n-k)/n) mu`.
pub fn sequential_kantorovich_sup(series: &SampleSeries, reference: &ReferenceCdf, m: f64) -> Result<f64> {
    let xs = series.require_scalar()?;
    let integral = StepIntegral::new(reference, m)?;
    let mut sorted: Vec<f64> = Vec::with_capacity(xs.len());
    let mut best: f64 = 0.0;
    for &x in xs {
        let pos = sorted.partition_point(|&v| v <= x);
        sorted.insert(pos, x);
        best = best.max(integral.lp(&sorted, 1.0).value);
    }
    Ok(best / (xs.len() as f64).sqrt())
}

fn check_measure(atoms: &[f64], weights: &[f64]) -> Result<()> {
    if atoms.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: atoms.len(), got: weights.len() });
    }
    if atoms.is_empty() {
        return Err(Error::InvalidInput("measure has no atoms".into()));
    }
    if atoms.iter().chain(weights).any(|v| !v.is_finite()) || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidInput("atoms must be finite and weights nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::WeightSumMismatch { sum });
    }
    Ok(())
}

/// Exact Kantorovich distance between two discrete measures on the line,
/// integrating the gap between their distribution functions.
pub fn kantorovich_discrete(weights1: &[f64], atoms1: &[f64], weights2: &[f64], atoms2: &[f64]) -> Result<f64> {
    check_measure(atoms1, weights1)?;
    check_measure(atoms2, weights2)?;
    // signed mass: +w for the first measure, -w for the second
    let mut events: Vec<(f64, f64)> = atoms1
        .iter()
        .zip(weights1)
        .map(|(&a, &w)| (a, w))
        .chain(atoms2.iter().zip(weights2).map(|(&a, &w)| (a, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gap = 0.0;
    let mut total = 0.0;
    for w in events.windows(2) {
        gap += w[0].1;
        total += gap.abs() * (w[1].0 - w[0].0);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::{coordinate, trig_poly, TrigTerm};
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform() -> ReferenceCdf {
        ReferenceCdf::Closed(ClosedFormCdf::Uniform { lo: 0.0, hi: 1.0 })
    }

    fn scalar(v: &[f64]) -> SampleSeries {
        SampleSeries::scalar(v.to_vec()).unwrap()
    }

    #[test]
    fn empirical_cdf_examples() {
        let s = scalar(&[0.2, 0.4, 0.9]);
        assert_eq!(empirical_cdf(&s, &[0.5]), 2.0 / 3.0);
        assert_eq!(empirical_cdf(&s, &[f64::INFINITY]), 1.0);
        assert_eq!(empirical_cdf(&s, &[0.1]), 0.0);
        assert_eq!(empirical_cdf(&s, &[0.4]), 2.0 / 3.0);
        let v = SampleSeries::new(vec![0.1, 0.9, 0.5, 0.5], 2).unwrap();
        assert_eq!(empirical_cdf(&v, &[0.5, 0.9]), 1.0);
        assert_eq!(empirical_cdf(&v, &[0.5, 0.6]), 0.5);
        assert!(SampleSeries::new(vec![1.0, f64::NAN], 1).is_err());
        assert!(SampleSeries::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn reference_cdf_examples() {
        let mut rng = stream_rng(1, 0);
        let x1 = coordinate(2, 0).unwrap();
        assert_eq!(reference_cdf(&x1, 2, &[0.3], CdfMethod::Analytic, &mut rng).unwrap().value, 0.3);
        let c = trig_poly(2, vec![TrigTerm { k: vec![1, 0], cos: 1.0, sin: 0.0 }]).unwrap();
        assert!((reference_cdf(&c, 2, &[0.0], CdfMethod::Analytic, &mut rng).unwrap().value - 0.5).abs() < 1e-15);
        assert_eq!(reference_cdf(&c, 2, &[-1e300], CdfMethod::Analytic, &mut rng).unwrap().value, 0.0);
        let mc = reference_cdf(&c, 2, &[0.0], CdfMethod::MonteCarlo { n: 50_000 }, &mut rng).unwrap();
        assert!((mc.value - 0.5).abs() < 3.0 * mc.std_error.unwrap() + 1e-12);
        let lm = crate::observable::log_modulus_example(1.0, vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(
            reference_cdf(&lm, 2, &[0.5], CdfMethod::Analytic, &mut rng).unwrap_err(),
            Error::AnalyticUnavailable
        );
    }

    #[test]
    fn discrete_and_linear_references() {
        let d = ReferenceCdf::discrete(&[1.0, 0.0], &[0.25, 0.75]).unwrap();
        assert_eq!(d.eval(-0.1), 0.0);
        assert_eq!(d.eval(0.0), 0.75);
        assert_eq!(d.eval(1.0), 1.0);
        let l = ReferenceCdf::PiecewiseLinear { knots: vec![0.0, 1.0, 3.0], values: vec![0.0, 0.5, 1.0] };
        assert_eq!(l.eval(-1.0), 0.0);
        assert_eq!(l.eval(2.0), 0.75);
        assert_eq!(l.eval(5.0), 1.0);
        assert!(ReferenceCdf::discrete(&[0.0], &[0.9]).is_err());
    }

    #[test]
    fn sequential_process_examples() {
        let s = scalar(&[0.1, 0.9]);
        let half = |_: &[f64]| 0.5;
        let g = sequential_process(&s, &[0.0, 0.5, 1.0], &[vec![0.5]], &half).unwrap();
        assert_eq!(g.row(0), &[0.0]);
        assert_eq!(g.row(1), &[0.5 / 2f64.sqrt()]);
        assert_eq!(g.row(2), &[0.0]);

        let c = scalar(&[0.3; 50]);
        let step = |x: &[f64]| if x[0] >= 0.3 { 1.0 } else { 0.0 };
        let g = sequential_process(&c, &[0.0, 0.3, 1.0], &[vec![-1.0, 0.0, 0.3, 0.5, 2.0]], &step).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert!(sequential_process(&c, &[0.5, 0.2], &[vec![0.0]], &step).is_err());
    }

    #[test]
    fn sequential_process_bounds_and_batch_agreement() {
        let mut rng = stream_rng(2, 0);
        let v: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let series = SampleSeries::new(v, 2).unwrap();
        let reference = |s: &[f64]| s.iter().map(|x| ((x + 1.0) / 2.0).clamp(0.0, 1.0)).product::<f64>();
        let t_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let grid_1 = default_s_grid(&series.component(0), 1.0);
        let grid_2 = vec![-1.0, -0.3, 0.0, 0.2, 1.0];
        let g = sequential_process(&series, &t_grid, &[grid_1, grid_2], &reference).unwrap();
        let root_n = (series.n() as f64).sqrt();
        for (ti, &t) in t_grid.iter().enumerate() {
            let k = prefix_len(series.n(), t) as f64;
            for j in 0..g.s_points() {
                let v = g.row(ti)[j];
                assert_eq!(v, process_value(&series, t, &g.s_point(j), &reference));
                assert!((v * root_n).abs() <= k + 1e-9);
            }
        }
        // below the sample minimum with F = 0
        let low = sequential_process(&series, &t_grid, &[vec![-2.0], vec![-2.0]], &reference).unwrap();
        assert!(low.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_grid_is_sorted_and_bounded() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let m = default_support_bound(&xs);
        assert!(m > 1.0);
        let g = default_s_grid(&xs, m);
        assert_eq!(g[0], -m);
        assert_eq!(*g.last().unwrap(), m);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() <= 66);
    }

    #[test]
    fn lp_norm_examples() {
        let one = scalar(&[0.5]);
        let v = lp_norm_in_s(&one, 1, &uniform(), 1.0, 1.0).unwrap();
        assert!(v.exact);
        // int_0^0.5 s ds + int_0.5^1 (1 - s) ds, plus int_-1^0 0
        assert!((v.value - 0.25).abs() < 1e-15, "{v:?}");
        let zero = lp_norm_in_s(&one, 0, &uniform(), 2.0, 1.0).unwrap();
        assert_eq!(zero.value, 0.0);
        // p = 2: int_0^0.5 s^2 + int_0.5^1 (1-s)^2 = 1/12
        let two = lp_norm_in_s(&one, 1, &uniform(), 2.0, 1.0).unwrap();
        assert!((two.value - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let bad = SampleSeries::new(vec![0.1, 0.2], 2).unwrap();
        assert_eq!(lp_norm_in_s(&bad, 1, &uniform(), 1.0, 1.0).unwrap_err(), Error::UnsupportedDimension(2));
    }

    #[test]
    fn midpoint_rule_on_cosine_law() {
        let cos_law = ReferenceCdf::Closed(ClosedFormCdf::Cosine { center: 0.0, amplitude: 1.0 });
        let one = scalar(&[0.0]);
        let v = lp_norm_in_s(&one, 1, &cos_law, 1.0, 1.0).unwrap();
        assert!(!v.exact);
        assert!(v.step.is_some());
        // int_{-1}^0 F + int_0^1 (1 - F) with F(s) = 1 - acos(s)/pi: 2/pi by symmetry
        assert!((v.value - 2.0 / std::f64::consts::PI).abs() < 1e-6, "{}", v.value);
    }

    #[test]
    fn kantorovich_examples() {
        assert_eq!(kantorovich_discrete(&[1.0], &[0.0], &[1.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(kantorovich_discrete(&[0.5, 0.5], &[0.0, 1.0], &[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.0);
        let b = 2.5;
        assert_eq!(kantorovich_discrete(&[1.0], &[0.0], &[1.0], &[b]).unwrap(), b);
        assert!(matches!(
            kantorovich_discrete(&[0.5, 0.4], &[0.0, 1.0], &[1.0], &[0.0]),
            Err(Error::WeightSumMismatch { .. })
        ));
        // point mass vs itself as a reference law
        let pm = ReferenceCdf::Closed(ClosedFormCdf::PointMass { at: 0.25 });
        assert_eq!(kantorovich_continuous(&scalar(&[0.25, 0.25]), &pm, 1.0).unwrap(), 0.0);
        // two point masses at 0 and b, via the continuous routine
        let at_b = ReferenceCdf::Closed(ClosedFormCdf::PointMass { at: b });
        assert!((kantorovich_continuous(&scalar(&[0.0]), &at_b, 3.0).unwrap() - b).abs() < 1e-15);
    }

    #[test]
    fn kantorovich_continuous_consistency() {
        let mut rng = stream_rng(3, 0);
        let mut prev = f64::INFINITY;
        for n in [100, 1_000, 10_000, 100_000] {
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let k = kantorovich_continuous(&scalar(&xs), &uniform(), 1.0).unwrap();
            assert!(k < 3.0 / (n as f64).sqrt(), "{n}: {k}");
            prev = prev.min(k);
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn continuous_matches_discrete_for_discrete_reference() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let atoms: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.1).collect();
            let total: f64 = raw.iter().sum();
            let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let rest: f64 = w[..3].iter().sum();
            w[3] = 1.0 - rest;
            let reference = ReferenceCdf::discrete(&atoms, &w).unwrap();
            let k = kantorovich_continuous(&scalar(&xs), &reference, 1.0).unwrap();
            let k_disc = kantorovich_discrete(&[1.0 / 7.0; 7], &xs, &w, &atoms).unwrap();
            assert!((k - k_disc).abs() < 1e-12, "{k} vs {k_disc}");
        }
    }

    #[test]
    fn sequential_kantorovich_matches_mixture_oracle() {
        let mut rng = stream_rng(5, 0);
        let xs: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let atoms = [0.1, 0.45, 0.8];
        let w = [0.25, 0.5, 0.25];
        let reference = ReferenceCdf::discrete(&atoms, &w).unwrap();
        let series = scalar(&xs);
        let n = xs.len() as f64;
        let mut best: f64 = 0.0;
        for k in 1..=xs.len() {
            // mu_{n,k} = (1/n) sum_{i<=k} delta_{x_i} + ((n-k)/n) mu
            let mut a: Vec<f64> = xs[..k].to_vec();
            let mut wt = vec![1.0 / n; k];
            for (&at, &ww) in atoms.iter().zip(&w) {
                a.push(at);
                wt.push(ww * (n - k as f64) / n);
            }
            let s: f64 = wt.iter().sum();
            let last = wt.len() - 1;
            wt[last] += 1.0 - s;
            let kk = kantorovich_discrete(&wt, &a, &w, &atoms).unwrap();
            best = best.max(n * kk);
        }
        let sup = sequential_kantorovich_sup(&series, &reference, 1.0).unwrap();
        assert!((sup - best / n.sqrt()).abs() < 1e-12, "{sup} vs {}", best / n.sqrt());
        let last = lp_norm_in_s(&series, xs.len(), &reference, 1.0, 1.0).unwrap().value / n.sqrt();
        assert!(sup >= last);
        let first = sequential_kantorovich_sup(&scalar(&xs[..1]), &reference, 1.0).unwrap();
        assert_eq!(first, lp_norm_in_s(&scalar(&xs[..1]), 1, &reference, 1.0, 1.0).unwrap().value);
    }

    #[test]
    fn orbit_series() {
        let t = TorusAutomorphism::cat_map();
        let x0 = RationalTorusPoint::from_u64(5, &[1, 2]).unwrap();
        let f = coordinate(2, 0).unwrap();
        let s = observe_orbit(&t, &f, &x0, 3).unwrap();
        // (1,2) -> (4,3) -> (1,2) -> (4,3) over 5
        assert_eq!(s.values(), &[0.8, 0.2, 0.8]);
        let q = BigUint::from(crate::torus::DEFAULT_DENOMINATOR);
        let a = simulate_orbits(&t, &f, &q, 4, 10, 9).unwrap();
        let b = simulate_orbits(&t, &f, &q, 4, 10, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    fn measure(max_atoms: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..=max_atoms).prop_flat_map(|m| {
            (prop::collection::vec(-5.0..5.0f64, m), prop::collection::vec(0.01..1.0f64, m)).prop_map(|(a, raw)| {
                let total: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
                let head: f64 = w[..w.len() - 1].iter().sum();
                let last = w.len() - 1;
                w[last] = 1.0 - head;
                (a, w)
            })
        })
    }

    proptest! {
        #[test]
        fn kantorovich_is_a_metric(m1 in measure(6), m2 in measure(6), m3 in measure(6)) {
            let k = |a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)| kantorovich_discrete(&a.1, &a.0, &b.1, &b.0).unwrap();
            let (k12, k21, k13, k23) = (k(&m1, &m2), k(&m2, &m1), k(&m1, &m3), k(&m2, &m3));
            prop_assert!((k12 - k21).abs() < 1e-12);
            prop_assert!(k13 <= k12 + k23 + 1e-12);
            prop_assert!(k(&m1, &m1) < 1e-12);
            let mean = |m: &(Vec<f64>, Vec<f64>)| m.0.iter().zip(&m.1).map(|(a, w)| a * w).sum::<f64>();
            prop_assert!(k12 >= (mean(&m1) - mean(&m2)).abs() - 1e-12);
        }

        #[test]
        fn empirical_cdf_is_monotone(xs in prop::collection::vec(-1.0..1.0f64, 1..40), a in -1.5..1.5f64, b in -1.5..1.5f64) {
            let s = scalar(&xs);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(empirical_cdf(&s, &[lo]) <= empirical_cdf(&s, &[hi]));
        }

        #[test]
        fn l1_norm_is_n_times_kantorovich(xs in prop::collection::vec(-1.0..1.0f64, 1..60)) {
            let s = scalar(&xs);
            let r = ReferenceCdf::Closed(ClosedFormCdf::Uniform { lo: -1.0, hi: 1.0 });
            let l1 = lp_norm_in_s(&s, xs.len(), &r, 1.0, 1.0).unwrap().value;
            let k = kantorovich_continuous(&s, &r, 1.0).unwrap();
            prop_assert_eq!(l1 / xs.len() as f64, k);
        }
    }
}
