//! Monte-Carlo checks of the limit theorems at finite sample sizes: marginal
//! normality, finite-dimensional covariances, Birkhoff averages, moment
//! scaling of running maxima and sampling of the Gaussian limit.
//!
//! Every routine takes a master seed. Replicate `i` uses stream `i` of a seed
//! derived from it, so reports are reproducible and independent of threading.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::empirical::{simulate_orbits, SampleSeries};
use crate::error::{Error, Result};
use crate::limits::{covariance_lambda_from_series, sigma_squared_from_series, CovarianceGrid, OrbitEnsemble};
use crate::observable::{mean, MeanMethod, Observable, Regularity};
use crate::rng::{derive_seed, stream_rng};
use crate::spectral::is_ergodic;
use crate::torus::{random_point, TorusAutomorphism};

const REPLICATE_STREAMS: u64 = 1;
const TARGET_STREAMS: u64 = 2;
const MEAN_STREAMS: u64 = 3;

/// Points used for a Monte-Carlo mean when no exact mean is known.
pub const MC_MEAN_POINTS: usize = 1 << 20;

/// Refuses automorphisms with an eigenvalue that is a root of unity.
pub fn require_ergodic(t: &TorusAutomorphism) -> Result<()> {
    let cert = is_ergodic(t);
    if cert.ergodic {
        Ok(())
    } else {
        Err(Error::NotErgodic(cert.cyclotomic_factors))
    }
}

/// Space mean of a scalar observable: exact when known, else Monte-Carlo.
pub fn centering_mean(f: &Observable, dim: usize, seed: u64) -> Result<f64> {
    if f.ell() != 1 {
        return Err(Error::UnsupportedDimension(f.ell()));
    }
    if let Some(m) = f.known_mean() {
        return Ok(m[0]);
    }
    let mut rng = stream_rng(derive_seed(seed, MEAN_STREAMS), 0);
    Ok(mean(f, dim, MeanMethod::MonteCarlo { n: MC_MEAN_POINTS }, &mut rng)?.value[0])
}

/// Which normalized sum is tested for asymptotic normality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CltStatistic {
    /// `n^{-1/2} S_n(s)`, with `f_s = F(s)`.
    Indicator { s: Vec<f64>, f_s: f64 },
    /// `n^{-1/2} sum_k (f o T^k - mean)`.
    PartialSum { mean: f64 },
}

impl CltStatistic {
    fn value(&self, series: &SampleSeries) -> f64 {
        let n = series.n();
        let total: f64 = match self {
            CltStatistic::Indicator { s, f_s } => {
                let hits = (0..n).filter(|&k| series.row(k).iter().zip(s).all(|(x, y)| x <= y)).count();
                hits as f64 - n as f64 * f_s
            }
            CltStatistic::PartialSum { mean } => series.values().iter().map(|v| v - mean).sum(),
        };
        total / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSettings {
    pub n: usize,
    pub replicates: usize,
    pub significance: f64,
    /// Accepts when `|sample_variance / target_variance - 1| < variance_band`.
    pub variance_band: f64,
    pub lag_cutoff: usize,
    /// Held-out orbits for the target variance.
    pub target: OrbitEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub statistic: CltStatistic,
    pub n: usize,
    pub replicates: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub target_variance: f64,
    pub target_std_error: f64,
    pub variance_ratio: Option<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub significance: f64,
    pub variance_band: f64,
    pub ks_pass: bool,
    pub variance_pass: bool,
    pub pass: bool,
    /// Set when every replicate value is identical and no test was run.
    pub skipped: bool,
    pub seed: u64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

fn sample_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against `Normal(0, variance)`.
/// Returns the statistic and its p-value (with the small-sample correction
/// `(sqrt n + 0.12 + 0.11 / sqrt n) D`).
pub fn ks_normal(values: &[f64], variance: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("KS test needs data".into()));
    }
    let law = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidInput(format!("target law: {e}")))?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let c = law.cdf(x);
        d.max(c - i as f64 / n).max((i + 1) as f64 / n - c)
    });
    let root = n.sqrt();
    Ok((d, kolmogorov_tail((root + 0.12 + 0.11 / root) * d)))
}

fn replicate_values(
    t: &TorusAutomorphism,
    f: &Observable,
    q: &BigUint,
    n: usize,
    replicates: usize,
    seed: u64,
    stat: impl Fn(&SampleSeries) -> Vec<f64> + Sync,
) -> Result<Vec<Vec<f64>>> {
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x0 = random_point(q, t.dim(), &mut rng);
            let series = crate::empirical::observe_orbit(t, f, &x0, n)?;
            Ok(stat(&series))
        })
        .collect()
}

/// Marginal normality of `n^{-1/2} S_n` at `t = 1` over independent orbits.
/// The target variance is estimated on separate orbits.
pub fn clt_marginal_test(
    t: &TorusAutomorphism,
    f: &Observable,
    statistic: &CltStatistic,
    settings: &CltSettings,
    seed: u64,
) -> Result<CltReport> {
    require_ergodic(t)?;
    if settings.replicates < 200 {
        return Err(Error::InvalidInput(format!("need at least 200 replicates, got {}", settings.replicates)));
    }
    if let CltStatistic::Indicator { s, .. } = statistic {
        if s.len() != f.ell() {
            return Err(Error::DimensionMismatch { expected: f.ell(), got: s.len() });
        }
    } else if f.ell() != 1 {
        return Err(Error::UnsupportedDimension(f.ell()));
    }
    let values: Vec<f64> = replicate_values(
        t,
        f,
        &settings.target.q,
        settings.n,
        settings.replicates,
        derive_seed(seed, REPLICATE_STREAMS),
        |s| vec![statistic.value(s)],
    )?
    .into_iter()
    .map(|v| v[0])
    .collect();
    let (sample_mean, sample_variance) = sample_moments(&values);

    let ens = &settings.target;
    let held_out = simulate_orbits(t, f, &ens.q, ens.n_orbits, ens.orbit_length, derive_seed(seed, TARGET_STREAMS))?;
    let (target_variance, target_std_error) = match statistic {
        CltStatistic::Indicator { s, .. } => {
            let g = covariance_lambda_from_series(&held_out, std::slice::from_ref(s), settings.lag_cutoff)?;
            (g.get(0, 0), g.std_error(0, 0))
        }
        CltStatistic::PartialSum { mean } => {
            let e = sigma_squared_from_series(&held_out, settings.lag_cutoff, Some(*mean))?;
            (e.value, e.std_error)
        }
    };

    let skipped = values.iter().all(|&v| v == values[0]);
    let (ks_statistic, ks_p_value, variance_ratio) = if skipped || !(target_variance > 0.0) {
        (0.0, 1.0, None)
    } else {
        let (d, p) = ks_normal(&values, target_variance)?;
        (d, p, Some(sample_variance / target_variance))
    };
    let ks_pass = !skipped && ks_p_value > settings.significance;
    let variance_pass = variance_ratio.is_some_and(|r| (r - 1.0).abs() < settings.variance_band);
    Ok(CltReport {
        statistic: statistic.clone(),
        n: settings.n,
        replicates: settings.replicates,
        sample_mean,
        sample_variance,
        target_variance,
        target_std_error,
        variance_ratio,
        ks_statistic,
        ks_p_value,
        significance: settings.significance,
        variance_band: settings.variance_band,
        ks_pass,
        variance_pass,
        pass: ks_pass && variance_pass,
        skipped: skipped || variance_ratio.is_none(),
        seed,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddSettings {
    pub n: usize,
    pub replicates: usize,
    pub lag_cutoff: usize,
    pub target: OrbitEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddReport {
    pub s_list: Vec<Vec<f64>>,
    pub n: usize,
    pub replicates: usize,
    /// Row-major covariance of `(n^{-1/2} S_n(s_i))_i` across replicates.
    pub empirical_covariance: Vec<f64>,
    pub lambda: CovarianceGrid,
    /// `||C - Lambda||_F / ||Lambda||_F`.
    pub relative_frobenius_error: f64,
    /// Magnitude of negative eigenvalues of the empirical covariance.
    pub clipped_mass: f64,
    /// Level used for the time-pair check (largest empirical variance).
    pub time_level: usize,
    pub covariance_half_full: f64,
    pub variance_full: f64,
    /// `Cov(S_[n/2](s), S_n(s)) / Var(S_n(s))`; near 1/2 for independent increments.
    pub time_ratio: f64,
    pub seed: u64,
}

/// Compares the replicate covariance of the empirical process at several
/// levels with the estimated `Lambda`, and checks the `min(t, t')` time factor
/// at `t = 1/2, t' = 1`.
pub fn fdd_covariance_test(
    t: &TorusAutomorphism,
    f: &Observable,
    s_list: &[Vec<f64>],
    f_values: &[f64],
    settings: &FddSettings,
    seed: u64,
) -> Result<FddReport> {
    require_ergodic(t)?;
    let m = s_list.len();
    if m == 0 || f_values.len() != m {
        return Err(Error::InvalidInput("need one reference value per level".into()));
    }
    if let Some(bad) = s_list.iter().find(|s| s.len() != f.ell()) {
        return Err(Error::DimensionMismatch { expected: f.ell(), got: bad.len() });
    }
    if settings.replicates < 2 || settings.n < 2 {
        return Err(Error::InvalidInput("need at least two replicates of length two".into()));
    }
    let n = settings.n;
    let half = n / 2;
    let root_n = (n as f64).sqrt();
    // per replicate: m values at t = 1 followed by m values at t = 1/2
    let rows = replicate_values(
        t,
        f,
        &settings.target.q,
        n,
        settings.replicates,
        derive_seed(seed, REPLICATE_STREAMS),
        |series| {
            let mut out = vec![0.0; 2 * m];
            for (i, (s, &fs)) in s_list.iter().zip(f_values).enumerate() {
                let mut hits = 0usize;
                for k in 0..n {
                    if k == half {
                        out[m + i] = (hits as f64 - half as f64 * fs) / root_n;
                    }
                    hits += series.row(k).iter().zip(s).all(|(x, y)| x <= y) as usize;
                }
                out[i] = (hits as f64 - n as f64 * fs) / root_n;
            }
            out
        },
    )?;
    let r = rows.len() as f64;
    let means: Vec<f64> = (0..2 * m).map(|j| rows.iter().map(|row| row[j]).sum::<f64>() / r).collect();
    let cov =
        |a: usize, b: usize| rows.iter().map(|row| (row[a] - means[a]) * (row[b] - means[b])).sum::<f64>() / (r - 1.0);
    let mut empirical_covariance = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let c = cov(i, j);
            empirical_covariance[i * m + j] = c;
            empirical_covariance[j * m + i] = c;
        }
    }
    let ens = &settings.target;
    let held_out = simulate_orbits(t, f, &ens.q, ens.n_orbits, ens.orbit_length, derive_seed(seed, TARGET_STREAMS))?;
    let lambda = covariance_lambda_from_series(&held_out, s_list, settings.lag_cutoff)?;
    let diff: f64 = empirical_covariance.iter().zip(&lambda.estimates).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = lambda.estimates.iter().map(|b| b * b).sum();
    let relative_frobenius_error = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
    let (_, clipped_mass) = clip_spectrum(&DMatrix::from_row_slice(m, m, &empirical_covariance));
    let time_level = (0..m)
        .max_by(|&a, &b| empirical_covariance[a * m + a].total_cmp(&empirical_covariance[b * m + b]))
        .unwrap_or(0);
    let variance_full = empirical_covariance[time_level * m + time_level];
    let covariance_half_full = cov(m + time_level, time_level);
    Ok(FddReport {
        s_list: s_list.to_vec(),
        n,
        replicates: settings.replicates,
        empirical_covariance,
        lambda,
        relative_frobenius_error,
        clipped_mass,
        time_level,
        covariance_half_full,
        variance_full,
        time_ratio: if variance_full > 0.0 { covariance_half_full / variance_full } else { 0.0 },
        seed,
    })
}

/// Eigen-decomposition with negative eigenvalues set to zero; returns the
/// clipped factor `V diag(sqrt(max(lambda, 0)))` and the clipped mass.
fn clip_spectrum(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let clipped = eig.eigenvalues.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    (eig.eigenvectors * DMatrix::from_diagonal(&roots), clipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffReport {
    pub n: usize,
    pub n_orbits: usize,
    /// Space mean used as the target.
    pub space_mean: f64,
    pub exact_mean: bool,
    /// Average over orbits of `(1/n) sum f o T^k - mean`.
    pub mean_error: f64,
    pub std_error: f64,
    pub rms_error: f64,
    /// `sqrt(n) * rms_error`; stabilizes when errors decay like `n^{-1/2}`.
    pub scaled_rms_error: f64,
    pub max_abs_error: f64,
    /// False when the errors are biased by more than three standard errors.
    pub converged: bool,
    pub seed: u64,
}

pub fn birkhoff_check(
    t: &TorusAutomorphism,
    f: &Observable,
    n: usize,
    n_orbits: usize,
    q: &BigUint,
    seed: u64,
) -> Result<BirkhoffReport> {
    require_ergodic(t)?;
    if n_orbits < 2 {
        return Err(Error::InvalidInput("need at least two orbits".into()));
    }
    let space_mean = centering_mean(f, t.dim(), seed)?;
    let errors: Vec<f64> = replicate_values(t, f, q, n, n_orbits, derive_seed(seed, REPLICATE_STREAMS), |s| {
        vec![s.values().iter().map(|v| v - space_mean).sum::<f64>() / n as f64]
    })?
    .into_iter()
    .map(|v| v[0])
    .collect();
    let (mean_error, var) = sample_moments(&errors);
    let std_error = (var / errors.len() as f64).sqrt();
    let rms_error = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(BirkhoffReport {
        n,
        n_orbits,
        space_mean,
        exact_mean: f.known_mean().is_some(),
        mean_error,
        std_error,
        rms_error,
        scaled_rms_error: rms_error * (n as f64).sqrt(),
        max_abs_error: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        converged: mean_error.abs() <= 3.0 * std_error + 1e-12,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub p: f64,
    pub n_list: Vec<usize>,
    /// `|| max_{k<=n} |S_k| ||_p` per `n`.
    pub moments: Vec<f64>,
    /// Log-log slope; `None` when some moment is zero.
    pub slope: Option<f64>,
    /// 95% confidence interval of the slope.
    pub slope_ci: Option<(f64, f64)>,
    pub intercept: Option<f64>,
    pub degenerate: bool,
    pub replicates: usize,
    pub seed: u64,
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 4 || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n_list must be strictly increasing with at least 4 positive entries".into()));
    }
    Ok(())
}

/// Moment scaling for arbitrary centered increment paths: `path(i)` must
/// return the increments of replicate `i`, of length at least `max(n_list)`.
pub fn moment_scaling_of_paths(
    p: f64,
    n_list: &[usize],
    replicates: usize,
    seed: u64,
    path: impl Fn(usize) -> Result<Vec<f64>> + Sync,
) -> Result<ScalingReport> {
    check_n_list(n_list)?;
    if !(p >= 1.0) || replicates < 2 {
        return Err(Error::InvalidInput("need p >= 1 and at least two replicates".into()));
    }
    let maxima: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let inc = path(i)?;
            let mut out = Vec::with_capacity(n_list.len());
            let (mut s, mut best, mut next) = (0.0f64, 0.0f64, 0);
            for (k, v) in inc.iter().enumerate() {
                s += v;
                best = best.max(s.abs());
                if k + 1 == n_list[next] {
                    out.push(best.powf(p));
                    next += 1;
                    if next == n_list.len() {
                        break;
                    }
                }
            }
            if out.len() != n_list.len() {
                return Err(Error::InvalidInput("increment path shorter than max(n_list)".into()));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let moments: Vec<f64> = (0..n_list.len())
        .map(|j| (maxima.iter().map(|m| m[j]).sum::<f64>() / replicates as f64).powf(1.0 / p))
        .collect();
    let degenerate = moments.iter().any(|&m| !(m > 0.0));
    let (slope, slope_ci, intercept) = if degenerate {
        (None, None, None)
    } else {
        let xs: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
        let (b, a, se) = ols(&xs, &ys);
        let t = StudentsT::new(0.0, 1.0, (xs.len() - 2) as f64)
            .map_err(|e| Error::InternalInconsistency(e.to_string()))?
            .inverse_cdf(0.975);
        (Some(b), Some((b - t * se, b + t * se)), Some(a))
    };
    Ok(ScalingReport { p, n_list: n_list.to_vec(), moments, slope, slope_ci, intercept, degenerate, replicates, seed })
}

/// Least squares `y = a + b x`; returns `(b, a, se(b))`.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (b, a, (rss / (n - 2.0) / sxx).sqrt())
}

/// `|| max_{k<=n} |sum_{i<=k} (f o T^i - mean)| ||_p` along orbits, with the
/// log-log slope against `n`.
pub fn moment_scaling(
    t: &TorusAutomorphism,
    f: &Observable,
    p: f64,
    n_list: &[usize],
    replicates: usize,
    q: &BigUint,
    seed: u64,
) -> Result<ScalingReport> {
    if matches!(f.regularity(), Regularity::Custom) {
        return Err(Error::RegularityUnknown);
    }
    check_n_list(n_list)?;
    let center = centering_mean(f, t.dim(), seed)?;
    let n_max = n_list[n_list.len() - 1];
    let stream = derive_seed(seed, REPLICATE_STREAMS);
    moment_scaling_of_paths(p, n_list, replicates, seed, |i| {
        let mut rng = stream_rng(stream, i as u64);
        let x0 = random_point(q, t.dim(), &mut rng);
        let series = crate::empirical::observe_orbit(t, f, &x0, n_max)?;
        Ok(series.values().iter().map(|v| v - center).collect())
    })
}

/// The same harness on i.i.d. standard normal increments.
pub fn iid_gaussian_scaling(p: f64, n_list: &[usize], replicates: usize, seed: u64) -> Result<ScalingReport> {
    check_n_list(n_list)?;
    let n_max = n_list[n_list.len() - 1];
    let stream = derive_seed(seed, REPLICATE_STREAMS);
    moment_scaling_of_paths(p, n_list, replicates, seed, |i| {
        let mut rng = stream_rng(stream, i as u64);
        Ok((0..n_max).map(|_| StandardNormal.sample(&mut rng)).collect())
    })
}

/// A random permutation of a series: same marginal law, no serial dependence.
pub fn shuffled<R: Rng + ?Sized>(series: &SampleSeries, rng: &mut R) -> SampleSeries {
    let ell = series.ell();
    let mut rows: Vec<&[f64]> = (0..series.n()).map(|k| series.row(k)).collect();
    rows.shuffle(rng);
    SampleSeries::new(rows.concat(), ell).expect("permuted series keeps its shape")
}

/// Regularity hypotheses of the limit theorems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "theorem")]
pub enum IntegralCondition {
    /// Invariance principle for the empirical process in `L^p`.
    EmpiricalLp { p: f64 },
    /// Convergence to the Kiefer process, with threshold `a(ell, alpha)`.
    Kiefer { ell: u32, alpha: f64 },
    /// `int omega(f, t) / (t |log t|^{1/2}) dt < infinity`, for moment bounds.
    MomentBound,
}

/// Decides a regularity hypothesis from the observable's class tag.
pub fn integral_condition_check(f: &Observable, condition: IntegralCondition) -> Result<bool> {
    let a = match *f.regularity() {
        Regularity::Custom => return Err(Error::RegularityUnknown),
        Regularity::TrigPoly { .. } | Regularity::Hoelder { .. } => return Ok(true),
        Regularity::LogModulus { a, .. } => a,
    };
    Ok(match condition {
        IntegralCondition::EmpiricalLp { p } => a > p - 1.0,
        IntegralCondition::Kiefer { ell, alpha } => a > crate::limits::a_constant(ell, alpha)?.a_value,
        IntegralCondition::MomentBound => a > 0.5,
    })
}

/// Samples of the centered Gaussian field with covariance
/// `min(t, t') Lambda(s, s')` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KieferSample {
    pub t_grid: Vec<f64>,
    pub s_points: usize,
    pub n_paths: usize,
    /// Path-major, then `t`, then `s`.
    pub values: Vec<f64>,
    pub clipped_mass: f64,
    pub trace: f64,
}

impl KieferSample {
    pub fn get(&self, path: usize, ti: usize, si: usize) -> f64 {
        self.values[(path * self.t_grid.len() + ti) * self.s_points + si]
    }
}

/// Brownian in `t`, correlated through `Lambda` in `s`: increments over
/// `[t_{j-1}, t_j]` are `sqrt(t_j - t_{j-1}) L z` with `L L^T` the clipped grid.
pub fn sample_limit_process(grid: &CovarianceGrid, t_grid: &[f64], n_paths: usize, seed: u64) -> Result<KieferSample> {
    if t_grid.is_empty()
        || t_grid[0] < 0.0
        || t_grid.windows(2).any(|w| !(w[0] < w[1]))
        || t_grid[t_grid.len() - 1] > 1.0
    {
        return Err(Error::InvalidInput("t grid must be strictly increasing in [0, 1]".into()));
    }
    let m = grid.size();
    let lambda = DMatrix::from_row_slice(m, m, &grid.estimates);
    let trace = lambda.trace();
    let (factor, clipped_mass) = clip_spectrum(&lambda);
    if clipped_mass > 0.1 * trace.max(0.0) && clipped_mass > 0.0 {
        return Err(Error::NotPsd { clipped: clipped_mass, trace });
    }
    let nt = t_grid.len();
    let stream = derive_seed(seed, REPLICATE_STREAMS);
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(stream, i as u64);
            let mut out = Vec::with_capacity(nt * m);
            let mut state = DVector::zeros(m);
            let mut prev_t = 0.0;
            for &t in t_grid {
                let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(&mut rng)));
                state += (&factor * z) * (t - prev_t).sqrt();
                prev_t = t;
                out.extend(state.iter());
            }
            out
        })
        .collect();
    Ok(KieferSample { t_grid: t_grid.to_vec(), s_points: m, n_paths, values: paths.concat(), clipped_mass, trace })
}
