//! One function per subcommand. Each returns the text for stdout after
//! writing any artifacts to the output directory.

use std::fmt;

use num_bigint::BigUint;
use serde::Serialize;
use serde_json::json;
use toral::empirical::{
    default_s_grid, default_support_bound, kantorovich_continuous, lp_norm_in_s, observe_orbit,
    sequential_kantorovich_sup, sequential_process, ReferenceCdf, SampleSeries,
};
use toral::limits::{a_constant, covariance_lambda, OrbitEnsemble};
use toral::observable::Observable;
use toral::rng::{derive_seed, stream_rng};
use toral::spectral::classify;
use toral::stats::{
    birkhoff_check, centering_mean, clt_marginal_test, fdd_covariance_test, moment_scaling, CltSettings, CltStatistic,
    FddSettings,
};
use toral::{random_point, RationalTorusPoint, TorusAutomorphism};

use crate::cli::Command;
use crate::config::{RunConfig, StatisticKind};
use crate::output::{to_json, write_file, Cell, Csv, Envelope};

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Compute(toral::Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Compute(_) | RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Compute(e) => write!(f, "computation failed: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<toral::Error> for RunError {
    fn from(e: toral::Error) -> Self {
        RunError::Compute(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Outcome = Result<String, RunError>;

pub fn run(cmd: Command, cfg: &RunConfig) -> Outcome {
    cfg.validate(cmd).map_err(RunError::Config)?;
    match cmd {
        Command::Check => check(cfg),
        Command::Orbit => orbit(cfg),
        Command::Empirical => empirical(cfg),
        Command::Kanto => kanto(cfg),
        Command::Covariance => covariance(cfg),
        Command::Constants => constants(cfg),
        Command::Clt => clt(cfg),
        Command::Fdd => fdd(cfg),
        Command::Scaling => scaling(cfg),
        Command::Birkhoff => birkhoff(cfg),
    }
}

/// Writes `<cmd>.json` (and the CSV, when present) to the output directory.
/// Stdout gets the JSON report, or the CSV when there is no output directory.
fn finish<T: Serialize>(cfg: &RunConfig, cmd: Command, result: T, csv: Option<Csv>) -> Outcome {
    let envelope = Envelope::new(cmd.name(), cfg, result);
    let json = to_json(&envelope, true);
    match (&cfg.out_dir, csv) {
        (Some(dir), csv) => {
            write_file(dir, &format!("{}.json", cmd.name()), &json)?;
            if let Some(csv) = csv {
                write_file(dir, &format!("{}.csv", cmd.name()), &csv.into_string())?;
            }
            Ok(json)
        }
        (None, Some(csv)) => Ok(csv.into_string()),
        (None, None) => Ok(json),
    }
}

fn csv_for<T: Serialize>(cfg: &RunConfig, cmd: Command, summary: &T, columns: Vec<String>) -> Csv {
    Csv::new(&Envelope::new(cmd.name(), cfg, summary), &columns)
}

fn automorphism(cfg: &RunConfig) -> Result<TorusAutomorphism, RunError> {
    let m = cfg.matrix().map_err(RunError::Config)?;
    TorusAutomorphism::new(m).map_err(|e| RunError::Config(format!("matrix: {e}")))
}

fn observable(cfg: &RunConfig, dim: usize) -> Result<Observable, RunError> {
    let spec = cfg.observable().map_err(RunError::Config)?;
    spec.build(dim).map_err(|e| RunError::Config(format!("observable: {e}")))
}

fn ensemble(cfg: &RunConfig) -> OrbitEnsemble {
    OrbitEnsemble { n_orbits: cfg.n_orbits, orbit_length: cfg.orbit_length, q: cfg.q.clone() }
}

// Sub-seeds of the master seed, one per independent use.
const ORBIT_STREAM: u64 = 10;
const REFERENCE_STREAM: u64 = 11;
const PILOT_STREAM: u64 = 12;
const ENSEMBLE_STREAM: u64 = 13;

/// The single orbit used by `empirical` and `kanto`.
fn one_orbit(cfg: &RunConfig, t: &TorusAutomorphism, f: &Observable, stream: u64) -> Result<SampleSeries, RunError> {
    let mut rng = stream_rng(derive_seed(cfg.seed, stream), 0);
    let x0 = random_point(&cfg.q, t.dim(), &mut rng);
    Ok(observe_orbit(t, f, &x0, cfg.n)?)
}

/// Reference distribution of a scalar observable: closed form when
/// registered, otherwise the empirical law of `mc_points` uniform samples.
fn scalar_reference(cfg: &RunConfig, f: &Observable, dim: usize) -> Result<(ReferenceCdf, &'static str), RunError> {
    if let Some(c) = f.closed_form_cdf() {
        return Ok((ReferenceCdf::Closed(c.clone()), "analytic"));
    }
    let mut rng = stream_rng(derive_seed(cfg.seed, REFERENCE_STREAM), 0);
    Ok((ReferenceCdf::monte_carlo(f, dim, cfg.mc_points, &mut rng)?, "monte_carlo"))
}

type MultiCdf = Box<dyn Fn(&[f64]) -> f64 + Sync>;

/// Reference distribution for any `ell`; vector observables use a
/// Monte-Carlo sample sorted by the first component.
fn reference(cfg: &RunConfig, f: &Observable, dim: usize) -> Result<(MultiCdf, &'static str), RunError> {
    if f.ell() == 1 {
        let (r, how) = scalar_reference(cfg, f, dim)?;
        return Ok((Box::new(move |s: &[f64]| r.eval(s[0])), how));
    }
    let mut rng = stream_rng(derive_seed(cfg.seed, REFERENCE_STREAM), 0);
    let mut x = vec![0.0; dim];
    let mut sample: Vec<Vec<f64>> = (0..cfg.mc_points)
        .map(|_| {
            x.iter_mut().for_each(|v| *v = rand::Rng::random::<f64>(&mut rng));
            f.eval(&x)
        })
        .collect();
    sample.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let total = sample.len() as f64;
    let cdf = move |s: &[f64]| {
        let end = sample.partition_point(|v| v[0] <= s[0]);
        sample[..end].iter().filter(|v| v.iter().zip(s).all(|(a, b)| a <= b)).count() as f64 / total
    };
    Ok((Box::new(cdf), "monte_carlo"))
}

/// Sample quantiles of a pilot orbit at the given probability levels.
fn pilot_levels(
    cfg: &RunConfig,
    t: &TorusAutomorphism,
    f: &Observable,
    levels: &[f64],
) -> Result<Vec<Vec<f64>>, RunError> {
    if f.ell() != 1 {
        return Err(RunError::Config("vector observables need an explicit s_list".into()));
    }
    let series = one_orbit(cfg, t, f, PILOT_STREAM)?;
    let mut v = series.values().to_vec();
    v.sort_by(f64::total_cmp);
    Ok(levels.iter().map(|&p| vec![v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1]]).collect())
}

fn check(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    finish(cfg, Command::Check, classify(&t, cfg.tolerance)?, None)
}

fn orbit(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let d = t.dim();
    let x0 = match &cfg.x0 {
        Some(nums) => RationalTorusPoint::new(cfg.q.clone(), nums.iter().map(|&v| BigUint::from(v)).collect())?,
        None => random_point(&cfg.q, d, &mut stream_rng(derive_seed(cfg.seed, ORBIT_STREAM), 0)),
    };
    let orbit = t.orbit(&x0, cfg.n);
    let summary = json!({
        "dim": d,
        "length": cfg.n,
        "q": cfg.q.to_string(),
        "x0": x0.numerators().iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    });
    let mut columns = vec!["k".to_string()];
    columns.extend((1..=d).map(|i| format!("num_{i}")));
    columns.push("q".into());
    let mut csv = csv_for(cfg, Command::Orbit, &summary, columns);
    let q = cfg.q.to_string();
    for (k, p) in orbit.points.iter().enumerate() {
        let mut row = vec![Cell::Int(k as u64)];
        row.extend(p.numerators().iter().map(|v| Cell::Text(v.to_string())));
        row.push(Cell::Text(q.clone()));
        csv.row(&row);
    }
    finish(cfg, Command::Orbit, summary, Some(csv))
}

fn empirical(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    let series = one_orbit(cfg, &t, &f, ORBIT_STREAM)?;
    let (reference, how) = reference(cfg, &f, t.dim())?;
    let s_grid: Vec<Vec<f64>> = (0..f.ell())
        .map(|i| {
            let c = series.component(i);
            default_s_grid(&c, cfg.support_bound.unwrap_or_else(|| default_support_bound(&c)))
        })
        .collect();
    let t_grid = cfg.t_grid();
    let process = sequential_process(&series, &t_grid, &s_grid, &*reference)?;
    let summary = json!({
        "n": series.n(),
        "ell": f.ell(),
        "reference": how,
        "t_grid": t_grid,
        "s_grid": s_grid,
        "sup_abs": process.sup_abs(),
    });
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=f.ell()).map(|i| format!("s_{i}")));
    columns.push("value".into());
    let mut csv = csv_for(cfg, Command::Empirical, &summary, columns);
    for (ti, &tv) in t_grid.iter().enumerate() {
        for (j, v) in process.row(ti).iter().enumerate() {
            let mut row = vec![Cell::Float(tv)];
            row.extend(process.s_point(j).into_iter().map(Cell::Float));
            row.push(Cell::Float(*v));
            csv.row(&row);
        }
    }
    finish(cfg, Command::Empirical, summary, Some(csv))
}

fn kanto(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    if f.ell() != 1 {
        return Err(toral::Error::UnsupportedDimension(f.ell()).into());
    }
    let series = one_orbit(cfg, &t, &f, ORBIT_STREAM)?;
    let (reference, how) = scalar_reference(cfg, &f, t.dim())?;
    let m = cfg.support_bound.unwrap_or_else(|| {
        let (lo, hi) = reference.support().unwrap_or((0.0, 0.0));
        default_support_bound(series.values()).max(lo.abs().max(hi.abs()).next_up())
    });
    let n = series.n();
    let k = kantorovich_continuous(&series, &reference, m)?;
    let l1 = lp_norm_in_s(&series, n, &reference, 1.0, m)?;
    let sup = sequential_kantorovich_sup(&series, &reference, m)?;
    let result = json!({
        "n": n,
        "reference": how,
        "support_bound": m,
        "kantorovich": k,
        "sqrt_n_kantorovich": k * (n as f64).sqrt(),
        "l1_norm": l1.value,
        "exact_integration": l1.exact,
        "sequential_sup": sup,
    });
    finish(cfg, Command::Kanto, result, None)
}

fn covariance(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    let s_list = match &cfg.s_list {
        Some(s) => s.clone(),
        None => pilot_levels(cfg, &t, &f, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])?,
    };
    let mut rng = stream_rng(derive_seed(cfg.seed, ENSEMBLE_STREAM), 0);
    let grid = covariance_lambda(&t, &f, &s_list, cfg.lag_cutoff, &ensemble(cfg), &mut rng)?;
    let ell = f.ell();
    let mut columns = vec!["i".to_string(), "j".to_string()];
    columns.extend((1..=ell).map(|c| format!("si_{c}")));
    columns.extend((1..=ell).map(|c| format!("sj_{c}")));
    columns.extend(["lambda".to_string(), "std_error".to_string()]);
    let mut csv = csv_for(cfg, Command::Covariance, &grid, columns);
    for i in 0..grid.size() {
        for j in 0..grid.size() {
            let mut row = vec![Cell::Int(i as u64), Cell::Int(j as u64)];
            row.extend(grid.s_grid[i].iter().chain(&grid.s_grid[j]).map(|&v| Cell::Float(v)));
            row.extend([Cell::Float(grid.get(i, j)), Cell::Float(grid.std_error(i, j))]);
            csv.row(&row);
        }
    }
    finish(cfg, Command::Covariance, grid, Some(csv))
}

fn constants(cfg: &RunConfig) -> Outcome {
    finish(cfg, Command::Constants, a_constant(cfg.ell, cfg.alpha)?, None)
}

fn clt(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    let statistic = match cfg.statistic {
        StatisticKind::PartialSum => CltStatistic::PartialSum { mean: centering_mean(&f, t.dim(), cfg.seed)? },
        StatisticKind::Indicator => {
            let s = cfg.s.clone().ok_or_else(|| RunError::Config("indicator statistic needs `s`".into()))?;
            if s.len() != f.ell() {
                return Err(RunError::Config(format!("s needs {} components", f.ell())));
            }
            let (reference, _) = reference(cfg, &f, t.dim())?;
            let f_s = reference(&s);
            CltStatistic::Indicator { s, f_s }
        }
    };
    let settings = CltSettings {
        n: cfg.n,
        replicates: cfg.replicates,
        significance: cfg.significance,
        variance_band: cfg.variance_band,
        lag_cutoff: cfg.lag_cutoff,
        target: ensemble(cfg),
    };
    let report = clt_marginal_test(&t, &f, &statistic, &settings, cfg.seed)?;
    if let Some(dir) = &cfg.out_dir {
        let mut csv = csv_for(
            cfg,
            Command::Clt,
            &json!({"replicates": report.replicates}),
            vec!["replicate".into(), "value".into()],
        );
        for (i, v) in report.values.iter().enumerate() {
            csv.row(&[Cell::Int(i as u64), Cell::Float(*v)]);
        }
        write_file(dir, "clt_values.csv", &csv.into_string())?;
    }
    finish(cfg, Command::Clt, report, None)
}

fn fdd(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    let s_list = match &cfg.s_list {
        Some(s) => s.clone(),
        None => pilot_levels(cfg, &t, &f, &[0.2, 0.4, 0.6, 0.8])?,
    };
    if let Some(bad) = s_list.iter().find(|s| s.len() != f.ell()) {
        return Err(RunError::Config(format!("level {bad:?} needs {} components", f.ell())));
    }
    let (reference, _) = reference(cfg, &f, t.dim())?;
    let f_values: Vec<f64> = s_list.iter().map(|s| reference(s)).collect();
    let settings =
        FddSettings { n: cfg.n, replicates: cfg.replicates, lag_cutoff: cfg.lag_cutoff, target: ensemble(cfg) };
    finish(cfg, Command::Fdd, fdd_covariance_test(&t, &f, &s_list, &f_values, &settings, cfg.seed)?, None)
}

fn scaling(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    let report = moment_scaling(&t, &f, cfg.p, &cfg.n_list, cfg.replicates, &cfg.q, cfg.seed)?;
    finish(cfg, Command::Scaling, report, None)
}

fn birkhoff(cfg: &RunConfig) -> Outcome {
    let t = automorphism(cfg)?;
    let f = observable(cfg, t.dim())?;
    finish(cfg, Command::Birkhoff, birkhoff_check(&t, &f, cfg.n, cfg.n_orbits, &cfg.q, cfg.seed)?, None)
}
