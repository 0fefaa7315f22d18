//! Run configuration: defaults, then an optional TOML file, then flags.

use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use toral::observable::ObservableSpec;
use toral::torus::DEFAULT_DENOMINATOR;
use toral::IntMatrix;

use crate::cli::{Command, Overrides};

/// Integer matrix as `"2,1;1,1"` or as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Text(String),
    Rows(Vec<Vec<i64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<IntMatrix, String> {
        match self {
            MatrixSpec::Text(s) => s.parse().map_err(|e| format!("matrix {s:?}: {e}")),
            MatrixSpec::Rows(rows) => IntMatrix::from_rows_i64(rows).map_err(|e| format!("matrix: {e}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum StatisticKind {
    PartialSum,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    /// Denominator of rational orbit points.
    #[serde(with = "toral::serde_biguint")]
    pub q: BigUint,
    /// Starting numerators for `orbit`; random when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<u64>>,
    pub seed: u64,
    pub n: usize,
    pub replicates: usize,
    pub lag_cutoff: usize,
    pub n_orbits: usize,
    pub orbit_length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    /// Level of the indicator statistic in `clt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    /// Levels for `covariance` and `fdd`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_list: Option<Vec<Vec<f64>>>,
    pub statistic: StatisticKind,
    pub significance: f64,
    pub variance_band: f64,
    pub tolerance: f64,
    /// Points for Monte-Carlo means and distribution functions.
    pub mc_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_bound: Option<f64>,
    pub ell: u32,
    pub alpha: f64,
    pub p: f64,
    pub n_list: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            matrix: None,
            observable: None,
            q: BigUint::from(DEFAULT_DENOMINATOR),
            x0: None,
            seed: 1,
            n: 4096,
            replicates: 2000,
            lag_cutoff: 50,
            n_orbits: 64,
            orbit_length: 1 << 16,
            t_grid: None,
            s: None,
            s_list: None,
            statistic: StatisticKind::PartialSum,
            significance: 0.01,
            variance_band: 0.1,
            tolerance: 1e-9,
            mc_points: 1 << 20,
            support_bound: None,
            ell: 1,
            alpha: 1.0,
            p: 4.0,
            n_list: (8..=14).map(|e| 1 << e).collect(),
            out_dir: None,
            threads: None,
        }
    }
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TORAL_OUT_DIR";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Defaults, overlaid by the config file (if any), then by flags.
    pub fn resolve(o: &Overrides) -> Result<Self, String> {
        let mut c = match &o.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(m) = &o.matrix {
            c.matrix = Some(MatrixSpec::Text(m.clone()));
        }
        if let Some(obs) = &o.observable {
            c.observable = Some(serde_json::from_str(obs).map_err(|e| format!("--observable: {e}"))?);
        }
        if let Some(q) = &o.q {
            c.q = q.trim().parse().map_err(|_| format!("--q: not an unsigned integer: {q:?}"))?;
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = &o.$field { c.$field = v.clone().into(); } )* };
        }
        take!(seed, n, replicates, lag_cutoff, n_orbits, orbit_length, statistic, significance, variance_band);
        take!(tolerance, mc_points, ell, alpha, p, n_list);
        take!(x0, t_grid, s, support_bound, out_dir, threads);
        if let Some(v) = &o.s_list {
            c.s_list = Some(v.0.clone());
        }
        if c.out_dir.is_none() {
            c.out_dir = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        }
        Ok(c)
    }

    pub fn matrix(&self) -> Result<IntMatrix, String> {
        self.matrix.as_ref().ok_or("no matrix given (use --matrix or `matrix` in the config)")?.to_matrix()
    }

    pub fn observable(&self) -> Result<&ObservableSpec, String> {
        self.observable
            .as_ref()
            .ok_or_else(|| "no observable given (use --observable or `observable` in the config)".into())
    }

    pub fn t_grid(&self) -> Vec<f64> {
        self.t_grid.clone().unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect())
    }

    /// Checks every knob the command uses before any computation starts.
    pub fn validate(&self, cmd: Command) -> Result<(), String> {
        fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(msg.into())
            }
        }
        ensure(self.q >= BigUint::from(2u8), "q must be at least 2")?;
        ensure(self.n >= 1, "n must be positive")?;
        ensure(self.significance > 0.0 && self.significance < 1.0, "significance must lie in (0, 1)")?;
        ensure(self.variance_band > 0.0, "variance_band must be positive")?;
        ensure(self.tolerance > 0.0 && self.tolerance.is_finite(), "tolerance must be positive")?;
        ensure(self.mc_points >= 2, "mc_points must be at least 2")?;
        ensure(self.threads != Some(0), "threads must be positive")?;
        ensure(self.ell >= 1, "ell must be at least 1")?;
        ensure(self.alpha > 0.0 && self.alpha <= 1.0, "alpha must lie in (0, 1]")?;
        ensure(self.p >= 1.0 && self.p.is_finite(), "p must be at least 1")?;
        if let Some(m) = self.support_bound {
            ensure(m > 0.0 && m.is_finite(), "support_bound must be positive")?;
        }
        let t = self.t_grid();
        ensure(
            !t.is_empty() && t.windows(2).all(|w| w[0] < w[1]) && t[0] >= 0.0 && t[t.len() - 1] <= 1.0,
            "t_grid must be strictly increasing within [0, 1]",
        )?;
        if cmd != Command::Constants {
            let m = self.matrix()?;
            toral::TorusAutomorphism::new(m.clone()).map_err(|e| format!("matrix: {e}"))?;
            if let Some(x0) = &self.x0 {
                ensure(x0.len() == m.dim(), format!("x0 needs {} numerators", m.dim()))?;
            }
            if cmd != Command::Check && cmd != Command::Orbit {
                self.observable()?.build(m.dim()).map_err(|e| format!("observable: {e}"))?;
            }
        }
        let ensemble = matches!(cmd, Command::Covariance | Command::Clt | Command::Fdd);
        if ensemble {
            ensure(self.n_orbits >= 2, "n_orbits must be at least 2")?;
            let required = (10 * self.lag_cutoff).max(2);
            ensure(
                self.orbit_length >= required,
                format!("orbit_length {} is below 10 x lag_cutoff = {required}", self.orbit_length),
            )?;
        }
        match cmd {
            Command::Clt => {
                ensure(self.replicates >= 200, "clt needs at least 200 replicates")?;
                if self.statistic == StatisticKind::Indicator {
                    ensure(self.s.is_some(), "the indicator statistic needs a level `s`")?;
                }
            }
            Command::Fdd | Command::Scaling => ensure(self.replicates >= 2, "need at least two replicates")?,
            Command::Birkhoff => ensure(self.n_orbits >= 2, "n_orbits must be at least 2")?,
            _ => {}
        }
        if cmd == Command::Scaling {
            let l = &self.n_list;
            ensure(
                l.len() >= 4 && l[0] > 0 && l.windows(2).all(|w| w[0] < w[1]),
                "n_list must be strictly increasing with at least 4 positive entries",
            )?;
        }
        Ok(())
    }
}
