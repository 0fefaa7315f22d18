//! Command-line surface.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::config::StatisticKind;

#[derive(Debug, Parser)]
#[command(name = "toral", version, about = "Limit-theorem diagnostics for ergodic torus automorphisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Classify the matrix: ergodicity, hyperbolicity and the spectral splitting
    Check,
    /// Exact orbit of a rational point, as CSV numerators
    Orbit,
    /// Sequential empirical process of one orbit on a (t, s) grid
    Empirical,
    /// Kantorovich distance between the orbit's empirical law and the reference law
    Kanto,
    /// Estimated Lambda(s, s') with standard errors
    Covariance,
    /// Threshold constants a(ell, alpha) and the Cardan root
    Constants,
    /// Marginal normality test of the normalized sums
    Clt,
    /// Finite-dimensional covariance test of the empirical process
    Fdd,
    /// Moment scaling of running maxima of partial sums
    Scaling,
    /// Convergence of Birkhoff averages
    Birkhoff,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Orbit => "orbit",
            Command::Empirical => "empirical",
            Command::Kanto => "kanto",
            Command::Covariance => "covariance",
            Command::Constants => "constants",
            Command::Clt => "clt",
            Command::Fdd => "fdd",
            Command::Scaling => "scaling",
            Command::Birkhoff => "birkhoff",
        }
    }
}

/// Comma-separated list of numbers.
#[derive(Debug, Clone)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<T>().map_err(|_| format!("cannot parse {v:?}")))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

impl<T> From<List<T>> for Vec<T> {
    fn from(l: List<T>) -> Self {
        l.0
    }
}

impl<T> From<List<T>> for Option<Vec<T>> {
    fn from(l: List<T>) -> Self {
        Some(l.0)
    }
}

/// Semicolon-separated points, each a comma-separated list.
#[derive(Debug, Clone)]
pub struct Points(pub Vec<Vec<f64>>);

impl FromStr for Points {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(';').map(|p| p.parse::<List<f64>>().map(|l| l.0)).collect::<Result<_, _>>().map(Points)
    }
}

/// Flags that override the config file. All are accepted after any subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Configuration file (TOML, or JSON with a .json extension)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Integer matrix, rows separated by ';' (e.g. "2,1;1,1")
    #[arg(long, global = true)]
    pub matrix: Option<String>,
    /// Observable as JSON, e.g. '{"type":"trig","terms":[{"k":[1,0],"cos":1.0}]}'
    #[arg(long, global = true)]
    pub observable: Option<String>,
    /// Denominator of rational orbit points
    #[arg(long, global = true)]
    pub q: Option<String>,
    /// Starting numerators for `orbit`
    #[arg(long, global = true)]
    pub x0: Option<List<u64>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Orbit length per replicate
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true)]
    pub lag_cutoff: Option<usize>,
    /// Independent orbits for covariance estimates
    #[arg(long, global = true)]
    pub n_orbits: Option<usize>,
    #[arg(long, global = true)]
    pub orbit_length: Option<usize>,
    #[arg(long, global = true)]
    pub t_grid: Option<List<f64>>,
    /// Level of the indicator statistic
    #[arg(long, global = true)]
    pub s: Option<List<f64>>,
    /// Levels, e.g. "0.1;0.5;0.9"
    #[arg(long, global = true)]
    pub s_list: Option<Points>,
    #[arg(long, global = true, value_enum)]
    pub statistic: Option<StatisticKind>,
    #[arg(long, global = true)]
    pub significance: Option<f64>,
    #[arg(long, global = true)]
    pub variance_band: Option<f64>,
    /// Unit-circle tolerance for the spectral splitting
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub mc_points: Option<usize>,
    #[arg(long, global = true)]
    pub support_bound: Option<f64>,
    #[arg(long, global = true)]
    pub ell: Option<u32>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Moment order for `scaling`
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub n_list: Option<List<usize>>,
    /// Output directory (defaults to $TORAL_OUT_DIR)
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn lists_and_points() {
        assert_eq!("1, 2,3".parse::<List<u64>>().unwrap().0, vec![1, 2, 3]);
        assert!("1,x".parse::<List<u64>>().is_err());
        assert_eq!("0.1,0.2;0.3,0.4".parse::<Points>().unwrap().0, vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
    }

    #[test]
    fn flags_after_subcommand() {
        let cli = Cli::try_parse_from(["toral", "clt", "--n", "64", "--statistic", "indicator", "--s", "0.5"]).unwrap();
        assert_eq!(cli.command, Command::Clt);
        assert_eq!(cli.overrides.n, Some(64));
        assert_eq!(cli.overrides.statistic, Some(StatisticKind::Indicator));
    }
}
