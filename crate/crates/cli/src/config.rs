//! Command-line flags and the JSON matrix file they override.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::Parser;
use serde::{Deserialize, Serialize};
use surropt::{ExperimentConfig, FunctionId, MarsKnots, Quadrature, Replication, SurrogateKind};

#[derive(Debug, Clone, Default, Parser)]
#[command(name = "surropt", version, about = "Runs surrogate optimization experiments")]
pub struct Args {
    /// Test functions (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub function: Vec<FunctionId>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Fraction of important variables.
    #[arg(long)]
    pub fiv: Option<f64>,
    /// Noise levels np (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub noise: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub surrogate: Vec<SurrogateKind>,
    /// Policies: none, fixed, smart, or fixed:R / smart:RMAX.
    #[arg(long, value_delimiter = ',')]
    pub replication: Vec<PolicySpec>,
    /// Replication counts used by a bare `fixed`.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<usize>,
    /// Replication caps used by a bare `smart`.
    #[arg(long, value_delimiter = ',')]
    pub rmax: Vec<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub k_prime: Option<usize>,
    /// Knots per dimension for plain MARS, or `leaves`.
    #[arg(long)]
    pub mars_knots: Option<MarsKnots>,
    #[arg(long)]
    pub executions: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with matrix settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "SURROPT_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub list_functions: bool,
}

/// A replication policy as written on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicySpec {
    None,
    /// Fixed replication; `None` expands over the `r` list.
    Fixed(Option<usize>),
    /// Smart replication; `None` expands over the `rmax` list.
    Smart(Option<usize>),
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        let (name, level) = match s.split_once(':') {
            Some((n, l)) => {
                let l = l
                    .parse::<usize>()
                    .ok()
                    .filter(|&l| l > 0)
                    .ok_or_else(|| format!("bad replication level in `{s}`"))?;
                (n.to_string(), Some(l))
            }
            None => (s.clone(), None),
        };
        match (name.as_str(), level) {
            ("none" | "norep", None) => Ok(PolicySpec::None),
            ("fixed" | "fixedrep", l) => Ok(PolicySpec::Fixed(l)),
            ("smart" | "smartrep", l) => Ok(PolicySpec::Smart(l)),
            _ => Err(format!("unknown replication policy `{s}`")),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::None => f.write_str("none"),
            PolicySpec::Fixed(None) => f.write_str("fixed"),
            PolicySpec::Smart(None) => f.write_str("smart"),
            PolicySpec::Fixed(Some(r)) => write!(f, "fixed:{r}"),
            PolicySpec::Smart(Some(r)) => write!(f, "smart:{r}"),
        }
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

/// Settings of a whole experiment matrix. Defaults reproduce the full
/// factorial design: five functions, five surrogates, no / fixed / smart
/// replication at levels 5 and 10, four noise levels, 30 executions each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub function: Vec<FunctionId>,
    pub dim: usize,
    pub fiv: f64,
    pub noise: Vec<f64>,
    pub surrogate: Vec<SurrogateKind>,
    pub replication: Vec<PolicySpec>,
    pub r: Vec<usize>,
    pub rmax: Vec<usize>,
    pub alpha: f64,
    pub budget: usize,
    pub pool_size: Option<usize>,
    pub k_prime: usize,
    pub mars_knots: MarsKnots,
    pub executions: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    /// Optimum used to normalize the metrics.
    pub f_min: f64,
    pub quadrature: Quadrature,
    /// Remaining run settings (surrogate hyperparameters, `keep_all`, ...).
    /// Its matrix-level fields are overwritten per cell.
    pub base: ExperimentConfig,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            function: FunctionId::ALL.to_vec(),
            dim: 30,
            fiv: 0.5,
            noise: vec![0.0, 0.05, 0.1, 0.25],
            surrogate: SurrogateKind::ALL.to_vec(),
            replication: vec![PolicySpec::None, PolicySpec::Fixed(None), PolicySpec::Smart(None)],
            r: vec![5, 10],
            rmax: vec![5, 10],
            alpha: 0.05,
            budget: 1000,
            pool_size: None,
            k_prime: 3,
            mars_knots: MarsKnots::Count(20),
            executions: 30,
            seed: 0,
            out: PathBuf::from("results"),
            jobs: None,
            f_min: 0.0,
            quadrature: Quadrature::Trapezoid,
            base: ExperimentConfig::default(),
        }
    }
}

impl MatrixConfig {
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File settings (if any) overridden by the flags that were given.
    pub fn from_args(args: &Args) -> anyhow::Result<Self> {
        let mut c = match &args.config {
            Some(p) => Self::from_json_file(p)?,
            None => Self::default(),
        };
        macro_rules! list {
            ($f:ident) => {
                if !args.$f.is_empty() {
                    c.$f = args.$f.clone();
                }
            };
        }
        macro_rules! scalar {
            ($f:ident) => {
                if let Some(v) = args.$f.clone() {
                    c.$f = v;
                }
            };
        }
        list!(function);
        list!(noise);
        list!(surrogate);
        list!(replication);
        list!(r);
        list!(rmax);
        scalar!(dim);
        scalar!(fiv);
        scalar!(alpha);
        scalar!(budget);
        scalar!(k_prime);
        scalar!(mars_knots);
        scalar!(executions);
        scalar!(seed);
        scalar!(out);
        if args.pool_size.is_some() {
            c.pool_size = args.pool_size;
        }
        if args.jobs.is_some() {
            c.jobs = args.jobs;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, empty) in [
            ("function", self.function.is_empty()),
            ("noise", self.noise.is_empty()),
            ("surrogate", self.surrogate.is_empty()),
            ("replication", self.replication.is_empty()),
        ] {
            if empty {
                bail!("`{name}` list is empty");
            }
        }
        if let Some(np) = self.noise.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            bail!("noise level must be a nonnegative number, got {np}");
        }
        if self.executions == 0 {
            bail!("executions must be positive");
        }
        for p in &self.replication {
            let levels = match p {
                PolicySpec::Fixed(None) => &self.r,
                PolicySpec::Smart(None) => &self.rmax,
                _ => continue,
            };
            if levels.is_empty() || levels.contains(&0) {
                bail!("policy `{p}` needs positive replication levels");
            }
        }
        for cell in self.policies() {
            self.experiment(self.function[0], self.noise[0], self.surrogate[0], cell, 0)
                .validate()
                .context("invalid run settings")?;
        }
        Ok(())
    }

    /// Replication policies after expanding bare `fixed` / `smart`.
    pub fn policies(&self) -> Vec<Replication> {
        let mut out = Vec::new();
        for p in &self.replication {
            match *p {
                PolicySpec::None => out.push(Replication::None),
                PolicySpec::Fixed(Some(r)) => out.push(Replication::Fixed(r)),
                PolicySpec::Smart(Some(r)) => out.push(Replication::Smart(r)),
                PolicySpec::Fixed(None) => out.extend(self.r.iter().map(|&r| Replication::Fixed(r))),
                PolicySpec::Smart(None) => {
                    out.extend(self.rmax.iter().map(|&r| Replication::Smart(r)))
                }
            }
        }
        out
    }

    pub fn experiment(
        &self,
        function: FunctionId,
        noise: f64,
        surrogate: SurrogateKind,
        replication: Replication,
        seed: u64,
    ) -> ExperimentConfig {
        ExperimentConfig {
            function,
            dim: self.dim,
            fiv: self.fiv,
            noise,
            surrogate,
            replication,
            alpha: self.alpha,
            budget: self.budget,
            k_prime: self.k_prime,
            pool_size: self.pool_size,
            mars_knots: self.mars_knots,
            seed,
            ..self.base.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_specs_parse_and_print() {
        for s in ["none", "fixed", "smart", "fixed:5", "smart:10"] {
            let p: PolicySpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!("Smartrep".parse::<PolicySpec>().unwrap(), PolicySpec::Smart(None));
        assert!("none:3".parse::<PolicySpec>().is_err());
        assert!("fixed:0".parse::<PolicySpec>().is_err());
        assert!("often".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn default_matrix_expands_five_policies() {
        let c = MatrixConfig::default();
        assert_eq!(
            c.policies(),
            vec![
                Replication::None,
                Replication::Fixed(5),
                Replication::Fixed(10),
                Replication::Smart(5),
                Replication::Smart(10),
            ]
        );
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"function": ["levy"], "budget": 77, "dim": 4, "replication": ["smart:3"]}"#)
            .unwrap();
        let args = Args::parse_from(["surropt", "--config", path.to_str().unwrap(), "--budget", "60"]);
        let c = MatrixConfig::from_args(&args).unwrap();
        assert_eq!(c.function, vec![FunctionId::Levy]);
        assert_eq!(c.dim, 4);
        assert_eq!(c.budget, 60);
        assert_eq!(c.policies(), vec![Replication::Smart(3)]);
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"budgte": 5}"#).unwrap();
        assert!(MatrixConfig::from_json_file(&path).is_err());
        let args = Args::parse_from(["surropt", "--executions", "0"]);
        assert!(MatrixConfig::from_args(&args).is_err());
    }
}
