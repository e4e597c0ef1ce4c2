use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use rwdrift::analytic::{symmetric_p_from_q, DEFAULT_TOL};
use rwdrift::group::{FreeProductJson, FreeProductSpec, StepDistribution};
use rwdrift::optimize::{Objective, DEFAULT_STARTS};
use rwdrift::simulate::{DEFAULT_SAMPLES, DEFAULT_STEPS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CONVOLUTION_STEPS: usize = 12;
pub const DEFAULT_BRACKET_TOL: f64 = 1e-6;
pub const DEFAULT_GRID: usize = 81;
pub const DEFAULT_CHORDS: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Traffic-equation solution with exact drift and entropy.
    #[default]
    FreeExact,
    /// Monte Carlo drift estimate.
    Simulate,
    /// Exact n-step convolution table summaries.
    Convolve,
    /// Hitting probabilities and block drift of a free product.
    FreeProduct,
    /// Multi-start maximization over symmetric laws.
    Optimize,
    /// Drift and entropy along a segment of laws.
    Sweep,
    /// Midpoint-concavity probe of the drift.
    Concavity,
    /// Cross-oracle verification suite.
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveChoice {
    Drift,
    Entropy,
}

impl From<ObjectiveChoice> for Objective {
    fn from(c: ObjectiveChoice) -> Objective {
        match c {
            ObjectiveChoice::Drift => Objective::Drift,
            ObjectiveChoice::Entropy => Objective::Entropy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    Word,
    Block,
    Green,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Preset {
    #[value(name = "all")]
    #[serde(rename = "all")]
    All,
    #[value(name = "uniform")]
    #[serde(rename = "uniform")]
    Uniform,
    #[value(name = "z3-z2-counterexample")]
    #[serde(rename = "z3-z2-counterexample")]
    Z3Z2Counterexample,
}

/// Everything a run depends on. Probability vectors use the letter order
/// `+1, -1, +2, -2, ...`. Values from `--config` override flags.
#[derive(Clone, Debug, Default, Parser, Serialize, Deserialize)]
#[command(name = "rwdrift", version, about = "Drift and entropy of random walks on free groups and free products")]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Free-group rank.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Step law, comma-separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Second endpoint of a sweep segment.
    #[arg(long = "p-end", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_end: Option<Vec<f64>>,
    /// Symmetric law by exit masses `q_1..q_d` summing to 1/2.
    #[arg(long = "q-sym", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_sym: Option<Vec<f64>>,
    /// Free-product specification file (JSON).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    /// Free-product specification, filled from `--spec`.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product: Option<FreeProductJson>,
    /// Horizon (steps per sample, or convolution steps).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Sweep start `p_1` for rank one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    /// Sweep end `p_1` for rank one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveChoice>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chords: Option<usize>,
    /// Also test the entropy in the concavity probe.
    #[arg(long = "entropy-probe")]
    pub entropy_probe: bool,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<Functional>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// JSON run configuration, or an earlier output document.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Group the run acts on.
pub enum GroupChoice {
    Free(StepDistribution),
    Product(FreeProductSpec),
}

impl RunConfig {
    /// Overlays the `config` section of `doc` (or `doc` itself) on `self`.
    pub fn overlay(self, doc: &Value) -> Result<RunConfig, CliError> {
        let file = doc.get("config").unwrap_or(doc);
        let Value::Object(file) = file else {
            return Err(CliError::Config("configuration must be a JSON object".into()));
        };
        let config_path = self.config.clone();
        let mut merged = serde_json::to_value(&self).map_err(|e| CliError::Config(e.to_string()))?;
        let target = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in file {
            if !v.is_null() {
                target.insert(k.clone(), v.clone());
            }
        }
        let mut cfg: RunConfig = serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.config = config_path;
        Ok(cfg)
    }

    /// Loads `--config` and `--spec`, then fills command defaults so the echo
    /// reproduces the run.
    pub fn resolve(mut self) -> Result<RunConfig, CliError> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            self = self.overlay(&doc)?;
        }
        if self.product.is_none() {
            if let Some(path) = &self.spec {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                self.product = Some(serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?);
            }
        }
        self.fill_defaults();
        if self.threads == Some(0) {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        if self.format == Some(Format::Csv) && !matches!(self.command, Command::Sweep | Command::Convolve) {
            return Err(CliError::Config("csv output is available for sweep and convolve".into()));
        }
        Ok(self)
    }

    fn fill_defaults(&mut self) {
        self.format.get_or_insert(Format::Json);
        let random = matches!(self.command, Command::Simulate | Command::Optimize | Command::Concavity | Command::Verify);
        if random {
            self.seed.get_or_insert(DEFAULT_SEED);
        }
        match self.command {
            Command::FreeExact => {
                self.tol.get_or_insert(DEFAULT_TOL);
            }
            Command::Simulate | Command::Verify => {
                self.n.get_or_insert(DEFAULT_STEPS);
                self.samples.get_or_insert(DEFAULT_SAMPLES);
                if self.command == Command::Verify {
                    self.preset.get_or_insert(Preset::All);
                    self.tol.get_or_insert(DEFAULT_BRACKET_TOL);
                } else {
                    let default = if self.product.is_some() { Functional::Block } else { Functional::Word };
                    self.functional.get_or_insert(default);
                }
            }
            Command::Convolve => {
                self.n.get_or_insert(DEFAULT_CONVOLUTION_STEPS);
            }
            Command::FreeProduct => {
                self.tol.get_or_insert(DEFAULT_BRACKET_TOL);
            }
            Command::Optimize => {
                self.objective.get_or_insert(ObjectiveChoice::Drift);
                self.starts.get_or_insert(DEFAULT_STARTS);
            }
            Command::Sweep => {
                self.grid.get_or_insert(DEFAULT_GRID);
            }
            Command::Concavity => {
                self.chords.get_or_insert(DEFAULT_CHORDS);
            }
        }
    }

    /// Step law from `--q-sym`, `--p`, or the uniform law of rank `--d`.
    pub fn free_law(&self) -> Result<StepDistribution, CliError> {
        let law = if let Some(q) = &self.q_sym {
            symmetric_p_from_q(q)?
        } else if let Some(p) = &self.p {
            StepDistribution::new(p)?
        } else if let Some(d) = self.d {
            if d == 0 {
                return Err(CliError::Config("--d must be positive".into()));
            }
            StepDistribution::uniform(d)
        } else {
            return Err(CliError::Config("a free-group law needs --d, --p or --q-sym".into()));
        };
        if let Some(d) = self.d {
            if law.rank() != d {
                return Err(CliError::Config(format!("law has rank {}, --d is {d}", law.rank())));
            }
        }
        Ok(law)
    }

    pub fn group(&self) -> Result<GroupChoice, CliError> {
        match &self.product {
            Some(doc) => Ok(GroupChoice::Product(FreeProductSpec::try_from(doc.clone())?)),
            None => Ok(GroupChoice::Free(self.free_law()?)),
        }
    }

    pub fn product_spec(&self) -> Result<FreeProductSpec, CliError> {
        match &self.product {
            Some(doc) => Ok(FreeProductSpec::try_from(doc.clone())?),
            None => Err(CliError::Config("free-product needs --spec".into())),
        }
    }

    pub fn rank(&self) -> Result<usize, CliError> {
        self.d.ok_or_else(|| CliError::Config(format!("{:?} needs --d", self.command)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("rwdrift").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn command_names_are_kebab_case() {
        assert_eq!(parse(&["free-exact"]).command, Command::FreeExact);
        assert_eq!(parse(&["verify", "--preset", "z3-z2-counterexample"]).preset, Some(Preset::Z3Z2Counterexample));
    }

    #[test]
    fn probability_lists_split_on_commas() {
        assert_eq!(parse(&["free-exact", "--p", "0.4,0.1,0.25,0.25"]).p, Some(vec![0.4, 0.1, 0.25, 0.25]));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse(&["simulate", "--d", "3", "--n", "100"]).resolve().unwrap();
        let echo = serde_json::to_value(&cfg).unwrap();
        let back = parse(&["free-exact"]).overlay(&serde_json::json!({ "config": echo.clone() })).unwrap();
        assert_eq!(serde_json::to_value(&back).unwrap(), echo);
    }

    #[test]
    fn file_values_override_flags() {
        let cfg = parse(&["simulate", "--n", "100"]).overlay(&serde_json::json!({"n": 7})).unwrap();
        assert_eq!(cfg.n, Some(7));
        assert!(parse(&["simulate"]).overlay(&serde_json::json!({"bogus": 1})).is_err());
    }

    #[test]
    fn rank_mismatch_is_rejected() {
        assert!(parse(&["free-exact", "--d", "3", "--p", "0.25,0.25,0.25,0.25"]).free_law().is_err());
    }
}
