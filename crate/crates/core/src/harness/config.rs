use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distlib::{make_bank, BankConfig, DistributionSpec};
use crate::error::{Error, Result};
use crate::experts::{ExternalCommand, DEFAULT_VARIANCE_FLOOR};
use crate::strategies::DEFAULT_STAKE_FLOOR;

/// The shipped default experiment.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../configs/default.json");

/// Where a simulator bank's experts get their moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimBankConfig {
    /// Closed-form moments of each generated distribution.
    Analytic { bank: BankConfig },
    /// `n_sim` fresh draws from each distribution per round.
    Sampled { bank: BankConfig, n_sim: usize },
    /// Child processes speaking the line protocol.
    External { experts: Vec<ExternalExpertConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalExpertConfig {
    pub id: String,
    #[serde(flatten)]
    pub command: ExternalCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    Mc,
    IdealKelly,
    ApproxKelly { bank: String },
    OptimalIs {
        #[serde(default)]
        plain: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub count: usize,
    #[serde(default)]
    pub base: u64,
}

/// Selects runs whose wealth trajectories go to wealth.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceKey {
    pub task: String,
    /// Full method label, e.g. `approx-kelly:sim_172:lambda=1`.
    pub method: String,
    pub seed: usize,
}

fn default_tau0() -> f64 {
    0.5
}
fn default_stake_floor() -> f64 {
    DEFAULT_STAKE_FLOOR
}
fn default_variance_floor() -> f64 {
    DEFAULT_VARIANCE_FLOOR
}
fn default_alpha() -> f64 {
    0.05
}
fn default_lambda() -> Vec<f64> {
    vec![1.0]
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub real_bank: BankConfig,
    #[serde(default)]
    pub sim_banks: BTreeMap<String, SimBankConfig>,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub eta_grid: Vec<f64>,
    pub t_grid: Vec<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
    pub seeds: SeedConfig,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "default_stake_floor")]
    pub stake_floor: f64,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub trace_allowlist: Vec<TraceKey>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_config() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("shipped default config is valid")
    }

    /// Structural checks plus expansion of every bank, so bad references fail
    /// before any run starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.count == 0 {
            return bad("seeds.count must be >= 1".into());
        }
        if self.t_grid.is_empty() || self.t_grid.contains(&0) {
            return bad("t_grid must be non-empty with every T >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty".into());
        }
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return bad("lambda must be non-empty with values in (0, 1]".into());
        }
        if self.eta_grid.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("eta_grid values must be finite and >= 0".into());
        }
        if !(self.tau0 >= 0.0 && self.tau0 <= 1.0) {
            return bad(format!("tau0 must lie in [0, 1], got {}", self.tau0));
        }
        if !(self.stake_floor > 0.0 && self.stake_floor <= 1.0) {
            return bad(format!("stake_floor must lie in (0, 1], got {}", self.stake_floor));
        }
        if !(self.variance_floor > 0.0) {
            return bad("variance_floor must be > 0".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        self.real_specs()?;
        for (name, bank) in &self.sim_banks {
            match bank {
                SimBankConfig::Analytic { bank } => {
                    make_bank(bank)?;
                }
                SimBankConfig::Sampled { bank, n_sim } => {
                    make_bank(bank)?;
                    if *n_sim == 0 {
                        return bad(format!("sim bank `{name}`: n_sim must be >= 1"));
                    }
                }
                SimBankConfig::External { experts } => {
                    if experts.is_empty() {
                        return Err(Error::EmptyBank);
                    }
                    for e in experts {
                        if e.command.command.is_empty() || e.command.n_sim == 0 {
                            return bad(format!("sim bank `{name}`: expert `{}` needs a command and n_sim >= 1", e.id));
                        }
                    }
                }
            }
        }
        for m in &self.methods {
            if let MethodSpec::ApproxKelly { bank } = m {
                if !self.sim_banks.contains_key(bank) {
                    return bad(format!("approx-kelly refers to unknown sim bank `{bank}`"));
                }
                if self.eta_grid.is_empty() {
                    return bad("approx-kelly needs a non-empty eta_grid".into());
                }
            }
        }
        Ok(())
    }

    pub fn real_specs(&self) -> Result<Vec<DistributionSpec>> {
        make_bank(&self.real_bank)
    }

    /// Number of experts in a named sim bank.
    pub fn sim_bank_size(&self, name: &str) -> Result<usize> {
        match self.sim_banks.get(name) {
            None => Err(Error::Config(format!("unknown sim bank `{name}`"))),
            Some(SimBankConfig::Analytic { bank } | SimBankConfig::Sampled { bank, .. }) => Ok(make_bank(bank)?.len()),
            Some(SimBankConfig::External { experts }) => Ok(experts.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_default_is_valid() {
        let cfg = ExperimentConfig::default_config();
        let real = cfg.real_specs().unwrap();
        assert_eq!(real.len(), 6);
        let families: std::collections::BTreeSet<_> = real.iter().map(|s| s.family_name()).collect();
        assert_eq!(families.len(), 6);
        assert!(cfg.sim_banks.len() >= 2);
        assert_eq!(cfg.seeds.count, 100);
        let dense = cfg.sim_bank_size("sim_172").unwrap();
        assert!((160..=180).contains(&dense), "{dense}");
        let coarse = cfg.sim_bank_size("sim_35").unwrap();
        assert!((30..=40).contains(&coarse), "{coarse}");
    }

    #[test]
    fn biased_bank_sits_away_from_targets() {
        let cfg = ExperimentConfig::default_config();
        let SimBankConfig::Analytic { bank } = &cfg.sim_banks["sim_17_biased"] else {
            panic!("biased bank should be analytic");
        };
        let bank = make_bank(bank).unwrap();
        assert_eq!(bank.len(), 17);
        let lowest_target = cfg
            .real_specs()
            .unwrap()
            .iter()
            .map(|s| s.moments().mean)
            .fold(f64::INFINITY, f64::min);
        assert!(bank.iter().all(|s| s.moments().mean < lowest_target - 0.1));
    }

    #[test]
    fn method_json_forms() {
        let m: Vec<MethodSpec> = serde_json::from_str(
            r#"[{"method":"mc"},{"method":"ideal-kelly"},{"method":"approx-kelly","bank":"b"},{"method":"optimal-is"}]"#,
        )
        .unwrap();
        assert_eq!(m[2], MethodSpec::ApproxKelly { bank: "b".into() });
        assert_eq!(m[3], MethodSpec::OptimalIs { plain: false });
        assert!(serde_json::from_str::<MethodSpec>(r#"{"method":"kelly"}"#).is_err());
    }

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "real_bank": {"kind": "explicit", "specs": [{"label": "u", "family": "beta", "a": 1.0, "b": 1.0}]},
            "methods": [{"method": "mc"}],
            "t_grid": [10],
            "seeds": {"count": 2}
        })
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let mut cases = Vec::new();
        let mut v = minimal();
        v["seeds"]["count"] = 0.into();
        cases.push(v);
        let mut v = minimal();
        v["t_grid"] = serde_json::json!([]);
        cases.push(v);
        let mut v = minimal();
        v["methods"] = serde_json::json!([{"method": "approx-kelly", "bank": "missing"}]);
        v["eta_grid"] = serde_json::json!([1.0]);
        cases.push(v);
        let mut v = minimal();
        v["lambda"] = serde_json::json!([1.5]);
        cases.push(v);
        let mut v = minimal();
        v["surprise"] = 1.into();
        cases.push(v);
        for c in cases {
            let err = ExperimentConfig::from_json(&c.to_string()).unwrap_err();
            assert!(err.is_config_error(), "{err}");
        }
        assert!(ExperimentConfig::from_json(&minimal().to_string()).is_ok());
    }

    #[test]
    fn missing_file_names_path() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("/nonexistent/cfg.json"));
    }
}
