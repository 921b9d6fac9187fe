use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::environments::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::estimation::ConfidenceMode;
use crate::policy::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Bose,
    Oful,
    Thompson,
    #[serde(alias = "eps_greedy", alias = "epsilon_greedy")]
    Epsgreedy,
}

impl AlgorithmName {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmName::Bose => "bose",
            AlgorithmName::Oful => "oful",
            AlgorithmName::Thompson => "thompson",
            AlgorithmName::Epsgreedy => "epsgreedy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).ok()
    }

    pub fn baseline_kind(self) -> Option<BaselineKind> {
        match self {
            AlgorithmName::Bose => None,
            AlgorithmName::Oful => Some(BaselineKind::Oful),
            AlgorithmName::Thompson => Some(BaselineKind::Thompson),
            AlgorithmName::Epsgreedy => Some(BaselineKind::EpsGreedy),
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_lambda_prime() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: AlgorithmName,
    /// Confidence recipe for BOSE. Absent means two-action when `K = 2` and
    /// general otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ConfidenceMode>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Overrides BOSE's regularizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Ridge regularizer for the baselines.
    #[serde(default = "default_lambda_prime")]
    pub lambda_prime: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl AlgorithmSpec {
    pub fn new(name: AlgorithmName) -> Self {
        Self {
            name,
            mode: None,
            delta: default_delta(),
            lambda: None,
            lambda_prime: default_lambda_prime(),
            solver: SolverConfig::default(),
        }
    }

    pub fn resolved_mode(&self, k: usize) -> ConfidenceMode {
        self.mode.unwrap_or(if k == 2 {
            ConfidenceMode::TwoAction
        } else {
            ConfidenceMode::General
        })
    }
}

fn default_replicates() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// `count` values evenly spaced in log scale over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Confidence widths or prior variances: 20 points over `[1e-2, 1e2]`.
/// Exploration probabilities cannot exceed one, so
/// epsilon-greedy sweeps `[1e-3, 1]` instead.
pub fn default_sweep(name: AlgorithmName) -> Vec<f64> {
    match name {
        AlgorithmName::Epsgreedy => log_grid(1e-3, 1.0, 20),
        _ => log_grid(1e-2, 1e2, 20),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algorithm: AlgorithmSpec,
    #[serde(alias = "T")]
    pub horizon: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Also write every replicate's trace.
    #[serde(default)]
    pub raw: bool,
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, algorithm: AlgorithmSpec, horizon: u64) -> Self {
        Self {
            env,
            algorithm,
            horizon,
            replicates: default_replicates(),
            sweep: None,
            master_seed: 0,
            output_dir: default_output_dir(),
            raw: false,
        }
    }

    pub fn with_sweep(mut self, sweep: Vec<f64>) -> Self {
        self.sweep = Some(sweep);
        self
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .clone()
            .unwrap_or_else(|| default_sweep(self.algorithm.name))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        let sweep = self.sweep_values();
        if sweep.is_empty() {
            return Err(Error::Config("sweep must not be empty".into()));
        }
        if let Some(bad) = sweep.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Config(format!(
                "sweep values must be nonnegative, got {bad}"
            )));
        }
        let a = &self.algorithm;
        if !(a.delta > 0.0 && a.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {}",
                a.delta
            )));
        }
        if !(a.lambda_prime.is_finite() && a.lambda_prime > 0.0) {
            return Err(Error::Config("lambda_prime must be positive".into()));
        }
        if let Some(l) = a.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config("lambda must be positive".into()));
            }
        }
        a.solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if a.name == AlgorithmName::Epsgreedy && sweep.iter().any(|&e| e > 1.0) {
            return Err(Error::Config(
                "epsilon sweep values must not exceed 1".into(),
            ));
        }
        if self.env.kind == EnvKind::DeterminismAdversary {
            let randomized = match a.name {
                AlgorithmName::Oful => false,
                // Randomizes whenever two actions survive the filter.
                AlgorithmName::Bose => true,
                AlgorithmName::Thompson | AlgorithmName::Epsgreedy => {
                    sweep.iter().any(|&p| p != 0.0)
                }
            };
            if randomized {
                return Err(randomized_on_adversary(a.name));
            }
        }
        Ok(())
    }
}

pub(crate) fn randomized_on_adversary(name: AlgorithmName) -> Error {
    Error::Contract(format!(
        "{} randomizes its actions; the adversary environment is only defined for deterministic learners",
        name.name()
    ))
}

/// The standard 64-bit splitmix finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one splitmix step at a time.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    pub env: u64,
    pub learner: u64,
}

const ENV_STREAM: u64 = 1;
const LEARNER_STREAM: u64 = 2;

/// The environment seed ignores `param_index`, so every sweep value faces the
/// same sequence of worlds for a given replicate.
pub fn replicate_seeds(master: u64, param_index: usize, replicate: usize) -> ReplicateSeeds {
    ReplicateSeeds {
        env: mix_seed(master, &[ENV_STREAM, replicate as u64]),
        learner: mix_seed(
            master,
            &[LEARNER_STREAM, param_index as u64, replicate as u64],
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0, which
        // advances its state by the golden-ratio increment before mixing.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = replicate_seeds(7, 0, 0);
        assert_eq!(a, replicate_seeds(7, 0, 0));
        assert_ne!(a.env, a.learner);
        assert_eq!(a.env, replicate_seeds(7, 3, 0).env);
        assert_ne!(a.learner, replicate_seeds(7, 3, 0).learner);
        assert_ne!(a.env, replicate_seeds(7, 0, 1).env);
        assert_ne!(a.env, replicate_seeds(8, 0, 0).env);
    }

    #[test]
    fn default_grid() {
        let g = default_sweep(AlgorithmName::Bose);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-2).abs() < 1e-15);
        assert!((g[19] - 1e2).abs() < 1e-10);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let e = default_sweep(AlgorithmName::Epsgreedy);
        assert!(e.iter().all(|&x| x <= 1.0 + 1e-15) && e.len() == 20);
    }

    #[test]
    fn config_json_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"env":{"kind":"CONFOUNDED_SPHERE","d":10,"K":2},
                "algorithm":{"name":"bose"},"horizon":100}"#,
        )
        .unwrap();
        assert_eq!(cfg.replicates, 10);
        assert_eq!(cfg.sweep_values().len(), 20);
        assert_eq!(cfg.algorithm.resolved_mode(2), ConfidenceMode::TwoAction);
        assert_eq!(cfg.algorithm.resolved_mode(5), ConfidenceMode::General);
        assert_eq!(cfg.algorithm.solver, SolverConfig::default());
    }

    #[test]
    fn invalid_configs() {
        let env = EnvConfig::new(EnvKind::LinearSphere, 2, 2);
        let base = ExperimentConfig::new(env, AlgorithmSpec::new(AlgorithmName::Oful), 10);
        assert!(base.validate().is_ok());
        assert!(base.clone().with_replicates(0).validate().is_err());
        assert!(base.clone().with_sweep(vec![]).validate().is_err());
        assert!(base.clone().with_sweep(vec![-1.0]).validate().is_err());
        let mut c = base.clone();
        c.horizon = 0;
        assert!(c.validate().is_err());

        let adv = EnvConfig::new(EnvKind::DeterminismAdversary, 2, 2);
        let c = ExperimentConfig::new(adv, AlgorithmSpec::new(AlgorithmName::Bose), 10);
        assert!(matches!(c.validate(), Err(Error::Contract(_))));
        let c = ExperimentConfig::new(adv, AlgorithmSpec::new(AlgorithmName::Oful), 10);
        assert!(c.validate().is_ok());
        let c = ExperimentConfig::new(adv, AlgorithmSpec::new(AlgorithmName::Thompson), 10)
            .with_sweep(vec![0.0]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn algorithm_names() {
        assert_eq!(AlgorithmName::from_name("OFUL"), Some(AlgorithmName::Oful));
        assert_eq!(
            AlgorithmName::from_name("epsgreedy"),
            Some(AlgorithmName::Epsgreedy)
        );
        assert_eq!(AlgorithmName::from_name("nope"), None);
    }
}
