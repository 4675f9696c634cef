//! JSON configuration files.
//!
//! Every file carries `schema_version` (currently 1). Unknown keys are
//! rejected so a misspelled parameter fails loudly instead of silently taking
//! its default. Errors report the dotted path of the offending field.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ssqp_core::problems::{make_quadratic, make_random_licq, make_rosenbrock_sphere};
use ssqp_core::sqp::RegularizationRule;
use ssqp_core::{AlgoConfig, BetaSchedule, HessianPolicy, MeritParams, Mode, NoiseModel, Problem};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

pub type DynProblem = Box<dyn Problem + Send + Sync>;

/// Reads and parses a JSON file, reporting the failing field path.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_json(&text)
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub(crate) fn check_schema(version: u32) -> Result<(), HarnessError> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(HarnessError::config(
            "schema_version",
            format!("unsupported version {version}, expected {SCHEMA_VERSION}"),
        ))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        n: usize,
        m: usize,
        seed: u64,
        /// Split `f` into this many terms (needed for mini-batch noise).
        #[serde(default)]
        components: Option<usize>,
    },
    RosenbrockSphere,
    RandomLicq {
        n: usize,
        m: usize,
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<DynProblem, HarnessError> {
        let wrap = |e: ssqp_core::Error| HarnessError::config("problem", e.to_string());
        Ok(match *self {
            ProblemSpec::Quadratic { n, m, seed, components } => {
                let p = make_quadratic(n, m, seed).map_err(wrap)?;
                match components {
                    Some(0) => return Err(HarnessError::config("problem.components", "must be at least 1")),
                    Some(c) => Box::new(p.with_components(c, seed)),
                    None => Box::new(p),
                }
            }
            ProblemSpec::RosenbrockSphere => Box::new(make_rosenbrock_sphere()),
            ProblemSpec::RandomLicq { n, m, seed } => Box::new(make_random_licq(n, m, seed).map_err(wrap)?),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    None,
    Gaussian { variance: f64 },
    SymmetricBounded { variance: f64, radius: f64 },
    MiniBatch { components: usize, batch: usize },
}

impl From<&NoiseSpec> for NoiseModel {
    fn from(n: &NoiseSpec) -> Self {
        match *n {
            NoiseSpec::None => NoiseModel::None,
            NoiseSpec::Gaussian { variance } => NoiseModel::Gaussian { variance },
            NoiseSpec::SymmetricBounded { variance, radius } => NoiseModel::SymmetricBounded { variance, radius },
            NoiseSpec::MiniBatch { components, batch } => NoiseModel::MiniBatch { components, batch },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    Deterministic,
    Stochastic { noise: NoiseSpec },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    /// `β = γ/√(k_max+1)`
    Constant {
        gamma: f64,
    },
    Fixed {
        beta: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HessianSpec {
    Identity,
    Regularized {
        #[serde(default = "defaults::zeta")]
        zeta: f64,
        #[serde(default = "defaults::initial_shift")]
        initial_shift: f64,
        #[serde(default = "defaults::growth")]
        growth: f64,
        #[serde(default = "defaults::max_attempts")]
        max_attempts: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeritSpec {
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::eps")]
    pub eps_tau: f64,
    #[serde(default = "defaults::eps")]
    pub eps_xi: f64,
    #[serde(default = "defaults::one")]
    pub tau_init: f64,
    #[serde(default = "defaults::one")]
    pub xi_init: f64,
}

impl Default for MeritSpec {
    fn default() -> Self {
        let p = MeritParams::default();
        MeritSpec {
            sigma: p.sigma,
            eps_tau: p.eps_tau,
            eps_xi: p.eps_xi,
            tau_init: p.tau_init,
            xi_init: p.xi_init,
        }
    }
}

mod defaults {
    use ssqp_core::sqp::RegularizationRule;
    use ssqp_core::MeritParams;

    pub fn sigma() -> f64 {
        MeritParams::default().sigma
    }
    pub fn eps() -> f64 {
        MeritParams::default().eps_tau
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn theta() -> f64 {
        1.0
    }
    pub fn kkt_tol() -> f64 {
        1e-8
    }
    pub fn beta() -> super::BetaSpec {
        super::BetaSpec::Constant { gamma: 0.5 }
    }
    pub fn hessian() -> super::HessianSpec {
        super::HessianSpec::Identity
    }
    pub fn zeta() -> f64 {
        RegularizationRule::default().zeta
    }
    pub fn initial_shift() -> f64 {
        RegularizationRule::default().initial_shift
    }
    pub fn growth() -> f64 {
        RegularizationRule::default().growth
    }
    pub fn max_attempts() -> usize {
        RegularizationRule::default().max_attempts
    }
}

/// Algorithm settings as written in a config file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgoSpec {
    /// Required by `solve`; supplied by the sweep in `experiment`.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub merit: MeritSpec,
    #[serde(default = "defaults::theta")]
    pub theta: f64,
    #[serde(default = "defaults::beta")]
    pub beta: BetaSpec,
    #[serde(default = "defaults::hessian")]
    pub hessian: HessianSpec,
    #[serde(default)]
    pub seed: u64,
    pub mode: ModeSpec,
    #[serde(default)]
    pub stop_eps: Option<f64>,
    #[serde(default = "defaults::kkt_tol")]
    pub kkt_tol: f64,
    #[serde(default)]
    pub verify_curvature: Option<f64>,
}

impl AlgoSpec {
    /// Validated core configuration. `field_prefix` is prepended to field
    /// paths in error messages.
    pub fn to_config(&self, k_max: usize, seed: u64, field_prefix: &str) -> Result<AlgoConfig, HarnessError> {
        let m = &self.merit;
        let cfg = AlgoConfig {
            k_max,
            merit: MeritParams {
                sigma: m.sigma,
                eps_tau: m.eps_tau,
                eps_xi: m.eps_xi,
                tau_init: m.tau_init,
                xi_init: m.xi_init,
            },
            theta: self.theta,
            beta_schedule: match &self.beta {
                BetaSpec::Constant { gamma } => BetaSchedule::Constant { gamma: *gamma },
                BetaSpec::Fixed { beta } => BetaSchedule::Fixed { beta: *beta },
                BetaSpec::Explicit { values } => BetaSchedule::Explicit(values.clone()),
            },
            hessian_policy: match self.hessian {
                HessianSpec::Identity => HessianPolicy::Identity,
                HessianSpec::Regularized {
                    zeta,
                    initial_shift,
                    growth,
                    max_attempts,
                } => HessianPolicy::RegularizedProblemHessian(RegularizationRule {
                    zeta,
                    initial_shift,
                    growth,
                    max_attempts,
                }),
            },
            seed,
            mode: match &self.mode {
                ModeSpec::Deterministic => Mode::Deterministic,
                ModeSpec::Stochastic { noise } => Mode::Stochastic(noise.into()),
            },
            stop_eps: self.stop_eps,
            kkt_tol: self.kkt_tol,
            verify_curvature: self.verify_curvature,
        };
        cfg.validate().map_err(|e| match e {
            ssqp_core::Error::InvalidConfig { field, reason } => {
                HarnessError::config(&format!("{field_prefix}.{}", rename_field(&field)), reason)
            }
            other => HarnessError::config(field_prefix, other.to_string()),
        })?;
        Ok(cfg)
    }
}

/// Maps core field names onto the file schema where they differ.
fn rename_field(field: &str) -> String {
    if let Some(rest) = field.strip_prefix("beta_schedule") {
        return format!("beta{rest}");
    }
    if let Some(rest) = field.strip_prefix("hessian_policy") {
        return format!("hessian{rest}");
    }
    field.to_string()
}

/// Input of `ssqp solve`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub algorithm: AlgoSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl SolveConfig {
    pub fn algo_config(&self) -> Result<AlgoConfig, HarnessError> {
        check_schema(self.schema_version)?;
        let k_max = self
            .algorithm
            .k_max
            .ok_or_else(|| HarnessError::config("algorithm.k_max", "required"))?;
        self.algorithm.to_config(k_max, self.algorithm.seed, "algorithm")
    }
}

/// Output directory: `SSQP_OUTPUT_DIR` if set, else the configured one, else `out`.
pub fn resolve_output_dir(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os(crate::ENV_OUTPUT_DIR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("out")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"{
        "schema_version": 1,
        "problem": {"kind": "quadratic", "n": 4, "m": 2, "seed": 3},
        "algorithm": {
            "k_max": 50,
            "merit": {"eps_tau": 0.2},
            "mode": {"kind": "stochastic", "noise": {"kind": "gaussian", "variance": 1.0}}
        }
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg: SolveConfig = parse_json(SOLVE).unwrap();
        let algo = cfg.algo_config().unwrap();
        assert_eq!(algo.k_max, 50);
        assert_eq!(algo.merit.eps_tau, 0.2);
        assert_eq!(algo.merit.sigma, 0.5);
        assert_eq!(algo.beta_schedule, BetaSchedule::Constant { gamma: 0.5 });
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = SOLVE.replace("\"eps_tau\"", "\"eps_tua\"");
        match parse_json::<SolveConfig>(&text) {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "algorithm.merit.eps_tua"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_errors_carry_path() {
        let text = SOLVE.replace("0.2", "1.5");
        let cfg: SolveConfig = parse_json(&text).unwrap();
        match cfg.algo_config() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "algorithm.merit.eps_tau"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_beta_field_uses_file_name() {
        let text = SOLVE.replace(
            "\"k_max\": 50,",
            "\"k_max\": 50, \"beta\": {\"kind\": \"constant\", \"gamma\": 2.0},",
        );
        let cfg: SolveConfig = parse_json(&text).unwrap();
        match cfg.algo_config() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "algorithm.beta.gamma"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_k_max_is_a_config_error() {
        let text = SOLVE.replace("\"k_max\": 50,", "");
        let cfg: SolveConfig = parse_json(&text).unwrap();
        assert!(matches!(cfg.algo_config(), Err(HarnessError::Config { .. })));
    }
}
