//! Declarative experiment configuration (TOML). Unknown keys are hard
//! errors so hyperparameter typos cannot pass silently.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barrier::BarrierConfig;
use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::objectives::{
    make_by_name, make_custom_linear, make_custom_quadratic, make_toy_dose,
    toy_dose_default_penalties, Objective,
};
use crate::regions::{AxisBox, Region, SamplerConfig, ToyDoseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    /// "l_shape", "union_of_boxes" or "toy_dose".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoxSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy_dose: Option<ToyDoseSpec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// "linear", "quadratic", "bilinear", "rosenbrock" or "toy_dose".
    pub name: String,
    /// Custom coefficients for a general linear objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    /// Custom center for a general quadratic objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Per-voxel penalties for the dose objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricConvention {
    Untrimmed,
    Trimmed,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_eval_samples: usize,
    pub metric_convention: MetricConvention,
    /// Grid step for the brute-force oracle on low-dimensional regions.
    pub oracle_grid_step: f64,
    /// Multistart budget for high-dimensional regions.
    pub oracle_multistarts: usize,
    pub oracle_iters_per_start: usize,
    pub certificate_epsilon: f64,
    pub certificate_samples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_eval_samples: 1000,
            metric_convention: MetricConvention::Untrimmed,
            oracle_grid_step: 0.25,
            oracle_multistarts: 64,
            oracle_iters_per_start: 2000,
            certificate_epsilon: 0.5,
            certificate_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory seed; there is no wall-clock default.
    pub seed: u64,
    pub region: RegionConfig,
    pub objective: ObjectiveConfig,
    pub sampler: SamplerConfig<f64>,
    pub gan: GanConfig,
    pub barrier: BarrierConfig,
    pub evaluation: EvaluationConfig,
    /// Base directory for run outputs; one subdirectory per run,
    /// named by config hash + seed.
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|_| Error::MissingArtifact(path.to_path_buf()))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.gan.validate()?;
        self.barrier.validate_strict()?;
        if self.evaluation.n_eval_samples == 0 {
            return Err(Error::Config("n_eval_samples must be >= 1".into()));
        }
        if self.evaluation.certificate_epsilon <= 0.0 {
            return Err(Error::Config("certificate_epsilon must be > 0".into()));
        }
        // fail fast on inconsistent region/objective pairs
        let region = self.build_region()?;
        let objective = self.build_objective(&region)?;
        if objective.dimension != region.dimension() {
            return Err(Error::Config(format!(
                "objective dimension {} does not match region dimension {}",
                objective.dimension,
                region.dimension()
            )));
        }
        Ok(())
    }

    pub fn build_region(&self) -> Result<Region<f64>> {
        match self.region.kind.as_str() {
            "l_shape" => Ok(Region::l_shape()),
            "union_of_boxes" => {
                let specs = self
                    .region
                    .boxes
                    .as_ref()
                    .ok_or_else(|| Error::Config("union_of_boxes requires boxes".into()))?;
                let boxes = specs
                    .iter()
                    .map(|b| AxisBox::new(b.lower.clone(), b.upper.clone()))
                    .collect::<Result<Vec<_>>>()?;
                Region::union_of_boxes(boxes)
            }
            "toy_dose" => {
                let spec = self
                    .region
                    .toy_dose
                    .clone()
                    .ok_or_else(|| Error::Config("toy_dose requires a [region.toy_dose] table".into()))?;
                Region::toy_dose(spec)
            }
            other => Err(Error::Config(format!("unknown region kind '{other}'"))),
        }
    }

    pub fn build_objective(&self, region: &Region<f64>) -> Result<Objective<f64>> {
        let o = &self.objective;
        match o.name.as_str() {
            "linear" if o.coefficients.is_some() => {
                Ok(make_custom_linear(o.coefficients.clone().unwrap()))
            }
            "quadratic" if o.center.is_some() => {
                Ok(make_custom_quadratic(o.center.clone().unwrap()))
            }
            "toy_dose" => {
                let spec = self
                    .region
                    .toy_dose
                    .clone()
                    .ok_or_else(|| Error::Config("toy_dose objective needs a toy_dose region".into()))?;
                let penalties = o
                    .penalties
                    .clone()
                    .unwrap_or_else(|| toy_dose_default_penalties(&spec));
                make_toy_dose(&spec, penalties, spec.prescription_vector())
            }
            name => {
                let _ = region;
                make_by_name(name)
            }
        }
    }

    /// Hash over the canonical serialized form: stable across runs, changes
    /// iff a semantically meaningful field changes.
    pub fn hash(&self) -> String {
        // where the run is stored is not part of what was run
        let mut semantic = self.clone();
        semantic.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&semantic).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        hex_string(&digest[..8])
    }

    /// Per-run output directory: `<output_dir>/<hash>-seed<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("{}-seed{}", self.hash(), self.seed))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
seed = 7
output_dir = "runs"

[region]
kind = "l_shape"

[objective]
name = "quadratic"

[sampler]
shrink_margin = 0.5
noise_std = 0.25
n_feasible = 100
n_infeasible = 100
inflate_margin = 2.0

[gan]
latent_dim = 8
hidden_width = 64
batch_size = 64
total_iterations = 10
disc_updates_per_gen_update = 10
injection_start_fraction = 0.5
injection_replace_fraction = 0.5
disc_learning_rate = 1e-4
gen_learning_rate = 1e-4
adam_beta1 = 0.5
adam_beta2 = 0.999
leaky_slope = 0.2
log_every = 100

[barrier]
lambda0 = 0.05
mu = 1.01
outer_iterations = 10
inner_steps = 10
batch_size = 32
gen_learning_rate = 1e-4
adam_beta1 = 0.5
adam_beta2 = 0.999
convergence_window = 5
convergence_tolerance = 1e-3
eval_samples = 64

[evaluation]
n_eval_samples = 100
metric_convention = "untrimmed"
oracle_grid_step = 0.25
oracle_multistarts = 8
oracle_iters_per_start = 100
certificate_epsilon = 0.5
certificate_samples = 100
"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.build_region().unwrap().dimension(), 2);
    }

    #[test]
    fn unknown_key_is_hard_error() {
        let text = minimal_toml().replace("seed = 7", "seed = 7\nbogus_key = 1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn mu_not_above_one_is_rejected_before_compute() {
        let text = minimal_toml().replace("mu = 1.01", "mu = 1.0");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hash_changes_iff_meaningful_field_changes() {
        let a = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        let b = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let text = minimal_toml().replace("lambda0 = 0.05", "lambda0 = 0.06");
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_ne!(a.hash(), c.hash());
        // comments and formatting do not matter
        let text = minimal_toml().replace("[gan]", "# a comment\n[gan]");
        let d = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(a.hash(), d.hash());
        // the output location is not semantic
        let mut e = a.clone();
        e.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), e.hash());
    }

    #[test]
    fn run_dir_contains_hash_and_seed() {
        let cfg = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        let dir = cfg.run_dir();
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        assert!(name.contains("seed7"));
        assert!(name.starts_with(&cfg.hash()));
    }
}
