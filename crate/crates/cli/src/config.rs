//! Experiment configuration: one JSON document with the sections
//! `kernel`, `grid`, `problem`, `penalty`, `stepper`, `analysis` and `output`.

use std::path::{Path, PathBuf};

use fracobstacle::discretization::Grid;
use fracobstacle::energy::Subdomain;
use fracobstacle::kernel::KernelSpec;
use fracobstacle::oracle::PsorOptions;
use fracobstacle::penalty::{NewtonOptions, PenaltyShape, PenaltySpec};
use fracobstacle::problem::ProblemSpec;
use fracobstacle::profiles::{InitialProfile, ObstacleProfile};
use fracobstacle::regularity::RegularityOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kernel: KernelSpec,
    pub grid: Grid,
    pub problem: ProblemSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub horizon: f64,
    pub n_steps: usize,
    pub obstacle: ObstacleProfile,
    pub initial: InitialProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    /// Penalty width for `solve`; the first level of `compare`.
    pub epsilon: f64,
    /// Penalty height; chosen from the obstacle forcing when absent.
    #[serde(rename = "N")]
    pub n: Option<f64>,
    pub shape: PenaltyShape,
    /// Number of halvings of epsilon run by `compare` (and by `solve` when > 1).
    pub levels: usize,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            n: None,
            shape: PenaltyShape::default(),
            levels: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperSection {
    pub newton: NewtonOptions,
    pub psor: PsorOptions,
}

#[derive(Clone, Debug, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    /// Complementarity solution.
    #[default]
    Oracle,
    /// Penalized solution at `penalty.epsilon`.
    Penalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Field analysed by `regularity` and `energy` when no `--field` is given.
    pub source: FieldSource,
    pub regularity: RegularityOptions,
    /// Gauge radii of the modulus table.
    pub modulus_rho: Vec<f64>,
    /// Free-boundary base points sampled for the modulus table.
    pub modulus_points: usize,
    pub energy: EnergySection,
    pub kernelcheck: KernelCheckSection,
    pub sweep: SweepSection,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            source: FieldSource::default(),
            regularity: RegularityOptions::default(),
            modulus_rho: vec![0.4, 0.2, 0.1, 0.05],
            modulus_points: 16,
            energy: EnergySection::default(),
            kernelcheck: KernelCheckSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub max_level: usize,
    pub subdomain: Subdomain,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self {
            max_level: 6,
            subdomain: Subdomain::Whole,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckSection {
    /// Random point pairs for the kernel bound check.
    pub pairs: usize,
    pub quadrature_resolution: usize,
    /// Radii and times of the envelope sweep.
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// Largest acceptable envelope constant.
    pub max_envelope_constant: f64,
    /// Largest acceptable relative error of the scaling identity.
    pub scaling_tolerance: f64,
}

impl Default for KernelCheckSection {
    fn default() -> Self {
        Self {
            pairs: 1000,
            quadrature_resolution: 64,
            radii: (0..=20).map(|i| 0.5 * i as f64).collect(),
            times: (0..=12).map(|j| 0.01 * 1000f64.powf(j as f64 / 12.0)).collect(),
            max_envelope_constant: 10.0,
            scaling_tolerance: 1e-6,
        }
    }
}

/// Parameter grid of `sweep`; an empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alpha: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub cells: Vec<usize>,
    pub n_steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory, overridden by `--out`.
    pub dir: PathBuf,
    /// Also write every time slice of the main field as CSV.
    pub all_slices: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            all_slices: false,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            CliError::Validation {
                message: e.inner().to_string(),
                key: (key != ".").then_some(key),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation {
            message: format!("cannot read config {}: {e}", path.display()),
            key: None,
        })?;
        Self::from_json(&text)
    }

    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec {
            kernel: self.kernel.clone(),
            grid: self.grid.clone(),
            horizon: self.problem.horizon,
            n_steps: self.problem.n_steps,
            obstacle: self.problem.obstacle.clone(),
            initial: self.problem.initial.clone(),
        }
    }

    /// Penalty at `epsilon` with the configured or the chosen height.
    pub fn penalty_spec(&self, epsilon: f64, chosen_n: f64) -> Result<PenaltySpec, CliError> {
        PenaltySpec::new(epsilon, self.penalty.n.unwrap_or(chosen_n), self.penalty.shape).map_err(|e| CliError::Validation {
            message: e.to_string(),
            key: Some("penalty".into()),
        })
    }

    /// Checks the cross-section constraints serde cannot express and returns
    /// the problem's soft warnings.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let invalid = |key: &str, message: String| CliError::Validation {
            message,
            key: Some(key.into()),
        };
        if !(self.penalty.epsilon > 0.0) {
            return Err(invalid("penalty.epsilon", format!("must be positive, got {}", self.penalty.epsilon)));
        }
        if self.penalty.levels == 0 {
            return Err(invalid("penalty.levels", "must be at least 1".into()));
        }
        if let Some(n) = self.penalty.n {
            if !(n > 0.0) {
                return Err(invalid("penalty.N", format!("must be positive, got {n}")));
            }
        }
        if self.analysis.modulus_rho.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("analysis.modulus_rho", "radii must be positive".into()));
        }
        self.problem().validate().map_err(|e| invalid("problem", e.to_string()))
    }
}
