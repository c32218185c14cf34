//! Run configuration and the reproducibility manifest.
//!
//! A run is described by one JSON document ([`RunConfig`]); every field has
//! a default equal to the reference constants baked into the library, so an
//! empty document `{}` describes the canonical single-dovetail run. Unknown
//! keys are rejected to catch typos. Command-line flags override file
//! values, and the merged result is what the run manifest records — loading
//! a `manifest.json` as `--config` therefore reproduces the run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dovetail::adjoint::AdjointMode;
use dovetail::contact::{
    AlternateOptions, PenaltyConfig, PenaltyPower, ALTERNATE_MAX_ITERS, ALTERNATE_TOL,
    DEFAULT_PENALTY_WEIGHT, DEFAULT_SHARPNESS, NEWTON_MAX_ITERS, NEWTON_TOL,
};
use dovetail::fem::Material;
use dovetail::geometry::{validate_params, DesignSpace};
use dovetail::mesh::DEFAULT_MESH_STEP;
use dovetail::optim::{
    ObjectiveConfig, DEFAULT_MIN_LEN, DEFAULT_MIN_WIDTH, DEFAULT_NOISE_SAMPLES,
    DEFAULT_NOISE_SIGMA, DEFAULT_OPT_STEPS,
};

use crate::commands::CliError;

/// Tight Newton tolerance used for gradient checks, where finite
/// differences of `d` must resolve changes far below the default solver
/// tolerance (the FD noise floor scales like `newton_tol / step`).
pub const GRAD_CHECK_NEWTON_TOL: f64 = 1e-14;
/// Default relative-difference threshold for a passing gradient check.
pub const GRAD_CHECK_THRESHOLD: f64 = 1e-3;

/// One starting design or a list of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaInit {
    /// A single parameter vector, e.g. `[2, 4, 5]`.
    One(Vec<f64>),
    /// Several parameter vectors, e.g. `[[2, 4, 5], [3, 5, 4]]`.
    Many(Vec<Vec<f64>>),
}

impl ThetaInit {
    fn to_list(&self) -> Vec<Vec<f64>> {
        match self {
            ThetaInit::One(t) => vec![t.clone()],
            ThetaInit::Many(list) => list.clone(),
        }
    }
}

/// Elastic constants, GPa / dimensionless.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialSection {
    pub e: f64,
    pub nu: f64,
}

impl Default for MaterialSection {
    fn default() -> Self {
        MaterialSection { e: 1.0, nu: 0.4 }
    }
}

/// Contact-penalty shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    pub w_pen: f64,
    pub k: f64,
    /// `"square"` or `"double-square"`.
    pub power: String,
}

impl Default for PenaltySection {
    fn default() -> Self {
        PenaltySection {
            w_pen: DEFAULT_PENALTY_WEIGHT,
            k: DEFAULT_SHARPNESS,
            power: "square".to_string(),
        }
    }
}

/// Objective weights and the noise-averaging protocol. The root `seed`
/// field of the run feeds the noise stream, so it is not repeated here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveSection {
    pub w_min_len: f64,
    pub w_min_width: f64,
    pub min_len: f64,
    pub min_width: f64,
    pub noise_sigma: f64,
    pub noise_samples: usize,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection {
            w_min_len: 1.0,
            w_min_width: 1.0,
            min_len: DEFAULT_MIN_LEN,
            min_width: DEFAULT_MIN_WIDTH,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            noise_samples: DEFAULT_NOISE_SAMPLES,
        }
    }
}

/// Alternating-solve controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iters: usize,
    pub tol: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// When set, always run exactly this many alternations (no early
    /// exit). Optimization runs pin the count either way — by this value
    /// when set, by `max_iters` otherwise — to keep the objective smooth.
    pub fixed_iterations: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            max_iters: ALTERNATE_MAX_ITERS,
            tol: ALTERNATE_TOL,
            newton_tol: NEWTON_TOL,
            newton_max_iters: NEWTON_MAX_ITERS,
            fixed_iterations: None,
        }
    }
}

/// Gradient-check protocol: the finite-difference oracle re-solves the
/// whole pipeline per probe, so it pins its own (tighter) solver profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSection {
    /// Central-difference step, mm.
    pub fd_step: f64,
    /// Mean relative difference above which the check fails.
    pub threshold: f64,
    /// Newton tolerance for both the adjoint's forward solve and every FD
    /// probe.
    pub newton_tol: f64,
    /// Alternation count pinned for every solve of the check.
    pub fixed_iterations: usize,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        GradCheckSection {
            fd_step: dovetail::adjoint::FD_STEP,
            threshold: GRAD_CHECK_THRESHOLD,
            newton_tol: GRAD_CHECK_NEWTON_TOL,
            fixed_iterations: ALTERNATE_MAX_ITERS,
        }
    }
}

/// Complete description of one workbench run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Design family: `"single_dovetail"`, `"complex_dovetail"`, or
    /// `"double_dovetail"`.
    pub space: String,
    /// Starting design(s); defaults to the family's reference design.
    pub theta0: Option<ThetaInit>,
    pub material: MaterialSection,
    /// Tensile traction, GPa; defaults to 0.001 for the single dovetail
    /// and 0.003 for the other two families.
    pub traction: Option<f64>,
    /// Target mesh edge length, mm.
    pub mesh_step: f64,
    pub penalty: PenaltySection,
    pub objective: ObjectiveSection,
    pub solver: SolverSection,
    pub grad_check: GradCheckSection,
    /// Root seed of every random stream in the run.
    pub seed: u64,
    /// Output directory; all artifacts and the manifest land here.
    pub out_dir: Option<String>,
    /// Gradient-descent steps per optimization run.
    pub steps: usize,
    /// `"full-tape"` or `"frozen-fixed-point"`.
    pub adjoint_mode: String,
    /// Poisson's ratios visited by `sweep-poisson`.
    pub nu_list: Vec<f64>,
    /// Export per-iteration displacement fields from `simulate`.
    pub dump_iterations: bool,
    /// Worker threads for independent θ0 / ν entries.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            space: "single_dovetail".to_string(),
            theta0: None,
            material: MaterialSection::default(),
            traction: None,
            mesh_step: DEFAULT_MESH_STEP,
            penalty: PenaltySection::default(),
            objective: ObjectiveSection::default(),
            solver: SolverSection::default(),
            grad_check: GradCheckSection::default(),
            seed: 0,
            out_dir: None,
            steps: DEFAULT_OPT_STEPS,
            adjoint_mode: "full-tape".to_string(),
            nu_list: vec![0.3, 0.4],
            dump_iterations: false,
            jobs: 1,
        }
    }
}

/// Reference starting design of each family.
pub fn default_theta(space: DesignSpace) -> Vec<f64> {
    match space {
        DesignSpace::SingleDovetail => vec![2.0, 4.0, 5.0],
        DesignSpace::ComplexDovetail => vec![-3.0, 4.0, -1.0, 2.0, 4.0, 5.0],
        DesignSpace::DoubleDovetail => vec![-4.0, -1.0, 4.0, 2.0, 4.0, 5.0],
    }
}

/// Default tensile traction of each family, GPa.
pub fn default_traction(space: DesignSpace) -> f64 {
    match space {
        DesignSpace::SingleDovetail => 0.001,
        DesignSpace::ComplexDovetail | DesignSpace::DoubleDovetail => 0.003,
    }
}

/// A [`RunConfig`] with every optional field filled in and every string
/// parsed, ready to drive a command.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    /// The normalized config as the manifest will record it.
    pub config: RunConfig,
    pub space: DesignSpace,
    pub thetas: Vec<Vec<f64>>,
    pub material: Material,
    pub traction: f64,
    pub penalty: PenaltyConfig,
    pub objective: ObjectiveConfig,
    pub solver: AlternateOptions,
    pub adjoint: AdjointMode,
    pub out_dir: String,
}

impl RunConfig {
    /// Validate everything and fill the defaults. Error messages list every
    /// violation found, not just the first.
    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        let mut errors: Vec<String> = Vec::new();

        let space = DesignSpace::from_name(&self.space);
        if space.is_none() {
            errors.push(format!(
                "unknown design space {:?}; expected single_dovetail, complex_dovetail, \
                 or double_dovetail",
                self.space
            ));
        }

        let thetas: Vec<Vec<f64>> = match (&self.theta0, space) {
            (Some(init), _) => init.to_list(),
            (None, Some(s)) => vec![default_theta(s)],
            (None, None) => Vec::new(),
        };
        if let Some(s) = space {
            if thetas.is_empty() && self.theta0.is_some() {
                errors.push("theta0 list is empty".to_string());
            }
            for (i, theta) in thetas.iter().enumerate() {
                for v in validate_params(s, theta) {
                    errors.push(format!("theta0[{i}]: {v}"));
                }
            }
        }

        let material = match Material::new(self.material.e, self.material.nu) {
            Ok(m) => Some(m),
            Err(e) => {
                errors.push(format!("material: {e}"));
                None
            }
        };

        let traction = self
            .traction
            .unwrap_or_else(|| space.map_or(0.0, default_traction));
        if !traction.is_finite() || traction < 0.0 {
            errors.push(format!("traction must be finite and >= 0, got {traction}"));
        }

        if !(self.mesh_step.is_finite() && self.mesh_step > 0.0) {
            errors.push(format!("mesh_step must be positive, got {}", self.mesh_step));
        }

        let power = match self.penalty.power.as_str() {
            "square" => Some(PenaltyPower::Square),
            "double-square" => Some(PenaltyPower::DoubleSquare),
            other => {
                errors.push(format!(
                    "unknown penalty power {other:?}; expected \"square\" or \"double-square\""
                ));
                None
            }
        };
        if !(self.penalty.w_pen.is_finite() && self.penalty.w_pen > 0.0) {
            errors.push(format!(
                "penalty.w_pen must be positive, got {}",
                self.penalty.w_pen
            ));
        }
        if !(self.penalty.k.is_finite() && self.penalty.k > 0.0) {
            errors.push(format!("penalty.k must be positive, got {}", self.penalty.k));
        }

        let o = &self.objective;
        for (name, v) in [
            ("w_min_len", o.w_min_len),
            ("w_min_width", o.w_min_width),
            ("min_len", o.min_len),
            ("min_width", o.min_width),
            ("noise_sigma", o.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errors.push(format!("objective.{name} must be finite and >= 0, got {v}"));
            }
        }
        if o.noise_samples == 0 {
            errors.push("objective.noise_samples must be at least 1".to_string());
        }

        let sv = &self.solver;
        if sv.max_iters == 0 {
            errors.push("solver.max_iters must be at least 1".to_string());
        }
        if sv.fixed_iterations == Some(0) {
            errors.push("solver.fixed_iterations must be at least 1 when set".to_string());
        }
        for (name, v) in [("tol", sv.tol), ("newton_tol", sv.newton_tol)] {
            if !(v.is_finite() && v > 0.0) {
                errors.push(format!("solver.{name} must be positive, got {v}"));
            }
        }
        if sv.newton_max_iters == 0 {
            errors.push("solver.newton_max_iters must be at least 1".to_string());
        }

        let gc = &self.grad_check;
        for (name, v) in [
            ("fd_step", gc.fd_step),
            ("threshold", gc.threshold),
            ("newton_tol", gc.newton_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errors.push(format!("grad_check.{name} must be positive, got {v}"));
            }
        }
        if gc.fixed_iterations == 0 {
            errors.push("grad_check.fixed_iterations must be at least 1".to_string());
        }

        let adjoint = match self.adjoint_mode.as_str() {
            "full-tape" => Some(AdjointMode::FullTape),
            "frozen-fixed-point" => Some(AdjointMode::FrozenFixedPoint),
            other => {
                errors.push(format!(
                    "unknown adjoint mode {other:?}; expected \"full-tape\" or \
                     \"frozen-fixed-point\""
                ));
                None
            }
        };

        if self.jobs == 0 {
            errors.push("jobs must be at least 1".to_string());
        }

        if !errors.is_empty() {
            return Err(CliError::Config(errors.join("\n")));
        }
        let space = space.unwrap();

        let out_dir = self.out_dir.clone().unwrap_or_else(|| "out".to_string());
        let mut config = self.clone();
        config.theta0 = Some(ThetaInit::Many(thetas.clone()));
        config.traction = Some(traction);
        config.out_dir = Some(out_dir.clone());

        Ok(ResolvedRun {
            config,
            space,
            thetas,
            material: material.unwrap(),
            traction,
            penalty: PenaltyConfig {
                w_pen: self.penalty.w_pen,
                k: self.penalty.k,
                power: power.unwrap(),
            },
            objective: ObjectiveConfig {
                w_min_len: o.w_min_len,
                w_min_width: o.w_min_width,
                min_len: o.min_len,
                min_width: o.min_width,
                noise_sigma: o.noise_sigma,
                noise_samples: o.noise_samples,
                rng_seed: self.seed,
            },
            solver: AlternateOptions {
                max_iters: sv.max_iters,
                tol: sv.tol,
                newton_tol: sv.newton_tol,
                newton_max_iters: sv.newton_max_iters,
                fixed_iterations: sv.fixed_iterations,
            },
            adjoint: adjoint.unwrap(),
            out_dir,
        })
    }
}

/// Load a configuration document. The file may be either a bare
/// [`RunConfig`] or a `manifest.json` from a previous run, in which case
/// the embedded resolved config is extracted — re-running a manifest
/// reproduces the run.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    let config_value = match value.get("config") {
        Some(inner) if value.get("tool").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(config_value)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Everything needed to reproduce and audit one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Binary name, always `"dovetail"`.
    pub tool: String,
    pub version: String,
    /// Subcommand that produced this manifest.
    pub command: String,
    /// Unix timestamp of manifest creation (informational; excluded from
    /// reproducibility comparisons).
    pub created_unix: u64,
    /// The fully resolved configuration — pass this manifest as `--config`
    /// to re-run it.
    pub config: RunConfig,
    /// Files the run wrote, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Convergence flags and headline numbers of the run.
    pub convergence: serde_json::Value,
}
