//! Run configuration: a single JSON document, validated before any work.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use deltashell_core::boundary_ops::Geometry;
use deltashell_core::bs_solver::{InteractionSpec, BETA_MIN};
use deltashell_core::geometry::ClosedCurve;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("`{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Kite,
    Sphere { radius: f64 },
}

impl GeometryConfig {
    pub fn name(&self) -> &'static str {
        match self {
            GeometryConfig::Circle { .. } => "circle",
            GeometryConfig::Ellipse { .. } => "ellipse",
            GeometryConfig::Kite => "kite",
            GeometryConfig::Sphere { .. } => "sphere",
        }
    }

    pub fn curve(&self) -> Option<ClosedCurve> {
        match *self {
            GeometryConfig::Circle { radius } => Some(ClosedCurve::circle(radius)),
            GeometryConfig::Ellipse { a, b } => Some(ClosedCurve::ellipse(a, b)),
            GeometryConfig::Kite => Some(ClosedCurve::kite()),
            GeometryConfig::Sphere { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrengthConfig {
    Constant(f64),
    /// one value per quadrature node
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionConfig {
    Delta { alpha: StrengthConfig },
    DeltaPrime { beta: f64 },
}

impl InteractionConfig {
    pub fn spec(&self) -> InteractionSpec {
        match self {
            InteractionConfig::Delta { alpha: StrengthConfig::Constant(a) } => InteractionSpec::delta(*a),
            InteractionConfig::Delta { alpha: StrengthConfig::Sampled(a) } => InteractionSpec::delta_sampled(a.clone()),
            InteractionConfig::DeltaPrime { beta } => InteractionSpec::delta_prime(*beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// modes for spheres and δ′, Nyström otherwise
    #[default]
    Auto,
    Nystrom,
    Modes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub l_max: u32,
    pub backend: Backend,
    pub bracket: Option<[f64; 2]>,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { n: 256, l_max: 64, backend: Backend::Auto, bracket: None, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeConfig {
    /// box half-width `L`
    #[serde(rename = "L")]
    pub half_width: f64,
    /// cells per side `m`
    pub m: usize,
    /// width of the excluded tube around the curve
    pub tube: f64,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self { half_width: 3.0, m: 45, tube: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchattenConfig {
    pub lambda: f64,
    pub powers: Vec<u32>,
}

impl Default for SchattenConfig {
    fn default() -> Self {
        Self { lambda: -1.0, powers: vec![1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub lambda: f64,
    /// number of halvings of `N` below the finest level
    pub levels: u32,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { lambda: -1.0, levels: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BoundStates,
    Schatten,
    Convergence,
    Verify,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::BoundStates => "bound_states",
            Task::Schatten => "schatten",
            Task::Convergence => "convergence",
            Task::Verify => "verify",
        }
    }
}

fn default_tasks() -> Vec<Task> {
    vec![Task::BoundStates]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    deltashell_core::op_algebra::DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub volume: VolumeConfig,
    #[serde(default)]
    pub schatten: SchattenConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Command-line overrides applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub geometry: Option<String>,
    pub radius: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub grid_n: Option<usize>,
    pub tasks: Vec<Task>,
    pub output: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, doc: &mut Value) -> Result<(), ConfigError> {
        let root = doc.as_object_mut().ok_or_else(|| invalid("<root>", "config must be a JSON object"))?;
        if let Some(kind) = &self.geometry {
            root.insert("geometry".into(), serde_json::json!({ "kind": kind }));
        }
        if let Some(r) = self.radius {
            let g = root.entry("geometry").or_insert_with(|| serde_json::json!({ "kind": "circle" }));
            g.as_object_mut().ok_or_else(|| invalid("geometry", "must be an object"))?.insert("radius".into(), r.into());
        }
        match (self.alpha, self.beta) {
            (Some(_), Some(_)) => return Err(invalid("interaction", "--alpha and --beta are mutually exclusive")),
            (Some(a), None) => {
                root.insert("interaction".into(), serde_json::json!({ "kind": "delta", "alpha": a }));
            }
            (None, Some(b)) => {
                root.insert("interaction".into(), serde_json::json!({ "kind": "delta_prime", "beta": b }));
            }
            (None, None) => {}
        }
        if let Some(n) = self.grid_n {
            let s = root.entry("solver").or_insert_with(|| serde_json::json!({}));
            s.as_object_mut().ok_or_else(|| invalid("solver", "must be an object"))?.insert("N".into(), n.into());
        }
        if !self.tasks.is_empty() {
            root.insert("tasks".into(), serde_json::to_value(&self.tasks)?);
        }
        if let Some(out) = &self.output {
            root.insert("output".into(), serde_json::to_value(out)?);
        }
        Ok(())
    }
}

/// Parses a config document, applies overrides and validates the result.
pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut doc: Value = if text.trim().is_empty() { Value::Object(Default::default()) } else { serde_json::from_str(text)? };
    overrides.apply(&mut doc)?;
    let config: RunConfig = serde_json::from_value(doc)?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn negative(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v < 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be negative and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.geometry {
            GeometryConfig::Circle { radius } | GeometryConfig::Sphere { radius } => positive("geometry.radius", radius)?,
            GeometryConfig::Ellipse { a, b } => {
                positive("geometry.a", a)?;
                positive("geometry.b", b)?;
            }
            GeometryConfig::Kite => {}
        }
        let s = &self.solver;
        if s.n % 2 != 0 {
            return Err(invalid("solver.N", format!("N must be even, got {}", s.n)));
        }
        if s.n < 8 {
            return Err(invalid("solver.N", format!("N must be at least 8, got {}", s.n)));
        }
        if s.l_max == 0 || s.l_max > 199 {
            return Err(invalid("solver.l_max", format!("must lie in 1..=199, got {}", s.l_max)));
        }
        positive("solver.tol", s.tol)?;
        if let Some([lo, hi]) = s.bracket {
            if !(lo.is_finite() && lo < hi && hi < 0.0) {
                return Err(invalid("solver.bracket", format!("bracket [{lo}, {hi}] must satisfy lo < hi < 0")));
            }
        }
        let sphere = matches!(self.geometry, GeometryConfig::Sphere { .. });
        let circle = matches!(self.geometry, GeometryConfig::Circle { .. });
        match &self.interaction {
            InteractionConfig::Delta { alpha } => {
                let values: &[f64] = match alpha {
                    StrengthConfig::Constant(a) => std::slice::from_ref(a),
                    StrengthConfig::Sampled(a) => a,
                };
                if values.iter().any(|a| !a.is_finite()) {
                    return Err(invalid("interaction.alpha", "must be finite"));
                }
                if let StrengthConfig::Sampled(a) = alpha {
                    if sphere || self.uses_modes() {
                        return Err(invalid("interaction.alpha", "sampled strengths need the nystrom backend"));
                    }
                    if a.len() != s.n {
                        return Err(invalid("interaction.alpha", format!("has {} samples but N = {}", a.len(), s.n)));
                    }
                }
            }
            InteractionConfig::DeltaPrime { beta } => {
                if !(beta.abs() >= BETA_MIN && beta.is_finite()) {
                    return Err(invalid("interaction.beta", format!("|beta| must be at least {BETA_MIN:e}, got {beta}")));
                }
                if !(circle || sphere) {
                    return Err(invalid(
                        "interaction",
                        format!("delta_prime on {} is unsupported; it needs a circle or sphere", self.geometry.name()),
                    ));
                }
                if s.backend == Backend::Nystrom {
                    return Err(invalid("solver.backend", "delta_prime is unsupported on the nystrom backend"));
                }
            }
        }
        if sphere && s.backend == Backend::Nystrom {
            return Err(invalid("solver.backend", "spheres use the modes backend"));
        }
        if s.backend == Backend::Modes && !(circle || sphere) {
            return Err(invalid("solver.backend", format!("modes backend is unsupported on {}", self.geometry.name())));
        }
        if self.tasks.is_empty() {
            return Err(invalid("tasks", "must list at least one task"));
        }
        if self.tasks.iter().collect::<BTreeSet<_>>().len() != self.tasks.len() {
            return Err(invalid("tasks", "contains duplicates"));
        }
        positive("volume.L", self.volume.half_width)?;
        if self.volume.m < 2 {
            return Err(invalid("volume.m", format!("must be at least 2, got {}", self.volume.m)));
        }
        if !(self.volume.tube >= 0.0 && self.volume.tube < self.volume.half_width) {
            return Err(invalid("volume.tube", format!("must lie in [0, L), got {}", self.volume.tube)));
        }
        negative("schatten.lambda", self.schatten.lambda)?;
        if self.schatten.powers.is_empty() || self.schatten.powers.iter().any(|p| !(1..=3).contains(p)) {
            return Err(invalid("schatten.powers", format!("must be a non-empty subset of 1..=3, got {:?}", self.schatten.powers)));
        }
        negative("convergence.lambda", self.convergence.lambda)?;
        if self.tasks.contains(&Task::Convergence) {
            if sphere {
                return Err(invalid("tasks", "convergence needs a curve geometry"));
            }
            if matches!(self.interaction, InteractionConfig::Delta { alpha: StrengthConfig::Sampled(_) } | InteractionConfig::DeltaPrime { .. }) {
                return Err(invalid("tasks", "convergence needs a constant delta strength"));
            }
            if self.convergence.levels == 0 || s.n >> self.convergence.levels < 8 {
                return Err(invalid(
                    "convergence.levels",
                    format!("N / 2^levels must be at least 8, got N = {} and levels = {}", s.n, self.convergence.levels),
                ));
            }
        }
        Ok(())
    }

    pub fn uses_modes(&self) -> bool {
        match self.solver.backend {
            Backend::Modes => true,
            Backend::Nystrom => false,
            Backend::Auto => {
                matches!(self.geometry, GeometryConfig::Sphere { .. })
                    || matches!(self.interaction, InteractionConfig::DeltaPrime { .. })
            }
        }
    }

    /// The discretized geometry the solver runs on.
    pub fn geometry(&self) -> Geometry {
        match (self.geometry, self.uses_modes()) {
            (GeometryConfig::Sphere { radius }, _) => Geometry::SphereModes { radius, max_order: self.solver.l_max },
            (GeometryConfig::Circle { radius }, true) => Geometry::CircleModes { radius, max_order: self.solver.l_max },
            (g, _) => Geometry::Curve { curve: g.curve().expect("non-sphere geometry has a curve"), nodes: self.solver.n },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
