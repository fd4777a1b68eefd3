//! Run configuration: TOML document, dotted-path overrides and validation.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use isaacs_core::hamiltonian::HamiltonianChoice;
use isaacs_core::levy::{Atom, DEFAULT_CUTOFF, DEFAULT_NODE_BUDGET};
use isaacs_core::{LevyMeasureSpec, PresetRef, ProblemDescription, SchemeConfig, SpatialGrid};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSpec {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl PresetSpec {
    fn to_ref(&self) -> PresetRef {
        PresetRef::new(&self.id, &self.params)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub preset: Option<String>,
    pub dim: Option<usize>,
    pub horizon: Option<f64>,
    pub drift: Option<PresetSpec>,
    pub diffusion: Option<PresetSpec>,
    pub jump: Option<PresetSpec>,
    pub running_cost: Option<PresetSpec>,
    pub terminal: Option<PresetSpec>,
    pub controls_y: Option<Vec<f64>>,
    pub controls_z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub mark: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    None,
    Atomic { atoms: Vec<AtomSpec> },
    Exponential { intensity: f64, rate: f64, symmetric: bool, outer_radius: f64 },
    Power { intensity: f64, alpha: f64, radius: f64, symmetric: bool },
}

impl MeasureSpec {
    fn to_spec(&self) -> LevyMeasureSpec {
        match self {
            MeasureSpec::None => LevyMeasureSpec::None,
            MeasureSpec::Atomic { atoms } => LevyMeasureSpec::Atomic {
                atoms: atoms.iter().map(|a| Atom { mark: a.mark.clone(), mass: a.mass }).collect(),
            },
            &MeasureSpec::Exponential { intensity, rate, symmetric, outer_radius } => {
                LevyMeasureSpec::Exponential { intensity, rate, symmetric, outer_radius }
            }
            &MeasureSpec::Power { intensity, alpha, radius, symmetric } => {
                LevyMeasureSpec::Power { intensity, alpha, radius, symmetric }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub measure: Option<MeasureSpec>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF
}

fn default_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

impl Default for LevySection {
    fn default() -> Self {
        LevySection { measure: None, cutoff: DEFAULT_CUTOFF, node_budget: DEFAULT_NODE_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dx: Vec<f64>,
}

impl GridSection {
    pub fn build(&self) -> Result<SpatialGrid, CliError> {
        SpatialGrid::new(&self.lower, &self.upper, &self.dx).map_err(|e| CliError::invalid("grid", e))
    }

    /// The same box with every spacing halved.
    pub fn refined(&self) -> GridSection {
        GridSection { dx: self.dx.iter().map(|d| d / 2.0).collect(), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceName {
    Plus,
    Minus,
}

impl From<ChoiceName> for HamiltonianChoice {
    fn from(c: ChoiceName) -> Self {
        match c {
            ChoiceName::Plus => HamiltonianChoice::Plus,
            ChoiceName::Minus => HamiltonianChoice::Minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    pub dt_max: Option<f64>,
    #[serde(default = "default_choice")]
    pub hamiltonian: ChoiceName,
}

fn default_safety() -> f64 {
    0.9
}

fn default_choice() -> ChoiceName {
    ChoiceName::Plus
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection { cfl_safety: default_safety(), dt_max: None, hamiltonian: default_choice() }
    }
}

impl SchemeSection {
    pub fn config(&self) -> SchemeConfig {
        SchemeConfig { cfl_safety: self.cfl_safety, dt_max: self.dt_max, hamiltonian: self.hamiltonian.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    #[serde(default)]
    pub t0: f64,
    pub x0: Vec<f64>,
}

/// `"first"`, `"feedback"` or a control value on the player's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyChoice {
    Constant(f64),
    Named(String),
}

impl Default for PolicyChoice {
    fn default() -> Self {
        PolicyChoice::Named("first".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default)]
    pub y: PolicyChoice,
    #[serde(default)]
    pub z: PolicyChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsaacsSection {
    #[serde(default = "default_gap_samples")]
    pub samples: usize,
    #[serde(default = "default_radius")]
    pub state_radius: f64,
    #[serde(default = "default_radius")]
    pub jet_radius: f64,
}

fn default_gap_samples() -> usize {
    1000
}

fn default_radius() -> f64 {
    5.0
}

impl Default for IsaacsSection {
    fn default() -> Self {
        IsaacsSection { samples: default_gap_samples(), state_radius: default_radius(), jet_radius: default_radius() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuePiSection {
    /// Number of equal blocks per partition.
    pub blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppSection {
    pub tau: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Discretization error added to the tolerance; measured by a
    /// half-spacing re-solve when absent.
    pub scheme_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub horizons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    #[serde(default = "default_gap_samples")]
    pub samples: usize,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    #[serde(default = "default_state_radius")]
    pub state_radius: f64,
}

fn default_k_max() -> f64 {
    10.0
}

fn default_state_radius() -> f64 {
    100.0
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { samples: default_gap_samples(), k_max: default_k_max(), state_radius: default_state_radius() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write a `.paths` dump (`simulate` only).
    #[serde(default)]
    pub paths: bool,
    /// Write every n-th time slice of a solved grid (first and last always).
    #[serde(default = "default_stride")]
    pub time_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { paths: false, time_stride: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub levy: LevySection,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub mc: McSection,
    pub start: Option<StartSection>,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub isaacs: IsaacsSection,
    pub value_pi: Option<ValuePiSection>,
    pub dpp: Option<DppSection>,
    #[serde(default)]
    pub verify: VerifySection,
    pub moments: Option<MomentsSection>,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Provenance written by a previous run; ignored on input.
    #[serde(default, skip_serializing)]
    pub manifest: Option<Table>,
}

impl RunConfig {
    pub fn description(&self) -> ProblemDescription {
        let p = &self.problem;
        ProblemDescription {
            preset: p.preset.clone(),
            dim: p.dim,
            horizon: p.horizon,
            drift: p.drift.as_ref().map(PresetSpec::to_ref),
            diffusion: p.diffusion.as_ref().map(PresetSpec::to_ref),
            jump: p.jump.as_ref().map(PresetSpec::to_ref),
            running_cost: p.running_cost.as_ref().map(PresetSpec::to_ref),
            terminal: p.terminal.as_ref().map(PresetSpec::to_ref),
            controls_y: p.controls_y.clone(),
            controls_z: p.controls_z.clone(),
            levy: self.levy.measure.as_ref().map(MeasureSpec::to_spec),
        }
    }

    pub fn grid(&self) -> Result<&GridSection, CliError> {
        self.grid.as_ref().ok_or_else(|| CliError::missing("grid"))
    }

    pub fn start(&self) -> Result<&StartSection, CliError> {
        self.start.as_ref().ok_or_else(|| CliError::missing("start.x0"))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.mc.seed.ok_or_else(|| CliError::missing("mc.seed"))
    }

    pub fn n_paths(&self) -> Result<usize, CliError> {
        match self.mc.n_paths {
            None => Err(CliError::missing("mc.n_paths")),
            Some(n) if n < 2 => Err(CliError::Validation { key: "mc.n_paths".into(), message: "must be at least 2".into() }),
            Some(n) => Ok(n),
        }
    }

    pub fn mc_dt(&self) -> Result<f64, CliError> {
        match self.mc.dt {
            None => Err(CliError::missing("mc.dt")),
            Some(dt) if !(dt > 0.0 && dt.is_finite()) => {
                Err(CliError::Validation { key: "mc.dt".into(), message: "must be positive".into() })
            }
            Some(dt) => Ok(dt),
        }
    }
}

/// Sets `path` (dotted) in `table` to `raw`, parsed as a TOML value when
/// possible and as a string otherwise.
pub fn apply_override(table: &mut Table, path: &str, raw: &str) -> Result<(), CliError> {
    let value = parse_value(raw);
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Validation { key: path.into(), message: "malformed override path".into() });
    }
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = table;
    for (i, k) in parents.iter().enumerate() {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::Validation {
                    key: keys[..=i].join("."),
                    message: "is not a table".into(),
                })
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Parses `text`, applies `overrides` (`key.path=value`) and deserializes,
/// reporting the key path of the first offending entry.
pub fn load(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Validation { key: "<document>".into(), message: e.to_string() })?;
    for o in overrides {
        let (path, raw) = o.split_once('=').ok_or_else(|| CliError::Validation {
            key: o.clone(),
            message: "override must look like key.path=value".into(),
        })?;
        apply_override(&mut table, path.trim(), raw.trim())?;
    }
    serde_path_to_error::deserialize(table).map_err(|e| {
        let key = e.path().to_string();
        CliError::Validation { key, message: e.into_inner().message().to_string() }
    })
}
