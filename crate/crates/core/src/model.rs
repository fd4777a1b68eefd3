//! Game problems: coefficient presets, control grids and the assumption audit.
//!
//! Coefficients come from a closed registry of named families. Every family
//! is bounded on the control grids, declares its Lipschitz constant in the
//! state variable, and is independent of time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::levy::{norm, LevyMeasureSpec};

/// A preset identifier with its parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetRef {
    pub id: String,
    pub params: Vec<f64>,
}

impl PresetRef {
    pub fn new(id: &str, params: &[f64]) -> Self {
        PresetRef { id: id.to_string(), params: params.to_vec() }
    }
}

fn check_arity(kind: &'static str, p: &PresetRef, expected: usize) -> Result<()> {
    if p.params.len() != expected {
        return Err(Error::ArityMismatch { kind, id: p.id.clone(), expected, got: p.params.len() });
    }
    if p.params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{kind} preset `{}` has non-finite parameters", p.id)));
    }
    Ok(())
}

fn unknown(kind: &'static str, p: &PresetRef) -> Error {
    Error::UnknownPreset { kind, id: p.id.clone() }
}

/// Drift `b(t, x; y, z)`, applied identically to every state component.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Zero,
    Constant(f64),
    /// `cy * y + cz * z`
    ControlAffine { cy: f64, cz: f64 },
    /// `c * y * z`
    ControlProduct(f64),
    /// `a * sin(x_i)` in component `i`
    Sine(f64),
}

impl Drift {
    pub fn from_preset(p: &PresetRef) -> Result<Self> {
        const K: &str = "drift";
        Ok(match p.id.as_str() {
            "zero" => {
                check_arity(K, p, 0)?;
                Drift::Zero
            }
            "constant" => {
                check_arity(K, p, 1)?;
                Drift::Constant(p.params[0])
            }
            "control-affine" => {
                check_arity(K, p, 2)?;
                Drift::ControlAffine { cy: p.params[0], cz: p.params[1] }
            }
            "control-product" => {
                check_arity(K, p, 1)?;
                Drift::ControlProduct(p.params[0])
            }
            "sine" => {
                check_arity(K, p, 1)?;
                Drift::Sine(p.params[0])
            }
            _ => return Err(unknown(K, p)),
        })
    }

    fn component(&self, xi: f64, y: f64, z: f64) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Constant(c) => c,
            Drift::ControlAffine { cy, cz } => cy * y + cz * z,
            Drift::ControlProduct(c) => c * y * z,
            Drift::Sine(a) => a * xi.sin(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Sine(a) => a.abs(),
            _ => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero)
    }
}

/// Diffusion matrix `σ(t, x; y, z)`, square and diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    Zero,
    /// `s * I`
    Constant(f64),
    /// `diag(s0 + s1 * sin(x_i))`
    SineModulated { s0: f64, s1: f64 },
}

impl Diffusion {
    pub fn from_preset(p: &PresetRef) -> Result<Self> {
        const K: &str = "diffusion";
        Ok(match p.id.as_str() {
            "zero" => {
                check_arity(K, p, 0)?;
                Diffusion::Zero
            }
            "constant" => {
                check_arity(K, p, 1)?;
                Diffusion::Constant(p.params[0])
            }
            "sine-modulated" => {
                check_arity(K, p, 2)?;
                Diffusion::SineModulated { s0: p.params[0], s1: p.params[1] }
            }
            _ => return Err(unknown(K, p)),
        })
    }

    fn diagonal(&self, xi: f64) -> f64 {
        match *self {
            Diffusion::Zero => 0.0,
            Diffusion::Constant(s) => s,
            Diffusion::SineModulated { s0, s1 } => s0 + s1 * xi.sin(),
        }
    }

    /// Lipschitz constant in the Frobenius norm.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Diffusion::SineModulated { s1, .. } => s1.abs(),
            _ => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Diffusion::Zero)
    }
}

/// Jump amplitude `η(t, x; y, z; w)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Jump {
    Zero,
    /// `c * w`; a scalar mark is broadcast to every component.
    Linear(f64),
    /// `c * min(|w|, 1) * e_1`
    Clipped(f64),
}

impl Jump {
    pub fn from_preset(p: &PresetRef) -> Result<Self> {
        const K: &str = "jump";
        Ok(match p.id.as_str() {
            "zero" => {
                check_arity(K, p, 0)?;
                Jump::Zero
            }
            "linear" => {
                check_arity(K, p, 1)?;
                Jump::Linear(p.params[0])
            }
            "clipped" => {
                check_arity(K, p, 1)?;
                Jump::Clipped(p.params[0])
            }
            _ => return Err(unknown(K, p)),
        })
    }

    pub fn lipschitz(&self) -> f64 {
        0.0
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Jump::Zero)
    }
}

/// Running cost `f(t, x; y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RunningCost {
    Zero,
    Constant(f64),
    /// `a * y^2 - c * z^2`
    ControlQuadratic { a: f64, c: f64 },
    /// `c * y * z`
    ControlProduct(f64),
    /// `a * Σ sin(x_i)`
    Sine(f64),
}

impl RunningCost {
    pub fn from_preset(p: &PresetRef) -> Result<Self> {
        const K: &str = "running_cost";
        Ok(match p.id.as_str() {
            "zero" => {
                check_arity(K, p, 0)?;
                RunningCost::Zero
            }
            "constant" => {
                check_arity(K, p, 1)?;
                RunningCost::Constant(p.params[0])
            }
            "control-quadratic" => {
                check_arity(K, p, 2)?;
                RunningCost::ControlQuadratic { a: p.params[0], c: p.params[1] }
            }
            "control-product" => {
                check_arity(K, p, 1)?;
                RunningCost::ControlProduct(p.params[0])
            }
            "sine" => {
                check_arity(K, p, 1)?;
                RunningCost::Sine(p.params[0])
            }
            _ => return Err(unknown(K, p)),
        })
    }

    pub fn eval(&self, x: &[f64], y: f64, z: f64) -> f64 {
        match *self {
            RunningCost::Zero => 0.0,
            RunningCost::Constant(c) => c,
            RunningCost::ControlQuadratic { a, c } => a * y * y - c * z * z,
            RunningCost::ControlProduct(c) => c * y * z,
            RunningCost::Sine(a) => a * x.iter().map(|v| v.sin()).sum::<f64>(),
        }
    }

    pub fn lipschitz(&self, dim: usize) -> f64 {
        match *self {
            RunningCost::Sine(a) => a.abs() * (dim as f64).sqrt(),
            _ => 0.0,
        }
    }

    /// True when `f` does not depend on the controls.
    pub fn control_free(&self) -> bool {
        matches!(self, RunningCost::Zero | RunningCost::Constant(_) | RunningCost::Sine(_))
    }
}

/// Terminal cost `g(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    Zero,
    Constant(f64),
    /// `a * Σ sin(x_i)`
    Sine(f64),
    /// `c * x_1`; unbounded, kept for audit demonstrations.
    Linear(f64),
    /// `clamp(x_1, lo, hi)`
    ClampedRamp { lo: f64, hi: f64 },
}

impl Terminal {
    pub fn from_preset(p: &PresetRef) -> Result<Self> {
        const K: &str = "terminal";
        Ok(match p.id.as_str() {
            "zero" => {
                check_arity(K, p, 0)?;
                Terminal::Zero
            }
            "constant" => {
                check_arity(K, p, 1)?;
                Terminal::Constant(p.params[0])
            }
            "sine" => {
                check_arity(K, p, 1)?;
                Terminal::Sine(p.params[0])
            }
            "linear" => {
                check_arity(K, p, 1)?;
                Terminal::Linear(p.params[0])
            }
            "clamped-ramp" => {
                check_arity(K, p, 2)?;
                let (lo, hi) = (p.params[0], p.params[1]);
                if lo > hi {
                    return Err(Error::Invalid(format!("clamped-ramp needs lo <= hi, got [{lo}, {hi}]")));
                }
                Terminal::ClampedRamp { lo, hi }
            }
            _ => return Err(unknown(K, p)),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Terminal::Zero => 0.0,
            Terminal::Constant(c) => c,
            Terminal::Sine(a) => a * x.iter().map(|v| v.sin()).sum::<f64>(),
            Terminal::Linear(c) => c * x[0],
            Terminal::ClampedRamp { lo, hi } => x[0].clamp(lo, hi),
        }
    }

    pub fn lipschitz(&self, dim: usize) -> f64 {
        match *self {
            Terminal::Zero | Terminal::Constant(_) => 0.0,
            Terminal::Sine(a) => a.abs() * (dim as f64).sqrt(),
            Terminal::Linear(c) => c.abs(),
            Terminal::ClampedRamp { .. } => 1.0,
        }
    }
}

/// A fully validated zero-sum game: dynamics, payoff and control grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GameProblem {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub jump: Jump,
    pub running_cost: RunningCost,
    pub terminal: Terminal,
    pub controls_y: Vec<f64>,
    pub controls_z: Vec<f64>,
    pub levy: LevyMeasureSpec,
    /// The preset references the problem was built from, in the order
    /// drift, diffusion, jump, running cost, terminal.
    pub presets: [PresetRef; 5],
}

/// A problem description as read from a config document. Unset fields fall
/// back to the named problem preset, or to the zero problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemDescription {
    pub preset: Option<String>,
    pub dim: Option<usize>,
    pub horizon: Option<f64>,
    pub drift: Option<PresetRef>,
    pub diffusion: Option<PresetRef>,
    pub jump: Option<PresetRef>,
    pub running_cost: Option<PresetRef>,
    pub terminal: Option<PresetRef>,
    pub controls_y: Option<Vec<f64>>,
    pub controls_z: Option<Vec<f64>>,
    pub levy: Option<LevyMeasureSpec>,
}

impl ProblemDescription {
    pub fn preset(name: &str) -> Self {
        ProblemDescription { preset: Some(name.to_string()), ..Default::default() }
    }
}

/// Names accepted by [`ProblemDescription::preset`].
pub const PROBLEM_PRESETS: &[&str] = &[
    "null",
    "sine-diffusion",
    "tug-of-war-drift",
    "pure-jump",
    "compensated-jump",
    "separable",
    "separable-2d",
    "coupled",
    "suboptimal-drift",
    "brownian",
    "unit-drift",
    "sine-drift",
    "modulated-jump",
    "unbounded-terminal",
];

const SYMMETRIC_GRID: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

fn problem_preset(name: &str) -> Result<ProblemDescription> {
    let p = PresetRef::new;
    let zero = |id| Some(p(id, &[]));
    let mut d = ProblemDescription {
        preset: Some(name.to_string()),
        dim: Some(1),
        horizon: Some(1.0),
        drift: zero("zero"),
        diffusion: zero("zero"),
        jump: zero("zero"),
        running_cost: zero("zero"),
        terminal: zero("zero"),
        controls_y: Some(vec![0.0]),
        controls_z: Some(vec![0.0]),
        levy: Some(LevyMeasureSpec::None),
    };
    match name {
        "null" => {}
        "sine-diffusion" => {
            d.diffusion = Some(p("constant", &[0.5]));
            d.terminal = Some(p("sine", &[1.0]));
        }
        "tug-of-war-drift" => {
            d.drift = Some(p("control-affine", &[1.0, 1.0]));
            d.terminal = Some(p("sine", &[1.0]));
            d.controls_y = Some(SYMMETRIC_GRID.to_vec());
            d.controls_z = Some(SYMMETRIC_GRID.to_vec());
        }
        "pure-jump" | "compensated-jump" => {
            d.jump = Some(p("linear", &[1.0]));
            d.levy = Some(LevyMeasureSpec::atomic(&[(1.0, 2.0)]));
            if name == "pure-jump" {
                d.terminal = Some(p("sine", &[1.0]));
            }
        }
        "separable" | "separable-2d" => {
            d.drift = Some(p("control-affine", &[1.0, 0.5]));
            d.diffusion = Some(p("constant", &[0.3]));
            d.jump = Some(p("linear", &[0.2]));
            d.running_cost = Some(p("control-quadratic", &[0.5, 0.5]));
            d.terminal = Some(p("sine", &[1.0]));
            d.controls_y = Some(SYMMETRIC_GRID.to_vec());
            d.controls_z = Some(SYMMETRIC_GRID.to_vec());
            if name == "separable" {
                d.levy = Some(LevyMeasureSpec::atomic(&[(1.0, 1.0)]));
            } else {
                d.dim = Some(2);
                d.levy = Some(LevyMeasureSpec::Atomic {
                    atoms: vec![crate::levy::Atom { mark: vec![1.0, 0.5], mass: 1.0 }],
                });
            }
        }
        "coupled" => {
            d.drift = Some(p("control-product", &[1.0]));
            d.terminal = Some(p("sine", &[1.0]));
            d.controls_y = Some(vec![-1.0, 1.0]);
            d.controls_z = Some(vec![-1.0, 1.0]);
        }
        "suboptimal-drift" => {
            d.drift = Some(p("control-affine", &[1.0, 0.0]));
            d.terminal = Some(p("clamped-ramp", &[-1.0, 1.0]));
            d.controls_y = Some(vec![-1.0, 1.0]);
        }
        "brownian" => {
            d.diffusion = Some(p("constant", &[1.0]));
        }
        "unit-drift" => {
            d.drift = Some(p("constant", &[1.0]));
        }
        "sine-drift" => {
            d.drift = Some(p("sine", &[1.0]));
            d.terminal = Some(p("sine", &[1.0]));
        }
        "modulated-jump" => {
            d.drift = Some(p("sine", &[0.5]));
            d.diffusion = Some(p("sine-modulated", &[0.3, 0.1]));
            d.jump = Some(p("clipped", &[0.5]));
            d.running_cost = Some(p("sine", &[0.2]));
            d.terminal = Some(p("sine", &[1.0]));
            d.levy = Some(LevyMeasureSpec::Exponential {
                intensity: 1.0,
                rate: 1.0,
                symmetric: true,
                outer_radius: 20.0,
            });
        }
        "unbounded-terminal" => {
            d.terminal = Some(p("linear", &[1.0]));
        }
        _ => return Err(Error::UnknownPreset { kind: "problem", id: name.to_string() }),
    }
    Ok(d)
}

fn check_grid(player: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Invalid(format!("control grid for {player} must be non-empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("control grid for {player} has non-finite entries")));
    }
    Ok(())
}

/// Resolves a description against the preset registry and validates it.
pub fn build_problem(desc: &ProblemDescription) -> Result<GameProblem> {
    let base = match &desc.preset {
        Some(name) => problem_preset(name)?,
        None => problem_preset("null")?,
    };
    let pick = |o: &Option<PresetRef>, b: &Option<PresetRef>| o.clone().or_else(|| b.clone()).expect("base preset sets every field");
    let dim = desc.dim.or(base.dim).unwrap_or(1);
    let horizon = desc.horizon.or(base.horizon).unwrap_or(1.0);
    if dim == 0 {
        return Err(Error::Invalid("state dimension must be at least 1".into()));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    let refs = [
        pick(&desc.drift, &base.drift),
        pick(&desc.diffusion, &base.diffusion),
        pick(&desc.jump, &base.jump),
        pick(&desc.running_cost, &base.running_cost),
        pick(&desc.terminal, &base.terminal),
    ];
    let controls_y = desc.controls_y.clone().or(base.controls_y).unwrap_or_else(|| vec![0.0]);
    let controls_z = desc.controls_z.clone().or(base.controls_z).unwrap_or_else(|| vec![0.0]);
    check_grid("y", &controls_y)?;
    check_grid("z", &controls_z)?;
    let levy = desc.levy.clone().or(base.levy).unwrap_or(LevyMeasureSpec::None);
    levy.validate()?;
    let jump = Jump::from_preset(&refs[2])?;
    if let Jump::Linear(_) = jump {
        let m = levy.jump_dim();
        if m != 1 && m != dim {
            return Err(Error::Invalid(format!(
                "linear jump preset needs mark dimension 1 or {dim}, got {m}"
            )));
        }
    }
    Ok(GameProblem {
        name: desc.preset.clone().unwrap_or_else(|| "custom".to_string()),
        dim,
        horizon,
        drift: Drift::from_preset(&refs[0])?,
        diffusion: Diffusion::from_preset(&refs[1])?,
        jump,
        running_cost: RunningCost::from_preset(&refs[3])?,
        terminal: Terminal::from_preset(&refs[4])?,
        controls_y,
        controls_z,
        levy,
        presets: refs,
    })
}

/// Coefficients at one `(t, x, y, z)`. The jump amplitude is exposed as a
/// function of the mark through [`CoefficientSample::eta_at`].
#[derive(Debug, Clone)]
pub struct CoefficientSample<'a> {
    pub b: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub f: f64,
    pub g: f64,
    problem: &'a GameProblem,
    t: f64,
    x: Vec<f64>,
    y: f64,
    z: f64,
}

impl CoefficientSample<'_> {
    pub fn eta_at(&self, w: &[f64]) -> DVector<f64> {
        self.problem.eta(self.t, &self.x, self.y, self.z, w)
    }
}

impl GameProblem {
    /// Number of Brownian components driving the state.
    pub fn noise_dim(&self) -> usize {
        self.dim
    }

    pub fn b(&self, _t: f64, x: &[f64], y: f64, z: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim, x.iter().take(self.dim).map(|&xi| self.drift.component(xi, y, z)))
    }

    pub fn sigma(&self, _t: f64, x: &[f64], _y: f64, _z: f64) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.noise_dim());
        if !self.diffusion.is_zero() {
            for i in 0..self.dim {
                s[(i, i)] = self.diffusion.diagonal(x[i]);
            }
        }
        s
    }

    /// Diffusion matrix `a = σσᵀ / 2`.
    pub fn half_covariance(&self, t: f64, x: &[f64], y: f64, z: f64) -> DMatrix<f64> {
        let s = self.sigma(t, x, y, z);
        &s * s.transpose() * 0.5
    }

    pub fn eta(&self, _t: f64, _x: &[f64], _y: f64, _z: f64, w: &[f64]) -> DVector<f64> {
        match self.jump {
            Jump::Zero => DVector::zeros(self.dim),
            Jump::Linear(c) => {
                if w.len() == self.dim {
                    DVector::from_iterator(self.dim, w.iter().map(|v| c * v))
                } else {
                    DVector::from_element(self.dim, c * w[0])
                }
            }
            Jump::Clipped(c) => {
                let mut v = DVector::zeros(self.dim);
                v[0] = c * norm(w).min(1.0);
                v
            }
        }
    }

    pub fn f(&self, _t: f64, x: &[f64], y: f64, z: f64) -> f64 {
        self.running_cost.eval(x, y, z)
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        self.terminal.eval(x)
    }

    /// Iterates over all `(y, z)` pairs, `y` major.
    pub fn control_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.controls_y
            .iter()
            .flat_map(move |&y| self.controls_z.iter().map(move |&z| (y, z)))
    }

    /// Every preset in the registry is independent of `t`.
    pub fn time_homogeneous(&self) -> bool {
        true
    }

    /// True when both control grids are singletons.
    pub fn control_free(&self) -> bool {
        self.controls_y.len() == 1 && self.controls_z.len() == 1
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Checked evaluation of all coefficients at `(t, x; y, z)`.
    pub fn eval_coefficients(&self, t: f64, x: &[f64], y: f64, z: f64) -> Result<CoefficientSample<'_>> {
        self.check_time(t)?;
        if x.len() != self.dim {
            return Err(Error::Invalid(format!("state has dimension {}, expected {}", x.len(), self.dim)));
        }
        if !self.controls_y.contains(&y) {
            return Err(Error::ControlNotInGrid { player: "y", value: y });
        }
        if !self.controls_z.contains(&z) {
            return Err(Error::ControlNotInGrid { player: "z", value: z });
        }
        Ok(CoefficientSample {
            b: self.b(t, x, y, z),
            sigma: self.sigma(t, x, y, z),
            f: self.f(t, x, y, z),
            g: self.g(x),
            problem: self,
            t,
            x: x.to_vec(),
            y,
            z,
        })
    }

    /// Declared Lipschitz constants in `x`: `(b, σ, η, f, g)`.
    pub fn declared_lipschitz(&self) -> CoefficientEstimates {
        CoefficientEstimates {
            b: self.drift.lipschitz(),
            sigma: self.diffusion.lipschitz(),
            eta: self.jump.lipschitz(),
            f: self.running_cost.lipschitz(self.dim),
            g: self.terminal.lipschitz(self.dim),
        }
    }

    /// Largest absolute control value on either grid.
    pub fn max_control(&self) -> f64 {
        self.controls_y
            .iter()
            .chain(&self.controls_z)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One number per coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoefficientEstimates {
    pub b: f64,
    pub sigma: f64,
    pub eta: f64,
    pub f: f64,
    pub g: f64,
}

impl CoefficientEstimates {
    pub fn max(&self) -> f64 {
        [self.b, self.sigma, self.eta, self.f, self.g].into_iter().fold(0.0, f64::max)
    }

    pub fn all(&self) -> [(&'static str, f64); 5] {
        [("b", self.b), ("sigma", self.sigma), ("eta", self.eta), ("f", self.f), ("g", self.g)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    pub k_max: f64,
    /// States are sampled uniformly from `[-state_radius, state_radius]^d`.
    pub state_radius: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { k_max: 10.0, state_radius: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionPass {
    /// Non-empty finite control grids.
    pub a1: bool,
    /// Sampled bounds, Lipschitz quotients and jump ratio below `k_max`.
    pub a2: bool,
    /// Finite `∫ min(|w|^2, 1) ν(dw)`.
    pub a3: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub lipschitz_estimates: CoefficientEstimates,
    pub bound_estimates: CoefficientEstimates,
    pub eta_small_jump_ratio: f64,
    pub levy_moment: f64,
    pub k_max: f64,
    pub samples: usize,
    pub pass: AssumptionPass,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.pass.a1 && self.pass.a2 && self.pass.a3
    }
}

fn sample_mark(levy: &LevyMeasureSpec, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    match levy {
        LevyMeasureSpec::None => None,
        LevyMeasureSpec::Atomic { atoms } => Some(atoms[rng.random_range(0..atoms.len())].mark.clone()),
        LevyMeasureSpec::Exponential { outer_radius: r, symmetric, .. }
        | LevyMeasureSpec::Power { radius: r, symmetric, .. } => {
            let lo: f64 = 1e-3f64.min(0.5 * r);
            let mag = (lo.ln() + rng.random::<f64>() * (r.ln() - lo.ln())).exp();
            let sign = if *symmetric && rng.random::<bool>() { -1.0 } else { 1.0 };
            Some(vec![sign * mag])
        }
    }
}

/// Samples the coefficients at random points and reports empirical
/// Lipschitz quotients, sup-norms and the small-jump ratio
/// `|η| / min(|w|, 1)`. Deterministic for a fixed seed.
pub fn audit_assumptions(problem: &GameProblem, sample_budget: usize, seed: u64, opts: &AuditOptions) -> AssumptionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim;
    let mut lip = CoefficientEstimates::default();
    let mut bound = CoefficientEstimates::default();
    let mut eta_ratio = 0.0f64;
    let n = sample_budget.max(2);
    let r = opts.state_radius;
    for _ in 0..n {
        let t = rng.random::<f64>() * problem.horizon;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-r..=r)).collect();
        let step = 10f64.powf(rng.random_range(-3.0..0.0));
        let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let dn = norm(&dir).max(1e-12);
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + step * u / dn).collect();
        let dx = x.iter().zip(&xp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dx == 0.0 {
            continue;
        }
        let y = problem.controls_y[rng.random_range(0..problem.controls_y.len())];
        let z = problem.controls_z[rng.random_range(0..problem.controls_z.len())];

        let (b0, b1) = (problem.b(t, &x, y, z), problem.b(t, &xp, y, z));
        lip.b = lip.b.max((&b0 - &b1).norm() / dx);
        bound.b = bound.b.max(b0.norm());
        let (s0, s1) = (problem.sigma(t, &x, y, z), problem.sigma(t, &xp, y, z));
        lip.sigma = lip.sigma.max((&s0 - &s1).norm() / dx);
        bound.sigma = bound.sigma.max(s0.norm());
        let (f0, f1) = (problem.f(t, &x, y, z), problem.f(t, &xp, y, z));
        lip.f = lip.f.max((f0 - f1).abs() / dx);
        bound.f = bound.f.max(f0.abs());
        let (g0, g1) = (problem.g(&x), problem.g(&xp));
        lip.g = lip.g.max((g0 - g1).abs() / dx);
        bound.g = bound.g.max(g0.abs());

        if let Some(w) = sample_mark(&problem.levy, &mut rng) {
            let small = norm(&w).min(1.0);
            let (e0, e1) = (problem.eta(t, &x, y, z, &w), problem.eta(t, &xp, y, z, &w));
            let elip = (&e0 - &e1).norm() / dx;
            lip.eta = lip.eta.max(elip);
            bound.eta = bound.eta.max(e0.norm());
            eta_ratio = eta_ratio.max((e0.norm() + elip) / small);
        }
    }
    let levy_moment = problem.levy.truncated_second_moment();
    let k = opts.k_max;
    let a2 = lip.max() <= k && bound.max() <= k && eta_ratio <= k;
    AssumptionReport {
        lipschitz_estimates: lip,
        bound_estimates: bound,
        eta_small_jump_ratio: eta_ratio,
        levy_moment,
        k_max: k,
        samples: n,
        pass: AssumptionPass {
            a1: !problem.controls_y.is_empty() && !problem.controls_z.is_empty(),
            a2,
            a3: levy_moment.is_finite(),
        },
    }
}
