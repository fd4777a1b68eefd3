//! Lévy measures: finite jump quadratures for the nonlocal operator and
//! compound-Poisson samplers for the path simulator.
//!
//! Jumps with `|w| < cutoff` are dropped. Both the PDE operator and the
//! simulator see exactly the same finite measure, so they stay consistent
//! with each other; the dropped mass is reported through
//! [`JumpQuadrature::truncation_bound`].

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::GameProblem;

pub const DEFAULT_CUTOFF: f64 = 1e-3;
pub const DEFAULT_NODE_BUDGET: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub mark: Vec<f64>,
    pub mass: f64,
}

/// A Lévy measure on `R^m \ {0}`.
///
/// Density families are one-dimensional (`m = 1`); `symmetric` mirrors the
/// density onto the negative half-line.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasureSpec {
    /// The zero measure (pure diffusion).
    None,
    Atomic { atoms: Vec<Atom> },
    /// `intensity * exp(-rate * |w|) dw`, discretized up to `outer_radius`.
    Exponential {
        intensity: f64,
        rate: f64,
        symmetric: bool,
        outer_radius: f64,
    },
    /// `intensity * |w|^(-1-alpha) dw` on `0 < |w| <= radius`, `0 < alpha < 2`.
    Power {
        intensity: f64,
        alpha: f64,
        radius: f64,
        symmetric: bool,
    },
}

impl LevyMeasureSpec {
    pub fn atomic(atoms: &[(f64, f64)]) -> Self {
        LevyMeasureSpec::Atomic {
            atoms: atoms
                .iter()
                .map(|&(w, mass)| Atom { mark: vec![w], mass })
                .collect(),
        }
    }

    pub fn jump_dim(&self) -> usize {
        match self {
            LevyMeasureSpec::Atomic { atoms } => atoms.first().map_or(1, |a| a.mark.len()),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Invalid(format!("levy {name} must be positive and finite, got {v}")))
            }
        };
        match self {
            LevyMeasureSpec::None => Ok(()),
            LevyMeasureSpec::Atomic { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Invalid("atomic levy measure needs at least one atom".into()));
                }
                let m = atoms[0].mark.len();
                for atom in atoms {
                    if atom.mark.is_empty() || atom.mark.len() != m {
                        return Err(Error::Invalid("atom marks must share one non-zero dimension".into()));
                    }
                    if atom.mark.iter().any(|v| !v.is_finite()) || norm(&atom.mark) == 0.0 {
                        return Err(Error::Invalid("atom marks must be finite and non-zero".into()));
                    }
                    positive("atom mass", atom.mass)?;
                }
                Ok(())
            }
            LevyMeasureSpec::Exponential { intensity, rate, outer_radius, .. } => {
                positive("intensity", *intensity)?;
                positive("rate", *rate)?;
                positive("outer_radius", *outer_radius)
            }
            LevyMeasureSpec::Power { intensity, alpha, radius, .. } => {
                positive("intensity", *intensity)?;
                positive("radius", *radius)?;
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < 2.0) {
                    return Err(Error::Invalid(format!(
                        "power density exponent alpha must lie in (0, 2), got {alpha}"
                    )));
                }
                Ok(())
            }
        }
    }

    fn sides(&self) -> f64 {
        match self {
            LevyMeasureSpec::Exponential { symmetric: true, .. }
            | LevyMeasureSpec::Power { symmetric: true, .. } => 2.0,
            _ => 1.0,
        }
    }

    /// `∫_a^b density(r) dr` on one half-line.
    fn shell_mass(&self, a: f64, b: f64) -> f64 {
        match *self {
            LevyMeasureSpec::Exponential { intensity, rate, .. } => {
                if b.is_infinite() {
                    intensity / rate * (-rate * a).exp()
                } else {
                    intensity / rate * (-rate * a).exp() * -(-rate * (b - a)).exp_m1()
                }
            }
            LevyMeasureSpec::Power { intensity, alpha, .. } => {
                intensity * (a.powf(-alpha) - b.powf(-alpha)) / alpha
            }
            _ => 0.0,
        }
    }

    /// `∫_a^b r^2 density(r) dr` on one half-line.
    fn shell_second_moment(&self, a: f64, b: f64) -> f64 {
        match *self {
            LevyMeasureSpec::Exponential { intensity, rate, .. } => {
                let upper = if b.is_infinite() { 2.0 } else { lower_gamma3(rate * b) };
                intensity / rate.powi(3) * (upper - lower_gamma3(rate * a))
            }
            LevyMeasureSpec::Power { intensity, alpha, .. } => {
                intensity * (b.powf(2.0 - alpha) - a.powf(2.0 - alpha)) / (2.0 - alpha)
            }
            _ => 0.0,
        }
    }

    /// `∫_a^b min(r^2, 1) density(r) dr` on one half-line.
    fn shell_truncated_moment(&self, a: f64, b: f64) -> f64 {
        if b <= 1.0 {
            self.shell_second_moment(a, b)
        } else if a >= 1.0 {
            self.shell_mass(a, b)
        } else {
            self.shell_second_moment(a, 1.0) + self.shell_mass(1.0, b)
        }
    }

    fn support_radius(&self) -> f64 {
        match *self {
            LevyMeasureSpec::Power { radius, .. } => radius,
            _ => f64::INFINITY,
        }
    }

    /// `∫ min(|w|^2, 1) ν(dw)` in closed form.
    pub fn truncated_second_moment(&self) -> f64 {
        match self {
            LevyMeasureSpec::None => 0.0,
            LevyMeasureSpec::Atomic { atoms } => atoms
                .iter()
                .map(|a| a.mass * norm(&a.mark).powi(2).min(1.0))
                .sum(),
            _ => self.sides() * self.shell_truncated_moment(0.0, self.support_radius()),
        }
    }

    /// `∫_{|w| < eps} min(|w|^2, 1) ν(dw)`: the part of the measure a cutoff
    /// at `eps` discards, weighted as in the integrability condition.
    pub fn small_jump_moment(&self, eps: f64) -> f64 {
        match self {
            LevyMeasureSpec::None => 0.0,
            LevyMeasureSpec::Atomic { atoms } => atoms
                .iter()
                .filter(|a| norm(&a.mark) < eps)
                .map(|a| a.mass * norm(&a.mark).powi(2).min(1.0))
                .sum(),
            _ => self.sides() * self.shell_truncated_moment(0.0, eps.min(self.support_radius())),
        }
    }

    fn outer_radius(&self) -> f64 {
        match *self {
            LevyMeasureSpec::Exponential { outer_radius, .. } => outer_radius,
            LevyMeasureSpec::Power { radius, .. } => radius,
            _ => f64::INFINITY,
        }
    }
}

/// Lower incomplete gamma `γ(3, s) = ∫_0^s u^2 e^{-u} du`.
fn lower_gamma3(s: f64) -> f64 {
    if s < 1.0 {
        // alternating series; converges fast for s < 1
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut k = 0u32;
        loop {
            let contrib = term * s.powi(k as i32 + 3) / f64::from(k + 3);
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs() || k > 40 {
                break;
            }
            k += 1;
            term *= -1.0 / f64::from(k);
        }
        sum
    } else {
        2.0 - (-s).exp() * (s * s + 2.0 * s + 2.0)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpNode {
    pub mark: Vec<f64>,
    pub weight: f64,
}

/// Finite-node approximation of a Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpQuadrature {
    pub nodes: Vec<JumpNode>,
    pub cutoff: f64,
    pub total_mass: f64,
    pub compensator_mean: Vec<f64>,
    pub truncation_bound: f64,
    pub jump_dim: usize,
    cumulative: Vec<f64>,
}

impl JumpQuadrature {
    fn from_nodes(nodes: Vec<JumpNode>, cutoff: f64, truncation_bound: f64, jump_dim: usize) -> Self {
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        let mut mean = vec![0.0; jump_dim];
        for node in &nodes {
            acc += node.weight;
            cumulative.push(acc);
            for (m, w) in mean.iter_mut().zip(&node.mark) {
                *m += node.weight * w;
            }
        }
        JumpQuadrature {
            nodes,
            cutoff,
            total_mass: acc,
            compensator_mean: mean,
            truncation_bound,
            jump_dim,
            cumulative,
        }
    }

    /// The quadrature of the zero measure.
    pub fn empty(jump_dim: usize) -> Self {
        Self::from_nodes(Vec::new(), DEFAULT_CUTOFF, 0.0, jump_dim)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_j weight_j * min(|w_j|^2, 1)`.
    pub fn truncated_second_moment(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.weight * norm(&n.mark).powi(2).min(1.0))
            .sum()
    }

    fn draw_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        let target = rng.random::<f64>() * self.total_mass;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        &self.nodes[idx.min(self.nodes.len() - 1)].mark
    }
}

/// Builds the jump quadrature for `spec` with small-jump cutoff `cutoff`.
///
/// Atoms are copied verbatim. Densities are split into geometric shells
/// between the cutoff and the outer radius (with an extra edge at `|w| = 1`);
/// each shell carries its exact mass, placed at the radius that reproduces
/// the shell's exact `min(|w|^2, 1)` moment.
pub fn build_quadrature(spec: &LevyMeasureSpec, cutoff: f64, node_budget: usize) -> Result<JumpQuadrature> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::Invalid(format!("cutoff must be positive, got {cutoff}")));
    }
    if node_budget == 0 {
        return Err(Error::Invalid("node budget must be at least 1".into()));
    }
    spec.validate()?;
    let truncation = spec.small_jump_moment(cutoff);
    match spec {
        LevyMeasureSpec::None => Ok(JumpQuadrature::empty(1)),
        LevyMeasureSpec::Atomic { atoms } => {
            let nodes: Vec<JumpNode> = atoms
                .iter()
                .filter(|a| norm(&a.mark) >= cutoff)
                .map(|a| JumpNode { mark: a.mark.clone(), weight: a.mass })
                .collect();
            if nodes.is_empty() {
                return Err(Error::NoNodeSurvives { cutoff });
            }
            Ok(JumpQuadrature::from_nodes(nodes, cutoff, truncation, spec.jump_dim()))
        }
        _ => {
            let outer = spec.outer_radius();
            if cutoff >= outer {
                return Err(Error::NoNodeSurvives { cutoff });
            }
            let symmetric = spec.sides() == 2.0;
            let shells = if symmetric { (node_budget / 2).max(1) } else { node_budget };
            let mut nodes = Vec::with_capacity(2 * shells);
            for (a, b) in shell_edges(cutoff, outer, shells) {
                let mass = spec.shell_mass(a, b);
                if !(mass > 0.0) {
                    continue;
                }
                let ratio = spec.shell_truncated_moment(a, b) / mass;
                let r = if ratio < 1.0 { ratio.sqrt().clamp(a, b) } else { 0.5 * (a + b) };
                nodes.push(JumpNode { mark: vec![r], weight: mass });
                if symmetric {
                    nodes.push(JumpNode { mark: vec![-r], weight: mass });
                }
            }
            if nodes.is_empty() {
                return Err(Error::NoNodeSurvives { cutoff });
            }
            Ok(JumpQuadrature::from_nodes(nodes, cutoff, truncation, 1))
        }
    }
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let mut edges: Vec<f64> = (0..n).map(|k| lo * ratio.powi(k as i32)).collect();
    edges.push(hi);
    edges
}

fn shell_edges(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let edges = if n >= 2 && lo < 1.0 && hi > 1.0 {
        let frac = (1.0 / lo).ln() / (hi / lo).ln();
        let inner = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        let mut e = geometric(lo, 1.0, inner);
        e.pop();
        e.extend(geometric(1.0, hi, n - inner));
        e
    } else {
        geometric(lo, hi, n)
    };
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
}

/// Samples the compound-Poisson events of the quadrature measure on `(t0, t1]`,
/// in ascending time order.
pub fn sample_jumps<R: Rng + ?Sized>(quadrature: &JumpQuadrature, t0: f64, t1: f64, rng: &mut R) -> Vec<JumpEvent> {
    let mut events = Vec::new();
    if quadrature.total_mass <= 0.0 || t1 <= t0 {
        return events;
    }
    let mut t = t0;
    loop {
        // 1 - U lies in (0, 1], so the logarithm is finite
        let u = 1.0 - rng.random::<f64>();
        t += -u.ln() / quadrature.total_mass;
        if t > t1 {
            break;
        }
        let mark = quadrature.draw_mark(rng).to_vec();
        events.push(JumpEvent { time: t, mark });
    }
    events
}

/// `Σ_j weight_j η(t, x; y, z; w_j)`, the drift that compensates raw jumps.
pub fn compensator_drift(
    quadrature: &JumpQuadrature,
    problem: &GameProblem,
    t: f64,
    x: &[f64],
    y: f64,
    z: f64,
) -> DVector<f64> {
    let mut drift = DVector::zeros(problem.dim);
    if problem.jump.is_zero() {
        return drift;
    }
    for node in &quadrature.nodes {
        drift += problem.eta(t, x, y, z, &node.mark) * node.weight;
    }
    drift
}
