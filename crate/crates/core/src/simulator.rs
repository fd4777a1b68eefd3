//! Euler simulation of the controlled jump diffusion and Monte Carlo payoffs.
//!
//! Each path draws from its own ChaCha8 substream (`seed`, stream = path
//! index), so results do not depend on scheduling. Normal increments use the
//! inverse normal CDF of a 53-bit uniform.

use std::io::{self, Write};

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::hamiltonian::hamiltonian;
use crate::levy::{compensator_drift, sample_jumps, JumpEvent, JumpQuadrature};
use crate::model::GameProblem;
use crate::solver::ValueGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Minimizer,
    Maximizer,
}

impl Player {
    fn grid(self, problem: &GameProblem) -> &[f64] {
        match self {
            Player::Minimizer => &problem.controls_y,
            Player::Maximizer => &problem.controls_z,
        }
    }
}

/// A state-feedback control for one player.
#[derive(Debug, Clone, Copy)]
pub enum FeedbackPolicy<'a> {
    Constant { player: Player, control: f64 },
    /// Saddle controls of the Hamiltonian evaluated on finite-difference
    /// jets of a numerical value function.
    Grid {
        vg: &'a ValueGrid,
        player: Player,
        problem: &'a GameProblem,
        quadrature: &'a JumpQuadrature,
    },
}

impl<'a> FeedbackPolicy<'a> {
    pub fn constant(problem: &GameProblem, player: Player, control: f64) -> Result<Self> {
        if !player.grid(problem).contains(&control) {
            let name = if player == Player::Minimizer { "y" } else { "z" };
            return Err(Error::ControlNotInGrid { player: name, value: control });
        }
        Ok(FeedbackPolicy::Constant { player, control })
    }

    /// The first control on the player's grid.
    pub fn first(problem: &GameProblem, player: Player) -> Self {
        FeedbackPolicy::Constant { player, control: player.grid(problem)[0] }
    }

    pub fn player(&self) -> Player {
        match self {
            FeedbackPolicy::Constant { player, .. } | FeedbackPolicy::Grid { player, .. } => *player,
        }
    }

    pub fn at(&self, t: f64, x: &[f64]) -> Result<f64> {
        match *self {
            FeedbackPolicy::Constant { control, .. } => Ok(control),
            FeedbackPolicy::Grid { vg, player, problem, quadrature } => {
                let t_end = *vg.times.last().expect("non-empty value grid");
                if !(vg.times[0] - 1e-12..=t_end + 1e-12).contains(&t) {
                    return Err(Error::OutOfHorizon { t, horizon: t_end });
                }
                let k = vg.nearest_index(t);
                let field = vg.slice(k);
                let q = crate::hamiltonian::Field::gradient(&field, x);
                let a = field.hessian(x);
                let s = hamiltonian(problem, quadrature, vg.times[k], x, &q, &a, &field, vg.hamiltonian);
                Ok(match player {
                    Player::Minimizer => s.y,
                    Player::Maximizer => s.z,
                })
            }
        }
    }
}

/// Feedback policy built from the saddle controls on `vg`.
pub fn feedback_from_grid<'a>(
    vg: &'a ValueGrid,
    player: Player,
    problem: &'a GameProblem,
    quadrature: &'a JumpQuadrature,
) -> Result<FeedbackPolicy<'a>> {
    let t0 = vg.times[0];
    let t1 = *vg.times.last().expect("non-empty value grid");
    if t0 > 1e-12 || (t1 - problem.horizon).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "value grid covers [{t0}, {t1}], policy synthesis needs [0, {}]",
            problem.horizon
        )));
    }
    Ok(FeedbackPolicy::Grid { vg, player, problem, quadrature })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Controls used on `[times[i], times[i + 1])`.
    pub controls: Vec<(f64, f64)>,
    /// Jump events per step.
    pub step_jumps: Vec<usize>,
    pub jumps: Vec<JumpEvent>,
    pub running_cost: f64,
    pub terminal_cost: f64,
}

impl ControlledPath {
    pub fn payoff(&self) -> f64 {
        self.running_cost + self.terminal_cost
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("path has at least one state")
    }
}

/// Forward times from `t0` to `t1` with step `dt`, the last step shortened.
pub fn forward_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let mut times = vec![t0];
    let mut k = 1usize;
    loop {
        let t = t0 + k as f64 * dt;
        if t1 - t <= dt * 1e-9 {
            times.push(t1);
            break;
        }
        times.push(t);
        k += 1;
    }
    times
}

/// Substream `path_index` of the master seed.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Standard normal draw by inversion of a 53-bit uniform on `(0, 1)`.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    Normal::standard().inverse_cdf(u)
}

#[allow(clippy::too_many_arguments)]
fn simulate_segment<R: RngCore>(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    policy_y: &FeedbackPolicy<'_>,
    policy_z: &FeedbackPolicy<'_>,
    t0: f64,
    t_end: f64,
    x0: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<ControlledPath> {
    let d = problem.dim;
    let times = forward_times(t0, t_end, dt);
    let steps = times.len() - 1;
    let mut states = Vec::with_capacity(times.len());
    let mut controls = Vec::with_capacity(steps);
    let mut step_jumps = Vec::with_capacity(steps);
    let mut jumps = Vec::new();
    let mut x = x0.to_vec();
    states.push(x.clone());
    let mut running = 0.0;
    let diffusive = !problem.diffusion.is_zero();
    let jumping = !problem.jump.is_zero() && !quadrature.is_empty();
    let mut xi = DVector::zeros(problem.noise_dim());
    for w in times.windows(2) {
        let (s, h) = (w[0], w[1] - w[0]);
        let y = policy_y.at(s, &x)?;
        let z = policy_z.at(s, &x)?;
        running += problem.f(s, &x, y, z) * h;
        let mut incr = problem.b(s, &x, y, z) * h;
        if diffusive {
            for v in xi.iter_mut() {
                *v = standard_normal(rng);
            }
            incr += problem.sigma(s, &x, y, z) * &xi * h.sqrt();
        }
        let mut count = 0;
        if jumping {
            incr -= compensator_drift(quadrature, problem, s, &x, y, z) * h;
            let events = sample_jumps(quadrature, s, s + h, rng);
            // left limits: every jump sees the state just before it
            let mut pre = x.clone();
            for ev in &events {
                let eta = problem.eta(ev.time, &pre, y, z, &ev.mark);
                for i in 0..d {
                    pre[i] += eta[i];
                }
            }
            for i in 0..d {
                incr[i] += pre[i] - x[i];
            }
            count = events.len();
            jumps.extend(events);
        }
        for i in 0..d {
            x[i] += incr[i];
        }
        controls.push((y, z));
        step_jumps.push(count);
        states.push(x.clone());
    }
    let terminal_cost = problem.g(&x);
    Ok(ControlledPath { times, states, controls, step_jumps, jumps, running_cost: running, terminal_cost })
}

/// Simulates one path from `(t0, x0)` to the horizon.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path<R: RngCore>(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    policy_y: &FeedbackPolicy<'_>,
    policy_z: &FeedbackPolicy<'_>,
    t0: f64,
    x0: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<ControlledPath> {
    check_start(problem, t0, x0, dt)?;
    simulate_segment(problem, quadrature, policy_y, policy_z, t0, problem.horizon, x0, dt, rng)
}

fn check_start(problem: &GameProblem, t0: f64, x0: &[f64], dt: f64) -> Result<()> {
    if !(0.0..problem.horizon).contains(&t0) {
        return Err(Error::OutOfHorizon { t: t0, horizon: problem.horizon });
    }
    if x0.len() != problem.dim {
        return Err(Error::Invalid(format!("initial state has dimension {}, expected {}", x0.len(), problem.dim)));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Pairwise summation in fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        McEstimate { mean, std_error: (var / n as f64).sqrt(), n_paths: n, seed }
    }
}

/// Simulates `n_paths` independent paths in parallel and returns them in
/// path-index order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    policy_y: &FeedbackPolicy<'_>,
    policy_z: &FeedbackPolicy<'_>,
    t0: f64,
    x0: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ControlledPath>> {
    check_start(problem, t0, x0, dt)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(problem, quadrature, policy_y, policy_z, t0, x0, dt, &mut path_rng(seed, i)))
        .collect()
}

/// Monte Carlo estimate of `E[∫ f ds + g(X_T)]`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_payoff(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    policy_y: &FeedbackPolicy<'_>,
    policy_z: &FeedbackPolicy<'_>,
    t0: f64,
    x0: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(Error::Precondition("payoff estimate needs at least two paths".into()));
    }
    check_start(problem, t0, x0, dt)?;
    let payoffs: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            simulate_path(problem, quadrature, policy_y, policy_z, t0, x0, dt, &mut path_rng(seed, i))
                .map(|p| p.payoff())
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_samples(&payoffs, seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentScaling {
    pub horizons: Vec<f64>,
    /// Estimated `E|X(t0 + h) - x0|` per horizon.
    pub means: Vec<f64>,
    /// Least-squares slope of log-mean against log-horizon; `None` when a
    /// mean vanishes.
    pub slope: Option<f64>,
}

/// Sub-steps per horizon in [`moment_scaling_check`].
pub const MOMENT_SUBSTEPS: usize = 16;

/// Estimates `E|X(t0 + h) - x0|` for each horizon `h` under the first
/// controls of both grids and fits the log-log slope.
#[allow(clippy::too_many_arguments)]
pub fn moment_scaling_check(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t0: f64,
    x0: &[f64],
    horizons: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<MomentScaling> {
    if horizons.len() < 3 {
        return Err(Error::Precondition("moment check needs at least three horizons".into()));
    }
    if let Some(&h) = horizons.iter().find(|&&h| !(h > 0.0 && h <= 1.0 && t0 + h <= problem.horizon + 1e-12)) {
        return Err(Error::Precondition(format!("horizon {h} must lie in (0, min(1, T - t0)]")));
    }
    if n_paths < 2 {
        return Err(Error::Precondition("moment check needs at least two paths".into()));
    }
    check_start(problem, t0, x0, horizons[0])?;
    let py = FeedbackPolicy::first(problem, Player::Minimizer);
    let pz = FeedbackPolicy::first(problem, Player::Maximizer);
    let mut means = Vec::with_capacity(horizons.len());
    for (k, &h) in horizons.iter().enumerate() {
        let dt = h / MOMENT_SUBSTEPS as f64;
        let dist: Vec<f64> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(seed, ((k as u64) << 40) | i);
                let t_end = (t0 + h).min(problem.horizon);
                let p = simulate_segment(problem, quadrature, &py, &pz, t0, t_end, x0, dt, &mut rng)?;
                Ok(p.final_state().iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            })
            .collect::<Result<_>>()?;
        means.push(pairwise_sum(&dist) / n_paths as f64);
    }
    let slope = if means.iter().all(|&m| m > 0.0) {
        let lx: Vec<f64> = horizons.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(MomentScaling { horizons: horizons.to_vec(), means, slope })
}

/// Writes `path_id,t,x...,y,z,jump_count`, one record per time step. The
/// final state repeats the last controls with a zero jump count.
pub fn write_paths<W: Write>(paths: &[ControlledPath], mut w: W) -> io::Result<()> {
    for (id, path) in paths.iter().enumerate() {
        for (i, (t, x)) in path.times.iter().zip(&path.states).enumerate() {
            let last = path.controls.len().saturating_sub(1);
            let (y, z) = path.controls.get(i.min(last)).copied().unwrap_or((f64::NAN, f64::NAN));
            let jumps = path.step_jumps.get(i).copied().unwrap_or(0);
            write!(w, "{id},{t:.16e}")?;
            for v in x {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w, ",{y},{z},{jumps}")?;
        }
    }
    Ok(())
}
