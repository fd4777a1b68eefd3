//! Piecewise-constant values, dynamic-programming residuals and the
//! verification checker.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{local_operator, nonlocal_operator, saddle_of_table, Field, HamiltonianChoice};
use crate::levy::JumpQuadrature;
use crate::model::GameProblem;
use crate::simulator::{pairwise_sum, path_rng, simulate_path, FeedbackPolicy, McEstimate};
use crate::solver::{
    check_compatible, fingerprint, problem_fingerprint, solve_terminal_value, Scheme, SchemeConfig,
    SpatialGrid, ValueGrid,
};

/// Time partition `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0.0 {
            return Err(Error::Invalid("partition must start at 0 and have at least two points".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || !points.iter().all(|p| p.is_finite()) {
            return Err(Error::Invalid("partition points must be strictly ascending".into()));
        }
        Ok(Partition { points })
    }

    /// `n` equal blocks of `[0, horizon]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::Invalid("uniform partition needs n >= 1 and a positive horizon".into()));
        }
        let mut points: Vec<f64> = (0..n).map(|k| horizon * k as f64 / n as f64).collect();
        points.push(horizon);
        Partition::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("partition has two points")
    }

    pub fn norm(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Integrates every frozen control pair along `times_desc` and takes the
/// nodewise min-max of the results.
fn frozen_block(scheme: &Scheme<'_>, psi: &[f64], times_desc: &[f64]) -> Result<Vec<f64>> {
    let problem = scheme.problem;
    let (ny, nz) = (problem.controls_y.len(), problem.controls_z.len());
    let flows: Vec<Vec<f64>> = (0..ny * nz)
        .map(|pair| {
            let mut u = psi.to_vec();
            for w in times_desc.windows(2) {
                u = scheme.step_frozen(&u, w[1], w[0], pair)?;
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;
    if flows.len() == 1 {
        return Ok(flows.into_iter().next().expect("one pair"));
    }
    let choice = scheme.config.hamiltonian;
    Ok((0..psi.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; ny * nz],
            |table, node| {
                for (slot, flow) in table.iter_mut().zip(&flows) {
                    *slot = flow[node];
                }
                saddle_of_table(table, ny, nz, choice).0
            },
        )
        .collect())
}

/// Descending times from `tau` to `t` in equal sub-steps no longer than `dt`.
fn uniform_substeps(t: f64, tau: f64, dt: f64) -> Vec<f64> {
    let n = ((tau - t) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (tau - t) / n as f64;
    (0..=n).map(|k| if k == n { t } else { tau - k as f64 * h }).collect()
}

fn check_slice(grid: &SpatialGrid, psi: &[f64]) -> Result<()> {
    if psi.len() != grid.len() {
        return Err(Error::IncompatibleGrids(format!("slice has {} values, grid has {} nodes", psi.len(), grid.len())));
    }
    Ok(())
}

/// One block of the semigroup from `tau` back to `t`: constant controls on
/// the block, min over `y` of max over `z` for `Plus` (the reverse order for
/// `Minus`), in equal sub-steps within the scheme's CFL step.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_step(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    tau: f64,
    psi: &[f64],
    grid: &SpatialGrid,
    config: &SchemeConfig,
) -> Result<Vec<f64>> {
    if !(t < tau) {
        return Err(Error::Precondition(format!("semigroup needs t < tau, got t = {t}, tau = {tau}")));
    }
    check_slice(grid, psi)?;
    let scheme = Scheme::new(problem, grid, quadrature, config)?;
    frozen_block(&scheme, psi, &uniform_substeps(t, tau, scheme.dt))
}

/// `V_π` at every partition point, composed backward from `g`.
pub fn value_pi(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    partition: &Partition,
    grid: &SpatialGrid,
    config: &SchemeConfig,
) -> Result<ValueGrid> {
    check_compatible(problem, grid)?;
    if (partition.horizon() - problem.horizon).abs() > 1e-12 * problem.horizon.max(1.0) {
        return Err(Error::Invalid(format!(
            "partition ends at {}, horizon is {}",
            partition.horizon(),
            problem.horizon
        )));
    }
    let scheme = Scheme::new(problem, grid, quadrature, config)?;
    let pts = partition.points();
    let mut values = vec![grid.sample(|x| problem.g(x))];
    for w in pts.windows(2).rev() {
        let next = frozen_block(&scheme, values.last().expect("non-empty"), &uniform_substeps(w[0], w[1], scheme.dt))?;
        values.push(next);
    }
    values.reverse();
    Ok(ValueGrid {
        grid: grid.clone(),
        times: pts.to_vec(),
        values,
        hamiltonian: config.hamiltonian,
        problem_fingerprint: problem_fingerprint(problem),
        scheme_fingerprint: fingerprint(&format!("{config:?}|{grid:?}|{quadrature:?}|{pts:?}")),
        boundary_margin: scheme.boundary_margin(),
    })
}

/// Max-node `|V_π(0, ·) - u(0, ·)|` per partition, `u` solved with the same
/// inf-sup order. Returns `(norm, error)` pairs.
pub fn vpi_convergence(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    partitions: &[Partition],
    grid: &SpatialGrid,
    config: &SchemeConfig,
) -> Result<Vec<(f64, f64)>> {
    if partitions.len() < 3 {
        return Err(Error::Precondition("convergence study needs at least three partitions".into()));
    }
    let u = solve_terminal_value(problem, grid, quadrature, config)?;
    partitions
        .iter()
        .map(|pi| {
            let v = value_pi(problem, quadrature, pi, grid, config)?;
            Ok((pi.norm(), max_abs_diff(v.initial(), u.initial(), None)))
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64], nodes: Option<&[usize]>) -> f64 {
    match nodes {
        Some(ix) => ix.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max),
        None => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
    }
}

/// Max interior `|W(0, ·) - vg(0, ·)|` where `W` composes semigroup blocks
/// over `[0, τ]` from `vg`'s slice at `τ`.
///
/// Blocks run over `vg`'s own time nodes, grouped so each block spans about
/// `max(Δx, Δt)`; on singleton control grids `W` then reproduces `vg` exactly.
pub fn dpp_residual(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    vg: &ValueGrid,
    tau: f64,
    grid: &SpatialGrid,
    config: &SchemeConfig,
) -> Result<f64> {
    if grid != &vg.grid {
        return Err(Error::IncompatibleGrids("value grid was solved on a different spatial grid".into()));
    }
    let horizon = *vg.times.last().expect("non-empty value grid");
    if !(tau > vg.times[0] && tau < horizon) {
        return Err(Error::Precondition(format!("tau = {tau} must lie strictly inside the value grid's horizon")));
    }
    let k = vg.time_index(tau).ok_or(Error::OffGridTime(tau))?;
    let config = config.with_choice(vg.hamiltonian);
    let scheme = Scheme::new(problem, grid, quadrature, &config)?;
    let block = grid.min_spacing().max(scheme.dt);
    let n_blocks = ((vg.times[k] - vg.times[0]) / block).ceil().clamp(1.0, k as f64) as usize;
    let cuts: Vec<usize> = (0..=n_blocks).map(|j| j * k / n_blocks).collect();
    let mut w = vg.values[k].clone();
    for c in cuts.windows(2).rev() {
        let times_desc: Vec<f64> = vg.times[c[0]..=c[1]].iter().rev().copied().collect();
        w = frozen_block(&scheme, &w, &times_desc)?;
    }
    let interior = vg.interior_nodes(vg.boundary_margin);
    if interior.is_empty() {
        return Err(Error::Precondition("boundary margin leaves no interior nodes".into()));
    }
    Ok(max_abs_diff(&w, vg.initial(), Some(&interior)))
}

/// Monte Carlo settings for [`verify_pair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Measured discretization error of the value grids, added to the
    /// statistical tolerance.
    pub scheme_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Mean over paths of `∫ (p + L + J) ds` on the subsolution grid.
    pub lhs_integral_u: f64,
    /// The same on the supersolution grid.
    pub lhs_integral_v: f64,
    pub payoff: McEstimate,
    pub value_u_at_start: f64,
    pub value_v_at_start: f64,
    pub tol: f64,
    pub scheme_error: f64,
    pub integral_u_ok: bool,
    pub integral_v_ok: bool,
    pub sandwich_satisfied: bool,
}

impl VerificationReport {
    pub fn band(&self) -> (f64, f64) {
        (
            self.value_u_at_start.min(self.value_v_at_start) - self.tol,
            self.value_u_at_start.max(self.value_v_at_start) + self.tol,
        )
    }

    /// `key=value` lines.
    pub fn write_kv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (lo, hi) = self.band();
        writeln!(w, "lhs_integral_u={}", self.lhs_integral_u)?;
        writeln!(w, "lhs_integral_v={}", self.lhs_integral_v)?;
        writeln!(w, "payoff_mean={}", self.payoff.mean)?;
        writeln!(w, "payoff_std_error={}", self.payoff.std_error)?;
        writeln!(w, "n_paths={}", self.payoff.n_paths)?;
        writeln!(w, "seed={}", self.payoff.seed)?;
        writeln!(w, "value_u_at_start={}", self.value_u_at_start)?;
        writeln!(w, "value_v_at_start={}", self.value_v_at_start)?;
        writeln!(w, "scheme_error={}", self.scheme_error)?;
        writeln!(w, "tol={}", self.tol)?;
        writeln!(w, "band_lower={lo}")?;
        writeln!(w, "band_upper={hi}")?;
        writeln!(w, "integral_u_ok={}", self.integral_u_ok)?;
        writeln!(w, "integral_v_ok={}", self.integral_v_ok)?;
        writeln!(w, "sandwich_satisfied={}", self.sandwich_satisfied)
    }
}

/// Two-column `norm,error` CSV.
pub fn write_error_sequence<W: Write>(seq: &[(f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "norm,error")?;
    for (n, e) in seq {
        writeln!(w, "{n:.16e},{e:.16e}")?;
    }
    Ok(())
}

fn jet_integrand(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    vg: &ValueGrid,
    s: f64,
    h: f64,
    x: &[f64],
    y: f64,
    z: f64,
) -> f64 {
    let p = (vg.value_at(s + h, x) - vg.value_at(s, x)) / h;
    let field = vg.slice(vg.nearest_index(s));
    let q = field.gradient(x);
    let a = field.hessian(x);
    p + local_operator(problem, s, x, &q, &a, y, z) + nonlocal_operator(problem, quadrature, s, x, &field, y, z)
}

/// Simulates the candidate pair, integrates `p + L + J` of both value grids
/// along the paths, and checks that the payoff lies in the value band at
/// `(t0, x0)` within `3 · std_error + scheme_error`.
#[allow(clippy::too_many_arguments)]
pub fn verify_pair(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    vg_u: &ValueGrid,
    vg_v: &ValueGrid,
    policy_y: &FeedbackPolicy<'_>,
    policy_z: &FeedbackPolicy<'_>,
    t0: f64,
    x0: &[f64],
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    check_compatible(problem, &vg_u.grid)?;
    check_compatible(problem, &vg_v.grid)?;
    for vg in [vg_u, vg_v] {
        let end = *vg.times.last().expect("non-empty value grid");
        if vg.times[0] > t0 + 1e-12 || (end - problem.horizon).abs() > 1e-9 {
            return Err(Error::IncompatibleGrids(format!(
                "value grid covers [{}, {end}], verification needs [{t0}, {}]",
                vg.times[0], problem.horizon
            )));
        }
    }
    if opts.n_paths < 2 {
        return Err(Error::Precondition("verification needs at least two paths".into()));
    }
    if !(opts.scheme_error >= 0.0) {
        return Err(Error::Invalid(format!("scheme error must be non-negative, got {}", opts.scheme_error)));
    }
    let samples: Vec<(f64, f64, f64)> = (0..opts.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path =
                simulate_path(problem, quadrature, policy_y, policy_z, t0, x0, opts.dt, &mut path_rng(opts.seed, i))?;
            let (mut iu, mut iv) = (0.0, 0.0);
            for (k, &(y, z)) in path.controls.iter().enumerate() {
                let (s, h) = (path.times[k], path.times[k + 1] - path.times[k]);
                let x = &path.states[k];
                iu += jet_integrand(problem, quadrature, vg_u, s, h, x, y, z) * h;
                iv += jet_integrand(problem, quadrature, vg_v, s, h, x, y, z) * h;
            }
            Ok((path.payoff(), iu, iv))
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let payoffs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let lhs_u = pairwise_sum(&samples.iter().map(|s| s.1).collect::<Vec<_>>()) / n;
    let lhs_v = pairwise_sum(&samples.iter().map(|s| s.2).collect::<Vec<_>>()) / n;
    let payoff = McEstimate::from_samples(&payoffs, opts.seed);
    let tol = 3.0 * payoff.std_error + opts.scheme_error;
    let vu = vg_u.value_at(t0, x0);
    let vv = vg_v.value_at(t0, x0);
    let mut report = VerificationReport {
        lhs_integral_u: lhs_u,
        lhs_integral_v: lhs_v,
        payoff,
        value_u_at_start: vu,
        value_v_at_start: vv,
        tol,
        scheme_error: opts.scheme_error,
        integral_u_ok: lhs_u <= tol,
        integral_v_ok: lhs_v >= -tol,
        sandwich_satisfied: false,
    };
    let (lo, hi) = report.band();
    report.sandwich_satisfied = payoff.mean >= lo && payoff.mean <= hi;
    Ok(report)
}

/// Convenience: `Plus` and `Minus` solutions of the same problem.
pub fn solve_both(
    problem: &GameProblem,
    grid: &SpatialGrid,
    quadrature: &JumpQuadrature,
    config: &SchemeConfig,
) -> Result<(ValueGrid, ValueGrid)> {
    let plus = solve_terminal_value(problem, grid, quadrature, &config.with_choice(HamiltonianChoice::Plus))?;
    let minus = solve_terminal_value(problem, grid, quadrature, &config.with_choice(HamiltonianChoice::Minus))?;
    Ok((plus, minus))
}
