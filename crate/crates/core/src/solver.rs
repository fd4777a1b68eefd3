//! Explicit monotone finite-difference scheme for
//! `u_t + H(t, x, Du, D²u, u(t, ·)) = 0`, `u(T, ·) = g`, with `H` either of
//! the two Isaacs Hamiltonians.
//!
//! For every node and control pair the generator is assembled as a
//! non-negative stencil `Σ_k c_k (u_k - u_i) + f`:
//!
//! * diffusion by central second differences (cross terms use the
//!   diagonally dominant seven-point form),
//! * drift `b - Σ_j weight_j η_j` by upwind differences, the upwind side
//!   being chosen per control pair,
//! * jumps `u(x + η_j) - u(x)` by multilinear interpolation.
//!
//! Queries outside the box are clamped to the boundary. With the time step
//! below [`cfl_timestep`] the explicit update is a convex combination of
//! neighbouring values for every pair, so the min-max update is monotone.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hamiltonian::{saddle_of_table, Field, HamiltonianChoice};
use crate::levy::JumpQuadrature;
use crate::model::GameProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    /// Number of nodes, at least 3.
    pub nodes: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }
}

/// Tensor grid on a box in one or two dimensions. Nodes are stored with the
/// first axis varying slowest, i.e. in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub axes: Vec<Axis>,
}

impl SpatialGrid {
    /// Grid with spacing as close to `dx[a]` as the box allows; the bounds
    /// are kept exact.
    pub fn new(lower: &[f64], upper: &[f64], dx: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != dx.len() {
            return Err(Error::Invalid("grid bounds and spacings must have equal length".into()));
        }
        if !(1..=2).contains(&lower.len()) {
            return Err(Error::Invalid(format!("grid dimension must be 1 or 2, got {}", lower.len())));
        }
        let mut axes = Vec::with_capacity(lower.len());
        for a in 0..lower.len() {
            let (lo, hi, h) = (lower[a], upper[a], dx[a]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Invalid(format!("axis {a}: need lower < upper, got [{lo}, {hi}]")));
            }
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Invalid(format!("axis {a}: spacing must be positive, got {h}")));
            }
            let intervals = ((hi - lo) / h).round().max(1.0) as usize;
            let nodes = intervals + 1;
            if nodes < 3 {
                return Err(Error::Invalid(format!("axis {a}: at least 3 nodes required")));
            }
            axes.push(Axis { lower: lo, upper: hi, nodes });
        }
        Ok(SpatialGrid { axes })
    }

    pub fn uniform_1d(lower: f64, upper: f64, dx: f64) -> Result<Self> {
        Self::new(&[lower], &[upper], &[dx])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Per-axis indices of a flat node index.
    pub fn multi_index(&self, mut i: usize) -> [usize; 2] {
        let mut out = [0usize; 2];
        for a in (0..self.dim()).rev() {
            let n = self.axes[a].nodes;
            out[a] = i % n;
            i /= n;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, axis) in self.axes.iter().enumerate() {
            flat = flat * axis.nodes + idx[a];
        }
        flat
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        let idx = self.multi_index(i);
        (0..self.dim()).map(|a| self.axes[a].coord(idx[a])).collect()
    }

    /// Index of the neighbour `offset` steps away along each axis, clamped
    /// to the box.
    fn shifted(&self, idx: &[usize; 2], offset: [i64; 2]) -> usize {
        let mut moved = [0usize; 2];
        for a in 0..self.dim() {
            let n = self.axes[a].nodes as i64;
            moved[a] = (idx[a] as i64 + offset[a]).clamp(0, n - 1) as usize;
        }
        self.flat_index(&moved[..self.dim()])
    }

    /// Multilinear interpolation weights at `x`, clamped to the box.
    pub fn interp_weights(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        let d = self.dim();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..d {
            let axis = &self.axes[a];
            let h = axis.spacing();
            let s = ((x[a] - axis.lower) / h).clamp(0.0, (axis.nodes - 1) as f64);
            let cell = (s.floor() as usize).min(axis.nodes - 2);
            base[a] = cell;
            frac[a] = s - cell as f64;
        }
        for corner in 0..(1usize << d) {
            let mut idx = [0usize; 2];
            let mut w = 1.0;
            for a in 0..d {
                let up = (corner >> a) & 1;
                idx[a] = base[a] + up;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                out.push((self.flat_index(&idx[..d]), w));
            }
        }
    }

    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let mut w = Vec::with_capacity(4);
        self.interp_weights(x, &mut w);
        w.iter().map(|&(i, c)| c * values[i]).sum()
    }

    /// Distance from node `i` to the nearest face of the box.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        let x = self.coords(i);
        self.axes
            .iter()
            .zip(&x)
            .map(|(ax, &xi)| (xi - ax.lower).min(ax.upper - xi))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|i| f(&self.coords(i))).collect()
    }
}

/// Interpolated view of one grid slice as a field.
#[derive(Debug, Clone, Copy)]
pub struct SliceField<'a> {
    pub grid: &'a SpatialGrid,
    pub values: &'a [f64],
}

impl SliceField<'_> {
    /// Central second differences of the interpolant with the grid spacing.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.grid.dim();
        let mut xp = x.to_vec();
        let centre = self.value(x);
        DMatrix::from_fn(d, d, |i, j| {
            let (hi, hj) = (self.grid.spacing(i), self.grid.spacing(j));
            if i == j {
                xp[i] = x[i] + hi;
                let up = self.value(&xp);
                xp[i] = x[i] - hi;
                let down = self.value(&xp);
                xp[i] = x[i];
                (up - 2.0 * centre + down) / (hi * hi)
            } else {
                let mut corner = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * hi;
                    xp[j] = x[j] + sj * hj;
                    let v = self.value(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * hi * hj)
            }
        })
    }
}

impl Field for SliceField<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(self.values, x)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut xp = x.to_vec();
        DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|a| {
                let h = self.grid.spacing(a);
                xp[a] = x[a] + h;
                let up = self.value(&xp);
                xp[a] = x[a] - h;
                let down = self.value(&xp);
                xp[a] = x[a];
                (up - down) / (2.0 * h)
            }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub cfl_safety: f64,
    pub dt_max: Option<f64>,
    pub hamiltonian: HamiltonianChoice,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig { cfl_safety: 0.9, dt_max: None, hamiltonian: HamiltonianChoice::Plus }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Invalid(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if let Some(dt) = self.dt_max {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::Invalid(format!("dt_max must be positive, got {dt}")));
            }
        }
        Ok(())
    }

    pub fn with_choice(mut self, choice: HamiltonianChoice) -> Self {
        self.hamiltonian = choice;
        self
    }
}

/// Assembled generator for every (node, control pair) row.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub n_pairs: usize,
    offsets: Vec<usize>,
    idx: Vec<u32>,
    coef: Vec<f64>,
    source: Vec<f64>,
}

impl Stencil {
    #[inline]
    pub fn row_value(&self, row: usize, node: usize, u: &[f64]) -> f64 {
        let (s, e) = (self.offsets[row], self.offsets[row + 1]);
        let ui = u[node];
        let mut acc = self.source[row];
        for k in s..e {
            acc += self.coef[k] * (u[self.idx[k] as usize] - ui);
        }
        acc
    }
}

struct RowBuilder {
    entries: Vec<(usize, f64)>,
    interp: Vec<(usize, f64)>,
}

fn build_row(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    grid: &SpatialGrid,
    t: f64,
    node: usize,
    y: f64,
    z: f64,
    rb: &mut RowBuilder,
) -> Result<f64> {
    let d = grid.dim();
    let x = grid.coords(node);
    let idx = grid.multi_index(node);
    rb.entries.clear();
    let unit = |a: usize, s: i64| {
        let mut o = [0i64; 2];
        o[a] = s;
        o
    };

    if !problem.diffusion.is_zero() {
        let a = problem.half_covariance(t, &x, y, z);
        for ax in 0..d {
            let h = grid.spacing(ax);
            let c = a[(ax, ax)] / (h * h);
            rb.entries.push((grid.shifted(&idx, unit(ax, 1)), c));
            rb.entries.push((grid.shifted(&idx, unit(ax, -1)), c));
        }
        if d == 2 && a[(0, 1)] != 0.0 {
            let a12 = a[(0, 1)];
            let c = a12.abs() / (grid.spacing(0) * grid.spacing(1));
            let s = if a12 > 0.0 { 1 } else { -1 };
            rb.entries.push((grid.shifted(&idx, [1, s]), c));
            rb.entries.push((grid.shifted(&idx, [-1, -s]), c));
            for ax in 0..2 {
                rb.entries.push((grid.shifted(&idx, unit(ax, 1)), -c));
                rb.entries.push((grid.shifted(&idx, unit(ax, -1)), -c));
            }
        }
    }

    let mut drift = if problem.drift.is_zero() { DVector::zeros(d) } else { problem.b(t, &x, y, z) };
    if !problem.jump.is_zero() {
        for jn in &quadrature.nodes {
            let eta = problem.eta(t, &x, y, z, &jn.mark);
            if eta.iter().all(|&e| e == 0.0) {
                continue;
            }
            drift -= &eta * jn.weight;
            let target: Vec<f64> = x.iter().zip(eta.iter()).map(|(a, b)| a + b).collect();
            grid.interp_weights(&target, &mut rb.interp);
            for &(k, w) in &rb.interp {
                rb.entries.push((k, jn.weight * w));
            }
        }
    }
    for ax in 0..d {
        let h = grid.spacing(ax);
        let b = drift[ax];
        if b > 0.0 {
            rb.entries.push((grid.shifted(&idx, unit(ax, 1)), b / h));
        } else if b < 0.0 {
            rb.entries.push((grid.shifted(&idx, unit(ax, -1)), -b / h));
        }
    }

    rb.entries.sort_unstable_by_key(|e| e.0);
    let mut merged = 0;
    for k in 0..rb.entries.len() {
        let (i, c) = rb.entries[k];
        if merged > 0 && rb.entries[merged - 1].0 == i {
            rb.entries[merged - 1].1 += c;
        } else {
            rb.entries[merged] = (i, c);
            merged += 1;
        }
    }
    rb.entries.truncate(merged);
    rb.entries.retain(|&(i, c)| i != node && c != 0.0);
    if let Some(&(_, c)) = rb.entries.iter().find(|e| e.1 < 0.0) {
        if c < -1e-12 {
            return Err(Error::Invalid(
                "diffusion matrix is not diagonally dominant on this grid; the stencil is not monotone".into(),
            ));
        }
        rb.entries.retain(|e| e.1 > 0.0);
    }
    Ok(problem.f(t, &x, y, z))
}

pub(crate) fn build_stencil(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    grid: &SpatialGrid,
    t: f64,
) -> Result<Stencil> {
    let pairs: Vec<(f64, f64)> = problem.control_pairs().collect();
    let n_pairs = pairs.len();
    let rows: Vec<Result<(f64, Vec<(usize, f64)>)>> = (0..grid.len() * n_pairs)
        .into_par_iter()
        .map_init(
            || RowBuilder { entries: Vec::new(), interp: Vec::new() },
            |rb, row| {
                let (node, pair) = (row / n_pairs, row % n_pairs);
                let (y, z) = pairs[pair];
                let src = build_row(problem, quadrature, grid, t, node, y, z, rb)?;
                Ok((src, rb.entries.clone()))
            },
        )
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    let mut idx = Vec::new();
    let mut coef = Vec::new();
    let mut source = Vec::with_capacity(rows.len());
    offsets.push(0);
    for row in rows {
        let (src, entries) = row?;
        for (i, c) in entries {
            idx.push(i as u32);
            coef.push(c);
        }
        source.push(src);
        offsets.push(idx.len());
    }
    Ok(Stencil { n_pairs, offsets, idx, coef, source })
}

/// Coefficient maxima over nodes and control pairs that enter the step
/// bound.
#[derive(Debug, Clone, Copy, Default)]
struct RateBounds {
    rate: f64,
    max_eta: f64,
    max_sigma: f64,
}

fn rate_bounds(problem: &GameProblem, quadrature: &JumpQuadrature, grid: &SpatialGrid) -> RateBounds {
    let d = grid.dim();
    let pairs: Vec<(f64, f64)> = problem.control_pairs().collect();
    let jumps_active = !problem.jump.is_zero() && !quadrature.is_empty();
    let times = time_samples(problem);
    // per-node maxima of (σσᵀ)_aa, |b_a|, |comp_a|, |η|, |σ|
    let per_node: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.coords(node);
            let mut cov = vec![0.0f64; d];
            let mut drift = vec![0.0f64; d];
            let mut comp = vec![0.0f64; d];
            let (mut eta_max, mut sig_max) = (0.0f64, 0.0f64);
            for &t in &times {
                for &(y, z) in &pairs {
                    if !problem.diffusion.is_zero() {
                        let s = problem.sigma(t, &x, y, z);
                        let ss = &s * s.transpose();
                        for a in 0..d {
                            cov[a] = cov[a].max(ss[(a, a)]);
                            sig_max = sig_max.max(ss[(a, a)].sqrt());
                        }
                    }
                    if !problem.drift.is_zero() {
                        let b = problem.b(t, &x, y, z);
                        for a in 0..d {
                            drift[a] = drift[a].max(b[a].abs());
                        }
                    }
                    if jumps_active {
                        let mut c = DVector::zeros(d);
                        for jn in &quadrature.nodes {
                            let eta = problem.eta(t, &x, y, z, &jn.mark);
                            eta_max = eta_max.max(eta.norm());
                            c += eta * jn.weight;
                        }
                        for a in 0..d {
                            comp[a] = comp[a].max(c[a].abs());
                        }
                    }
                }
            }
            (cov, drift, comp, eta_max, sig_max)
        })
        .collect();
    let mut cov = vec![0.0f64; d];
    let mut drift = vec![0.0f64; d];
    let mut comp = vec![0.0f64; d];
    let mut out = RateBounds::default();
    for (c, b, m, e, s) in per_node {
        for a in 0..d {
            cov[a] = cov[a].max(c[a]);
            drift[a] = drift[a].max(b[a]);
            comp[a] = comp[a].max(m[a]);
        }
        out.max_eta = out.max_eta.max(e);
        out.max_sigma = out.max_sigma.max(s);
    }
    let mut rate = if jumps_active && out.max_eta > 0.0 { quadrature.total_mass } else { 0.0 };
    for a in 0..d {
        let h = grid.spacing(a);
        rate += cov[a] / (h * h) + drift[a] / h + comp[a] / h;
    }
    out.rate = rate;
    out
}

fn time_samples(problem: &GameProblem) -> Vec<f64> {
    if problem.time_homogeneous() {
        vec![0.0]
    } else {
        (0..=8).map(|k| problem.horizon * k as f64 / 8.0).collect()
    }
}

/// Largest explicit step keeping every scheme coefficient non-negative,
/// scaled by `cfl_safety` and capped by `dt_max` (or the horizon when
/// nothing constrains the step).
pub fn cfl_timestep(problem: &GameProblem, grid: &SpatialGrid, quadrature: &JumpQuadrature, config: &SchemeConfig) -> f64 {
    let rate = rate_bounds(problem, quadrature, grid).rate;
    let cap = config.dt_max.unwrap_or(problem.horizon);
    if rate <= 0.0 {
        cap
    } else {
        (config.cfl_safety / rate).min(cap)
    }
}

/// Descending times from `t_end` to `t_start` with uniform steps `dt`; the
/// final step is shortened to land on `t_start`.
pub fn backward_times(t_start: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let mut times = vec![t_end];
    let mut k = 1usize;
    loop {
        let t = t_end - k as f64 * dt;
        if t - t_start <= dt * 1e-9 {
            times.push(t_start);
            break;
        }
        times.push(t);
        k += 1;
    }
    times
}

pub(crate) fn check_compatible(problem: &GameProblem, grid: &SpatialGrid) -> Result<()> {
    if grid.dim() != problem.dim {
        return Err(Error::IncompatibleGrids(format!(
            "grid dimension {} does not match state dimension {}",
            grid.dim(),
            problem.dim
        )));
    }
    Ok(())
}

/// The scheme's one-step operator bound to one problem and grid.
pub(crate) struct Scheme<'a> {
    pub problem: &'a GameProblem,
    pub quadrature: &'a JumpQuadrature,
    pub grid: &'a SpatialGrid,
    pub config: SchemeConfig,
    pub dt: f64,
    stencil: Option<Stencil>,
}

impl<'a> Scheme<'a> {
    pub fn new(
        problem: &'a GameProblem,
        grid: &'a SpatialGrid,
        quadrature: &'a JumpQuadrature,
        config: &SchemeConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_compatible(problem, grid)?;
        let dt = cfl_timestep(problem, grid, quadrature, config);
        let stencil = if problem.time_homogeneous() {
            Some(build_stencil(problem, quadrature, grid, 0.0)?)
        } else {
            None
        };
        Ok(Scheme { problem, quadrature, grid, config: *config, dt, stencil })
    }

    fn stencil_at(&self, t: f64) -> Result<std::borrow::Cow<'_, Stencil>> {
        match &self.stencil {
            Some(s) => Ok(std::borrow::Cow::Borrowed(s)),
            None => Ok(std::borrow::Cow::Owned(build_stencil(self.problem, self.quadrature, self.grid, t)?)),
        }
    }

    fn check_step(&self, t0: f64, t1: f64) -> Result<f64> {
        let dt = t1 - t0;
        if !(dt > 0.0) {
            return Err(Error::Precondition(format!("step needs t0 < t1, got [{t0}, {t1}]")));
        }
        if dt > self.dt * (1.0 + 1e-9) {
            return Err(Error::CflViolation { dt, bound: self.dt });
        }
        Ok(dt)
    }

    /// Min-max update from `t1` back to `t0`.
    pub fn step(&self, u: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>> {
        let dt = self.check_step(t0, t1)?;
        let st = self.stencil_at(t1)?;
        let ny = self.problem.controls_y.len();
        let nz = self.problem.controls_z.len();
        let choice = self.config.hamiltonian;
        let n_pairs = st.n_pairs;
        Ok((0..u.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n_pairs],
                |table, node| {
                    for (p, slot) in table.iter_mut().enumerate() {
                        *slot = st.row_value(node * n_pairs + p, node, u);
                    }
                    let h = if n_pairs == 1 { table[0] } else { saddle_of_table(table, ny, nz, choice).0 };
                    u[node] + dt * h
                },
            )
            .collect())
    }

    /// Update with the control pair frozen at index `pair`.
    pub fn step_frozen(&self, u: &[f64], t0: f64, t1: f64, pair: usize) -> Result<Vec<f64>> {
        let dt = self.check_step(t0, t1)?;
        let st = self.stencil_at(t1)?;
        let n_pairs = st.n_pairs;
        Ok((0..u.len())
            .into_par_iter()
            .map(|node| u[node] + dt * st.row_value(node * n_pairs + pair, node, u))
            .collect())
    }

    pub fn boundary_margin(&self) -> f64 {
        let rb = rate_bounds(self.problem, self.quadrature, self.grid);
        rb.max_eta + self.problem.horizon.sqrt() * rb.max_sigma
    }
}

/// One explicit step of the scheme from `t1` back to `t0`.
#[allow(clippy::too_many_arguments)]
pub fn step_backward(
    problem: &GameProblem,
    grid: &SpatialGrid,
    quadrature: &JumpQuadrature,
    config: &SchemeConfig,
    slice_at_t1: &[f64],
    t0: f64,
    t1: f64,
) -> Result<Vec<f64>> {
    if slice_at_t1.len() != grid.len() {
        return Err(Error::IncompatibleGrids(format!(
            "slice has {} values, grid has {} nodes",
            slice_at_t1.len(),
            grid.len()
        )));
    }
    Scheme::new(problem, grid, quadrature, config)?.step(slice_at_t1, t0, t1)
}

/// Space-time samples of a numerical value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub grid: SpatialGrid,
    /// Ascending, ending at the horizon.
    pub times: Vec<f64>,
    /// `values[k]` is the slice at `times[k]`.
    pub values: Vec<Vec<f64>>,
    pub hamiltonian: HamiltonianChoice,
    pub problem_fingerprint: String,
    pub scheme_fingerprint: String,
    /// Width of the boundary layer excluded from interior statistics.
    pub boundary_margin: f64,
}

pub fn fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn problem_fingerprint(problem: &GameProblem) -> String {
    fingerprint(&format!("{problem:?}"))
}

impl ValueGrid {
    pub fn slice(&self, k: usize) -> SliceField<'_> {
        SliceField { grid: &self.grid, values: &self.values[k] }
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.values.last().expect("value grid has at least one slice")
    }

    /// Index of the slice whose time equals `t` up to rounding.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.times.last().copied().unwrap_or(1.0).max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Index of the slice nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            0
        } else if k == self.times.len() {
            k - 1
        } else if (self.times[k] - t) < (t - self.times[k - 1]) {
            k
        } else {
            k - 1
        }
    }

    /// Linear in time, multilinear in space.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.grid.interpolate(&self.values[0], x);
        }
        if k == self.times.len() {
            return self.grid.interpolate(self.terminal(), x);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.grid.interpolate(&self.values[k - 1], x) + w * self.grid.interpolate(&self.values[k], x)
    }

    pub fn interior_nodes(&self, margin: f64) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.grid.boundary_distance(i) >= margin - 1e-12).collect()
    }

    /// Rows `t,x1[,x2],value`, time-major, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        self.write_csv_strided(1, w)
    }

    /// As [`ValueGrid::write_csv`] but only every `stride`-th slice; the
    /// first and last slices are always written.
    pub fn write_csv_strided<W: Write>(&self, stride: usize, mut w: W) -> io::Result<()> {
        let stride = stride.max(1);
        let last = self.times.len() - 1;
        let header = if self.grid.dim() == 1 { "t,x1,value" } else { "t,x1,x2,value" };
        writeln!(w, "{header}")?;
        for (k, (t, slice)) in self.times.iter().zip(&self.values).enumerate() {
            if k % stride != 0 && k != last {
                continue;
            }
            for (i, v) in slice.iter().enumerate() {
                write!(w, "{t:.16e}")?;
                for c in self.grid.coords(i) {
                    write!(w, ",{c:.16e}")?;
                }
                writeln!(w, ",{v:.16e}")?;
            }
        }
        Ok(())
    }
}

pub(crate) fn solve_with_scheme(scheme: &Scheme<'_>, terminal: Vec<f64>, t_start: f64, t_end: f64) -> Result<ValueGrid> {
    let times_desc = backward_times(t_start, t_end, scheme.dt);
    let mut values = Vec::with_capacity(times_desc.len());
    values.push(terminal);
    for w in times_desc.windows(2) {
        let next = scheme.step(values.last().expect("non-empty"), w[1], w[0])?;
        values.push(next);
    }
    values.reverse();
    let mut times = times_desc;
    times.reverse();
    Ok(ValueGrid {
        grid: scheme.grid.clone(),
        times,
        values,
        hamiltonian: scheme.config.hamiltonian,
        problem_fingerprint: problem_fingerprint(scheme.problem),
        scheme_fingerprint: fingerprint(&format!("{:?}|{:?}|{:?}", scheme.config, scheme.grid, scheme.quadrature)),
        boundary_margin: scheme.boundary_margin(),
    })
}

/// Solves the terminal-value problem with terminal data `terminal` (node
/// values) instead of the problem's `g`.
pub fn solve_from_terminal(
    problem: &GameProblem,
    grid: &SpatialGrid,
    quadrature: &JumpQuadrature,
    config: &SchemeConfig,
    terminal: Vec<f64>,
) -> Result<ValueGrid> {
    if terminal.len() != grid.len() {
        return Err(Error::IncompatibleGrids("terminal data does not match the grid".into()));
    }
    let scheme = Scheme::new(problem, grid, quadrature, config)?;
    solve_with_scheme(&scheme, terminal, 0.0, problem.horizon)
}

/// Marches the scheme from `u(T) = g` back to `t = 0` and records every slice.
pub fn solve_terminal_value(
    problem: &GameProblem,
    grid: &SpatialGrid,
    quadrature: &JumpQuadrature,
    config: &SchemeConfig,
) -> Result<ValueGrid> {
    check_compatible(problem, grid)?;
    let terminal = grid.sample(|x| problem.g(x));
    solve_from_terminal(problem, grid, quadrature, config, terminal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub lip_x: f64,
    pub holder_t: f64,
}

/// Slices beyond this count are thinned (evenly by index) for the time
/// Hölder quotient, which otherwise costs `O(slices^2 * nodes)`.
pub const HOLDER_SLICE_LIMIT: usize = 512;

/// Empirical Lipschitz constant in space and Hölder-½ constant in time.
pub fn regularity_report(vg: &ValueGrid) -> Result<Regularity> {
    if vg.times.len() < 2 {
        return Err(Error::Precondition("regularity report needs at least two slices".into()));
    }
    let grid = &vg.grid;
    let lip_x = vg
        .values
        .par_iter()
        .map(|slice| {
            let mut m = 0.0f64;
            for i in 0..grid.len() {
                let idx = grid.multi_index(i);
                for a in 0..grid.dim() {
                    if idx[a] + 1 < grid.axes[a].nodes {
                        let mut o = [0i64; 2];
                        o[a] = 1;
                        let j = grid.shifted(&idx, o);
                        m = m.max((slice[j] - slice[i]).abs() / grid.spacing(a));
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);

    let n = vg.times.len();
    let picks: Vec<usize> = if n <= HOLDER_SLICE_LIMIT {
        (0..n).collect()
    } else {
        let mut p: Vec<usize> =
            (0..HOLDER_SLICE_LIMIT).map(|k| k * (n - 1) / (HOLDER_SLICE_LIMIT - 1)).collect();
        p.dedup();
        p
    };
    let interior = vg.interior_nodes(vg.boundary_margin);
    let holder_t = picks
        .par_iter()
        .enumerate()
        .map(|(a, &ka)| {
            let mut m = 0.0f64;
            for &kb in &picks[a + 1..] {
                let scale = 1.0 / (vg.times[kb] - vg.times[ka]).abs().sqrt();
                let (sa, sb) = (&vg.values[ka], &vg.values[kb]);
                for &i in &interior {
                    m = m.max((sa[i] - sb[i]).abs() * scale);
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(Regularity { lip_x, holder_t })
}

/// Solves with terminal data `g1 <= g2` and reports whether the solutions
/// stay ordered (up to `1e-12`) at every slice.
pub fn comparison_check(
    problem: &GameProblem,
    grid: &SpatialGrid,
    quadrature: &JumpQuadrature,
    config: &SchemeConfig,
    g1: &[f64],
    g2: &[f64],
) -> Result<bool> {
    if g1.len() != grid.len() || g2.len() != grid.len() {
        return Err(Error::IncompatibleGrids("terminal data does not match the grid".into()));
    }
    if g1.iter().zip(g2).any(|(a, b)| a > b) {
        return Err(Error::Precondition("comparison check needs g1 <= g2 nodewise".into()));
    }
    let scheme = Scheme::new(problem, grid, quadrature, config)?;
    let u1 = solve_with_scheme(&scheme, g1.to_vec(), 0.0, problem.horizon)?;
    let u2 = solve_with_scheme(&scheme, g2.to_vec(), 0.0, problem.horizon)?;
    Ok(u1
        .values
        .iter()
        .zip(&u2.values)
        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *x <= *y + 1e-12)))
}
