//! Local and nonlocal generators and the min-max Hamiltonians.
//!
//! `H+ = inf_y sup_z [L + J]` and `H- = sup_z inf_y [L + J]`, both computed
//! exhaustively over the finite control grids. Ties go to the lowest grid
//! index.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::levy::JumpQuadrature;
use crate::model::GameProblem;

/// Time derivative, gradient and Hessian candidates at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub p: f64,
    pub q: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet {
    pub fn new(p: f64, q: DVector<f64>, hessian: DMatrix<f64>) -> Result<Self> {
        let d = q.len();
        if hessian.nrows() != d || hessian.ncols() != d {
            return Err(Error::Invalid(format!("jet hessian must be {d}x{d}")));
        }
        for i in 0..d {
            for j in 0..i {
                if (hessian[(i, j)] - hessian[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Invalid("jet hessian is not symmetric".into()));
                }
            }
        }
        Ok(Jet { p, q, hessian })
    }
}

/// A scalar field over `R^d` with gradient access.
pub trait Field: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
}

/// A field with a closed-form Hessian.
pub trait SmoothField: Field {
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// Closed-form test fields.
#[derive(Debug, Clone, PartialEq)]
pub enum TestField {
    /// `a · x + c`
    Affine { a: Vec<f64>, c: f64 },
    /// `Σ k_i x_i^2`
    Quadratic(Vec<f64>),
    /// `Σ sin(freq * x_i)`
    Sine { freq: f64 },
    /// `exp(-|x - center|^2 / (2 width^2))`
    GaussianBump { center: Vec<f64>, width: f64 },
}

impl Field for TestField {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestField::Affine { a, c } => a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + c,
            TestField::Quadratic(k) => k.iter().zip(x).map(|(k, x)| k * x * x).sum(),
            TestField::Sine { freq } => x.iter().map(|x| (freq * x).sin()).sum(),
            TestField::GaussianBump { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        match self {
            TestField::Affine { a, .. } => DVector::from_column_slice(a),
            TestField::Quadratic(k) => DVector::from_iterator(x.len(), k.iter().zip(x).map(|(k, x)| 2.0 * k * x)),
            TestField::Sine { freq } => DVector::from_iterator(x.len(), x.iter().map(|x| freq * (freq * x).cos())),
            TestField::GaussianBump { center, width } => {
                let v = self.value(x);
                let s2 = width * width;
                DVector::from_iterator(x.len(), x.iter().zip(center).map(|(x, c)| -(x - c) / s2 * v))
            }
        }
    }
}

impl SmoothField for TestField {
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        match self {
            TestField::Affine { .. } => DMatrix::zeros(d, d),
            TestField::Quadratic(k) => DMatrix::from_diagonal(&DVector::from_iterator(d, k.iter().map(|k| 2.0 * k))),
            TestField::Sine { freq } => DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                x.iter().map(|x| -freq * freq * (freq * x).sin()),
            )),
            TestField::GaussianBump { center, width } => {
                let v = self.value(x);
                let s2 = width * width;
                let r: Vec<f64> = x.iter().zip(center).map(|(x, c)| x - c).collect();
                DMatrix::from_fn(d, d, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    v * (r[i] * r[j] / (s2 * s2) - delta / s2)
                })
            }
        }
    }
}

/// The terminal cost of a problem viewed as a field; gradients by central
/// differences with step `h`.
pub struct TerminalField<'a> {
    pub problem: &'a GameProblem,
    pub h: f64,
}

impl Field for TerminalField<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.problem.g(x)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut xp = x.to_vec();
        DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                xp[i] = x[i] + self.h;
                let up = self.problem.g(&xp);
                xp[i] = x[i] - self.h;
                let down = self.problem.g(&xp);
                xp[i] = x[i];
                (up - down) / (2.0 * self.h)
            }),
        )
    }
}

/// `Tr(a A) + b · q + f` with `a = σσᵀ / 2`.
pub fn local_operator(
    problem: &GameProblem,
    t: f64,
    x: &[f64],
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    y: f64,
    z: f64,
) -> f64 {
    let mut value = problem.f(t, x, y, z);
    if !problem.diffusion.is_zero() {
        value += (problem.half_covariance(t, x, y, z) * a).trace();
    }
    if !problem.drift.is_zero() {
        value += problem.b(t, x, y, z).dot(q);
    }
    value
}

/// `Σ_j weight_j [φ(x + η_j) - φ(x) - η_j · ∇φ(x)]`.
pub fn nonlocal_operator(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    x: &[f64],
    field: &dyn Field,
    y: f64,
    z: f64,
) -> f64 {
    if problem.jump.is_zero() || quadrature.is_empty() {
        return 0.0;
    }
    let base = field.value(x);
    let grad = field.gradient(x);
    let mut shifted = x.to_vec();
    let mut total = 0.0;
    for node in &quadrature.nodes {
        let eta = problem.eta(t, x, y, z, &node.mark);
        for (s, (xi, e)) in shifted.iter_mut().zip(x.iter().zip(eta.iter())) {
            *s = xi + e;
        }
        total += node.weight * (field.value(&shifted) - base - eta.dot(&grad));
    }
    total
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule
}

pub const ORACLE_GL_POINTS: usize = 64;

/// Hessian form of the nonlocal operator,
/// `∫_0^1 (1 - ρ) Σ_j weight_j Tr[η_j η_jᵀ D²φ(x + ρ η_j)] dρ`,
/// integrated in `ρ` by Gauss–Legendre. Independent of
/// [`nonlocal_operator`]: it never evaluates `φ` or `∇φ`.
pub fn nonlocal_hessian_oracle(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    x: &[f64],
    field: &dyn SmoothField,
    y: f64,
    z: f64,
) -> f64 {
    if problem.jump.is_zero() || quadrature.is_empty() {
        return 0.0;
    }
    let rule = gauss_legendre_unit(ORACLE_GL_POINTS);
    let mut shifted = x.to_vec();
    let mut total = 0.0;
    for node in &quadrature.nodes {
        let eta = problem.eta(t, x, y, z, &node.mark);
        let outer = &eta * eta.transpose();
        let mut inner = 0.0;
        for &(rho, w) in &rule {
            for (s, (xi, e)) in shifted.iter_mut().zip(x.iter().zip(eta.iter())) {
                *s = xi + rho * e;
            }
            inner += w * (1.0 - rho) * (&outer * field.hessian(&shifted)).trace();
        }
        total += node.weight * inner;
    }
    total
}

/// Value of a Hamiltonian together with the attaining control pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saddle {
    pub value: f64,
    pub y_index: usize,
    pub z_index: usize,
    pub y: f64,
    pub z: f64,
}

/// Which min-max order a Hamiltonian uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HamiltonianChoice {
    /// `inf_y sup_z`
    Plus,
    /// `sup_z inf_y`
    Minus,
}

impl HamiltonianChoice {
    pub fn name(self) -> &'static str {
        match self {
            HamiltonianChoice::Plus => "plus",
            HamiltonianChoice::Minus => "minus",
        }
    }
}

/// Min-max of a `|Y| x |Z|` payoff table (row-major in `y`).
pub fn saddle_of_table(table: &[f64], ny: usize, nz: usize, choice: HamiltonianChoice) -> (f64, usize, usize) {
    debug_assert_eq!(table.len(), ny * nz);
    match choice {
        HamiltonianChoice::Plus => {
            let mut best = (f64::INFINITY, 0, 0);
            for yi in 0..ny {
                let row = &table[yi * nz..(yi + 1) * nz];
                let mut zi_best = 0;
                for zi in 1..nz {
                    if row[zi] > row[zi_best] {
                        zi_best = zi;
                    }
                }
                if row[zi_best] < best.0 {
                    best = (row[zi_best], yi, zi_best);
                }
            }
            best
        }
        HamiltonianChoice::Minus => {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for zi in 0..nz {
                let mut yi_best = 0;
                for yi in 1..ny {
                    if table[yi * nz + zi] < table[yi_best * nz + zi] {
                        yi_best = yi;
                    }
                }
                let v = table[yi_best * nz + zi];
                if v > best.0 {
                    best = (v, yi_best, zi);
                }
            }
            best
        }
    }
}

/// `L + J` for every control pair, row-major in `y`.
pub fn generator_table(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    x: &[f64],
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    field: &dyn Field,
) -> Vec<f64> {
    problem
        .control_pairs()
        .map(|(y, z)| {
            local_operator(problem, t, x, q, a, y, z) + nonlocal_operator(problem, quadrature, t, x, field, y, z)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    x: &[f64],
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    field: &dyn Field,
    choice: HamiltonianChoice,
) -> Saddle {
    let table = generator_table(problem, quadrature, t, x, q, a, field);
    let (value, yi, zi) = saddle_of_table(&table, problem.controls_y.len(), problem.controls_z.len(), choice);
    Saddle { value, y_index: yi, z_index: zi, y: problem.controls_y[yi], z: problem.controls_z[zi] }
}

/// `sup_z inf_y [L + J]`.
pub fn h_minus(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    x: &[f64],
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    field: &dyn Field,
) -> Saddle {
    hamiltonian(problem, quadrature, t, x, q, a, field, HamiltonianChoice::Minus)
}

/// `inf_y sup_z [L + J]`.
pub fn h_plus(
    problem: &GameProblem,
    quadrature: &JumpQuadrature,
    t: f64,
    x: &[f64],
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    field: &dyn Field,
) -> Saddle {
    hamiltonian(problem, quadrature, t, x, q, a, field, HamiltonianChoice::Plus)
}

/// One input point for [`isaacs_gap`].
pub struct GapSample<'a> {
    pub t: f64,
    pub x: Vec<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub field: &'a dyn Field,
}

/// `max (H+ - H-)` over the samples; zero certifies the Isaacs condition there.
pub fn isaacs_gap(problem: &GameProblem, quadrature: &JumpQuadrature, samples: &[GapSample<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Precondition("isaacs_gap needs at least one sample".into()));
    }
    let ny = problem.controls_y.len();
    let nz = problem.controls_z.len();
    Ok(samples.iter().fold(0.0f64, |gap, s| {
        let table = generator_table(problem, quadrature, s.t, &s.x, &s.q, &s.a, s.field);
        let plus = saddle_of_table(&table, ny, nz, HamiltonianChoice::Plus).0;
        let minus = saddle_of_table(&table, ny, nz, HamiltonianChoice::Minus).0;
        gap.max(plus - minus)
    }))
}

/// Settings for [`sampled_isaacs_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSampling {
    pub samples: usize,
    pub seed: u64,
    /// States are drawn from `[-state_radius, state_radius]^d`.
    pub state_radius: f64,
    /// Gradient and Hessian entries are drawn from `[-jet_radius, jet_radius]`.
    pub jet_radius: f64,
}

/// [`isaacs_gap`] over random jets; the nonlocal part sees a Gaussian bump
/// with random centre and width. Deterministic for a fixed seed.
pub fn sampled_isaacs_gap(problem: &GameProblem, quadrature: &JumpQuadrature, opts: &GapSampling) -> Result<f64> {
    if opts.samples == 0 {
        return Err(Error::Precondition("isaacs_gap needs at least one sample".into()));
    }
    if !(opts.state_radius > 0.0 && opts.jet_radius > 0.0) {
        return Err(Error::Invalid("sampling radii must be positive".into()));
    }
    let d = problem.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (r, j) = (opts.state_radius, opts.jet_radius);
    let fields: Vec<TestField> = (0..opts.samples)
        .map(|_| TestField::GaussianBump {
            center: (0..d).map(|_| rng.random_range(-r..=r)).collect(),
            width: rng.random_range(0.5..=2.0),
        })
        .collect();
    let samples: Vec<GapSample<'_>> = fields
        .iter()
        .map(|field| {
            let t = rng.random::<f64>() * problem.horizon;
            let x = (0..d).map(|_| rng.random_range(-r..=r)).collect();
            let q = DVector::from_fn(d, |_, _| rng.random_range(-j..=j));
            let mut a = DMatrix::zeros(d, d);
            for i in 0..d {
                for k in 0..=i {
                    let v = rng.random_range(-j..=j);
                    a[(i, k)] = v;
                    a[(k, i)] = v;
                }
            }
            GapSample { t, x, q, a, field: field as &dyn Field }
        })
        .collect();
    isaacs_gap(problem, quadrature, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{build_quadrature, LevyMeasureSpec};
    use crate::model::{build_problem, ProblemDescription};

    fn problem(name: &str) -> GameProblem {
        build_problem(&ProblemDescription::preset(name)).unwrap()
    }

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn mat(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn local_operator_examples() {
        let null = problem("null");
        assert_eq!(local_operator(&null, 0.0, &[1.0], &scalar(3.0), &mat(-2.0), 0.0, 0.0), 0.0);
        let sd = problem("sine-diffusion");
        let v = local_operator(&sd, 0.0, &[0.4], &scalar(7.0), &mat(-1.0), 0.0, 0.0);
        assert!((v + 0.125).abs() < 1e-15);
        let tw = problem("tug-of-war-drift");
        assert_eq!(local_operator(&tw, 0.0, &[0.0], &scalar(2.0), &mat(0.0), 1.0, 1.0), 4.0);
    }

    #[test]
    fn nonlocal_on_square() {
        let p = problem("pure-jump");
        let q = build_quadrature(&p.levy, 0.1, 8).unwrap();
        let field = TestField::Quadratic(vec![1.0]);
        for x in [-1.3, 0.0, 2.0] {
            let v = nonlocal_operator(&p, &q, 0.0, &[x], &field, 0.0, 0.0);
            assert!((v - 2.0).abs() < 1e-12);
            let o = nonlocal_hessian_oracle(&p, &q, 0.0, &[x], &field, 0.0, 0.0);
            assert!((o - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlocal_vanishes_without_jumps_or_on_affine() {
        let p = problem("sine-diffusion");
        let q = build_quadrature(&LevyMeasureSpec::atomic(&[(1.0, 2.0)]), 0.1, 8).unwrap();
        let bump = TestField::GaussianBump { center: vec![0.0], width: 0.5 };
        assert_eq!(nonlocal_operator(&p, &q, 0.0, &[0.1], &bump, 0.0, 0.0), 0.0);
        assert_eq!(nonlocal_hessian_oracle(&p, &q, 0.0, &[0.1], &bump, 0.0, 0.0), 0.0);
        let pj = problem("pure-jump");
        let affine = TestField::Affine { a: vec![2.5], c: -1.0 };
        assert!(nonlocal_operator(&pj, &q, 0.0, &[0.7], &affine, 0.0, 0.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre_unit(32);
        let sum: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((sum - 1.0).abs() < 1e-14);
        let m: f64 = rule.iter().map(|(x, w)| w * x.powi(31)).sum();
        assert!((m - 1.0 / 32.0).abs() < 1e-14);
        let one_minus: f64 = rule.iter().map(|(x, w)| w * (1.0 - x)).sum();
        assert!((one_minus - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singleton_grids_have_no_optimization() {
        let p = problem("pure-jump");
        let q = build_quadrature(&p.levy, 0.1, 8).unwrap();
        let f = TestField::Sine { freq: 1.0 };
        let x = [0.3];
        let direct = local_operator(&p, 0.0, &x, &scalar(0.5), &mat(-0.2), 0.0, 0.0)
            + nonlocal_operator(&p, &q, 0.0, &x, &f, 0.0, 0.0);
        let hp = h_plus(&p, &q, 0.0, &x, &scalar(0.5), &mat(-0.2), &f);
        let hm = h_minus(&p, &q, 0.0, &x, &scalar(0.5), &mat(-0.2), &f);
        assert_eq!(hp.value, direct);
        assert_eq!(hm.value, direct);
    }

    #[test]
    fn tug_of_war_cancels() {
        let p = problem("tug-of-war-drift");
        let q = JumpQuadrature::empty(1);
        let f = TestField::Sine { freq: 1.0 };
        let hp = h_plus(&p, &q, 0.0, &[0.0], &scalar(1.0), &mat(0.0), &f);
        let hm = h_minus(&p, &q, 0.0, &[0.0], &scalar(1.0), &mat(0.0), &f);
        assert_eq!(hp.value, 0.0);
        assert_eq!(hm.value, 0.0);
        // minimizer pushes left against a positive gradient
        assert_eq!(hp.y, -1.0);
        assert_eq!(hp.z, 1.0);
    }

    #[test]
    fn coupled_matrix_game_gap() {
        let p = problem("coupled");
        let q = JumpQuadrature::empty(1);
        let f = TestField::Sine { freq: 1.0 };
        let sample = GapSample { t: 0.0, x: vec![0.0], q: scalar(1.0), a: mat(0.0), field: &f };
        assert_eq!(isaacs_gap(&p, &q, &[sample]).unwrap(), 2.0);
        assert!(isaacs_gap(&p, &q, &[]).is_err());
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let table = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(saddle_of_table(&table, 2, 2, HamiltonianChoice::Plus), (0.0, 0, 0));
        assert_eq!(saddle_of_table(&table, 2, 2, HamiltonianChoice::Minus), (0.0, 0, 0));
        let table = [1.0, 3.0, 2.0, 0.5];
        assert_eq!(saddle_of_table(&table, 2, 2, HamiltonianChoice::Plus), (2.0, 1, 0));
        assert_eq!(saddle_of_table(&table, 2, 2, HamiltonianChoice::Minus), (1.0, 0, 0));
    }

    #[test]
    fn jet_rejects_asymmetric_hessian() {
        let q = DVector::zeros(2);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(Jet::new(0.0, q.clone(), h).is_err());
        assert!(Jet::new(0.0, q, DMatrix::identity(2, 2)).is_ok());
    }
}
