//! One function per command; each returns its artifacts in memory.

use isaacs_core::analysis::{dpp_residual, verify_pair, vpi_convergence, Partition, VerifyOptions};
use isaacs_core::hamiltonian::{sampled_isaacs_gap, GapSampling};
use isaacs_core::model::{audit_assumptions, AuditOptions};
use isaacs_core::simulator::{
    estimate_payoff, feedback_from_grid, moment_scaling_check, simulate_paths, write_paths, FeedbackPolicy, Player,
};
use isaacs_core::solver::{regularity_report, solve_terminal_value};
use isaacs_core::{build_problem, build_quadrature, Error, GameProblem, HamiltonianChoice, JumpQuadrature};
use isaacs_core::{SchemeConfig, ValueGrid};

use crate::config::PolicyChoice;
use crate::output::{write_plot_columns, write_plot_slice, Report};
use crate::{Artifacts, CliError, Command, RunConfig};

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let problem = build_problem(&cfg.description()).map_err(|e| CliError::invalid("problem", e))?;
    let quad = build_quadrature(&problem.levy, cfg.levy.cutoff, cfg.levy.node_budget)
        .map_err(|e| CliError::invalid("levy", e))?;
    let ctx = Ctx { cfg, problem: &problem, quad: &quad, scheme: cfg.scheme.config() };
    ctx.scheme.validate().map_err(|e| CliError::invalid("scheme", e))?;
    match command {
        Command::Solve => ctx.solve(),
        Command::IsaacsCheck => ctx.isaacs_check(),
        Command::Simulate => ctx.simulate(true),
        Command::Payoff => ctx.simulate(false),
        Command::ValuePi => ctx.value_pi(),
        Command::DppCheck => ctx.dpp_check(),
        Command::Verify => ctx.verify(),
        Command::Moments => ctx.moments(),
        Command::Audit => ctx.audit(),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    problem: &'a GameProblem,
    quad: &'a JumpQuadrature,
    scheme: SchemeConfig,
}

fn bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(buf)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl<'a> Ctx<'a> {
    fn solve_with(&self, choice: HamiltonianChoice, refined: bool) -> Result<ValueGrid, CliError> {
        let section = self.cfg.grid()?;
        let grid = if refined { section.refined() } else { section.clone() }.build()?;
        solve_terminal_value(self.problem, &grid, self.quad, &self.scheme.with_choice(choice))
            .map_err(|e| CliError::invalid("scheme", e))
    }

    fn policy(&self, player: Player, choice: &PolicyChoice, vg: Option<&'a ValueGrid>) -> Result<FeedbackPolicy<'a>, CliError>
    where
        Self: 'a,
    {
        let key = if player == Player::Minimizer { "policy.y" } else { "policy.z" };
        let bad = |message: String| CliError::Validation { key: key.into(), message };
        match choice {
            PolicyChoice::Constant(v) => FeedbackPolicy::constant(self.problem, player, *v).map_err(|e| bad(e.to_string())),
            PolicyChoice::Named(n) if n == "first" => Ok(FeedbackPolicy::first(self.problem, player)),
            PolicyChoice::Named(n) if n == "feedback" => {
                let vg = vg.ok_or_else(|| bad("feedback policies need a [grid] section".into()))?;
                feedback_from_grid(vg, player, self.problem, self.quad).map_err(|e| bad(e.to_string()))
            }
            PolicyChoice::Named(n) => Err(bad(format!("expected \"first\", \"feedback\" or a grid value, got \"{n}\""))),
        }
    }

    fn wants_feedback(&self) -> bool {
        let fb = |c: &PolicyChoice| matches!(c, PolicyChoice::Named(n) if n == "feedback");
        fb(&self.cfg.policy.y) || fb(&self.cfg.policy.z)
    }

    fn start(&self) -> Result<(f64, Vec<f64>), CliError> {
        let s = self.cfg.start()?;
        if s.x0.len() != self.problem.dim {
            return Err(CliError::Validation {
                key: "start.x0".into(),
                message: format!("has {} entries, state dimension is {}", s.x0.len(), self.problem.dim),
            });
        }
        Ok((s.t0, s.x0.clone()))
    }

    fn solve(&self) -> Result<Artifacts, CliError> {
        let vg = self.solve_with(self.scheme.hamiltonian, false)?;
        let reg = regularity_report(&vg).map_err(|e| CliError::invalid("scheme", e))?;
        let mut report = Report::new(Command::Solve);
        report
            .put("hamiltonian", vg.hamiltonian.name())
            .put("nodes", vg.grid.len())
            .put("slices", vg.times.len())
            .put("dt", vg.times[1] - vg.times[0])
            .put("lip_x", reg.lip_x)
            .put("holder_t", reg.holder_t)
            .put("boundary_margin", vg.boundary_margin)
            .put("problem_fingerprint", &vg.problem_fingerprint)
            .put("scheme_fingerprint", &vg.scheme_fingerprint);
        let mut out = Artifacts::default();
        out.add("csv", bytes(|b| vg.write_csv_strided(self.cfg.output.time_stride, b))?);
        out.add("dat", bytes(|b| write_plot_slice(&vg, 0, b))?);
        out.summary = report.render();
        out.add("report", out.summary.clone().into_bytes());
        Ok(out)
    }

    fn isaacs_check(&self) -> Result<Artifacts, CliError> {
        let s = &self.cfg.isaacs;
        let opts = GapSampling {
            samples: s.samples,
            seed: self.cfg.seed()?,
            state_radius: s.state_radius,
            jet_radius: s.jet_radius,
        };
        let gap = sampled_isaacs_gap(self.problem, self.quad, &opts).map_err(|e| CliError::invalid("isaacs", e))?;
        let mut report = Report::new(Command::IsaacsCheck);
        report.put("samples", s.samples).put("seed", opts.seed).put("gap", gap);
        Ok(single_report(report))
    }

    fn simulate(&self, dump: bool) -> Result<Artifacts, CliError> {
        let (t0, x0) = self.start()?;
        let (n, dt, seed) = (self.cfg.n_paths()?, self.cfg.mc_dt()?, self.cfg.seed()?);
        let vg = if self.wants_feedback() { Some(self.solve_with(self.scheme.hamiltonian, false)?) } else { None };
        let py = self.policy(Player::Minimizer, &self.cfg.policy.y, vg.as_ref())?;
        let pz = self.policy(Player::Maximizer, &self.cfg.policy.z, vg.as_ref())?;
        let command = if dump { Command::Simulate } else { Command::Payoff };
        let mut report = Report::new(command);
        let mut out = Artifacts::default();
        let est = if dump {
            let paths = simulate_paths(self.problem, self.quad, &py, &pz, t0, &x0, dt, n, seed)
                .map_err(|e| CliError::invalid("mc", e))?;
            let payoffs: Vec<f64> = paths.iter().map(|p| p.payoff()).collect();
            let jumps: usize = paths.iter().map(|p| p.jumps.len()).sum();
            for i in 0..self.problem.dim {
                let finals: Vec<f64> = paths.iter().map(|p| p.final_state()[i]).collect();
                report.put(&format!("mean_final_x{}", i + 1), isaacs_core::simulator::McEstimate::from_samples(&finals, seed).mean);
            }
            report.put("total_jumps", jumps);
            if self.cfg.output.paths {
                out.add("paths", bytes(|b| write_paths(&paths, b))?);
            }
            isaacs_core::simulator::McEstimate::from_samples(&payoffs, seed)
        } else {
            estimate_payoff(self.problem, self.quad, &py, &pz, t0, &x0, dt, n, seed).map_err(|e| CliError::invalid("mc", e))?
        };
        report
            .put("n_paths", est.n_paths)
            .put("seed", est.seed)
            .put("dt", dt)
            .put("payoff_mean", est.mean)
            .put("payoff_std_error", est.std_error);
        out.summary = report.render();
        out.add("report", out.summary.clone().into_bytes());
        Ok(out)
    }

    fn value_pi(&self) -> Result<Artifacts, CliError> {
        let blocks = &self.cfg.value_pi.as_ref().ok_or_else(|| CliError::missing("value_pi.blocks"))?.blocks;
        let partitions = blocks
            .iter()
            .map(|&n| Partition::uniform(self.problem.horizon, n))
            .collect::<Result<Vec<_>, Error>>()
            .map_err(|e| CliError::Validation { key: "value_pi.blocks".into(), message: e.to_string() })?;
        let grid = self.cfg.grid()?.build()?;
        let seq = vpi_convergence(self.problem, self.quad, &partitions, &grid, &self.scheme).map_err(|e| match e {
            Error::Precondition(m) => CliError::Validation { key: "value_pi.blocks".into(), message: m },
            e => CliError::invalid("value_pi", e),
        })?;
        let mut report = Report::new(Command::ValuePi);
        report.put("hamiltonian", self.scheme.hamiltonian.name());
        for (n, e) in &seq {
            report.put(&format!("error_at_norm_{n}"), e);
        }
        report.put("non_increasing", seq.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1 + 1e-12));
        let mut out = Artifacts::default();
        out.add("csv", bytes(|b| isaacs_core::analysis::write_error_sequence(&seq, b))?);
        out.add("dat", bytes(|b| write_plot_columns(("norm", "error"), &seq, b))?);
        out.summary = report.render();
        out.add("report", out.summary.clone().into_bytes());
        Ok(out)
    }

    fn dpp_check(&self) -> Result<Artifacts, CliError> {
        let tau = self.cfg.dpp.as_ref().ok_or_else(|| CliError::missing("dpp.tau"))?.tau;
        let grid = self.cfg.grid()?.build()?;
        let vg = self.solve_with(self.scheme.hamiltonian, false)?;
        let residual = dpp_residual(self.problem, self.quad, &vg, tau, &grid, &self.scheme).map_err(|e| match e {
            Error::OffGridTime(t) => CliError::Validation {
                key: "dpp.tau".into(),
                message: format!("{t} is not a solver time; nearest is {}", vg.times[vg.nearest_index(t)]),
            },
            Error::Precondition(m) => CliError::Validation { key: "dpp.tau".into(), message: m },
            e => CliError::invalid("dpp", e),
        })?;
        let mut report = Report::new(Command::DppCheck);
        report.put("tau", tau).put("hamiltonian", vg.hamiltonian.name()).put("residual", residual);
        Ok(single_report(report))
    }

    fn verify(&self) -> Result<Artifacts, CliError> {
        let (t0, x0) = self.start()?;
        let (n, dt, seed) = (self.cfg.n_paths()?, self.cfg.mc_dt()?, self.cfg.seed()?);
        let vg_u = self.solve_with(HamiltonianChoice::Plus, false)?;
        let vg_v = self.solve_with(HamiltonianChoice::Minus, false)?;
        let scheme_error = match self.cfg.verify.scheme_error {
            Some(e) if e >= 0.0 => e,
            Some(_) => {
                return Err(CliError::Validation { key: "verify.scheme_error".into(), message: "must be non-negative".into() })
            }
            None => {
                let fine_u = self.solve_with(HamiltonianChoice::Plus, true)?;
                let fine_v = self.solve_with(HamiltonianChoice::Minus, true)?;
                refinement_error(&vg_u, &fine_u).max(refinement_error(&vg_v, &fine_v))
            }
        };
        let py = self.policy(Player::Minimizer, &self.cfg.policy.y, Some(&vg_u))?;
        let pz = self.policy(Player::Maximizer, &self.cfg.policy.z, Some(&vg_v))?;
        let opts = VerifyOptions { n_paths: n, dt, seed, scheme_error };
        let r = verify_pair(self.problem, self.quad, &vg_u, &vg_v, &py, &pz, t0, &x0, &opts)
            .map_err(|e| CliError::invalid("verify", e))?;
        let mut report = Report::new(Command::Verify);
        report.extend_raw(&String::from_utf8(bytes(|b| r.write_kv(b))?).expect("utf-8 report"));
        Ok(single_report(report))
    }

    fn moments(&self) -> Result<Artifacts, CliError> {
        let (t0, x0) = self.start()?;
        let horizons = &self.cfg.moments.as_ref().ok_or_else(|| CliError::missing("moments.horizons"))?.horizons;
        let (n, seed) = (self.cfg.n_paths()?, self.cfg.seed()?);
        let m = moment_scaling_check(self.problem, self.quad, t0, &x0, horizons, n, seed).map_err(|e| match e {
            Error::Precondition(m) => CliError::Validation { key: "moments.horizons".into(), message: m },
            e => CliError::invalid("moments", e),
        })?;
        let rows: Vec<(f64, f64)> = m.horizons.iter().copied().zip(m.means.iter().copied()).collect();
        let mut report = Report::new(Command::Moments);
        report.put("n_paths", n).put("seed", seed);
        match m.slope {
            Some(s) => report.put("slope", s),
            None => report.put("slope", "none"),
        };
        let mut out = Artifacts::default();
        out.add(
            "csv",
            bytes(|b| {
                use std::io::Write;
                writeln!(b, "horizon,mean_abs_increment")?;
                for (h, e) in &rows {
                    writeln!(b, "{h:.16e},{e:.16e}")?;
                }
                Ok(())
            })?,
        );
        out.add("dat", bytes(|b| write_plot_columns(("horizon", "mean_abs_increment"), &rows, b))?);
        out.summary = report.render();
        out.add("report", out.summary.clone().into_bytes());
        Ok(out)
    }

    fn audit(&self) -> Result<Artifacts, CliError> {
        let a = &self.cfg.audit;
        if a.samples < 2 {
            return Err(CliError::Validation { key: "audit.samples".into(), message: "must be at least 2".into() });
        }
        let seed = self.cfg.seed()?;
        let r = audit_assumptions(self.problem, a.samples, seed, &AuditOptions { k_max: a.k_max, state_radius: a.state_radius });
        let mut report = Report::new(Command::Audit);
        report.put("samples", r.samples).put("seed", seed).put("k_max", r.k_max);
        for (name, v) in r.lipschitz_estimates.all() {
            report.put(&format!("lipschitz_{name}"), v);
        }
        for (name, v) in r.bound_estimates.all() {
            report.put(&format!("bound_{name}"), v);
        }
        report
            .put("eta_small_jump_ratio", r.eta_small_jump_ratio)
            .put("levy_moment", r.levy_moment)
            .put("a1", r.pass.a1)
            .put("a2", r.pass.a2)
            .put("a3", r.pass.a3)
            .put("pass", r.passed());
        Ok(single_report(report))
    }
}

fn single_report(report: Report) -> Artifacts {
    let mut out = Artifacts { summary: report.render(), ..Default::default() };
    out.add("report", out.summary.clone().into_bytes());
    out
}

/// Max over the coarse grid's interior nodes of `|coarse(0, x) - fine(0, x)|`.
pub fn refinement_error(coarse: &ValueGrid, fine: &ValueGrid) -> f64 {
    let nodes = coarse.interior_nodes(coarse.boundary_margin);
    let c: Vec<f64> = nodes.iter().map(|&i| coarse.initial()[i]).collect();
    let f: Vec<f64> = nodes.iter().map(|&i| fine.value_at(0.0, &coarse.grid.coords(i))).collect();
    max_abs(&c, &f)
}
