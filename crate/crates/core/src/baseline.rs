//! Reduced nonlinear Tikhonov reference solver.
//!
//! For each `β` the functional `||C(S(q)) - g^δ||² + (1/β)||q - q0||²` is
//! minimized by Gauss-Newton steps, each of which needs the nonlinear forward
//! map `S`. `β` is then moved until the discrepancy lands in
//! `[τ̲̲² δ², τ̄̄² δ²]`, and the mesh is refined while the estimated
//! discretization error of the discrepancy exceeds `τ̃` times its value.

use std::time::Instant;

use crate::driver::{check_monotonicity, AcceptedStep, Discretization, DriverError, Phase, Row, RunReport, Termination};
use crate::estimators::{estimate_eta2, estimate_two_level, Estimate, WeightMode};
use crate::fem::Field;
use crate::mesh::uniform_mesh;
use crate::problem::{ForwardOptions, ModelProblem, NoisyData};
use crate::subsolver::{qoi_gradient, solve_kkt, solve_second_order, KktSolution, Subproblem};

#[derive(Debug, Clone, PartialEq)]
pub struct NtConfig {
    /// Refinement threshold relative to the discrepancy.
    pub tau_tilde: f64,
    pub tau_lo: f64,
    /// Target `τ² δ²` of the secant update on `log β`.
    pub tau: f64,
    pub tau_hi: f64,
    pub c1: f64,
    pub c2: f64,
    pub beta0: f64,
    pub coarse_levels: u8,
    pub max_level: u8,
    /// Relative step size below which Gauss-Newton stops.
    pub gn_tol: f64,
    pub max_gn: usize,
    pub max_backtracks: usize,
    pub max_beta_updates: usize,
    pub max_refinements: usize,
    pub marking_fraction: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub weights: WeightMode,
    pub forward: ForwardOptions,
}

impl Default for NtConfig {
    fn default() -> Self {
        NtConfig {
            tau_tilde: 0.1,
            tau_lo: 3.1,
            tau: 4.0,
            tau_hi: 5.0,
            c1: 0.9,
            c2: 0.4,
            beta0: 10.0,
            coarse_levels: 2,
            max_level: 6,
            gn_tol: 1e-6,
            max_gn: 50,
            max_backtracks: 30,
            max_beta_updates: 60,
            max_refinements: 10,
            marking_fraction: 0.3,
            beta_min: 1e-12,
            beta_max: 1e14,
            weights: WeightMode::TwoLevel,
            forward: ForwardOptions::default(),
        }
    }
}

impl NtConfig {
    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |m: &str| Err(DriverError::Config(m.to_string()));
        if !(0.0 < self.tau_lo && self.tau_lo < self.tau && self.tau < self.tau_hi && self.tau_hi.is_finite()) {
            return bad("need 0 < tau_lo < tau < tau_hi");
        }
        if !(self.tau_tilde > 0.0 && self.tau_tilde.is_finite()) {
            return bad("tau_tilde must be positive");
        }
        if !(self.beta0 > 0.0 && self.beta_min > 0.0 && self.beta_min < self.beta_max) {
            return bad("need 0 < beta_min < beta_max and beta0 > 0");
        }
        if !(self.gn_tol > 0.0 && self.max_gn > 0) {
            return bad("Gauss-Newton tolerance and cap must be positive");
        }
        if !(self.marking_fraction > 0.0 && self.marking_fraction <= 1.0) {
            return bad("marking fraction must lie in (0, 1]");
        }
        if self.coarse_levels > self.max_level {
            return bad("coarse mesh finer than the level cap");
        }
        Ok(())
    }
}

/// A Tikhonov minimizer on one mesh for one `β`.
struct Minimizer {
    q: Field,
    u: Field,
    sub: Subproblem,
    sol: KktSolution,
    misfit: f64,
    reg: f64,
}

enum Inner {
    Done(Box<Minimizer>),
    Forward,
}

struct Nt<'a> {
    problem: ModelProblem,
    data: &'a NoisyData,
    cfg: &'a NtConfig,
    disc: Discretization,
    rows: Vec<Row>,
    k: usize,
}

impl Nt<'_> {
    fn forward(&self, q: &Field, start: &Field) -> Option<Field> {
        self.problem
            .solve_forward(q, &self.disc.vs, &self.cfg.forward, Some(start))
            .ok()
            .map(|f| f.u)
    }

    fn tikhonov(&self, q: &Field, u: &Field, beta: f64) -> (f64, f64) {
        let misfit = self.disc.data.misfit2(u.coef());
        let reg = self.disc.qs.mass().quad_form(q.coef());
        (misfit, reg / beta)
    }

    /// Gauss-Newton on the reduced functional, warm started at `(q, u)`.
    fn minimize(&self, q: &Field, u: &Field, beta: f64) -> Result<Inner, DriverError> {
        let mut q = q.transfer(&self.disc.qs)?;
        let Some(mut u) = self.forward(&q, u) else { return Ok(Inner::Forward) };
        let (mut misfit, mut reg) = self.tikhonov(&q, &u, beta);
        for _ in 0..self.cfg.max_gn {
            let sub = Subproblem::new(self.problem, &self.disc.qs, &self.disc.vs, &self.disc.data, &q, &u, None)?;
            let sol = solve_kkt(&sub, beta)?;
            let step = sol.q.add_scaled(-1.0, &q);
            let size = step.l2_norm2().sqrt();
            if size <= self.cfg.gn_tol * (1.0 + q.l2_norm2().sqrt()) {
                return Ok(Inner::Done(Box::new(Minimizer { q, u, sub, sol, misfit, reg })));
            }
            let current = misfit + reg;
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..self.cfg.max_backtracks {
                let trial = q.add_scaled(t, &step);
                if let Some(ut) = self.forward(&trial, &u) {
                    let (m, r) = self.tikhonov(&trial, &ut, beta);
                    if m + r < current {
                        (q, u, misfit, reg) = (trial, ut, m, r);
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                // no decrease along the Gauss-Newton direction: stationary up to rounding
                return Ok(Inner::Done(Box::new(Minimizer { q, u, sub, sol, misfit, reg })));
            }
        }
        let sub = Subproblem::new(self.problem, &self.disc.qs, &self.disc.vs, &self.disc.data, &q, &u, None)?;
        let sol = solve_kkt(&sub, beta)?;
        Ok(Inner::Done(Box::new(Minimizer { q, u, sub, sol, misfit, reg })))
    }

    /// Estimated discretization error of the discrepancy at the minimizer.
    fn estimate(&self, m: &Minimizer) -> Result<Estimate, DriverError> {
        Ok(match self.cfg.weights {
            WeightMode::Patch => {
                let aux = solve_second_order(&m.sub, &m.sol, &qoi_gradient(&m.sub, &m.sol))?;
                estimate_eta2(&m.sub, &m.sol, &aux)
            }
            WeightMode::TwoLevel => estimate_two_level(&m.sub, &m.sol, self.data, true)?.1.expect("requested"),
        })
    }

    fn push(&mut self, m: &Minimizer, beta: f64, eta: Option<f64>, phase: Phase) {
        self.rows.push(Row {
            k: self.k,
            i1: m.misfit + m.reg,
            i2: m.misfit,
            i3: m.misfit,
            i4: m.misfit,
            eta1: None,
            eta2: eta,
            beta,
            rho: 0.0,
            nodes: self.disc.mesh.num_vertices(),
            phase,
            reg: m.q.l2_norm2() / beta,
        });
    }
}

/// Runs the reference solver after validating `cfg`.
pub fn run_nt(problem: &ModelProblem, data: &NoisyData, cfg: &NtConfig) -> Result<RunReport, DriverError> {
    cfg.validate()?;
    let start = Instant::now();
    if data.delta.is_nan() || data.delta <= 0.0 {
        return Err(DriverError::NoNoise(data.delta));
    }
    let mut warnings = data.warnings.clone();
    let disc = Discretization::new(uniform_mesh(cfg.coarse_levels), data)?;
    let mut q = Field::zeros(&disc.qs);
    let mut u = Field::zeros(&disc.vs);
    let mut nt = Nt { problem: *problem, data, cfg, disc, rows: Vec::new(), k: 0 };
    let d2 = data.delta * data.delta;
    let (lo_bound, target, threshold) = (cfg.tau_lo.powi(2) * d2, cfg.tau.powi(2) * d2, cfg.tau_hi.powi(2) * d2);

    let mut beta = cfg.beta0;
    let mut refinements = 0usize;
    // (log β, log D) at the ends of the bracket: small β gives large D
    let mut lo: Option<(f64, f64)> = None;
    let mut hi: Option<(f64, f64)> = None;
    let mut steps = Vec::new();
    let mut updates = 0usize;
    let termination = loop {
        let m = match nt.minimize(&q, &u, beta)? {
            Inner::Done(m) => *m,
            Inner::Forward => break Termination::ForwardFailure,
        };
        nt.push(&m, beta, None, Phase::Solve);
        (q, u) = (m.q.clone(), m.u.clone());
        if refinements < cfg.max_refinements {
            let est = nt.estimate(&m)?;
            if est.value.abs() > cfg.tau_tilde * m.misfit {
                let next = nt.disc.refine(&est.indicators(), cfg.marking_fraction, cfg.max_level, data)?;
                if let Some(d) = next {
                    nt.disc = d;
                    refinements += 1;
                    nt.push(&m, beta, Some(est.value), Phase::RefineEta2);
                    // the discrepancy changes with the mesh, so the bracket is rebuilt
                    lo = None;
                    hi = None;
                    continue;
                }
            }
        }
        let (lhs, rhs, _) = check_monotonicity(&m.q, &m.u, data);
        steps.push(AcceptedStep {
            k: nt.k,
            beta,
            i2: m.misfit,
            i3: m.misfit,
            eta1: 0.0,
            gate: 0.0,
            gate_forced: false,
            nodes: nt.disc.mesh.num_vertices(),
            mono_lhs: lhs,
            mono_rhs: rhs,
            rel_error: data.relative_error(&m.q)?,
        });
        nt.k += 1;
        if m.misfit >= lo_bound && m.misfit <= threshold {
            nt.push(&m, beta, None, Phase::Accept);
            break Termination::Discrepancy;
        }
        let point = (beta.ln(), m.misfit.max(f64::MIN_POSITIVE).ln());
        if m.misfit > threshold {
            lo = Some(point);
        } else {
            hi = Some(point);
        }
        let next = match (lo, hi) {
            (Some(l), Some(h)) => {
                // secant on log D against log β toward the target, kept inside the bracket
                let slope = (h.1 - l.1) / (h.0 - l.0);
                let x = if slope < 0.0 { l.0 + (target.ln() - l.1) / slope } else { 0.5 * (l.0 + h.0) };
                let (a, b) = (l.0.min(h.0), l.0.max(h.0));
                let w = b - a;
                x.clamp(a + 0.1 * w, b - 0.1 * w).exp()
            }
            (Some(l), None) => l.0.exp() * 10.0,
            (None, Some(h)) => h.0.exp() / 10.0,
            (None, None) => unreachable!(),
        };
        nt.push(&m, beta, None, Phase::Beta);
        updates += 1;
        if updates > cfg.max_beta_updates || !(cfg.beta_min..=cfg.beta_max).contains(&next) {
            if m.misfit <= threshold {
                warnings.push("discrepancy below the lower band edge when the beta search ended".into());
                break Termination::Discrepancy;
            }
            break Termination::BetaSearchFailure;
        }
        beta = next;
    };
    let final_misfit = nt.disc.data.misfit2(u.transfer(&nt.disc.vs)?.coef());
    let rel_error = data.relative_error(&q)?;
    Ok(RunReport {
        method: "NT",
        rows: nt.rows,
        steps,
        beta,
        nodes: nt.disc.mesh.num_vertices(),
        rel_error,
        q,
        u,
        wall_time: start.elapsed().as_secs_f64(),
        termination,
        final_i3: final_misfit,
        threshold,
        delta: data.delta,
        warnings,
    })
}
