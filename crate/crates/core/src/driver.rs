//! The adaptive all-at-once generalized Gauss-Newton iteration.
//!
//! Each outer step linearizes at `(q_old, u_old)`, picks `β` so that the
//! linearized misfit `I₂` lands in `[θ̲ I₃, θ̄ I₃]`, refines the mesh while the
//! `η₁` accuracy gate fails and otherwise takes the step. The iteration stops
//! by the discrepancy test `I₃ ≤ τ² δ²`.

use std::sync::Arc;
use std::time::Instant;

use crate::estimators::{
    compute_i3, compute_qoi, estimate_eta1, estimate_eta2, estimate_two_level, mark_fraction, Estimate, Qoi, WeightMode,
};
use crate::fem::{FemError, Field, Space, SpaceKind};
use crate::mesh::{uniform_mesh, MeshError, QuadMesh};
use crate::problem::{MeshData, ModelProblem, NoisyData, ProblemError};
use crate::subsolver::{
    adjoint_w_norm, qoi_gradient, solve_kkt, solve_second_order, KktSolution, Subproblem, SubsolverError,
};

#[derive(Debug, Clone, thiserror::Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("noise level must be positive, got {0}")]
    NoNoise(f64),
    #[error(transparent)]
    Subsolver(#[from] SubsolverError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Parameters of the outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GgnConfig {
    pub tau: f64,
    pub tau_beta: f64,
    pub tau_beta_tilde: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// `θ̃`, the fraction of `I₃` used as the inner noise level `δ_β²`.
    pub theta_tilde: f64,
    pub c_tc: f64,
    pub c2: f64,
    pub c3: f64,
    pub beta0: f64,
    pub coarse_levels: u8,
    pub max_level: u8,
    pub max_outer: usize,
    pub max_refinements: usize,
    pub marking_fraction: f64,
    /// β updates allowed before a bracket must exist.
    pub max_beta_expansions: usize,
    /// Total β updates per search.
    pub max_beta_updates: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub weights: WeightMode,
    pub trigger: BetaTrigger,
}

/// When an outer step starts the β search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaTrigger {
    /// Only when `I₂ > θ̄ I₃`, so β never decreases.
    Upper,
    /// Whenever `I₂` lies outside `[θ̲ I₃, θ̄ I₃]`.
    Band,
    /// Only when `I₂ > (τ_β² + τ̃_β²/2) θ̃ I₃`.
    Scaled,
}

impl BetaTrigger {
    pub fn label(&self) -> &'static str {
        match self {
            BetaTrigger::Upper => "upper",
            BetaTrigger::Band => "band",
            BetaTrigger::Scaled => "scaled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "upper" => Some(BetaTrigger::Upper),
            "band" => Some(BetaTrigger::Band),
            "scaled" => Some(BetaTrigger::Scaled),
            _ => None,
        }
    }

    pub fn fires(&self, i2: f64, i3: f64, cfg: &GgnConfig) -> bool {
        match self {
            BetaTrigger::Upper => i2 > cfg.theta_hi * i3,
            BetaTrigger::Band => i2 > cfg.theta_hi * i3 || i2 < cfg.theta_lo * i3,
            BetaTrigger::Scaled => {
                i2 > (cfg.tau_beta.powi(2) + 0.5 * cfg.tau_beta_tilde.powi(2)) * cfg.theta_tilde * i3
            }
        }
    }
}

impl Default for GgnConfig {
    fn default() -> Self {
        GgnConfig {
            tau: 5.0,
            tau_beta: 1.66,
            tau_beta_tilde: 1.0,
            theta_lo: 0.2,
            theta_hi: 0.4999,
            theta_tilde: 0.5 * (0.2 + 0.4999),
            c_tc: 1e-7,
            c2: 0.9999,
            c3: 1e-4,
            beta0: 10.0,
            coarse_levels: 2,
            max_level: 6,
            max_outer: 30,
            max_refinements: 10,
            marking_fraction: 0.3,
            max_beta_expansions: 30,
            max_beta_updates: 60,
            beta_min: 1e-12,
            beta_max: 1e14,
            weights: WeightMode::TwoLevel,
            trigger: BetaTrigger::Upper,
        }
    }
}

impl GgnConfig {
    /// Checks the parameter conditions under which the iteration is analysed.
    pub fn validate(&self) -> Result<(), DriverError> {
        let c = self.c_tc;
        let bad = |m: &str| Err(DriverError::Config(m.to_string()));
        let finite = [
            self.tau,
            self.tau_beta,
            self.tau_beta_tilde,
            self.theta_lo,
            self.theta_hi,
            self.theta_tilde,
            self.c_tc,
            self.c2,
            self.c3,
            self.beta0,
            self.marking_fraction,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("parameters must be finite");
        }
        if !(0.0 < self.theta_lo && self.theta_lo <= self.theta_hi && self.theta_hi < 1.0) {
            return bad("need 0 < theta_lo <= theta_hi < 1");
        }
        if 2.0 * (c * c + (1.0 + c).powi(2) / (self.tau * self.tau)) >= self.theta_lo {
            return bad("need 2 (c_tc^2 + (1 + c_tc)^2 / tau^2) < theta_lo");
        }
        if 4.0 * c * c >= 1.0 || (2.0 * self.theta_hi + 4.0 * c * c) / (1.0 - 4.0 * c * c) >= 1.0 {
            return bad("need (2 theta_hi + 4 c_tc^2) / (1 - 4 c_tc^2) < 1");
        }
        if !(self.tau_beta > 1.0f64.max(self.tau_beta_tilde) && self.tau_beta <= self.tau) {
            return bad("need max(1, tau_beta_tilde) < tau_beta <= tau");
        }
        if !(self.theta_tilde > 0.0 && self.theta_tilde < 1.0) {
            return bad("need 0 < theta_tilde < 1");
        }
        if !(self.beta0 > 0.0 && self.beta_min > 0.0 && self.beta_min < self.beta_max) {
            return bad("need 0 < beta_min < beta_max and beta0 > 0");
        }
        if !(self.marking_fraction > 0.0 && self.marking_fraction <= 1.0) {
            return bad("marking fraction must lie in (0, 1]");
        }
        if self.coarse_levels > self.max_level {
            return bad("coarse mesh finer than the level cap");
        }
        Ok(())
    }

    /// Right-hand side factor of the `η₁` gate: `θ̲ - 2(2c² + (1 + 2c)²/τ²)`.
    pub fn eta1_factor(&self) -> f64 {
        let c = self.c_tc;
        self.theta_lo - 2.0 * (2.0 * c * c + (1.0 + 2.0 * c).powi(2) / (self.tau * self.tau))
    }
}

/// What a CSV row was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Solve,
    Beta,
    RefineEta1,
    RefineEta2,
    Accept,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Solve => "solve",
            Phase::Beta => "beta",
            Phase::RefineEta1 => "refine-eta1",
            Phase::RefineEta2 => "refine-eta2",
            Phase::Accept => "accept",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub k: usize,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub beta: f64,
    pub rho: f64,
    pub nodes: usize,
    pub phase: Phase,
    /// `(1/β) ||q_h - q0||²` evaluated by quadrature, independent of `I₁`.
    pub reg: f64,
}

pub const CSV_HEADER: &str = "k,I1h,I2h,I3h,I4h,eta1,eta2,beta,rho,nodes,phase";

impl Row {
    pub fn csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{},{}",
            self.k,
            self.i1,
            self.i2,
            self.i3,
            self.i4,
            opt(self.eta1),
            opt(self.eta2),
            self.beta,
            self.rho,
            self.nodes,
            self.phase.label()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Discrepancy,
    IterationCap,
    BetaSearchFailure,
    /// The nonlinear forward solve diverged (reference solver only).
    ForwardFailure,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Discrepancy => "discrepancy",
            Termination::IterationCap => "iteration-cap",
            Termination::BetaSearchFailure => "beta-search-failure",
            Termination::ForwardFailure => "forward-failure",
        }
    }
}

/// One accepted outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedStep {
    pub k: usize,
    pub beta: f64,
    pub i2: f64,
    pub i3: f64,
    pub eta1: f64,
    /// Gate bound at acceptance; `|η₁| <= gate` unless `gate_forced`.
    pub gate: f64,
    /// The gate failed but no cell could be refined further.
    pub gate_forced: bool,
    pub nodes: usize,
    /// `||q_k||² + ||∇u_k||²` and the bound `||q†||² + ||∇u†||²`.
    pub mono_lhs: f64,
    pub mono_rhs: f64,
    pub rel_error: f64,
}

impl AcceptedStep {
    pub fn monotone(&self) -> bool {
        self.mono_lhs <= self.mono_rhs
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub method: &'static str,
    pub rows: Vec<Row>,
    pub steps: Vec<AcceptedStep>,
    pub q: Field,
    pub u: Field,
    pub beta: f64,
    pub nodes: usize,
    pub rel_error: f64,
    pub wall_time: f64,
    pub termination: Termination,
    /// Final `I₃h` and the threshold `τ² δ²`.
    pub final_i3: f64,
    pub threshold: f64,
    pub delta: f64,
    pub warnings: Vec<String>,
}

impl RunReport {
    /// Number of accepted outer steps.
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn monotone(&self) -> bool {
        self.steps.iter().all(|s| s.monotone())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }
}

/// `||q||²_{L2} + ||∇u||²` against `||q†||² + ||∇u†||²` (with `q0 = u0 = 0`).
pub fn check_monotonicity(q: &Field, u: &Field, data: &NoisyData) -> (f64, f64, bool) {
    let lhs = q.l2_norm2() + u.grad_norm2();
    let rhs = data.q_dagger_norm2() + data.u_dagger_grad_norm2();
    (lhs, rhs, lhs <= rhs)
}

/// Spaces and restricted data on the current mesh.
pub(crate) struct Discretization {
    pub mesh: Arc<QuadMesh>,
    pub qs: Arc<Space>,
    pub vs: Arc<Space>,
    pub data: Arc<MeshData>,
}

impl Discretization {
    pub fn new(mesh: QuadMesh, data: &NoisyData) -> Result<Self, DriverError> {
        let mesh = Arc::new(mesh);
        let qs = Space::new(mesh.clone(), SpaceKind::Q);
        let vs = Space::new(mesh.clone(), SpaceKind::V);
        let data = Arc::new(MeshData::new(data, &vs)?);
        Ok(Discretization { mesh, qs, vs, data })
    }

    /// Refines the marked cells below `max_level`; `None` if nothing can be refined.
    pub fn refine(&self, indicators: &[f64], fraction: f64, max_level: u8, data: &NoisyData) -> Result<Option<Self>, DriverError> {
        let mesh = &self.mesh;
        let marked = mark_fraction(indicators, fraction, |k| mesh.cell(k).level < max_level);
        if marked.is_empty() {
            return Ok(None);
        }
        Ok(Some(Discretization::new(mesh.refine(&marked)?, data)?))
    }
}

/// Relative decrease of `I₂` per tenfold `β` below which the search is stuck.
const PLATEAU: f64 = 0.05;

struct Run<'a> {
    problem: ModelProblem,
    data: &'a NoisyData,
    cfg: &'a GgnConfig,
    disc: Discretization,
    q_old: Field,
    u_old: Field,
    rho: f64,
    // I₃ of the current base point, held fixed while the mesh changes
    i3: f64,
    k: usize,
    rows: Vec<Row>,
}

enum Search {
    Done(Box<KktSolution>, Box<Subproblem>, Qoi),
    Failed(Box<KktSolution>, Qoi),
}

impl Run<'_> {
    fn subproblem(&self) -> Result<Subproblem, DriverError> {
        let d = &self.disc;
        Ok(Subproblem::new(self.problem, &d.qs, &d.vs, &d.data, &self.q_old, &self.u_old, None)?)
    }

    fn push(&mut self, q: &Qoi, sol: Option<&KktSolution>, beta: f64, phase: Phase) {
        let reg = sol.map(|s| s.q.l2_norm2() / s.beta).unwrap_or(0.0);
        self.rows.push(Row {
            k: self.k,
            i1: q.i1,
            i2: q.i2,
            i3: q.i3,
            i4: q.i4,
            eta1: (phase == Phase::Accept || phase == Phase::RefineEta1).then_some(q.eta1),
            eta2: (phase == Phase::RefineEta2 || (phase == Phase::Beta && q.eta2 != 0.0)).then_some(q.eta2),
            beta,
            rho: self.rho,
            nodes: self.disc.mesh.num_vertices(),
            phase,
            reg,
        });
    }

    fn eta1(&self, sub: &Subproblem, sol: &KktSolution) -> Result<Estimate, DriverError> {
        Ok(match self.cfg.weights {
            WeightMode::Patch => estimate_eta1(sub, sol),
            WeightMode::TwoLevel => estimate_two_level(sub, sol, self.data, false)?.0,
        })
    }

    fn eta2(&self, sub: &Subproblem, sol: &KktSolution) -> Result<Estimate, DriverError> {
        Ok(match self.cfg.weights {
            WeightMode::Patch => {
                let aux = solve_second_order(sub, sol, &qoi_gradient(sub, sol))?;
                estimate_eta2(sub, sol, &aux)
            }
            WeightMode::TwoLevel => estimate_two_level(sub, sol, self.data, true)?.1.expect("requested"),
        })
    }

    fn solve(&self, sub: &Subproblem, beta: f64) -> Result<(KktSolution, Qoi), DriverError> {
        let sol = solve_kkt(sub, beta)?;
        let mut q = compute_qoi(sub, &sol, self.rho)?;
        q.i3 = self.i3;
        Ok((sol, q))
    }

    /// Bracket and bisect on `log10 β` until `I₂` lies in `[θ̲ I₃, θ̄ I₃]`,
    /// refining with respect to `η₂` whenever its gate fails.
    fn beta_search(
        &mut self,
        mut sub: Subproblem,
        mut sol: KktSolution,
        mut qoi: Qoi,
        refinements: &mut usize,
    ) -> Result<Search, DriverError> {
        let cfg = self.cfg;
        let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
        let mut updates = 0usize;
        let mut expansions = 0usize;
        // I₂ at the last lower bracket end, to detect a plateau in β
        let mut lo_i2: Option<f64> = None;
        loop {
            let (i2, i3) = (qoi.i2, qoi.i3);
            if i2 >= cfg.theta_lo * i3 && i2 <= cfg.theta_hi * i3 {
                return Ok(Search::Done(Box::new(sol), Box::new(sub), qoi));
            }
            let plateau = i2 > cfg.theta_hi * i3 && lo_i2.is_some_and(|p| i2 > (1.0 - PLATEAU) * p);
            if *refinements < cfg.max_refinements {
                let e2 = self.eta2(&sub, &sol)?;
                qoi.eta2 = e2.value;
                let delta_beta2 = cfg.theta_tilde * i3;
                // on a plateau the mesh, not β, limits the misfit
                if plateau || e2.value.abs() > 0.5 * cfg.tau_beta_tilde.powi(2) * delta_beta2 {
                    if let Some(d) = self.disc.refine(&e2.indicators(), cfg.marking_fraction, cfg.max_level, self.data)? {
                        self.disc = d;
                        *refinements += 1;
                        sub = self.subproblem()?;
                        (sol, qoi) = self.solve(&sub, sol.beta)?;
                        qoi.eta2 = e2.value;
                        self.push(&qoi, Some(&sol), sol.beta, Phase::RefineEta2);
                        qoi.eta2 = 0.0;
                        lo = None;
                        hi = None;
                        lo_i2 = None;
                        expansions = 0;
                        continue;
                    }
                }
            }
            if plateau {
                return Ok(Search::Failed(Box::new(sol), qoi));
            }
            let beta = sol.beta;
            if i2 > cfg.theta_hi * i3 {
                lo = Some(beta);
                lo_i2 = Some(i2);
            } else {
                hi = Some(beta);
            }
            let next = match (lo, hi) {
                (Some(l), Some(h)) => (l * h).sqrt(),
                (Some(l), None) => {
                    expansions += 1;
                    l * 10.0
                }
                (None, Some(h)) => {
                    expansions += 1;
                    h / 10.0
                }
                (None, None) => unreachable!(),
            };
            updates += 1;
            let bracketed = lo.is_some() && hi.is_some();
            if (!bracketed && expansions > cfg.max_beta_expansions)
                || updates > cfg.max_beta_updates
                || !(cfg.beta_min..=cfg.beta_max).contains(&next)
            {
                return Ok(Search::Failed(Box::new(sol), qoi));
            }
            (sol, qoi) = self.solve(&sub, next)?;
            self.push(&qoi, Some(&sol), next, Phase::Beta);
        }
    }
}

/// Runs the iteration after validating `cfg`.
pub fn run_ggn(problem: &ModelProblem, data: &NoisyData, cfg: &GgnConfig) -> Result<RunReport, DriverError> {
    cfg.validate()?;
    run_ggn_unchecked(problem, data, cfg)
}

/// Runs the iteration without checking the parameter conditions.
pub fn run_ggn_unchecked(problem: &ModelProblem, data: &NoisyData, cfg: &GgnConfig) -> Result<RunReport, DriverError> {
    let start = Instant::now();
    if data.delta.is_nan() || data.delta <= 0.0 {
        return Err(DriverError::NoNoise(data.delta));
    }
    let mut warnings = data.warnings.clone();
    if let Err(e) = cfg.validate() {
        warnings.push(format!("{e}; the monotonicity bound is not guaranteed"));
    }
    if data.fine_levels <= cfg.max_level {
        warnings.push(format!(
            "data mesh level {} is not finer than the solver level cap {}",
            data.fine_levels, cfg.max_level
        ));
    }
    let disc = Discretization::new(uniform_mesh(cfg.coarse_levels), data)?;
    let q_old = Field::zeros(&disc.qs);
    let u_old = Field::zeros(&disc.vs);
    let mut run = Run { problem: *problem, data, cfg, disc, q_old, u_old, rho: 0.0, i3: 0.0, k: 0, rows: Vec::new() };

    let threshold = cfg.tau * cfg.tau * data.delta * data.delta;
    let mut sub = run.subproblem()?;
    let z0 = sub.adjoint_at_base()?;
    run.rho = adjoint_w_norm(&z0).max(f64::MIN_POSITIVE);
    run.i3 = compute_i3(&sub, run.rho)?;
    run.push(&Qoi { i3: run.i3, rho: run.rho, ..Qoi::default() }, None, cfg.beta0, Phase::Init);

    let mut beta = cfg.beta0;
    let mut steps = Vec::new();
    let gate_factor = cfg.eta1_factor();
    let termination = loop {
        if run.i3 <= threshold {
            break Termination::Discrepancy;
        }
        if run.k >= cfg.max_outer {
            break Termination::IterationCap;
        }
        let (mut sol, mut qoi) = run.solve(&sub, beta)?;
        run.push(&qoi, Some(&sol), beta, Phase::Solve);
        let mut refinements = 0usize;
        let mut failed = false;
        let (eta1, gate, forced) = loop {
            let res = if cfg.trigger.fires(qoi.i2, qoi.i3, cfg) {
                run.beta_search(sub, sol, qoi, &mut refinements)?
            } else {
                Search::Done(Box::new(sol), Box::new(sub), qoi)
            };
            match res {
                Search::Done(s, b, q) => {
                    sol = *s;
                    sub = *b;
                    qoi = q;
                }
                Search::Failed(s, q) => {
                    sol = *s;
                    qoi = q;
                    failed = true;
                    break (0.0, 0.0, false);
                }
            }
            let e1 = run.eta1(&sub, &sol)?;
            qoi.eta1 = e1.value;
            let gate = gate_factor * qoi.i3;
            if e1.value.abs() <= gate {
                break (e1.value, gate, false);
            }
            if refinements >= cfg.max_refinements {
                break (e1.value, gate, true);
            }
            match run.disc.refine(&e1.indicators(), cfg.marking_fraction, cfg.max_level, data)? {
                Some(d) => {
                    run.disc = d;
                    refinements += 1;
                    sub = run.subproblem()?;
                    let b = sol.beta;
                    (sol, qoi) = run.solve(&sub, b)?;
                    qoi.eta1 = e1.value;
                    run.push(&qoi, Some(&sol), b, Phase::RefineEta1);
                }
                None => break (e1.value, gate, true),
            }
        };
        if failed {
            run.push(&qoi, Some(&sol), sol.beta, Phase::Beta);
            break Termination::BetaSearchFailure;
        }
        beta = sol.beta;
        run.push(&qoi, Some(&sol), beta, Phase::Accept);
        let (lhs, rhs, _) = check_monotonicity(&sol.q, &sol.u, data);
        steps.push(AcceptedStep {
            k: run.k,
            beta,
            i2: qoi.i2,
            i3: qoi.i3,
            eta1,
            gate,
            gate_forced: forced,
            nodes: run.disc.mesh.num_vertices(),
            mono_lhs: lhs,
            mono_rhs: rhs,
            rel_error: data.relative_error(&sol.q)?,
        });
        run.q_old = sol.q;
        run.u_old = sol.u;
        run.k += 1;
        sub = run.subproblem()?;
        run.rho = run.rho.max(adjoint_w_norm(&sub.adjoint_at_base()?));
        run.i3 = compute_i3(&sub, run.rho)?;
    };
    let broken: Vec<usize> = steps.iter().filter(|s| !s.monotone()).map(|s| s.k).collect();
    if !broken.is_empty() {
        warnings.push(format!("monotonicity bound violated at steps {broken:?}"));
    }
    let rel_error = data.relative_error(&run.q_old)?;
    Ok(RunReport {
        method: "GGN",
        rows: run.rows,
        steps,
        beta,
        nodes: run.disc.mesh.num_vertices(),
        rel_error,
        q: run.q_old,
        u: run.u_old,
        wall_time: start.elapsed().as_secs_f64(),
        termination,
        final_i3: run.i3,
        threshold,
        delta: data.delta,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = GgnConfig::default();
        c.validate().unwrap();
        assert!((c.theta_tilde - 0.34995).abs() < 1e-15);
        assert!((c.eta1_factor() - (0.2 - 2.0 / 25.0)).abs() < 1e-6);
    }

    #[test]
    fn bad_parameters_rejected() {
        let c = GgnConfig { tau: 0.5, ..GgnConfig::default() };
        assert!(c.validate().is_err());
        let c = GgnConfig { theta_hi: 0.6, ..GgnConfig::default() };
        assert!(c.validate().is_err());
        let c = GgnConfig { tau_beta: 6.0, ..GgnConfig::default() };
        assert!(c.validate().is_err());
        let c = GgnConfig { theta_lo: 0.5, theta_hi: 0.4, ..GgnConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_row_format() {
        let r = Row {
            k: 2,
            i1: 1.0,
            i2: 0.5,
            i3: 2.0,
            i4: 0.7,
            eta1: None,
            eta2: Some(-0.25),
            beta: 10.0,
            rho: 3.0,
            nodes: 25,
            phase: Phase::Beta,
            reg: 0.5,
        };
        let s = r.csv();
        assert_eq!(s.split(',').count(), CSV_HEADER.split(',').count());
        assert!(s.starts_with("2,") && s.ends_with(",25,beta"));
        assert!(s.contains(",,-2.5"));
    }
}
