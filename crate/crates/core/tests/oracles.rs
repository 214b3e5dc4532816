//! Independent oracles for the solver building blocks.

use std::sync::Arc;

use ggn::baseline::{run_nt, NtConfig};
use ggn::driver::{check_monotonicity, run_ggn, run_ggn_unchecked, GgnConfig, Termination};
use ggn::estimators::{compute_qoi, estimate_two_level};
use ggn::fem::{Field, Space, SpaceKind};
use ggn::io::{load_bundle, save_bundle};
use ggn::mesh::uniform_mesh;
use ggn::problem::{simulate_data, MeshData, ModelProblem, NoisyData, ObservationKind, Observed, SyntheticCase};
use ggn::subsolver::{solve_kkt, Subproblem};
use nalgebra::{DMatrix, DVector};

const POINTS: ObservationKind = ObservationKind::Point { n_side: 9 };

fn dense(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let (n, m) = (rows.len(), rows.first().map_or(0, |r| r.len()));
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn spaces(level: u8, d: &NoisyData) -> (Arc<Space>, Arc<Space>, Arc<MeshData>) {
    let mesh = Arc::new(uniform_mesh(level));
    let qs = Space::new(mesh.clone(), SpaceKind::Q);
    let vs = Space::new(mesh, SpaceKind::V);
    let md = Arc::new(MeshData::new(d, &vs).unwrap());
    (qs, vs, md)
}

/// For ζ = 0 the reduced Tikhonov minimizer solves
/// `(Gᵀ CᵀC G + M/β) q = Gᵀ Cᵀ g` with `G = S⁻¹ M_VQ`; one linearized step
/// from any base point must reproduce it.
#[test]
fn linear_case_matches_reduced_normal_equations() {
    let p = ModelProblem::new(0.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, POINTS, 6, 0.01, 4).unwrap();
    let (qs, vs, md) = spaces(3, &d);
    let beta = 250.0;

    let s = dense(vs.stiffness().to_dense());
    let mvq = dense(ggn::fem::assemble_mass(&vs, &qs).unwrap().to_dense());
    let m = dense(qs.mass().to_dense());
    let c = dense(md.observation_rows().unwrap().to_dense());
    let Observed::Point { g_delta, .. } = &d.observed else { unreachable!() };
    let g = DVector::from_column_slice(g_delta);
    let gmat = s.clone().lu().solve(&mvq).unwrap();
    let cg = &c * &gmat;
    let lhs = cg.transpose() * &cg + &m / beta;
    let q_ref = lhs.lu().solve(&(cg.transpose() * g)).unwrap();

    let bases = [
        (Field::zeros(&qs), Field::zeros(&vs)),
        (Field::interpolate(&qs, |x, y| 3.0 * x - y), Field::interpolate(&vs, |x, y| x * y * (1.0 - x) * (1.0 - y))),
    ];
    for (q_old, u_old) in &bases {
        let sub = Subproblem::new(p, &qs, &vs, &md, q_old, u_old, None).unwrap();
        let sol = solve_kkt(&sub, beta).unwrap();
        let err = sol.q.coef().iter().zip(q_ref.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6 * (1.0 + q_ref.amax()), "defect {err}");
        // the state is the exact forward solution of the new control
        let u_ref = &gmat * DVector::from_column_slice(sol.q.coef());
        let eu = sol.u.coef().iter().zip(u_ref.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(eu <= 1e-9, "state defect {eu}");
    }
}

#[test]
fn linear_case_nt_and_ggn_both_stop() {
    let p = ModelProblem::new(0.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, POINTS, 7, 0.02, 2).unwrap();
    let g = run_ggn(&p, &d, &GgnConfig::default()).unwrap();
    let n = run_nt(&p, &d, &NtConfig::default()).unwrap();
    assert_eq!(g.termination, Termination::Discrepancy);
    assert_eq!(n.termination, Termination::Discrepancy);
    assert!(n.final_i3 <= n.threshold);
}

/// The two-level `η₁` is the exact `h/2` gap of `I₁`; `η₂` tracks that of `I₂`.
#[test]
fn two_level_estimates_equal_refined_gaps() {
    for obs in [POINTS, ObservationKind::L2] {
        let p = ModelProblem::new(100.0).unwrap();
        let d = simulate_data(&p, SyntheticCase::B, obs, 7, 0.01, 5).unwrap();
        // base point lives on the coarse mesh in both solves
        let (cq, cv, _) = spaces(3, &d);
        let q_old = Field::interpolate(&cq, |x, y| 1.0 + x * y);
        let u_old = Field::interpolate(&cv, |x, y| 0.1 * (x * (1.0 - x) * y * (1.0 - y)).sqrt());
        let run = |level: u8| {
            let (qs, vs, md) = spaces(level, &d);
            let sub = Subproblem::new(p, &qs, &vs, &md, &q_old, &u_old, None).unwrap();
            let sol = solve_kkt(&sub, 40.0).unwrap();
            (sub, sol)
        };
        let (sub, sol) = run(3);
        let (e1, e2) = estimate_two_level(&sub, &sol, &d, true).unwrap();
        let coarse = compute_qoi(&sub, &sol, 0.0).unwrap();
        let (fsub, fsol) = run(4);
        let fine = compute_qoi(&fsub, &fsol, 0.0).unwrap();
        let (g1, g2) = (fine.i1 - coarse.i1, fine.i2 - coarse.i2);
        assert!((e1.value - g1).abs() <= 1e-9 * coarse.i1.abs().max(1e-3), "{obs:?}: eta1 {} gap {g1}", e1.value);
        let e2 = e2.unwrap().value;
        // η₂ carries the linearization of I₂ and is only exact to second order
        assert!((e2 - g2).abs() <= 0.35 * g2.abs() + 1e-12, "{obs:?}: eta2 {e2} gap {g2}");
        assert!((e1.signed.iter().sum::<f64>() - e1.value).abs() <= 1e-14 * e1.value.abs().max(1.0));
    }
}

#[test]
fn bundle_round_trip_and_determinism() {
    let p = ModelProblem::new(10.0).unwrap();
    for obs in [POINTS, ObservationKind::L2] {
        let d = simulate_data(&p, SyntheticCase::C, obs, 6, 0.03, 11).unwrap();
        let again = simulate_data(&p, SyntheticCase::C, obs, 6, 0.03, 11).unwrap();
        assert_eq!(d.observed, again.observed);
        assert_eq!(d.delta, again.delta);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &d, "abc").unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.observed, d.observed);
        assert_eq!(back.q_dagger, d.q_dagger);
        assert_eq!(back.u_dagger, d.u_dagger);
        assert_eq!(back.delta, d.delta);
        assert_eq!((back.case, back.obs, back.zeta, back.noise, back.seed), (d.case, d.obs, d.zeta, d.noise, d.seed));
        assert!((d.recompute_delta() - d.delta).abs() <= 1e-15 * d.delta);
    }
}

#[test]
fn runs_are_reproducible() {
    let p = ModelProblem::new(100.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, POINTS, 7, 0.01, 9).unwrap();
    let a = run_ggn(&p, &d, &GgnConfig::default()).unwrap();
    let b = run_ggn(&p, &d, &GgnConfig::default()).unwrap();
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.q.coef(), b.q.coef());
}

#[test]
fn point_noise_is_bounded_and_delta_is_its_norm() {
    let p = ModelProblem::new(100.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, POINTS, 7, 0.04, 3).unwrap();
    let Observed::Point { g, g_delta, points } = &d.observed else { unreachable!() };
    assert_eq!(points.len(), 81);
    let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(g.iter().zip(g_delta).all(|(a, b)| (a - b).abs() <= 0.04 * gmax));
    let norm = g.iter().zip(g_delta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!((norm - d.delta).abs() <= 1e-15);
}

#[test]
fn zero_iterate_is_monotone() {
    let p = ModelProblem::new(100.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, POINTS, 6, 0.01, 1).unwrap();
    let (qs, vs, _) = spaces(2, &d);
    let (lhs, rhs, ok) = check_monotonicity(&Field::zeros(&qs), &Field::zeros(&vs), &d);
    assert_eq!(lhs, 0.0);
    assert!(ok && rhs > 0.0);
}

/// With `τ = 0.5` the parameter conditions fail: the checked entry point
/// refuses to run and the unchecked one carries a warning. Every accepted
/// step still records its own bound check.
#[test]
fn sabotaged_tau_is_rejected_and_flagged() {
    let p = ModelProblem::new(100.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, POINTS, 8, 0.01, 1).unwrap();
    let cfg = GgnConfig { tau: 0.5, tau_beta: 0.45, tau_beta_tilde: 0.3, max_level: 5, ..GgnConfig::default() };
    assert!(run_ggn(&p, &d, &cfg).is_err());
    let r = run_ggn_unchecked(&p, &d, &cfg).unwrap();
    assert!(r.warnings.iter().any(|w| w.contains("monotonicity bound is not guaranteed")), "{:?}", r.warnings);
    for s in &r.steps {
        let (lhs, rhs, ok) = (s.mono_lhs, s.mono_rhs, s.monotone());
        assert_eq!(ok, lhs <= rhs);
    }
}

/// A reference solution shrunk by a factor 10 makes the bound fail and the
/// report must say so.
#[test]
fn violated_bound_is_reported() {
    let p = ModelProblem::new(100.0).unwrap();
    let mut d = simulate_data(&p, SyntheticCase::A, POINTS, 8, 0.01, 1).unwrap();
    d.q_dagger.values.iter_mut().for_each(|v| *v *= 0.1);
    d.u_dagger.values.iter_mut().for_each(|v| *v *= 0.1);
    let r = run_ggn(&p, &d, &GgnConfig::default()).unwrap();
    assert!(!r.monotone());
    assert!(r.warnings.iter().any(|w| w.starts_with("monotonicity bound violated")), "{:?}", r.warnings);
}
