//! Property tests of the structural invariants.

use std::sync::Arc;

use ggn::config::ExperimentConfig;
use ggn::estimators::{compute_qoi, mark_fraction};
use ggn::fem::{riesz_dual_norm, Field, Space, SpaceKind};
use ggn::mesh::{uniform_mesh, QuadMesh};
use ggn::problem::{simulate_data, MeshData, ModelProblem, NoisyData, ObservationKind, SyntheticCase};
use ggn::subsolver::{reg_norm2, solve_kkt, Subproblem};
use ggn::theory::BlockSystem;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Refines a level-2 mesh along a sequence of pseudo-random marks.
fn adaptive_mesh(marks: &[usize], rounds: usize) -> Vec<QuadMesh> {
    let mut chain = vec![uniform_mesh(2)];
    for r in 0..rounds {
        let m = chain.last().unwrap();
        let picked: Vec<usize> = marks.iter().skip(r).step_by(rounds.max(1)).map(|k| k % m.num_cells()).collect();
        chain.push(m.refine(&picked).unwrap());
    }
    chain
}

fn small_data() -> &'static NoisyData {
    static DATA: std::sync::OnceLock<NoisyData> = std::sync::OnceLock::new();
    DATA.get_or_init(|| {
        let p = ModelProblem::new(100.0).unwrap();
        simulate_data(&p, SyntheticCase::A, ObservationKind::Point { n_side: 9 }, 6, 0.01, 1).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn meshes_stay_nested_and_one_irregular(marks in prop::collection::vec(0usize..10_000, 1..12), rounds in 1usize..4) {
        let chain = adaptive_mesh(&marks, rounds);
        for w in chain.windows(2) {
            prop_assert!(w[1].refines(&w[0]));
            prop_assert!(w[1].num_vertices() >= w[0].num_vertices());
        }
        for m in &chain {
            prop_assert!(m.is_one_irregular());
            prop_assert!((m.total_area() - 1.0).abs() < 1e-14);
            for v in 0..m.num_vertices() {
                if let Some([a, b]) = m.hanging_parents(v) {
                    let (p, pa, pb) = (m.vertex(v), m.vertex(a), m.vertex(b));
                    prop_assert!((p[0] - 0.5 * (pa[0] + pb[0])).abs() < 1e-15);
                    prop_assert!((p[1] - 0.5 * (pa[1] + pb[1])).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn riesz_representer_round_trips(marks in prop::collection::vec(0usize..10_000, 0..6), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mesh = Arc::new(adaptive_mesh(&marks, 1).pop().unwrap());
        let vs = Space::new(mesh, SpaceKind::V);
        let w = Field::interpolate(&vs, |x, y| x * (1.0 - x) * y * (1.0 - y) * (1.0 + a * x + b * y * y));
        let ell = vs.stiffness().mul_vec(w.coef());
        let (norm, rep) = riesz_dual_norm(&vs, &ell).unwrap();
        let scale = 1.0 + w.coef().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (r, x) in rep.coef().iter().zip(w.coef()) {
            prop_assert!((r - x).abs() <= 1e-10 * scale);
        }
        prop_assert!((norm - w.grad_norm2().max(0.0).sqrt()).abs() <= 1e-10 * scale);
    }

    #[test]
    fn marking_is_a_minimal_dorfler_set(ind in prop::collection::vec(0.0f64..10.0, 1..60), frac in 0.05f64..1.0) {
        let marked = mark_fraction(&ind, frac, |_| true);
        let total: f64 = ind.iter().sum();
        let got: f64 = marked.iter().map(|&k| ind[k]).sum();
        if total > 0.0 {
            prop_assert!(got >= frac * total * (1.0 - 1e-12));
            // dropping the smallest marked cell falls short
            let smallest = marked.iter().map(|&k| ind[k]).fold(f64::INFINITY, f64::min);
            prop_assert!(got - smallest < frac * total);
            let threshold = smallest;
            for (k, &x) in ind.iter().enumerate() {
                if x > threshold {
                    prop_assert!(marked.contains(&k));
                }
            }
        } else {
            prop_assert!(marked.is_empty());
        }
    }

    #[test]
    fn i1_minus_i2_is_the_regularization(beta in 1e-2f64..1e5, level in 2u8..4, s in 0.0f64..2.0) {
        let d = small_data();
        let p = ModelProblem::new(d.zeta).unwrap();
        let mesh = Arc::new(uniform_mesh(level));
        let qs = Space::new(mesh.clone(), SpaceKind::Q);
        let vs = Space::new(mesh, SpaceKind::V);
        let md = Arc::new(MeshData::new(d, &vs).unwrap());
        let q_old = Field::interpolate(&qs, |x, y| s * (x - y));
        let u_old = Field::interpolate(&vs, |x, y| s * x * y * (1.0 - x) * (1.0 - y));
        let sub = Subproblem::new(p, &qs, &vs, &md, &q_old, &u_old, None).unwrap();
        let sol = solve_kkt(&sub, beta).unwrap();
        let qoi = compute_qoi(&sub, &sol, 1.0).unwrap();
        let reg = reg_norm2(&sub, &sol.q) / beta;
        prop_assert!((qoi.i1 - qoi.i2 - reg).abs() <= 1e-12 * qoi.i1.abs().max(1.0));
        // I₂ decreases as β grows
        let sol2 = solve_kkt(&sub, 4.0 * beta).unwrap();
        prop_assert!(md.misfit2(sol2.u.coef()) <= qoi.i2 * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn block_inverse_is_exact(seed in any::<u64>(), n in 2usize..7, alpha in 1e-3f64..1.0, mu_frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = BlockSystem::random(&mut rng, n + 1, n, n - 1, alpha, mu_frac * alpha).unwrap();
        prop_assert!(sys.inverse_defect().unwrap() <= 1e-10);
        let (lhs, rhs) = sys.identity_ii().unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn config_text_round_trips(
        zeta in 0.0f64..2000.0,
        noise in 0.0f64..0.2,
        seed in any::<u64>(),
        n_side in 1usize..20,
        l2 in any::<bool>(),
        tau_hi in 1.5f64..1.95,
        threads in 1usize..9,
    ) {
        let mut c = ExperimentConfig { zeta, noise, seed, points_per_side: n_side, ..ExperimentConfig::default() };
        let label = if l2 { "l2" } else { "point" };
        prop_assert!(c.set_obs(label));
        c.ggn.theta_hi = tau_hi;
        c.table.threads = threads;
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash(), c.hash());
    }
}
