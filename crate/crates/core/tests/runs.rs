//! Invariants along complete runs of both solvers.

use ggn::baseline::{run_nt, NtConfig};
use ggn::driver::{run_ggn, GgnConfig, Phase, RunReport, Termination};
use ggn::problem::{simulate_data, ModelProblem, ObservationKind, SyntheticCase};

fn ggn_invariants(r: &RunReport) {
    for w in r.rows.windows(2) {
        assert!(w[1].rho >= w[0].rho, "rho decreased: {} -> {}", w[0].rho, w[1].rho);
        if w[0].k == w[1].k {
            assert!(w[1].nodes >= w[0].nodes, "mesh coarsened inside step {}", w[0].k);
        }
    }
    for s in &r.steps {
        assert!(s.gate_forced || s.eta1.abs() <= s.gate, "step {}: |eta1| = {} > {}", s.k, s.eta1.abs(), s.gate);
    }
    if r.termination == Termination::Discrepancy {
        assert!(r.final_i3 <= r.threshold);
    }
    assert_eq!(r.rows.iter().filter(|x| x.phase == Phase::Accept).count(), r.steps.len());
}

#[test]
fn ggn_invariants_across_cases() {
    let cases = [
        (SyntheticCase::A, ObservationKind::L2, 100.0, 0.01),
        (SyntheticCase::B, ObservationKind::Point { n_side: 9 }, 10.0, 0.02),
        (SyntheticCase::C, ObservationKind::Point { n_side: 9 }, 500.0, 0.01),
        (SyntheticCase::C, ObservationKind::L2, 1.0, 0.04),
    ];
    for (case, obs, zeta, noise) in cases {
        let p = ModelProblem::new(zeta).unwrap();
        let d = simulate_data(&p, case, obs, 7, noise, 2).unwrap();
        let r = run_ggn(&p, &d, &GgnConfig::default()).unwrap();
        ggn_invariants(&r);
        assert_eq!(r.termination, Termination::Discrepancy, "{case:?} {obs:?} zeta {zeta}");
    }
}

#[test]
fn nt_stops_inside_its_band() {
    let cfg = NtConfig::default();
    for zeta in [1.0, 100.0] {
        let p = ModelProblem::new(zeta).unwrap();
        let d = simulate_data(&p, SyntheticCase::A, ObservationKind::Point { n_side: 9 }, 7, 0.01, 1).unwrap();
        let r = run_nt(&p, &d, &cfg).unwrap();
        assert_eq!(r.method, "NT");
        assert_eq!(r.termination, Termination::Discrepancy);
        let d2 = d.delta * d.delta;
        assert!(r.final_i3 >= 0.0 && r.final_i3 <= cfg.tau_hi * cfg.tau_hi * d2);
        assert!(r.final_i3 >= cfg.tau_lo * cfg.tau_lo * d2);
        for row in &r.rows {
            assert!((row.i1 - row.i2 - row.reg).abs() <= 1e-12 * row.i1.max(1.0));
        }
    }
}

#[test]
fn noise_free_data_is_rejected() {
    let p = ModelProblem::new(100.0).unwrap();
    let d = simulate_data(&p, SyntheticCase::A, ObservationKind::Point { n_side: 9 }, 6, 0.0, 1).unwrap();
    assert!(run_ggn(&p, &d, &GgnConfig::default()).is_err());
}
