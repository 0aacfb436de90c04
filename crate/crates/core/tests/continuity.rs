mod common;

use cma_core::continuity::{run_homotopy, HomotopyState, SolveConfig};
use cma_core::presets::{build_problem, ChiSpec, MetricPreset, PsiSpec};
use common::grid;

fn suite() -> Vec<PsiSpec> {
    vec![
        PsiSpec::Manufactured {
            seed: Some(3),
            amplitude: 0.04,
        },
        PsiSpec::Lifted {
            factor: 1.1,
            modulation: 0.3,
        },
        PsiSpec::Lifted {
            factor: 0.9,
            modulation: 0.3,
        },
    ]
}

#[test]
fn b_stays_within_log_gap_across_presets() {
    let grid = grid(2, 8);
    let cfg = SolveConfig::default();
    for preset in MetricPreset::ALL {
        for psi in suite() {
            for alpha in 1..=2 {
                let built = build_problem(&grid, preset, &ChiSpec::Identity, &psi, alpha).unwrap();
                let data = built.data;
                let gap = data
                    .varphi()
                    .unwrap()
                    .zip_map(&data.psi, |a, b| (a.ln() - b.ln()).abs())
                    .unwrap()
                    .max();
                let trace = run_homotopy(&data, &HomotopyState::zero(&grid), &cfg).unwrap();
                assert!((trace.log_gap - gap).abs() < 1e-12);
                for e in &trace.entries {
                    assert!(e.b.abs() <= gap + 1e-8, "{preset:?} {psi:?} alpha={alpha}: b={} gap={gap}", e.b);
                }
                let last = trace.entries.last().unwrap();
                assert_eq!(last.t, 1.0);
                assert!(last.res_inf <= cfg.tol_newton);
                assert!(trace.final_state.u.mean().unwrap().abs() < 1e-14);
                if let PsiSpec::Manufactured { .. } = psi {
                    let err = trace.final_state.u.sub(&built.u_star.unwrap()).unwrap().sup_abs();
                    assert!(err < 1e-8, "{preset:?} alpha={alpha}: recovery {err}");
                }
            }
        }
    }
}

#[test]
fn b_is_nonpositive_when_psi_dominates_varphi() {
    let grid = grid(2, 8);
    for preset in MetricPreset::ALL {
        for (factor, modulation) in [(1.0, 0.5), (1.3, 0.0), (1.05, 0.8)] {
            for alpha in 1..=2 {
                let psi = PsiSpec::Lifted { factor, modulation };
                let data = build_problem(&grid, preset, &ChiSpec::Identity, &psi, alpha).unwrap().data;
                let trace = run_homotopy(&data, &HomotopyState::zero(&grid), &SolveConfig::default()).unwrap();
                for e in &trace.entries {
                    assert!(e.b <= 1e-10, "{preset:?} factor={factor} alpha={alpha}: b={}", e.b);
                }
            }
        }
    }
}
