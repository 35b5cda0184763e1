mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use taylor_sdp::linalg;
use taylor_sdp::model::LqgbProblem;
use taylor_sdp::riccati::{gain_cancellation, sdare_residual, solve_dare, solve_sdare, LiftedCost};
use taylor_sdp::Error;

const TOL: f64 = 1e-10;

fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

/// Two states, one control, two channels; F near the identity so that most
/// draws are open-loop unstable but stabilizable.
fn arb_problem() -> impl Strategy<Value = LqgbProblem> {
    (
        prop::collection::vec(-0.3..0.3f64, 4),
        prop::collection::vec(-1.0..1.0f64, 2),
        0.1..2.0f64,
        0.1..2.0f64,
        prop::collection::vec(-0.25..0.25f64, 8),
        prop::collection::vec(-0.25..0.25f64, 4),
    )
        .prop_map(|(f, g, q, r, c, d)| {
            let f = mat(2, 2, &[1.0 + f[0], f[1], f[2], 1.0 + f[3]]);
            let g = mat(2, 1, &[g[0], 1.0 + g[1].abs()]);
            LqgbProblem::new(
                f,
                g,
                DMatrix::identity(2, 2) * q,
                None,
                mat(1, 1, &[r]),
                vec![mat(2, 2, &c[..4]), mat(2, 2, &c[4..])],
                vec![mat(2, 1, &d[..2]), mat(2, 1, &d[2..])],
            )
            .unwrap()
        })
}

fn solver_failure(e: &Error) -> bool {
    e.is_solver_failure()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dare_solutions_stabilize(problem in arb_problem()) {
        match solve_dare(&problem, TOL, 500) {
            Ok(s) => {
                prop_assert!(s.closed_loop_spectral_radius < 1.0);
                prop_assert!(s.residual <= 1e-8 * linalg::spectral_norm(&s.p).max(1.0));
            }
            Err(e) => prop_assert!(solver_failure(&e), "{e}"),
        }
    }

    #[test]
    fn converged_sdare_runs_satisfy_every_identity(problem in arb_problem()) {
        let s = match solve_sdare(&problem, TOL, 500) {
            Ok(s) => s,
            Err(e) => {
                prop_assert!(solver_failure(&e), "{e}");
                return Ok(());
            }
        };
        let norm = linalg::spectral_norm(&s.p);
        let (cost, gain) = sdare_residual(&s.p, &s.k, &problem).unwrap();
        prop_assert!(cost <= 10.0 * TOL * norm && gain <= 10.0 * TOL * norm.max(1.0), "{cost} {gain}");
        prop_assert!(linalg::spectral_norm(&gain_cancellation(&s.p, &s.k, &problem)) <= 1e-8 * norm);

        for pair in s.iterates.windows(2) {
            let step = &pair[1] - &pair[0];
            prop_assert!(linalg::min_symmetric_eigenvalue(&step) >= -1e-9 * linalg::spectral_norm(&pair[1]));
            let lifted = LiftedCost::new(&problem, &pair[1]).block() - LiftedCost::new(&problem, &pair[0]).block();
            prop_assert!(linalg::min_symmetric_eigenvalue(&lifted) >= -1e-9 * linalg::spectral_norm(&pair[1]));
        }
    }

    #[test]
    fn noise_never_lowers_the_kernel(problem in arb_problem()) {
        if let (Ok(noisy), Ok(quiet)) = (solve_sdare(&problem, TOL, 500), solve_dare(&problem, TOL, 500)) {
            let gap = linalg::min_symmetric_eigenvalue(&(&noisy.p - &quiet.p));
            prop_assert!(gap >= -1e-9 * linalg::spectral_norm(&noisy.p));
        }
    }
}

#[test]
fn scaling_the_noise_up_eventually_diverges() {
    let base = common::dlqgb().base;
    assert!(solve_sdare(&base, TOL, 500).is_ok());
    let err = solve_sdare(&base.with_noise_scaled(10.0), TOL, 500).unwrap_err();
    assert!(matches!(err.root(), Error::IterationDiverged { .. }), "{err}");
}

#[test]
fn noiseless_problem_needs_no_lifting() {
    let base = common::pendulum().base.without_noise();
    let s = solve_sdare(&base, TOL, 500).unwrap();
    let d = solve_dare(&base, TOL, 500).unwrap();
    assert!(s.iterations <= 1);
    assert!((&s.p - &d.p).amax() <= 1e-9 * d.p.amax());
}
