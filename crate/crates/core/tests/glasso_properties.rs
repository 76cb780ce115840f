use nalgebra::DMatrix;
use proptest::prelude::*;
use tvgraph::glasso::{kkt_residual, lambda_grid, lambda_max, regularization_path, Glasso, PenaltySpec, SolverOptions};
use tvgraph::{CovarianceMatrix, SymmetricMatrix};

fn random_cov(p: usize, entries: &[f64]) -> CovarianceMatrix {
    let a = DMatrix::from_row_slice(p, p, &entries[..p * p]);
    let m = &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.2;
    CovarianceMatrix::new(SymmetricMatrix::new(m).unwrap()).unwrap()
}

fn cov_strategy(p: usize) -> impl Strategy<Value = CovarianceMatrix> {
    prop::collection::vec(-1.5f64..1.5, p * p).prop_map(move |v| random_cov(p, &v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn converged_fits_certify_optimality(s in cov_strategy(6), frac in 0.02f64..0.9, pen_diag in any::<bool>()) {
        let lambda = frac * lambda_max(&s);
        let penalty = PenaltySpec::new(lambda, pen_diag).unwrap();
        let fit = Glasso::default().fit(&s, penalty).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.kkt_residual <= 1e-6);
        prop_assert!(fit.objective <= fit.initial_objective + 1e-9);
        // The reported residual is reproducible from (S, Θ) alone.
        let again = kkt_residual(&s, &fit.theta, &penalty).unwrap();
        prop_assert!((again - fit.kkt_residual).abs() < 1e-9);
        // Dual feasibility |w_ij − s_ij| ≤ λ off the diagonal; w_ii = s_ii (+ λ).
        let w = fit.sigma.matrix();
        for i in 0..6 {
            let shift = if pen_diag { lambda } else { 0.0 };
            prop_assert!((w.get(i, i) - s.get(i, i) - shift).abs() < 1e-5);
            for j in 0..6 {
                if i != j {
                    prop_assert!((w.get(i, j) - s.get(i, j)).abs() <= lambda + 1e-5);
                }
            }
        }
    }

    #[test]
    fn warm_path_equals_cold_fits(s in cov_strategy(5)) {
        let grid = lambda_grid(lambda_max(&s), 8, 0.05);
        let path = regularization_path(&s, &grid, false, SolverOptions::default()).unwrap();
        let solver = Glasso::default();
        let mut prev_l1 = 0.0;
        for (fit, &lambda) in path.iter().zip(&grid) {
            let cold = solver.fit(&s, PenaltySpec::off_diagonal(lambda)).unwrap();
            prop_assert!(fit.theta.matrix().max_abs_diff(cold.theta.matrix()) < 1e-4);
            // Decreasing λ never shrinks the penalized norm.
            prop_assert!(fit.l1_norm() >= prev_l1 - 1e-6);
            prev_l1 = fit.l1_norm();
        }
    }

    #[test]
    fn screening_gives_inverse_diagonal(s in cov_strategy(5), extra in 0.0f64..2.0) {
        let lambda = lambda_max(&s) * (1.0 + extra);
        let fit = Glasso::default().fit(&s, PenaltySpec::off_diagonal(lambda)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 1.0 / s.get(i, i) } else { 0.0 };
                prop_assert!((fit.theta.get(i, j) - expected).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn unpenalized_fit_is_the_inverse() {
    let s = random_cov(4, &[0.3, -1.0, 0.2, 0.7, 1.1, 0.4, -0.5, 0.9, -0.2, 0.6, 1.3, -0.8, 0.5, 0.1, -0.9, 1.2]);
    let fit = Glasso::default().fit(&s, PenaltySpec::off_diagonal(0.0)).unwrap();
    let inv = s.matrix().inverse_spd().unwrap();
    assert!(fit.theta.matrix().max_abs_diff(&inv) < 1e-10);
}
