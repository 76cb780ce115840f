use proptest::prelude::*;
use tvgraph::calculus::MatrixCurve;
use tvgraph::data::uniform_grid;
use tvgraph::devlab::{bias_curve, mgf_product_normals, tail_grid, CovarianceSpec, TailGridConfig};
use tvgraph::kernel::{KernelFamily, KernelSpec};
use tvgraph::SymmetricMatrix;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        Just(KernelFamily::Boxcar),
        Just(KernelFamily::Epanechnikov),
        Just(KernelFamily::TruncatedGaussian)
    ]
}

proptest! {
    #[test]
    fn mgf_sign_symmetry(t in -0.4f64..0.4, si in 0.3f64..1.5, sj in 0.3f64..1.5, rho in -1.0f64..1.0) {
        let a = mgf_product_normals(t, si, sj, rho);
        let b = mgf_product_normals(-t, si, sj, -rho);
        match (a, b) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-12 * x),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "domain differs under sign flip"),
        }
    }

    #[test]
    fn mgf_dominates_jensen(t in -0.4f64..0.4, si in 0.3f64..1.5, sj in 0.3f64..1.5, rho in -1.0f64..1.0) {
        if let Ok(m) = mgf_product_normals(t, si, sj, rho) {
            prop_assert!(m >= (t * rho * si * sj).exp() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn bias_of_affine_curves_is_exact(a in -2.0f64..2.0, b in -2.0f64..2.0, t0 in 0.0f64..1.0, h in 0.02f64..1.5, fam in family(), n in 50usize..400) {
        let curve = MatrixCurve::polynomial(vec![
            SymmetricMatrix::from_diagonal(&[a]).unwrap(),
            SymmetricMatrix::from_diagonal(&[b]).unwrap(),
        ]);
        let Ok(points) = bias_curve(&curve, (0, 0), t0, fam, &[h], n) else {
            return Ok(());
        };
        // Independent window average: Σ K(·) (a + b t_k) / Σ K(·) − (a + b t0).
        let spec = KernelSpec::new(fam, h).unwrap();
        let times = uniform_grid(n);
        let (mut num, mut den) = (0.0, 0.0);
        for &t in &times {
            let k = spec.value((t - t0) / h);
            num += k * (t - t0);
            den += k;
        }
        let expected = b * num / den;
        prop_assert!((points[0].bias - expected).abs() < 1e-10);
    }
}

#[test]
fn iid_tails_have_a_positive_envelope() {
    let report = tail_grid(&TailGridConfig {
        n_values: vec![100, 200, 400, 800],
        replicates: 4000,
        covariance: CovarianceSpec::Constant {
            matrix: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
        },
        entry: (0, 1),
        kernel: KernelFamily::TruncatedGaussian,
        ..Default::default()
    })
    .unwrap();
    let env = report.envelope.expect("nonzero tails");
    assert!(env.rate_constant > 0.0, "{env:?}");
    assert!(report.monotone_fraction >= 0.99);
}
