mod common;

use approx::assert_relative_eq;
use common::{expm_oracle, lyapunov_quadrature, simpson_vec};
use frame_langevin::linalg::{g_kernel, l_matrix, lyapunov_solve, matrix_exp, min_sym_eig, polar, sym_sqrt_psd, Mat};
use frame_langevin::Error;
use nalgebra::{DMatrix, SMatrix};
use proptest::prelude::*;

fn mat2(v: [f64; 4]) -> Mat<2> {
    Mat::<2>::from_row_slice(&v)
}

/// Random matrix with symmetric part bounded below by `lo`.
fn stable<const N: usize>(entries: &[f64], lo: f64) -> Mat<N> {
    let a = Mat::<N>::from_iterator(entries.iter().cloned().take(N * N));
    let shift = lo - min_sym_eig(&a);
    a + Mat::<N>::identity() * shift.max(0.0)
}

fn spd<const N: usize>(entries: &[f64]) -> Mat<N> {
    let a = Mat::<N>::from_iterator(entries.iter().cloned().take(N * N));
    a * a.transpose()
}

#[test]
fn exp_diagonal() {
    let e = matrix_exp(&mat2([-1.0, 0.0, 0.0, -2.0])).unwrap();
    assert_relative_eq!(e, mat2([(-1.0f64).exp(), 0.0, 0.0, (-2.0f64).exp()]), max_relative = 1e-14);
}

#[test]
fn exp_decay_bound() {
    let a = mat2([1.2, 0.7, -0.3, 0.9]);
    let g1 = min_sym_eig(&a);
    assert!(g1 > 0.0);
    for t in [0.1, 1.0, 10.0] {
        let e = matrix_exp(&(-a * t)).unwrap();
        let norm2 = e.singular_values().max();
        assert!(norm2 <= (-g1 * t).exp() * (1.0 + 1e-12), "t={t}: {norm2} > {}", (-g1 * t).exp());
    }
}

proptest! {
    #[test]
    fn exp_matches_oracle(v in proptest::collection::vec(-12.0f64..12.0, 9)) {
        let a = Mat::<3>::from_iterator(v);
        prop_assume!(a.norm() <= 50.0);
        let e = matrix_exp(&a).unwrap();
        let o = expm_oracle(&a);
        prop_assert!((e - o).norm() <= 1e-12 * o.norm().max(1.0) * 10.0, "{} vs {}", e, o);
    }

    #[test]
    fn exp_symmetric_matches_eigen_oracle(v in proptest::collection::vec(-5.0f64..5.0, 9)) {
        let b = Mat::<3>::from_iterator(v);
        let a = (b + b.transpose()) * 0.5;
        let e = matrix_exp(&a).unwrap();
        let eig = DMatrix::from_iterator(3, 3, a.iter().cloned()).symmetric_eigen();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
        let o = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        let o = Mat::<3>::from_iterator(o.iter().cloned());
        prop_assert!((e - o).norm() <= 1e-12 * o.norm());
    }

    #[test]
    fn exp_inverse(v in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let a = Mat::<2>::from_iterator(v);
        let p = matrix_exp(&a).unwrap() * matrix_exp(&(-a)).unwrap();
        prop_assert!((p - Mat::<2>::identity()).norm() < 1e-11);
    }
}

#[test]
fn exp_overflow_errors() {
    assert!(matches!(matrix_exp(&mat2([1e300, 0.0, 0.0, 1e300])), Err(Error::Overflow(_))));
}

#[test]
fn lyapunov_examples() {
    let j = lyapunov_solve(&Mat::<2>::identity(), &(Mat::<2>::identity() * 2.0)).unwrap();
    assert_relative_eq!(j, Mat::<2>::identity(), epsilon = 1e-14);
    let g = mat2([2.0, 0.0, 0.0, 3.0]);
    let kt = 0.5;
    let j = lyapunov_solve(&g, &(g * (2.0 * kt))).unwrap();
    assert_relative_eq!(j, Mat::<2>::identity() * kt, epsilon = 1e-14);
}

#[test]
fn lyapunov_matches_quadrature() {
    let g = mat2([1.0, 0.5, 0.0, 2.0]);
    let j = lyapunov_solve(&g, &Mat::<2>::identity()).unwrap();
    let q = lyapunov_quadrature(&g, &Mat::<2>::identity(), min_sym_eig(&g));
    assert!((j - q).norm() < 1e-6, "{j} vs {q}");
}

#[test]
fn lyapunov_rejects_unstable() {
    let g = mat2([-1.0, 0.0, 0.0, 1.0]);
    assert!(matches!(lyapunov_solve(&g, &Mat::<2>::identity()), Err(Error::Stability(_))));
}

fn lyap_props<const N: usize>(g: &[f64], s: &[f64]) -> std::result::Result<(), TestCaseError> {
    let gamma = stable::<N>(g, 0.2);
    let sigma = spd::<N>(s);
    let j = lyapunov_solve(&gamma, &sigma).unwrap();
    let res = gamma * j + j * gamma.transpose() - sigma;
    prop_assert!(res.norm() <= 1e-10 * sigma.norm().max(1e-300));
    prop_assert!((j - j.transpose()).norm() <= 1e-12 * j.norm().max(1e-300));
    let lo = DMatrix::from_iterator(N, N, j.iter().cloned()).symmetric_eigenvalues().min();
    prop_assert!(lo >= -1e-10 * j.norm(), "J not PSD: {lo}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn lyapunov_symmetric_psd(
        n in 1usize..=6,
        g in proptest::collection::vec(-2.0f64..2.0, 36),
        s in proptest::collection::vec(-1.0f64..1.0, 36),
    ) {
        match n {
            1 => lyap_props::<1>(&g, &s)?,
            2 => lyap_props::<2>(&g, &s)?,
            3 => lyap_props::<3>(&g, &s)?,
            4 => lyap_props::<4>(&g, &s)?,
            5 => lyap_props::<5>(&g, &s)?,
            _ => lyap_props::<6>(&g, &s)?,
        }
    }

    #[test]
    fn scalar_gamma_closed_form(c in 0.1f64..5.0, s in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let sigma = spd::<3>(&s);
        let j = lyapunov_solve(&(Mat::<3>::identity() * c), &sigma).unwrap();
        prop_assert!((j - sigma / (2.0 * c)).norm() <= 1e-14 * sigma.norm().max(1.0));
    }

    #[test]
    fn g_kernel_symmetry_and_contraction(g in proptest::collection::vec(-2.0f64..2.0, 9), s in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let gamma = stable::<3>(&g, 0.3);
        let k = g_kernel(&gamma).unwrap();
        for nu in 0..3 { for mu in 0..3 { for eta in 0..3 { for xi in 0..3 {
            prop_assert!((k.get(nu, mu, eta, xi) - k.get(mu, nu, xi, eta)).abs() <= 1e-12);
        }}}}
        let sigma = spd::<3>(&s);
        let j = lyapunov_solve(&gamma, &sigma).unwrap();
        prop_assert!((k.contract(&sigma) - j).norm() <= 1e-10 * j.norm().max(1e-12));
    }
}

#[test]
fn g_kernel_identity_gamma() {
    let k = g_kernel(&Mat::<2>::identity()).unwrap();
    for nu in 0..2 {
        for mu in 0..2 {
            for eta in 0..2 {
                for xi in 0..2 {
                    let want = if nu == eta && mu == xi { 0.5 } else { 0.0 };
                    assert!((k.get(nu, mu, eta, xi) - want).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn g_kernel_matches_quadrature() {
    let gamma = mat2([1.3, 0.4, -0.2, 0.8]);
    let k = g_kernel(&gamma).unwrap();
    let y_max = 40.0 / min_sym_eig(&gamma);
    let f = |y: f64| {
        let e = expm_oracle(&(-gamma * y));
        let mut out = vec![];
        for nu in 0..2 {
            for mu in 0..2 {
                for eta in 0..2 {
                    for xi in 0..2 {
                        out.push(e[(nu, eta)] * e[(mu, xi)]);
                    }
                }
            }
        }
        out
    };
    let q = simpson_vec(&f, 0.0, y_max, 1e-9);
    let mut i = 0;
    for nu in 0..2 {
        for mu in 0..2 {
            for eta in 0..2 {
                for xi in 0..2 {
                    assert!((k.get(nu, mu, eta, xi) - q[i]).abs() < 1e-6, "G[{nu}{mu}{eta}{xi}]");
                    i += 1;
                }
            }
        }
    }
}

#[test]
fn l_matrix_examples() {
    let j = mat2([0.7, 0.1, 0.1, 0.4]);
    assert_relative_eq!(l_matrix(&(Mat::<2>::identity() * 3.0), &j).unwrap(), j, epsilon = 1e-15);
    let g = mat2([2.0, 0.3, 0.3, 1.0]);
    let kt = 0.5;
    let jfd = lyapunov_solve(&g, &(g * (2.0 * kt))).unwrap();
    assert_relative_eq!(l_matrix(&g, &jfd).unwrap(), Mat::<2>::identity() * kt, epsilon = 1e-12);
}

#[test]
fn l_matrix_matches_quadrature() {
    let g = mat2([1.0, 0.5, -0.3, 2.0]);
    let sigma = mat2([1.0, 0.2, 0.2, 0.5]);
    let j = lyapunov_solve(&g, &sigma).unwrap();
    let l = l_matrix(&g, &j).unwrap();
    let gi = g.try_inverse().unwrap();
    let f = |y: f64| {
        let e = expm_oracle(&(-g * y));
        (gi * e * sigma * e.transpose() * g.transpose()).iter().cloned().collect::<Vec<f64>>()
    };
    let q = Mat::<2>::from_iterator(simpson_vec(&f, 0.0, 40.0 / min_sym_eig(&g), 1e-9));
    assert!((l - q).norm() < 1e-6);
}

#[test]
fn polar_examples() {
    assert_eq!(polar(&Mat::<2>::identity()).unwrap(), Mat::<2>::identity());
    assert_relative_eq!(polar(&(Mat::<2>::identity() * 2.0)).unwrap(), Mat::<2>::identity(), epsilon = 1e-15);
    assert!(matches!(polar(&Mat::<2>::zeros()), Err(Error::Singular(_))));
}

proptest! {
    #[test]
    fn polar_near_identity(v in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let h = Mat::<3>::identity() + Mat::<3>::from_iterator(v) * 1e-4;
        let q = polar(&h).unwrap();
        prop_assert!((q.transpose() * q - Mat::<3>::identity()).norm() <= 1e-14);
        prop_assert!((q - h).norm() <= 2e-4 * 3.0);
        let svd = h.svd(true, true);
        let o: SMatrix<f64, 3, 3> = svd.u.unwrap() * svd.v_t.unwrap();
        prop_assert!((q - o).norm() <= 1e-12);
    }

    #[test]
    fn polar_idempotent(t in 0.0f64..6.3, reflect in any::<bool>()) {
        let g = common::o2(t, reflect);
        prop_assert!((polar(&g).unwrap() - g).norm() <= 1e-15);
    }

    #[test]
    fn sqrt_psd_squares_back(v in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let a = spd::<3>(&v);
        let r = sym_sqrt_psd(&a);
        prop_assert!((r * r - a).norm() <= 1e-10 * a.norm().max(1.0));
        prop_assert!((r - r.transpose()).norm() == 0.0);
    }
}
