//! Small dense kernels: matrix exponential, Lyapunov solves, the G kernel,
//! symmetric square roots and the polar factor.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat<const N: usize> = SMatrix<f64, N, N>;
pub type Vecn<const N: usize> = SVector<f64, N>;

fn dyn_mat<const N: usize>(a: &Mat<N>) -> DMatrix<f64> {
    DMatrix::from_iterator(N, N, a.iter().cloned())
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1<const N: usize>(a: &Mat<N>) -> f64 {
    (0..N)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(A) by scaling and squaring around a degree-13 Padé approximant.
pub fn matrix_exp<const N: usize>(a: &Mat<N>) -> Result<Mat<N>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow("non-finite entry in matrix_exp input".into()));
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if s > 1000 {
        return Err(Error::Overflow(format!("norm {nrm:e} too large")));
    }
    let a = a * 2f64.powi(-s);
    let id = Mat::<N>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a2 * a4;
    let b = &PADE13;
    let u_inner = a6 * (a6 * b[13] + a4 * b[11] + a2 * b[9]) + a6 * b[7] + a4 * b[5] + a2 * b[3] + id * b[1];
    let u = a * u_inner;
    let v = a6 * (a6 * b[12] + a4 * b[10] + a2 * b[8]) + a6 * b[6] + a4 * b[4] + a2 * b[2] + id * b[0];
    let num = v + u;
    let den = v - u;
    let mut r = Mat::<N>::from_iterator(
        dyn_mat(&den)
            .lu()
            .solve(&dyn_mat(&num))
            .ok_or_else(|| Error::Singular("Padé denominator".into()))?
            .iter()
            .cloned(),
    );
    for _ in 0..s {
        r = r * r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow("matrix_exp result not finite".into()));
    }
    Ok(r)
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_sym_eig<const N: usize>(a: &Mat<N>) -> f64 {
    let s = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(dyn_mat(&s)).eigenvalues.min()
}

fn check_stable<const N: usize>(gamma: &Mat<N>) -> Result<()> {
    let lo = min_sym_eig(gamma);
    if !(lo > 0.0) {
        return Err(Error::Stability(format!(
            "symmetric part of gamma has eigenvalue {lo:e} <= 0"
        )));
    }
    Ok(())
}

/// Kronecker-sum matrix K with K vec(X) = vec(A X + X A^T), vec in row-major pair order.
fn kron_sum<const N: usize>(a: &Mat<N>) -> DMatrix<f64> {
    let n2 = N * N;
    let mut k = DMatrix::<f64>::zeros(n2, n2);
    for i in 0..N {
        for j in 0..N {
            let row = i * N + j;
            for l in 0..N {
                k[(row, l * N + j)] += a[(i, l)];
                k[(row, i * N + l)] += a[(j, l)];
            }
        }
    }
    k
}

/// Solves A X + X A^T = C with no precondition beyond solvability.
pub fn sylvester_sym<const N: usize>(a: &Mat<N>, c: &Mat<N>) -> Result<Mat<N>> {
    let k = kron_sum(a);
    let rhs = DVector::from_iterator(N * N, (0..N).flat_map(|i| (0..N).map(move |j| (i, j))).map(|(i, j)| c[(i, j)]));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Kronecker sum".into()))?;
    Ok(Mat::<N>::from_fn(|i, j| sol[i * N + j]))
}

/// Solves gamma J + J gamma^T = Sigma.
pub fn lyapunov_solve<const N: usize>(gamma: &Mat<N>, sigma: &Mat<N>) -> Result<Mat<N>> {
    check_stable(gamma)?;
    let mut j = sylvester_sym(gamma, sigma)?;
    if *sigma == sigma.transpose() {
        j = (j + j.transpose()) * 0.5;
    }
    Ok(j)
}

/// The four-index kernel G^{nu mu}_{eta xi}, stored as an n^2 x n^2 matrix
/// with row (nu, mu) and column (eta, xi) in row-major pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct GKernel {
    pub n: usize,
    pub data: DMatrix<f64>,
}

impl GKernel {
    pub fn get(&self, nu: usize, mu: usize, eta: usize, xi: usize) -> f64 {
        self.data[(nu * self.n + mu, eta * self.n + xi)]
    }

    /// G^{nu mu}_{eta xi} X^{eta xi}
    pub fn contract<const N: usize>(&self, x: &Mat<N>) -> Mat<N> {
        assert_eq!(N, self.n);
        let v = DVector::from_iterator(N * N, (0..N * N).map(|r| x[(r / N, r % N)]));
        let y = &self.data * v;
        Mat::<N>::from_fn(|i, j| y[i * N + j])
    }
}

pub fn g_kernel<const N: usize>(gamma: &Mat<N>) -> Result<GKernel> {
    check_stable(gamma)?;
    let inv = kron_sum(gamma)
        .try_inverse()
        .ok_or_else(|| Error::Singular("Kronecker sum".into()))?;
    Ok(GKernel { n: N, data: inv })
}

/// L = gamma^{-1} J gamma^T
pub fn l_matrix<const N: usize>(gamma: &Mat<N>, j: &Mat<N>) -> Result<Mat<N>> {
    let gi = gamma
        .try_inverse()
        .ok_or_else(|| Error::Singular("gamma".into()))?;
    Ok(gi * j * gamma.transpose())
}

/// Symmetric positive semi-definite square root; negative eigenvalues are clamped.
pub fn sym_sqrt_psd<const N: usize>(a: &Mat<N>) -> Mat<N> {
    let s = (a + a.transpose()) * 0.5;
    let e = SymmetricEigen::new(dyn_mat(&s));
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()));
    let r = &e.eigenvectors * d * e.eigenvectors.transpose();
    let r = Mat::<N>::from_iterator(r.iter().cloned());
    (r + r.transpose()) * 0.5
}

/// Nearest orthogonal matrix (polar factor) by Newton iteration X <- (X + X^{-T})/2.
pub fn polar<const N: usize>(h: &Mat<N>) -> Result<Mat<N>> {
    let mut x = *h;
    for _ in 0..100 {
        let inv = x
            .try_inverse()
            .ok_or_else(|| Error::Singular("frame matrix".into()))?;
        let next = (x + inv.transpose()) * 0.5;
        let delta = (next - x).norm();
        x = next;
        if delta <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("frame matrix".into()));
    }
    Ok(x)
}

/// Orthogonality defect ||h^T h - I||_F.
pub fn ortho_defect<const N: usize>(h: &Mat<N>) -> f64 {
    (h.transpose() * h - Mat::<N>::identity()).norm()
}
