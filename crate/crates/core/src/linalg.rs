//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// `exp(j * 2 * pi * cycles)`.
#[inline]
pub fn cis_cycles(cycles: f64) -> Complex64 {
    let (s, c) = (std::f64::consts::TAU * cycles).sin_cos();
    Complex64::new(c, s)
}

/// Moore-Penrose pseudo-inverse of a full-column-rank matrix via SVD.
///
/// Returns `None` when the ratio of largest to smallest singular value
/// exceeds `max_condition`.
pub fn pinv_checked(a: &CMatrix, max_condition: f64) -> Option<CMatrix> {
    let svd = a.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > max_condition {
        return None;
    }
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    // pinv = V diag(1/s) U^H
    let mut ut_scaled = u.adjoint();
    for (r, &sv) in s.iter().enumerate() {
        let inv = 1.0 / sv;
        ut_scaled.row_mut(r).iter_mut().for_each(|x| *x *= inv);
    }
    Some(v_t.adjoint() * ut_scaled)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted ascending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Numerical rank from singular values with relative tolerance.
pub fn real_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = a.clone().singular_values();
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Standard circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    use rand_distr::{Distribution, StandardNormal};
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}
