//! Dense symmetric linear algebra shared by every estimator: centering,
//! eigendecomposition with a fixed ordering and sign convention, and
//! spectrally thresholded pseudo-inverses of PSD matrices.

use alloc::vec::Vec;

use faer::{Mat, MatRef, Side};

use crate::error::{dim_err, input_err, Error, Result};

/// Relative spectral cutoff used by every pseudo-inverse in the crate.
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Largest tolerated relative asymmetry before a matrix is rejected.
const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues below `-NEG_TOL * w_max` make a matrix "not PSD".
const NEG_TOL: f64 = 1e-6;

/// `C_n = I - 11ᵀ/n`. For `n = 1` this is the 1x1 zero matrix.
pub fn centering_matrix(n: usize) -> Mat<f64> {
    let inv = 1.0 / n as f64;
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// `C_n A`: subtracts each column's mean.
pub fn center_columns(a: MatRef<'_, f64>) -> Mat<f64> {
    let (n, m) = (a.nrows(), a.ncols());
    let mut out = a.to_owned();
    if n == 0 {
        return out;
    }
    for j in 0..m {
        let mean = (0..n).map(|i| a[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// `C_n A C_n` for square `A`.
pub fn double_center(a: MatRef<'_, f64>) -> Mat<f64> {
    let left = center_columns(a);
    let right = center_columns(left.transpose());
    right.transpose().to_owned()
}

/// Column means of `a`.
pub fn column_means(a: MatRef<'_, f64>) -> Vec<f64> {
    let n = a.nrows().max(1) as f64;
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)]).sum::<f64>() / n)
        .collect()
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(libm::fabs(a[(i, j)]));
        }
    }
    m
}

pub fn frobenius_norm(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    libm::sqrt(s)
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let sv = a.singular_values().map_err(|_| Error::NoConvergence)?;
    Ok(sv.into_iter().fold(0.0, f64::max))
}

pub fn trace(a: MatRef<'_, f64>) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Symmetric eigendecomposition, eigenvalues in descending order.
///
/// Each eigenvector is signed so that its first non-negligible coordinate
/// is positive; this makes decompositions of the same matrix comparable.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `values`.
    pub vectors: Mat<f64>,
}

impl SymEigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `V diag(f(w)) Vᵀ` over the columns selected by `keep`.
    pub fn apply_spectral(&self, mut f: impl FnMut(f64) -> Option<f64>) -> Mat<f64> {
        let n = self.vectors.nrows();
        let mut scaled = Mat::<f64>::zeros(n, self.len());
        for (k, &w) in self.values.iter().enumerate() {
            if let Some(s) = f(w) {
                for i in 0..n {
                    scaled[(i, k)] = self.vectors[(i, k)] * s;
                }
            }
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(out.as_ref())
    }

    /// `V diag(w) Vᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        self.apply_spectral(Some)
    }
}

fn check_square_finite(a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(dim_err!("expected a square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(input_err!("non-finite entry at ({i}, {j})"));
            }
        }
    }
    Ok(())
}

pub fn sym_eig(a: MatRef<'_, f64>) -> Result<SymEigen> {
    check_square_finite(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEigen { values: Vec::new(), vectors: Mat::zeros(0, 0) });
    }
    let scale = max_abs(a);
    for j in 0..n {
        for i in 0..j {
            if libm::fabs(a[(i, j)] - a[(j, i)]) > SYMMETRY_TOL * scale {
                return Err(input_err!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    let sym = symmetrize(a);
    let evd = sym.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let mut values = Vec::with_capacity(n);
    let mut vectors = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        let src = n - 1 - k;
        values.push(s[src]);
        let col_max = (0..n).map(|i| libm::fabs(u[(i, src)])).fold(0.0, f64::max);
        let lead = (0..n)
            .map(|i| u[(i, src)])
            .find(|v| libm::fabs(*v) > 1e-8 * col_max)
            .unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, k)] = sign * u[(i, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Eigendecomposition of a PSD matrix together with the retained-range
/// cutoff; negative noise below `-1e-6 w_max` is tolerated, anything below
/// is reported as [`Error::NotPsd`].
fn psd_eig(a: MatRef<'_, f64>, rtol: f64) -> Result<(SymEigen, f64)> {
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(input_err!("rtol must lie in (0, 1), got {rtol}"));
    }
    let eig = sym_eig(a)?;
    let w_max = eig.values.first().copied().unwrap_or(0.0);
    let w_min = eig.values.last().copied().unwrap_or(0.0);
    if w_min < 0.0 && (w_max <= 0.0 || w_min < -NEG_TOL * w_max) {
        return Err(Error::NotPsd { min: w_min, max: w_max });
    }
    let cutoff = if w_max > 0.0 { rtol * w_max } else { f64::INFINITY };
    Ok((eig, cutoff))
}

/// Number of eigenvalues of a PSD matrix above `rtol * w_max`.
pub fn numerical_rank(a: MatRef<'_, f64>, rtol: f64) -> Result<usize> {
    let (eig, cutoff) = psd_eig(a, rtol)?;
    Ok(eig.values.iter().filter(|&&w| w > cutoff).count())
}

/// Moore–Penrose pseudo-inverse of a PSD matrix with eigenvalues at or
/// below `rtol * w_max` treated as zero.
pub fn pinv_psd(a: MatRef<'_, f64>, rtol: f64) -> Result<Mat<f64>> {
    let (eig, cutoff) = psd_eig(a, rtol)?;
    Ok(eig.apply_spectral(|w| (w > cutoff).then(|| 1.0 / w)))
}

/// Pseudo-inverse square root `A^{+1/2}` of a PSD matrix, thresholded as in
/// [`pinv_psd`].
pub fn inv_sqrt_psd(a: MatRef<'_, f64>, rtol: f64) -> Result<Mat<f64>> {
    let (eig, cutoff) = psd_eig(a, rtol)?;
    Ok(eig.apply_spectral(|w| (w > cutoff).then(|| 1.0 / libm::sqrt(w))))
}

/// `max_ij |B K Bᵀ - I|`, the Gram-metric orthonormality defect of the rows
/// of `b`.
pub fn gram_orthonormality_defect(b: MatRef<'_, f64>, k: MatRef<'_, f64>) -> f64 {
    let g = b * k * b.transpose();
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max(libm::fabs(g[(i, j)] - target));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = rng_from_seed(seed);
        Mat::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn rel_err(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
        let d = a - b;
        frobenius_norm(d.as_ref()) / frobenius_norm(b).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn centering_matrix_n2() {
        let c = centering_matrix(2);
        assert_eq!(c[(0, 0)], 0.5);
        assert_eq!(c[(0, 1)], -0.5);
        assert_eq!(c[(1, 0)], -0.5);
        assert_eq!(c[(1, 1)], 0.5);
    }

    #[test]
    fn centering_matrix_n1_is_zero() {
        let c = centering_matrix(1);
        assert_eq!(c[(0, 0)], 0.0);
    }

    #[test]
    fn centering_projector_properties() {
        for n in 2..=50 {
            let c = centering_matrix(n);
            let ones = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
            let c1 = &c * &ones;
            assert!(max_abs(c1.as_ref()) < 1e-12);
            let cc = &c * &c;
            assert!(max_abs((&cc - &c).as_ref()) < 1e-12);
            let ct = c.transpose().to_owned();
            assert!(max_abs((&ct - &c).as_ref()) == 0.0);
            let eig = sym_eig(c.as_ref()).unwrap();
            let zeros = eig.values.iter().filter(|w| w.abs() < 1e-10).count();
            assert_eq!(zeros, 1, "n = {n}");
        }
    }

    #[test]
    fn double_center_matches_explicit_product() {
        let a = random_matrix(7, 7, 3);
        let a = symmetrize(a.as_ref());
        let c = centering_matrix(7);
        let explicit = &c * &a * &c;
        assert!(rel_err(double_center(a.as_ref()).as_ref(), explicit.as_ref()) < 1e-14);
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let eig = sym_eig(Mat::<f64>::identity(3, 3).as_ref()).unwrap();
        assert_eq!(eig.values, [1.0, 1.0, 1.0]);
        let d = Mat::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let eig = sym_eig(d.as_ref()).unwrap();
        assert_eq!(eig.values, [3.0, 2.0, 1.0]);
        // sign convention: first nonzero coordinate positive
        for k in 0..3 {
            let lead = (0..3).map(|i| eig.vectors[(i, k)]).find(|v| v.abs() > 0.5).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let b = random_matrix(20, 20, 11);
        let a = symmetrize(b.as_ref());
        let eig = sym_eig(a.as_ref()).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        assert!(rel_err(eig.reconstruct().as_ref(), a.as_ref()) < 1e-10);
        let vtv = eig.vectors.transpose() * &eig.vectors;
        let id = Mat::<f64>::identity(20, 20);
        assert!(max_abs((&vtv - &id).as_ref()) < 1e-10);
    }

    #[test]
    fn eig_rejects_bad_input() {
        let rect = Mat::<f64>::zeros(2, 3);
        assert!(matches!(sym_eig(rect.as_ref()), Err(Error::Dimension(_))));
        let mut nan = Mat::<f64>::identity(2, 2);
        nan[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig(nan.as_ref()), Err(Error::Input(_))));
        let mut asym = Mat::<f64>::identity(2, 2);
        asym[(0, 1)] = 0.5;
        assert!(matches!(sym_eig(asym.as_ref()), Err(Error::Input(_))));
    }

    #[test]
    fn pinv_examples() {
        let d = Mat::from_fn(2, 2, |i, j| if i == j { [2.0, 0.0][i] } else { 0.0 });
        let p = pinv_psd(d.as_ref(), DEFAULT_RTOL).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
        assert_eq!(p[(0, 1)], 0.0);
        let z = pinv_psd(Mat::<f64>::zeros(3, 3).as_ref(), DEFAULT_RTOL).unwrap();
        assert_eq!(max_abs(z.as_ref()), 0.0);
    }

    #[test]
    fn pinv_penrose_identities_rank_deficient() {
        let b = random_matrix(6, 3, 5);
        let a = &b * b.transpose();
        let p = pinv_psd(a.as_ref(), DEFAULT_RTOL).unwrap();
        let apa = &a * &p * &a;
        assert!(rel_err(apa.as_ref(), a.as_ref()) < 1e-8);
        let pap = &p * &a * &p;
        assert!(rel_err(pap.as_ref(), p.as_ref()) < 1e-8);
    }

    #[test]
    fn pinv_rejects_indefinite() {
        let d = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, -0.5][i] } else { 0.0 });
        assert!(matches!(pinv_psd(d.as_ref(), DEFAULT_RTOL), Err(Error::NotPsd { .. })));
        // roundoff-level negatives are tolerated
        let d = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, -1e-12][i] } else { 0.0 });
        assert!(pinv_psd(d.as_ref(), DEFAULT_RTOL).is_ok());
    }

    #[test]
    fn inv_sqrt_examples() {
        let d = Mat::from_fn(2, 2, |i, j| if i == j { [4.0, 1.0][i] } else { 0.0 });
        let r = inv_sqrt_psd(d.as_ref(), DEFAULT_RTOL).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-15 && (r[(1, 1)] - 1.0).abs() < 1e-15);
        let d = Mat::from_fn(2, 2, |i, j| if i == j { [4.0, 0.0][i] } else { 0.0 });
        let r = inv_sqrt_psd(d.as_ref(), DEFAULT_RTOL).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-15 && r[(1, 1)] == 0.0);
    }

    #[test]
    fn inv_sqrt_sandwich_is_projector() {
        let b = random_matrix(8, 5, 21);
        let a = &b * b.transpose();
        let r = inv_sqrt_psd(a.as_ref(), DEFAULT_RTOL).unwrap();
        let p = &r * &a * &r;
        let pp = &p * &p;
        assert!(max_abs((&pp - &p).as_ref()) < 1e-8);
        let eig = sym_eig(symmetrize(p.as_ref()).as_ref()).unwrap();
        let ones = eig.values.iter().filter(|w| (*w - 1.0).abs() < 1e-8).count();
        assert_eq!(ones, 5);
        // r·r = pinv on the retained range
        let rr = &r * &r;
        let pinv = pinv_psd(a.as_ref(), DEFAULT_RTOL).unwrap();
        assert!(rel_err(rr.as_ref(), pinv.as_ref()) < 1e-8);
    }

    #[test]
    fn op_norm_of_diagonal() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, -4.0, 2.0][i] } else { 0.0 });
        assert!((op_norm(d.as_ref()).unwrap() - 4.0).abs() < 1e-12);
    }
}
