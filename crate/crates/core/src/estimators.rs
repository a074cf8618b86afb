//! Empirical kernel PCA and its Nyström and random-feature approximations.
//!
//! Every fit returns a [`KpcaModel`] whose rows of coefficients describe
//! unit-norm eigenfunctions: over sample points for the exact and Nyström
//! variants, over feature coordinates for random features.

use alloc::vec::Vec;

use faer::{Mat, MatRef};

use crate::error::{dim_err, input_err, Error, Result};
use crate::kernels::{cross_gram, rff_features, KernelSpec, RffMap, SampleSet};
use crate::linalg::{
    center_columns, centering_matrix, column_means, double_center, inv_sqrt_psd, max_abs, pinv_psd, sym_eig,
    symmetrize, SymEigen,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Ekpca,
    Nystrom,
    Rff,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ekpca => "ekpca",
            Variant::Nystrom => "nystrom",
            Variant::Rff => "rff",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ekpca" => Some(Variant::Ekpca),
            "nystrom" => Some(Variant::Nystrom),
            "rff" => Some(Variant::Rff),
            _ => None,
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fitted rank-`ℓ` kernel PCA model.
#[derive(Debug, Clone)]
pub struct KpcaModel {
    pub variant: Variant,
    /// Descending eigenvalues, length `ℓ`.
    pub eigenvalues: Vec<f64>,
    /// `ℓ × p` coefficients; row `i` expands the `i`-th eigenfunction.
    pub coefficients: Mat<f64>,
    /// `(1/n) Σ_j φ_i(X_j)`: projections of the training mean element.
    pub train_mean_projection: Vec<f64>,
    /// Training sample size.
    pub n: usize,
    /// Number of expansion points or features.
    pub m: usize,
}

impl KpcaModel {
    pub fn ell(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The model restricted to its leading `ell` components.
    pub fn truncated(&self, ell: usize) -> Result<Self> {
        if ell > self.ell() {
            return Err(input_err!("cannot truncate a rank-{} model to {ell}", self.ell()));
        }
        Ok(Self {
            variant: self.variant,
            eigenvalues: self.eigenvalues[..ell].to_vec(),
            coefficients: self.coefficients.subrows(0, ell).to_owned(),
            train_mean_projection: self.train_mean_projection[..ell].to_vec(),
            n: self.n,
            m: self.m,
        })
    }
}

/// Eigenvalues below `max(rtol·λ₁, floor)` are numerically zero. The floor
/// absorbs the roundoff left by centering a (near-)constant matrix.
fn achievable(values: &[f64], rtol: f64, floor: f64) -> usize {
    let lead = values.first().copied().unwrap_or(0.0);
    let cut = (rtol * lead).max(floor);
    values.iter().take_while(|&&w| w > cut).count()
}

fn roundoff_floor(n: usize, scale: f64) -> f64 {
    64.0 * f64::EPSILON * n as f64 * scale / (n.max(2) - 1) as f64
}

fn check_rtol(rtol: f64) -> Result<()> {
    if rtol > 0.0 && rtol < 1.0 {
        Ok(())
    } else {
        Err(input_err!("rtol must lie in (0, 1), got {rtol}"))
    }
}

fn top_eigenpairs(eig: &SymEigen, ell: usize, rtol: f64, floor: f64) -> Result<()> {
    let ok = achievable(&eig.values, rtol, floor);
    if ok < ell {
        return Err(Error::Rank { requested: ell, achievable: ok });
    }
    Ok(())
}

/// Exact empirical kernel PCA from the `n × n` Gram matrix.
///
/// Diagonalises `G = C_n K C_n / (n-1)`, which shares its nonzero spectrum
/// with `K H_n / (n(n-1))`; eigenvector `v_i` becomes coefficients
/// `v_i / √((n-1) λ_i)`.
pub fn fit_ekpca(k: MatRef<'_, f64>, ell: usize, rtol: f64) -> Result<KpcaModel> {
    check_rtol(rtol)?;
    let n = k.nrows();
    if k.ncols() != n {
        return Err(dim_err!("Gram matrix must be square, got {}x{}", n, k.ncols()));
    }
    if n < 2 || ell == 0 || ell >= n {
        return Err(input_err!("need 1 <= ell <= n - 1, got ell = {ell}, n = {n}"));
    }
    let scale = 1.0 / (n - 1) as f64;
    let mut g = double_center(k);
    for j in 0..n {
        for i in 0..n {
            g[(i, j)] *= scale;
        }
    }
    let eig = sym_eig(g.as_ref())?;
    top_eigenpairs(&eig, ell, rtol, roundoff_floor(n, max_abs(k)))?;
    let mut coefficients = Mat::from_fn(ell, n, |i, j| {
        eig.vectors[(j, i)] / libm::sqrt((n - 1) as f64 * eig.values[i])
    });
    // eigenvectors of nonzero eigenvalues lie in range(C_n); remove roundoff along 𝟙
    for i in 0..ell {
        let mean = row_mean(coefficients.as_ref(), i);
        for j in 0..n {
            coefficients[(i, j)] -= mean;
        }
    }
    let evals = &coefficients * k;
    let train_mean_projection = (0..ell).map(|i| row_mean(evals.as_ref(), i)).collect();
    Ok(KpcaModel {
        variant: Variant::Ekpca,
        eigenvalues: eig.values[..ell].to_vec(),
        coefficients,
        train_mean_projection,
        n,
        m: n,
    })
}

fn row_mean(a: MatRef<'_, f64>, i: usize) -> f64 {
    let s: f64 = (0..a.ncols()).map(|j| a[(i, j)]).sum();
    s / a.ncols() as f64
}

fn check_nystrom_shapes(k_mm: MatRef<'_, f64>, k_nm: MatRef<'_, f64>) -> Result<(usize, usize)> {
    let m = k_mm.nrows();
    if k_mm.ncols() != m || k_nm.ncols() != m {
        return Err(dim_err!(
            "K_mm is {}x{} and K_nm is {}x{}",
            k_mm.nrows(),
            k_mm.ncols(),
            k_nm.nrows(),
            k_nm.ncols()
        ));
    }
    let n = k_nm.nrows();
    if n < 2 || m == 0 {
        return Err(input_err!("need n >= 2 and m >= 1, got n = {n}, m = {m}"));
    }
    Ok((n, m))
}

/// Nyström kernel PCA: the empirical covariance compressed onto the span of
/// the subsample's kernel sections centred by their own mean.
///
/// With `R = (C_m K_mm C_m)^{+1/2}` the columns of `R` expand an orthonormal
/// basis of that span, the compressed covariance is `YᵀY / (n-1)` with
/// `Y = C_n K_nm R`, and eigenvector `u_i` becomes coefficients `R u_i`.
pub fn fit_nystrom(k_mm: MatRef<'_, f64>, k_nm: MatRef<'_, f64>, ell: usize, rtol: f64) -> Result<KpcaModel> {
    check_rtol(rtol)?;
    let (n, m) = check_nystrom_shapes(k_mm, k_nm)?;
    if ell == 0 || ell >= m {
        return Err(input_err!("need 1 <= ell <= m - 1, got ell = {ell}, m = {m}"));
    }
    // Re-centre on both sides: eigenvectors of small retained eigenvalues
    // carry an O(ε/w) component along 𝟙, which K_nm amplifies.
    let r = double_center(inv_sqrt_psd(double_center(k_mm).as_ref(), rtol)?.as_ref());
    let y = center_columns((k_nm * &r).as_ref());
    let mut cov = y.transpose() * &y;
    let scale = 1.0 / (n - 1) as f64;
    for j in 0..m {
        for i in 0..m {
            cov[(i, j)] *= scale;
        }
    }
    let eig = sym_eig(symmetrize(cov.as_ref()).as_ref())?;
    top_eigenpairs(&eig, ell, rtol, roundoff_floor(n, max_abs(k_nm)))?;
    let u = Mat::from_fn(m, ell, |i, j| eig.vectors[(i, j)]);
    let coefficients = (&r * &u).transpose().to_owned();
    let evals = k_nm * coefficients.transpose();
    let means = column_means(evals.as_ref());
    Ok(KpcaModel {
        variant: Variant::Nystrom,
        eigenvalues: eig.values[..ell].to_vec(),
        coefficients,
        train_mean_projection: means,
        n,
        m,
    })
}

/// `M / (n(n-1))` with `M = K_mm^{-1/2} K_mn H_n K_nm K_mm^{-1/2}`: the
/// Nyström eigenproblem over the uncentred subsample span.
pub fn nystrom_m_matrix(k_mm: MatRef<'_, f64>, k_nm: MatRef<'_, f64>, rtol: f64) -> Result<Mat<f64>> {
    check_rtol(rtol)?;
    let (n, m) = check_nystrom_shapes(k_mm, k_nm)?;
    let r = inv_sqrt_psd(k_mm, rtol)?;
    let y = center_columns((k_nm * &r).as_ref());
    // Kᵀ H_n K = n Yᵀ C_n Y = n YᵀY for centred Y
    let mut out = y.transpose() * &y;
    let scale = 1.0 / (n - 1) as f64;
    for j in 0..m {
        for i in 0..m {
            out[(i, j)] *= scale;
        }
    }
    Ok(symmetrize(out.as_ref()))
}

/// `K̃ = K_nm K_mm⁺ K_mn`, formed as `Y Yᵀ` with `Y = K_nm K_mm^{+1/2}`;
/// the explicit pseudo-inverse loses a factor `cond(K_mm)` in accuracy,
/// the factored form only its square root.
pub fn nystrom_gram(k_mm: MatRef<'_, f64>, k_nm: MatRef<'_, f64>, rtol: f64) -> Result<Mat<f64>> {
    check_rtol(rtol)?;
    check_nystrom_shapes(k_mm, k_nm)?;
    let y = k_nm * inv_sqrt_psd(k_mm, rtol)?;
    let out = &y * y.transpose();
    Ok(symmetrize(out.as_ref()))
}

/// Coefficients of the projector onto the centred subsample span:
/// `W = C_m (C_m K_mm C_m)⁺ C_m`. For `f = Σ_j c_j k(·, X_j)` the projection
/// has subsample coefficients `W K_mn c`.
pub fn pbar_projector_coeffs(k_mm: MatRef<'_, f64>, rtol: f64) -> Result<Mat<f64>> {
    check_rtol(rtol)?;
    let m = k_mm.nrows();
    if k_mm.ncols() != m || m == 0 {
        return Err(dim_err!("K_mm must be square and nonempty"));
    }
    let centred = double_center(k_mm);
    let eig = sym_eig(centred.as_ref())?;
    if achievable(&eig.values, rtol, roundoff_floor(m, max_abs(k_mm))) == 0 {
        return Err(Error::Rank { requested: 1, achievable: 0 });
    }
    let p = pinv_psd(centred.as_ref(), rtol)?;
    let c = centering_matrix(m);
    let w = &c * &p * &c;
    Ok(symmetrize(w.as_ref()))
}

fn covariance(z: MatRef<'_, f64>, denom: f64) -> Mat<f64> {
    let zc = center_columns(z);
    let mut s = zc.transpose() * &zc;
    let p = s.nrows();
    for j in 0..p {
        for i in 0..p {
            s[(i, j)] /= denom;
        }
    }
    symmetrize(s.as_ref())
}

/// Unbiased pairwise-difference covariance of the rows of `z`:
/// `(1/(2n(n-1))) Σ_{i≠j} (z_i - z_j)(z_i - z_j)ᵀ = Zᵀ C_n Z / (n-1)`.
pub fn u_statistic_covariance(z: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if z.nrows() < 2 {
        return Err(input_err!("covariance needs at least two rows, got {}", z.nrows()));
    }
    Ok(covariance(z, (z.nrows() - 1) as f64))
}

/// Plug-in covariance `Zᵀ C_n Z / n`, biased downward by a factor `(n-1)/n`.
pub fn v_statistic_covariance(z: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if z.nrows() < 1 {
        return Err(input_err!("covariance needs at least one row"));
    }
    Ok(covariance(z, z.nrows() as f64))
}

/// Random-feature kernel PCA from the `n × m` feature matrix `Z` (rows are
/// `Φ_m(X_t)`).
pub fn fit_rff(z: MatRef<'_, f64>, ell: usize, rtol: f64) -> Result<KpcaModel> {
    check_rtol(rtol)?;
    let (n, m) = (z.nrows(), z.ncols());
    if n < 2 || ell == 0 || ell > m.min(n - 1) {
        return Err(input_err!("need 1 <= ell <= min(m, n - 1), got ell = {ell}, m = {m}, n = {n}"));
    }
    let zmax = max_abs(z);
    let floor = roundoff_floor(n, zmax * zmax * m as f64);
    let coefficients = if m <= n {
        let s = u_statistic_covariance(z)?;
        let eig = sym_eig(s.as_ref())?;
        top_eigenpairs(&eig, ell, rtol, floor)?;
        Mat::from_fn(ell, m, |i, j| eig.vectors[(j, i)])
    } else {
        // Σ̂_m has rank < n: diagonalise the dual C_n Z Zᵀ C_n / (n-1) and
        // map eigenvector v_i to Zᵀ C_n v_i / √((n-1) λ_i).
        let zc = center_columns(z);
        let mut dual = &zc * zc.transpose();
        let scale = 1.0 / (n - 1) as f64;
        for j in 0..n {
            for i in 0..n {
                dual[(i, j)] *= scale;
            }
        }
        let eig = sym_eig(symmetrize(dual.as_ref()).as_ref())?;
        top_eigenpairs(&eig, ell, rtol, floor)?;
        let v = Mat::from_fn(n, ell, |i, j| eig.vectors[(i, j)] / libm::sqrt((n - 1) as f64 * eig.values[j]));
        (zc.transpose() * &v).transpose().to_owned()
    };
    let eigenvalues = {
        let zc = center_columns(z);
        let proj = &zc * coefficients.transpose();
        (0..ell)
            .map(|i| (0..n).map(|t| proj[(t, i)] * proj[(t, i)]).sum::<f64>() / (n - 1) as f64)
            .collect::<Vec<f64>>()
    };
    let zbar = column_means(z);
    let train_mean_projection = (0..ell)
        .map(|i| (0..m).map(|j| coefficients[(i, j)] * zbar[j]).sum())
        .collect();
    Ok(KpcaModel {
        variant: Variant::Rff,
        eigenvalues,
        coefficients,
        train_mean_projection,
        n,
        m,
    })
}

/// What a model's coefficients are expanded over.
#[derive(Debug, Clone, Copy)]
pub enum Expansion<'a> {
    /// Kernel sections `k(·, p_j)` at the given points.
    Kernel { spec: &'a KernelSpec, points: &'a SampleSet },
    /// Coordinates of a random-feature map.
    Features(&'a RffMap),
}

impl Expansion<'_> {
    fn width(&self) -> usize {
        match self {
            Expansion::Kernel { points, .. } => points.len(),
            Expansion::Features(map) => map.num_features(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Expansion::Kernel { points, .. } => points.dim(),
            Expansion::Features(map) => map.input_dim(),
        }
    }

    /// `T × p` matrix of basis functions evaluated at `x`.
    pub fn design(&self, x: &SampleSet) -> Result<Mat<f64>> {
        match self {
            Expansion::Kernel { spec, points } => cross_gram(spec, x, points),
            Expansion::Features(map) => rff_features(map, x),
        }
    }
}

fn check_expansion(model: &KpcaModel, exp: &Expansion<'_>, dim: usize) -> Result<()> {
    if exp.width() != model.coefficients.ncols() {
        return Err(input_err!(
            "model expands over {} terms but the expansion has {}",
            model.coefficients.ncols(),
            exp.width()
        ));
    }
    if exp.input_dim() != dim {
        return Err(input_err!("points have dimension {dim}, expansion expects {}", exp.input_dim()));
    }
    match (model.variant, exp) {
        (Variant::Rff, Expansion::Kernel { .. }) | (Variant::Ekpca | Variant::Nystrom, Expansion::Features(_)) => {
            Err(input_err!("{} model cannot be evaluated over this expansion", model.variant))
        }
        _ => Ok(()),
    }
}

/// `(φ_1(x), …, φ_ℓ(x))`.
pub fn eigfun_eval(model: &KpcaModel, exp: &Expansion<'_>, x: &[f64]) -> Result<Vec<f64>> {
    let point = SampleSet::new(x.len(), x.to_vec(), crate::kernels::Provenance::Inline)?;
    let e = embed(model, exp, &point)?;
    Ok((0..model.ell()).map(|i| e[(0, i)]).collect())
}

/// `T × ℓ` matrix whose row `t` is `(φ_1(x_t), …, φ_ℓ(x_t))`.
pub fn embed(model: &KpcaModel, exp: &Expansion<'_>, x: &SampleSet) -> Result<Mat<f64>> {
    check_expansion(model, exp, x.dim())?;
    let design = exp.design(x)?;
    Ok(&design * model.coefficients.transpose())
}
