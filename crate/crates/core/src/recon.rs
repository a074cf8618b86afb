//! Reconstruction error of a fitted eigenspace, in the RKHS norm and in
//! `L²(P)`.
//!
//! For a fresh point `y` the residual is
//! `g_y = (k(·,y) - m_P) - P(k(·,y) - m̂_P)`, where `P` projects onto the
//! fitted eigenfunctions and `m̂_P` is the training mean element. The RKHS
//! error averages `‖g_y‖²_H`; the `L²(P)` error averages `Var_X g_y(X)`.
//! Both are Monte Carlo averages over test points, except where a closed
//! form exists.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use faer::Mat;

use crate::error::{dim_err, input_err, Error, Result};
use crate::estimators::{embed, Expansion, KpcaModel, Variant};
use crate::kernels::{
    cross_gram, rff_features, sine_basis, sine_basis_mean, spectral_features, KernelSpec, Provenance,
    RffMap, SampleSet, SpectralKernel,
};
use crate::oracle::OracleSpectrum;

/// Rows per block when streaming test points.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Norm {
    H,
    L2,
}

impl Norm {
    pub fn as_str(self) -> &'static str {
        match self {
            Norm::H => "H",
            Norm::L2 => "L2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "H" | "h" | "rkhs" => Some(Norm::H),
            "L2" | "l2" => Some(Norm::L2),
            _ => None,
        }
    }
}

impl core::fmt::Display for Norm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One reconstruction-error measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconReport {
    /// `None` for a population (oracle) projection.
    pub variant: Option<Variant>,
    pub norm: Norm,
    pub n: usize,
    pub m: usize,
    pub ell: usize,
    pub t: Option<f64>,
    /// Clamped at zero.
    pub estimate: f64,
    pub se: f64,
    pub n_test: usize,
    pub seed: u64,
}

/// Pairwise (cascade) summation; the reduction order depends only on the
/// length, so results do not depend on how values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let t = values.len();
    if t == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / t as f64;
    if t == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (t - 1) as f64;
    (mean, libm::sqrt(var / t as f64))
}

/// How `m_P` is obtained.
#[derive(Debug, Clone, Copy)]
pub enum MeanSource<'a> {
    /// Exact, from the population oracle of a spectral kernel.
    Oracle(&'a OracleSpectrum),
    /// Empirical mean of an independent proxy sample (`N_proxy` points);
    /// this biases reported errors by `O(N_proxy^{-1/2})`.
    Proxy(&'a SampleSet),
}

/// Everything a reconstruction estimate needs besides the projection.
#[derive(Debug, Clone, Copy)]
pub struct ReconContext<'a> {
    pub kernel: &'a KernelSpec,
    pub mean: MeanSource<'a>,
    /// Training sample, checked against the test points for overlap.
    pub train: Option<&'a SampleSet>,
    /// Inner sample for `L²(P)` norms of general kernels.
    pub inner: Option<&'a SampleSet>,
    /// Recorded in reports.
    pub seed: u64,
    /// Recorded in reports.
    pub t: Option<f64>,
}

impl<'a> ReconContext<'a> {
    pub fn new(kernel: &'a KernelSpec, mean: MeanSource<'a>) -> Self {
        Self { kernel, mean, train: None, inner: None, seed: 0, t: None }
    }

    pub fn with_train(mut self, train: &'a SampleSet) -> Self {
        self.train = Some(train);
        self
    }

    pub fn with_inner(mut self, inner: &'a SampleSet) -> Self {
        self.inner = Some(inner);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    fn oracle(&self) -> Option<(&'a SpectralKernel, &'a OracleSpectrum)> {
        match (self.kernel.as_spectral(), self.mean) {
            (Some(k), MeanSource::Oracle(o)) => Some((k, o)),
            _ => None,
        }
    }

    fn require_oracle(&self) -> Result<(&'a SpectralKernel, &'a OracleSpectrum)> {
        let (k, o) = self
            .oracle()
            .ok_or_else(|| Error::Unsupported("this route needs the spectral kernel with its oracle mean".into()))?;
        if o.dim() != k.len() {
            return Err(input_err!("oracle dimension {} does not match the kernel ({})", o.dim(), k.len()));
        }
        Ok((k, o))
    }

    fn check(&self, test: &SampleSet) -> Result<()> {
        if test.is_empty() {
            return Err(input_err!("no test points"));
        }
        self.kernel.check_samples(test)?;
        match self.mean {
            MeanSource::Proxy(p) if p.is_empty() => return Err(input_err!("proxy mean requested without a proxy sample")),
            MeanSource::Oracle(_) if self.kernel.as_spectral().is_none() => {
                return Err(Error::Unsupported("oracle mean exists for the spectral kernel only".into()))
            }
            _ => {}
        }
        if let Some(train) = self.train {
            check_disjoint(train, test)?;
        }
        Ok(())
    }
}

/// Test points must be fresh: an identical seed or any shared point is an
/// error.
pub fn check_disjoint(train: &SampleSet, test: &SampleSet) -> Result<()> {
    if let (Provenance::Seed(a), Provenance::Seed(b)) = (train.provenance(), test.provenance()) {
        if a == b {
            return Err(input_err!("test points were drawn with the training seed {a}"));
        }
    }
    let seen: BTreeSet<Vec<u64>> = train.points().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
    for (i, p) in test.points().enumerate() {
        let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        if seen.contains(&key) {
            return Err(input_err!("test point {i} also appears in the training sample"));
        }
    }
    Ok(())
}

/// A rank-`ℓ` projection written in the feature coordinates of a spectral
/// kernel: `P = AᵀA` with orthonormal rows of `A`, plus the projections
/// `φ̄ = A m̂` of the mean used for centring.
#[derive(Debug, Clone)]
pub struct FeatureProjection {
    pub components: Mat<f64>,
    pub center: Vec<f64>,
    pub variant: Option<Variant>,
    pub n: usize,
    pub m: usize,
}

impl FeatureProjection {
    /// Maps a kernel-expanded model to feature coordinates: `A = B Ψ`.
    pub fn from_model(model: &KpcaModel, points: &SampleSet, kernel: &SpectralKernel) -> Result<Self> {
        if model.variant == Variant::Rff {
            return Err(Error::Unsupported("random-feature eigenfunctions do not live in the kernel's RKHS".into()));
        }
        if points.len() != model.coefficients.ncols() || points.dim() != 1 {
            return Err(dim_err!("model expands over {} points, got {}", model.coefficients.ncols(), points.len()));
        }
        let psi = spectral_features(kernel, points);
        Ok(Self {
            components: &model.coefficients * &psi,
            center: model.train_mean_projection.clone(),
            variant: Some(model.variant),
            n: model.n,
            m: model.m,
        })
    }

    /// The population top-`ℓ` eigenspace of `Σ`, centred at the true mean.
    pub fn population(oracle: &OracleSpectrum, ell: usize) -> Result<Self> {
        let components = oracle.top_eigenfunctions(ell)?;
        let center = (0..ell)
            .map(|i| (0..oracle.dim()).map(|j| components[(i, j)] * oracle.mean_coeffs[j]).sum())
            .collect();
        Ok(Self { components, center, variant: None, n: 0, m: 0 })
    }

    pub fn ell(&self) -> usize {
        self.components.nrows()
    }

    pub fn truncated(&self, ell: usize) -> Result<Self> {
        if ell > self.ell() {
            return Err(input_err!("cannot truncate a rank-{} projection to {ell}", self.ell()));
        }
        Ok(Self {
            components: self.components.subrows(0, ell).to_owned(),
            center: self.center[..ell].to_vec(),
            variant: self.variant,
            n: self.n,
            m: self.m,
        })
    }
}

/// What is being evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Model { model: &'a KpcaModel, expansion: Expansion<'a> },
    Features(&'a FeatureProjection),
}

fn report(target: &Target<'_>, norm: Norm, ctx: &ReconContext<'_>, values: &[f64]) -> ReconReport {
    let (variant, n, m, ell) = match target {
        Target::Model { model, .. } => (Some(model.variant), model.n, model.m, model.ell()),
        Target::Features(p) => (p.variant, p.n, p.m, p.ell()),
    };
    let (mean, se) = mean_and_se(values);
    ReconReport { variant, norm, n, m, ell, t: ctx.t, estimate: mean.max(0.0), se, n_test: values.len(), seed: ctx.seed }
}

fn chunks(test: &SampleSet) -> impl Iterator<Item = Result<SampleSet>> + '_ {
    (0..test.len()).step_by(CHUNK).map(move |start| {
        let end = (start + CHUNK).min(test.len());
        let idx: Vec<usize> = (start..end).collect();
        test.subset(&idx)
    })
}

/// Per-test-point residuals `‖g_y‖²_H` or `⟨g_y, S g_y⟩` in feature
/// coordinates.
fn feature_values(
    proj: &FeatureProjection,
    kernel: &SpectralKernel,
    oracle: &OracleSpectrum,
    test: &SampleSet,
    norm: Norm,
) -> Result<Vec<f64>> {
    let d = kernel.len();
    if proj.components.ncols() != d {
        return Err(dim_err!("projection has {} coordinates, kernel has {d}", proj.components.ncols()));
    }
    let ell = proj.ell();
    let mut out = Vec::with_capacity(test.len());
    for block in chunks(test) {
        let block = block?;
        let psi = spectral_features(kernel, &block);
        let mut d_mat = &psi * proj.components.transpose();
        for i in 0..block.len() {
            for c in 0..ell {
                d_mat[(i, c)] -= proj.center[c];
            }
        }
        let mut r = &psi - &d_mat * &proj.components;
        for i in 0..block.len() {
            for j in 0..d {
                r[(i, j)] -= oracle.mean_coeffs[j];
            }
        }
        match norm {
            Norm::H => out.extend((0..block.len()).map(|i| (0..d).map(|j| r[(i, j)] * r[(i, j)]).sum::<f64>())),
            Norm::L2 => {
                let rs = &r * &oracle.covariance;
                out.extend((0..block.len()).map(|i| (0..d).map(|j| rs[(i, j)] * r[(i, j)]).sum::<f64>()));
            }
        }
    }
    Ok(out)
}

/// `m_P(y)` at each query point.
fn mean_at(ctx: &ReconContext<'_>, points: &SampleSet) -> Result<Vec<f64>> {
    match ctx.mean {
        MeanSource::Oracle(o) => {
            let k = ctx.kernel.as_spectral().ok_or_else(|| Error::Unsupported("oracle mean needs a spectral kernel".into()))?;
            Ok(points.points().map(|p| o.mean_function(k, p[0])).collect())
        }
        MeanSource::Proxy(q) => {
            let kq = cross_gram(ctx.kernel, points, q)?;
            Ok((0..points.len())
                .map(|i| {
                    let row: Vec<f64> = (0..q.len()).map(|j| kq[(i, j)]).collect();
                    pairwise_sum(&row) / q.len() as f64
                })
                .collect())
        }
    }
}

/// `‖m_P‖²_H`.
fn mean_sq_norm(ctx: &ReconContext<'_>) -> Result<f64> {
    match ctx.mean {
        MeanSource::Oracle(o) => Ok(o.mp_sq_norm),
        MeanSource::Proxy(q) => proxy_sq_norm(ctx.kernel, q),
    }
}

/// Off-diagonal mean of the proxy Gram matrix, an unbiased estimate of
/// `‖m_P‖²_H`.
fn proxy_sq_norm(kernel: &KernelSpec, q: &SampleSet) -> Result<f64> {
    let n = q.len();
    if n < 2 {
        return Err(input_err!("proxy sample needs at least two points"));
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(i);
        for j in 0..i {
            row.push(kernel.eval_unchecked(q.point(i), q.point(j)));
        }
        rows.push(pairwise_sum(&row));
    }
    Ok(2.0 * pairwise_sum(&rows) / (n * (n - 1)) as f64)
}

/// `⟨φ_i, m_P⟩_H = E φ_i(X)` for a kernel-expanded model.
fn eigfun_means(model: &KpcaModel, expansion: &Expansion<'_>, ctx: &ReconContext<'_>) -> Result<Vec<f64>> {
    match (ctx.mean, expansion) {
        (MeanSource::Oracle(_), Expansion::Kernel { points, .. }) => {
            let mp = mean_at(ctx, points)?;
            Ok((0..model.ell())
                .map(|i| (0..mp.len()).map(|j| model.coefficients[(i, j)] * mp[j]).sum())
                .collect())
        }
        (MeanSource::Proxy(q), _) => {
            let e = embed(model, expansion, q)?;
            Ok((0..model.ell())
                .map(|i| {
                    let col: Vec<f64> = (0..q.len()).map(|t| e[(t, i)]).collect();
                    pairwise_sum(&col) / q.len() as f64
                })
                .collect())
        }
        (MeanSource::Oracle(_), Expansion::Features(_)) => {
            Err(Error::Unsupported("random-feature eigenfunctions do not live in the kernel's RKHS".into()))
        }
    }
}

/// Reconstruction error in the RKHS norm.
///
/// Model targets use the kernel-evaluation expansion
/// `k(y,y) - 2m_P(y) + ‖m_P‖² - 2Σ c_i d_i + Σ d_i²` with
/// `d_i = φ_i(y) - φ̄_i` and `c_i = φ_i(y) - ⟨φ_i, m_P⟩`; feature targets use
/// feature coordinates and need the oracle.
pub fn recon_h(target: &Target<'_>, ctx: &ReconContext<'_>, test: &SampleSet) -> Result<ReconReport> {
    ctx.check(test)?;
    let values = match target {
        Target::Features(proj) => {
            let (k, o) = ctx.require_oracle()?;
            feature_values(proj, k, o, test, Norm::H)?
        }
        Target::Model { model, expansion } => {
            if let Expansion::Features(_) = expansion {
                return Err(Error::Unsupported(
                    "the RKHS error of a random-feature model is not defined; use the L2 norm".into(),
                ));
            }
            h_kernel_values(model, expansion, ctx, test)?
        }
    };
    Ok(report(target, Norm::H, ctx, &values))
}

fn h_kernel_values(model: &KpcaModel, expansion: &Expansion<'_>, ctx: &ReconContext<'_>, test: &SampleSet) -> Result<Vec<f64>> {
    let ell = model.ell();
    let mp_phi = eigfun_means(model, expansion, ctx)?;
    let mp_sq = mean_sq_norm(ctx)?;
    let mut out = Vec::with_capacity(test.len());
    for block in chunks(test) {
        let block = block?;
        let mp_y = mean_at(ctx, &block)?;
        let phi = embed(model, expansion, &block)?;
        for (t, y) in block.points().enumerate() {
            let mut v = ctx.kernel.eval_unchecked(y, y) - 2.0 * mp_y[t] + mp_sq;
            for i in 0..ell {
                let d = phi[(t, i)] - model.train_mean_projection[i];
                let c = phi[(t, i)] - mp_phi[i];
                v += d * d - 2.0 * c * d;
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Reconstruction error in `L²(P)`.
///
/// Exact in feature coordinates for the spectral kernel with its oracle;
/// otherwise `Var_Z g_y(Z)` over the context's inner sample. Random-feature
/// models are dispatched to [`recon_rff_l2`].
pub fn recon_l2(target: &Target<'_>, ctx: &ReconContext<'_>, test: &SampleSet) -> Result<ReconReport> {
    ctx.check(test)?;
    let values = match target {
        Target::Features(proj) => {
            let (k, o) = ctx.require_oracle()?;
            feature_values(proj, k, o, test, Norm::L2)?
        }
        Target::Model { model, expansion: Expansion::Features(map) } => {
            return recon_rff_l2(model, map, ctx, test);
        }
        Target::Model { model, expansion: expansion @ Expansion::Kernel { points, .. } } => {
            if let Some((k, o)) = ctx.oracle() {
                let proj = FeatureProjection::from_model(model, points, k)?;
                feature_values(&proj, k, o, test, Norm::L2)?
            } else {
                inner_values(model, expansion, ctx, test)?
            }
        }
    };
    Ok(report(target, Norm::L2, ctx, &values))
}

/// `Var_Z g_y(Z)` with `g_y(z) = k(z,y) - m_P(z) - Σ_i d_i(y) φ_i(z)`.
fn inner_values(model: &KpcaModel, expansion: &Expansion<'_>, ctx: &ReconContext<'_>, test: &SampleSet) -> Result<Vec<f64>> {
    let inner = ctx.inner.ok_or_else(|| input_err!("an inner sample is required for this L2 estimate"))?;
    if inner.len() < 2 {
        return Err(input_err!("inner sample needs at least two points"));
    }
    ctx.kernel.check_samples(inner)?;
    let s = inner.len();
    let ell = model.ell();
    let mp_z = mean_at(ctx, inner)?;
    let phi_z = embed(model, expansion, inner)?;
    let mut out = Vec::with_capacity(test.len());
    let mut g = vec![0.0; s];
    for block in chunks(test) {
        let block = block?;
        let kzy = cross_gram(ctx.kernel, &block, inner)?;
        let phi_y = embed(model, expansion, &block)?;
        for t in 0..block.len() {
            let d: Vec<f64> = (0..ell).map(|i| phi_y[(t, i)] - model.train_mean_projection[i]).collect();
            for (z, gz) in g.iter_mut().enumerate() {
                let proj: f64 = (0..ell).map(|i| d[i] * phi_z[(z, i)]).sum();
                *gz = kzy[(t, z)] - mp_z[z] - proj;
            }
            let (mean, _) = mean_and_se(&g);
            let dev: Vec<f64> = g.iter().map(|v| (v - mean) * (v - mean)).collect();
            out.push(pairwise_sum(&dev) / (s - 1) as f64);
        }
    }
    Ok(out)
}

/// `L²(P)` reconstruction error of a random-feature model against the true
/// centred kernel sections.
///
/// For the spectral kernel with a sine feature map both residual pieces are
/// finite sine series, so `Var_X g_y(X) = cᵀ(I - μμᵀ)c` exactly in sine
/// coordinates; otherwise the context's inner sample is used.
pub fn recon_rff_l2(model: &KpcaModel, map: &RffMap, ctx: &ReconContext<'_>, test: &SampleSet) -> Result<ReconReport> {
    ctx.check(test)?;
    if model.variant != Variant::Rff {
        return Err(input_err!("expected a random-feature model, got {}", model.variant));
    }
    let target = Target::Model { model, expansion: Expansion::Features(map) };
    let values = match (ctx.oracle(), map.sine_coordinates()) {
        (Some((kernel, _)), Some((freqs, q))) => sine_values(model, kernel, &freqs, &q, map, test)?,
        _ => inner_values(model, &Expansion::Features(map), ctx, test)?,
    };
    Ok(report(&target, Norm::L2, ctx, &values))
}

fn sine_values(
    model: &KpcaModel,
    kernel: &SpectralKernel,
    map_freqs: &[u32],
    q: &[Vec<f64>],
    map: &RffMap,
    test: &SampleSet,
) -> Result<Vec<f64>> {
    let m = q.len();
    if model.coefficients.ncols() != m {
        return Err(dim_err!("model has {} feature coefficients, map has {m}", model.coefficients.ncols()));
    }
    let fmax = kernel.max_frequency().max(map_freqs.iter().copied().max().unwrap_or(0)) as usize;
    let mu: Vec<f64> = (1..=fmax as u32).map(sine_basis_mean).collect();
    // eigenfunction i as a sine series: Σ_j B_ij Q_j
    let ell = model.ell();
    let mut recon = Mat::<f64>::zeros(ell, fmax);
    for i in 0..ell {
        for (j, row) in q.iter().enumerate() {
            let b = model.coefficients[(i, j)];
            for (c, &f) in map_freqs.iter().enumerate() {
                recon[(i, f as usize - 1)] += b * row[c];
            }
        }
    }
    let mut out = Vec::with_capacity(test.len());
    let mut c = vec![0.0; fmax];
    for block in chunks(test) {
        let block = block?;
        let phi = rff_features(map, &block)?;
        let e = &phi * model.coefficients.transpose();
        for (t, y) in block.points().enumerate() {
            c.iter_mut().for_each(|v| *v = 0.0);
            for (&f, &l) in kernel.frequencies().iter().zip(kernel.eigenvalues()) {
                let idx = f as usize - 1;
                c[idx] += l * (sine_basis(f, y[0]) - mu[idx]);
            }
            for i in 0..ell {
                let d = e[(t, i)] - model.train_mean_projection[i];
                for (cf, r) in c.iter_mut().zip(recon.row(i).iter()) {
                    *cf -= d * r;
                }
            }
            let sq: f64 = c.iter().map(|v| v * v).sum();
            let dot: f64 = c.iter().zip(&mu).map(|(a, b)| a * b).sum();
            out.push(sq - dot * dot);
        }
    }
    Ok(out)
}

/// Closed-form expectation over `y ~ P` of the feature-route residual:
/// `tr((I-P)S) + ‖φ̄ - Aμ̄‖²` (RKHS) and
/// `tr(S(I-P)S(I-P)) + vᵀ A S Aᵀ v` with `v = φ̄ - Aμ̄` (`L²(P)`).
pub fn exact_recon(proj: &FeatureProjection, oracle: &OracleSpectrum, norm: Norm) -> Result<f64> {
    let d = oracle.dim();
    let a = &proj.components;
    if a.ncols() != d {
        return Err(dim_err!("projection has {} coordinates, oracle has {d}", a.ncols()));
    }
    let ell = proj.ell();
    let s = &oracle.covariance;
    let v: Vec<f64> = (0..ell)
        .map(|i| proj.center[i] - (0..d).map(|j| a[(i, j)] * oracle.mean_coeffs[j]).sum::<f64>())
        .collect();
    // (I - P) S
    let ps = a.transpose() * (a * s);
    let q = s - &ps;
    Ok(match norm {
        Norm::H => {
            let tr: f64 = (0..d).map(|i| q[(i, i)]).sum();
            tr + v.iter().map(|x| x * x).sum::<f64>()
        }
        Norm::L2 => {
            let tr: f64 = (0..d).map(|i| (0..d).map(|j| q[(i, j)] * q[(j, i)]).sum::<f64>()).sum();
            let asat = a * s * a.transpose();
            let quad: f64 = (0..ell).map(|i| (0..ell).map(|j| v[i] * asat[(i, j)] * v[j]).sum::<f64>()).sum();
            tr + quad
        }
    })
}
