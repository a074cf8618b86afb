//! Kernel definitions, Gram assembly, uniform subsampling and random
//! feature maps.
//!
//! The spectral kernel `k(x, y) = Σ λ_i e_i(x) e_i(y)` with the sine basis
//! `e_i(x) = √2 sin(π f_i x)` on `[0, 1]` is orthonormal under the uniform
//! law, so every population quantity of it has a closed form (see
//! [`crate::oracle`]). Because `∫ e_i = 2√2 / (π f_i)` for odd `f_i`, its mean
//! element is non-zero and the centered and uncentered covariances differ.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim_err, input_err, Error, Result};
use crate::rng::rng_from_seed;

/// Where a [`SampleSet`] came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Seed(u64),
    File(String),
    Inline,
}

/// Points `X_1..X_n` in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
    provenance: Provenance,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(input_err!("points must have at least one coordinate"));
        }
        if data.len() % dim != 0 {
            return Err(dim_err!("{} values do not split into rows of {dim}", data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(input_err!("non-finite coordinate in row {}", pos / dim));
        }
        Ok(Self { dim, data, provenance })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(dim_err!("rows have differing lengths"));
        }
        Self::new(dim, rows.concat(), Provenance::Inline)
    }

    /// i.i.d. draws from the uniform law on `[0, 1]^dim`.
    pub fn uniform(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let data = (0..n * dim).map(|_| rng.random::<f64>()).collect();
        Self { dim, data, provenance: Provenance::Seed(seed) }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(input_err!("index {i} out of range for {} points", self.len()));
            }
            data.extend_from_slice(self.point(i));
        }
        Ok(Self { dim: self.dim, data, provenance: self.provenance.clone() })
    }
}

/// Finite-expansion kernel on `[0, 1]` with a fixed sine basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    eigenvalues: Vec<f64>,
    frequencies: Vec<u32>,
}

impl SpectralKernel {
    /// `eigenvalues` must be positive and strictly descending; `frequencies`
    /// are distinct positive integers, one per eigenvalue.
    pub fn new(eigenvalues: Vec<f64>, frequencies: Vec<u32>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != frequencies.len() {
            return Err(dim_err!(
                "need one frequency per eigenvalue ({} vs {})",
                frequencies.len(),
                eigenvalues.len()
            ));
        }
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(input_err!("spectral eigenvalues must be finite and positive"));
        }
        if eigenvalues.windows(2).any(|w| w[1] >= w[0]) {
            return Err(input_err!("spectral eigenvalues must be strictly descending"));
        }
        let mut sorted = frequencies.clone();
        sorted.sort_unstable();
        if sorted[0] == 0 || sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(input_err!("basis frequencies must be distinct and positive"));
        }
        Ok(Self { eigenvalues, frequencies })
    }

    /// `λ_i = i^{-α}` on frequencies `1..=size`.
    pub fn polynomial_decay(alpha: f64, size: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(input_err!("decay exponent must be positive, got {alpha}"));
        }
        let eigenvalues = (1..=size).map(|i| libm::pow(i as f64, -alpha)).collect();
        let frequencies = (1..=size as u32).collect();
        Self::new(eigenvalues, frequencies)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn frequencies(&self) -> &[u32] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_frequency(&self) -> u32 {
        self.frequencies.iter().copied().max().unwrap_or(0)
    }

    pub fn total_mass(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Upper bound `2 Σ λ_i` on `sup_x k(x, x)`.
    pub fn kappa_bound(&self) -> f64 {
        2.0 * self.total_mass()
    }

    /// `e_i(x)` for every basis function.
    pub fn basis_values(&self, x: f64, out: &mut [f64]) {
        for (o, &f) in out.iter_mut().zip(&self.frequencies) {
            *o = sine_basis(f, x);
        }
    }

    /// Feature coordinates `(√λ_i e_i(x))_i`; `k(x, y)` is their dot product.
    pub fn features(&self, x: f64, out: &mut [f64]) {
        for ((o, &f), &l) in out.iter_mut().zip(&self.frequencies).zip(&self.eigenvalues) {
            *o = libm::sqrt(l) * sine_basis(f, x);
        }
    }

    pub fn feature_vector(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.features(x, &mut out);
        out
    }

    /// `μ_i = ∫ e_i dP` for each basis function.
    pub fn basis_means(&self) -> Vec<f64> {
        self.frequencies.iter().map(|&f| sine_basis_mean(f)).collect()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&f, &l)| l * sine_basis(f, x) * sine_basis(f, y))
            .sum()
    }

    /// `max_x k(x, x)` over the uniform grid `{j / grid_size}`.
    pub fn diagonal_grid_max(&self, grid_size: usize) -> f64 {
        (0..=grid_size)
            .map(|j| {
                let x = j as f64 / grid_size as f64;
                self.eval(x, x)
            })
            .fold(0.0, f64::max)
    }

    /// `κ = sup_x k(x, x)`: a fine grid search refined by golden-section
    /// search around the best grid cell.
    pub fn kappa(&self) -> f64 {
        let grid = 20_000usize;
        let (best, mut val) = (0..=grid)
            .map(|j| {
                let x = j as f64 / grid as f64;
                (x, self.eval(x, x))
            })
            .fold((0.0, f64::MIN), |acc, p| if p.1 > acc.1 { p } else { acc });
        let h = 1.0 / grid as f64;
        let (mut a, mut b) = ((best - h).max(0.0), (best + h).min(1.0));
        let g = 0.5 * (libm::sqrt(5.0) - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if self.eval(c, c) > self.eval(d, d) {
                b = d;
            } else {
                a = c;
            }
        }
        let m = 0.5 * (a + b);
        val = val.max(self.eval(m, m));
        val
    }
}

/// `√2 sin(π f x)`.
pub fn sine_basis(f: u32, x: f64) -> f64 {
    SQRT_2 * libm::sin(PI * f as f64 * x)
}

/// `∫_0^1 √2 sin(π f x) dx = √2 (1 - cos π f) / (π f)`: `2√2/(π f)` for odd
/// `f`, zero for even `f`.
pub fn sine_basis_mean(f: u32) -> f64 {
    if f % 2 == 1 {
        2.0 * SQRT_2 / (PI * f as f64)
    } else {
        0.0
    }
}

/// Closed-form kernel definition.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(-|x - y|² / (2 σ²))`.
    Gaussian { bandwidth: f64 },
    Linear,
    /// `(xᵀy + offset)^degree`.
    Polynomial { degree: u32, offset: f64 },
    Spectral(SpectralKernel),
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(input_err!("gaussian bandwidth must be positive, got {bandwidth}"));
        }
        Ok(Self::Gaussian { bandwidth })
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        if degree == 0 {
            return Err(input_err!("polynomial degree must be at least 1"));
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(input_err!("polynomial offset must be non-negative, got {offset}"));
        }
        Ok(Self::Polynomial { degree, offset })
    }

    pub fn spectral(alpha: f64, size: usize) -> Result<Self> {
        SpectralKernel::polynomial_decay(alpha, size).map(Self::Spectral)
    }

    pub fn as_spectral(&self) -> Option<&SpectralKernel> {
        match self {
            Self::Spectral(s) => Some(s),
            _ => None,
        }
    }

    /// `sup_x k(x, x)` when the kernel is bounded on its domain.
    pub fn kappa(&self) -> Option<f64> {
        match self {
            Self::Gaussian { .. } => Some(1.0),
            Self::Spectral(s) => Some(s.kappa()),
            Self::Linear | Self::Polynomial { .. } => None,
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(input_err!("non-finite coordinate {bad}"));
        }
        if let Self::Spectral(_) = self {
            if x.len() != 1 || !(0.0..=1.0).contains(&x[0]) {
                return Err(input_err!("spectral kernel is defined on [0, 1] only"));
            }
        }
        Ok(())
    }

    pub fn check_samples(&self, samples: &SampleSet) -> Result<()> {
        if let Self::Spectral(_) = self {
            if samples.dim() != 1 {
                return Err(input_err!("spectral kernel needs one-dimensional points"));
            }
            if let Some(i) = samples.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(input_err!("point {i} lies outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::exp(-d2 / (2.0 * bandwidth * bandwidth))
            }
            Self::Linear => dot(x, y),
            Self::Polynomial { degree, offset } => libm::pow(dot(x, y) + offset, *degree as f64),
            Self::Spectral(s) => s.eval(x[0], y[0]),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `k(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(dim_err!("points of dimension {} and {}", x.len(), y.len()));
    }
    spec.check_point(x)?;
    spec.check_point(y)?;
    Ok(spec.eval_unchecked(x, y))
}

/// `n x D` matrix of spectral feature coordinates, one row per point.
pub fn spectral_features(kernel: &SpectralKernel, x: &SampleSet) -> Mat<f64> {
    let d = kernel.len();
    let mut out = Mat::<f64>::zeros(x.len(), d);
    let mut row = vec![0.0; d];
    for (i, p) in x.points().enumerate() {
        kernel.features(p[0], &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// `[k(x_i, y_j)]` for `x` in `a`, `y` in `b`.
pub fn cross_gram(spec: &KernelSpec, a: &SampleSet, b: &SampleSet) -> Result<Mat<f64>> {
    if a.dim() != b.dim() {
        return Err(dim_err!("sample dimensions {} and {} differ", a.dim(), b.dim()));
    }
    spec.check_samples(a)?;
    spec.check_samples(b)?;
    if let KernelSpec::Spectral(s) = spec {
        let fa = spectral_features(s, a);
        let fb = spectral_features(s, b);
        return Ok(&fa * fb.transpose());
    }
    Ok(Mat::from_fn(a.len(), b.len(), |i, j| spec.eval_unchecked(a.point(i), b.point(j))))
}

/// `K = [k(X_i, X_j)]`, exactly symmetric.
pub fn gram(spec: &KernelSpec, x: &SampleSet) -> Result<Mat<f64>> {
    spec.check_samples(x)?;
    let n = x.len();
    let mut k = if let KernelSpec::Spectral(s) = spec {
        let f = spectral_features(s, x);
        &f * f.transpose()
    } else {
        let mut k = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                k[(i, j)] = spec.eval_unchecked(x.point(i), x.point(j));
            }
        }
        k
    };
    for j in 0..n {
        for i in j + 1..n {
            k[(j, i)] = k[(i, j)];
        }
    }
    Ok(k)
}

fn check_indices(n: usize, rows: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &r in rows {
        if r >= n {
            return Err(input_err!("subsample index {r} out of range for {n} points"));
        }
        if core::mem::replace(&mut seen[r], true) {
            return Err(input_err!("duplicate subsample index {r}"));
        }
    }
    Ok(())
}

/// `(K_mm, K_nm)` for the subsample at `rows`. `K_mm` is copied out of the
/// rows of `K_nm`, so the two agree bit for bit.
pub fn gram_cross(spec: &KernelSpec, x: &SampleSet, rows: &[usize]) -> Result<(Mat<f64>, Mat<f64>)> {
    check_indices(x.len(), rows)?;
    let sub = x.subset(rows)?;
    let k_nm = cross_gram(spec, x, &sub)?;
    let m = rows.len();
    let k_mm = Mat::from_fn(m, m, |i, j| k_nm[(rows[i], j)]);
    Ok((k_mm, k_nm))
}

/// `m` distinct indices drawn uniformly without replacement from `0..n`.
pub fn subsample_uniform(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(input_err!("subsample size {m} must lie in 1..={n}"));
    }
    let mut rng = rng_from_seed(seed);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

/// Random feature family behind an [`RffMap`].
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureFamily {
    /// Bochner features of the Gaussian kernel:
    /// `φ(x, (w, b)) = √2 cos(wᵀx + b)`, `w ~ N(0, σ⁻² I)`, `b ~ U[0, 2π)`.
    Fourier { dim: usize, bandwidth: f64, weights: Vec<f64>, phases: Vec<f64> },
    /// Features of a [`SpectralKernel`]: basis index `i` drawn with
    /// probability `λ_i / Σλ`, `φ(x, i) = √(Σλ) e_i(x)`.
    Sine { total_mass: f64, frequencies: Vec<u32> },
    /// Random-sign features of a [`SpectralKernel`]:
    /// `φ(x, s) = Σ_f s_f √λ_f e_f(x)` with independent Rademacher `s_f`.
    /// `signs` holds `m × D` entries, row-major by feature.
    SignedSine { eigenvalues: Vec<f64>, frequencies: Vec<u32>, signs: Vec<i8> },
}

/// Approximate feature map `Φ_m(x) = m^{-1/2} (φ(x, θ_1), …, φ(x, θ_m))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    family: FeatureFamily,
    seed: u64,
}

impl RffMap {
    pub fn gaussian(dim: usize, bandwidth: f64, m: usize, seed: u64) -> Result<Self> {
        if m == 0 || dim == 0 {
            return Err(input_err!("feature map needs m >= 1 and dim >= 1"));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(input_err!("bandwidth must be positive, got {bandwidth}"));
        }
        let mut rng = rng_from_seed(seed);
        let weights = (0..m * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / bandwidth
            })
            .collect();
        let phases = (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Ok(Self { family: FeatureFamily::Fourier { dim, bandwidth, weights, phases }, seed })
    }

    pub fn spectral(kernel: &SpectralKernel, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(input_err!("feature map needs m >= 1"));
        }
        let total = kernel.total_mass();
        let mut cdf = Vec::with_capacity(kernel.len());
        let mut acc = 0.0;
        for l in kernel.eigenvalues() {
            acc += l / total;
            cdf.push(acc);
        }
        let mut rng = rng_from_seed(seed);
        let frequencies = (0..m)
            .map(|_| {
                let u = rng.random::<f64>();
                let idx = cdf.partition_point(|&c| c <= u).min(kernel.len() - 1);
                kernel.frequencies()[idx]
            })
            .collect();
        Ok(Self { family: FeatureFamily::Sine { total_mass: total, frequencies }, seed })
    }

    /// Random-sign features; unlike [`RffMap::spectral`] distinct features
    /// are almost surely linearly independent.
    pub fn signed_spectral(kernel: &SpectralKernel, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(input_err!("feature map needs m >= 1"));
        }
        let mut rng = rng_from_seed(seed);
        let signs = (0..m * kernel.len()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Ok(Self {
            family: FeatureFamily::SignedSine {
                eigenvalues: kernel.eigenvalues().to_vec(),
                frequencies: kernel.frequencies().to_vec(),
                signs,
            },
            seed,
        })
    }

    pub fn from_family(family: FeatureFamily, seed: u64) -> Result<Self> {
        match &family {
            FeatureFamily::Fourier { dim, bandwidth, weights, phases } => {
                if *dim == 0 || phases.is_empty() || weights.len() != dim * phases.len() {
                    return Err(dim_err!("fourier map needs m phases and m x dim weights"));
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(input_err!("bandwidth must be positive"));
                }
                if weights.iter().chain(phases).any(|v| !v.is_finite()) {
                    return Err(input_err!("non-finite feature parameter"));
                }
            }
            FeatureFamily::Sine { total_mass, frequencies } => {
                if frequencies.is_empty() || frequencies.contains(&0) {
                    return Err(input_err!("sine map needs m >= 1 positive frequencies"));
                }
                if !(total_mass.is_finite() && *total_mass > 0.0) {
                    return Err(input_err!("sine map total mass must be positive"));
                }
            }
            FeatureFamily::SignedSine { eigenvalues, frequencies, signs } => {
                SpectralKernel::new(eigenvalues.clone(), frequencies.clone())?;
                if signs.is_empty() || signs.len() % eigenvalues.len() != 0 {
                    return Err(dim_err!("signed sine map needs m x D signs"));
                }
                if signs.iter().any(|s| *s != 1 && *s != -1) {
                    return Err(input_err!("signs must be +1 or -1"));
                }
            }
        }
        Ok(Self { family, seed })
    }

    pub fn family(&self) -> &FeatureFamily {
        &self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_features(&self) -> usize {
        match &self.family {
            FeatureFamily::Fourier { phases, .. } => phases.len(),
            FeatureFamily::Sine { frequencies, .. } => frequencies.len(),
            FeatureFamily::SignedSine { eigenvalues, signs, .. } => signs.len() / eigenvalues.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.family {
            FeatureFamily::Fourier { dim, .. } => *dim,
            FeatureFamily::Sine { .. } | FeatureFamily::SignedSine { .. } => 1,
        }
    }

    /// Whether this map approximates `kernel` (same bandwidth, or same
    /// spectral mass).
    pub fn approximates(&self, kernel: &KernelSpec) -> bool {
        match (&self.family, kernel) {
            (FeatureFamily::Fourier { bandwidth, .. }, KernelSpec::Gaussian { bandwidth: b }) => {
                bandwidth == b
            }
            (FeatureFamily::Sine { total_mass, frequencies }, KernelSpec::Spectral(s)) => {
                libm::fabs(total_mass - s.total_mass()) <= 1e-12 * s.total_mass()
                    && frequencies.iter().all(|f| s.frequencies().contains(f))
            }
            (FeatureFamily::SignedSine { eigenvalues, frequencies, .. }, KernelSpec::Spectral(s)) => {
                eigenvalues == s.eigenvalues() && frequencies == s.frequencies()
            }
            _ => false,
        }
    }

    /// Writes `Φ_m(x)` into `out`.
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.num_features();
        let norm = 1.0 / libm::sqrt(m as f64);
        match &self.family {
            FeatureFamily::Fourier { dim, weights, phases, .. } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let w = &weights[j * dim..(j + 1) * dim];
                    *o = norm * SQRT_2 * libm::cos(dot(w, x) + phases[j]);
                }
            }
            FeatureFamily::Sine { total_mass, frequencies } => {
                let s = norm * libm::sqrt(*total_mass);
                for (o, &f) in out.iter_mut().zip(frequencies) {
                    *o = s * sine_basis(f, x[0]);
                }
            }
            FeatureFamily::SignedSine { eigenvalues, frequencies, signs } => {
                let d = eigenvalues.len();
                let psi: Vec<f64> = frequencies
                    .iter()
                    .zip(eigenvalues)
                    .map(|(&f, l)| libm::sqrt(*l) * sine_basis(f, x[0]))
                    .collect();
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &signs[j * d..(j + 1) * d];
                    let v: f64 = row.iter().zip(&psi).map(|(s, p)| f64::from(*s) * p).sum();
                    *o = norm * v;
                }
            }
        }
    }

    /// For sine-based maps, `(frequencies, Q)` with `Φ_m(x)_j = Σ_c Q[j][c] e_{f_c}(x)`
    /// over the listed frequencies; `None` for Fourier maps.
    pub fn sine_coordinates(&self) -> Option<(Vec<u32>, Vec<Vec<f64>>)> {
        let m = self.num_features();
        let norm = 1.0 / libm::sqrt(m as f64);
        match &self.family {
            FeatureFamily::Fourier { .. } => None,
            FeatureFamily::Sine { total_mass, frequencies } => {
                let mut freqs = frequencies.clone();
                freqs.sort_unstable();
                freqs.dedup();
                let s = norm * libm::sqrt(*total_mass);
                let q = frequencies
                    .iter()
                    .map(|f| {
                        let mut row = vec![0.0; freqs.len()];
                        row[freqs.binary_search(f).unwrap_or(0)] = s;
                        row
                    })
                    .collect();
                Some((freqs, q))
            }
            FeatureFamily::SignedSine { eigenvalues, frequencies, signs } => {
                let d = eigenvalues.len();
                let q = (0..m)
                    .map(|j| {
                        (0..d).map(|c| norm * f64::from(signs[j * d + c]) * libm::sqrt(eigenvalues[c])).collect()
                    })
                    .collect();
                Some((frequencies.clone(), q))
            }
        }
    }

    /// `k_m(x, y) = ⟨Φ_m(x), Φ_m(y)⟩`.
    pub fn approx_kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.num_features();
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        self.features_into(x, &mut a);
        self.features_into(y, &mut b);
        dot(&a, &b)
    }
}

/// `n x m` matrix whose row `t` is `Φ_m(X_t)`.
pub fn rff_features(map: &RffMap, x: &SampleSet) -> Result<Mat<f64>> {
    if x.dim() != map.input_dim() {
        return Err(dim_err!("map expects dimension {}, samples have {}", map.input_dim(), x.dim()));
    }
    if let FeatureFamily::Sine { .. } | FeatureFamily::SignedSine { .. } = map.family() {
        if x.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("sine features are defined on [0, 1] only".into()));
        }
    }
    let m = map.num_features();
    let mut out = Mat::<f64>::zeros(x.len(), m);
    let mut row = vec![0.0; m];
    for (i, p) in x.points().enumerate() {
        map.features_into(p, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}
