//! Exact population quantities for the spectral kernel under the uniform
//! law on `[0, 1]`.
//!
//! In feature coordinates `x ↦ (√λ_i e_i(x))_i` the RKHS is `R^D` with the
//! Euclidean inner product, the uncentered covariance is `diag(λ)` and the
//! centered covariance is `S = Λ^{1/2} (I - μμᵀ) Λ^{1/2}` with
//! `μ_i = ∫ e_i dP`.

use alloc::format;
use alloc::vec::Vec;

use faer::Mat;

use crate::error::{input_err, Error, Result};
use crate::kernels::{sine_basis, KernelSpec, SpectralKernel};
use crate::linalg::{sym_eig, trace};

/// Default grid for the sup in `N_{C,∞}`.
pub const DEFAULT_GRID: usize = 10_000;

#[derive(Debug, Clone)]
pub struct OracleSpectrum {
    /// Descending eigenvalues of the centered covariance `Σ`.
    pub sigma_eigs: Vec<f64>,
    /// Eigenvectors of `Σ` in feature coordinates (columns).
    pub sigma_vectors: Mat<f64>,
    /// Descending eigenvalues of the uncentered covariance `C`.
    pub c_eigs: Vec<f64>,
    /// Coordinates of the mean element `m_P`.
    pub mean_coeffs: Vec<f64>,
    /// `‖m_P‖²_H`.
    pub mp_sq_norm: f64,
    /// `μ_i = ∫ e_i dP`.
    pub basis_means: Vec<f64>,
    /// The matrix `S` of `Σ` in feature coordinates.
    pub covariance: Mat<f64>,
    /// Smallest relative gap `(λ_i - λ_{i+1}) / λ_1` in `sigma_eigs`.
    pub min_relative_gap: f64,
}

/// Builds the population oracle of a spectral kernel and asserts its
/// invariants: `λ(C) = λ^feat`, `tr Σ = Σλ^feat - ‖m_P‖²`, and interlacing
/// `λ_i(Σ) ≤ λ_i(C)`.
pub fn build_oracle(spec: &KernelSpec) -> Result<OracleSpectrum> {
    let kernel = spec
        .as_spectral()
        .ok_or_else(|| Error::Unsupported("population oracle exists for the spectral kernel only".into()))?;
    let lam = kernel.eigenvalues();
    let d = lam.len();
    let mu = kernel.basis_means();
    let sqrt_l: Vec<f64> = lam.iter().map(|l| libm::sqrt(*l)).collect();
    let covariance = Mat::from_fn(d, d, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        sqrt_l[i] * sqrt_l[j] * (delta - mu[i] * mu[j])
    });
    let eig = sym_eig(covariance.as_ref())?;
    let mean_coeffs: Vec<f64> = sqrt_l.iter().zip(&mu).map(|(s, m)| s * m).collect();
    let mp_sq_norm: f64 = mean_coeffs.iter().map(|c| c * c).sum();
    let c_eigs = lam.to_vec();

    let total: f64 = lam.iter().sum();
    let tr_sigma: f64 = eig.values.iter().sum();
    if libm::fabs(tr_sigma - (total - mp_sq_norm)) > 1e-10 * total {
        return Err(Error::Invariant(format!(
            "trace identity: tr Σ = {tr_sigma}, Σλ - ‖m_P‖² = {}",
            total - mp_sq_norm
        )));
    }
    if libm::fabs(trace(covariance.as_ref()) - tr_sigma) > 1e-10 * total {
        return Err(Error::Invariant("eigenvalues do not sum to the trace".into()));
    }
    for (i, (s, c)) in eig.values.iter().zip(&c_eigs).enumerate() {
        if *s > c + 1e-12 * lam[0] {
            return Err(Error::Invariant(format!("interlacing fails at {i}: {s} > {c}")));
        }
    }
    if eig.values.last().copied().unwrap_or(0.0) < -1e-12 * lam[0] {
        return Err(Error::Invariant("negative covariance eigenvalue".into()));
    }
    let lead = eig.values[0];
    let min_relative_gap = eig
        .values
        .windows(2)
        .map(|w| (w[0] - w[1]) / lead)
        .fold(f64::INFINITY, f64::min);
    if min_relative_gap <= 1e-12 {
        log::warn!(
            "covariance spectrum has a numerically repeated eigenvalue (relative gap {min_relative_gap:e}); \
             eigenspaces at that index are not unique"
        );
    }
    Ok(OracleSpectrum {
        sigma_eigs: eig.values,
        sigma_vectors: eig.vectors,
        c_eigs,
        mean_coeffs,
        mp_sq_norm,
        basis_means: mu,
        covariance,
        min_relative_gap,
    })
}

/// Constants `A ≤ λ_i i^α ≤ Ā` fitted over the first `count` eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConstants {
    pub lower: f64,
    pub upper: f64,
}

impl OracleSpectrum {
    pub fn dim(&self) -> usize {
        self.sigma_eigs.len()
    }

    pub fn trace(&self) -> f64 {
        self.sigma_eigs.iter().sum()
    }

    /// `N_Σ(t) = tr Σ(Σ + tI)^{-1}`.
    pub fn effective_dim(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(input_err!("effective dimension needs t > 0, got {t}"));
        }
        Ok(self.sigma_eigs.iter().map(|l| l.max(0.0) / (l.max(0.0) + t)).sum())
    }

    /// Grid lower bound of `N_{C,∞}(t) = sup_x ⟨k(·,x), (C + tI)^{-1} k(·,x)⟩`,
    /// which in feature coordinates is `sup_x Σ λ_i e_i(x)² / (λ_i + t)`.
    /// The grid is `{j / grid_size : 0 ≤ j ≤ grid_size}`.
    pub fn effective_dim_infty(&self, kernel: &SpectralKernel, t: f64, grid_size: usize) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(input_err!("effective dimension needs t > 0, got {t}"));
        }
        if grid_size < 1000 {
            return Err(input_err!("grid_size must be at least 1000, got {grid_size}"));
        }
        if kernel.len() != self.dim() {
            return Err(input_err!("kernel does not match the oracle"));
        }
        let weights: Vec<f64> = self.c_eigs.iter().map(|l| l / (l + t)).collect();
        let mut best = 0.0f64;
        for j in 0..=grid_size {
            let x = j as f64 / grid_size as f64;
            let v: f64 = kernel
                .frequencies()
                .iter()
                .zip(&weights)
                .map(|(&f, w)| {
                    let e = sine_basis(f, x);
                    w * e * e
                })
                .sum();
            best = best.max(v);
        }
        Ok(best)
    }

    /// `(Σ_{i>ℓ} λ_i, Σ_{i>ℓ} λ_i²)`: the population reconstruction errors in
    /// the RKHS and `L²(P)` norms.
    pub fn population_recon(&self, ell: usize) -> Result<(f64, f64)> {
        if ell > self.dim() {
            return Err(input_err!("ℓ = {ell} exceeds the oracle dimension {}", self.dim()));
        }
        let tail = &self.sigma_eigs[ell..];
        Ok((tail.iter().sum(), tail.iter().map(|l| l * l).sum()))
    }

    /// `m_P(x) = Σ λ_i μ_i e_i(x)`.
    pub fn mean_function(&self, kernel: &SpectralKernel, x: f64) -> f64 {
        kernel
            .frequencies()
            .iter()
            .zip(kernel.eigenvalues())
            .zip(&self.basis_means)
            .map(|((&f, l), mu)| l * mu * sine_basis(f, x))
            .sum()
    }

    /// `⟨f, m_P⟩_H` for `f` given in feature coordinates.
    pub fn mp_inner(&self, coeffs: &[f64]) -> Result<f64> {
        if coeffs.len() != self.dim() {
            return Err(input_err!("expected {} coordinates, got {}", self.dim(), coeffs.len()));
        }
        Ok(coeffs.iter().zip(&self.mean_coeffs).map(|(a, b)| a * b).sum())
    }

    /// Top-`ℓ` eigenfunctions of `Σ` as rows in feature coordinates.
    pub fn top_eigenfunctions(&self, ell: usize) -> Result<Mat<f64>> {
        if ell > self.dim() {
            return Err(input_err!("ℓ = {ell} exceeds the oracle dimension {}", self.dim()));
        }
        Ok(Mat::from_fn(ell, self.dim(), |i, j| self.sigma_vectors[(j, i)]))
    }

    /// `min` and `max` of `λ_i(Σ) i^α` over `i ≤ count`.
    pub fn decay_constants(&self, alpha: f64, count: usize) -> DecayConstants {
        let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
        for (i, l) in self.sigma_eigs.iter().take(count).enumerate() {
            let r = l * libm::pow((i + 1) as f64, alpha);
            lower = lower.min(r);
            upper = upper.max(r);
        }
        DecayConstants { lower, upper }
    }

    /// Whether `lower i^{-α} ≤ λ_i(Σ) ≤ upper i^{-α}` for all `i ≤ count`.
    pub fn decay_sandwich_holds(&self, alpha: f64, count: usize, lower: f64, upper: f64) -> bool {
        let c = self.decay_constants(alpha, count);
        c.lower >= lower && c.upper <= upper
    }
}

/// `Σ_{i>D} i^{-α} / Σ_{i≥1} i^{-α}`: the mass a polynomial-decay profile
/// loses by truncating at `D` terms (integral tail estimate).
pub fn truncation_tail_ratio(alpha: f64, size: usize) -> f64 {
    if alpha <= 1.0 {
        return 1.0;
    }
    let head: f64 = (1..=size).map(|i| libm::pow(i as f64, -alpha)).sum();
    let tail = libm::pow(size as f64 + 0.5, 1.0 - alpha) / (alpha - 1.0);
    tail / (head + tail)
}

/// Feature-coordinate vector of the mean element for an even-frequency
/// restricted kernel is zero; exposed for fixtures.
pub fn zero_mean_kernel(size: usize, alpha: f64) -> Result<SpectralKernel> {
    let eigenvalues = (1..=size).map(|i| libm::pow(i as f64, -alpha)).collect();
    let frequencies = (1..=size as u32).map(|i| 2 * i).collect();
    SpectralKernel::new(eigenvalues, frequencies)
}
