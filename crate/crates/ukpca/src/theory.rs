//! Theoretical rates and finite-sample bound values for the logged
//! theory-vs-empirics comparison. Only defined where the population
//! oracle exists.

use serde::Serialize;
use ukpca_core::kernels::SpectralKernel;
use ukpca_core::oracle::OracleSpectrum;
use ukpca_core::recon::Norm;
use ukpca_core::{Result, Variant};

/// Confidence parameter used for every logged bound.
pub const DELTA: f64 = 0.05;

/// `ℓ = ⌈n^{θ/α}⌉`.
pub fn ell_for(n: usize, theta: f64, alpha: f64) -> usize {
    ((n as f64).powf(theta / alpha) - 1e-9).ceil().max(1.0) as usize
}

/// `θ` threshold beyond which the recentring term dominates in `L²(P)`.
pub fn l2_critical_theta(alpha: f64) -> f64 {
    alpha / (2.0 * alpha - 1.0)
}

/// `t = n^{-min(θ, α/(2α-1))}`.
pub fn t_for(n: usize, theta: f64, alpha: f64) -> f64 {
    (n as f64).powf(-theta.min(l2_critical_theta(alpha)))
}

/// Predicted log-log slope of the mean error against `n`.
pub fn predicted_slope(variant: Variant, norm: Norm, theta: f64, alpha: f64, rff_gamma: f64) -> f64 {
    let h = if theta < 1.0 { -theta * (1.0 - 1.0 / alpha) } else { -(1.0 - 1.0 / alpha) };
    let l2 = if theta < l2_critical_theta(alpha) { -2.0 * theta * (1.0 - 1.0 / (2.0 * alpha)) } else { -1.0 };
    match (variant, norm) {
        (_, Norm::H) => h,
        (Variant::Rff, Norm::L2) if rff_gamma < 1.0f64.min(theta * (2.0 - 1.0 / alpha)) => -rff_gamma,
        (_, Norm::L2) => l2,
    }
}

/// Theory quantities for one `(n, ℓ, t)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellTheory {
    pub n: usize,
    pub ell: usize,
    pub t: f64,
    pub kappa: f64,
    pub n_sigma: f64,
    pub n_c_inf: f64,
    pub ekpca_h: f64,
    pub nystrom_h: f64,
    pub ekpca_l2: f64,
    pub nystrom_l2: f64,
    /// `None` when no random-feature count was given.
    pub rff_l2: Option<f64>,
    /// `(67 ∨ 5N_{C,∞}(t)) log(4κ/tδ)`.
    pub m_threshold: f64,
    /// The additional `(140κ/t) log(8/tδ)` requirement.
    pub m_threshold_extra: f64,
    /// Whether `t` lies in the admissible window for the empirical bounds.
    pub t_admissible: bool,
}

impl CellTheory {
    pub fn compute(
        oracle: &OracleSpectrum,
        kernel: &SpectralKernel,
        kappa: f64,
        n: usize,
        ell: usize,
        t: f64,
        m_rff: Option<usize>,
    ) -> Result<Self> {
        let l2d = (2.0 / DELTA).ln();
        let nf = n as f64;
        let n_sigma = oracle.effective_dim(t)?;
        let n_c_inf = oracle.effective_dim_infty(kernel, t, ukpca_core::oracle::DEFAULT_GRID)?;
        let lam = oracle.sigma_eigs.get(ell).copied().unwrap_or(0.0).max(0.0);
        let rff_l2 = m_rff.map(|m| {
            let mf = m as f64;
            let a1 = n_sigma + 16.0 * kappa * l2d / (t * mf) + (8.0 * kappa * n_sigma * l2d / (t * mf)).sqrt();
            162.0 * a1 * (lam + t).powi(2) + 640.0 * kappa * kappa * l2d / (3.0 * nf) + 256.0 * kappa * kappa * l2d / mf
        });
        let sigma_norm = oracle.sigma_eigs.first().copied().unwrap_or(0.0);
        let lower = 140.0 * kappa / nf * (16.0 * kappa * nf / DELTA).ln();
        Ok(Self {
            n,
            ell,
            t,
            kappa,
            n_sigma,
            n_c_inf,
            ekpca_h: 3.0 * n_sigma * (lam + t) + 32.0 * kappa * l2d / nf,
            nystrom_h: 6.0 * n_sigma * (lam + 9.0 * t) + 32.0 * kappa * l2d / nf,
            ekpca_l2: 9.0 * n_sigma * (lam + t).powi(2) + 64.0 * kappa * kappa * l2d / nf,
            nystrom_l2: 36.0 * n_sigma * (lam + 9.0 * t).powi(2) + 32.0 * kappa * kappa * l2d / nf,
            rff_l2,
            m_threshold: 67f64.max(5.0 * n_c_inf) * (4.0 * kappa / (t * DELTA)).ln(),
            m_threshold_extra: 140.0 * kappa / t * (8.0 / (t * DELTA)).ln(),
            t_admissible: lower <= t && t <= sigma_norm,
        })
    }

    /// Whether a Nyström size meets the main subsample condition.
    pub fn m_ok(&self, m: usize) -> bool {
        m as f64 >= self.m_threshold
    }

    pub fn bound(&self, variant: Variant, norm: Norm) -> Option<f64> {
        match (variant, norm) {
            (Variant::Ekpca, Norm::H) => Some(self.ekpca_h),
            (Variant::Nystrom, Norm::H) => Some(self.nystrom_h),
            (Variant::Ekpca, Norm::L2) => Some(self.ekpca_l2),
            (Variant::Nystrom, Norm::L2) => Some(self.nystrom_l2),
            (Variant::Rff, Norm::L2) => self.rff_l2,
            (Variant::Rff, Norm::H) => None,
        }
    }
}
