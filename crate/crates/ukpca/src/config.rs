//! Experiment configuration: a TOML file of `key = value` lines and lists.
//!
//! ```toml
//! n = [200, 400, 800]
//! variants = ["ekpca", "nystrom"]
//! trials = 5
//! ```
//!
//! Every other key has a default; see [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use serde::Deserialize;
use ukpca_core::recon::Norm;
use ukpca_core::{KernelSpec, Variant};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Spectral,
    Gaussian,
    Linear,
    Polynomial,
}

/// Nyström subsample size as a function of `n` (always capped at `n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MRule {
    /// `m = n`.
    Full,
    /// `m = m_const`.
    Fixed,
    /// `m = ⌈c n^θ log n⌉`.
    ThetaLog,
    /// `m = ⌈c n^{α/(2α-1)} log n⌉`.
    AlphaLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RffFamily {
    /// Random-sign sine features; full rank with high probability.
    Signed,
    /// Basis indices drawn proportionally to the eigenvalues.
    Sampled,
    /// Gaussian Bochner features, for the Gaussian kernel.
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Average over fresh test points.
    MonteCarlo,
    /// Closed-form expectation over the test point where available.
    Exact,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kernel: KernelKind,
    /// Decay exponent of the spectral kernel, and of the rate predictions.
    pub alpha: f64,
    /// Number of basis functions of the spectral kernel.
    pub size: usize,
    pub bandwidth: f64,
    pub degree: u32,
    pub offset: f64,
    /// Input dimension for the non-spectral kernels.
    pub dim: usize,
    /// Eigenspace growth: `ℓ = ⌈n^{θ/α}⌉`.
    pub theta: f64,
    pub n: Vec<usize>,
    pub m_rule: MRule,
    pub m_const: f64,
    /// Random-feature count `m = ⌈n^γ⌉`.
    pub rff_gamma: f64,
    pub rff_family: RffFamily,
    pub variants: Vec<String>,
    pub norms: Vec<String>,
    pub trials: usize,
    pub seed: u64,
    pub n_test: usize,
    pub n_inner: usize,
    pub evaluation: Evaluation,
    /// Slope tolerance for the RKHS norm.
    pub tolerance_h: f64,
    /// Slope tolerance for `L²(P)`.
    pub tolerance_l2: f64,
    pub rows: PathBuf,
    pub rates: PathBuf,
    pub plot: PathBuf,
    /// Per-cell theory table; only written when set.
    pub theory: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Spectral,
            alpha: 2.0,
            size: 200,
            bandwidth: 0.2,
            degree: 2,
            offset: 1.0,
            dim: 1,
            theta: 0.5,
            n: vec![200, 400, 800, 1600],
            m_rule: MRule::ThetaLog,
            m_const: 3.0,
            rff_gamma: 0.4,
            rff_family: RffFamily::Signed,
            variants: vec!["ekpca".into(), "nystrom".into()],
            norms: vec!["H".into(), "L2".into()],
            trials: 20,
            seed: 0,
            n_test: 10_000,
            n_inner: 10_000,
            evaluation: Evaluation::MonteCarlo,
            tolerance_h: 0.1,
            tolerance_l2: 0.12,
            rows: "rows.csv".into(),
            rates: "rates.csv".into(),
            plot: "plot.dat".into(),
            theory: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() as u64 + 1).unwrap_or(0);
            CliError::Parse { path: path.into(), line, msg: e.message().to_string() }
        })?;
        cfg.validate().map_err(|msg| CliError::Config { path: path.into(), msg })?;
        Ok(cfg)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must exceed 1, got {}", self.alpha));
        }
        if !(self.theta > 0.0 && self.theta <= self.alpha) {
            return Err(format!("theta must lie in (0, alpha], got {}", self.theta));
        }
        if self.n.is_empty() || self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err("n must be a non-empty, strictly increasing list".into());
        }
        if self.n[0] < 2 {
            return Err("every n must be at least 2".into());
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.n_test == 0 || self.n_inner < 2 {
            return Err("n_test must be positive and n_inner at least 2".into());
        }
        if !(self.m_const > 0.0) {
            return Err("m_const must be positive".into());
        }
        if !(self.rff_gamma > 0.0 && self.rff_gamma <= 1.0) {
            return Err(format!("rff_gamma must lie in (0, 1], got {}", self.rff_gamma));
        }
        self.variants()?;
        self.norms()?;
        self.kernel_spec().map_err(|e| e.to_string())?;
        if self.kernel == KernelKind::Spectral && self.dim != 1 {
            return Err("the spectral kernel is defined on [0, 1]; dim must be 1".into());
        }
        match (self.rff_family, self.kernel) {
            (RffFamily::Fourier, KernelKind::Gaussian) | (RffFamily::Signed | RffFamily::Sampled, KernelKind::Spectral) => {}
            _ if !self.variants()?.contains(&Variant::Rff) => {}
            (f, k) => return Err(format!("rff_family {f:?} does not approximate the {k:?} kernel")),
        }
        Ok(())
    }

    pub fn variants(&self) -> std::result::Result<Vec<Variant>, String> {
        let mut v = self
            .variants
            .iter()
            .map(|s| Variant::parse(s).ok_or_else(|| format!("unknown variant '{s}'")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("variants must not be empty".into());
        }
        v.sort();
        v.dedup();
        Ok(v)
    }

    pub fn norms(&self) -> std::result::Result<Vec<Norm>, String> {
        let mut v = self
            .norms
            .iter()
            .map(|s| Norm::parse(s).ok_or_else(|| format!("unknown norm '{s}'")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("norms must not be empty".into());
        }
        v.sort();
        v.dedup();
        Ok(v)
    }

    pub fn kernel_spec(&self) -> ukpca_core::Result<KernelSpec> {
        match self.kernel {
            KernelKind::Spectral => KernelSpec::spectral(self.alpha, self.size),
            KernelKind::Gaussian => KernelSpec::gaussian(self.bandwidth),
            KernelKind::Linear => Ok(KernelSpec::Linear),
            KernelKind::Polynomial => KernelSpec::polynomial(self.degree, self.offset),
        }
    }

    pub fn ell(&self, n: usize) -> usize {
        crate::theory::ell_for(n, self.theta, self.alpha)
    }

    pub fn nystrom_m(&self, n: usize) -> usize {
        let nf = n as f64;
        let m = match self.m_rule {
            MRule::Full => return n,
            MRule::Fixed => self.m_const,
            MRule::ThetaLog => self.m_const * nf.powf(self.theta) * nf.ln(),
            MRule::AlphaLog => self.m_const * nf.powf(crate::theory::l2_critical_theta(self.alpha)) * nf.ln(),
        };
        (m.ceil() as usize).clamp(1, n)
    }

    pub fn rff_m(&self, n: usize) -> usize {
        ((n as f64).powf(self.rff_gamma) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn t(&self, n: usize) -> f64 {
        crate::theory::t_for(n, self.theta, self.alpha)
    }

    pub fn tolerance(&self, norm: Norm) -> f64 {
        match norm {
            Norm::H => self.tolerance_h,
            Norm::L2 => self.tolerance_l2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(s, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse("n = [50, 100, 200]\nvariants = [\"ekpca\"]\ntrials = 2\n").unwrap();
        assert_eq!(c.trials, 2);
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.variants().unwrap(), vec![Variant::Ekpca]);
    }

    #[test]
    fn m_rules() {
        let c = parse("n = [200, 400, 800, 1600]").unwrap();
        let ms: Vec<usize> = c.n.iter().map(|&n| c.nystrom_m(n)).collect();
        assert_eq!(ms, vec![200, 360, 568, 886]);
        assert_eq!(c.rff_m(1600), 20);
        let c = parse("n = [10, 20]\nm_rule = \"full\"").unwrap();
        assert_eq!(c.nystrom_m(20), 20);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            "n = [100, 50]",
            "n = [50]\ntheta = 3.0",
            "n = [50]\ntrials = 0",
            "n = [50]\nvariants = [\"pca\"]",
            "n = [50]\nunknown_key = 1",
            "n = [50]\nkernel = \"gaussian\"\nvariants = [\"rff\"]",
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse("trials = 1\nn = [1, \n") {
            Err(CliError::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
        // an error at the start of a line belongs to that line
        match parse("trials = 1\nseed = 2\nbogus = 3\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("trials = \"x\"\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
