//! Convergence sweeps: fit every variant over an `n` schedule, measure
//! reconstruction errors on fresh points, and fit log-log rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ukpca_core::estimators::{fit_ekpca, fit_nystrom, fit_rff, Expansion, KpcaModel, Variant};
use ukpca_core::kernels::{gram, gram_cross, rff_features, subsample_uniform, KernelSpec, RffMap, SampleSet};
use ukpca_core::linalg::DEFAULT_RTOL;
use ukpca_core::oracle::{build_oracle, OracleSpectrum};
use ukpca_core::recon::{
    exact_recon, recon_h, recon_l2, recon_rff_l2, FeatureProjection, MeanSource, Norm, ReconContext, ReconReport, Target,
};
use ukpca_core::rng::derive_seed;
use ukpca_core::Error as CoreError;

use crate::config::{Evaluation, ExperimentConfig, RffFamily};
use crate::error::{CliError, Result};
use crate::theory::{predicted_slope, CellTheory};

pub const ROWS_HEADER: &str = "variant,norm,n,m,ell,t,trial,estimate,se,n_test,seed";
pub const RATES_HEADER: &str = "group,slope,slope_se,predicted,R2,pass";

/// Seed streams below a `(n, trial)` cell.
mod stream {
    pub const SAMPLE: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const FEATURES: u64 = 3;
    pub const TEST: u64 = 4;
    pub const INNER: u64 = 5;
    pub const PROXY: u64 = 6;
}

/// Proxy sample size per training point for kernels without an oracle.
pub const PROXY_FACTOR: usize = 10;

/// One measured reconstruction error.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub variant: Variant,
    pub norm: Norm,
    pub n: usize,
    pub m: usize,
    pub ell: usize,
    pub t: f64,
    pub trial: usize,
    pub estimate: f64,
    pub se: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl Row {
    fn from_report(r: &ReconReport, variant: Variant, trial: usize, t: f64) -> Self {
        Self {
            variant,
            norm: r.norm,
            n: r.n,
            m: r.m,
            ell: r.ell,
            t,
            trial,
            estimate: r.estimate,
            se: r.se,
            n_test: r.n_test,
            seed: r.seed,
        }
    }

    fn key(&self) -> (Variant, Norm, usize, usize) {
        (self.variant, self.norm, self.n, self.trial)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.variant, self.norm, self.n, self.m, self.ell, self.t, self.trial, self.estimate, self.se, self.n_test, self.seed
        )
    }
}

/// Mean error of one `(variant, norm, n)` cell across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean across trials (the Monte Carlo SE for a
    /// single trial).
    pub se: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub variant: Variant,
    pub norm: Norm,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
    pub predicted: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub cells: Vec<CellStat>,
}

impl RateFit {
    pub fn group(&self) -> String {
        format!("{}/{}", self.variant, self.norm)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    /// Sorted by variant, norm, `n`, trial.
    pub rows: Vec<Row>,
    /// One entry per `n` when the oracle exists.
    pub theory: Vec<CellTheory>,
    /// Reasons for skipped cells, in sweep order.
    pub skipped: Vec<String>,
}

/// Per-cell means and standard errors, ordered by `n`.
pub fn cell_stats(rows: &[Row], variant: Variant, norm: Norm) -> Vec<CellStat> {
    let mut by_n: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.variant == variant && r.norm == norm) {
        by_n.entry(r.n).or_default().push(r);
    }
    by_n.into_iter()
        .map(|(n, rs)| {
            let vals: Vec<f64> = rs.iter().map(|r| r.estimate).collect();
            let (mean, se) = ukpca_core::recon::mean_and_se(&vals);
            let se = if rs.len() == 1 { rs[0].se } else { se };
            CellStat { n, mean, se, trials: rs.len() }
        })
        .collect()
}

/// Ordinary least squares of `log(mean error)` on `log n`.
pub fn fit_rate(rows: &[Row], variant: Variant, norm: Norm, predicted: f64, tolerance: f64) -> Result<RateFit> {
    let cells = cell_stats(rows, variant, norm);
    if cells.len() < 3 {
        return Err(CliError::Input(format!(
            "rate for {variant}/{norm} needs at least 3 distinct n values, got {}",
            cells.len()
        )));
    }
    if let Some(c) = cells.iter().find(|c| !(c.mean > 0.0)) {
        return Err(CliError::Input(format!("mean error at n={} is {}; cannot take logs", c.n, c.mean)));
    }
    let x: Vec<f64> = cells.iter().map(|c| (c.n as f64).ln()).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.mean.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = (ssr / (k - 2.0) / sxx).sqrt();
    let r2 = if sst == 0.0 { 1.0 } else { 1.0 - ssr / sst };
    Ok(RateFit {
        variant,
        norm,
        slope,
        intercept,
        slope_se,
        r2,
        predicted,
        tolerance,
        pass: (slope - predicted).abs() <= tolerance,
        cells,
    })
}

/// Rates for every `(variant, norm)` group present in the rows. Groups with
/// fewer than three `n` values are skipped with a warning.
pub fn fit_rates(cfg: &ExperimentConfig, rows: &[Row]) -> Vec<RateFit> {
    let mut groups: Vec<(Variant, Norm)> = rows.iter().map(|r| (r.variant, r.norm)).collect();
    groups.sort();
    groups.dedup();
    groups
        .into_iter()
        .filter_map(|(v, norm)| {
            let predicted = predicted_slope(v, norm, cfg.theta, cfg.alpha, cfg.rff_gamma);
            match fit_rate(rows, v, norm, predicted, cfg.tolerance(norm)) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("no rate for {v}/{norm}: {e}");
                    None
                }
            }
        })
        .collect()
}

/// Shared, read-only state of a sweep.
struct Setup<'a> {
    cfg: &'a ExperimentConfig,
    spec: KernelSpec,
    oracle: Option<OracleSpectrum>,
    variants: Vec<Variant>,
    norms: Vec<Norm>,
}

/// The result of one `(n, trial)` job.
#[derive(Default)]
struct JobOutput {
    rows: Vec<Row>,
    skipped: Vec<String>,
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let spec = cfg.kernel_spec()?;
    let oracle = match build_oracle(&spec) {
        Ok(o) => Some(o),
        Err(CoreError::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let setup = Setup {
        cfg,
        spec,
        oracle,
        variants: cfg.variants().map_err(CliError::Input)?,
        norms: cfg.norms().map_err(CliError::Input)?,
    };

    let theory = theory_table(&setup)?;

    let jobs: Vec<(usize, usize)> = cfg.n.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let outputs: Vec<Result<JobOutput>> = jobs.par_iter().map(|&(n, trial)| run_job(&setup, n, trial)).collect();

    let mut out = SweepOutput { theory, ..Default::default() };
    for o in outputs {
        let o = o?;
        out.rows.extend(o.rows);
        out.skipped.extend(o.skipped);
    }
    out.rows.sort_by_key(Row::key);
    Ok(out)
}

fn theory_table(setup: &Setup<'_>) -> Result<Vec<CellTheory>> {
    let (Some(oracle), Some(kernel)) = (&setup.oracle, setup.spec.as_spectral()) else {
        return Ok(Vec::new());
    };
    let cfg = setup.cfg;
    let kappa = kernel.kappa();
    let mut out = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let m_rff = setup.variants.contains(&Variant::Rff).then(|| cfg.rff_m(n));
        let th = CellTheory::compute(oracle, kernel, kappa, n, cfg.ell(n), cfg.t(n), m_rff)?;
        log::info!(
            "n={n} ell={} t={:.4e} N_sigma={:.4} N_C_inf={:.4} t_admissible={}",
            th.ell,
            th.t,
            th.n_sigma,
            th.n_c_inf,
            th.t_admissible
        );
        if setup.variants.contains(&Variant::Nystrom) {
            let m = cfg.nystrom_m(n);
            log::info!(
                "n={n} nystrom m={m} threshold={:.1} (extra {:.1}) met={}",
                th.m_threshold,
                th.m_threshold_extra,
                th.m_ok(m)
            );
        }
        for &v in &setup.variants {
            for &norm in &setup.norms {
                if let Some(b) = th.bound(v, norm) {
                    log::info!("n={n} {v}/{norm} bound={b:.4e}");
                }
            }
        }
        out.push(th);
    }
    Ok(out)
}

fn run_job(setup: &Setup<'_>, n: usize, trial: usize) -> Result<JobOutput> {
    let cfg = setup.cfg;
    let cell = |purpose: u64| derive_seed(cfg.seed, &[n as u64, trial as u64, purpose]);
    let x = SampleSet::uniform(n, cfg.dim, cell(stream::SAMPLE));
    let ell = cfg.ell(n);
    let t = cfg.t(n);
    let mut out = JobOutput::default();

    let needs_test = cfg.evaluation == Evaluation::MonteCarlo || setup.variants.contains(&Variant::Rff);
    let test = needs_test.then(|| SampleSet::uniform(cfg.n_test, cfg.dim, cell(stream::TEST)));
    let proxy = setup
        .oracle
        .is_none()
        .then(|| SampleSet::uniform(PROXY_FACTOR * n, cfg.dim, cell(stream::PROXY)));
    let inner = (setup.oracle.is_none() && setup.norms.contains(&Norm::L2))
        .then(|| SampleSet::uniform(cfg.n_inner, cfg.dim, cell(stream::INNER)));
    let mean = match (&setup.oracle, &proxy) {
        (Some(o), _) => MeanSource::Oracle(o),
        (None, Some(p)) => MeanSource::Proxy(p),
        (None, None) => unreachable!("proxy is drawn whenever the oracle is missing"),
    };
    let mut ctx = ReconContext::new(&setup.spec, mean).with_train(&x).with_seed(cell(stream::SAMPLE)).with_t(t);
    if let Some(inner) = &inner {
        ctx = ctx.with_inner(inner);
    }

    let k = setup.variants.contains(&Variant::Ekpca).then(|| gram(&setup.spec, &x)).transpose()?;

    for &variant in &setup.variants {
        let skip = |out: &mut JobOutput, why: String| {
            let msg = format!("skipped {variant} n={n} trial={trial}: {why}");
            log::warn!("{msg}");
            out.skipped.push(msg);
        };
        match variant {
            Variant::Ekpca | Variant::Nystrom => {
                let fitted = if variant == Variant::Ekpca {
                    let k = k.as_ref().expect("gram computed for ekpca");
                    fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL).map(|m| (m, x.clone()))
                } else {
                    let m = cfg.nystrom_m(n);
                    if ell >= m {
                        skip(&mut out, format!("ell={ell} >= m={m}"));
                        continue;
                    }
                    let idx = subsample_uniform(n, m, cell(stream::SUBSAMPLE))?;
                    let (kmm, knm) = gram_cross(&setup.spec, &x, &idx)?;
                    fit_nystrom(kmm.as_ref(), knm.as_ref(), ell, DEFAULT_RTOL)
                        .and_then(|model| Ok((model, x.subset(&idx)?)))
                };
                let (model, points) = match fitted {
                    Ok(f) => f,
                    Err(e @ CoreError::Rank { .. }) => {
                        skip(&mut out, e.to_string());
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                for &norm in &setup.norms {
                    out.rows.push(measure_kernel_model(setup, &ctx, &model, &points, norm, test.as_ref(), trial, t)?);
                }
            }
            Variant::Rff => {
                let m = cfg.rff_m(n);
                let map = rff_map(setup, m, cell(stream::FEATURES))?;
                let z = rff_features(&map, &x)?;
                let model = match fit_rff(z.as_ref(), ell, DEFAULT_RTOL) {
                    Ok(model) => model,
                    Err(e @ CoreError::Rank { .. }) => {
                        skip(&mut out, e.to_string());
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                for &norm in &setup.norms {
                    if norm == Norm::H {
                        // expected, not a failure: record it quietly
                        log::info!("rff n={n} trial={trial}: no RKHS error for random-feature models");
                        continue;
                    }
                    let test = test.as_ref().expect("test points drawn for rff");
                    let r = recon_rff_l2(&model, &map, &ctx, test)?;
                    out.rows.push(Row::from_report(&r, variant, trial, t));
                }
            }
        }
    }
    Ok(out)
}

fn rff_map(setup: &Setup<'_>, m: usize, seed: u64) -> Result<RffMap> {
    let cfg = setup.cfg;
    Ok(match (cfg.rff_family, &setup.spec) {
        (RffFamily::Signed, KernelSpec::Spectral(k)) => RffMap::signed_spectral(k, m, seed)?,
        (RffFamily::Sampled, KernelSpec::Spectral(k)) => RffMap::spectral(k, m, seed)?,
        (RffFamily::Fourier, KernelSpec::Gaussian { bandwidth }) => RffMap::gaussian(cfg.dim, *bandwidth, m, seed)?,
        (f, k) => return Err(CliError::Input(format!("feature family {f:?} does not approximate {k:?}"))),
    })
}

#[allow(clippy::too_many_arguments)]
fn measure_kernel_model(
    setup: &Setup<'_>,
    ctx: &ReconContext<'_>,
    model: &KpcaModel,
    points: &SampleSet,
    norm: Norm,
    test: Option<&SampleSet>,
    trial: usize,
    t: f64,
) -> Result<Row> {
    let variant = model.variant;
    if let (Some(oracle), Some(kernel)) = (&setup.oracle, setup.spec.as_spectral()) {
        let proj = FeatureProjection::from_model(model, points, kernel)?;
        if setup.cfg.evaluation == Evaluation::Exact {
            let estimate = exact_recon(&proj, oracle, norm)?.max(0.0);
            return Ok(Row {
                variant,
                norm,
                n: model.n,
                m: model.m,
                ell: model.ell(),
                t,
                trial,
                estimate,
                se: 0.0,
                n_test: 0,
                seed: ctx.seed,
            });
        }
        let test = test.expect("test points drawn for Monte Carlo evaluation");
        let target = Target::Features(&proj);
        let r = match norm {
            Norm::H => recon_h(&target, ctx, test)?,
            Norm::L2 => recon_l2(&target, ctx, test)?,
        };
        return Ok(Row::from_report(&r, variant, trial, t));
    }
    let test = test.expect("test points drawn for Monte Carlo evaluation");
    let target = Target::Model { model, expansion: Expansion::Kernel { spec: &setup.spec, points } };
    let r = match norm {
        Norm::H => recon_h(&target, ctx, test)?,
        Norm::L2 => recon_l2(&target, ctx, test)?,
    };
    Ok(Row::from_report(&r, variant, trial, t))
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut s = String::from(ROWS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub fn rates_csv(rates: &[RateFit]) -> String {
    let mut s = String::from(RATES_HEADER);
    s.push('\n');
    for r in rates {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.group(), r.slope, r.slope_se, r.predicted, r.r2, r.pass);
    }
    s
}

/// gnuplot data: one indexed block per group of `n mean se` lines.
pub fn plot_data(rates: &[RateFit], rows: &[Row]) -> String {
    let mut s = String::from("# x = n, y = mean reconstruction error over trials, yerr = standard error\n");
    s.push_str("# plot with: plot 'plot.dat' index i using 1:2:3 with yerrorlines\n");
    let mut groups: Vec<(Variant, Norm)> = rows.iter().map(|r| (r.variant, r.norm)).collect();
    groups.sort();
    groups.dedup();
    for (i, (v, norm)) in groups.into_iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# index {i}: {v}/{norm}");
        if let Some(r) = rates.iter().find(|r| r.variant == v && r.norm == norm) {
            let _ = writeln!(s, "# slope {} (predicted {})", r.slope, r.predicted);
        }
        for c in cell_stats(rows, v, norm) {
            let _ = writeln!(s, "{} {} {}", c.n, c.mean, c.se);
        }
    }
    s
}

pub fn theory_csv(theory: &[CellTheory], cfg: &ExperimentConfig) -> String {
    let mut s = String::from(
        "n,ell,t,kappa,n_sigma,n_c_inf,ekpca_h,nystrom_h,ekpca_l2,nystrom_l2,rff_l2,m_nystrom,m_threshold,m_threshold_extra,m_ok,t_admissible\n",
    );
    for c in theory {
        let m = cfg.nystrom_m(c.n);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.n,
            c.ell,
            c.t,
            c.kappa,
            c.n_sigma,
            c.n_c_inf,
            c.ekpca_h,
            c.nystrom_h,
            c.ekpca_l2,
            c.nystrom_l2,
            c.rff_l2.map(|v| v.to_string()).unwrap_or_default(),
            m,
            c.m_threshold,
            c.m_threshold_extra,
            c.m_ok(m),
            c.t_admissible
        );
    }
    s
}

/// Runs the sweep and writes rows, rates and plot data (plus the theory
/// table when configured) under `out_dir`. Returns the written paths.
pub fn run_bench(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(SweepOutput, Vec<RateFit>, Vec<PathBuf>)> {
    let sweep = run_sweep(cfg)?;
    let rates = fit_rates(cfg, &sweep.rows);
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = vec![
        (out_dir.join(&cfg.rows), rows_csv(&sweep.rows)),
        (out_dir.join(&cfg.rates), rates_csv(&rates)),
        (out_dir.join(&cfg.plot), plot_data(&rates, &sweep.rows)),
    ];
    if let Some(p) = &cfg.theory {
        files.push((out_dir.join(p), theory_csv(&sweep.theory, cfg)));
    }
    let mut paths = Vec::with_capacity(files.len());
    for (path, body) in files {
        crate::io::write_all(&path, body.as_bytes())?;
        paths.push(path);
    }
    Ok((sweep, rates, paths))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, trial: usize, estimate: f64) -> Row {
        Row {
            variant: Variant::Ekpca,
            norm: Norm::H,
            n,
            m: n,
            ell: 1,
            t: 0.1,
            trial,
            estimate,
            se: 0.0,
            n_test: 1,
            seed: 0,
        }
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let rows: Vec<Row> = [100, 200, 400, 800].iter().map(|&n| row(n, 0, 3.0 * (n as f64).powf(-0.25))).collect();
        let f = fit_rate(&rows, Variant::Ekpca, Norm::H, -0.25, 0.1).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(f.pass);
    }

    #[test]
    fn constant_rows_have_zero_slope() {
        let rows: Vec<Row> = [100, 200, 400].iter().map(|&n| row(n, 0, 0.5)).collect();
        let f = fit_rate(&rows, Variant::Ekpca, Norm::H, -0.25, 0.1).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r2, 1.0);
        assert!(!f.pass);
    }

    #[test]
    fn two_n_values_are_insufficient() {
        let rows = vec![row(100, 0, 1.0), row(100, 1, 1.0), row(200, 0, 0.5)];
        assert!(fit_rate(&rows, Variant::Ekpca, Norm::H, 0.0, 0.1).is_err());
    }

    #[test]
    fn cell_stats_average_trials() {
        let rows = vec![row(100, 0, 1.0), row(100, 1, 3.0)];
        let c = cell_stats(&rows, Variant::Ekpca, Norm::H);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].mean, 2.0);
        assert_eq!(c[0].se, 1.0);
    }
}
