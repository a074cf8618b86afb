//! Property checks behind `ukpca verify`. Each check computes its reference
//! value by a route independent of the code under test and reports a
//! one-line detail; `fast` mode shrinks Monte Carlo sizes and trial counts.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use faer::Mat;
use rand::Rng;
use ukpca_core::estimators::{
    fit_ekpca, fit_nystrom, fit_rff, nystrom_gram, nystrom_m_matrix, u_statistic_covariance,
    v_statistic_covariance, Expansion, KpcaModel,
};
use ukpca_core::kernels::{
    gram, gram_cross, rff_features, spectral_features, subsample_uniform, KernelSpec, RffMap, SampleSet,
};
use ukpca_core::linalg::{
    centering_matrix, gram_orthonormality_defect, inv_sqrt_psd, max_abs, op_norm, pinv_psd, sym_eig, DEFAULT_RTOL,
};
use ukpca_core::oracle::{build_oracle, OracleSpectrum};
use ukpca_core::recon::{
    exact_recon, recon_h, recon_l2, recon_rff_l2, FeatureProjection, MeanSource, Norm, ReconContext, Target,
};
use ukpca_core::rng::rng_from_seed;

use crate::config::{Evaluation, ExperimentConfig, MRule};

type CheckResult = std::result::Result<String, String>;

pub struct Check {
    pub name: &'static str,
    /// The property being checked, in words.
    pub property: &'static str,
    run: fn(&Env) -> CheckResult,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Shared fixtures.
struct Env {
    fast: bool,
    spec: KernelSpec,
    oracle: OracleSpectrum,
}

impl Env {
    fn kernel(&self) -> &ukpca_core::SpectralKernel {
        self.spec.as_spectral().expect("spectral fixture")
    }

    fn pick<T>(&self, fast: T, full: T) -> T {
        if self.fast {
            fast
        } else {
            full
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "linalg/eigendecomposition", property: "A = V diag(w) Vᵀ with orthonormal V", run: linalg_eig },
        Check { name: "linalg/pseudo-inverse", property: "Moore-Penrose identities on a rank-deficient PSD matrix", run: linalg_pinv },
        Check { name: "linalg/inverse-root", property: "A^{+1/2} A A^{+1/2} is the range projector", run: linalg_inv_sqrt },
        Check { name: "kernels/gram-psd", property: "Gram matrices are symmetric PSD", run: kernels_psd },
        Check { name: "kernels/feature-map", property: "spectral kernel equals its feature inner product", run: kernels_features },
        Check { name: "kernels/rff-unbiased", property: "random features average to the kernel", run: kernels_rff },
        Check { name: "oracle/invariants", property: "trace identity, interlacing, decay sandwich", run: oracle_invariants },
        Check { name: "oracle/mean-element", property: "E m_P(X) = ‖m_P‖²", run: oracle_mean },
        Check { name: "ekpca/orthonormal", property: "fitted eigenfunctions are orthonormal in H", run: ekpca_orthonormal },
        Check { name: "ekpca/unbiased-covariance", property: "U-statistic covariance is unbiased; V-statistic is biased low", run: covariance_bias },
        Check { name: "nystrom/degeneracy", property: "m = n reproduces exact KPCA", run: nystrom_degenerate },
        Check { name: "nystrom/spectrum-identity", property: "K̃H_n and M share their nonzero spectrum", run: nystrom_spectrum },
        Check { name: "nystrom/eigen-equation", property: "P̄ Σ̂ P̄ φ̃ = λ̃ φ̃ in the RKHS", run: nystrom_eigen_equation },
        Check { name: "nystrom/hoffman-wielandt", property: "|λ̃ - λ̂| ≤ ‖(K̃-K)H_n‖/(n(n-1))", run: nystrom_hw },
        Check { name: "nystrom/domination", property: "Nyström eigenvalues never exceed exact ones", run: nystrom_domination },
        Check { name: "rff/dual-primal", property: "dual and primal random-feature fits agree", run: rff_dual },
        Check { name: "recon/population-h", property: "R^ℓ of the population projection is the eigenvalue tail", run: recon_identity_h },
        Check { name: "recon/population-l2", property: "T^ℓ of the population projection is the squared tail", run: recon_identity_l2 },
        Check { name: "recon/empty-projection", property: "ℓ = 0 gives tr Σ and tr Σ²", run: recon_empty },
        Check { name: "recon/route-equivalence", property: "kernel and feature routes agree", run: recon_routes },
        Check { name: "recon/lower-bounds", property: "empirical errors exceed the population tail", run: recon_lower_bounds },
        Check { name: "recon/monotone-ell", property: "errors shrink over nested eigenspaces", run: recon_monotone },
        Check { name: "recon/constant-residual", property: "L²(P) norm annihilates constants", run: recon_constant },
        Check { name: "recon/rff-convergence", property: "many random features match exact KPCA", run: recon_rff_convergence },
        Check { name: "recon/rff-lower-bound", property: "uninformative features stay above ¼ of the squared tail", run: recon_rff_quarter },
        Check { name: "bench/rate-fit", property: "OLS recovers an exact power law", run: bench_rate_fit },
        Check { name: "bench/determinism", property: "identical config and seed give identical rows", run: bench_determinism },
        Check { name: "bench/degenerate-sweep", property: "full-subsample Nyström rows equal exact rows", run: bench_degenerate },
        Check { name: "bench/h-rate", property: "RKHS error decays at the predicted rate", run: bench_h_rate },
        Check { name: "bench/l2-rate", property: "L²(P) error decays at the predicted rate", run: bench_l2_rate },
    ]
}

/// Runs every check, in order.
pub fn run_all(fast: bool) -> Vec<Outcome> {
    run_filtered(fast, |_| true)
}

pub fn run_filtered(fast: bool, keep: impl Fn(&str) -> bool) -> Vec<Outcome> {
    let spec = KernelSpec::spectral(2.0, 200).expect("fixture kernel");
    let oracle = build_oracle(&spec);
    let checks = checks();
    let oracle = match oracle {
        Ok(o) => o,
        Err(e) => {
            return checks
                .iter()
                .map(|c| Outcome {
                    name: c.name,
                    property: c.property,
                    passed: false,
                    detail: format!("oracle construction failed: {e}"),
                    elapsed: Duration::ZERO,
                })
                .collect()
        }
    };
    let env = Env { fast, spec, oracle };
    checks
        .iter()
        .filter(|c| keep(c.name))
        .map(|c| {
            let start = Instant::now();
            let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (c.run)(&env)))
                .unwrap_or_else(|_| Err("panicked".into()));
            let elapsed = start.elapsed();
            log::info!("{} finished in {:.2?}", c.name, elapsed);
            let (passed, detail) = match r {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Outcome { name: c.name, property: c.property, passed, detail, elapsed }
        })
        .collect()
}

pub fn render_table(outcomes: &[Outcome]) -> String {
    let w_name = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(5).max(5);
    let w_prop = outcomes.iter().map(|o| o.property.chars().count()).max().unwrap_or(8).max(8);
    let mut s = String::new();
    let _ = writeln!(s, "{:<w_name$}  {:<w_prop$}  {:<6}  {:>8}  detail", "check", "property", "status", "time");
    for o in outcomes {
        let pad = w_prop - o.property.chars().count();
        let _ = writeln!(
            s,
            "{:<w_name$}  {}{}  {:<6}  {:>7.2}s  {}",
            o.name,
            o.property,
            " ".repeat(pad),
            if o.passed { "PASS" } else { "FAIL" },
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let _ = writeln!(s, "{} checks, {} failed", outcomes.len(), failed);
    s
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = rng_from_seed(seed);
    Mat::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5)
}

fn linalg_eig(_: &Env) -> CheckResult {
    let b = random_matrix(60, 60, 1);
    let a = &b + b.transpose();
    let e = sym_eig(a.as_ref()).map_err(e2s)?;
    let rec = max_abs((&e.reconstruct() - &a).as_ref()) / max_abs(a.as_ref());
    let vtv = e.vectors.transpose() * &e.vectors;
    let orth = max_abs((&vtv - Mat::<f64>::identity(60, 60)).as_ref());
    ensure!(rec < 1e-12 && orth < 1e-12, "reconstruction {rec:.2e}, orthogonality {orth:.2e}");
    ensure!(e.values.windows(2).all(|w| w[0] >= w[1]), "eigenvalues not descending");
    Ok(format!("reconstruction {rec:.1e}, orthogonality {orth:.1e}"))
}

fn linalg_pinv(_: &Env) -> CheckResult {
    let b = random_matrix(30, 8, 2);
    let a = &b * b.transpose();
    let p = pinv_psd(a.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
    let scale = max_abs(a.as_ref());
    let r1 = max_abs((&a * &p * &a - &a).as_ref()) / scale;
    let r2 = max_abs((&p * &a * &p - &p).as_ref()) / max_abs(p.as_ref());
    let ap = &a * &p;
    let r3 = max_abs((&ap - ap.transpose()).as_ref());
    ensure!(r1 < 1e-9 && r2 < 1e-9 && r3 < 1e-9, "APA {r1:.2e}, PAP {r2:.2e}, symmetry {r3:.2e}");
    Ok(format!("APA-A {r1:.1e}, PAP-P {r2:.1e}"))
}

fn linalg_inv_sqrt(_: &Env) -> CheckResult {
    let b = random_matrix(25, 6, 3);
    let a = &b * b.transpose();
    let r = inv_sqrt_psd(a.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
    let proj = &r * &a * &r;
    let idem = max_abs((&proj * &proj - &proj).as_ref());
    let tr: f64 = (0..25).map(|i| proj[(i, i)]).sum();
    ensure!(idem < 1e-8 && (tr - 6.0).abs() < 1e-8, "idempotency {idem:.2e}, trace {tr}");
    Ok(format!("idempotency {idem:.1e}, rank {tr:.6}"))
}

fn kernels_psd(env: &Env) -> CheckResult {
    let mut worst = 0.0f64;
    for (spec, dim) in [
        (KernelSpec::gaussian(0.3).map_err(e2s)?, 3),
        (KernelSpec::polynomial(3, 1.0).map_err(e2s)?, 2),
        (KernelSpec::Linear, 4),
        (env.spec.clone(), 1),
    ] {
        let x = SampleSet::uniform(80, dim, 4);
        let k = gram(&spec, &x).map_err(e2s)?;
        let asym = max_abs((&k - k.transpose()).as_ref());
        ensure!(asym == 0.0, "{spec:?}: asymmetry {asym:.2e}");
        let e = sym_eig(k.as_ref()).map_err(e2s)?;
        let rel = -e.values.last().copied().unwrap_or(0.0) / e.values[0];
        worst = worst.max(rel);
    }
    ensure!(worst < 1e-10, "most negative relative eigenvalue {worst:.2e}");
    Ok(format!("most negative relative eigenvalue {worst:.1e}"))
}

fn kernels_features(env: &Env) -> CheckResult {
    let x = SampleSet::uniform(50, 1, 5);
    let k = gram(&env.spec, &x).map_err(e2s)?;
    let psi = spectral_features(env.kernel(), &x);
    let err = max_abs((&psi * psi.transpose() - &k).as_ref());
    ensure!(err < 1e-12, "max deviation {err:.2e}");
    Ok(format!("max deviation {err:.1e}"))
}

fn kernels_rff(env: &Env) -> CheckResult {
    let m = env.pick(20_000, 200_000);
    let spec = KernelSpec::gaussian(0.7).map_err(e2s)?;
    let map = RffMap::gaussian(2, 0.7, m, 6).map_err(e2s)?;
    let x = SampleSet::uniform(10, 2, 6);
    let k = gram(&spec, &x).map_err(e2s)?;
    let z = rff_features(&map, &x).map_err(e2s)?;
    let err = max_abs((&z * z.transpose() - &k).as_ref());
    // each entry averages m terms bounded by 2
    let tol = 6.0 * 2.0 / (m as f64).sqrt();
    ensure!(err < tol, "deviation {err:.2e} above {tol:.2e}");
    let signed = RffMap::signed_spectral(env.kernel(), m / 4, 7).map_err(e2s)?;
    let xs = SampleSet::uniform(10, 1, 7);
    let ks = gram(&env.spec, &xs).map_err(e2s)?;
    let zs = rff_features(&signed, &xs).map_err(e2s)?;
    let err_s = max_abs((&zs * zs.transpose() - &ks).as_ref());
    let kappa = env.kernel().kappa();
    let tol_s = 6.0 * kappa / ((m / 4) as f64).sqrt();
    ensure!(err_s < tol_s, "signed-sine deviation {err_s:.2e} above {tol_s:.2e}");
    Ok(format!("Fourier {err:.1e} (tol {tol:.1e}), signed sine {err_s:.1e}"))
}

fn oracle_invariants(env: &Env) -> CheckResult {
    let o = &env.oracle;
    let lam = env.kernel().eigenvalues();
    let tr_c: f64 = lam.iter().sum();
    let gap = (tr_c - o.mp_sq_norm - o.trace()).abs();
    ensure!(gap < 1e-10 * tr_c, "trace identity off by {gap:.2e}");
    let mut sorted = lam.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for (i, (s, c)) in o.sigma_eigs.iter().zip(&sorted).enumerate() {
        ensure!(*s <= c + 1e-14 && *s >= -1e-14, "eigenvalue {i}: {s} vs C {c}");
        if i + 1 < sorted.len() {
            ensure!(*s >= sorted[i + 1] - 1e-14, "interlacing fails at {i}");
        }
    }
    let dc = o.decay_constants(2.0, 100);
    ensure!(dc.lower > 0.0 && dc.upper < f64::INFINITY, "decay constants {dc:?}");
    ensure!(o.decay_sandwich_holds(2.0, 100, dc.lower, dc.upper), "sandwich does not hold");
    Ok(format!("tr Σ = {:.6}, decay constants [{:.3}, {:.3}]", o.trace(), dc.lower, dc.upper))
}

fn oracle_mean(env: &Env) -> CheckResult {
    let draws = env.pick(200_000, 1_000_000);
    let x = SampleSet::uniform(draws, 1, 8);
    let vals: Vec<f64> = x.points().map(|p| env.oracle.mean_function(env.kernel(), p[0])).collect();
    let (mean, se) = ukpca_core::recon::mean_and_se(&vals);
    let target = env.oracle.mp_sq_norm;
    let rel = (mean - target).abs() / target;
    ensure!(rel < 0.01, "E m_P(X) = {mean:.6} vs ‖m_P‖² = {target:.6}");
    Ok(format!("{mean:.5} ± {se:.1e} vs {target:.5}"))
}

fn ekpca_orthonormal(env: &Env) -> CheckResult {
    let x = SampleSet::uniform(300, 1, 9);
    let k = gram(&env.spec, &x).map_err(e2s)?;
    let model = fit_ekpca(k.as_ref(), 8, DEFAULT_RTOL).map_err(e2s)?;
    let defect = gram_orthonormality_defect(model.coefficients.as_ref(), k.as_ref());
    // unit norm in H via feature coordinates: A = B Ψ, ‖row‖ = 1
    let a = &model.coefficients * spectral_features(env.kernel(), &x);
    let aat = &a * a.transpose();
    let feat = max_abs((&aat - Mat::<f64>::identity(8, 8)).as_ref());
    ensure!(defect < 1e-8 && feat < 1e-8, "Gram defect {defect:.2e}, feature defect {feat:.2e}");
    Ok(format!("B K Bᵀ - I: {defect:.1e}"))
}

fn covariance_bias(env: &Env) -> CheckResult {
    let reps = 2000;
    let (n, d) = (20, 6);
    let kernel = env.kernel().clone();
    let small = ukpca_core::SpectralKernel::new(kernel.eigenvalues()[..d].to_vec(), kernel.frequencies()[..d].to_vec())
        .map_err(e2s)?;
    let so = build_oracle(&KernelSpec::Spectral(small.clone())).map_err(e2s)?;
    let mut sum_u = vec![0.0; d * d];
    let mut sq_u = vec![0.0; d * d];
    let mut sum_v = vec![0.0; d];
    for r in 0..reps {
        let x = SampleSet::uniform(n, 1, 10_000 + r as u64);
        let z = spectral_features(&small, &x);
        let u = u_statistic_covariance(z.as_ref()).map_err(e2s)?;
        let v = v_statistic_covariance(z.as_ref()).map_err(e2s)?;
        for i in 0..d {
            for j in 0..d {
                sum_u[i * d + j] += u[(i, j)];
                sq_u[i * d + j] += u[(i, j)] * u[(i, j)];
            }
            sum_v[i] += v[(i, i)];
        }
    }
    let rf = reps as f64;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mean = sum_u[i * d + j] / rf;
            let var = (sq_u[i * d + j] / rf - mean * mean).max(0.0) * rf / (rf - 1.0);
            let se = (var / rf).sqrt();
            let z = (mean - so.covariance[(i, j)]).abs() / se.max(1e-300);
            worst = worst.max(z);
        }
    }
    ensure!(worst <= 3.0, "largest U-statistic deviation {worst:.2} SE");
    // the V-statistic mean is (n-1)/n of the truth on the diagonal
    let below = (0..d).filter(|&i| sum_v[i] / rf < so.covariance[(i, i)]).count();
    ensure!(below == d, "V-statistic diagonal below truth in {below}/{d} entries");
    Ok(format!("U-statistic max |z| = {worst:.2}; V-statistic low on {below}/{d} diagonal entries"))
}

type NystromPair = (Vec<usize>, Mat<f64>, Mat<f64>);

fn nystrom_pair(spec: &KernelSpec, x: &SampleSet, m: usize, seed: u64) -> std::result::Result<NystromPair, String> {
    let idx = subsample_uniform(x.len(), m, seed).map_err(e2s)?;
    let (kmm, knm) = gram_cross(spec, x, &idx).map_err(e2s)?;
    Ok((idx, kmm, knm))
}

fn nystrom_degenerate(env: &Env) -> CheckResult {
    let seeds = env.pick(2, 5);
    let (mut worst_eig, mut worst_rec) = (0.0f64, 0.0f64);
    for n in [50, 200] {
        for s in 0..seeds {
            let x = SampleSet::uniform(n, 1, 20 + s);
            let k = gram(&env.spec, &x).map_err(e2s)?;
            let ell = 5;
            let e = fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
            let (idx, kmm, knm) = nystrom_pair(&env.spec, &x, n, 30 + s)?;
            let ny = fit_nystrom(kmm.as_ref(), knm.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
            for (a, b) in e.eigenvalues.iter().zip(&ny.eigenvalues) {
                worst_eig = worst_eig.max((a - b).abs() / a);
            }
            let pe = FeatureProjection::from_model(&e, &x, env.kernel()).map_err(e2s)?;
            let pn = FeatureProjection::from_model(&ny, &x.subset(&idx).map_err(e2s)?, env.kernel()).map_err(e2s)?;
            for norm in [Norm::H, Norm::L2] {
                let a = exact_recon(&pe, &env.oracle, norm).map_err(e2s)?;
                let b = exact_recon(&pn, &env.oracle, norm).map_err(e2s)?;
                worst_rec = worst_rec.max((a - b).abs() / a);
            }
        }
    }
    ensure!(worst_eig <= 1e-8 && worst_rec <= 1e-6, "eigenvalues {worst_eig:.2e}, errors {worst_rec:.2e}");
    Ok(format!("eigenvalues {worst_eig:.1e}, errors {worst_rec:.1e}"))
}

fn gaussian_fixture(n: usize, seed: u64) -> std::result::Result<(KernelSpec, SampleSet, Mat<f64>), String> {
    let spec = KernelSpec::gaussian(0.5).map_err(e2s)?;
    let x = SampleSet::uniform(n, 2, seed);
    let k = gram(&spec, &x).map_err(e2s)?;
    Ok((spec, x, k))
}

/// Spectrum of `K̃H_n/(n(n-1))` from the general (non-symmetric) solver.
fn kt_h_spectrum(kt: &Mat<f64>) -> std::result::Result<Vec<f64>, String> {
    let n = kt.nrows();
    let scale = 1.0 / (n * (n - 1)) as f64;
    let h = centering_matrix(n) * faer::Scale(n as f64);
    let prod = kt * &h * faer::Scale(scale);
    let mut ev: Vec<f64> = prod.eigenvalues().map_err(|e| format!("{e:?}"))?.iter().map(|c| c.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Same spectrum through the similar symmetric matrix `C K̃ C/(n-1)` (C idempotent),
/// which keeps small eigenvalues accurate where the non-normal product does not.
fn kt_h_spectrum_sym(kt: &Mat<f64>) -> std::result::Result<Vec<f64>, String> {
    let n = kt.nrows();
    let c = centering_matrix(n);
    let prod = &c * kt * &c * faer::Scale(1.0 / (n - 1) as f64);
    Ok(sym_eig(prod.as_ref()).map_err(e2s)?.values)
}

fn nystrom_spectrum(env: &Env) -> CheckResult {
    let seeds = env.pick(3, 10);
    let (n, m) = (100, 20);
    let mut worst = 0.0f64;
    let mut worst_general = 0.0f64;
    let mut compared = 0;
    for s in 0..seeds {
        let (spec, x, _) = gaussian_fixture(n, 40 + s)?;
        let (_, kmm, knm) = nystrom_pair(&spec, &x, m, 50 + s)?;
        let mm = nystrom_m_matrix(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
        let a = sym_eig(mm.as_ref()).map_err(e2s)?.values;
        let kt = nystrom_gram(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
        let b = kt_h_spectrum_sym(&kt)?;
        let g = kt_h_spectrum(&kt)?;
        let cut = 1e-10 * a[0];
        for (i, &ai) in a.iter().enumerate().take_while(|(_, &v)| v > cut) {
            worst = worst.max((ai - b[i]).abs() / ai);
            compared += 1;
            // the non-normal product loses ~ε/(λ_i/λ_1); only hold it to that on the top of the spectrum
            if ai > 1e-4 * a[0] {
                worst_general = worst_general.max((ai - g[i]).abs() / ai);
            }
        }
    }
    ensure!(worst <= 1e-8, "largest relative difference {worst:.2e}");
    ensure!(worst_general <= 1e-8, "general solver differs by {worst_general:.2e} on the leading eigenvalues");
    Ok(format!(
        "{compared} eigenvalues, max relative difference {worst:.1e} (general solver {worst_general:.1e})"
    ))
}

/// `‖P̄ Σ̂ P̄ φ̃_i - λ̃_i φ̃_i‖_H / λ̃_1` for every fitted component.
fn eigen_equation_residual(model: &KpcaModel, kmm: &Mat<f64>, knm: &Mat<f64>) -> std::result::Result<f64, String> {
    let (n, m) = (knm.nrows(), knm.ncols());
    // P̄ in subsample coefficients, built from its definition
    let cm = centering_matrix(m);
    let w = &cm * pinv_psd((&cm * kmm * &cm).as_ref(), DEFAULT_RTOL).map_err(e2s)? * &cm;
    let cn = centering_matrix(n);
    let mut worst = 0.0f64;
    for i in 0..model.ell() {
        let b = Mat::from_fn(m, 1, |j, _| model.coefficients[(i, j)]);
        let pb = &w * kmm * &b;
        // Σ̂ f = (1/(n-1)) Σ_t k̄_t ⟨k̄_t, f⟩ has sample coefficients C_n K_nm c / (n-1)
        let c = &cn * knm * &pb * faer::Scale(1.0 / (n - 1) as f64);
        let out = &w * knm.transpose() * &c;
        let r = &out - &b * faer::Scale(model.eigenvalues[i]);
        let sq = (r.transpose() * kmm * &r)[(0, 0)].max(0.0);
        worst = worst.max(sq.sqrt() / model.eigenvalues[0]);
    }
    Ok(worst)
}

fn nystrom_eigen_equation(env: &Env) -> CheckResult {
    let seeds = env.pick(3, 10);
    let mut worst = 0.0f64;
    for s in 0..seeds {
        let (spec, x, _) = gaussian_fixture(100, 60 + s)?;
        let (_, kmm, knm) = nystrom_pair(&spec, &x, 20, 70 + s)?;
        let model = fit_nystrom(kmm.as_ref(), knm.as_ref(), 5, DEFAULT_RTOL).map_err(e2s)?;
        worst = worst.max(eigen_equation_residual(&model, &kmm, &knm)?);
    }
    ensure!(worst <= 1e-7, "residual {worst:.2e} λ̃₁");
    Ok(format!("max residual {worst:.1e} λ̃₁"))
}

fn nystrom_hw(env: &Env) -> CheckResult {
    let fits = env.pick(8, 20);
    let (n, m, ell) = (100, 20, 3);
    let mut min_slack = f64::INFINITY;
    for s in 0..fits {
        let (spec, x, k) = gaussian_fixture(n, 80 + s)?;
        let (_, kmm, knm) = nystrom_pair(&spec, &x, m, 90 + s)?;
        let kt = nystrom_gram(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
        let h = centering_matrix(n) * faer::Scale(n as f64);
        let bound = op_norm(((&kt - &k) * &h).as_ref()).map_err(e2s)? / (n * (n - 1)) as f64;
        let lt = sym_eig(nystrom_m_matrix(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).map_err(e2s)?.as_ref())
            .map_err(e2s)?
            .values[ell];
        let hk = &k * &h * faer::Scale(1.0 / (n * (n - 1)) as f64);
        let lh = sym_eig(ukpca_core::linalg::symmetrize((&centering_matrix(n) * &hk).as_ref()).as_ref())
            .map_err(e2s)?
            .values[ell];
        let gap = (lt - lh).abs();
        ensure!(gap <= bound, "fit {s}: |λ̃ - λ̂| = {gap:.3e} > {bound:.3e}");
        min_slack = min_slack.min(bound - gap);
    }
    Ok(format!("{fits} fits, smallest slack {min_slack:.2e}"))
}

fn nystrom_domination(env: &Env) -> CheckResult {
    let x = SampleSet::uniform(400, 1, 11);
    let k = gram(&env.spec, &x).map_err(e2s)?;
    let e = fit_ekpca(k.as_ref(), 6, DEFAULT_RTOL).map_err(e2s)?;
    for s in 0..env.pick(3, 10) {
        let (_, kmm, knm) = nystrom_pair(&env.spec, &x, 60, 100 + s)?;
        let ny = fit_nystrom(kmm.as_ref(), knm.as_ref(), 6, DEFAULT_RTOL).map_err(e2s)?;
        for (i, (t, h)) in ny.eigenvalues.iter().zip(&e.eigenvalues).enumerate() {
            ensure!(*t <= h * (1.0 + 1e-10), "seed {s}, component {i}: {t} > {h}");
        }
    }
    Ok("all Nyström eigenvalues bounded by exact ones".into())
}

fn rff_dual(_: &Env) -> CheckResult {
    let map = RffMap::gaussian(2, 0.5, 200, 12).map_err(e2s)?;
    let x = SampleSet::uniform(60, 2, 12);
    let z = rff_features(&map, &x).map_err(e2s)?;
    let dual = fit_rff(z.as_ref(), 4, DEFAULT_RTOL).map_err(e2s)?;
    let primal = sym_eig(u_statistic_covariance(z.as_ref()).map_err(e2s)?.as_ref()).map_err(e2s)?;
    let mut worst = 0.0f64;
    for i in 0..4 {
        worst = worst.max((dual.eigenvalues[i] - primal.values[i]).abs() / primal.values[0]);
    }
    ensure!(worst < 1e-10, "eigenvalue mismatch {worst:.2e}");
    Ok(format!("eigenvalue mismatch {worst:.1e}"))
}

fn population_check(env: &Env, norm: Norm) -> CheckResult {
    let n_test = env.pick(20_000, 100_000);
    let test = SampleSet::uniform(n_test, 1, 13);
    let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle));
    let mut parts = Vec::new();
    for ell in [1, 3, 10] {
        let proj = FeatureProjection::population(&env.oracle, ell).map_err(e2s)?;
        // tail sums straight from the eigenvalues
        let tail: f64 = match norm {
            Norm::H => env.oracle.sigma_eigs[ell..].iter().sum(),
            Norm::L2 => env.oracle.sigma_eigs[ell..].iter().map(|l| l * l).sum(),
        };
        let r = match norm {
            Norm::H => recon_h(&Target::Features(&proj), &ctx, &test),
            Norm::L2 => recon_l2(&Target::Features(&proj), &ctx, &test),
        }
        .map_err(e2s)?;
        let z = (r.estimate - tail) / r.se;
        ensure!(z.abs() <= 3.0, "ℓ={ell}: {} vs {tail} ({z:.2} SE)", r.estimate);
        parts.push(format!("ℓ={ell}: {z:+.2} SE"));
    }
    Ok(parts.join(", "))
}

fn recon_identity_h(env: &Env) -> CheckResult {
    population_check(env, Norm::H)
}

fn recon_identity_l2(env: &Env) -> CheckResult {
    population_check(env, Norm::L2)
}

fn recon_empty(env: &Env) -> CheckResult {
    let test = SampleSet::uniform(env.pick(20_000, 100_000), 1, 14);
    let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle));
    let x = SampleSet::uniform(50, 1, 15);
    let k = gram(&env.spec, &x).map_err(e2s)?;
    let empty = fit_ekpca(k.as_ref(), 1, DEFAULT_RTOL).map_err(e2s)?.truncated(0).map_err(e2s)?;
    let target = Target::Model { model: &empty, expansion: Expansion::Kernel { spec: &env.spec, points: &x } };
    let h = recon_h(&target, &ctx, &test).map_err(e2s)?;
    let l2 = recon_l2(&target, &ctx, &test).map_err(e2s)?;
    let tr: f64 = env.oracle.sigma_eigs.iter().sum();
    let tr2: f64 = env.oracle.sigma_eigs.iter().map(|l| l * l).sum();
    let (zh, zl) = ((h.estimate - tr) / h.se, (l2.estimate - tr2) / l2.se);
    ensure!(zh.abs() <= 3.0 && zl.abs() <= 3.0, "H {zh:.2} SE, L2 {zl:.2} SE");
    Ok(format!("tr Σ at {zh:+.2} SE, tr Σ² at {zl:+.2} SE"))
}

fn recon_routes(env: &Env) -> CheckResult {
    let x = SampleSet::uniform(500, 1, 16);
    let test = SampleSet::uniform(env.pick(5_000, 20_000), 1, 17);
    let k = gram(&env.spec, &x).map_err(e2s)?;
    let model = fit_ekpca(k.as_ref(), 3, DEFAULT_RTOL).map_err(e2s)?;
    let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle)).with_train(&x);
    let a = recon_h(&Target::Model { model: &model, expansion: Expansion::Kernel { spec: &env.spec, points: &x } }, &ctx, &test)
        .map_err(e2s)?;
    let proj = FeatureProjection::from_model(&model, &x, env.kernel()).map_err(e2s)?;
    let b = recon_h(&Target::Features(&proj), &ctx, &test).map_err(e2s)?;
    let rel = (a.estimate - b.estimate).abs() / b.estimate;
    ensure!(rel <= 1e-6, "relative difference {rel:.2e}");
    Ok(format!("relative difference {rel:.1e}"))
}

fn recon_lower_bounds(env: &Env) -> CheckResult {
    let fits = env.pick(4, 20);
    let (n, ell) = (500, 3);
    let m = crate::model::default_nystrom_m(n);
    let (tail_h, tail_l2) = env.oracle.population_recon(ell).map_err(e2s)?;
    let mut min_z = f64::INFINITY;
    for s in 0..fits {
        let x = SampleSet::uniform(n, 1, 200 + s);
        let test = SampleSet::uniform(10_000, 1, 300 + s);
        let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle)).with_train(&x);
        let k = gram(&env.spec, &x).map_err(e2s)?;
        let e = fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
        let (idx, kmm, knm) = nystrom_pair(&env.spec, &x, m, 400 + s)?;
        let ny = fit_nystrom(kmm.as_ref(), knm.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
        let sub = x.subset(&idx).map_err(e2s)?;
        let reports = [
            (recon_h(&Target::Model { model: &e, expansion: Expansion::Kernel { spec: &env.spec, points: &x } }, &ctx, &test), tail_h),
            (recon_h(&Target::Model { model: &ny, expansion: Expansion::Kernel { spec: &env.spec, points: &sub } }, &ctx, &test), tail_h),
            (recon_l2(&Target::Model { model: &ny, expansion: Expansion::Kernel { spec: &env.spec, points: &sub } }, &ctx, &test), tail_l2),
        ];
        for (r, tail) in reports {
            let r = r.map_err(e2s)?;
            let z = (r.estimate - tail) / r.se;
            ensure!(r.estimate >= tail - 3.0 * r.se, "fit {s}: {} below {tail} by {z:.2} SE", r.estimate);
            min_z = min_z.min(z);
        }
    }
    Ok(format!("{fits} fits, smallest margin {min_z:+.1} SE"))
}

fn recon_monotone(env: &Env) -> CheckResult {
    let x = SampleSet::uniform(300, 1, 18);
    let k = gram(&env.spec, &x).map_err(e2s)?;
    let model = fit_ekpca(k.as_ref(), 12, DEFAULT_RTOL).map_err(e2s)?;
    let mut proj = FeatureProjection::from_model(&model, &x, env.kernel()).map_err(e2s)?;
    // population centring makes the nesting exact
    let a = &proj.components;
    proj.center = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * env.oracle.mean_coeffs[j]).sum()).collect();
    for norm in [Norm::H, Norm::L2] {
        let mut prev = f64::INFINITY;
        for ell in 0..=12 {
            let v = exact_recon(&proj.truncated(ell).map_err(e2s)?, &env.oracle, norm).map_err(e2s)?;
            ensure!(v <= prev * (1.0 + 1e-12), "{norm}: increase at ℓ={ell}: {v} > {prev}");
            prev = v;
        }
    }
    // data centring, Monte Carlo, within 3 SE
    let test = SampleSet::uniform(env.pick(5_000, 20_000), 1, 19);
    let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle)).with_train(&x);
    for norm in [Norm::H, Norm::L2] {
        let mut prev: Option<(f64, f64)> = None;
        for ell in [1, 3, 6, 12] {
            let t = model.truncated(ell).map_err(e2s)?;
            let target = Target::Model { model: &t, expansion: Expansion::Kernel { spec: &env.spec, points: &x } };
            let r = match norm {
                Norm::H => recon_h(&target, &ctx, &test),
                Norm::L2 => recon_l2(&target, &ctx, &test),
            }
            .map_err(e2s)?;
            if let Some((p, pse)) = prev {
                ensure!(r.estimate <= p + 3.0 * (r.se.powi(2) + pse.powi(2)).sqrt(), "{norm}: ℓ={ell} rises to {}", r.estimate);
            }
            prev = Some((r.estimate, r.se));
        }
    }
    Ok("exact under population centring; within 3 SE with data centring".into())
}

fn recon_constant(_: &Env) -> CheckResult {
    // With ℓ = 0 the residual is g_y = k(·,y) - m_P. A proxy sample made of
    // copies of y makes it the constant 0 under the linear kernel, and a
    // constant offset does not change a variance either way.
    let spec = KernelSpec::Linear;
    let y = 0.37;
    let x = SampleSet::from_rows(&[vec![0.1], vec![0.9]]).map_err(e2s)?;
    let proxy = SampleSet::from_rows(&vec![vec![y]; 4]).map_err(e2s)?;
    let inner = SampleSet::uniform(500, 1, 20);
    let test = SampleSet::from_rows(&[vec![y]]).map_err(e2s)?;
    let model = KpcaModel {
        variant: ukpca_core::Variant::Ekpca,
        eigenvalues: vec![],
        coefficients: Mat::zeros(0, 2),
        train_mean_projection: vec![],
        n: 2,
        m: 2,
    };
    let ctx = ReconContext::new(&spec, MeanSource::Proxy(&proxy)).with_inner(&inner);
    let target = Target::Model { model: &model, expansion: Expansion::Kernel { spec: &spec, points: &x } };
    let r = recon_l2(&target, &ctx, &test).map_err(e2s)?;
    ensure!(r.estimate.abs() < 1e-28, "estimate {}", r.estimate);
    Ok(format!("estimate {:.1e}", r.estimate))
}

fn recon_rff_convergence(env: &Env) -> CheckResult {
    let seeds = env.pick(2, 6);
    let mut parts = Vec::new();
    for s in 0..seeds {
        let x = SampleSet::uniform(500, 1, 500 + s);
        let test = SampleSet::uniform(10_000, 1, 600 + s);
        let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle)).with_train(&x);
        let k = gram(&env.spec, &x).map_err(e2s)?;
        for ell in [1, 3] {
            let e = fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
            let a = recon_l2(&Target::Model { model: &e, expansion: Expansion::Kernel { spec: &env.spec, points: &x } }, &ctx, &test)
                .map_err(e2s)?;
            let map = RffMap::spectral(env.kernel(), 4096, 700 + s).map_err(e2s)?;
            let z = rff_features(&map, &x).map_err(e2s)?;
            let rm = fit_rff(z.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
            let b = recon_rff_l2(&rm, &map, &ctx, &test).map_err(e2s)?;
            let tol = 3.0 * (a.se.powi(2) + b.se.powi(2)).sqrt() + 0.05 * a.estimate;
            let diff = (a.estimate - b.estimate).abs();
            ensure!(diff <= tol, "seed {s}, ℓ={ell}: {} vs {} (tol {tol:.2e})", b.estimate, a.estimate);
            parts.push(diff / tol);
        }
    }
    let worst = parts.iter().copied().fold(0.0, f64::max);
    Ok(format!("{} comparisons, worst at {:.0}% of tolerance", parts.len(), 100.0 * worst))
}

fn recon_rff_quarter(env: &Env) -> CheckResult {
    let x = SampleSet::uniform(300, 1, 22);
    let inner = SampleSet::uniform(env.pick(2_000, 10_000), 1, 23);
    let test = SampleSet::uniform(env.pick(300, 1_000), 1, 24);
    let ctx = ReconContext::new(&env.spec, MeanSource::Oracle(&env.oracle)).with_train(&x).with_inner(&inner);
    let mut parts = Vec::new();
    for ell in [1, 3] {
        // frequencies ~ N(0, 10⁶): features are noise at the sample scale
        let map = RffMap::gaussian(1, 1e-3, 64, 25).map_err(e2s)?;
        let z = rff_features(&map, &x).map_err(e2s)?;
        let model = fit_rff(z.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
        let r = recon_rff_l2(&model, &map, &ctx, &test).map_err(e2s)?;
        let bound = 0.25 * env.oracle.sigma_eigs[ell..].iter().map(|l| l * l).sum::<f64>();
        ensure!(r.estimate >= bound - 3.0 * r.se, "ℓ={ell}: {} below {bound}", r.estimate);
        parts.push(format!("ℓ={ell}: {:.2e} ≥ {bound:.2e}", r.estimate));
    }
    Ok(parts.join(", "))
}

fn bench_rate_fit(_: &Env) -> CheckResult {
    use crate::bench::{fit_rate, Row};
    let rows: Vec<Row> = [100usize, 200, 400, 800]
        .iter()
        .map(|&n| Row {
            variant: ukpca_core::Variant::Ekpca,
            norm: Norm::H,
            n,
            m: n,
            ell: 1,
            t: 0.0,
            trial: 0,
            estimate: 2.0 * (n as f64).powf(-0.25),
            se: 0.0,
            n_test: 1,
            seed: 0,
        })
        .collect();
    let f = fit_rate(&rows, ukpca_core::Variant::Ekpca, Norm::H, -0.25, 0.1).map_err(e2s)?;
    ensure!((f.slope + 0.25).abs() <= 1e-12, "slope {}", f.slope);
    Ok(format!("slope {:.15}", f.slope))
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n: vec![40, 80, 160],
        trials: 2,
        n_test: 500,
        variants: vec!["ekpca".into(), "nystrom".into(), "rff".into()],
        ..ExperimentConfig::default()
    }
}

fn bench_determinism(_: &Env) -> CheckResult {
    let cfg = small_config();
    let a = crate::bench::run_sweep(&cfg).map_err(e2s)?;
    let b = crate::bench::run_sweep(&cfg).map_err(e2s)?;
    let (ca, cb) = (crate::bench::rows_csv(&a.rows), crate::bench::rows_csv(&b.rows));
    ensure!(ca == cb, "row files differ");
    ensure!(!a.rows.is_empty(), "no rows");
    Ok(format!("{} rows, byte-identical", a.rows.len()))
}

fn bench_degenerate(_: &Env) -> CheckResult {
    let cfg = ExperimentConfig { m_rule: MRule::Full, variants: vec!["ekpca".into(), "nystrom".into()], ..small_config() };
    let out = crate::bench::run_sweep(&cfg).map_err(e2s)?;
    let ek: Vec<_> = out.rows.iter().filter(|r| r.variant == ukpca_core::Variant::Ekpca).collect();
    let ny: Vec<_> = out.rows.iter().filter(|r| r.variant == ukpca_core::Variant::Nystrom).collect();
    ensure!(ek.len() == ny.len() && !ek.is_empty(), "row counts {} vs {}", ek.len(), ny.len());
    let mut worst = 0.0f64;
    for (a, b) in ek.iter().zip(&ny) {
        worst = worst.max((a.estimate - b.estimate).abs() / a.estimate);
    }
    ensure!(worst <= 1e-6, "relative difference {worst:.2e}");
    Ok(format!("{} row pairs, max relative difference {worst:.1e}", ek.len()))
}

fn rate_config(env: &Env, norm: &str) -> ExperimentConfig {
    ExperimentConfig {
        n: vec![200, 400, 800, 1600],
        trials: env.pick(4, 20),
        norms: vec![norm.into()],
        evaluation: if env.fast { Evaluation::Exact } else { Evaluation::MonteCarlo },
        ..ExperimentConfig::default()
    }
}

fn rate_check(env: &Env, norm: Norm) -> CheckResult {
    let cfg = rate_config(env, norm.as_str());
    let out = crate::bench::run_sweep(&cfg).map_err(e2s)?;
    let rates = crate::bench::fit_rates(&cfg, &out.rows);
    ensure!(rates.len() == 2, "expected two rate groups, got {}", rates.len());
    let mut parts = Vec::new();
    for r in &rates {
        ensure!(r.pass, "{}: slope {:.3} vs predicted {:.3} ± {}", r.group(), r.slope, r.predicted, r.tolerance);
        parts.push(format!("{} {:.3}", r.group(), r.slope));
    }
    Ok(format!("{} (predicted {:.3})", parts.join(", "), rates[0].predicted))
}

fn bench_h_rate(env: &Env) -> CheckResult {
    rate_check(env, Norm::H)
}

fn bench_l2_rate(env: &Env) -> CheckResult {
    rate_check(env, Norm::L2)
}
