//! End-to-end acceptance run. Prints one `criterion N: PASS|FAIL` line per
//! criterion and fails if any of them fails.
//!
//! Every reference value (population spectrum, tail sums, Nyström Gram,
//! projectors, bounds, slopes) is recomputed here from first principles;
//! only the quantity under test comes from the library.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::time::Instant;

use faer::{Mat, MatRef, Side};
use twofloat::TwoFloat;
use ukpca::bench::{run_sweep, Row};
use ukpca::config::{Evaluation, ExperimentConfig, RffFamily};
use ukpca::model::default_nystrom_m;
use ukpca_core::estimators::{
    fit_ekpca, fit_nystrom, nystrom_gram, nystrom_m_matrix, u_statistic_covariance, v_statistic_covariance, Expansion,
    KpcaModel,
};
use ukpca_core::kernels::{gram, gram_cross, subsample_uniform, KernelSpec, SampleSet, SpectralKernel};
use ukpca_core::linalg::DEFAULT_RTOL;
use ukpca_core::oracle::build_oracle;
use ukpca_core::recon::{exact_recon, recon_h, recon_l2, FeatureProjection, MeanSource, Norm, ReconContext, Target};
use ukpca_core::Variant;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e2s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---- independent reference computations ----

fn eigh_desc(a: MatRef<'_, f64>) -> (Vec<f64>, Mat<f64>) {
    let n = a.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let evd = sym.self_adjoint_eigen(Side::Lower).expect("eigendecomposition");
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let vals: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    (vals, vecs)
}

fn centering(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
}

fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// `∫_0^1 √2 sin(πfx) dx`.
fn basis_mean(f: u32) -> f64 {
    let pf = PI * f as f64;
    SQRT_2 * (1.0 - pf.cos()) / pf
}

/// Covariance of the features `√λ_f e_f(X)`, X ~ U[0,1]:
/// `Λ^{1/2} (I - μμᵀ) Λ^{1/2}`.
fn population_covariance(kernel: &SpectralKernel) -> Mat<f64> {
    let lam = kernel.eigenvalues();
    let mu: Vec<f64> = kernel.frequencies().iter().map(|&f| basis_mean(f)).collect();
    let d = lam.len();
    Mat::from_fn(d, d, |i, j| (lam[i] * lam[j]).sqrt() * (if i == j { 1.0 } else { 0.0 } - mu[i] * mu[j]))
}

fn features(kernel: &SpectralKernel, x: &SampleSet) -> Mat<f64> {
    let lam = kernel.eigenvalues();
    let freq = kernel.frequencies();
    Mat::from_fn(x.len(), lam.len(), |t, i| lam[i].sqrt() * SQRT_2 * (PI * freq[i] as f64 * x.point(t)[0]).sin())
}

/// `K_mm^{+1/2}` from an eigendecomposition, same relative cut as the library default.
fn inv_root(kmm: &Mat<f64>) -> Mat<f64> {
    let (vals, vecs) = eigh_desc(kmm.as_ref());
    let cut = DEFAULT_RTOL * vals[0];
    let m = vals.len();
    let mut out = Mat::<f64>::zeros(m, m);
    for (k, &w) in vals.iter().enumerate().filter(|(_, &w)| w > cut) {
        let s = 1.0 / w.sqrt();
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] += s * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    out
}

/// `K_nm K_mm⁺ K_mn`, factored through `K_mm^{+1/2}`.
fn reference_nystrom_gram(kmm: &Mat<f64>, knm: &Mat<f64>) -> Mat<f64> {
    let y = knm * inv_root(kmm);
    &y * y.transpose()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// OLS slope of `ln y` on `ln x`.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn fixture() -> (KernelSpec, SpectralKernel) {
    let spec = KernelSpec::spectral(2.0, 200).unwrap();
    let kernel = spec.as_spectral().unwrap().clone();
    (spec, kernel)
}

fn tails(kernel: &SpectralKernel, ell: usize) -> (f64, f64) {
    let (vals, _) = eigh_desc(population_covariance(kernel).as_ref());
    (vals[ell..].iter().sum(), vals[ell..].iter().map(|l| l * l).sum())
}

// ---- criteria ----

fn identity(norm: Norm) -> Outcome {
    let (spec, kernel) = fixture();
    let oracle = build_oracle(&spec).map_err(e2s)?;
    let test = SampleSet::uniform(100_000, 1, 9_001);
    let ctx = ReconContext::new(&spec, MeanSource::Oracle(&oracle));
    let mut parts = Vec::new();
    for ell in [1, 3, 10] {
        let proj = FeatureProjection::population(&oracle, ell).map_err(e2s)?;
        let (th, tl) = tails(&kernel, ell);
        let (r, tail) = match norm {
            Norm::H => (recon_h(&Target::Features(&proj), &ctx, &test), th),
            Norm::L2 => (recon_l2(&Target::Features(&proj), &ctx, &test), tl),
        };
        let r = r.map_err(e2s)?;
        let z = (r.estimate - tail) / r.se;
        ensure!(z.abs() <= 3.0, "ℓ={ell}: {:.6e} vs tail {tail:.6e} ({z:+.2} SE)", r.estimate);
        parts.push(format!("ℓ={ell} {z:+.2} SE"));
    }
    Ok(parts.join(", "))
}

fn lower_bounds() -> Outcome {
    let (spec, kernel) = fixture();
    let oracle = build_oracle(&spec).map_err(e2s)?;
    let (n, ell) = (500, 3);
    let m = default_nystrom_m(n);
    let (th, tl) = tails(&kernel, ell);
    let mut min_z = f64::INFINITY;
    let mut violations = Vec::new();
    for s in 0..20u64 {
        let x = SampleSet::uniform(n, 1, 10_000 + s);
        let test = SampleSet::uniform(10_000, 1, 11_000 + s);
        let ctx = ReconContext::new(&spec, MeanSource::Oracle(&oracle)).with_train(&x);
        let k = gram(&spec, &x).map_err(e2s)?;
        let e = fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
        let idx = subsample_uniform(n, m, 12_000 + s).map_err(e2s)?;
        let (kmm, knm) = gram_cross(&spec, &x, &idx).map_err(e2s)?;
        let ny = fit_nystrom(kmm.as_ref(), knm.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
        let sub = x.subset(&idx).map_err(e2s)?;
        let te = Target::Model { model: &e, expansion: Expansion::Kernel { spec: &spec, points: &x } };
        let tn = Target::Model { model: &ny, expansion: Expansion::Kernel { spec: &spec, points: &sub } };
        for (name, r, tail) in [
            ("R", recon_h(&te, &ctx, &test), th),
            ("R_nys", recon_h(&tn, &ctx, &test), th),
            ("T_nys", recon_l2(&tn, &ctx, &test), tl),
        ] {
            let r = r.map_err(e2s)?;
            let z = (r.estimate - tail) / r.se;
            if r.estimate < tail - 3.0 * r.se {
                violations.push(format!("fit {s} {name}: {z:+.2} SE"));
            }
            min_z = min_z.min(z);
        }
    }
    ensure!(violations.is_empty(), "{} violations: {}", violations.len(), violations.join("; "));
    Ok(format!("60 estimates, smallest margin {min_z:+.1} SE"))
}

fn degeneracy() -> Outcome {
    let (spec, kernel) = fixture();
    let oracle = build_oracle(&spec).map_err(e2s)?;
    let ell = 5;
    let (mut worst_eig, mut worst_rec) = (0.0f64, 0.0f64);
    for n in [50, 200] {
        for s in 0..5u64 {
            let x = SampleSet::uniform(n, 1, 20_000 + s);
            let k = gram(&spec, &x).map_err(e2s)?;
            let e = fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
            // reference spectrum: C K C / (n-1)
            let c = centering(n);
            let (ref_vals, _) = eigh_desc((&c * &k * &c * faer::Scale(1.0 / (n - 1) as f64)).as_ref());
            let idx = subsample_uniform(n, n, 21_000 + s).map_err(e2s)?;
            let (kmm, knm) = gram_cross(&spec, &x, &idx).map_err(e2s)?;
            let ny = fit_nystrom(kmm.as_ref(), knm.as_ref(), ell, DEFAULT_RTOL).map_err(e2s)?;
            for i in 0..ell {
                worst_eig = worst_eig.max((ny.eigenvalues[i] - e.eigenvalues[i]).abs() / e.eigenvalues[i]);
                worst_eig = worst_eig.max((e.eigenvalues[i] - ref_vals[i]).abs() / ref_vals[i]);
            }
            let pe = FeatureProjection::from_model(&e, &x, &kernel).map_err(e2s)?;
            let pn = FeatureProjection::from_model(&ny, &x.subset(&idx).map_err(e2s)?, &kernel).map_err(e2s)?;
            for norm in [Norm::H, Norm::L2] {
                let a = exact_recon(&pe, &oracle, norm).map_err(e2s)?;
                let b = exact_recon(&pn, &oracle, norm).map_err(e2s)?;
                worst_rec = worst_rec.max((a - b).abs() / a);
            }
            // and on a shared Monte Carlo test set
            let test = SampleSet::uniform(2_000, 1, 22_000 + s);
            let ctx = ReconContext::new(&spec, MeanSource::Oracle(&oracle)).with_train(&x);
            let sub = x.subset(&idx).map_err(e2s)?;
            let a = recon_l2(&Target::Model { model: &e, expansion: Expansion::Kernel { spec: &spec, points: &x } }, &ctx, &test)
                .map_err(e2s)?;
            let b = recon_l2(&Target::Model { model: &ny, expansion: Expansion::Kernel { spec: &spec, points: &sub } }, &ctx, &test)
                .map_err(e2s)?;
            worst_rec = worst_rec.max((a.estimate - b.estimate).abs() / a.estimate);
        }
    }
    ensure!(worst_eig <= 1e-8 && worst_rec <= 1e-6, "eigenvalues {worst_eig:.2e}, errors {worst_rec:.2e}");
    Ok(format!("eigenvalues {worst_eig:.1e}, errors {worst_rec:.1e}"))
}

/// Points, `K`, `K_mm`, `K_nm`.
type GaussianPair = (SampleSet, Mat<f64>, Mat<f64>, Mat<f64>);

fn gaussian_pair(n: usize, m: usize, seed: u64) -> Result<GaussianPair, String> {
    let spec = KernelSpec::gaussian(0.5).map_err(e2s)?;
    let x = SampleSet::uniform(n, 2, seed);
    let k = gram(&spec, &x).map_err(e2s)?;
    let idx = subsample_uniform(n, m, seed + 1).map_err(e2s)?;
    let (kmm, knm) = gram_cross(&spec, &x, &idx).map_err(e2s)?;
    Ok((x, k, kmm, knm))
}

fn spectrum_identity() -> Outcome {
    let (n, m) = (100, 20);
    let mut worst = 0.0f64;
    let mut worst_gram = 0.0f64;
    let mut compared = 0;
    for s in 0..10u64 {
        let (_, _, kmm, knm) = gaussian_pair(n, m, 30_000 + 10 * s)?;
        let mm = nystrom_m_matrix(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
        let (a, _) = eigh_desc(mm.as_ref());
        let kt = reference_nystrom_gram(&kmm, &knm);
        let lib_kt = nystrom_gram(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).map_err(e2s)?;
        worst_gram = worst_gram.max(max_abs((&lib_kt - &kt).as_ref()) / max_abs(kt.as_ref()));
        // K̃H_n/(n(n-1)) = K̃C/(n-1) shares its spectrum with the symmetric C K̃ C/(n-1)
        let c = centering(n);
        let (b, _) = eigh_desc((&c * &kt * &c * faer::Scale(1.0 / (n - 1) as f64)).as_ref());
        let cut = 1e-10 * a[0];
        for (i, &ai) in a.iter().enumerate().take_while(|(_, &v)| v > cut) {
            worst = worst.max((ai - b[i]).abs() / ai);
            compared += 1;
        }
    }
    ensure!(worst <= 1e-8, "largest relative difference {worst:.2e}");
    ensure!(worst_gram <= 1e-8, "library K̃ differs from the reference by {worst_gram:.2e}");
    Ok(format!("{compared} eigenvalues, max relative difference {worst:.1e}"))
}

// Double-double helpers. Forming `P̄` explicitly divides by the smallest
// nonzero eigenvalue of `C K_mm C`, so a float64 evaluation of the residual
// carries noise of order ε·cond, which can exceed the tolerance on its own.

type Dd = TwoFloat;

fn dd(x: f64) -> Dd {
    Dd::from(x)
}

/// `1/x` to double-double accuracy (two Newton steps from the f64 reciprocal).
fn dd_recip(x: Dd) -> Dd {
    let mut q = dd(1.0 / x.hi());
    for _ in 0..2 {
        q = q + q * (dd(1.0) - x * q);
    }
    q
}

fn dd_mat(a: &Mat<f64>) -> Vec<Vec<Dd>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| dd(a[(i, j)])).collect()).collect()
}

fn dd_matvec(a: &[Vec<Dd>], x: &[Dd]) -> Vec<Dd> {
    a.iter().map(|row| row.iter().zip(x).fold(dd(0.0), |s, (&r, &v)| s + r * v)).collect()
}

fn dd_tmatvec(a: &[Vec<Dd>], x: &[Dd]) -> Vec<Dd> {
    let mut out = vec![dd(0.0); a[0].len()];
    for (row, &v) in a.iter().zip(x) {
        for (o, &r) in out.iter_mut().zip(row) {
            *o += r * v;
        }
    }
    out
}

fn dd_center(x: &[Dd]) -> Vec<Dd> {
    let mean = x.iter().fold(dd(0.0), |s, &v| s + v) * dd_recip(dd(x.len() as f64));
    x.iter().map(|&v| v - mean).collect()
}

/// Gauss–Jordan inverse with partial pivoting.
fn dd_inverse(mut a: Vec<Vec<Dd>>) -> Vec<Vec<Dd>> {
    let n = a.len();
    let mut inv: Vec<Vec<Dd>> = (0..n).map(|i| (0..n).map(|j| dd(if i == j { 1.0 } else { 0.0 })).collect()).collect();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].hi().abs().total_cmp(&a[j][col].hi().abs())).unwrap();
        a.swap(col, p);
        inv.swap(col, p);
        let r = dd_recip(a[col][col]);
        for j in 0..n {
            a[col][j] *= r;
            inv[col][j] *= r;
        }
        for i in (0..n).filter(|&i| i != col) {
            let f = a[i][col];
            for j in 0..n {
                a[i][j] = a[i][j] - f * a[col][j];
                inv[i][j] = inv[i][j] - f * inv[col][j];
            }
        }
    }
    inv
}

/// `‖P̄ Σ̂ P̄ φ̃_i - λ̃_i φ̃_i‖_H / λ̃_1`, with `P̄` in subsample coefficients
/// `W K_mm`, `W = C (C K_mm C)⁺ C`, evaluated in double-double.
///
/// When `C K_mm C` has rank m-1 its null space is the constants, and
/// `(C K_mm C)⁺ = C (C K_mm C + 𝟙𝟙ᵀ/m)⁻¹ C`, which needs no eigensolver.
fn eigen_residual(model: &KpcaModel, kmm: &Mat<f64>, knm: &Mat<f64>) -> Result<f64, String> {
    let (n, m) = (knm.nrows(), knm.ncols());
    let cm = centering(m);
    let (vals, _) = eigh_desc((&cm * kmm * &cm).as_ref());
    let rank = vals.iter().filter(|&&v| v > DEFAULT_RTOL * vals[0]).count();
    ensure!(rank == m - 1, "C K_mm C has rank {rank}, expected {}", m - 1);

    let k = dd_mat(kmm);
    let kn = dd_mat(knm);
    let inv_m = dd_recip(dd(m as f64));
    // C K C, then + 𝟙𝟙ᵀ/m
    let cols: Vec<Vec<Dd>> = (0..m).map(|j| dd_center(&(0..m).map(|i| k[i][j]).collect::<Vec<_>>())).collect();
    let ckc_t: Vec<Vec<Dd>> = (0..m).map(|i| dd_center(&(0..m).map(|j| cols[j][i]).collect::<Vec<_>>())).collect();
    let shifted: Vec<Vec<Dd>> = (0..m).map(|i| (0..m).map(|j| ckc_t[i][j] + inv_m).collect()).collect();
    let ainv = dd_inverse(shifted);
    // w(v) = C A⁻¹ C v
    let w = |v: &[Dd]| dd_center(&dd_matvec(&ainv, &dd_center(v)));
    let scale = dd_recip(dd((n - 1) as f64));

    let mut worst = 0.0f64;
    for i in 0..model.ell() {
        let b: Vec<Dd> = (0..m).map(|j| dd(model.coefficients[(i, j)])).collect();
        let pb = w(&dd_matvec(&k, &b));
        let sigma_pb: Vec<Dd> = dd_center(&dd_matvec(&kn, &pb)).into_iter().map(|v| v * scale).collect();
        let out = w(&dd_tmatvec(&kn, &sigma_pb));
        let lam = dd(model.eigenvalues[i]);
        let r: Vec<Dd> = out.iter().zip(&b).map(|(&o, &bb)| o - lam * bb).collect();
        let kr = dd_matvec(&k, &r);
        let sq = r.iter().zip(&kr).fold(dd(0.0), |s, (&a, &c)| s + a * c);
        worst = worst.max(f64::from(sq).max(0.0).sqrt() / model.eigenvalues[0]);
    }
    Ok(worst)
}

fn eigen_equation() -> Outcome {
    let mut worst = 0.0f64;
    for s in 0..10u64 {
        let (_, _, kmm, knm) = gaussian_pair(100, 20, 40_000 + 10 * s)?;
        let model = fit_nystrom(kmm.as_ref(), knm.as_ref(), 5, DEFAULT_RTOL).map_err(e2s)?;
        worst = worst.max(eigen_residual(&model, &kmm, &knm)?);
    }
    ensure!(worst <= 1e-7, "residual {worst:.2e} λ̃₁");
    Ok(format!("10 fits, max residual {worst:.1e} λ̃₁"))
}

fn sweep_config() -> ExperimentConfig {
    ExperimentConfig {
        n: vec![200, 400, 800, 1600],
        variants: vec!["ekpca".into(), "nystrom".into(), "rff".into()],
        norms: vec!["H".into(), "L2".into()],
        trials: 20,
        rff_family: RffFamily::Signed,
        rff_gamma: 0.4,
        evaluation: Evaluation::MonteCarlo,
        seed: 2024,
        ..ExperimentConfig::default()
    }
}

fn cell_means(rows: &[Row], variant: Variant, norm: Norm) -> Vec<(usize, f64, f64)> {
    let mut ns: Vec<usize> = rows.iter().filter(|r| r.variant == variant && r.norm == norm).map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let v: Vec<f64> =
                rows.iter().filter(|r| r.variant == variant && r.norm == norm && r.n == n).map(|r| r.estimate).collect();
            let (mean, se) = mean_se(&v);
            (n, mean, se)
        })
        .collect()
}

fn rate(rows: &[Row], norm: Norm, predicted: f64, tol: f64) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for v in [Variant::Ekpca, Variant::Nystrom] {
        let cells = cell_means(rows, v, norm);
        if cells.len() != 4 || cells.iter().any(|c| c.1 <= 0.0) {
            return Err(format!("{v}: incomplete sweep ({} cells)", cells.len()));
        }
        let slope = loglog_slope(&cells.iter().map(|c| (c.0 as f64, c.1)).collect::<Vec<_>>());
        ok &= (slope - predicted).abs() <= tol;
        parts.push(format!("{v} slope {slope:.3}"));
    }
    if norm == Norm::H {
        let e = cell_means(rows, Variant::Ekpca, norm);
        let ny = cell_means(rows, Variant::Nystrom, norm);
        let worst = e.iter().zip(&ny).map(|(a, b)| (a.1 / b.1).max(b.1 / a.1)).fold(0.0, f64::max);
        ok &= worst <= 2.0;
        parts.push(format!("largest per-cell ratio {worst:.3}"));
    }
    let detail = format!("{} (target {predicted} ± {tol})", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rff_ordering(rows: &[Row]) -> Outcome {
    let pick = |v| cell_means(rows, v, Norm::L2).into_iter().find(|c| c.0 == 1600);
    let (Some(ny), Some(rf)) = (pick(Variant::Nystrom), pick(Variant::Rff)) else {
        return Err("missing n=1600 cells".into());
    };
    let slack = 3.0 * (ny.2 * ny.2 + rf.2 * rf.2).sqrt();
    ensure!(ny.1 <= rf.1 + slack, "Nyström {:.4e} vs RFF {:.4e} (slack {slack:.1e})", ny.1, rf.1);
    Ok(format!("Nyström {:.3e} ≤ RFF {:.3e}", ny.1, rf.1))
}

fn unbiasedness() -> Outcome {
    let (_, full) = fixture();
    let d = 6;
    let kernel = SpectralKernel::new(full.eigenvalues()[..d].to_vec(), full.frequencies()[..d].to_vec()).map_err(e2s)?;
    let truth = population_covariance(&kernel);
    let (reps, n) = (2000, 20);
    let mut u_draws = vec![Vec::with_capacity(reps); d * d];
    let mut v_diag = vec![0.0; d];
    for r in 0..reps {
        let x = SampleSet::uniform(n, 1, 50_000 + r as u64);
        let z = features(&kernel, &x);
        let u = u_statistic_covariance(z.as_ref()).map_err(e2s)?;
        let v = v_statistic_covariance(z.as_ref()).map_err(e2s)?;
        for i in 0..d {
            for j in 0..d {
                u_draws[i * d + j].push(u[(i, j)]);
            }
            v_diag[i] += v[(i, i)] / reps as f64;
        }
    }
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let (mean, se) = mean_se(&u_draws[i * d + j]);
            worst = worst.max((mean - truth[(i, j)]).abs() / se);
        }
    }
    ensure!(worst <= 3.0, "U-statistic entry off by {worst:.2} SE");
    let below = (0..d).filter(|&i| v_diag[i] < truth[(i, i)]).count();
    ensure!(below == d, "V-statistic diagonal below the truth in only {below}/{d} entries");
    Ok(format!("U-statistic max |z| {worst:.2}; V-statistic low on {below}/{d} diagonal entries"))
}

fn hoffman_wielandt() -> Outcome {
    let (n, m, ell) = (100, 20, 3);
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    for s in 0..20u64 {
        let (_, k, kmm, knm) = gaussian_pair(n, m, 60_000 + 10 * s)?;
        let kt = reference_nystrom_gram(&kmm, &knm);
        let h = centering(n) * faer::Scale(n as f64);
        let diff = (&kt - &k) * &h;
        let op = diff.singular_values().map_err(|e| format!("{e:?}"))?.into_iter().fold(0.0, f64::max);
        let bound = op / (n * (n - 1)) as f64;
        let lt = fit_nystrom(kmm.as_ref(), knm.as_ref(), ell + 1, DEFAULT_RTOL).map_err(e2s)?.eigenvalues[ell];
        let lh = fit_ekpca(k.as_ref(), ell + 1, DEFAULT_RTOL).map_err(e2s)?.eigenvalues[ell];
        let gap = (lt - lh).abs();
        if gap > bound {
            violations += 1;
        }
        min_slack = min_slack.min(bound - gap);
    }
    ensure!(violations == 0, "{violations} violations, smallest slack {min_slack:.2e}");
    Ok(format!("20 fits, smallest slack {min_slack:.2e}"))
}

fn verify_fast() -> Outcome {
    let start = Instant::now();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_ukpca"))
        .args(["verify", "--fast"])
        .output()
        .map_err(e2s)?;
    let secs = start.elapsed().as_secs_f64();
    let summary = String::from_utf8_lossy(&out.stdout).lines().last().unwrap_or("").to_string();
    ensure!(out.status.code() == Some(0), "exit {:?}: {summary}", out.status.code());
    ensure!(secs < 300.0, "took {secs:.0}s");
    Ok(format!("{summary} in {secs:.0}s"))
}

#[test]
fn acceptance() {
    let mut stderr = std::io::stderr();
    let mut failed = Vec::new();
    let mut report = |id: u32, start: Instant, r: Outcome| {
        let (status, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(id);
                ("FAIL", d)
            }
        };
        let _ = writeln!(stderr, "criterion {id}: {status} {detail} [{:.1}s]", start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    report(1, t, identity(Norm::H));
    let t = Instant::now();
    report(2, t, identity(Norm::L2));
    let t = Instant::now();
    report(3, t, lower_bounds());
    let t = Instant::now();
    report(4, t, degeneracy());
    let t = Instant::now();
    report(5, t, spectrum_identity());
    let t = Instant::now();
    report(6, t, eigen_equation());

    let t = Instant::now();
    match run_sweep(&sweep_config()) {
        Ok(sweep) => {
            report(7, t, rate(&sweep.rows, Norm::H, -0.25, 0.1));
            report(8, t, rate(&sweep.rows, Norm::L2, -0.75, 0.12));
            report(9, t, rff_ordering(&sweep.rows));
        }
        Err(e) => {
            for id in [7, 8, 9] {
                report(id, t, Err(format!("sweep failed: {e}")));
            }
        }
    }

    let t = Instant::now();
    report(10, t, unbiasedness());
    let t = Instant::now();
    report(11, t, hoffman_wielandt());
    let t = Instant::now();
    report(12, t, verify_fast());

    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
