use faer::Mat;
use proptest::prelude::*;
use ukpca_core::estimators::{
    embed, fit_ekpca, fit_nystrom, fit_rff, u_statistic_covariance, v_statistic_covariance, Expansion,
};
use ukpca_core::kernels::{gram, gram_cross, rff_features, sine_basis, subsample_uniform, KernelSpec, RffMap, SampleSet};
use ukpca_core::linalg::{double_center, pinv_psd, sym_eig, DEFAULT_RTOL};
use ukpca_core::oracle::build_oracle;
use ukpca_core::recon::{recon_h, recon_l2, MeanSource, Norm, ReconContext, Target};
use ukpca_core::Error;

fn max_abs(a: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

fn points(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), 3..25)
}

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.1f64..3.0).prop_map(|b| KernelSpec::gaussian(b).unwrap()),
        Just(KernelSpec::Linear),
        (1u32..4, 0.0f64..2.0).prop_map(|(d, c)| KernelSpec::polynomial(d, c).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_is_symmetric_psd(rows in points(2), spec in kernels()) {
        let x = SampleSet::from_rows(&rows).unwrap();
        let k = gram(&spec, &x).unwrap();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        let e = sym_eig(k.as_ref()).unwrap();
        let top = e.values[0].abs().max(1.0);
        prop_assert!(*e.values.last().unwrap() >= -1e-9 * top);
    }

    #[test]
    fn double_centering_kills_row_and_column_sums(rows in points(3), spec in kernels()) {
        let x = SampleSet::from_rows(&rows).unwrap();
        let k = gram(&spec, &x).unwrap();
        let c = double_center(k.as_ref());
        let scale = max_abs(&k).max(1.0);
        for i in 0..c.nrows() {
            let r: f64 = (0..c.ncols()).map(|j| c[(i, j)]).sum();
            let s: f64 = (0..c.nrows()).map(|j| c[(j, i)]).sum();
            prop_assert!(r.abs() < 1e-10 * scale * c.nrows() as f64);
            prop_assert!(s.abs() < 1e-10 * scale * c.nrows() as f64);
        }
    }

    #[test]
    fn pinv_satisfies_penrose(rows in points(2), rank in 1usize..3) {
        let n = rows.len();
        let b = Mat::from_fn(n, rank, |i, j| rows[i][j % 2] + j as f64);
        let a = &b * b.transpose();
        let p = pinv_psd(a.as_ref(), DEFAULT_RTOL).unwrap();
        let apa = &a * &p * &a;
        prop_assert!(max_abs(&(&apa - &a)) <= 1e-7 * max_abs(&a).max(1e-300));
    }

    #[test]
    fn ekpca_eigenvalues_descend_and_stay_below_trace(rows in points(2), bw in 0.2f64..2.0) {
        let spec = KernelSpec::gaussian(bw).unwrap();
        let x = SampleSet::from_rows(&rows).unwrap();
        let k = gram(&spec, &x).unwrap();
        let n = rows.len();
        let ell = 2.min(n - 1);
        match fit_ekpca(k.as_ref(), ell, DEFAULT_RTOL) {
            Ok(model) => {
                prop_assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(model.eigenvalues.iter().all(|&l| l > 0.0));
                let c = double_center(k.as_ref());
                let tr: f64 = (0..n).map(|i| c[(i, i)]).sum::<f64>() / (n - 1) as f64;
                prop_assert!(model.eigenvalues.iter().sum::<f64>() <= tr * (1.0 + 1e-10));
                // orthonormal in H: B K Bᵀ = I
                let bkb = &model.coefficients * &k * model.coefficients.transpose();
                prop_assert!(max_abs(&(&bkb - Mat::<f64>::identity(ell, ell))) < 1e-6);
            }
            // duplicated points can leave fewer than ℓ directions
            Err(Error::Rank { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn u_statistic_is_pairwise_average(rows in points(3)) {
        let n = rows.len();
        let z = Mat::from_fn(n, 3, |i, j| rows[i][j]);
        let fast = u_statistic_covariance(z.as_ref()).unwrap();
        let slow = v_statistic_covariance(z.as_ref()).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += (z[(i, a)] - z[(j, a)]) * (z[(i, b)] - z[(j, b)]);
                    }
                }
                let u = s / (2.0 * (n * (n - 1)) as f64);
                prop_assert!((u - fast[(a, b)]).abs() < 1e-10 * (1.0 + u.abs()));
                prop_assert!((slow[(a, b)] - u * (n - 1) as f64 / n as f64).abs() < 1e-10 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn subsample_is_distinct_and_in_range(n in 1usize..200, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = ((n as f64 * frac) as usize).max(1);
        let mut idx = subsample_uniform(n, m, seed).unwrap();
        prop_assert_eq!(idx.len(), m);
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), m);
        prop_assert!(idx.iter().all(|&i| i < n));
    }
}

#[test]
fn mean_element_identity_by_monte_carlo() {
    let spec = KernelSpec::spectral(2.0, 200).unwrap();
    let kernel = spec.as_spectral().unwrap();
    let o = build_oracle(&spec).unwrap();
    // ‖m_P‖² from the definition: Σ λ_i (∫ e_i)², with ∫ e_f = √2 (1 - cos πf) / (πf)
    let target: f64 = kernel
        .eigenvalues()
        .iter()
        .zip(kernel.frequencies())
        .map(|(l, &f)| {
            let pf = std::f64::consts::PI * f as f64;
            let mu = std::f64::consts::SQRT_2 * (1.0 - pf.cos()) / pf;
            l * mu * mu
        })
        .sum();
    assert!((o.mp_sq_norm - target).abs() < 1e-12);
    let x = SampleSet::uniform(1_000_000, 1, 77);
    let mean = x.points().map(|p| o.mean_function(kernel, p[0])).sum::<f64>() / x.len() as f64;
    assert!((mean - target).abs() <= 0.01 * target, "{mean} vs {target}");
}

#[test]
fn spectral_kernel_matches_its_definition() {
    let spec = KernelSpec::spectral(2.0, 30).unwrap();
    let x = SampleSet::uniform(20, 1, 4);
    let k = gram(&spec, &x).unwrap();
    for i in 0..20 {
        for j in 0..20 {
            let (a, b) = (x.point(i)[0], x.point(j)[0]);
            let direct: f64 = (1..=30u32).map(|f| (f as f64).powf(-2.0) * sine_basis(f, a) * sine_basis(f, b)).sum();
            assert!((k[(i, j)] - direct).abs() < 1e-13);
        }
    }
}

#[test]
fn nystrom_fit_on_gaussian_data_is_orthonormal_over_the_subsample() {
    let spec = KernelSpec::gaussian(0.4).unwrap();
    let x = SampleSet::uniform(150, 2, 9);
    let idx = subsample_uniform(150, 30, 10).unwrap();
    let (kmm, knm) = gram_cross(&spec, &x, &idx).unwrap();
    let model = fit_nystrom(kmm.as_ref(), knm.as_ref(), 4, DEFAULT_RTOL).unwrap();
    let bkb = &model.coefficients * &kmm * model.coefficients.transpose();
    assert!(max_abs(&(&bkb - Mat::<f64>::identity(4, 4))) < 1e-8);
    // training-mean projections are the column means of the embedding
    let sub = x.subset(&idx).unwrap();
    let e = embed(&model, &Expansion::Kernel { spec: &spec, points: &sub }, &x).unwrap();
    for i in 0..4 {
        let m: f64 = (0..150).map(|t| e[(t, i)]).sum::<f64>() / 150.0;
        assert!((m - model.train_mean_projection[i]).abs() < 1e-12);
    }
}

#[test]
fn proxy_mean_route_tracks_oracle_route() {
    // on the spectral kernel, a large proxy sample should land near the oracle estimate
    let spec = KernelSpec::spectral(2.0, 50).unwrap();
    let o = build_oracle(&spec).unwrap();
    let x = SampleSet::uniform(200, 1, 30);
    let k = gram(&spec, &x).unwrap();
    let model = fit_ekpca(k.as_ref(), 3, DEFAULT_RTOL).unwrap();
    let test = SampleSet::uniform(2_000, 1, 31);
    let proxy = SampleSet::uniform(4_000, 1, 32);
    let inner = SampleSet::uniform(4_000, 1, 33);
    let target = Target::Model { model: &model, expansion: Expansion::Kernel { spec: &spec, points: &x } };
    let exact = ReconContext::new(&spec, MeanSource::Oracle(&o)).with_train(&x);
    let approx = ReconContext::new(&spec, MeanSource::Proxy(&proxy)).with_train(&x).with_inner(&inner);
    let a = recon_h(&target, &exact, &test).unwrap();
    let b = recon_h(&target, &approx, &test).unwrap();
    // O(N^{-1/2}) proxy bias, with generous room
    assert!((a.estimate - b.estimate).abs() < 0.05 * a.estimate, "{} vs {}", a.estimate, b.estimate);
    assert_eq!(a.norm, Norm::H);
    let c = recon_l2(&target, &exact, &test).unwrap();
    let d = recon_l2(&target, &approx, &test).unwrap();
    assert!((c.estimate - d.estimate).abs() < 0.1 * c.estimate, "{} vs {}", c.estimate, d.estimate);
}

#[test]
fn missing_inner_sample_is_an_input_error() {
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let x = SampleSet::uniform(30, 1, 1);
    let k = gram(&spec, &x).unwrap();
    let model = fit_ekpca(k.as_ref(), 2, DEFAULT_RTOL).unwrap();
    let proxy = SampleSet::uniform(300, 1, 2);
    let test = SampleSet::uniform(10, 1, 3);
    let target = Target::Model { model: &model, expansion: Expansion::Kernel { spec: &spec, points: &x } };
    let ctx = ReconContext::new(&spec, MeanSource::Proxy(&proxy));
    assert!(matches!(recon_l2(&target, &ctx, &test), Err(Error::Input(_))));
    assert!(recon_h(&target, &ctx, &test).is_ok());
}

#[test]
fn rff_model_rejects_the_rkhs_norm() {
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let map = RffMap::gaussian(1, 0.5, 40, 1).unwrap();
    let x = SampleSet::uniform(30, 1, 1);
    let z = rff_features(&map, &x).unwrap();
    let model = fit_rff(z.as_ref(), 2, DEFAULT_RTOL).unwrap();
    let proxy = SampleSet::uniform(300, 1, 2);
    let test = SampleSet::uniform(10, 1, 3);
    let ctx = ReconContext::new(&spec, MeanSource::Proxy(&proxy));
    let target = Target::Model { model: &model, expansion: Expansion::Features(&map) };
    assert!(matches!(recon_h(&target, &ctx, &test), Err(Error::Unsupported(_))));
}

#[test]
fn nystrom_gram_matches_the_pseudo_inverse_definition() {
    use ukpca_core::estimators::nystrom_gram;
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let x = SampleSet::uniform(80, 2, 5);
    let idx = subsample_uniform(80, 15, 6).unwrap();
    let (kmm, knm) = gram_cross(&spec, &x, &idx).unwrap();
    let kt = nystrom_gram(kmm.as_ref(), knm.as_ref(), DEFAULT_RTOL).unwrap();
    let direct = &knm * pinv_psd(kmm.as_ref(), DEFAULT_RTOL).unwrap() * knm.transpose();
    // the explicit pseudo-inverse carries cond(K_mm)·ε of noise
    assert!(max_abs(&(&kt - &direct)) < 1e-5 * max_abs(&direct), "{}", max_abs(&(&kt - &direct)));
    // and on the subsample K̃ reproduces K exactly
    let k = gram(&spec, &x).unwrap();
    for &i in &idx {
        for &j in &idx {
            assert!((kt[(i, j)] - k[(i, j)]).abs() < 1e-6);
        }
    }
}
