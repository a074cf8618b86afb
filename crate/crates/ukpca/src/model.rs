//! Self-describing JSON form of a fitted model.
//!
//! Floats are written with shortest round-trip formatting and parsed with
//! `float_roundtrip`, so a save/load cycle reproduces every value bit for bit.

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};
use ukpca_core::estimators::{Expansion, KpcaModel, Variant};
use ukpca_core::kernels::{FeatureFamily, KernelSpec, Provenance, RffMap, SampleSet, SpectralKernel};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "ukpca-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelDoc {
    Gaussian { bandwidth: f64 },
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Spectral { eigenvalues: Vec<f64>, frequencies: Vec<u32> },
}

impl From<&KernelSpec> for KernelDoc {
    fn from(k: &KernelSpec) -> Self {
        match k {
            KernelSpec::Gaussian { bandwidth } => KernelDoc::Gaussian { bandwidth: *bandwidth },
            KernelSpec::Linear => KernelDoc::Linear,
            KernelSpec::Polynomial { degree, offset } => KernelDoc::Polynomial { degree: *degree, offset: *offset },
            KernelSpec::Spectral(s) => {
                KernelDoc::Spectral { eigenvalues: s.eigenvalues().to_vec(), frequencies: s.frequencies().to_vec() }
            }
        }
    }
}

impl TryFrom<&KernelDoc> for KernelSpec {
    type Error = CliError;

    fn try_from(d: &KernelDoc) -> Result<Self> {
        Ok(match d {
            KernelDoc::Gaussian { bandwidth } => KernelSpec::gaussian(*bandwidth)?,
            KernelDoc::Linear => KernelSpec::Linear,
            KernelDoc::Polynomial { degree, offset } => KernelSpec::polynomial(*degree, *offset)?,
            KernelDoc::Spectral { eigenvalues, frequencies } => {
                KernelSpec::Spectral(SpectralKernel::new(eigenvalues.clone(), frequencies.clone())?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FeatureDoc {
    Fourier { dim: usize, bandwidth: f64, weights: Vec<f64>, phases: Vec<f64> },
    Sine { total_mass: f64, frequencies: Vec<u32> },
    SignedSine { eigenvalues: Vec<f64>, frequencies: Vec<u32>, signs: Vec<i8> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExpansionDoc {
    /// Kernel sections at stored points; `indices` locate them in the
    /// training file.
    Points { indices: Vec<usize>, points: Vec<Vec<f64>> },
    Features { seed: u64, map: FeatureDoc },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub variant: String,
    pub kernel: KernelDoc,
    pub rtol: f64,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub eigenvalues: Vec<f64>,
    /// Row `i` expands eigenfunction `i`.
    pub coefficients: Vec<Vec<f64>>,
    pub train_mean_projection: Vec<f64>,
    pub expansion: ExpansionDoc,
}

/// A model together with everything needed to evaluate it.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: KpcaModel,
    pub kernel: KernelSpec,
    pub basis: Basis,
    pub rtol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Basis {
    Points { indices: Vec<usize>, points: SampleSet },
    Features(RffMap),
}

impl LoadedModel {
    pub fn expansion(&self) -> Expansion<'_> {
        match &self.basis {
            Basis::Points { points, .. } => Expansion::Kernel { spec: &self.kernel, points },
            Basis::Features(map) => Expansion::Features(map),
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let m = &self.model;
        let expansion = match &self.basis {
            Basis::Points { indices, points } => ExpansionDoc::Points {
                indices: indices.clone(),
                points: points.points().map(<[f64]>::to_vec).collect(),
            },
            Basis::Features(map) => ExpansionDoc::Features {
                seed: map.seed(),
                map: match map.family().clone() {
                    FeatureFamily::Fourier { dim, bandwidth, weights, phases } => {
                        FeatureDoc::Fourier { dim, bandwidth, weights, phases }
                    }
                    FeatureFamily::Sine { total_mass, frequencies } => FeatureDoc::Sine { total_mass, frequencies },
                    FeatureFamily::SignedSine { eigenvalues, frequencies, signs } => {
                        FeatureDoc::SignedSine { eigenvalues, frequencies, signs }
                    }
                },
            },
        };
        ModelDocument {
            format: FORMAT.into(),
            version: VERSION,
            variant: m.variant.as_str().into(),
            kernel: (&self.kernel).into(),
            rtol: self.rtol,
            seed: self.seed,
            n: m.n,
            m: m.m,
            eigenvalues: m.eigenvalues.clone(),
            coefficients: (0..m.ell()).map(|i| (0..m.coefficients.ncols()).map(|j| m.coefficients[(i, j)]).collect()).collect(),
            train_mean_projection: m.train_mean_projection.clone(),
            expansion,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(CliError::Model(format!("unsupported format {} v{}", doc.format, doc.version)));
        }
        let variant = Variant::parse(&doc.variant).ok_or_else(|| CliError::Model(format!("unknown variant '{}'", doc.variant)))?;
        let kernel = KernelSpec::try_from(&doc.kernel)?;
        let ell = doc.eigenvalues.len();
        if doc.coefficients.len() != ell || doc.train_mean_projection.len() != ell {
            return Err(CliError::Model("eigenvalues, coefficients and mean projections differ in length".into()));
        }
        let basis = match &doc.expansion {
            ExpansionDoc::Points { indices, points } => {
                let dim = points.first().map_or(0, Vec::len);
                if points.iter().any(|p| p.len() != dim) || indices.len() != points.len() {
                    return Err(CliError::Model("ragged expansion points".into()));
                }
                let flat = points.iter().flatten().copied().collect();
                Basis::Points { indices: indices.clone(), points: SampleSet::new(dim, flat, Provenance::Inline)? }
            }
            ExpansionDoc::Features { seed, map } => {
                let family = match map.clone() {
                    FeatureDoc::Fourier { dim, bandwidth, weights, phases } => {
                        FeatureFamily::Fourier { dim, bandwidth, weights, phases }
                    }
                    FeatureDoc::Sine { total_mass, frequencies } => FeatureFamily::Sine { total_mass, frequencies },
                    FeatureDoc::SignedSine { eigenvalues, frequencies, signs } => {
                        FeatureFamily::SignedSine { eigenvalues, frequencies, signs }
                    }
                };
                Basis::Features(RffMap::from_family(family, *seed)?)
            }
        };
        let width = match &basis {
            Basis::Points { points, .. } => points.len(),
            Basis::Features(map) => map.num_features(),
        };
        if doc.coefficients.iter().any(|r| r.len() != width) {
            return Err(CliError::Model(format!("coefficient rows must have {width} entries")));
        }
        let coefficients = Mat::from_fn(ell, width, |i, j| doc.coefficients[i][j]);
        let model = KpcaModel {
            variant,
            eigenvalues: doc.eigenvalues.clone(),
            coefficients,
            train_mean_projection: doc.train_mean_projection.clone(),
            n: doc.n,
            m: doc.m,
        };
        Ok(Self { model, kernel, basis, rtol: doc.rtol, seed: doc.seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_document())?;
        crate::io::write_all(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let doc: ModelDocument = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse { path: path.into(), line: e.line() as u64, msg: e.to_string() })?;
        Self::from_document(&doc)
    }
}

/// Parses `name[:key=value,...]`, e.g. `gaussian:bandwidth=0.5`,
/// `polynomial:degree=3,offset=1`, `spectral:alpha=2,size=200`, `linear`.
pub fn parse_kernel(s: &str) -> Result<KernelSpec> {
    let (name, params) = s.split_once(':').unwrap_or((s, ""));
    let mut kv = std::collections::BTreeMap::new();
    for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("kernel parameter '{part}' is not key=value")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Input(format!("kernel parameter {k} = '{v}' is not a number")))?;
        if kv.insert(k.trim().to_string(), v).is_some() {
            return Err(CliError::Input(format!("kernel parameter {k} given twice")));
        }
    }
    let mut take = |key: &str, default: Option<f64>| -> Result<f64> {
        kv.remove(key)
            .or(default)
            .ok_or_else(|| CliError::Input(format!("{name} kernel needs {key}=<value>")))
    };
    let as_count = |key: &str, v: f64| -> Result<u32> {
        if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(CliError::Input(format!("{key} must be a positive integer, got {v}")))
        }
    };
    let spec = match name.trim() {
        "gaussian" => KernelSpec::gaussian(take("bandwidth", None)?)?,
        "linear" => KernelSpec::Linear,
        "polynomial" => {
            let degree = as_count("degree", take("degree", None)?)?;
            KernelSpec::polynomial(degree, take("offset", Some(1.0))?)?
        }
        "spectral" => {
            let alpha = take("alpha", Some(2.0))?;
            let size = as_count("size", take("size", Some(200.0))?)?;
            KernelSpec::spectral(alpha, size as usize)?
        }
        other => return Err(CliError::Input(format!("unknown kernel '{other}'"))),
    };
    if let Some(k) = kv.keys().next() {
        return Err(CliError::Input(format!("unknown parameter '{k}' for the {name} kernel")));
    }
    Ok(spec)
}

/// Options for [`fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub variant: Variant,
    pub ell: usize,
    /// Subsample size (Nyström) or feature count (random features); a
    /// size-dependent default when `None`.
    pub m: Option<usize>,
    pub seed: u64,
    pub rtol: f64,
}

/// `min(n, ⌈3 √n ln n⌉)`.
pub fn default_nystrom_m(n: usize) -> usize {
    let nf = n as f64;
    ((3.0 * nf.sqrt() * nf.ln()).ceil() as usize).clamp(1, n)
}

/// `⌈n^{0.4}⌉`.
pub fn default_rff_m(n: usize) -> usize {
    ((n as f64).powf(0.4) - 1e-9).ceil().max(1.0) as usize
}

/// Fits a model on `x`; random features use Bochner features for the
/// Gaussian kernel and random-sign sine features for the spectral kernel.
pub fn fit(x: &SampleSet, kernel: &KernelSpec, opts: &FitOptions) -> Result<LoadedModel> {
    use ukpca_core::estimators::{fit_ekpca, fit_nystrom, fit_rff};
    use ukpca_core::kernels::{gram, gram_cross, rff_features, subsample_uniform};
    let n = x.len();
    let (model, basis) = match opts.variant {
        Variant::Ekpca => {
            let k = gram(kernel, x)?;
            (fit_ekpca(k.as_ref(), opts.ell, opts.rtol)?, Basis::Points { indices: (0..n).collect(), points: x.clone() })
        }
        Variant::Nystrom => {
            let m = opts.m.unwrap_or_else(|| default_nystrom_m(n));
            let idx = subsample_uniform(n, m, opts.seed)?;
            let (kmm, knm) = gram_cross(kernel, x, &idx)?;
            let model = fit_nystrom(kmm.as_ref(), knm.as_ref(), opts.ell, opts.rtol)?;
            let points = x.subset(&idx)?;
            (model, Basis::Points { indices: idx, points })
        }
        Variant::Rff => {
            let m = opts.m.unwrap_or_else(|| default_rff_m(n));
            let map = match kernel {
                KernelSpec::Gaussian { bandwidth } => RffMap::gaussian(x.dim(), *bandwidth, m, opts.seed)?,
                KernelSpec::Spectral(k) => RffMap::signed_spectral(k, m, opts.seed)?,
                other => return Err(CliError::Input(format!("no random-feature map for {other:?}"))),
            };
            let z = rff_features(&map, x)?;
            (fit_rff(z.as_ref(), opts.ell, opts.rtol)?, Basis::Features(map))
        }
    };
    Ok(LoadedModel { model, kernel: kernel.clone(), basis, rtol: opts.rtol, seed: opts.seed })
}
