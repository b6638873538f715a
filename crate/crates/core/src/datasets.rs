//! Two-cluster Gaussian mixture generation, class-conditional label flipping,
//! CSV ingestion and standardization.
//!
//! Class convention: columns from cluster 1 carry label `-1`, columns from
//! cluster 2 carry label `+1`. Cluster means are `-mu` and `+mu`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, Domain};

const SYMMETRY_TOL: f64 = 1e-10;
const FLIP_SEED_TAG: u64 = 0xF11B;

/// Covariance structure of the two clusters.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Isotropic,
    General { c1: DMatrix<f64>, c2: DMatrix<f64> },
}

/// Parameters of the two-cluster mixture and of the label noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    pub p: usize,
    pub n: usize,
    pub pi1: f64,
    pub mu: DVector<f64>,
    pub cov: Covariance,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub seed: u64,
}

impl GmmSpec {
    /// Isotropic mixture with `mu = snr / sqrt(p) * (1, ..., 1)`.
    pub fn isotropic(p: usize, n: usize, pi1: f64, snr: f64, seed: u64) -> Self {
        let mu = DVector::from_element(p, snr / (p.max(1) as f64).sqrt());
        GmmSpec {
            p,
            n,
            pi1,
            mu,
            cov: Covariance::Isotropic,
            eps_plus: 0.0,
            eps_minus: 0.0,
            seed,
        }
    }

    pub fn with_noise(mut self, eps_plus: f64, eps_minus: f64) -> Self {
        self.eps_plus = eps_plus;
        self.eps_minus = eps_minus;
        self
    }

    /// Number of cluster-1 samples, `round(pi1 * n)`.
    pub fn n1(&self) -> usize {
        (self.pi1 * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::param("p must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::param("n must be at least 2"));
        }
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return Err(Error::param(format!("pi1 = {} must lie in (0, 1)", self.pi1)));
        }
        let n1 = self.n1();
        if n1 == 0 || n1 == self.n {
            return Err(Error::param(format!(
                "empty class: round(pi1 * n) = {n1} with n = {}",
                self.n
            )));
        }
        if self.mu.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: self.mu.len(),
                context: "mean vector length",
            });
        }
        validate_noise(self.eps_plus, self.eps_minus)?;
        if let Covariance::General { c1, c2 } = &self.cov {
            check_symmetric("C1", c1, self.p)?;
            check_symmetric("C2", c2, self.p)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_noise(eps_plus: f64, eps_minus: f64) -> Result<()> {
    for (name, e) in [("eps_plus", eps_plus), ("eps_minus", eps_minus)] {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::param(format!("{name} = {e} must lie in [0, 1)")));
        }
    }
    if eps_plus + eps_minus >= 1.0 {
        return Err(Error::param(format!(
            "eps_plus + eps_minus = {} must be < 1",
            eps_plus + eps_minus
        )));
    }
    Ok(())
}

pub(crate) fn check_symmetric(name: &'static str, c: &DMatrix<f64>, p: usize) -> Result<()> {
    if c.nrows() != p || c.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: if c.nrows() != p { c.nrows() } else { c.ncols() },
            context: "covariance shape",
        });
    }
    let asymmetry = (c - c.transpose()).amax();
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { name, asymmetry });
    }
    Ok(())
}

/// Symmetric square root `C^{1/2}` of a PSD matrix. Eigenvalues down to
/// `-1e-10 * max(1, |lambda_max|)` are treated as round-off and clamped to zero.
pub fn psd_sqrt(name: &'static str, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(1.0);
    if min < -1e-10 * scale {
        return Err(Error::NotPsd {
            name,
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Features with clean and noisy labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `p x n`, one sample per column.
    pub x: DMatrix<f64>,
    pub y_clean: Option<Vec<i8>>,
    pub y_noisy: Vec<i8>,
}

impl LabeledDataset {
    pub fn new(x: DMatrix<f64>, y_clean: Option<Vec<i8>>, y_noisy: Vec<i8>) -> Result<Self> {
        let n = x.ncols();
        if y_noisy.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: y_noisy.len(),
                context: "noisy label count",
            });
        }
        check_labels(&y_noisy)?;
        if let Some(y) = &y_clean {
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: y.len(),
                    context: "clean label count",
                });
            }
            check_labels(y)?;
        }
        Ok(LabeledDataset { x, y_clean, y_noisy })
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    /// Labels treated as ground truth: clean labels when present, noisy otherwise.
    pub fn truth(&self) -> &[i8] {
        self.y_clean.as_deref().unwrap_or(&self.y_noisy)
    }

    /// `(n1, n2)`: number of ground-truth `-1` and `+1` labels.
    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.truth().iter().filter(|&&y| y < 0).count();
        (n1, self.n() - n1)
    }

    pub fn noisy_targets(&self) -> DVector<f64> {
        labels_to_vector(&self.y_noisy)
    }

    /// Clean labels as a vector, or an error when the dataset has no ground truth.
    pub fn clean_targets(&self) -> Result<DVector<f64>> {
        self.y_clean
            .as_deref()
            .map(labels_to_vector)
            .ok_or(Error::MissingGroundTruth)
    }
}

fn check_labels(y: &[i8]) -> Result<()> {
    match y.iter().position(|&v| v != 1 && v != -1) {
        Some(i) => Err(Error::param(format!(
            "label {} at index {i} is not in {{-1, +1}}",
            y[i]
        ))),
        None => Ok(()),
    }
}

pub fn labels_to_vector(y: &[i8]) -> DVector<f64> {
    DVector::from_iterator(y.len(), y.iter().map(|&v| f64::from(v)))
}

/// Draws the mixture: the first `round(pi1 n)` columns from cluster 1
/// (`-mu + C1^{1/2} z`, label `-1`), the rest from cluster 2. Noisy labels
/// equal the clean ones; see [`flip_labels`].
pub fn generate_gmm(spec: &GmmSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let roots = match &spec.cov {
        Covariance::Isotropic => None,
        Covariance::General { c1, c2 } => Some((psd_sqrt("C1", c1)?, psd_sqrt("C2", c2)?)),
    };
    let (p, n, n1) = (spec.p, spec.n, spec.n1());
    let mut x = DMatrix::zeros(p, n);
    let mut z = DVector::zeros(p);
    for j in 0..n {
        let mut rng = substream(spec.seed, Domain::Features, j as u64);
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let (sign, root) = if j < n1 {
            (-1.0, roots.as_ref().map(|r| &r.0))
        } else {
            (1.0, roots.as_ref().map(|r| &r.1))
        };
        let mut col = x.column_mut(j);
        match root {
            Some(r) => col.gemv(1.0, r, &z, 0.0),
            None => col.copy_from(&z),
        }
        col.axpy(sign, &spec.mu, 1.0);
    }
    let y: Vec<i8> = (0..n).map(|j| if j < n1 { -1 } else { 1 }).collect();
    Ok(LabeledDataset {
        x,
        y_clean: Some(y.clone()),
        y_noisy: y,
    })
}

/// Flips each `+1` label to `-1` with probability `eps_plus` and each `-1`
/// to `+1` with probability `eps_minus`, independently per sample.
pub fn flip_labels(ds: &LabeledDataset, eps_plus: f64, eps_minus: f64, seed: u64) -> Result<LabeledDataset> {
    validate_noise(eps_plus, eps_minus)?;
    let clean = ds.y_clean.as_ref().ok_or(Error::MissingGroundTruth)?;
    let y_noisy = clean
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let u: f64 = substream(seed, Domain::Flips, i as u64).random();
            let eps = if y > 0 { eps_plus } else { eps_minus };
            if u < eps {
                -y
            } else {
                y
            }
        })
        .collect();
    Ok(LabeledDataset {
        x: ds.x.clone(),
        y_clean: ds.y_clean.clone(),
        y_noisy,
    })
}

/// Generates the mixture and applies its label noise with a seed
/// derived from `spec.seed`.
pub fn sample_noisy(spec: &GmmSpec) -> Result<LabeledDataset> {
    let clean = generate_gmm(spec)?;
    flip_labels(
        &clean,
        spec.eps_plus,
        spec.eps_minus,
        derive_seed(spec.seed, FLIP_SEED_TAG),
    )
}

/// Which CSV field holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
    /// The label column holds ground truth (stored as both clean and noisy labels).
    pub has_clean_labels: bool,
}

/// Reads one sample per row; every field except the label column is a feature.
/// Labels may be `{-1, +1}` or `{0, 1}` (0 maps to -1). Row numbers in errors
/// count data rows from 1, excluding the header.
pub fn load_features_csv(path: &Path, opts: &CsvOptions) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;

    let label_idx = match &opts.label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => {
            if !opts.has_header {
                return Err(Error::Parse {
                    path: path.into(),
                    row: 0,
                    message: format!("label column '{name}' given by name but the file has no header"),
                });
            }
            let headers = reader.headers().map_err(|e| csv_error(path, 0, e))?;
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                path: path.into(),
                row: 0,
                message: format!("no column named '{name}' in header"),
            })?
        }
    };

    let mut width = None;
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let fields = record.len();
        match width {
            None => {
                if fields < 2 {
                    return Err(Error::Parse {
                        path: path.into(),
                        row,
                        message: format!("need a label and at least one feature, found {fields} field(s)"),
                    });
                }
                if label_idx >= fields {
                    return Err(Error::Parse {
                        path: path.into(),
                        row,
                        message: format!("label column {label_idx} out of range for {fields} fields"),
                    });
                }
                width = Some(fields);
            }
            Some(w) if w != fields => {
                return Err(Error::Parse {
                    path: path.into(),
                    row,
                    message: format!("ragged row: expected {w} fields, found {fields}"),
                });
            }
            Some(_) => {}
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(parse_label(field).ok_or_else(|| Error::Parse {
                    path: path.into(),
                    row,
                    message: format!("label '{field}' is not one of -1, 1, 0"),
                })?);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    path: path.into(),
                    row,
                    message: format!("feature {j} ('{field}') is not a number"),
                })?;
                features.push(v);
            }
        }
    }
    let Some(width) = width else {
        return Err(Error::Parse {
            path: path.into(),
            row: 0,
            message: "file contains no data rows".into(),
        });
    };
    let p = width - 1;
    let n = labels.len();
    let x = DMatrix::from_column_slice(p, n, &features);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{}: feature matrix", path.display())));
    }
    let y_clean = opts.has_clean_labels.then(|| labels.clone());
    LabeledDataset::new(x, y_clean, labels)
}

fn parse_label(s: &str) -> Option<i8> {
    let v: f64 = s.parse().ok()?;
    if v == 1.0 {
        Some(1)
    } else if v == -1.0 || v == 0.0 {
        Some(-1)
    } else {
        None
    }
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!("is_io_error implies an Io kind");
    }
    Error::Parse {
        path: path.into(),
        row,
        message: e.to_string(),
    }
}

/// Output of [`standardize_and_estimate`].
#[derive(Debug, Clone)]
pub struct Standardized {
    pub dataset: LabeledDataset,
    /// `||mu2_hat - mu1_hat|| / 2`; `None` when only one class is present.
    pub snr_estimate: Option<f64>,
    pub pi1_estimate: f64,
    pub single_class: bool,
    /// Class means were taken from noisy labels (no ground truth available);
    /// the SNR estimate is then biased toward zero.
    pub from_noisy_labels: bool,
}

/// Scales each feature to mean 0 and variance 1 (population variance;
/// zero-variance features are only centered), then subtracts the midpoint of
/// the two class means so that they become `-mu_hat` and `+mu_hat`.
pub fn standardize_and_estimate(ds: &LabeledDataset) -> Result<Standardized> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::param("standardization needs n >= 2"));
    }
    let mut x = ds.x.clone();
    for mut row in x.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
        let var = row.norm_squared() / n as f64;
        if var > 0.0 {
            row /= var.sqrt();
        }
    }

    let truth = ds.truth();
    let (n1, n2) = ds.class_counts();
    let pi1_estimate = n1 as f64 / n as f64;
    let single_class = n1 == 0 || n2 == 0;
    let snr_estimate = if single_class {
        log::warn!("standardize: only one class present, SNR is undefined");
        None
    } else {
        let mut m1 = DVector::zeros(ds.p());
        let mut m2 = DVector::zeros(ds.p());
        for (j, &y) in truth.iter().enumerate() {
            if y < 0 {
                m1 += x.column(j);
            } else {
                m2 += x.column(j);
            }
        }
        m1 /= n1 as f64;
        m2 /= n2 as f64;
        let mid = (&m1 + &m2) * 0.5;
        for mut col in x.column_iter_mut() {
            col -= &mid;
        }
        Some((m2 - m1).norm() / 2.0)
    };
    Ok(Standardized {
        dataset: LabeledDataset {
            x,
            y_clean: ds.y_clean.clone(),
            y_noisy: ds.y_noisy.clone(),
        },
        snr_estimate,
        pi1_estimate,
        single_class,
        from_noisy_labels: ds.y_clean.is_none(),
    })
}
