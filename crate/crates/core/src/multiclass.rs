//! k-class extension: Gaussian mixtures with a flip matrix and ridge training
//! on the parameterized label matrix `Y_{alpha,beta}`.
//!
//! Class labels are 0-based indices internally. Entry `(a, b)` of the flip
//! matrix is `P(noisy = a | true = b)`; its diagonal is ignored and taken as
//! the remaining mass of column `b`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::classifier::RidgeSystem;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, Domain};

const FLIP_SEED_TAG: u64 = 0x3F11B;
const TEST_SEED_TAG: u64 = 0x7E57;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiGmmSpec {
    pub k: usize,
    pub p: usize,
    pub n: usize,
    /// One mean per class, each of length `p`.
    pub means: Vec<DVector<f64>>,
    pub pi: Vec<f64>,
    /// `k x k`, columns indexed by the true class.
    pub eps: DMatrix<f64>,
    pub seed: u64,
}

impl MultiGmmSpec {
    /// Three classes with `||mu_3|| = snr`, `mu_1 = -mu_3`, `mu_2 = 0`,
    /// proportions `(0.3, 0.3, 0.4)` and flips 2 -> 1 (0.3), 3 -> 2 (0.4), 1 -> 3 (0.5).
    pub fn three_class_example(p: usize, n: usize, snr: f64, seed: u64) -> Self {
        let mu3 = DVector::from_element(p, snr / (p as f64).sqrt());
        let eps = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 0.0, 0.0, 0.0, 0.4, 0.5, 0.0, 0.0]);
        MultiGmmSpec {
            k: 3,
            p,
            n,
            means: vec![-&mu3, DVector::zeros(p), mu3],
            pi: vec![0.3, 0.3, 0.4],
            eps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k < 2 {
            return Err(Error::param("need at least 2 classes"));
        }
        if self.p == 0 || self.n < k {
            return Err(Error::param("need p >= 1 and n >= k"));
        }
        if self.means.len() != k || self.pi.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: if self.means.len() != k {
                    self.means.len()
                } else {
                    self.pi.len()
                },
                context: "class count of means / proportions",
            });
        }
        if let Some(m) = self.means.iter().find(|m| m.len() != self.p) {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: m.len(),
                context: "class mean length",
            });
        }
        if self.pi.iter().any(|&v| !(v > 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::param("class proportions must be positive and sum to 1"));
        }
        if self.eps.nrows() != k || self.eps.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self.eps.nrows(),
                context: "flip matrix shape",
            });
        }
        for b in 0..k {
            let mut mass = 0.0;
            for a in (0..k).filter(|&a| a != b) {
                let e = self.eps[(a, b)];
                if !(e >= 0.0) {
                    return Err(Error::param(format!("flip rate eps[{a}][{b}] = {e} must be >= 0")));
                }
                mass += e;
            }
            if mass >= 1.0 {
                return Err(Error::param(format!(
                    "flip mass of true class {b} is {mass}, must be < 1"
                )));
            }
        }
        Ok(())
    }

    /// Class sizes by largest remainder so they sum to `n`.
    pub fn class_sizes(&self) -> Vec<usize> {
        class_sizes(&self.pi, self.n)
    }
}

fn class_sizes(pi: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = pi.iter().map(|&p| p * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let missing = n - sizes.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        sizes[c] += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDataset {
    pub k: usize,
    /// `p x n`.
    pub x: DMatrix<f64>,
    pub y_clean: Vec<usize>,
    pub y_noisy: Vec<usize>,
}

/// Draws `x = mu_c + z` for class-sorted columns, then flips each label from
/// the column of its true class.
pub fn generate_multi_gmm(spec: &MultiGmmSpec) -> Result<MultiDataset> {
    spec.validate()?;
    let (x, y_clean) = draw_features(spec, spec.n, spec.seed);
    let flip_seed = derive_seed(spec.seed, FLIP_SEED_TAG);
    let y_noisy = y_clean
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let u: f64 = substream(flip_seed, Domain::Flips, i as u64).random();
            let mut acc = 0.0;
            for a in (0..spec.k).filter(|&a| a != b) {
                acc += spec.eps[(a, b)];
                if u < acc {
                    return a;
                }
            }
            b
        })
        .collect();
    Ok(MultiDataset {
        k: spec.k,
        x,
        y_clean,
        y_noisy,
    })
}

fn draw_features(spec: &MultiGmmSpec, n: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let sizes = class_sizes(&spec.pi, n);
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let mut x = DMatrix::zeros(spec.p, n);
    for (j, &c) in labels.iter().enumerate() {
        let mut rng = substream(seed, Domain::Features, j as u64);
        let mean = &spec.means[c];
        for (r, v) in x.column_mut(j).iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = mean[r] + z;
        }
    }
    (x, labels)
}

/// Clean held-out sample of size `n_test` for a training seed.
pub fn generate_multi_test(spec: &MultiGmmSpec, n_test: usize) -> Result<(DMatrix<f64>, Vec<usize>)> {
    spec.validate()?;
    if n_test < spec.k {
        return Err(Error::param("n_test must be at least k"));
    }
    Ok(draw_features(spec, n_test, derive_seed(spec.seed, TEST_SEED_TAG)))
}

/// Per-class on-values `alpha` and off-values `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBeta {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AlphaBeta {
    /// `alpha = 1`, `beta = 0`: one-hot labels.
    pub fn naive(k: usize) -> Self {
        AlphaBeta {
            alpha: vec![1.0; k],
            beta: vec![0.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// `tau * self + (1 - tau) * other`.
    pub fn lerp(&self, other: &AlphaBeta, tau: f64) -> AlphaBeta {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| tau * x + (1.0 - tau) * y).collect();
        AlphaBeta {
            alpha: mix(&self.alpha, &other.alpha),
            beta: mix(&self.beta, &other.beta),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.alpha.len() != k || self.beta.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self.alpha.len().max(self.beta.len()),
                context: "alpha/beta length",
            });
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("alpha/beta entries".into()));
        }
        Ok(())
    }
}

/// `n x k` matrix whose column `j` is `alpha_j` on rows labelled `j` and `beta_j` elsewhere.
pub fn build_label_matrix(y_noisy: &[usize], k: usize, ab: &AlphaBeta) -> Result<DMatrix<f64>> {
    ab.check(k)?;
    if let Some(&bad) = y_noisy.iter().find(|&&y| y >= k) {
        return Err(Error::param(format!("label {bad} out of range for k = {k}")));
    }
    Ok(DMatrix::from_fn(y_noisy.len(), k, |i, j| {
        if y_noisy[i] == j {
            ab.alpha[j]
        } else {
            ab.beta[j]
        }
    }))
}

/// `W = (X X^T / n + gamma I)^{-1} X Y / n`, one factorization for all columns.
pub fn train_multi_lpc(x: &DMatrix<f64>, y_ab: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    RidgeSystem::new(x, gamma)?.solve_matrix(y_ab)
}

/// Argmax of `W^T x` per column, ties to the smallest class index.
pub fn multi_predict(w: &DMatrix<f64>, x_test: &DMatrix<f64>) -> Result<Vec<usize>> {
    if w.nrows() != x_test.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            actual: x_test.nrows(),
            context: "test feature dimension p",
        });
    }
    let scores = w.tr_mul(x_test);
    Ok(scores.column_iter().map(|c| argmax(c.iter().copied())).collect())
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn multi_accuracy(w: &DMatrix<f64>, x_test: &DMatrix<f64>, y_test: &[usize]) -> Result<f64> {
    if y_test.is_empty() || y_test.len() != x_test.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_test.ncols(),
            actual: y_test.len(),
            context: "test label count",
        });
    }
    let pred = multi_predict(w, x_test)?;
    Ok(pred.iter().zip(y_test).filter(|(a, b)| a == b).count() as f64 / y_test.len() as f64)
}

/// Monte Carlo search over a box of `(alpha, beta)` candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub grid_size: usize,
    /// Candidates are uniform in `[-w, w]^{2k}`.
    pub box_half_width: f64,
    /// Seeds whose mean held-out accuracy ranks the candidates.
    pub search_seeds: Vec<u64>,
    /// Independent seeds for the reported path, free of selection bias.
    pub validation_seeds: Vec<u64>,
    pub gamma: f64,
    pub n_test: usize,
    pub tau_grid: Vec<f64>,
    pub candidate_seed: u64,
    /// Extra candidates evaluated alongside the random ones.
    pub inject: Vec<AlphaBeta>,
}

impl SearchConfig {
    pub fn new(search_seeds: Vec<u64>, validation_seeds: Vec<u64>) -> Self {
        SearchConfig {
            grid_size: 5000,
            box_half_width: 2.0,
            search_seeds,
            validation_seeds,
            gamma: 1.0,
            n_test: 5000,
            tau_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            candidate_seed: 0xAB,
            inject: Vec::new(),
        }
    }
}

/// Accuracy of one parameter point over a seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedAccuracy {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SeedAccuracy {
    fn from_values(per_seed: Vec<f64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        SeedAccuracy { per_seed, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauPoint {
    pub tau: f64,
    pub accuracy: SeedAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: AlphaBeta,
    pub worst: AlphaBeta,
    /// Mean accuracy over the search seeds.
    pub best_search_accuracy: f64,
    pub worst_search_accuracy: f64,
    pub candidates: usize,
    /// `tau * best + (1 - tau) * worst` on the validation seeds.
    pub tau_path: Vec<TauPoint>,
    /// One-hot labels on the validation seeds.
    pub naive: SeedAccuracy,
}

/// Test projections of one training draw. With `A = Q X Y1 / n` (one-hot
/// noisy labels) and `b = Q X 1 / n`, every candidate's weights are
/// `W = A diag(alpha - beta) + b beta^T`, so scores follow from `A^T x` and `b^T x`.
struct Projections {
    onehot: DMatrix<f64>,
    ones: DVector<f64>,
    y_test: Vec<usize>,
}

impl Projections {
    fn new(spec: &MultiGmmSpec, seed: u64, cfg: &SearchConfig) -> Result<Self> {
        let spec = MultiGmmSpec { seed, ..spec.clone() };
        let train = generate_multi_gmm(&spec)?;
        let (x_test, y_test) = generate_multi_test(&spec, cfg.n_test)?;
        let system = RidgeSystem::new(&train.x, cfg.gamma)?;
        let a = system.solve_matrix(&build_label_matrix(&train.y_noisy, spec.k, &AlphaBeta::naive(spec.k))?)?;
        let b = system.solve(&DVector::from_element(train.x.ncols(), 1.0))?;
        Ok(Projections {
            onehot: a.tr_mul(&x_test),
            ones: x_test.tr_mul(&b),
            y_test,
        })
    }

    fn accuracy(&self, ab: &AlphaBeta) -> f64 {
        let k = ab.k();
        let hits = (0..self.y_test.len())
            .filter(|&i| {
                let pred = argmax(
                    (0..k).map(|c| (ab.alpha[c] - ab.beta[c]) * self.onehot[(c, i)] + ab.beta[c] * self.ones[i]),
                );
                pred == self.y_test[i]
            })
            .count();
        hits as f64 / self.y_test.len() as f64
    }
}

fn evaluate(projections: &[Projections], ab: &AlphaBeta) -> SeedAccuracy {
    SeedAccuracy::from_values(projections.iter().map(|p| p.accuracy(ab)).collect())
}

fn sample_candidate(k: usize, half_width: f64, seed: u64, index: u64) -> AlphaBeta {
    let mut rng = substream(seed, Domain::Candidates, index);
    let mut draw = || rng.random_range(-half_width..=half_width);
    let alpha = (0..k).map(|_| draw()).collect();
    let beta = (0..k).map(|_| draw()).collect();
    AlphaBeta { alpha, beta }
}

pub fn search_alpha_beta(spec: &MultiGmmSpec, cfg: &SearchConfig) -> Result<SearchResult> {
    spec.validate()?;
    if cfg.grid_size == 0 && cfg.inject.is_empty() {
        return Err(Error::param("grid_size must be at least 1"));
    }
    if cfg.search_seeds.is_empty() || cfg.validation_seeds.is_empty() {
        return Err(Error::param("search and validation seed lists must be nonempty"));
    }
    if !(cfg.box_half_width > 0.0 && cfg.box_half_width.is_finite()) {
        return Err(Error::param("box_half_width must be > 0"));
    }
    for ab in &cfg.inject {
        ab.check(spec.k)?;
    }
    let build = |seeds: &[u64]| -> Result<Vec<Projections>> {
        seeds.par_iter().map(|&s| Projections::new(spec, s, cfg)).collect()
    };
    let search = build(&cfg.search_seeds)?;

    let candidates: Vec<AlphaBeta> = (0..cfg.grid_size as u64)
        .map(|j| sample_candidate(spec.k, cfg.box_half_width, cfg.candidate_seed, j))
        .chain(cfg.inject.iter().cloned())
        .collect();
    let scores: Vec<f64> = candidates.par_iter().map(|ab| evaluate(&search, ab).mean).collect();
    // first index wins ties in both directions
    let mut best = 0;
    let mut worst = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
        if s < scores[worst] {
            worst = i;
        }
    }

    let validation = build(&cfg.validation_seeds)?;
    let tau_path = cfg
        .tau_grid
        .iter()
        .map(|&tau| TauPoint {
            tau,
            accuracy: evaluate(&validation, &candidates[best].lerp(&candidates[worst], tau)),
        })
        .collect();
    Ok(SearchResult {
        best: candidates[best].clone(),
        worst: candidates[worst].clone(),
        best_search_accuracy: scores[best],
        worst_search_accuracy: scores[worst],
        candidates: candidates.len(),
        tau_path,
        naive: evaluate(&validation, &AlphaBeta::naive(spec.k)),
    })
}
