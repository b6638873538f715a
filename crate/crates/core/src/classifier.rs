//! The labels-perturbed ridge classifier.
//!
//! Training solves `(X X^T / n + gamma I) w = X D_rho y / n` where the
//! reweighted target of sample `i` is `+lambda_plus` when its noisy label is
//! `+1` and `-lambda_minus` when it is `-1`. Setting `rho = 0` gives plain
//! ridge on the noisy labels, `rho = eps` gives the unbiased-loss classifier.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};

const SINGULARITY_GUARD: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
const LOO_DENOMINATOR_GUARD: f64 = 1e-10;

/// The noise-handling pair `(rho_plus, rho_minus)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoParams {
    rho_plus: f64,
    rho_minus: f64,
}

impl RhoParams {
    pub fn new(rho_plus: f64, rho_minus: f64) -> Result<Self> {
        if !rho_plus.is_finite() || !rho_minus.is_finite() {
            return Err(Error::param("rho entries must be finite"));
        }
        if (1.0 - rho_plus - rho_minus).abs() <= SINGULARITY_GUARD {
            return Err(Error::param(format!(
                "rho = ({rho_plus}, {rho_minus}) is singular: 1 - rho_plus - rho_minus is zero"
            )));
        }
        Ok(RhoParams { rho_plus, rho_minus })
    }

    /// `rho = (0, 0)`: plain ridge on noisy labels.
    pub fn naive() -> Self {
        RhoParams {
            rho_plus: 0.0,
            rho_minus: 0.0,
        }
    }

    /// `rho = (eps_plus, eps_minus)`.
    pub fn unbiased(eps_plus: f64, eps_minus: f64) -> Result<Self> {
        Self::new(eps_plus, eps_minus)
    }

    pub fn rho_plus(&self) -> f64 {
        self.rho_plus
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    pub fn beta(&self) -> f64 {
        1.0 / (1.0 - self.rho_plus - self.rho_minus)
    }

    pub fn lambda_plus(&self) -> f64 {
        (1.0 - self.rho_minus + self.rho_plus) * self.beta()
    }

    pub fn lambda_minus(&self) -> f64 {
        (1.0 - self.rho_plus + self.rho_minus) * self.beta()
    }

    /// `sign(beta)`. Past the line `rho_plus + rho_minus = 1` both targets
    /// change sign, so the score is read with this orientation: the predicted
    /// label is `sign(orientation * w^T x)`, which depends on `rho` only through
    /// `rho_plus - rho_minus`.
    pub fn orientation(&self) -> f64 {
        if self.beta() > 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Reweighted regression target for a noisy label.
    pub fn target(&self, label: i8) -> f64 {
        if label > 0 {
            self.lambda_plus()
        } else {
            -self.lambda_minus()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Squared,
    Bce,
}

impl LossKind {
    fn as_str(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Bce => "bce",
        }
    }
}

/// A trained linear classifier `x -> sign(w^T x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub w: DVector<f64>,
    pub gamma: f64,
    pub rho: RhoParams,
    pub loss: LossKind,
    pub n_train: usize,
}

impl Classifier {
    pub fn p(&self) -> usize {
        self.w.len()
    }

    /// Scores `w^T x_j` for every column (pre-sigmoid logits for BCE models).
    pub fn decision(&self, x_test: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x_test.nrows() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                actual: x_test.nrows(),
                context: "test feature dimension p",
            });
        }
        Ok(x_test.tr_mul(&self.w))
    }

    /// Predicted labels, `sign(orientation * w^T x)` with `sign(0) = +1`.
    pub fn predict(&self, x_test: &DMatrix<f64>) -> Result<Vec<i8>> {
        let o = self.rho.orientation();
        Ok(self
            .decision(x_test)?
            .iter()
            .map(|&s| if o * s >= 0.0 { 1 } else { -1 })
            .collect())
    }

    pub fn evaluate(&self, x_test: &DMatrix<f64>, y_test: &[i8]) -> Result<Evaluation> {
        let scores = self.decision(x_test)?;
        evaluate_scores(&scores, y_test, self.rho.orientation())
    }

    /// Text form: a version line, the loss kind, then `gamma`, `rho_plus`,
    /// `rho_minus` and the `p` weights, one number per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SERIAL_TAG}");
        let _ = writeln!(out, "loss {}", self.loss.as_str());
        let _ = writeln!(out, "n_train {}", self.n_train);
        for v in [self.gamma, self.rho.rho_plus, self.rho.rho_minus]
            .into_iter()
            .chain(self.w.iter().copied())
        {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::param(format!("classifier text: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(SERIAL_TAG) {
            return Err(bad("missing or unsupported version tag"));
        }
        let loss = match lines.next().and_then(|l| l.strip_prefix("loss ")) {
            Some("squared") => LossKind::Squared,
            Some("bce") => LossKind::Bce,
            _ => return Err(bad("missing loss line")),
        };
        let n_train = lines
            .next()
            .and_then(|l| l.strip_prefix("n_train "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing n_train line"))?;
        let numbers = lines
            .map(|l| l.parse::<f64>().map_err(|_| bad(&format!("'{l}' is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if numbers.len() < 4 {
            return Err(bad("expected gamma, rho_plus, rho_minus and at least one weight"));
        }
        Ok(Classifier {
            gamma: numbers[0],
            rho: RhoParams::new(numbers[1], numbers[2])?,
            w: DVector::from_column_slice(&numbers[3..]),
            loss,
            n_train,
        })
    }
}

const SERIAL_TAG: &str = "lpc-classifier v1";

/// Test accuracy and squared-error risk against clean labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub risk: f64,
}

/// Accuracy of `sign(orientation * score)` with `sign(0) = +1`; risk is the
/// mean of `(score - y)^2` on the raw scores.
pub fn evaluate_scores(scores: &DVector<f64>, y: &[i8], orientation: f64) -> Result<Evaluation> {
    if y.is_empty() {
        return Err(Error::param("empty test set"));
    }
    if scores.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: scores.len(),
            context: "score count vs test labels",
        });
    }
    let mut hits = 0usize;
    let mut sq = 0.0;
    for (&s, &label) in scores.iter().zip(y) {
        let predicted = if orientation * s >= 0.0 { 1 } else { -1 };
        if predicted == label {
            hits += 1;
        }
        sq += (s - f64::from(label)).powi(2);
    }
    let n = y.len() as f64;
    Ok(Evaluation {
        accuracy: hits as f64 / n,
        risk: sq / n,
    })
}

/// Factored ridge system `A = X X^T / n + gamma I` over one feature matrix.
/// One factorization serves every label vector and the leave-one-out values.
pub struct RidgeSystem<'a> {
    x: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    gamma: f64,
}

impl<'a> RidgeSystem<'a> {
    pub fn new(x: &'a DMatrix<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("gamma = {gamma} must be > 0")));
        }
        if x.ncols() == 0 {
            return Err(Error::param("empty training set"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training features".into()));
        }
        let n = x.ncols() as f64;
        let mut gram = x * x.transpose();
        gram /= n;
        for i in 0..gram.nrows() {
            gram[(i, i)] += gamma;
        }
        let chol = Cholesky::new(gram.clone()).ok_or(Error::NotPositiveDefinite("X X^T / n + gamma I"))?;
        Ok(RidgeSystem { x, gram, chol, gamma })
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Solves for `w` given per-sample regression targets.
    pub fn solve(&self, targets: &DVector<f64>) -> Result<DVector<f64>> {
        if targets.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: targets.len(),
                context: "target count",
            });
        }
        let rhs = self.x * targets / self.n() as f64;
        let mut w = self.chol.solve(&rhs);
        // one step of iterative refinement if the residual is off
        let mut residual = &self.gram * &w - &rhs;
        if residual.norm() > RESIDUAL_TOL * w.norm().max(f64::MIN_POSITIVE) {
            w -= self.chol.solve(&residual);
            residual = &self.gram * &w - &rhs;
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ridge solution".into()));
        }
        let tol = RESIDUAL_TOL * w.norm().max(rhs.norm() * 1e-8);
        if residual.norm() > tol && residual.norm() > 1e-14 {
            return Err(Error::NonFinite(format!(
                "normal-equation residual {:e} exceeds {tol:e}",
                residual.norm()
            )));
        }
        Ok(w)
    }

    /// Solves for one weight column per target column (`n x k` targets).
    pub fn solve_matrix(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if targets.nrows() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: targets.nrows(),
                context: "target rows",
            });
        }
        let mut w = DMatrix::zeros(self.p(), targets.ncols());
        for (j, col) in targets.column_iter().enumerate() {
            w.set_column(j, &self.solve(&col.into_owned())?);
        }
        Ok(w)
    }

    /// Leverages `x_i^T A^{-1} x_i / n` for every column.
    pub fn leverages(&self) -> DVector<f64> {
        let mut half = self.x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut half);
        let n = self.n() as f64;
        DVector::from_iterator(self.n(), half.column_iter().map(|c| c.norm_squared() / n))
    }

    /// Leave-one-out scores `x_i^T w^{-i}`, where `w^{-i}` solves the system
    /// with sample `i` removed while keeping the `1/n` normalization. From the
    /// rank-one downdate, `x_i^T w^{-i} = (f_i - t_i d_i) / (1 - d_i)` with
    /// `f_i = x_i^T w` and leverage `d_i`.
    pub fn loo_decisions(&self, targets: &DVector<f64>) -> Result<LooDecisions> {
        let w = self.solve(targets)?;
        let full = self.x.tr_mul(&w);
        let lev = self.leverages();
        let mut values = DVector::zeros(self.n());
        let mut fallbacks = Vec::new();
        for i in 0..self.n() {
            let denom = 1.0 - lev[i];
            if denom.abs() < LOO_DENOMINATOR_GUARD {
                log::warn!("loo: downdate denominator {denom:e} at index {i}, retraining");
                values[i] = self.retrain_without(i, targets)?;
                fallbacks.push(i);
            } else {
                values[i] = (full[i] - targets[i] * lev[i]) / denom;
            }
        }
        Ok(LooDecisions { values, fallbacks })
    }

    fn retrain_without(&self, i: usize, targets: &DVector<f64>) -> Result<f64> {
        let n = self.n() as f64;
        let xi = self.x.column(i);
        let mut a = self.gram.clone();
        a.ger(-1.0 / n, &xi, &xi, 1.0);
        let mut rhs = self.x * targets / n;
        rhs.axpy(-targets[i] / n, &xi, 1.0);
        let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite("leave-one-out system"))?;
        Ok(xi.dot(&chol.solve(&rhs)))
    }
}

/// Leave-one-out scores plus the indices that needed an explicit retrain.
#[derive(Debug, Clone, PartialEq)]
pub struct LooDecisions {
    pub values: DVector<f64>,
    pub fallbacks: Vec<usize>,
}

/// Reweighted targets `D_rho y` for the given labels.
pub fn lpc_targets(labels: &[i8], rho: &RhoParams) -> DVector<f64> {
    DVector::from_iterator(labels.len(), labels.iter().map(|&y| rho.target(y)))
}

/// Trains on the noisy labels.
pub fn train_lpc(ds: &LabeledDataset, rho: RhoParams, gamma: f64) -> Result<Classifier> {
    let system = RidgeSystem::new(&ds.x, gamma)?;
    train_with_system(&system, &ds.y_noisy, rho)
}

/// Trains on the clean labels with `rho = 0`.
pub fn train_oracle(ds: &LabeledDataset, gamma: f64) -> Result<Classifier> {
    let clean = ds.y_clean.as_deref().ok_or(Error::MissingGroundTruth)?;
    let system = RidgeSystem::new(&ds.x, gamma)?;
    train_with_system(&system, clean, RhoParams::naive())
}

pub fn train_with_system(system: &RidgeSystem<'_>, labels: &[i8], rho: RhoParams) -> Result<Classifier> {
    let w = system.solve(&lpc_targets(labels, &rho))?;
    Ok(Classifier {
        w,
        gamma: system.gamma(),
        rho,
        loss: LossKind::Squared,
        n_train: system.n(),
    })
}

/// Leave-one-out scores of the classifier trained on noisy labels.
pub fn loo_decisions(ds: &LabeledDataset, rho: RhoParams, gamma: f64) -> Result<LooDecisions> {
    if ds.n() < 2 {
        return Err(Error::param("leave-one-out needs n >= 2"));
    }
    let system = RidgeSystem::new(&ds.x, gamma)?;
    system.loo_decisions(&lpc_targets(&ds.y_noisy, &rho))
}

/// Full-batch gradient descent settings for the cross-entropy variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BceConfig {
    pub learning_rate: f64,
    pub iters: usize,
    pub gamma: f64,
}

impl Default for BceConfig {
    fn default() -> Self {
        BceConfig {
            learning_rate: 0.1,
            iters: 2000,
            gamma: 1.0,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Perturbed cross-entropy objective `(1/n) sum l~(s(x_i), y_i, rho) + gamma ||w||^2`
/// with labels mapped to `{0, 1}` (`+1 -> 1`) and the flipped label read as `1 - y`.
pub fn bce_objective(x: &DMatrix<f64>, labels: &[i8], rho: &RhoParams, gamma: f64, w: &DVector<f64>) -> f64 {
    let z = x.tr_mul(w);
    let (rp, rm, beta) = (rho.rho_plus(), rho.rho_minus(), rho.beta());
    let total: f64 = z
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // l(s, 1) = softplus(-z), l(s, 0) = softplus(z)
            let (own, other, keep, flip) = if y > 0 {
                (softplus(-z), softplus(z), 1.0 - rm, rp)
            } else {
                (softplus(z), softplus(-z), 1.0 - rp, rm)
            };
            beta * (keep * own - flip * other)
        })
        .sum();
    total / x.ncols() as f64 + gamma * w.norm_squared()
}

/// Gradient of [`bce_objective`].
pub fn bce_gradient(x: &DMatrix<f64>, labels: &[i8], rho: &RhoParams, gamma: f64, w: &DVector<f64>) -> DVector<f64> {
    let z = x.tr_mul(w);
    let coeffs = bce_score_derivatives(&z, labels, rho);
    let mut g = x * coeffs / x.ncols() as f64;
    g.axpy(2.0 * gamma, w, 1.0);
    g
}

fn bce_score_derivatives(z: &DVector<f64>, labels: &[i8], rho: &RhoParams) -> DVector<f64> {
    let (rp, rm, beta) = (rho.rho_plus(), rho.rho_minus(), rho.beta());
    DVector::from_iterator(
        z.len(),
        z.iter().zip(labels).map(|(&z, &y)| {
            let s = sigmoid(z);
            // d l(s,1)/dz = s - 1, d l(s,0)/dz = s
            if y > 0 {
                beta * ((1.0 - rm) * (s - 1.0) - rp * s)
            } else {
                beta * ((1.0 - rp) * s - rm * (s - 1.0))
            }
        }),
    )
}

/// Gradient descent from `w = 0` for exactly `cfg.iters` steps.
pub fn train_lpc_bce(ds: &LabeledDataset, rho: RhoParams, cfg: &BceConfig) -> Result<Classifier> {
    if !(cfg.gamma >= 0.0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::param("BCE training needs gamma >= 0 and learning_rate > 0"));
    }
    if ds.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    let x = &ds.x;
    let n = ds.n() as f64;
    let mut w = DVector::zeros(ds.p());
    for step in 0..cfg.iters {
        let z = x.tr_mul(&w);
        let coeffs = bce_score_derivatives(&z, &ds.y_noisy, &rho);
        let mut grad = x * coeffs / n;
        grad.axpy(2.0 * cfg.gamma, &w, 1.0);
        let next = &w - grad * cfg.learning_rate;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step, last_finite: w });
        }
        w = next;
    }
    let objective = bce_objective(x, &ds.y_noisy, &rho, cfg.gamma, &w);
    if !objective.is_finite() {
        return Err(Error::Diverged {
            step: cfg.iters,
            last_finite: w,
        });
    }
    Ok(Classifier {
        w,
        gamma: cfg.gamma,
        rho,
        loss: LossKind::Bce,
        n_train: ds.n(),
    })
}
