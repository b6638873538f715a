//! Large-dimensional limits of the classifier's test statistics.
//!
//! On a test point of class `a` the score `w^T x` is asymptotically Gaussian
//! with mean `(-1)^a m` and variance `nu - m^2`. The isotropic case has closed
//! forms in `delta`, `h` and the SNR; the general-covariance case solves a
//! two-class fixed point and a 2x2 linear system of traces.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::classifier::RhoParams;
use crate::datasets::{check_symmetric, validate_noise};
use crate::error::{Error, Result};

/// Smallest `h` accepted before the limits are considered meaningless.
pub const MIN_H: f64 = 1e-6;

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITERS: usize = 10_000;
const FIXED_POINT_DAMPING: f64 = 0.5;

/// Nonnegative root of `gamma d^2 + (1 + gamma - eta) d - eta = 0`.
pub fn delta(eta: f64, gamma: f64) -> f64 {
    let b = eta - gamma - 1.0;
    let disc = (b * b + 4.0 * eta * gamma).sqrt();
    if b >= 0.0 {
        (b + disc) / (2.0 * gamma)
    } else {
        // same root without the cancellation in b + disc
        2.0 * eta / (disc - b)
    }
}

/// `h = 1 - eta / (1 + gamma (1 + delta))^2`.
pub fn h_factor(eta: f64, gamma: f64, delta: f64) -> f64 {
    1.0 - eta / (1.0 + gamma * (1.0 + delta)).powi(2)
}

/// Standard Gaussian upper tail `P(Z > x)`.
pub fn gaussian_upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Isotropic problem description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConfig {
    pub eta: f64,
    pub pi1: f64,
    pub snr: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub rho: RhoParams,
    pub gamma: f64,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param(format!("eta = {} must be > 0", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return Err(Error::param(format!("pi1 = {} must lie in (0, 1)", self.pi1)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::param(format!("snr = {} must be > 0", self.snr)));
        }
        validate_noise(self.eps_plus, self.eps_minus)
    }

    pub fn with_rho(self, rho: RhoParams) -> Self {
        TheoryConfig { rho, ..self }
    }
}

/// Limiting statistics of the score together with the implied accuracy and risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryStats {
    pub delta: f64,
    pub h: f64,
    pub m_rho: f64,
    pub nu_rho: f64,
    pub variance: f64,
    pub kappa: f64,
    pub m_oracle: f64,
    pub nu_oracle: f64,
    /// `sign(beta)`, the orientation under which scores are read as labels.
    pub orientation: f64,
    pub accuracy: f64,
    pub risk: f64,
}

/// Signal and noise coefficients of the reweighted labels.
struct LabelMoments {
    /// `lambda_- - 2 beta eps_-` (cluster 1) and `lambda_+ - 2 beta eps_+` (cluster 2).
    signal: [f64; 2],
    /// `4 beta^2 eps_- (rho_+ - rho_-) + lambda_-^2` and its cluster-2 counterpart.
    second: [f64; 2],
}

fn label_moments(rho: &RhoParams, eps_plus: f64, eps_minus: f64) -> LabelMoments {
    let (lp, lm, b) = (rho.lambda_plus(), rho.lambda_minus(), rho.beta());
    let diff = rho.rho_plus() - rho.rho_minus();
    LabelMoments {
        signal: [lm - 2.0 * b * eps_minus, lp - 2.0 * b * eps_plus],
        second: [
            4.0 * b * b * eps_minus * diff + lm * lm,
            -4.0 * b * b * eps_plus * diff + lp * lp,
        ],
    }
}

pub fn theory_stats_isotropic(cfg: &TheoryConfig) -> Result<TheoryStats> {
    cfg.validate()?;
    let raw = isotropic_raw(cfg)?;
    finish(
        cfg.rho.orientation(),
        raw.delta,
        raw.h,
        raw.m_rho,
        raw.nu_rho,
        raw.kappa,
        raw.m_oracle,
        raw.kappa + (1.0 - raw.h) / raw.h,
    )
}

pub(crate) struct RawMoments {
    pub delta: f64,
    pub h: f64,
    pub m_rho: f64,
    pub nu_rho: f64,
    pub kappa: f64,
    pub m_oracle: f64,
}

/// The closed forms without range checks on the noise rates or the sign of
/// the variance. They are polynomial in the rates, so finite differences and
/// root finding may step outside the admissible region.
pub(crate) fn isotropic_raw(cfg: &TheoryConfig) -> Result<RawMoments> {
    let d = delta(cfg.eta, cfg.gamma);
    let h = h_factor(cfg.eta, cfg.gamma, d);
    if h <= MIN_H {
        return Err(Error::OutsideValidity {
            h,
            eta: cfg.eta,
            gamma: cfg.gamma,
        });
    }
    let (pi1, pi2) = (cfg.pi1, 1.0 - cfg.pi1);
    let mu2 = cfg.snr * cfg.snr;
    let denom = mu2 + 1.0 + cfg.gamma * (1.0 + d);
    let m_oracle = mu2 / denom;
    let kappa = ((mu2 + 1.0) / denom - 2.0 * (1.0 - h)) * mu2 / (h * denom);
    let lm = label_moments(&cfg.rho, cfg.eps_plus, cfg.eps_minus);
    let coef = pi1 * lm.signal[0] + pi2 * lm.signal[1];
    Ok(RawMoments {
        delta: d,
        h,
        m_rho: coef * m_oracle,
        nu_rho: coef * coef * kappa + (1.0 - h) / h * (pi1 * lm.second[0] + pi2 * lm.second[1]),
        kappa,
        m_oracle,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    orientation: f64,
    delta: f64,
    h: f64,
    m_rho: f64,
    nu_rho: f64,
    kappa: f64,
    m_oracle: f64,
    nu_oracle: f64,
) -> Result<TheoryStats> {
    let variance = nu_rho - m_rho * m_rho;
    if !variance.is_finite() || !m_rho.is_finite() {
        return Err(Error::NonFinite("limiting score statistics".into()));
    }
    if variance <= 0.0 {
        return Err(Error::NonFinite(format!(
            "limiting variance {variance:e} is not positive"
        )));
    }
    let mut stats = TheoryStats {
        delta,
        h,
        m_rho,
        nu_rho,
        variance,
        kappa,
        m_oracle,
        nu_oracle,
        orientation,
        accuracy: 0.0,
        risk: 0.0,
    };
    let (accuracy, risk) = predict_accuracy_risk(&stats);
    stats.accuracy = accuracy;
    stats.risk = risk;
    Ok(stats)
}

/// `(1 - phi(o m / sqrt(nu - m^2)), 1 - 2 m + nu)` with `o` the orientation.
pub fn predict_accuracy_risk(stats: &TheoryStats) -> (f64, f64) {
    let accuracy = 1.0 - gaussian_upper_tail(stats.orientation * stats.m_rho / stats.variance.sqrt());
    let risk = 1.0 - 2.0 * stats.m_rho + stats.nu_rho;
    (accuracy, risk)
}

fn check_rates(pi1: f64, eps_plus: f64, eps_minus: f64) -> Result<()> {
    if !(pi1 > 0.0 && pi1 < 1.0) {
        return Err(Error::param(format!("pi1 = {pi1} must lie in (0, 1)")));
    }
    validate_noise(eps_plus, eps_minus)
}

/// `rho_plus` maximizing the limiting accuracy for a fixed `rho_minus`. It
/// depends on the class balance and noise rates only.
pub fn optimal_rho_plus(pi1: f64, eps_plus: f64, eps_minus: f64, rho_minus: f64) -> Result<f64> {
    check_rates(pi1, eps_plus, eps_minus)?;
    let pi2 = 1.0 - pi1;
    let num = pi1 * pi1 * eps_minus * (eps_minus - 1.0) + pi2 * pi2 * eps_plus * (1.0 - eps_plus);
    Ok(num / (pi1 * pi2 * (1.0 - eps_plus - eps_minus)) + rho_minus)
}

/// `rho_plus` at which the limiting mean vanishes (random-guess accuracy).
pub fn worst_rho_plus(pi1: f64, eps_plus: f64, eps_minus: f64, rho_minus: f64) -> Result<f64> {
    check_rates(pi1, eps_plus, eps_minus)?;
    if (2.0 * pi1 - 1.0).abs() < 1e-12 {
        return Err(Error::param(
            "worst rho_plus is undefined for balanced classes: the mean never vanishes as rho_plus varies",
        ));
    }
    let pi2 = 1.0 - pi1;
    Ok((1.0 - 2.0 * pi1 * eps_minus - 2.0 * pi2 * eps_plus) / (2.0 * pi1 - 1.0) + rho_minus)
}

/// Limiting accuracy of the classifier trained on clean labels.
pub fn oracle_accuracy(eta: f64, pi1: f64, snr: f64, gamma: f64) -> Result<f64> {
    let cfg = TheoryConfig {
        eta,
        pi1,
        snr,
        eps_plus: 0.0,
        eps_minus: 0.0,
        rho: RhoParams::naive(),
        gamma,
    };
    Ok(theory_stats_isotropic(&cfg)?.accuracy)
}

/// Golden-section maximization of [`oracle_accuracy`] over `log gamma` in
/// `[ln 1e-3, ln 1e3]`.
pub fn optimal_gamma(eta: f64, pi1: f64, snr: f64) -> Result<f64> {
    let objective = |log_g: f64| oracle_accuracy(eta, pi1, snr, log_g.exp()).unwrap_or(f64::NEG_INFINITY);
    // validate once so bad inputs are reported rather than maximized over
    oracle_accuracy(eta, pi1, snr, 1.0)?;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-3f64.ln(), 1e3f64.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > 1e-6 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    Ok(((a + b) / 2.0).exp())
}

/// General-covariance problem: cluster `b` has mean `-mu` (b = 1) or `+mu`
/// (b = 2) and covariance `C_b`; `n` training samples with `p = mu.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralTheoryConfig {
    pub n: usize,
    pub pi1: f64,
    pub mu: DVector<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub rho: RhoParams,
    pub gamma: f64,
    /// Class of the test point, 1 or 2.
    pub test_class: usize,
}

/// General-covariance statistics with the per-class fixed-point values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralTheoryStats {
    /// `delta` holds `pi1 delta_1 + pi2 delta_2` and `h` the determinant of
    /// the trace system; both reduce to their isotropic meaning when `C_b = I`.
    pub stats: TheoryStats,
    pub delta1: f64,
    pub delta2: f64,
    pub iterations: usize,
}

impl GeneralTheoryConfig {
    fn validate(&self) -> Result<()> {
        let p = self.mu.len();
        if p == 0 || self.n == 0 {
            return Err(Error::param("p and n must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma = {} must be > 0", self.gamma)));
        }
        check_rates(self.pi1, self.eps_plus, self.eps_minus)?;
        if !(self.test_class == 1 || self.test_class == 2) {
            return Err(Error::param(format!("test_class = {} must be 1 or 2", self.test_class)));
        }
        for (name, c) in [("C1", &self.c1), ("C2", &self.c2)] {
            check_symmetric(name, c, p)?;
            let min = SymmetricEigen::new(c.clone()).eigenvalues.min();
            if min < -1e-10 * c.amax().max(1.0) {
                return Err(Error::NotPsd {
                    name,
                    min_eigenvalue: min,
                });
            }
        }
        Ok(())
    }
}

fn is_diagonal(c: &DMatrix<f64>) -> bool {
    c.iter()
        .enumerate()
        .all(|(k, &v)| v == 0.0 || k % c.nrows() == k / c.nrows())
}

/// `(pi1 C1 w1 + pi2 C2 w2 + gamma I)^{-1}` for covariance-only traces.
enum Resolvent {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

struct Traces {
    /// `(1/n) Tr(C_b Q)`.
    delta: [f64; 2],
    /// `(1/n) Tr(C_b Q C_c Q)`.
    t: [[f64; 2]; 2],
}

fn resolvent(cfg: &GeneralTheoryConfig, diag: bool, d: [f64; 2]) -> Result<Resolvent> {
    let (w1, w2) = (cfg.pi1 / (1.0 + d[0]), (1.0 - cfg.pi1) / (1.0 + d[1]));
    if diag {
        let q = DVector::from_fn(cfg.mu.len(), |i, _| {
            1.0 / (w1 * cfg.c1[(i, i)] + w2 * cfg.c2[(i, i)] + cfg.gamma)
        });
        return Ok(Resolvent::Diagonal(q));
    }
    let mut a = &cfg.c1 * w1 + &cfg.c2 * w2;
    for i in 0..a.nrows() {
        a[(i, i)] += cfg.gamma;
    }
    let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite("deterministic resolvent"))?;
    Ok(Resolvent::Dense(chol.inverse()))
}

fn traces(cfg: &GeneralTheoryConfig, q: &Resolvent, with_products: bool) -> Traces {
    let n = cfg.n as f64;
    let mut out = Traces {
        delta: [0.0; 2],
        t: [[0.0; 2]; 2],
    };
    match q {
        Resolvent::Diagonal(q) => {
            for (b, c) in [&cfg.c1, &cfg.c2].into_iter().enumerate() {
                out.delta[b] = (0..q.len()).map(|i| c[(i, i)] * q[i]).sum::<f64>() / n;
            }
            if with_products {
                for b in 0..2 {
                    for c in 0..2 {
                        let cb = if b == 0 { &cfg.c1 } else { &cfg.c2 };
                        let cc = if c == 0 { &cfg.c1 } else { &cfg.c2 };
                        out.t[b][c] = (0..q.len()).map(|i| cb[(i, i)] * cc[(i, i)] * q[i] * q[i]).sum::<f64>() / n;
                    }
                }
            }
        }
        Resolvent::Dense(q) => {
            let cq = [&cfg.c1 * q, &cfg.c2 * q];
            for b in 0..2 {
                out.delta[b] = cq[b].trace() / n;
            }
            if with_products {
                for b in 0..2 {
                    for c in 0..2 {
                        // Tr(A B) = sum_ij A_ij B_ji
                        out.t[b][c] = cq[b].component_mul(&cq[c].transpose()).sum() / n;
                    }
                }
            }
        }
    }
    out
}

pub fn theory_stats_general(cfg: &GeneralTheoryConfig) -> Result<GeneralTheoryStats> {
    cfg.validate()?;
    let diag = is_diagonal(&cfg.c1) && is_diagonal(&cfg.c2);
    let (pi1, pi2) = (cfg.pi1, 1.0 - cfg.pi1);

    // damped fixed point delta_b = (1/n) Tr(C_b Q(delta))
    let mut d = [0.0f64; 2];
    let mut iterations = 0;
    loop {
        let q = resolvent(cfg, diag, d)?;
        let next = traces(cfg, &q, false).delta;
        let change = (next[0] - d[0]).abs().max((next[1] - d[1]).abs());
        iterations += 1;
        if change < FIXED_POINT_TOL {
            d = next;
            break;
        }
        if iterations >= FIXED_POINT_MAX_ITERS || !change.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual: change,
            });
        }
        for b in 0..2 {
            d[b] = FIXED_POINT_DAMPING * d[b] + (1.0 - FIXED_POINT_DAMPING) * next[b];
        }
    }
    let q = resolvent(cfg, diag, d)?;
    let tr = traces(cfg, &q, true);
    let (s1, s2) = (1.0 + d[0], 1.0 + d[1]);

    // E[Q C_a Q] = sum_c M[a][c] Q C_c Q with M = (I - K)^{-1}
    let k = Matrix2::new(
        pi1 * tr.t[0][0] / (s1 * s1),
        pi2 * tr.t[1][0] / (s2 * s2),
        pi1 * tr.t[0][1] / (s1 * s1),
        pi2 * tr.t[1][1] / (s2 * s2),
    );
    let i_minus_k = Matrix2::identity() - k;
    let h = i_minus_k.determinant();
    let eta = cfg.mu.len() as f64 / cfg.n as f64;
    if h <= MIN_H {
        return Err(Error::OutsideValidity {
            h,
            eta,
            gamma: cfg.gamma,
        });
    }
    let m = i_minus_k
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite("trace system"))?;
    let a = cfg.test_class - 1;
    let trace_t = [
        m[(a, 0)] * tr.t[0][0] + m[(a, 1)] * tr.t[0][1],
        m[(a, 0)] * tr.t[1][0] + m[(a, 1)] * tr.t[1][1],
    ];

    // quadratic forms in mu use the full second moments mu mu^T + C_b
    let mut full = (&cfg.mu * cfg.mu.transpose()) * (pi1 / s1 + pi2 / s2);
    full += &cfg.c1 * (pi1 / s1) + &cfg.c2 * (pi2 / s2);
    for i in 0..full.nrows() {
        full[(i, i)] += cfg.gamma;
    }
    let chol = Cholesky::new(full).ok_or(Error::NotPositiveDefinite("deterministic resolvent"))?;
    let v = chol.solve(&cfg.mu);
    let u = cfg.mu.dot(&v);
    let quad = [u * u + v.dot(&(&cfg.c1 * &v)), u * u + v.dot(&(&cfg.c2 * &v))];
    let mu_e_mu = m[(a, 0)] * quad[0] + m[(a, 1)] * quad[1];

    let assemble = |signal: [f64; 2], second: [f64; 2]| {
        let c1 = pi1 * signal[0] / s1;
        let c2 = pi2 * signal[1] / s2;
        let mean = (c1 + c2) * u;
        let nu = (c1 + c2).powi(2) * mu_e_mu
            - 2.0 * trace_t[0] / s1 * (c1 * c1 + c1 * c2) * u
            - 2.0 * trace_t[1] / s2 * (c2 * c2 + c1 * c2) * u
            + pi1 * second[0] * trace_t[0] / (s1 * s1)
            + pi2 * second[1] * trace_t[1] / (s2 * s2);
        (mean, nu)
    };
    let lm = label_moments(&cfg.rho, cfg.eps_plus, cfg.eps_minus);
    let (m_rho, nu_rho) = assemble(lm.signal, lm.second);
    let (m_oracle, nu_oracle) = assemble([1.0, 1.0], [1.0, 1.0]);
    let kappa = assemble([1.0, 1.0], [0.0, 0.0]).1;
    let stats = finish(
        cfg.rho.orientation(),
        pi1 * d[0] + pi2 * d[1],
        h,
        m_rho,
        nu_rho,
        kappa,
        m_oracle,
        nu_oracle,
    )?;
    Ok(GeneralTheoryStats {
        stats,
        delta1: d[0],
        delta2: d[1],
        iterations,
    })
}
