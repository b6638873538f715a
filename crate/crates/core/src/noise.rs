//! Estimation of the flip rates by matching leave-one-out second moments.
//!
//! For two probe couples `rho_1`, `rho_2` the empirical second moments of the
//! leave-one-out scores are matched to the limiting `nu_rho(eps_plus, eps_minus)`.
//! `nu_rho` depends on the rates through `L1 = pi1 eps_- + pi2 eps_+`
//! (squared, via the mean) and `L2 = pi1 eps_- - pi2 eps_+` (linearly).
//! Eliminating `L2` leaves a quadratic in `L1` with roots `L1` and `1 - L1`
//! (each with its own `L2`), so two rate pairs share the same moments. The
//! solver searches `L1 <= 1/2` only, where labels still carry signal and the
//! naive classifier beats a coin flip.

use nalgebra::{Matrix2, Vector2};

use crate::classifier::{loo_decisions, RhoParams};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::theory::{isotropic_raw, theory_stats_isotropic, TheoryConfig};

/// Largest `eps_plus + eps_minus` explored by the solver.
pub const SIMPLEX_LIMIT: f64 = 0.99;

/// Mean of the squared leave-one-out scores.
pub fn empirical_second_moment(ds: &LabeledDataset, rho: RhoParams, gamma: f64) -> Result<f64> {
    let loo = loo_decisions(ds, rho, gamma)?;
    let value = loo.values.norm_squared() / ds.n() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("leave-one-out second moment".into()));
    }
    Ok(value)
}

/// Known quantities of the forward map `eps -> nu_rho(eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentModel {
    pub eta: f64,
    pub gamma: f64,
    pub snr: f64,
    pub pi1: f64,
}

impl MomentModel {
    pub fn nu(&self, rho: RhoParams, eps_plus: f64, eps_minus: f64) -> Result<f64> {
        let cfg = TheoryConfig {
            eta: self.eta,
            pi1: self.pi1,
            snr: self.snr,
            eps_plus,
            eps_minus,
            rho,
            gamma: self.gamma,
        };
        Ok(theory_stats_isotropic(&cfg)?.nu_rho)
    }

    fn nu_smooth(&self, rho: RhoParams, eps_plus: f64, eps_minus: f64) -> Result<f64> {
        let cfg = TheoryConfig {
            eta: self.eta,
            pi1: self.pi1,
            snr: self.snr,
            eps_plus,
            eps_minus,
            rho,
            gamma: self.gamma,
        };
        Ok(isotropic_raw(&cfg)?.nu_rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Grid points per axis of the coarse scan.
    pub grid: usize,
    pub fd_step: f64,
    pub max_newton: usize,
    /// Warning threshold as a fraction of `nu_hat_1 + nu_hat_2`.
    pub residual_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grid: 100,
            fd_step: 1e-6,
            max_newton: 100,
            residual_factor: 0.05,
        }
    }
}

/// Estimated rates with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub eps_plus_hat: f64,
    pub eps_minus_hat: f64,
    /// Euclidean norm of `nu(eps_hat) - nu_hat` over the two probes.
    pub residual: f64,
    pub probes: [RhoParams; 2],
    pub nu_hat: [f64; 2],
    pub newton_iterations: usize,
    /// Residual above the configured threshold.
    pub warning: bool,
    /// The minimizer touches the boundary of the feasible region.
    pub on_boundary: bool,
}

/// Estimates `(eps_plus, eps_minus)` from a noisy dataset; `eta = p / n`.
pub fn estimate_noise_rates(
    ds: &LabeledDataset,
    probe1: RhoParams,
    probe2: RhoParams,
    gamma: f64,
    snr: f64,
    pi1: f64,
) -> Result<NoiseEstimate> {
    estimate_noise_rates_with(ds, [probe1, probe2], gamma, snr, pi1, &SolverOptions::default())
}

pub fn estimate_noise_rates_with(
    ds: &LabeledDataset,
    probes: [RhoParams; 2],
    gamma: f64,
    snr: f64,
    pi1: f64,
    opts: &SolverOptions,
) -> Result<NoiseEstimate> {
    check_probes(&probes)?;
    let nu_hat = [
        empirical_second_moment(ds, probes[0], gamma)?,
        empirical_second_moment(ds, probes[1], gamma)?,
    ];
    let model = MomentModel {
        eta: ds.p() as f64 / ds.n() as f64,
        gamma,
        snr,
        pi1,
    };
    invert_moments(nu_hat, probes, &model, opts)
}

fn check_probes(probes: &[RhoParams; 2]) -> Result<()> {
    let diff = |r: &RhoParams| r.rho_plus() - r.rho_minus();
    if (diff(&probes[0]) - diff(&probes[1])).abs() < 1e-12 {
        // the moments then differ only by scale and cannot separate L1 from L2
        return Err(Error::param("probe couples must differ in rho_plus - rho_minus"));
    }
    Ok(())
}

fn feasible(ep: f64, em: f64, pi1: f64) -> bool {
    ep >= 0.0 && em >= 0.0 && ep + em <= SIMPLEX_LIMIT && pi1 * em + (1.0 - pi1) * ep <= 0.5
}

/// Pulls a point back into the feasible region along the segment towards `anchor`.
fn clamp_towards(point: Vector2<f64>, anchor: Vector2<f64>, pi1: f64) -> Vector2<f64> {
    if feasible(point[0], point[1], pi1) {
        return point;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let q = anchor + (point - anchor) * mid;
        if feasible(q[0], q[1], pi1) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    anchor + (point - anchor) * lo
}

/// Solves `nu_rho_j(eps) = nu_hat_j` for `j = 1, 2` by a grid scan over the
/// feasible region followed by Newton steps with a central-difference Jacobian.
pub fn invert_moments(
    nu_hat: [f64; 2],
    probes: [RhoParams; 2],
    model: &MomentModel,
    opts: &SolverOptions,
) -> Result<NoiseEstimate> {
    check_probes(&probes)?;
    if nu_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("second-moment estimates".into()));
    }
    if opts.grid < 2 {
        return Err(Error::param("solver grid needs at least 2 points per axis"));
    }
    let pi1 = model.pi1;
    let residual = |e: Vector2<f64>| -> Result<Vector2<f64>> {
        Ok(Vector2::new(
            model.nu_smooth(probes[0], e[0], e[1])? - nu_hat[0],
            model.nu_smooth(probes[1], e[0], e[1])? - nu_hat[1],
        ))
    };

    let mut best = (f64::INFINITY, Vector2::zeros());
    let step = SIMPLEX_LIMIT / (opts.grid - 1) as f64;
    for i in 0..opts.grid {
        for j in 0..opts.grid {
            let e = Vector2::new(i as f64 * step, j as f64 * step);
            if !feasible(e[0], e[1], pi1) {
                continue;
            }
            let r = residual(e)?.norm();
            if r < best.0 {
                best = (r, e);
            }
        }
    }
    let (mut r_norm, mut e) = best;
    if !r_norm.is_finite() {
        return Err(Error::NonFinite("moment residual on the whole grid".into()));
    }

    let h = opts.fd_step;
    let mut iterations = 0;
    while iterations < opts.max_newton {
        iterations += 1;
        let f = residual(e)?;
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let mut up = e;
            let mut down = e;
            up[k] += h;
            down[k] -= h;
            let col = (residual(up)? - residual(down)?) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let Some(inv) = jac.try_inverse() else { break };
        let full = e - inv * f;
        // backtrack until the residual decreases
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-6 {
            let candidate = clamp_towards(e + (full - e) * t, e, pi1);
            let rc = residual(candidate)?.norm();
            if rc < r_norm {
                accepted = Some((rc, candidate));
                break;
            }
            t *= 0.5;
        }
        let Some((rc, candidate)) = accepted else { break };
        let moved = (candidate - e).norm();
        e = candidate;
        r_norm = rc;
        if moved < 1e-14 || r_norm < 1e-15 * (nu_hat[0] + nu_hat[1]) {
            break;
        }
    }

    let boundary_tol = 1e-9;
    let l1 = pi1 * e[1] + (1.0 - pi1) * e[0];
    let on_boundary = e[0] < boundary_tol
        || e[1] < boundary_tol
        || e[0] + e[1] > SIMPLEX_LIMIT - boundary_tol
        || l1 > 0.5 - boundary_tol;
    Ok(NoiseEstimate {
        eps_plus_hat: e[0],
        eps_minus_hat: e[1],
        residual: r_norm,
        probes,
        nu_hat,
        newton_iterations: iterations,
        warning: r_norm > opts.residual_factor * (nu_hat[0] + nu_hat[1]),
        on_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::tests::brute_force_loo;
    use crate::datasets::{sample_noisy, GmmSpec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn probes() -> [RhoParams; 2] {
        [RhoParams::new(0.0, 0.1).unwrap(), RhoParams::new(0.0, 0.4).unwrap()]
    }

    #[test]
    fn zero_features_give_zero_moment() {
        let ds = LabeledDataset::new(DMatrix::zeros(3, 8), None, vec![1, -1, 1, 1, -1, -1, 1, -1]).unwrap();
        assert_eq!(empirical_second_moment(&ds, RhoParams::naive(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn moment_matches_brute_force_retrain() {
        let ds = sample_noisy(&GmmSpec::isotropic(2, 6, 0.5, 1.0, 3).with_noise(0.2, 0.2)).unwrap();
        let rho = RhoParams::new(0.1, 0.3).unwrap();
        let slow = brute_force_loo(&ds, rho, 0.7);
        let expected = slow.norm_squared() / 6.0;
        assert_relative_eq!(
            empirical_second_moment(&ds, rho, 0.7).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    fn model() -> MomentModel {
        MomentModel {
            eta: 0.1,
            gamma: 1.0,
            snr: 2.0,
            pi1: 1.0 / 3.0,
        }
    }

    fn exact_moments(m: &MomentModel, ep: f64, em: f64) -> [f64; 2] {
        let p = probes();
        [m.nu(p[0], ep, em).unwrap(), m.nu(p[1], ep, em).unwrap()]
    }

    #[test]
    fn inverts_exact_moments() {
        let m = model();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut done = 0;
        while done < 50 {
            let ep: f64 = rng.random_range(0.01..0.98);
            let em: f64 = rng.random_range(0.01..0.98);
            if ep + em > 0.97 || m.pi1 * em + (1.0 - m.pi1) * ep > 0.48 {
                continue;
            }
            let est = invert_moments(exact_moments(&m, ep, em), probes(), &m, &SolverOptions::default()).unwrap();
            assert!(
                (est.eps_plus_hat - ep).abs() < 1e-8 && (est.eps_minus_hat - em).abs() < 1e-8,
                "({ep}, {em}) -> ({}, {})",
                est.eps_plus_hat,
                est.eps_minus_hat
            );
            assert!(!est.warning);
            done += 1;
        }
    }

    /// The second root `(1 - L1, L2')` of the moment equations.
    fn mirror(m: &MomentModel, ep: f64, em: f64) -> (f64, f64) {
        let (pi1, pi2) = (m.pi1, 1.0 - m.pi1);
        let to_eps = |l1: f64, l2: f64| ((l1 - l2) / (2.0 * pi2), (l1 + l2) / (2.0 * pi1));
        let l1 = 1.0 - (pi1 * em + pi2 * ep);
        let target = m.nu_smooth(probes()[0], ep, em).unwrap();
        // nu is affine in L2 at fixed L1
        let f = |l2: f64| {
            let (a, b) = to_eps(l1, l2);
            m.nu_smooth(probes()[0], a, b).unwrap()
        };
        let (f0, f1) = (f(0.0), f(1.0));
        to_eps(l1, (target - f0) / (f1 - f0))
    }

    #[test]
    fn mirrored_root_has_identical_moments() {
        let m = MomentModel { pi1: 0.2, ..model() };
        for i in 0..12 {
            for j in 0..12 {
                let (ep, em) = (0.04 * i as f64, 0.04 * j as f64);
                if 0.2 * em + 0.8 * ep > 0.48 || ep + em > 0.95 {
                    continue;
                }
                let (ep2, em2) = mirror(&m, ep, em);
                let a = [
                    m.nu_smooth(probes()[0], ep, em).unwrap(),
                    m.nu_smooth(probes()[1], ep, em).unwrap(),
                ];
                let b = [
                    m.nu_smooth(probes()[0], ep2, em2).unwrap(),
                    m.nu_smooth(probes()[1], ep2, em2).unwrap(),
                ];
                assert_relative_eq!(a[0], b[0], max_relative = 1e-10);
                assert_relative_eq!(a[1], b[1], max_relative = 1e-10);
                if ep2 >= 0.0 && em2 >= 0.0 && ep2 + em2 < 1.0 {
                    let est = invert_moments(b, probes(), &m, &SolverOptions::default()).unwrap();
                    assert!(
                        (est.eps_plus_hat - ep).abs() < 1e-8 && (est.eps_minus_hat - em).abs() < 1e-8,
                        "{est:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn output_stays_feasible_for_inconsistent_moments() {
        let m = model();
        for nu_hat in [[0.01, 0.02], [50.0, 3.0], [1.0, 1.0]] {
            let est = invert_moments(nu_hat, probes(), &m, &SolverOptions::default()).unwrap();
            assert!(est.eps_plus_hat >= 0.0 && est.eps_minus_hat >= 0.0);
            assert!(est.eps_plus_hat + est.eps_minus_hat < 1.0);
            assert!(est.residual.is_finite());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model();
        assert!(invert_moments([f64::NAN, 1.0], probes(), &m, &SolverOptions::default()).is_err());
        let same = [RhoParams::new(0.0, 0.1).unwrap(), RhoParams::new(0.2, 0.3).unwrap()];
        assert!(invert_moments([1.0, 1.0], same, &m, &SolverOptions::default()).is_err());
    }
}
