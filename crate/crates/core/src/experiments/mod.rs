//! Config-driven Monte Carlo experiments comparing empirical performance
//! with the large-dimensional predictions.
//!
//! Every run maps an [`ExperimentConfig`] to a [`RunReport`]; seeds and grid
//! points are evaluated in parallel and collected in input order, so reports
//! are byte-identical across thread counts.

mod config;
mod report;
mod svg;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ExperimentConfig, ExperimentKind, Loss, Variant, SCHEMA_VERSION};
pub use report::{emit_report, read_report_csv, write_report_csv, Provenance, ReportRow, RunReport};
pub use svg::{render_svg, Plot, Series, SeriesKind};

use crate::classifier::{train_lpc_bce, train_with_system, BceConfig, Classifier, RhoParams, RidgeSystem};
use crate::datasets::{
    flip_labels, generate_gmm, load_features_csv, sample_noisy, standardize_and_estimate, CsvOptions, GmmSpec,
    LabelColumn, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::multiclass::{search_alpha_beta, MultiGmmSpec, SearchConfig};
use crate::noise::estimate_noise_rates;
use crate::rng::derive_seed;
use crate::theory::{optimal_rho_plus, theory_stats_isotropic, TheoryConfig, TheoryStats};
use nalgebra::DVector;

const TEST_SEED_TAG: u64 = 0x007E_57B1;
const SPLIT_SEED_TAG: u64 = 0x5B117;
const VALIDATION_SEED_TAG: u64 = 0x7A11D;

/// Runs the experiment named in the config.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Histogram => run_histogram(cfg),
        ExperimentKind::SweepEps | ExperimentKind::SweepRho | ExperimentKind::SweepGamma => run_sweep(cfg),
        ExperimentKind::EstimateNoise => run_noise_estimation(cfg),
        ExperimentKind::RealData => run_real_data(cfg),
        ExperimentKind::Multiclass => run_multiclass(cfg),
    }
}

fn provenance(cfg: &ExperimentConfig) -> Result<Provenance> {
    Ok(Provenance {
        config_hash: cfg.hash()?,
        seeds: cfg.seeds.clone(),
        version: format!("lpc-core {}", env!("CARGO_PKG_VERSION")),
    })
}

/// Known quantities shared by training and theory at one grid point.
#[derive(Debug, Clone, Copy)]
struct Setting {
    eta: f64,
    pi1: f64,
    snr: f64,
    eps_plus: f64,
    eps_minus: f64,
    gamma: f64,
}

impl Setting {
    fn from_config(cfg: &ExperimentConfig, gamma: f64) -> Self {
        Setting {
            eta: cfg.p as f64 / cfg.n as f64,
            pi1: cfg.pi1,
            snr: cfg.snr,
            eps_plus: cfg.eps_plus,
            eps_minus: cfg.eps_minus,
            gamma,
        }
    }

    fn rho(&self, v: Variant) -> Result<Option<RhoParams>> {
        v.rho(self.pi1, self.eps_plus, self.eps_minus)
    }

    /// Limiting statistics of a variant; the oracle is the naive classifier without noise.
    fn theory(&self, v: Variant) -> Result<TheoryStats> {
        let (rho, eps_plus, eps_minus) = match self.rho(v)? {
            Some(rho) => (rho, self.eps_plus, self.eps_minus),
            None => (RhoParams::naive(), 0.0, 0.0),
        };
        theory_stats_isotropic(&TheoryConfig {
            eta: self.eta,
            pi1: self.pi1,
            snr: self.snr,
            eps_plus,
            eps_minus,
            rho,
            gamma: self.gamma,
        })
    }
}

fn train_set(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> Result<LabeledDataset> {
    sample_noisy(&GmmSpec::isotropic(cfg.p, cfg.n, cfg.pi1, cfg.snr, seed).with_noise(s.eps_plus, s.eps_minus))
}

/// Clean held-out sample drawn from a seed derived from the training seed.
fn test_set(cfg: &ExperimentConfig, seed: u64) -> Result<LabeledDataset> {
    generate_gmm(&GmmSpec::isotropic(
        cfg.p,
        cfg.n_test,
        cfg.pi1,
        cfg.snr,
        derive_seed(seed, TEST_SEED_TAG),
    ))
}

fn fit(
    cfg: &ExperimentConfig,
    system: &RidgeSystem<'_>,
    ds: &LabeledDataset,
    rho: Option<RhoParams>,
) -> Result<Classifier> {
    let labels = if rho.is_some() { &ds.y_noisy } else { ds.truth() };
    let rho = rho.unwrap_or_else(RhoParams::naive);
    match cfg.loss {
        Loss::Squared => train_with_system(system, labels, rho),
        Loss::Bce => {
            let bce = BceConfig {
                learning_rate: cfg.learning_rate,
                iters: cfg.iters,
                gamma: system.gamma(),
            };
            if labels.as_ptr() == ds.y_noisy.as_ptr() {
                train_lpc_bce(ds, rho, &bce)
            } else {
                let clean = LabeledDataset::new(ds.x.clone(), None, labels.to_vec())?;
                train_lpc_bce(&clean, rho, &bce)
            }
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn class_moments(scores: &DVector<f64>, y: &[i8], class: i8) -> (f64, f64) {
    let vals: Vec<f64> = scores
        .iter()
        .zip(y)
        .filter(|(_, &l)| l == class)
        .map(|(&s, _)| s)
        .collect();
    mean_std(&vals)
}

fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt())
}

/// Theory values of the per-seed metrics of the histogram run.
fn histogram_theory(t: &TheoryStats, metric: &str) -> f64 {
    let sd = t.variance.sqrt();
    match metric {
        "mean_class1" => -t.m_rho,
        "mean_class2" => t.m_rho,
        "std_class1" | "std_class2" => sd,
        "accuracy" => t.accuracy,
        _ => t.risk,
    }
}

const HISTOGRAM_METRICS: [&str; 6] = [
    "mean_class1",
    "mean_class2",
    "std_class1",
    "std_class2",
    "accuracy",
    "risk",
];

/// Trains each variant on one draw per seed and compares the class-conditional
/// score distribution on clean test data with its limiting Gaussian.
pub fn run_histogram(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::Histogram;
    let gamma = cfg.resolved_gamma()?;
    let setting = Setting::from_config(cfg, gamma);
    let mut notes = Vec::new();
    let theory: Vec<Option<TheoryStats>> = cfg
        .variants
        .iter()
        .map(|&v| match setting.theory(v) {
            Ok(t) if cfg.loss == Loss::Squared => Some(t),
            Ok(_) => None,
            Err(e) => {
                notes.push(format!("no theory for {v}: {e}"));
                None
            }
        })
        .collect();

    // per seed: per variant the metric values and the raw test scores
    type SeedOut = (Vec<[f64; 6]>, Vec<DVector<f64>>, Vec<i8>);
    let per_seed: Vec<SeedOut> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedOut> {
            let train = train_set(cfg, &setting, seed)?;
            let test = test_set(cfg, seed)?;
            let system = RidgeSystem::new(&train.x, gamma)?;
            let mut metrics = Vec::new();
            let mut scores = Vec::new();
            for &v in &cfg.variants {
                let clf = fit(cfg, &system, &train, setting.rho(v)?)?;
                let s = clf.decision(&test.x)?;
                let eval = clf.evaluate(&test.x, test.truth())?;
                let (m1, s1) = class_moments(&s, test.truth(), -1);
                let (m2, s2) = class_moments(&s, test.truth(), 1);
                metrics.push([m1, m2, s1, s2, eval.accuracy, eval.risk]);
                scores.push(s);
            }
            Ok((metrics, scores, test.truth().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (vi, v) in cfg.variants.iter().enumerate() {
        let name = v.to_string();
        for (mi, metric) in HISTOGRAM_METRICS.iter().enumerate() {
            let th = theory[vi].map(|t| histogram_theory(&t, metric));
            for (si, &seed) in cfg.seeds.iter().enumerate() {
                rows.push(ReportRow::new(
                    kind,
                    &name,
                    None,
                    Some(seed),
                    metric,
                    Some(per_seed[si].0[vi][mi]),
                    th,
                ));
            }
            let vals: Vec<f64> = per_seed.iter().map(|s| s.0[vi][mi]).collect();
            let (mean, sd) = mean_std(&vals);
            rows.push(ReportRow::new(kind, &name, None, None, metric, Some(mean), th));
            rows.push(ReportRow::new(
                kind,
                &name,
                None,
                None,
                &format!("{metric}_seed_sd"),
                Some(sd),
                None,
            ));
        }
    }

    // histogram of the first seed's scores on a shared bin grid
    let (_, scores, y) = &per_seed[0];
    let seed0 = cfg.seeds[0];
    let lo = scores
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = scores
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / cfg.bins as f64 } else { 1.0 };
    let centers: Vec<f64> = (0..cfg.bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let mut series = Vec::new();
    for (vi, v) in cfg.variants.iter().enumerate() {
        for (class, metric, sign) in [(-1i8, "density_class1", -1.0), (1, "density_class2", 1.0)] {
            let mut counts = vec![0usize; cfg.bins];
            let mut total = 0usize;
            for (&s, _) in scores[vi].iter().zip(y).filter(|(_, &l)| l == class) {
                let b = (((s - lo) / width) as usize).min(cfg.bins - 1);
                counts[b] += 1;
                total += 1;
            }
            let density: Vec<f64> = counts
                .iter()
                .map(|&c| c as f64 / (total.max(1) as f64 * width))
                .collect();
            let th = theory[vi];
            let mut bars = Vec::new();
            let mut curve = Vec::new();
            for (b, &c) in centers.iter().enumerate() {
                let t = th.map(|t| gaussian_pdf(c, sign * t.m_rho, t.variance.sqrt()));
                rows.push(ReportRow::new(
                    kind,
                    v.to_string(),
                    Some(c),
                    Some(seed0),
                    metric,
                    Some(density[b]),
                    t,
                ));
                bars.push((c, density[b]));
                if let Some(t) = t {
                    curve.push((c, t));
                }
            }
            let label = if class < 0 { "class 1" } else { "class 2" };
            series.push(Series::new(format!("{v} {label}"), SeriesKind::Bars, bars));
            if !curve.is_empty() {
                series.push(Series::new(format!("{v} {label} theory"), SeriesKind::Line, curve));
            }
        }
    }

    let summary = cfg
        .variants
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let mean = |mi: usize| mean_std(&per_seed.iter().map(|s| s.0[vi][mi]).collect::<Vec<_>>()).0;
            let th = theory[vi].map_or("n/a".to_string(), |t| {
                format!("m {:+.4} sd {:.4}", t.m_rho, t.variance.sqrt())
            });
            format!(
                "{v:<24} class means {:+.4} {:+.4}  stds {:.4} {:.4}  theory {th}",
                mean(0),
                mean(1),
                mean(2),
                mean(3)
            )
        })
        .collect();

    Ok(RunReport {
        experiment: kind,
        rows,
        provenance: provenance(cfg)?,
        plot: Plot {
            title: format!("Decision function, n = {}, p = {}, seed {seed0}", cfg.n, cfg.p),
            x_label: "w^T x".into(),
            y_label: "density".into(),
            series,
        },
        summary,
        notes,
    })
}

/// One evaluated point of a sweep: accuracy and risk per variant.
type PointOut = Vec<Option<(f64, f64)>>;

/// Sweeps `eps_plus`, `rho_plus` (one LPC per grid value, `rho_minus` fixed)
/// or `gamma`, recording empirical and predicted accuracy and risk.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = cfg.experiment;
    let base_gamma = if kind == ExperimentKind::SweepGamma {
        1.0
    } else {
        cfg.resolved_gamma()?
    };
    let mut notes = Vec::new();

    // variant set and setting per grid point
    let variants_at = |g: f64| -> Vec<(String, Option<Variant>)> {
        if kind == ExperimentKind::SweepRho {
            vec![(
                "lpc".to_string(),
                Some(Variant::Custom {
                    rho_plus: g,
                    rho_minus: cfg.rho_minus,
                }),
            )]
        } else {
            cfg.variants.iter().map(|v| (v.to_string(), Some(*v))).collect()
        }
    };
    let setting_at = |g: f64| {
        let mut s = Setting::from_config(cfg, base_gamma);
        match kind {
            ExperimentKind::SweepEps => s.eps_plus = g,
            ExperimentKind::SweepGamma => s.gamma = g,
            _ => {}
        }
        s
    };

    // resolve classifiers and theory per grid point before fanning out
    let mut plan: Vec<Vec<(String, Option<RhoParams>, Option<TheoryStats>)>> = Vec::new();
    for &g in &cfg.grid {
        let s = setting_at(g);
        if kind == ExperimentKind::SweepEps && s.eps_plus + s.eps_minus >= 1.0 {
            return Err(Error::Config(format!(
                "eps_plus = {g} with eps_minus = {} leaves no signal",
                s.eps_minus
            )));
        }
        let mut point = Vec::new();
        for (name, v) in variants_at(g) {
            let v = v.expect("sweep variants are explicit");
            let rho = match s.rho(v) {
                Ok(r) => r,
                Err(e) => {
                    notes.push(format!("skipped {name} at {g}: {e}"));
                    continue;
                }
            };
            let th = if cfg.loss == Loss::Squared {
                match s.theory(v) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        notes.push(format!("no theory for {name} at {g}: {e}"));
                        None
                    }
                }
            } else {
                None
            };
            point.push((name, rho, th));
        }
        plan.push(point);
    }

    let jobs: Vec<(usize, u64)> = (0..cfg.grid.len())
        .flat_map(|gi| cfg.seeds.iter().map(move |&s| (gi, s)))
        .collect();
    let results: Vec<PointOut> = jobs
        .par_iter()
        .map(|&(gi, seed)| -> Result<PointOut> {
            let s = setting_at(cfg.grid[gi]);
            let train = train_set(cfg, &s, seed)?;
            let test = test_set(cfg, seed)?;
            let system = RidgeSystem::new(&train.x, s.gamma)?;
            plan[gi]
                .iter()
                .map(|(_, rho, _)| {
                    let clf = fit(cfg, &system, &train, *rho)?;
                    let e = clf.evaluate(&test.x, test.truth())?;
                    Ok(Some((e.accuracy, e.risk)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut series_emp: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut series_th: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let push_point = |list: &mut Vec<(String, Vec<(f64, f64)>)>, name: &str, pt: (f64, f64)| match list
        .iter_mut()
        .find(|(n, _)| n == name)
    {
        Some((_, pts)) => pts.push(pt),
        None => list.push((name.to_string(), vec![pt])),
    };
    let ns = cfg.seeds.len();
    for (gi, &g) in cfg.grid.iter().enumerate() {
        for (vi, (name, _, th)) in plan[gi].iter().enumerate() {
            for (mi, metric) in ["accuracy", "risk"].iter().enumerate() {
                let t = th.map(|t| if mi == 0 { t.accuracy } else { t.risk });
                let mut vals = Vec::new();
                for (si, &seed) in cfg.seeds.iter().enumerate() {
                    let (acc, risk) = results[gi * ns + si][vi].expect("evaluated");
                    let v = if mi == 0 { acc } else { risk };
                    vals.push(v);
                    rows.push(ReportRow::new(kind, name, Some(g), Some(seed), metric, Some(v), t));
                }
                let (mean, sd) = mean_std(&vals);
                rows.push(ReportRow::new(kind, name, Some(g), None, metric, Some(mean), t));
                rows.push(ReportRow::new(
                    kind,
                    name,
                    Some(g),
                    None,
                    &format!("{metric}_seed_sd"),
                    Some(sd),
                    None,
                ));
                if mi == 0 {
                    push_point(&mut series_emp, name, (g, mean));
                    if let Some(t) = t {
                        push_point(&mut series_th, name, (g, t));
                    }
                }
            }
        }
    }

    let mut summary = Vec::new();
    if kind == ExperimentKind::SweepRho {
        let best = |pts: &[(f64, f64)]| {
            pts.iter()
                .copied()
                .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        };
        if let Some((_, pts)) = series_th.first() {
            summary.push(format!("theoretical grid argmax rho_plus = {}", best(pts).0));
        }
        if let Some((_, pts)) = series_emp.first() {
            summary.push(format!("empirical grid argmax rho_plus = {}", best(pts).0));
        }
        if let Ok(star) = optimal_rho_plus(cfg.pi1, cfg.eps_plus, cfg.eps_minus, cfg.rho_minus) {
            summary.push(format!("closed-form optimum rho_plus* = {star:.6}"));
        }
    }

    let mut series = Vec::new();
    for (name, pts) in series_th {
        series.push(Series::new(format!("{name} theory"), SeriesKind::Line, pts));
    }
    for (name, pts) in series_emp {
        series.push(Series::new(format!("{name} empirical"), SeriesKind::Markers, pts));
    }
    let x_label = match kind {
        ExperimentKind::SweepEps => "eps_plus",
        ExperimentKind::SweepRho => "rho_plus",
        _ => "gamma",
    };
    Ok(RunReport {
        experiment: kind,
        rows,
        provenance: provenance(cfg)?,
        plot: Plot {
            title: format!("Test accuracy, n = {}, p = {}", cfg.n, cfg.p),
            x_label: x_label.into(),
            y_label: "accuracy".into(),
            series,
        },
        summary,
        notes,
    })
}

/// Estimates the flip rates from leave-one-out moments for each true
/// `eps_plus` in the grid (`eps_minus` fixed).
pub fn run_noise_estimation(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::EstimateNoise;
    let gamma = cfg.resolved_gamma()?;
    let probes = [
        RhoParams::new(cfg.probes[0][0], cfg.probes[0][1])?,
        RhoParams::new(cfg.probes[1][0], cfg.probes[1][1])?,
    ];
    let mut notes = Vec::new();
    if cfg.estimate_moments {
        notes.push("pi1 and snr estimated from the standardized data; estimates are approximate".into());
    }
    for &g in &cfg.grid {
        if !(g >= 0.0 && g + cfg.eps_minus < 1.0) {
            return Err(Error::Config(format!(
                "true eps_plus = {g} is not a valid rate with eps_minus = {}",
                cfg.eps_minus
            )));
        }
    }
    let jobs: Vec<(f64, u64)> = cfg
        .grid
        .iter()
        .flat_map(|&g| cfg.seeds.iter().map(move |&s| (g, s)))
        .collect();
    // (eps_plus_hat, eps_minus_hat, residual, warning, on_boundary)
    let results: Vec<[f64; 5]> = jobs
        .par_iter()
        .map(|&(g, seed)| -> Result<[f64; 5]> {
            let s = Setting {
                eps_plus: g,
                ..Setting::from_config(cfg, gamma)
            };
            let ds = train_set(cfg, &s, seed)?;
            let (ds, snr, pi1) = if cfg.estimate_moments {
                let st = standardize_and_estimate(&ds)?;
                let snr = st.snr_estimate.ok_or_else(|| Error::param("single-class sample"))?;
                (st.dataset, snr, st.pi1_estimate)
            } else {
                (ds, cfg.snr, cfg.pi1)
            };
            let est = estimate_noise_rates(&ds, probes[0], probes[1], gamma, snr, pi1)?;
            Ok([
                est.eps_plus_hat,
                est.eps_minus_hat,
                est.residual,
                f64::from(u8::from(est.warning)),
                f64::from(u8::from(est.on_boundary)),
            ])
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut mean_pts = Vec::new();
    let mut scatter = Vec::new();
    let ns = cfg.seeds.len();
    let metrics = ["eps_plus_hat", "eps_minus_hat", "residual", "warning", "on_boundary"];
    for (gi, &g) in cfg.grid.iter().enumerate() {
        let block = &results[gi * ns..(gi + 1) * ns];
        for (mi, metric) in metrics.iter().enumerate() {
            let truth = match mi {
                0 => Some(g),
                1 => Some(cfg.eps_minus),
                _ => None,
            };
            for (r, &seed) in block.iter().zip(&cfg.seeds) {
                rows.push(ReportRow::new(
                    kind,
                    "estimator",
                    Some(g),
                    Some(seed),
                    metric,
                    Some(r[mi]),
                    truth,
                ));
            }
            let (mean, sd) = mean_std(&block.iter().map(|r| r[mi]).collect::<Vec<_>>());
            rows.push(ReportRow::new(
                kind,
                "estimator",
                Some(g),
                None,
                metric,
                Some(mean),
                truth,
            ));
            rows.push(ReportRow::new(
                kind,
                "estimator",
                Some(g),
                None,
                &format!("{metric}_seed_sd"),
                Some(sd),
                None,
            ));
        }
        let abs_err = block.iter().map(|r| (r[0] - g).abs()).sum::<f64>() / ns as f64;
        rows.push(ReportRow::new(
            kind,
            "estimator",
            Some(g),
            None,
            "eps_plus_abs_error",
            Some(abs_err),
            Some(0.0),
        ));
        mean_pts.push((g, block.iter().map(|r| r[0]).sum::<f64>() / ns as f64));
        scatter.extend(block.iter().map(|r| (g, r[0])));
    }
    let overall = rows
        .iter()
        .filter(|r| r.metric == "eps_plus_abs_error")
        .filter_map(|r| r.empirical)
        .sum::<f64>()
        / cfg.grid.len() as f64;
    let (lo, hi) = (cfg.grid[0], cfg.grid[cfg.grid.len() - 1]);
    Ok(RunReport {
        experiment: kind,
        rows,
        provenance: provenance(cfg)?,
        plot: Plot {
            title: format!("Noise-rate estimation, n = {}, p = {}, snr = {}", cfg.n, cfg.p, cfg.snr),
            x_label: "true eps_plus".into(),
            y_label: "estimated eps_plus".into(),
            series: vec![
                Series::new("diagonal", SeriesKind::Line, vec![(lo, lo), (hi, hi)]),
                Series::new("mean estimate", SeriesKind::Line, mean_pts),
                Series::new("per seed", SeriesKind::Markers, scatter),
            ],
        },
        summary: vec![format!("mean |eps_plus_hat - eps_plus| over the grid = {overall:.4}")],
        notes,
    })
}

/// Train/test split of a labelled dataset, drawn from `seed`.
fn split(ds: &LabeledDataset, test_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let n = ds.n();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n - 1 {
        return Err(Error::param(format!(
            "cannot split {n} samples with test_fraction {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_SEED_TAG)));
    let (test_idx, train_idx) = order.split_at(n_test);
    let part = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        let truth = ds.truth();
        let y: Vec<i8> = idx.iter().map(|&i| truth[i]).collect();
        LabeledDataset::new(ds.x.select_columns(idx.iter()), Some(y.clone()), y)
    };
    Ok((part(train_idx)?, part(test_idx)?))
}

/// Table-style comparison of the variants: loads features from `data_path`
/// (treated as clean labels) or draws a Gaussian stand-in, injects the
/// configured label noise and reports mean and std accuracy over seeds.
pub fn run_real_data(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::RealData;
    let mut notes = Vec::new();
    let loaded = match &cfg.data_path {
        Some(path) => {
            let label_column = match cfg.label_column.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(cfg.label_column.clone()),
            };
            let ds = load_features_csv(
                path,
                &CsvOptions {
                    label_column,
                    has_header: cfg.has_header,
                    has_clean_labels: true,
                },
            )?;
            let st = standardize_and_estimate(&ds)?;
            if st.single_class {
                return Err(Error::param("dataset has a single class"));
            }
            notes.push(format!(
                "theory uses estimated pi1 = {:.4} and snr = {:.4}; features need not be Gaussian",
                st.pi1_estimate,
                st.snr_estimate.unwrap_or(0.0)
            ));
            Some(st)
        }
        None => None,
    };
    let (n_train, p, pi1, snr) = match &loaded {
        Some(st) => {
            let n_test = (st.dataset.n() as f64 * cfg.test_fraction).round() as usize;
            (
                st.dataset.n() - n_test,
                st.dataset.p(),
                st.pi1_estimate,
                st.snr_estimate.unwrap_or(0.0),
            )
        }
        None => (cfg.n, cfg.p, cfg.pi1, cfg.snr),
    };
    let eta = p as f64 / n_train as f64;
    let gamma = if cfg.optimal_gamma {
        crate::theory::optimal_gamma(eta, pi1, snr)?
    } else {
        cfg.gamma
    };
    let setting = Setting {
        eta,
        pi1,
        snr,
        eps_plus: cfg.eps_plus,
        eps_minus: cfg.eps_minus,
        gamma,
    };
    let rhos = cfg
        .variants
        .iter()
        .map(|&v| setting.rho(v))
        .collect::<Result<Vec<_>>>()?;
    let theory: Vec<Option<TheoryStats>> = cfg
        .variants
        .iter()
        .map(|&v| {
            if cfg.loss == Loss::Squared {
                setting.theory(v).ok()
            } else {
                None
            }
        })
        .collect();

    let per_seed: Vec<Vec<f64>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let (train, test) = match &loaded {
                Some(st) => {
                    let (train, test) = split(&st.dataset, cfg.test_fraction, seed)?;
                    (
                        flip_labels(&train, cfg.eps_plus, cfg.eps_minus, derive_seed(seed, 0xF11B))?,
                        test,
                    )
                }
                None => (train_set(cfg, &setting, seed)?, test_set(cfg, seed)?),
            };
            let system = RidgeSystem::new(&train.x, gamma)?;
            rhos.iter()
                .map(|&rho| {
                    Ok(fit(cfg, &system, &train, rho)?
                        .evaluate(&test.x, test.truth())?
                        .accuracy)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut summary = vec![
        format!(
            "gamma = {gamma:.6e}, eps_plus = {}, eps_minus = {}",
            cfg.eps_plus, cfg.eps_minus
        ),
        format!("{:<24} {:>18} {:>12}", "variant", "accuracy (%)", "theory (%)"),
    ];
    let mut bars = Vec::new();
    for (vi, v) in cfg.variants.iter().enumerate() {
        let name = v.to_string();
        let t = theory[vi].map(|t| t.accuracy);
        let vals: Vec<f64> = per_seed.iter().map(|s| s[vi]).collect();
        for (&acc, &seed) in vals.iter().zip(&cfg.seeds) {
            rows.push(ReportRow::new(kind, &name, None, Some(seed), "accuracy", Some(acc), t));
        }
        let (mean, sd) = mean_std(&vals);
        rows.push(ReportRow::new(kind, &name, None, None, "accuracy", Some(mean), t));
        rows.push(ReportRow::new(
            kind,
            &name,
            None,
            None,
            "accuracy_seed_sd",
            Some(sd),
            None,
        ));
        let th = t.map_or("n/a".to_string(), |t| format!("{:.2}", 100.0 * t));
        summary.push(format!(
            "{name:<24} {:>18} {th:>12}",
            format!("{:.2} +- {:.2}", 100.0 * mean, 100.0 * sd)
        ));
        bars.push((vi as f64, mean));
    }
    Ok(RunReport {
        experiment: kind,
        rows,
        provenance: provenance(cfg)?,
        plot: Plot {
            title: format!(
                "Accuracy by variant ({})",
                cfg.data_path
                    .as_ref()
                    .map_or("synthetic".to_string(), |p| p.display().to_string())
            ),
            x_label: cfg
                .variants
                .iter()
                .map(Variant::to_string)
                .collect::<Vec<_>>()
                .join(" | "),
            y_label: "accuracy".into(),
            series: vec![Series::new("mean accuracy", SeriesKind::Bars, bars)],
        },
        summary,
        notes,
    })
}

/// k-class mixture of the config: means evenly spaced on one direction from
/// `-snr` to `+snr`; default proportions and flips are the three-class example.
pub fn multiclass_spec(cfg: &ExperimentConfig, seed: u64) -> Result<MultiGmmSpec> {
    let k = cfg.k;
    let mut spec = MultiGmmSpec::three_class_example(cfg.p, cfg.n, cfg.snr, seed);
    if k != 3 {
        spec.k = k;
        spec.pi = vec![1.0 / k as f64; k];
        spec.eps = DMatrix::zeros(k, k);
    }
    let dir = DVector::from_element(cfg.p, 1.0 / (cfg.p as f64).sqrt());
    spec.means = (0..k)
        .map(|c| &dir * (cfg.snr * (2.0 * c as f64 / (k - 1) as f64 - 1.0)))
        .collect();
    if let Some(pi) = &cfg.class_pi {
        spec.pi = pi.clone();
    }
    if let Some(m) = &cfg.flip_matrix {
        if m.len() != k || m.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("flip_matrix must be {k} x {k}")));
        }
        spec.eps = DMatrix::from_fn(k, k, |a, b| m[a][b]);
    }
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(spec)
}

/// Random search over `(alpha, beta)` followed by the interpolation path
/// between the best and worst candidates on independent validation seeds.
pub fn run_multiclass(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::Multiclass;
    let spec = multiclass_spec(cfg, cfg.seeds[0])?;
    let validation_seeds = cfg
        .validation_seeds
        .clone()
        .unwrap_or_else(|| cfg.seeds.iter().map(|&s| derive_seed(s, VALIDATION_SEED_TAG)).collect());
    let search = SearchConfig {
        grid_size: cfg.grid_size,
        box_half_width: cfg.box_half_width,
        search_seeds: cfg.seeds.clone(),
        validation_seeds: validation_seeds.clone(),
        gamma: cfg.gamma,
        n_test: cfg.n_test,
        tau_grid: cfg.tau_grid(),
        candidate_seed: cfg.candidate_seed,
        inject: Vec::new(),
    };
    let result = search_alpha_beta(&spec, &search)?;

    let mut rows = Vec::new();
    let mut path = Vec::new();
    for point in &result.tau_path {
        for (&acc, &seed) in point.accuracy.per_seed.iter().zip(&validation_seeds) {
            rows.push(ReportRow::new(
                kind,
                "tau",
                Some(point.tau),
                Some(seed),
                "accuracy",
                Some(acc),
                None,
            ));
        }
        rows.push(ReportRow::new(
            kind,
            "tau",
            Some(point.tau),
            None,
            "accuracy",
            Some(point.accuracy.mean),
            None,
        ));
        rows.push(ReportRow::new(
            kind,
            "tau",
            Some(point.tau),
            None,
            "accuracy_seed_sd",
            Some(point.accuracy.std),
            None,
        ));
        path.push((point.tau, point.accuracy.mean));
    }
    for (&acc, &seed) in result.naive.per_seed.iter().zip(&validation_seeds) {
        rows.push(ReportRow::new(
            kind,
            "naive",
            None,
            Some(seed),
            "accuracy",
            Some(acc),
            None,
        ));
    }
    rows.push(ReportRow::new(
        kind,
        "naive",
        None,
        None,
        "accuracy",
        Some(result.naive.mean),
        None,
    ));
    rows.push(ReportRow::new(
        kind,
        "naive",
        None,
        None,
        "accuracy_seed_sd",
        Some(result.naive.std),
        None,
    ));
    rows.push(ReportRow::new(
        kind,
        "best",
        None,
        None,
        "search_accuracy",
        Some(result.best_search_accuracy),
        None,
    ));
    rows.push(ReportRow::new(
        kind,
        "worst",
        None,
        None,
        "search_accuracy",
        Some(result.worst_search_accuracy),
        None,
    ));

    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    let summary = vec![
        format!("candidates = {}", result.candidates),
        format!(
            "best  alpha = [{}], beta = [{}]",
            fmt(&result.best.alpha),
            fmt(&result.best.beta)
        ),
        format!(
            "worst alpha = [{}], beta = [{}]",
            fmt(&result.worst.alpha),
            fmt(&result.worst.beta)
        ),
        format!(
            "validation accuracy: tau=1 {:.4}, tau=0 {:.4}, naive {:.4}",
            result
                .tau_path
                .iter()
                .find(|p| p.tau == 1.0)
                .map_or(f64::NAN, |p| p.accuracy.mean),
            result
                .tau_path
                .iter()
                .find(|p| p.tau == 0.0)
                .map_or(f64::NAN, |p| p.accuracy.mean),
            result.naive.mean
        ),
    ];
    let (lo, hi) = (path.first().map_or(0.0, |p| p.0), path.last().map_or(1.0, |p| p.0));
    Ok(RunReport {
        experiment: kind,
        rows,
        provenance: provenance(cfg)?,
        plot: Plot {
            title: format!("Multi-class accuracy along the (alpha, beta) path, k = {}", cfg.k),
            x_label: "tau".into(),
            y_label: "accuracy".into(),
            series: vec![
                Series::new("tau path", SeriesKind::Line, path),
                Series::new(
                    "naive",
                    SeriesKind::Line,
                    vec![(lo, result.naive.mean), (hi, result.naive.mean)],
                ),
            ],
        },
        summary,
        notes: vec!["multiclass cells are empirical only".into()],
    })
}

/// Limiting statistics of each configured variant, one line per variant.
pub fn theory_report(cfg: &ExperimentConfig) -> Result<String> {
    let gamma = cfg.resolved_gamma()?;
    let s = Setting::from_config(cfg, gamma);
    let mut out = format!(
        "eta = {}, pi1 = {}, snr = {}, eps = ({}, {}), gamma = {gamma}\n",
        s.eta, s.pi1, s.snr, s.eps_plus, s.eps_minus
    );
    if let Ok(star) = optimal_rho_plus(s.pi1, s.eps_plus, s.eps_minus, 0.0) {
        out.push_str(&format!("rho_plus* (rho_minus = 0) = {star:.6}\n"));
    }
    out.push_str(&format!(
        "{:<24} {:>10} {:>10} {:>12} {:>12} {:>10} {:>10}\n",
        "variant", "delta", "h", "m_rho", "nu_rho", "accuracy", "risk"
    ));
    for &v in &cfg.variants {
        match s.theory(v) {
            Ok(t) => out.push_str(&format!(
                "{:<24} {:>10.6} {:>10.6} {:>12.6} {:>12.6} {:>10.6} {:>10.6}\n",
                v.to_string(),
                t.delta,
                t.h,
                t.m_rho,
                t.nu_rho,
                t.accuracy,
                t.risk
            )),
            Err(e) => out.push_str(&format!("{:<24} {e}\n", v.to_string())),
        }
    }
    Ok(out)
}
