//! Analytic test functions and the replication experiments built on them.
//!
//! Both functions take 3 scalar and 3 functional inputs with the third of
//! each kind inactive. Functional terms are integrals of the curves, so
//! with B-spline inputs they evaluate exactly through the precomputed
//! moment vectors: `∫ t^p f(t) dt = Σ β_i ∫ t^p B_i(t) dt`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bspline::{BSplineBasis, FunctionalCurve};
use crate::design::{
    candidate_set, derive_seed, free_maximin_demo, two_stage_design, Design, SaConfig,
};
use crate::error::{Error, Result};
use crate::gp::{fit, FitConfig, GpModel, GpParams, KernelFamily};
use crate::metric::RunPoint;

/// The two analytic benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    G1,
    G2,
}

impl TestFunction {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "g1" => Ok(TestFunction::G1),
            "g2" => Ok(TestFunction::G2),
            other => Err(Error::InvalidParameter(format!(
                "unknown test function '{other}' (expected 'g1' or 'g2')"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::G1 => "g1",
            TestFunction::G2 => "g2",
        }
    }

    pub fn eval(&self, point: &RunPoint) -> Result<f64> {
        match self {
            TestFunction::G1 => g1(point),
            TestFunction::G2 => g2(point),
        }
    }
}

fn check_shape(point: &RunPoint) -> Result<()> {
    if point.num_scalars() != 3 || point.num_functionals() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "test functions take 3 scalar and 3 functional inputs, got ({}, {})",
            point.num_scalars(),
            point.num_functionals()
        )));
    }
    Ok(())
}

fn curve_integral(curve: &FunctionalCurve, power: usize) -> f64 {
    let moments = curve
        .basis()
        .moment_vector(power)
        .expect("powers 0 and 1 are always available");
    curve.coeffs().iter().zip(moments).map(|(b, m)| b * m).sum()
}

/// Additive benchmark: `x₁ + 2x₂ + 4∫ t f₁(t) dt + ∫ f₂(t) dt`. The first
/// scalar and the second functional input carry the same weight; x₃ and
/// f₃ are inactive.
pub fn g1(point: &RunPoint) -> Result<f64> {
    check_shape(point)?;
    let x = point.scalars();
    let f = point.curves();
    Ok(x[0] + 2.0 * x[1] + 4.0 * curve_integral(&f[0], 1) + curve_integral(&f[1], 0))
}

/// Branin benchmark with functional terms and a scalar-functional
/// interaction. Scalars come in on [0,1] and are mapped onto the
/// classical Branin domain x₁ ∈ [-5,10], x₂ ∈ [0,15] before evaluation.
pub fn g2(point: &RunPoint) -> Result<f64> {
    check_shape(point)?;
    let x = point.scalars();
    let f = point.curves();
    let u = 15.0 * x[0] - 5.0;
    let v = 15.0 * x[1];
    let branin = (v - 5.1 / (4.0 * PI * PI) * u * u + 5.0 / PI * u - 6.0).powi(2)
        + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * u.cos()
        + 10.0;
    let f1_term = 42.0 * (curve_integral(&f[0], 0) - curve_integral(&f[0], 1));
    let f2_term = PI * ((u + 5.0) / 5.0 + 15.0) * curve_integral(&f[1], 1);
    Ok(branin + 4.0 / 3.0 * PI * (f1_term + f2_term))
}

/// Uniformly random run points: scalars i.i.d. on [0,1] and coefficient
/// vectors i.i.d. on [0,1]^K, one curve per listed basis.
pub fn random_points(
    count: usize,
    d_s: usize,
    bases: &[Arc<BSplineBasis>],
    seed: u64,
) -> Result<Vec<RunPoint>> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "at least one test point is required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let scalars: Vec<f64> = (0..d_s).map(|_| rng.random()).collect();
            let curves: Vec<FunctionalCurve> = bases
                .iter()
                .map(|b| {
                    let coeffs: Vec<f64> = (0..b.num_basis()).map(|_| rng.random()).collect();
                    FunctionalCurve::new(b.clone(), coeffs).expect("uniform draws are in range")
                })
                .collect();
            RunPoint::new(scalars, curves).expect("uniform draws are in range")
        })
        .collect())
}

/// Test inputs of the benchmark shape: three scalars and three curves on
/// a shared basis.
pub fn random_test_points(
    count: usize,
    basis: &Arc<BSplineBasis>,
    seed: u64,
) -> Result<Vec<RunPoint>> {
    random_points(count, 3, &[basis.clone(), basis.clone(), basis.clone()], seed)
}

/// Root mean squared error between predictions and truth.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions against {} true values",
            pred.len(),
            truth.len()
        )));
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// One evaluated prediction exercise.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rmse: f64,
    pub residuals: Vec<f64>,
    pub seed: u64,
    pub n: usize,
    pub num_basis: usize,
    pub order: usize,
}

// ---------------------------------------------------------------------------
// Replication experiments
// ---------------------------------------------------------------------------

/// Common knobs shared by the replication studies.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n: usize,
    pub num_basis: usize,
    pub order: usize,
    pub reps: usize,
    pub test_size: usize,
    pub q: f64,
    pub seed: u64,
    pub starts: usize,
    pub sa: SaConfig,
}

impl StudyConfig {
    /// Defaults of the weighted-versus-unweighted comparison.
    pub fn weighting(reps: usize, seed: u64) -> Self {
        StudyConfig {
            n: 40,
            num_basis: 7,
            order: 4,
            reps,
            test_size: 300,
            q: 5.0,
            seed,
            starts: 50,
            sa: SaConfig::default(),
        }
    }

    /// Defaults of the spline-order comparison (the order field is swept).
    pub fn order_comparison(reps: usize, seed: u64) -> Self {
        StudyConfig {
            n: 20,
            num_basis: 7,
            order: 4,
            reps,
            test_size: 600,
            q: 5.0,
            seed,
            starts: 50,
            sa: SaConfig::default(),
        }
    }
}

/// Paired error metrics of one weighting replication.
#[derive(Debug, Clone, Copy)]
pub struct WeightingMetrics {
    pub rmse_weighted: f64,
    pub rmse_unweighted: f64,
    /// Divided by the range of the true test outputs.
    pub nrmse_weighted: f64,
    pub nrmse_unweighted: f64,
}

#[derive(Debug, Clone)]
pub struct WeightingRow {
    pub rep: usize,
    pub seed: u64,
    pub outcome: Result<WeightingMetrics>,
}

/// Aggregate of the weighting study; means are over successful
/// replications only, reduced in replication order.
#[derive(Debug, Clone)]
pub struct WeightingStudy {
    pub rows: Vec<WeightingRow>,
    pub successes: usize,
    pub weighted_wins: usize,
    pub mean_rmse_weighted: f64,
    pub mean_rmse_unweighted: f64,
    pub mean_nrmse_weighted: f64,
    pub mean_nrmse_unweighted: f64,
}

impl WeightingStudy {
    pub fn failures(&self) -> usize {
        self.rows.len() - self.successes
    }
}

/// Map an unweighted optimum into the weighted parameterization: uniform
/// weights scale every functional distance by 1/K, so dividing θ_f by K
/// reproduces the same correlation matrix and likelihood.
fn weighted_equivalent(params: &GpParams, k: usize) -> GpParams {
    GpParams {
        theta_f: params.theta_f.iter().map(|t| t / k as f64).collect(),
        omega: Some(vec![(1.0, 1.0); params.theta_f.len()]),
        ..params.clone()
    }
}

fn weighting_rep(cfg: &StudyConfig, rep: usize) -> Result<WeightingMetrics> {
    let stream = |tag: u64| derive_seed(cfg.seed, rep as u64 * 8 + tag);
    let basis = Arc::new(BSplineBasis::new(cfg.num_basis, cfg.order)?);
    let design = two_stage_design(cfg.n, 3, 3, &basis, cfg.q, &cfg.sa, stream(0))?;
    let runs = design.run_points();
    let y: Vec<f64> = runs.iter().map(g2).collect::<Result<_>>()?;
    let test = random_test_points(cfg.test_size, &basis, stream(1))?;
    let truth: Vec<f64> = test.iter().map(g2).collect::<Result<_>>()?;
    let range = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - truth.iter().cloned().fold(f64::INFINITY, f64::min);

    let unweighted_cfg = FitConfig {
        multistart: cfg.starts,
        ..FitConfig::new(false, stream(2))
    };
    let unweighted = fit(&runs, &y, KernelFamily::Matern52, &unweighted_cfg)?;

    // The weighted search starts from the random draws plus the
    // unweighted optimum expressed with uniform weights, so its training
    // likelihood can only improve on the unweighted fit.
    let weighted_cfg = FitConfig {
        multistart: cfg.starts,
        warm_starts: vec![weighted_equivalent(unweighted.params(), cfg.num_basis)],
        ..FitConfig::new(true, stream(3))
    };
    let weighted = fit(&runs, &y, KernelFamily::Matern52, &weighted_cfg)?;

    let predict_rmse = |model: &GpModel| -> Result<f64> {
        let preds = model.predict(&test)?;
        let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
        rmse(&means, &truth)
    };
    let rmse_weighted = predict_rmse(&weighted)?;
    let rmse_unweighted = predict_rmse(&unweighted)?;
    Ok(WeightingMetrics {
        rmse_weighted,
        rmse_unweighted,
        nrmse_weighted: rmse_weighted / range,
        nrmse_unweighted: rmse_unweighted / range,
    })
}

/// Replicated comparison of weighted against unweighted Matérn-5/2 fits
/// on the Branin benchmark. Replications run in parallel; each owns its
/// derived seed and the aggregation is index-ordered.
pub fn experiment_weighting(cfg: &StudyConfig) -> WeightingStudy {
    let rows: Vec<WeightingRow> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| WeightingRow {
            rep,
            seed: derive_seed(cfg.seed, rep as u64 * 8),
            outcome: weighting_rep(cfg, rep),
        })
        .collect();

    let mut successes = 0usize;
    let mut wins = 0usize;
    let mut sums = [0.0f64; 4];
    for row in &rows {
        if let Ok(m) = &row.outcome {
            successes += 1;
            if m.nrmse_weighted < m.nrmse_unweighted {
                wins += 1;
            }
            sums[0] += m.rmse_weighted;
            sums[1] += m.rmse_unweighted;
            sums[2] += m.nrmse_weighted;
            sums[3] += m.nrmse_unweighted;
        }
    }
    let denom = successes.max(1) as f64;
    WeightingStudy {
        rows,
        successes,
        weighted_wins: wins,
        mean_rmse_weighted: sums[0] / denom,
        mean_rmse_unweighted: sums[1] / denom,
        mean_nrmse_weighted: sums[2] / denom,
        mean_nrmse_unweighted: sums[3] / denom,
    }
}

/// Error and sensitivity record of one order-comparison replication.
#[derive(Debug, Clone)]
pub struct OrderMetrics {
    pub rmse: f64,
    /// `1 - g(1, θ)` per input, scalars first.
    pub sensitivity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OrderRow {
    pub order: usize,
    pub rep: usize,
    pub seed: u64,
    pub outcome: Result<OrderMetrics>,
}

#[derive(Debug, Clone)]
pub struct OrderSummary {
    pub order: usize,
    pub average_rmse: f64,
    pub sd_rmse: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct OrderStudy {
    pub rows: Vec<OrderRow>,
    pub summaries: Vec<OrderSummary>,
}

fn order_rep(cfg: &StudyConfig, order: usize, rep: usize, test: &[RunPoint]) -> Result<OrderMetrics> {
    let base = derive_seed(cfg.seed, order as u64);
    let stream = |tag: u64| derive_seed(base, rep as u64 * 8 + tag);
    let basis = Arc::new(BSplineBasis::new(cfg.num_basis, order)?);
    let design = two_stage_design(cfg.n, 3, 3, &basis, cfg.q, &cfg.sa, stream(0))?;
    let runs = design.run_points();
    let y: Vec<f64> = runs.iter().map(g2).collect::<Result<_>>()?;
    let fit_cfg = FitConfig {
        multistart: cfg.starts,
        ..FitConfig::new(false, stream(1))
    };
    let model = fit(&runs, &y, KernelFamily::Matern52, &fit_cfg)?;
    let truth: Vec<f64> = test.iter().map(g2).collect::<Result<_>>()?;
    let preds = model.predict(test)?;
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    Ok(OrderMetrics {
        rmse: rmse(&means, &truth)?,
        sensitivity: model.sensitivity(),
    })
}

/// Spline-order sweep: for each order, designs and unweighted Matérn-5/2
/// fits are replicated on the Branin benchmark and scored against a
/// per-order test set of `cfg.test_size` points.
pub fn experiment_order(cfg: &StudyConfig, orders: &[usize]) -> Result<OrderStudy> {
    // One fixed test set per order, shared by its replications.
    let mut tests = Vec::with_capacity(orders.len());
    for &order in orders {
        let basis = Arc::new(BSplineBasis::new(cfg.num_basis, order)?);
        let seed = derive_seed(derive_seed(cfg.seed, order as u64), 0xBEEF);
        tests.push(random_test_points(cfg.test_size, &basis, seed)?);
    }

    let jobs: Vec<(usize, usize)> = (0..orders.len())
        .flat_map(|idx| (0..cfg.reps).map(move |rep| (idx, rep)))
        .collect();

    let rows: Vec<OrderRow> = jobs
        .into_par_iter()
        .map(|(idx, rep)| {
            let order = orders[idx];
            OrderRow {
                order,
                rep,
                seed: derive_seed(derive_seed(cfg.seed, order as u64), rep as u64 * 8),
                outcome: order_rep(cfg, order, rep, &tests[idx]),
            }
        })
        .collect();

    let summaries = orders
        .iter()
        .map(|&order| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.order == order)
                .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.rmse))
                .collect();
            let failures = cfg.reps - values.len();
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (values.len() - 1) as f64
            } else {
                0.0
            };
            OrderSummary {
                order,
                average_rmse: mean,
                sd_rmse: var.sqrt(),
                failures,
            }
        })
        .collect();

    Ok(OrderStudy { rows, summaries })
}

/// Side-by-side view of the unconstrained maximin pathology against the
/// Latin-hypercube-constrained candidate construction.
#[derive(Debug, Clone)]
pub struct Remark1Study {
    pub free: Design,
    pub constrained: Vec<FunctionalCurve>,
    /// Fraction of coefficients within `tolerance` of 0 or 1.
    pub free_extreme_fraction: f64,
    pub constrained_extreme_fraction: f64,
    pub tolerance: f64,
}

/// Optimize the same instance with and without the Latin hypercube
/// restriction on the coefficients. Unconstrained maximin drives the
/// curves to the extremes of the band; the constrained set keeps its
/// equispaced levels.
pub fn experiment_remark1(
    n: usize,
    d_s: usize,
    d_f: usize,
    num_basis: usize,
    order: usize,
    q: f64,
    sa: &SaConfig,
    seed: u64,
) -> Result<Remark1Study> {
    let tolerance = 0.05;
    let basis = Arc::new(BSplineBasis::new(num_basis, order)?);
    let free = free_maximin_demo(n, d_s, d_f, &basis, q, sa, derive_seed(seed, 1))?;
    let constrained = candidate_set(n, &basis, q, sa, derive_seed(seed, 2))?;
    let free_extreme_fraction = free.coefficient_extremeness(tolerance);
    let total = constrained.len() * num_basis;
    let extreme = constrained
        .iter()
        .flat_map(|c| c.coeffs())
        .filter(|&&v| v <= tolerance || v >= 1.0 - tolerance)
        .count();
    Ok(Remark1Study {
        free,
        constrained,
        free_extreme_fraction,
        constrained_extreme_fraction: extreme as f64 / total as f64,
        tolerance,
    })
}
