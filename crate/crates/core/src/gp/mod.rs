//! Gaussian-process surrogate over mixed scalar/functional inputs.
//!
//! The correlation between two runs is an anisotropic tensor product of
//! one-dimensional kernels, each evaluated on that input's distance:
//! |Δx| for scalars, the (optionally beta-weighted) L2 distance for
//! functional inputs. Parameters are estimated by concentrated maximum
//! likelihood — μ and σ² have closed forms given the ranges θ and the
//! weighting parameters ω — with log-uniform multistart followed by a
//! bounded Nelder–Mead refinement.

mod kernel;
mod simplex;

pub use kernel::{kernel_eval, KernelFamily};
pub use simplex::{SimplexOptions, SimplexResult};

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::bspline::BSplineBasis;
use crate::error::{Error, Result};
use crate::metric::{beta_weights_unchecked, combined_dist, RunPoint};

/// Fitted (or candidate) parameters of the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct GpParams {
    /// Constant trend.
    pub mu: f64,
    /// Process variance.
    pub sigma2: f64,
    /// Ranges for the scalar inputs.
    pub theta_s: Vec<f64>,
    /// Ranges for the functional inputs.
    pub theta_f: Vec<f64>,
    /// Beta weighting parameters per functional input; present iff the
    /// model was fitted with weighting enabled.
    pub omega: Option<Vec<(f64, f64)>>,
    /// Relative diagonal jitter actually used for the factorization.
    pub nugget: f64,
}

impl GpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "process variance must be nonnegative, got {}",
                self.sigma2
            )));
        }
        if self
            .theta_s
            .iter()
            .chain(&self.theta_f)
            .any(|t| !(t > &0.0) || !t.is_finite())
        {
            return Err(Error::InvalidParameter(
                "all range parameters must be positive".into(),
            ));
        }
        if let Some(omega) = &self.omega {
            if omega.len() != self.theta_f.len() {
                return Err(Error::DimensionMismatch(
                    "one ω pair per functional input is required".into(),
                ));
            }
            if omega.iter().any(|(a, b)| !(*a > 0.0) || !(*b > 0.0)) {
                return Err(Error::InvalidParameter(
                    "beta weighting parameters must be positive".into(),
                ));
            }
        }
        if !(self.nugget >= 0.0) {
            return Err(Error::InvalidParameter("nugget must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Everything `fit` needs besides the data.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Estimate per-input beta weighting parameters.
    pub weighting: bool,
    /// Random starting points screened before the local search.
    pub multistart: usize,
    pub seed: u64,
    /// Initial relative jitter; escalated tenfold up to 1e-4 when a
    /// factorization fails.
    pub nugget: f64,
    /// Local-search budget and relative stopping tolerance.
    pub max_evals: usize,
    pub ftol_rel: f64,
    /// Range bounds: [theta_lower, theta_upper_factor × max pairwise
    /// distance of that input].
    pub theta_lower: f64,
    pub theta_upper_factor: f64,
    /// Box for each beta weighting parameter.
    pub omega_lower: f64,
    pub omega_upper: f64,
    /// Additional deterministic starting points, screened alongside the
    /// random ones (e.g. an unweighted optimum mapped into the weighted
    /// parameterization).
    pub warm_starts: Vec<GpParams>,
}

impl FitConfig {
    pub fn new(weighting: bool, seed: u64) -> Self {
        FitConfig {
            weighting,
            multistart: 50,
            seed,
            nugget: 1e-8,
            max_evals: 500,
            ftol_rel: 1e-8,
            theta_lower: 1e-3,
            theta_upper_factor: 10.0,
            omega_lower: 0.05,
            omega_upper: 50.0,
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    /// Concentrated log-likelihood at the optimum.
    pub log_likelihood: f64,
    /// Starting points screened.
    pub starts: usize,
    /// Objective evaluations spent in the local search.
    pub evaluations: usize,
}

/// Mean and variance of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Weight profile of one functional input in a weighted model.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub omega: (f64, f64),
    /// Diagonal of W(ω): one weight per basis function.
    pub weights: Vec<f64>,
    /// Grid locations and the spline through the weights at them.
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Correlation machinery
// ---------------------------------------------------------------------------

fn check_conformable_to_params(point: &RunPoint, params: &GpParams) -> Result<()> {
    if point.num_scalars() != params.theta_s.len() || point.num_functionals() != params.theta_f.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "point with ({}, {}) inputs against parameters for ({}, {})",
            point.num_scalars(),
            point.num_functionals(),
            params.theta_s.len(),
            params.theta_f.len()
        )));
    }
    Ok(())
}

fn weight_diags(params: &GpParams, point: &RunPoint) -> Vec<Option<Vec<f64>>> {
    match &params.omega {
        None => vec![None; point.num_functionals()],
        Some(omega) => omega
            .iter()
            .zip(point.curves())
            .map(|(&(a, b), curve)| {
                Some(
                    beta_weights_unchecked(a, b, curve.basis().peaks())
                        .diag()
                        .to_vec(),
                )
            })
            .collect(),
    }
}

fn correlation_value(
    a: &RunPoint,
    b: &RunPoint,
    kernel: KernelFamily,
    theta_s: &[f64],
    theta_f: &[f64],
    wdiags: &[Option<Vec<f64>>],
) -> f64 {
    let mut c = 1.0;
    for (idx, (x, y)) in a.scalars().iter().zip(b.scalars()).enumerate() {
        c *= kernel.eval((x - y).abs(), theta_s[idx]);
    }
    for (idx, (f, g)) in a.curves().iter().zip(b.curves()).enumerate() {
        let dist_sq = match &wdiags[idx] {
            Some(w) => f.basis().weighted_l2_dist_sq(f.coeffs(), g.coeffs(), w),
            None => f.basis().l2_dist_sq(f.coeffs(), g.coeffs()),
        };
        c *= kernel.eval(dist_sq.sqrt(), theta_f[idx]);
    }
    c
}

/// Tensor-product correlation between two runs under the given
/// parameters: the product over all scalar inputs of g(|Δx|, θ) times the
/// product over all functional inputs of g(D, θ), where D is the plain or
/// beta-weighted functional distance depending on `params.omega`.
pub fn correlation(
    a: &RunPoint,
    b: &RunPoint,
    params: &GpParams,
    kernel: KernelFamily,
) -> Result<f64> {
    a.check_conformable(b)?;
    check_conformable_to_params(a, params)?;
    params.validate()?;
    let wdiags = weight_diags(params, a);
    Ok(correlation_value(
        a,
        b,
        kernel,
        &params.theta_s,
        &params.theta_f,
        &wdiags,
    ))
}

/// Pairwise input distances cached once per fit so each likelihood
/// evaluation only re-applies kernels (and, when weighting, reweights the
/// stored coefficient differences).
struct PairCache {
    n: usize,
    d_s: usize,
    d_f: usize,
    scalar_abs: Vec<Vec<f64>>,
    func_dist: Vec<Vec<f64>>,
    func_delta: Vec<Vec<Vec<f64>>>,
    bases: Vec<Arc<BSplineBasis>>,
}

#[inline]
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl PairCache {
    fn new(data: &[RunPoint], weighting: bool) -> Self {
        let n = data.len();
        let d_s = data[0].num_scalars();
        let d_f = data[0].num_functionals();
        let npairs = n * (n - 1) / 2;
        let mut scalar_abs = vec![vec![0.0; npairs]; d_s];
        let mut func_dist = vec![vec![0.0; npairs]; d_f];
        let mut func_delta = if weighting {
            vec![vec![Vec::new(); npairs]; d_f]
        } else {
            Vec::new()
        };
        for i in 0..n {
            for j in (i + 1)..n {
                let p = pair_index(n, i, j);
                for (s, cache) in scalar_abs.iter_mut().enumerate() {
                    cache[p] = (data[i].scalars()[s] - data[j].scalars()[s]).abs();
                }
                for f in 0..d_f {
                    let ci = data[i].curves()[f].coeffs();
                    let cj = data[j].curves()[f].coeffs();
                    let basis = data[i].curves()[f].basis();
                    func_dist[f][p] = basis.l2_dist_sq(ci, cj).sqrt();
                    if weighting {
                        func_delta[f][p] = ci.iter().zip(cj).map(|(a, b)| a - b).collect();
                    }
                }
            }
        }
        let bases = data[0].curves().iter().map(|c| c.basis().clone()).collect();
        PairCache {
            n,
            d_s,
            d_f,
            scalar_abs,
            func_dist,
            func_delta,
            bases,
        }
    }

    /// Correlation matrix with unit diagonal (jitter is added later).
    fn correlation_matrix(
        &self,
        kernel: KernelFamily,
        theta_s: &[f64],
        theta_f: &[f64],
        wdiags: Option<&[Vec<f64>]>,
    ) -> DMatrix<f64> {
        let n = self.n;
        let mut r = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let p = pair_index(n, i, j);
                let mut c = 1.0;
                for s in 0..self.d_s {
                    c *= kernel.eval(self.scalar_abs[s][p], theta_s[s]);
                }
                for f in 0..self.d_f {
                    let h = match wdiags {
                        Some(ws) => self.bases[f]
                            .weighted_norm_sq(&self.func_delta[f][p], &ws[f])
                            .sqrt(),
                        None => self.func_dist[f][p],
                    };
                    c *= kernel.eval(h, theta_f[f]);
                }
                r[(i, j)] = c;
                r[(j, i)] = c;
            }
        }
        r
    }

    fn max_scalar_dist(&self, s: usize) -> f64 {
        self.scalar_abs[s].iter().cloned().fold(0.0, f64::max)
    }

    fn max_func_dist(&self, f: usize) -> f64 {
        self.func_dist[f].iter().cloned().fold(0.0, f64::max)
    }
}

fn cholesky_with_jitter(
    r: &DMatrix<f64>,
    nugget0: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = nugget0.max(1e-12);
    loop {
        let mut m = r.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        if jitter >= 1e-4 {
            return Err(Error::IllConditioned(format!(
                "correlation matrix not factorizable even with jitter {jitter}"
            )));
        }
        jitter = (jitter * 10.0).min(1e-4);
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.ln())
        .sum()
}

struct ConcentratedEval {
    ll: f64,
    mu: f64,
    sigma2: f64,
    nugget: f64,
}

/// Concentrated log-likelihood: given the ranges (and ω), μ̂ and σ̂² are
/// closed-form and the profile likelihood is returned.
fn concentrated_ll(
    cache: &PairCache,
    y: &DVector<f64>,
    kernel: KernelFamily,
    theta_s: &[f64],
    theta_f: &[f64],
    omega: Option<&[(f64, f64)]>,
    nugget0: f64,
) -> Result<ConcentratedEval> {
    let wdiags: Option<Vec<Vec<f64>>> = omega.map(|pairs| {
        pairs
            .iter()
            .zip(&cache.bases)
            .map(|(&(a, b), basis)| beta_weights_unchecked(a, b, basis.peaks()).diag().to_vec())
            .collect()
    });
    let r = cache.correlation_matrix(kernel, theta_s, theta_f, wdiags.as_deref());
    let (chol, nugget) = cholesky_with_jitter(&r, nugget0)?;
    let n = cache.n;
    let ones = DVector::from_element(n, 1.0);
    let rinv_y = chol.solve(y);
    let rinv_1 = chol.solve(&ones);
    let denom = ones.dot(&rinv_1);
    let mu = ones.dot(&rinv_y) / denom;
    let rinv_resid = &rinv_y - mu * &rinv_1;
    let resid = y - mu * &ones;
    let sigma2 = (resid.dot(&rinv_resid) / n as f64).max(f64::MIN_POSITIVE);
    let ll = -0.5
        * (n as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + log_det(&chol));
    Ok(ConcentratedEval {
        ll,
        mu,
        sigma2,
        nugget,
    })
}

/// Gaussian log-likelihood of `y` under N(μ1, σ²(R + nugget·I)) at fully
/// specified parameters.
pub fn log_likelihood(
    data: &[RunPoint],
    y: &[f64],
    kernel: KernelFamily,
    params: &GpParams,
) -> Result<f64> {
    validate_data(data, y)?;
    check_conformable_to_params(&data[0], params)?;
    params.validate()?;
    let n = data.len();
    let wdiags = weight_diags(params, &data[0]);
    let mut r = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = correlation_value(
                &data[i],
                &data[j],
                kernel,
                &params.theta_s,
                &params.theta_f,
                &wdiags,
            );
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    let (chol, _) = cholesky_with_jitter(&r, params.nugget)?;
    let yv = DVector::from_column_slice(y);
    let ones = DVector::from_element(n, 1.0);
    let resid = &yv - params.mu * &ones;
    let rinv_resid = chol.solve(&resid);
    let quad = resid.dot(&rinv_resid);
    Ok(-0.5
        * (n as f64 * (2.0 * std::f64::consts::PI * params.sigma2).ln()
            + log_det(&chol)
            + quad / params.sigma2))
}

fn validate_data(data: &[RunPoint], y: &[f64]) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InvalidParameter(
            "a model needs at least two runs".into(),
        ));
    }
    if data.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} runs against {} outputs",
            data.len(),
            y.len()
        )));
    }
    for p in &data[1..] {
        data[0].check_conformable(p)?;
    }
    Ok(())
}

fn check_distinct(data: &[RunPoint]) -> Result<()> {
    for i in 0..data.len() {
        for j in (i + 1)..data.len() {
            if combined_dist(&data[i], &data[j])? == 0.0 {
                return Err(Error::DegenerateDesign(format!(
                    "runs {i} and {j} coincide"
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct ParamSpace {
    d_s: usize,
    d_f: usize,
    weighting: bool,
    lo: Vec<f64>, // bounds in log space
    hi: Vec<f64>,
}

impl ParamSpace {
    fn new(cache: &PairCache, cfg: &FitConfig) -> Self {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        // Upper bounds scale with each input's own maximum pairwise
        // distance; for weighted fits the unweighted distance is used so
        // the box does not depend on ω.
        for s in 0..cache.d_s {
            let ub = (cfg.theta_upper_factor * cache.max_scalar_dist(s)).max(2.0 * cfg.theta_lower);
            lo.push(cfg.theta_lower.ln());
            hi.push(ub.ln());
        }
        for f in 0..cache.d_f {
            let ub = (cfg.theta_upper_factor * cache.max_func_dist(f)).max(2.0 * cfg.theta_lower);
            lo.push(cfg.theta_lower.ln());
            hi.push(ub.ln());
        }
        if cfg.weighting {
            for _ in 0..2 * cache.d_f {
                lo.push(cfg.omega_lower.ln());
                hi.push(cfg.omega_upper.ln());
            }
        }
        ParamSpace {
            d_s: cache.d_s,
            d_f: cache.d_f,
            weighting: cfg.weighting,
            lo,
            hi,
        }
    }

    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn unpack(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, Option<Vec<(f64, f64)>>) {
        let theta_s: Vec<f64> = z[..self.d_s].iter().map(|v| v.exp()).collect();
        let theta_f: Vec<f64> = z[self.d_s..self.d_s + self.d_f]
            .iter()
            .map(|v| v.exp())
            .collect();
        let omega = if self.weighting {
            let base = self.d_s + self.d_f;
            Some(
                (0..self.d_f)
                    .map(|f| (z[base + 2 * f].exp(), z[base + 2 * f + 1].exp()))
                    .collect(),
            )
        } else {
            None
        };
        (theta_s, theta_f, omega)
    }

    fn pack(&self, params: &GpParams) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        z.extend(params.theta_s.iter().map(|t| t.ln()));
        z.extend(params.theta_f.iter().map(|t| t.ln()));
        if self.weighting {
            if let Some(omega) = &params.omega {
                for &(a, b) in omega {
                    z.push(a.ln());
                    z.push(b.ln());
                }
            } else {
                // Map an unweighted start onto uniform weights.
                z.extend(std::iter::repeat_n(0.0, 2 * self.d_f));
            }
        }
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
        z
    }
}

/// Fit the surrogate by concentrated maximum likelihood.
///
/// `cfg.multistart` log-uniform parameter vectors (plus any warm starts)
/// are screened; the best seeds a bounded Nelder–Mead refinement. The
/// whole procedure is deterministic given the seed.
pub fn fit(
    data: &[RunPoint],
    y: &[f64],
    kernel: KernelFamily,
    cfg: &FitConfig,
) -> Result<GpModel> {
    validate_data(data, y)?;
    check_distinct(data)?;
    if cfg.multistart == 0 && cfg.warm_starts.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one starting point is required".into(),
        ));
    }
    let cache = PairCache::new(data, cfg.weighting);
    let space = ParamSpace::new(&cache, cfg);
    let yv = DVector::from_column_slice(y);

    let objective = |z: &[f64]| -> f64 {
        let (theta_s, theta_f, omega) = space.unpack(z);
        match concentrated_ll(
            &cache,
            &yv,
            kernel,
            &theta_s,
            &theta_f,
            omega.as_deref(),
            cfg.nugget,
        ) {
            Ok(eval) if eval.ll.is_finite() => -eval.ll,
            _ => f64::INFINITY,
        }
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts: Vec<Vec<f64>> = (0..cfg.multistart)
        .map(|_| {
            (0..space.dim())
                .map(|d| space.lo[d] + (space.hi[d] - space.lo[d]) * rng.random::<f64>())
                .collect()
        })
        .collect();
    for warm in &cfg.warm_starts {
        starts.push(space.pack(warm));
    }

    let scores: Vec<f64> = starts.par_iter().map(|z| objective(z)).collect();
    let best_start = scores
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| {
            Error::IllConditioned("no starting point produced a factorizable model".into())
        })?;

    let step: Vec<f64> = (0..space.dim())
        .map(|d| (0.1 * (space.hi[d] - space.lo[d])).max(1e-3))
        .collect();
    let result = simplex::minimize(
        objective,
        &starts[best_start],
        &step,
        &space.lo,
        &space.hi,
        &SimplexOptions {
            max_evals: cfg.max_evals,
            ftol_rel: cfg.ftol_rel,
        },
    );

    let z_opt = if result.value <= scores[best_start] {
        result.x
    } else {
        starts[best_start].clone()
    };
    let (theta_s, theta_f, omega) = space.unpack(&z_opt);
    let eval = concentrated_ll(
        &cache,
        &yv,
        kernel,
        &theta_s,
        &theta_f,
        omega.as_deref(),
        cfg.nugget,
    )?;
    let params = GpParams {
        mu: eval.mu,
        sigma2: eval.sigma2,
        theta_s,
        theta_f,
        omega,
        nugget: eval.nugget,
    };
    let diagnostics = FitDiagnostics {
        log_likelihood: eval.ll,
        starts: starts.len(),
        evaluations: result.evaluations,
    };
    GpModel::assemble(data.to_vec(), yv, kernel, params, diagnostics)
}

// ---------------------------------------------------------------------------
// The fitted model
// ---------------------------------------------------------------------------

/// A fitted surrogate: parameters, training data and the factorized
/// correlation matrix. Immutable and shareable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelFamily,
    params: GpParams,
    train: Vec<RunPoint>,
    y: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    wdiags: Vec<Option<Vec<f64>>>,
    diagnostics: FitDiagnostics,
}

impl GpModel {
    /// Rebuild a model from stored parameters (model files, tests). The
    /// trend and variance are taken as given, not re-estimated.
    pub fn from_params(
        data: Vec<RunPoint>,
        y: Vec<f64>,
        kernel: KernelFamily,
        params: GpParams,
    ) -> Result<Self> {
        validate_data(&data, &y)?;
        check_conformable_to_params(&data[0], &params)?;
        params.validate()?;
        let yv = DVector::from_column_slice(&y);
        let diagnostics = FitDiagnostics {
            log_likelihood: log_likelihood(&data, &y, kernel, &params)?,
            starts: 0,
            evaluations: 0,
        };
        GpModel::assemble(data, yv, kernel, params, diagnostics)
    }

    fn assemble(
        train: Vec<RunPoint>,
        y: DVector<f64>,
        kernel: KernelFamily,
        params: GpParams,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        let n = train.len();
        let wdiags = weight_diags(&params, &train[0]);
        let mut r = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let c = correlation_value(
                    &train[i],
                    &train[j],
                    kernel,
                    &params.theta_s,
                    &params.theta_f,
                    &wdiags,
                );
                r[(i, j)] = c;
                r[(j, i)] = c;
            }
        }
        let (chol, nugget) = cholesky_with_jitter(&r, params.nugget)?;
        let ones = DVector::from_element(n, 1.0);
        let alpha = chol.solve(&(&y - params.mu * &ones));
        let params = GpParams { nugget, ..params };
        Ok(GpModel {
            kernel,
            params,
            train,
            y,
            chol,
            alpha,
            wdiags,
            diagnostics,
        })
    }

    pub fn kernel(&self) -> KernelFamily {
        self.kernel
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    pub fn train_points(&self) -> &[RunPoint] {
        &self.train
    }

    pub fn train_outputs(&self) -> Vec<f64> {
        self.y.iter().cloned().collect()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn num_runs(&self) -> usize {
        self.train.len()
    }

    pub fn is_weighted(&self) -> bool {
        self.params.omega.is_some()
    }

    /// Training correlation matrix without jitter, rebuilt on demand.
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let n = self.train.len();
        let mut r = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let c = correlation_value(
                    &self.train[i],
                    &self.train[j],
                    self.kernel,
                    &self.params.theta_s,
                    &self.params.theta_f,
                    &self.wdiags,
                );
                r[(i, j)] = c;
                r[(j, i)] = c;
            }
        }
        r
    }

    fn cross_correlations(&self, point: &RunPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.train.len(),
            self.train.iter().map(|t| {
                correlation_value(
                    point,
                    t,
                    self.kernel,
                    &self.params.theta_s,
                    &self.params.theta_f,
                    &self.wdiags,
                )
            }),
        )
    }

    /// Kriging prediction with plug-in trend: mean `μ̂ + r'R̃⁻¹(y - μ̂1)`
    /// and variance `σ̂²(1 + nugget - r'R̃⁻¹r)`, clamped at zero.
    pub fn predict(&self, points: &[RunPoint]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(points.len());
        for point in points {
            point.check_conformable(&self.train[0])?;
            let r = self.cross_correlations(point);
            let rinv_r = self.chol.solve(&r);
            let mean = self.params.mu + r.dot(&self.alpha);
            let variance =
                (self.params.sigma2 * (1.0 + self.params.nugget - r.dot(&rinv_r))).max(0.0);
            out.push(Prediction { mean, variance });
        }
        Ok(out)
    }

    /// Leave-one-out predictions with frozen parameters, via the
    /// closed-form identity `ŷ_{-i} = y_i - [R̃⁻¹(y-μ1)]_i / [R̃⁻¹]_ii`;
    /// equal to literally refitting nothing and holding each point out.
    pub fn loo(&self) -> Result<Vec<Prediction>> {
        let n = self.train.len();
        if n < 3 {
            return Err(Error::InvalidParameter(
                "leave-one-out needs at least three runs".into(),
            ));
        }
        let rinv = self.chol.inverse();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let dii = rinv[(i, i)];
            out.push(Prediction {
                mean: self.y[i] - self.alpha[i] / dii,
                variance: (self.params.sigma2 / dii).max(0.0),
            });
        }
        Ok(out)
    }

    /// Importance score `1 - g(1, θ_k)` per input, scalars first then
    /// functional inputs; larger values mean faster correlation decay and
    /// hence a more influential input.
    pub fn sensitivity(&self) -> Vec<f64> {
        self.params
            .theta_s
            .iter()
            .chain(&self.params.theta_f)
            .map(|&theta| 1.0 - self.kernel.eval(1.0, theta))
            .collect()
    }

    /// Spline through the fitted weights of one functional input,
    /// sampled on a uniform grid, together with the raw (ω, W diagonal).
    pub fn weight_profile(&self, input: usize, grid: usize) -> Result<WeightProfile> {
        let omega = self.params.omega.as_ref().ok_or_else(|| {
            Error::InvalidParameter("weight profile requires a weighting-enabled model".into())
        })?;
        if input >= self.params.theta_f.len() {
            return Err(Error::InvalidParameter(format!(
                "functional input {input} out of range for {}",
                self.params.theta_f.len()
            )));
        }
        if grid < 2 {
            return Err(Error::InvalidParameter(
                "weight profile grid needs at least two points".into(),
            ));
        }
        let basis = self.train[0].curves()[input].basis();
        let weights = self.wdiags[input]
            .clone()
            .expect("weighted model carries weight diagonals");
        let ts: Vec<f64> = (0..grid)
            .map(|g| g as f64 / (grid - 1) as f64)
            .collect();
        let values = ts
            .iter()
            .map(|&t| {
                basis
                    .eval_all(t)
                    .map(|b| b.iter().zip(&weights).map(|(v, w)| v * w).sum())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(WeightProfile {
            omega: omega[input],
            weights,
            ts,
            values,
        })
    }
}

#[cfg(test)]
mod tests;
