//! Two-stage space-filling design construction.
//!
//! Stage one builds a candidate set of curves per functional input: the
//! basis coefficients start as a K-dimensional Latin hypercube over the
//! runs and are improved by simulated annealing on the Morris–Mitchell
//! Φ_q criterion of pairwise L2 distances. Stage two aligns the candidate
//! sets with a scalar Latin hypercube by annealing over per-column row
//! permutations of the combined-distance criterion Φ_q^c.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bspline::{BSplineBasis, FunctionalCurve};
use crate::error::{Error, Result};
use crate::metric::{combined_dist, RunPoint};

/// Simulated-annealing schedule. The default follows the usual
/// Morris–Mitchell setup: geometric cooling with the initial temperature
/// calibrated from the spread of random-move deltas.
#[derive(Debug, Clone)]
pub struct SaConfig {
    /// Starting temperature; `None` calibrates it as the mean |ΔΦ| over
    /// 100 random moves from the initial state.
    pub initial_temp: Option<f64>,
    /// Geometric cooling factor in (0,1).
    pub cooling: f64,
    /// Proposals evaluated at each temperature.
    pub moves_per_temp: usize,
    /// Hard cap on temperature steps.
    pub max_temps: usize,
    /// Stop after this many consecutive temperature steps without a new
    /// best.
    pub patience: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            initial_temp: None,
            cooling: 0.95,
            moves_per_temp: 100,
            max_temps: 200,
            patience: 20,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cooling factor must be in (0,1), got {}",
                self.cooling
            )));
        }
        if self.moves_per_temp == 0 || self.max_temps == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter(
                "annealing iteration counts must be positive".into(),
            ));
        }
        if let Some(t) = self.initial_temp {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "initial temperature must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Metadata recorded with a finished design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMeta {
    pub q: f64,
    pub seed: u64,
    pub num_basis: usize,
    pub order: usize,
}

/// A design of `n` runs over `d_s` scalar and `d_f` functional inputs,
/// together with the criterion value it was optimized to.
#[derive(Debug, Clone)]
pub struct Design {
    scalars: Vec<Vec<f64>>,                 // n rows × d_s
    functionals: Vec<Vec<FunctionalCurve>>, // d_f columns × n curves
    criterion: f64,
    meta: DesignMeta,
}

impl Design {
    pub fn new(
        scalars: Vec<Vec<f64>>,
        functionals: Vec<Vec<FunctionalCurve>>,
        criterion: f64,
        meta: DesignMeta,
    ) -> Result<Self> {
        let n = if scalars.is_empty() {
            functionals.first().map_or(0, Vec::len)
        } else {
            scalars.len()
        };
        if n < 2 {
            return Err(Error::InvalidParameter(
                "a design needs at least two runs".into(),
            ));
        }
        let d_s = scalars.first().map_or(0, Vec::len);
        if scalars.iter().any(|row| row.len() != d_s) {
            return Err(Error::DimensionMismatch(
                "ragged scalar matrix in design".into(),
            ));
        }
        for (idx, column) in functionals.iter().enumerate() {
            if column.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "functional input {idx} has {} curves for {} runs",
                    column.len(),
                    n
                )));
            }
            if column.windows(2).any(|w| !w[0].same_basis(&w[1])) {
                return Err(Error::BasisMismatch(format!(
                    "functional input {idx} mixes bases across runs"
                )));
            }
        }
        Ok(Design {
            scalars,
            functionals,
            criterion,
            meta,
        })
    }

    pub fn num_runs(&self) -> usize {
        if self.scalars.is_empty() {
            self.functionals.first().map_or(0, Vec::len)
        } else {
            self.scalars.len()
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.first().map_or(0, Vec::len)
    }

    pub fn num_functionals(&self) -> usize {
        self.functionals.len()
    }

    pub fn scalars(&self) -> &[Vec<f64>] {
        &self.scalars
    }

    pub fn functionals(&self) -> &[Vec<FunctionalCurve>] {
        &self.functionals
    }

    pub fn criterion(&self) -> f64 {
        self.criterion
    }

    pub fn meta(&self) -> &DesignMeta {
        &self.meta
    }

    /// Assemble run `i` as a [`RunPoint`].
    pub fn run_point(&self, i: usize) -> RunPoint {
        let scalars = self.scalars.get(i).cloned().unwrap_or_default();
        let curves = self.functionals.iter().map(|col| col[i].clone()).collect();
        RunPoint::new(scalars, curves).expect("design rows are validated on construction")
    }

    /// All runs as [`RunPoint`]s.
    pub fn run_points(&self) -> Vec<RunPoint> {
        (0..self.num_runs()).map(|i| self.run_point(i)).collect()
    }

    /// Fraction of all functional coefficients within `tol` of 0 or 1.
    pub fn coefficient_extremeness(&self, tol: f64) -> f64 {
        let mut total = 0usize;
        let mut extreme = 0usize;
        for column in &self.functionals {
            for curve in column {
                for &c in curve.coeffs() {
                    total += 1;
                    if c <= tol || c >= 1.0 - tol {
                        extreme += 1;
                    }
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            extreme as f64 / total as f64
        }
    }
}

/// Latin hypercube sample: each column is an independent random
/// permutation of the `n` equispaced levels `{0, 1/(n-1), …, 1}`.
pub fn lhd(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "a Latin hypercube needs at least two runs, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidParameter(
            "a Latin hypercube needs at least one dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut rows = vec![vec![0.0; d]; n];
    for col in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (row, &p) in perm.iter().enumerate() {
            rows[row][col] = levels[p];
        }
    }
    Ok(rows)
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "criterion exponent q must be at least 1, got {q}"
        )));
    }
    Ok(())
}

/// Φ from a symmetric matrix of squared pairwise distances. The minimum
/// distance is factored out so large exponents stay in range; returns
/// infinity for degenerate (zero-distance) configurations.
fn phi_from_sq_matrix(sq: &DMatrix<f64>, q: f64) -> f64 {
    let n = sq.nrows();
    let mut min_sq = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_sq = min_sq.min(sq[(i, j)]);
        }
    }
    if !(min_sq > 0.0) {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += (min_sq / sq[(i, j)]).powf(0.5 * q);
        }
    }
    sum.powf(1.0 / q) / min_sq.sqrt()
}

/// Morris–Mitchell criterion `Φ_q = (Σ_{i<j} D_f(i,j)^{-q})^{1/q}` over a
/// candidate set of curves; lower is better.
pub fn phi_q(curves: &[FunctionalCurve], q: f64) -> Result<f64> {
    check_q(q)?;
    if curves.len() < 2 {
        return Err(Error::InvalidParameter(
            "Φ_q needs at least two curves".into(),
        ));
    }
    if curves.windows(2).any(|w| !w[0].same_basis(&w[1])) {
        return Err(Error::BasisMismatch(
            "candidate curves use different bases".into(),
        ));
    }
    let n = curves.len();
    let basis = curves[0].basis();
    let mut sq = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = basis.l2_dist_sq(curves[i].coeffs(), curves[j].coeffs());
            sq[(i, j)] = d;
            sq[(j, i)] = d;
        }
    }
    let phi = phi_from_sq_matrix(&sq, q);
    if phi.is_finite() {
        Ok(phi)
    } else {
        Err(Error::DegenerateDesign(
            "candidate set contains coincident curves".into(),
        ))
    }
}

/// Φ_q^c: the same aggregate computed on combined scalar-plus-functional
/// distances over full runs.
pub fn phi_qc(design: &Design, q: f64) -> Result<f64> {
    check_q(q)?;
    let points = design.run_points();
    let n = points.len();
    let mut sq = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = combined_dist(&points[i], &points[j])?;
            sq[(i, j)] = d * d;
            sq[(j, i)] = d * d;
        }
    }
    let phi = phi_from_sq_matrix(&sq, q);
    if phi.is_finite() {
        Ok(phi)
    } else {
        Err(Error::DegenerateDesign(
            "design contains coincident runs".into(),
        ))
    }
}

/// One annealing problem: proposals mutate the state in place and report
/// the new criterion; rejected proposals are reverted; strictly improving
/// states are snapshotted.
trait AnnealState {
    fn propose(&mut self, rng: &mut ChaCha8Rng) -> f64;
    fn revert(&mut self);
    fn save_best(&mut self);
}

/// Mean |ΔΦ| over probe moves, used as the default initial temperature.
fn calibrate_temperature(deltas: &[f64]) -> f64 {
    let finite: Vec<f64> = deltas.iter().cloned().filter(|d| d.is_finite()).collect();
    if finite.is_empty() {
        return 1e-3;
    }
    let mean = finite.iter().map(|d| d.abs()).sum::<f64>() / finite.len() as f64;
    if mean > 0.0 {
        mean
    } else {
        1e-3
    }
}

/// Anneal `state` under the schedule in `cfg`, starting from criterion
/// `phi0`; returns the best criterion seen. Ties keep the incumbent.
fn anneal<S: AnnealState>(cfg: &SaConfig, rng: &mut ChaCha8Rng, phi0: f64, state: &mut S) -> f64 {
    let temp0 = cfg.initial_temp.unwrap_or_else(|| {
        // Probe moves are all reverted; they only calibrate the scale.
        let deltas: Vec<f64> = (0..100)
            .map(|_| {
                let phi_new = state.propose(rng);
                state.revert();
                phi_new - phi0
            })
            .collect();
        calibrate_temperature(&deltas)
    });

    let mut phi_current = phi0;
    let mut phi_best = phi0;
    state.save_best();
    let mut temp = temp0;
    let mut stale_temps = 0usize;
    for _ in 0..cfg.max_temps {
        let mut improved = false;
        for _ in 0..cfg.moves_per_temp {
            let phi_new = state.propose(rng);
            let delta = phi_new - phi_current;
            let accept =
                delta < 0.0 || (delta.is_finite() && rng.random::<f64>() < (-delta / temp).exp());
            if accept {
                phi_current = phi_new;
                if phi_current < phi_best {
                    phi_best = phi_current;
                    state.save_best();
                    improved = true;
                }
            } else {
                state.revert();
            }
        }
        temp *= cfg.cooling;
        if improved {
            stale_temps = 0;
        } else {
            stale_temps += 1;
            if stale_temps >= cfg.patience {
                break;
            }
        }
    }
    phi_best
}

fn pick_two(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

// ---------------------------------------------------------------------------
// Stage one
// ---------------------------------------------------------------------------

struct CandidateState<'a> {
    basis: &'a BSplineBasis,
    q: f64,
    coeffs: Vec<Vec<f64>>,
    sq: DMatrix<f64>,
    last: (usize, usize, usize),
    saved_i: Vec<f64>,
    saved_j: Vec<f64>,
    best: Vec<Vec<f64>>,
}

impl CandidateState<'_> {
    fn refresh_row(&mut self, row: usize) {
        let n = self.coeffs.len();
        for r in 0..n {
            if r != row {
                let d = self.basis.l2_dist_sq(&self.coeffs[row], &self.coeffs[r]);
                self.sq[(row, r)] = d;
                self.sq[(r, row)] = d;
            }
        }
    }

    fn restore_row(&mut self, row: usize, saved: &[f64]) {
        let n = self.coeffs.len();
        for r in 0..n {
            self.sq[(row, r)] = saved[r];
            self.sq[(r, row)] = saved[r];
        }
    }
}

impl AnnealState for CandidateState<'_> {
    fn propose(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.coeffs.len();
        let col = rng.random_range(0..self.basis.num_basis());
        let (i, j) = pick_two(rng, n);
        self.last = (col, i, j);
        for r in 0..n {
            self.saved_i[r] = self.sq[(i, r)];
            self.saved_j[r] = self.sq[(j, r)];
        }
        let tmp = self.coeffs[i][col];
        self.coeffs[i][col] = self.coeffs[j][col];
        self.coeffs[j][col] = tmp;
        self.refresh_row(i);
        self.refresh_row(j);
        phi_from_sq_matrix(&self.sq, self.q)
    }

    fn revert(&mut self) {
        let (col, i, j) = self.last;
        let tmp = self.coeffs[i][col];
        self.coeffs[i][col] = self.coeffs[j][col];
        self.coeffs[j][col] = tmp;
        let saved_i = std::mem::take(&mut self.saved_i);
        let saved_j = std::mem::take(&mut self.saved_j);
        self.restore_row(i, &saved_i);
        self.restore_row(j, &saved_j);
        self.saved_i = saved_i;
        self.saved_j = saved_j;
    }

    fn save_best(&mut self) {
        self.best = self.coeffs.clone();
    }
}

/// Stage one: a space-filling candidate set of `n` curves.
///
/// Coefficients start as an n-run Latin hypercube in [0,1]^K and are
/// improved by annealing with within-column level swaps, so every
/// coefficient column remains a permutation of the LHD levels. The best
/// configuration seen is returned; its Φ_q never exceeds the initial one.
pub fn candidate_set(
    n: usize,
    basis: &Arc<BSplineBasis>,
    q: f64,
    sa: &SaConfig,
    seed: u64,
) -> Result<Vec<FunctionalCurve>> {
    check_q(q)?;
    sa.validate()?;
    let k = basis.num_basis();
    let coeffs = lhd(n, k, derive_seed(seed, 0x11))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x12));

    let mut sq = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = basis.l2_dist_sq(&coeffs[i], &coeffs[j]);
            sq[(i, j)] = d;
            sq[(j, i)] = d;
        }
    }
    let phi0 = phi_from_sq_matrix(&sq, q);
    if !phi0.is_finite() {
        return Err(Error::DegenerateDesign(
            "initial Latin hypercube produced coincident curves".into(),
        ));
    }

    let mut state = CandidateState {
        basis,
        q,
        best: coeffs.clone(),
        coeffs,
        sq,
        last: (0, 0, 0),
        saved_i: vec![0.0; n],
        saved_j: vec![0.0; n],
    };
    anneal(sa, &mut rng, phi0, &mut state);

    state
        .best
        .into_iter()
        .map(|row| FunctionalCurve::new(basis.clone(), row))
        .collect()
}

// ---------------------------------------------------------------------------
// Stage two
// ---------------------------------------------------------------------------

struct AssembleState {
    d_s: usize,
    q: f64,
    scols: Vec<Vec<f64>>,
    fperms: Vec<Vec<usize>>,
    fdists: Vec<DMatrix<f64>>,
    sq: DMatrix<f64>,
    last: (usize, usize, usize),
    saved_i: Vec<f64>,
    saved_j: Vec<f64>,
    best: (Vec<Vec<f64>>, Vec<Vec<usize>>),
}

impl AssembleState {
    fn n(&self) -> usize {
        self.sq.nrows()
    }

    fn combined_sq(&self, i: usize, j: usize) -> f64 {
        let mut sum = 0.0;
        for col in &self.scols {
            let d = col[i] - col[j];
            sum += d * d;
        }
        for (perm, dists) in self.fperms.iter().zip(&self.fdists) {
            sum += dists[(perm[i], perm[j])];
        }
        sum
    }

    fn refresh_row(&mut self, row: usize) {
        for r in 0..self.n() {
            if r != row {
                let d = self.combined_sq(row, r);
                self.sq[(row, r)] = d;
                self.sq[(r, row)] = d;
            }
        }
    }

    fn apply_swap(&mut self, col: usize, i: usize, j: usize) {
        if col < self.d_s {
            self.scols[col].swap(i, j);
        } else {
            self.fperms[col - self.d_s].swap(i, j);
        }
    }
}

impl AnnealState for AssembleState {
    fn propose(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.n();
        let col = rng.random_range(0..self.d_s + self.fperms.len());
        let (i, j) = pick_two(rng, n);
        self.last = (col, i, j);
        for r in 0..n {
            self.saved_i[r] = self.sq[(i, r)];
            self.saved_j[r] = self.sq[(j, r)];
        }
        self.apply_swap(col, i, j);
        self.refresh_row(i);
        self.refresh_row(j);
        phi_from_sq_matrix(&self.sq, self.q)
    }

    fn revert(&mut self) {
        let (col, i, j) = self.last;
        self.apply_swap(col, i, j);
        for r in 0..self.n() {
            self.sq[(i, r)] = self.saved_i[r];
            self.sq[(r, i)] = self.saved_i[r];
            self.sq[(j, r)] = self.saved_j[r];
            self.sq[(r, j)] = self.saved_j[r];
        }
    }

    fn save_best(&mut self) {
        self.best = (self.scols.clone(), self.fperms.clone());
    }
}

/// Stage two: align a scalar Latin hypercube with per-input candidate
/// sets by annealing over row swaps within single columns. Column
/// contents never change, only which run each entry is assigned to.
pub fn assemble_design(
    scalars: &[Vec<f64>],
    candidates: &[Vec<FunctionalCurve>],
    q: f64,
    sa: &SaConfig,
    seed: u64,
) -> Result<Design> {
    check_q(q)?;
    sa.validate()?;
    let d_s = scalars.first().map_or(0, Vec::len);
    let d_f = candidates.len();
    let n = if scalars.is_empty() {
        candidates.first().map_or(0, Vec::len)
    } else {
        scalars.len()
    };
    if n < 2 {
        return Err(Error::InvalidParameter(
            "assembling a design needs at least two runs".into(),
        ));
    }
    if d_s + d_f == 0 {
        return Err(Error::InvalidParameter(
            "assembling a design needs at least one input".into(),
        ));
    }
    if scalars.iter().any(|row| row.len() != d_s) {
        return Err(Error::DimensionMismatch("ragged scalar matrix".into()));
    }
    for (idx, set) in candidates.iter().enumerate() {
        if set.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "candidate set {idx} has {} curves for {} runs",
                set.len(),
                n
            )));
        }
        if set.windows(2).any(|w| !w[0].same_basis(&w[1])) {
            return Err(Error::BasisMismatch(format!(
                "candidate set {idx} mixes bases"
            )));
        }
    }

    let scols: Vec<Vec<f64>> = (0..d_s)
        .map(|c| scalars.iter().map(|row| row[c]).collect())
        .collect();
    let fperms: Vec<Vec<usize>> = (0..d_f).map(|_| (0..n).collect()).collect();

    // Pairwise squared curve distances inside each candidate set are
    // invariant under the alignment, so they are computed once.
    let fdists: Vec<DMatrix<f64>> = candidates
        .iter()
        .map(|set| {
            let basis = set[0].basis();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = basis.l2_dist_sq(set[i].coeffs(), set[j].coeffs());
                    m[(i, j)] = d;
                    m[(j, i)] = d;
                }
            }
            m
        })
        .collect();

    let mut state = AssembleState {
        d_s,
        q,
        best: (scols.clone(), fperms.clone()),
        scols,
        fperms,
        fdists,
        sq: DMatrix::zeros(n, n),
        last: (0, 0, 0),
        saved_i: vec![0.0; n],
        saved_j: vec![0.0; n],
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let d = state.combined_sq(i, j);
            state.sq[(i, j)] = d;
            state.sq[(j, i)] = d;
        }
    }
    let phi0 = phi_from_sq_matrix(&state.sq, q);
    if !phi0.is_finite() {
        return Err(Error::DegenerateDesign(
            "initial alignment contains coincident runs".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x21));
    let phi_best = anneal(sa, &mut rng, phi0, &mut state);

    let (best_scols, best_fperms) = state.best;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| best_scols.iter().map(|col| col[i]).collect())
        .collect();
    let functionals: Vec<Vec<FunctionalCurve>> = best_fperms
        .iter()
        .zip(candidates)
        .map(|(perm, set)| perm.iter().map(|&p| set[p].clone()).collect())
        .collect();
    let (num_basis, order) = candidates
        .first()
        .map(|set| (set[0].basis().num_basis(), set[0].basis().order()))
        .unwrap_or((0, 0));
    Design::new(
        if d_s == 0 { Vec::new() } else { rows },
        functionals,
        phi_best,
        DesignMeta {
            q,
            seed,
            num_basis,
            order,
        },
    )
}

// ---------------------------------------------------------------------------
// Unconstrained demo
// ---------------------------------------------------------------------------

enum FreeMove {
    ScalarSwap {
        col: usize,
        i: usize,
        j: usize,
    },
    Coeff {
        input: usize,
        run: usize,
        idx: usize,
        old: f64,
    },
}

struct FreeState<'a> {
    basis: &'a BSplineBasis,
    q: f64,
    scols: Vec<Vec<f64>>,
    coeffs: Vec<Vec<Vec<f64>>>, // d_f × n × K
    sq: DMatrix<f64>,
    last: FreeMove,
    saved_i: Vec<f64>,
    saved_j: Vec<f64>,
    best: (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>),
}

impl FreeState<'_> {
    fn n(&self) -> usize {
        self.sq.nrows()
    }

    fn combined_sq(&self, i: usize, j: usize) -> f64 {
        let mut sum = 0.0;
        for col in &self.scols {
            let d = col[i] - col[j];
            sum += d * d;
        }
        for input in &self.coeffs {
            sum += self.basis.l2_dist_sq(&input[i], &input[j]);
        }
        sum
    }

    fn refresh_row(&mut self, row: usize) {
        for r in 0..self.n() {
            if r != row {
                let d = self.combined_sq(row, r);
                self.sq[(row, r)] = d;
                self.sq[(r, row)] = d;
            }
        }
    }

    fn restore_row(&mut self, row: usize, saved: &[f64]) {
        for r in 0..self.n() {
            self.sq[(row, r)] = saved[r];
            self.sq[(r, row)] = saved[r];
        }
    }
}

impl AnnealState for FreeState<'_> {
    fn propose(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.n();
        let d_s = self.scols.len();
        let k = self.basis.num_basis();
        let d_f = self.coeffs.len();
        // Uniform choice over scalar columns and single coefficients.
        let slot = rng.random_range(0..d_s + d_f * k);
        if slot < d_s {
            let col = slot;
            let (i, j) = pick_two(rng, n);
            for r in 0..n {
                self.saved_i[r] = self.sq[(i, r)];
                self.saved_j[r] = self.sq[(j, r)];
            }
            self.scols[col].swap(i, j);
            self.last = FreeMove::ScalarSwap { col, i, j };
            self.refresh_row(i);
            self.refresh_row(j);
        } else {
            let input = (slot - d_s) / k;
            let idx = (slot - d_s) % k;
            let run = rng.random_range(0..n);
            for r in 0..n {
                self.saved_i[r] = self.sq[(run, r)];
            }
            let old = self.coeffs[input][run][idx];
            // Half global redraws, half local steps.
            let new = if rng.random::<f64>() < 0.5 {
                rng.random()
            } else {
                (old + 0.2 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)
            };
            self.coeffs[input][run][idx] = new;
            self.last = FreeMove::Coeff {
                input,
                run,
                idx,
                old,
            };
            self.refresh_row(run);
        }
        phi_from_sq_matrix(&self.sq, self.q)
    }

    fn revert(&mut self) {
        match self.last {
            FreeMove::ScalarSwap { col, i, j } => {
                self.scols[col].swap(i, j);
                let saved_i = std::mem::take(&mut self.saved_i);
                let saved_j = std::mem::take(&mut self.saved_j);
                self.restore_row(i, &saved_i);
                self.restore_row(j, &saved_j);
                self.saved_i = saved_i;
                self.saved_j = saved_j;
            }
            FreeMove::Coeff {
                input,
                run,
                idx,
                old,
            } => {
                self.coeffs[input][run][idx] = old;
                let saved_i = std::mem::take(&mut self.saved_i);
                self.restore_row(run, &saved_i);
                self.saved_i = saved_i;
            }
        }
    }

    fn save_best(&mut self) {
        self.best = (self.scols.clone(), self.coeffs.clone());
    }
}

/// Unconstrained maximin search used to demonstrate why the Latin
/// hypercube restriction matters: annealing directly over free
/// coefficients in [0,1]^{n×K} (plus scalar level swaps) drives the
/// curves toward the extremes of the band.
pub fn free_maximin_demo(
    n: usize,
    d_s: usize,
    d_f: usize,
    basis: &Arc<BSplineBasis>,
    q: f64,
    sa: &SaConfig,
    seed: u64,
) -> Result<Design> {
    check_q(q)?;
    sa.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter(
            "the demo needs at least two runs".into(),
        ));
    }
    if d_f == 0 {
        return Err(Error::InvalidParameter(
            "the demo needs at least one functional input".into(),
        ));
    }
    let k = basis.num_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x31));

    let scols: Vec<Vec<f64>> = if d_s > 0 {
        let rows = lhd(n, d_s, derive_seed(seed, 0x32))?;
        (0..d_s)
            .map(|c| rows.iter().map(|row| row[c]).collect())
            .collect()
    } else {
        Vec::new()
    };
    let coeffs: Vec<Vec<Vec<f64>>> = (0..d_f)
        .map(|_| {
            (0..n)
                .map(|_| (0..k).map(|_| rng.random()).collect())
                .collect()
        })
        .collect();

    let mut state = FreeState {
        basis,
        q,
        best: (scols.clone(), coeffs.clone()),
        scols,
        coeffs,
        sq: DMatrix::zeros(n, n),
        last: FreeMove::ScalarSwap { col: 0, i: 0, j: 0 },
        saved_i: vec![0.0; n],
        saved_j: vec![0.0; n],
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let d = state.combined_sq(i, j);
            state.sq[(i, j)] = d;
            state.sq[(j, i)] = d;
        }
    }
    let phi0 = phi_from_sq_matrix(&state.sq, q);
    let phi_best = anneal(sa, &mut rng, phi0, &mut state);

    let (best_scols, best_coeffs) = state.best;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| best_scols.iter().map(|col| col[i]).collect())
        .collect();
    let functionals: Result<Vec<Vec<FunctionalCurve>>> = best_coeffs
        .into_iter()
        .map(|input| {
            input
                .into_iter()
                .map(|c| FunctionalCurve::new(basis.clone(), c))
                .collect()
        })
        .collect();
    Design::new(
        if d_s == 0 { Vec::new() } else { rows },
        functionals?,
        phi_best,
        DesignMeta {
            q,
            seed,
            num_basis: k,
            order: basis.order(),
        },
    )
}

/// Full two-stage pipeline: one annealed candidate set, reused for every
/// functional input, aligned with a fresh scalar Latin hypercube.
pub fn two_stage_design(
    n: usize,
    d_s: usize,
    d_f: usize,
    basis: &Arc<BSplineBasis>,
    q: f64,
    sa: &SaConfig,
    seed: u64,
) -> Result<Design> {
    if d_f == 0 {
        return Err(Error::InvalidParameter(
            "the two-stage construction needs at least one functional input".into(),
        ));
    }
    let cand = candidate_set(n, basis, q, sa, derive_seed(seed, 1))?;
    let scalars = if d_s > 0 {
        lhd(n, d_s, derive_seed(seed, 2))?
    } else {
        Vec::new()
    };
    let candidates = vec![cand; d_f];
    let mut design = assemble_design(&scalars, &candidates, q, sa, derive_seed(seed, 3))?;
    design.meta.seed = seed;
    Ok(design)
}

/// SplitMix64 scramble for deriving independent sub-seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn basis(k: usize, m: usize) -> Arc<BSplineBasis> {
        Arc::new(BSplineBasis::new(k, m).unwrap())
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
        rows.iter().map(|r| r[c]).collect()
    }

    /// Plain double-loop Φ implementation used as the oracle.
    fn phi_oracle(dists: &[f64], q: f64) -> f64 {
        dists.iter().map(|d| d.powf(-q)).sum::<f64>().powf(1.0 / q)
    }

    #[test]
    fn lhd_marginals() {
        let m = lhd(2, 1, 3).unwrap();
        assert_eq!(sorted(column(&m, 0)), vec![0.0, 1.0]);

        let m = lhd(5, 3, 17).unwrap();
        let levels = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        for c in 0..3 {
            assert_eq!(sorted(column(&m, c)), levels);
        }

        assert_eq!(lhd(5, 3, 7).unwrap(), lhd(5, 3, 7).unwrap());
        assert!(lhd(1, 3, 7).is_err());
    }

    #[test]
    fn phi_q_small_cases() {
        let b = basis(5, 1);
        let zeros = FunctionalCurve::new(b.clone(), vec![0.0; 5]).unwrap();
        let ones = FunctionalCurve::new(b.clone(), vec![1.0; 5]).unwrap();
        // Single pair at distance 1.
        assert_abs_diff_eq!(
            phi_q(&[zeros.clone(), ones.clone()], 5.0).unwrap(),
            1.0,
            epsilon = 1e-14
        );

        // Duplicates are degenerate.
        assert!(matches!(
            phi_q(&[zeros.clone(), zeros.clone()], 5.0),
            Err(Error::DegenerateDesign(_))
        ));

        // Three equidistant curves: Φ = 3^{1/q} / d.
        let e = |i: usize| {
            let mut c = vec![0.0; 5];
            c[i] = 1.0;
            FunctionalCurve::new(b.clone(), c).unwrap()
        };
        let trio = [e(0), e(2), e(4)];
        let d = 0.4f64.sqrt();
        assert_abs_diff_eq!(
            phi_q(&trio, 5.0).unwrap(),
            3f64.powf(0.2) / d,
            epsilon = 1e-12
        );
    }

    #[test]
    fn phi_q_matches_double_loop_oracle() {
        let b = basis(7, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let curves: Vec<FunctionalCurve> = (0..5)
            .map(|_| {
                let c: Vec<f64> = (0..7).map(|_| rng.random()).collect();
                FunctionalCurve::new(b.clone(), c).unwrap()
            })
            .collect();
        let mut dists = Vec::new();
        for i in 0..curves.len() {
            for j in (i + 1)..curves.len() {
                dists.push(crate::metric::functional_dist(&curves[i], &curves[j]).unwrap());
            }
        }
        assert_abs_diff_eq!(
            phi_q(&curves, 5.0).unwrap(),
            phi_oracle(&dists, 5.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn phi_q_large_exponent_tracks_maximin() {
        // Two 2-run candidate sets with distinct minimum distances: for
        // q = 50 the Φ ranking must match the maximin ranking.
        let b = basis(5, 1);
        let mk = |c: Vec<f64>| FunctionalCurve::new(b.clone(), c).unwrap();
        let wide = [mk(vec![0.0; 5]), mk(vec![1.0; 5])];
        let narrow = [mk(vec![0.0; 5]), mk(vec![0.5; 5])];
        let phi_wide = phi_q(&wide, 50.0).unwrap();
        let phi_narrow = phi_q(&narrow, 50.0).unwrap();
        assert!(phi_wide < phi_narrow);
    }

    #[test]
    fn candidate_set_preserves_marginals_and_improves() {
        let b = basis(7, 4);
        let n = 12;
        let sa = SaConfig {
            max_temps: 60,
            ..SaConfig::default()
        };
        let set = candidate_set(n, &b, 5.0, &sa, 42).unwrap();
        assert_eq!(set.len(), n);

        let levels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        for col in 0..7 {
            let values = sorted(set.iter().map(|c| c.coeffs()[col]).collect());
            for (v, l) in values.iter().zip(&levels) {
                assert_abs_diff_eq!(*v, *l, epsilon = 1e-15);
            }
        }

        // The annealed Φ never exceeds that of the raw Latin hypercube start.
        let raw = lhd(n, 7, derive_seed(42, 0x11)).unwrap();
        let raw_curves: Vec<FunctionalCurve> = raw
            .into_iter()
            .map(|c| FunctionalCurve::new(b.clone(), c).unwrap())
            .collect();
        let phi_raw = phi_q(&raw_curves, 5.0).unwrap();
        let phi_opt = phi_q(&set, 5.0).unwrap();
        assert!(phi_opt <= phi_raw);

        // Determinism.
        let again = candidate_set(n, &b, 5.0, &sa, 42).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn phi_qc_reductions() {
        // Without functional inputs Φ_q^c is the scalar Euclidean Φ_q.
        let rows = lhd(6, 2, 9).unwrap();
        let design = Design::new(
            rows.clone(),
            vec![],
            0.0,
            DesignMeta {
                q: 5.0,
                seed: 0,
                num_basis: 0,
                order: 0,
            },
        )
        .unwrap();
        let mut dists = Vec::new();
        for i in 0..6 {
            for j in (i + 1)..6 {
                let d: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dists.push(d);
            }
        }
        assert_abs_diff_eq!(
            phi_qc(&design, 5.0).unwrap(),
            phi_oracle(&dists, 5.0),
            epsilon = 1e-12
        );

        // Two runs: Φ_q^c is the inverse combined distance.
        let b = basis(5, 2);
        let f = FunctionalCurve::new(b.clone(), vec![0.0; 5]).unwrap();
        let g = FunctionalCurve::new(b.clone(), vec![1.0; 5]).unwrap();
        let design = Design::new(
            vec![vec![0.0], vec![1.0]],
            vec![vec![f.clone(), g.clone()]],
            0.0,
            DesignMeta {
                q: 5.0,
                seed: 0,
                num_basis: 5,
                order: 2,
            },
        )
        .unwrap();
        let d = combined_dist(&design.run_point(0), &design.run_point(1)).unwrap();
        assert_abs_diff_eq!(phi_qc(&design, 5.0).unwrap(), 1.0 / d, epsilon = 1e-12);
    }

    #[test]
    fn assemble_preserves_contents_and_improves() {
        let b = basis(8, 4);
        let n = 10;
        let sa = SaConfig {
            max_temps: 60,
            ..SaConfig::default()
        };
        let cand = candidate_set(n, &b, 5.0, &sa, 5).unwrap();
        let scal = lhd(n, 2, 6).unwrap();
        let design = assemble_design(&scal, &[cand.clone(), cand.clone()], 5.0, &sa, 7).unwrap();

        // Scalar column contents survive the permutation.
        for c in 0..2 {
            assert_eq!(
                sorted(column(design.scalars(), c)),
                sorted(column(&scal, c))
            );
        }
        // Functional columns stay inside the candidate set.
        for col in design.functionals() {
            for curve in col {
                assert!(cand.contains(curve));
            }
        }

        // Identity alignment is never better than the annealed one.
        let identity = Design::new(
            scal.clone(),
            vec![cand.clone(), cand.clone()],
            0.0,
            design.meta().clone(),
        )
        .unwrap();
        assert!(design.criterion() <= phi_qc(&identity, 5.0).unwrap() + 1e-12);
        assert_abs_diff_eq!(
            design.criterion(),
            phi_qc(&design, 5.0).unwrap(),
            epsilon = 1e-10
        );

        // Row-count mismatch is rejected.
        let short = lhd(n - 1, 2, 6).unwrap();
        assert!(assemble_design(&short, &[cand.clone()], 5.0, &sa, 7).is_err());
    }

    #[test]
    fn assemble_is_deterministic() {
        let b = basis(6, 3);
        let sa = SaConfig {
            max_temps: 30,
            ..SaConfig::default()
        };
        let cand = candidate_set(8, &b, 5.0, &sa, 11).unwrap();
        let scal = lhd(8, 2, 12).unwrap();
        let d1 = assemble_design(&scal, &[cand.clone()], 5.0, &sa, 13).unwrap();
        let d2 = assemble_design(&scal, &[cand], 5.0, &sa, 13).unwrap();
        assert_eq!(d1.scalars(), d2.scalars());
        assert_eq!(d1.criterion(), d2.criterion());
    }

    #[test]
    fn free_demo_runs_and_is_deterministic() {
        let b = basis(4, 2);
        let sa = SaConfig {
            max_temps: 20,
            ..SaConfig::default()
        };
        let d1 = free_maximin_demo(6, 1, 1, &b, 5.0, &sa, 3).unwrap();
        let d2 = free_maximin_demo(6, 1, 1, &b, 5.0, &sa, 3).unwrap();
        assert_eq!(d1.scalars(), d2.scalars());
        assert_eq!(d1.criterion(), d2.criterion());
        assert!(d1.criterion().is_finite());
        // Scalar marginals stay a Latin hypercube even in the free demo.
        assert_eq!(
            sorted(column(d1.scalars(), 0)),
            vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        );
    }

    #[test]
    fn two_stage_pipeline() {
        let b = basis(7, 4);
        let sa = SaConfig {
            max_temps: 25,
            ..SaConfig::default()
        };
        let d = two_stage_design(9, 2, 3, &b, 5.0, &sa, 77).unwrap();
        assert_eq!(d.num_runs(), 9);
        assert_eq!(d.num_scalars(), 2);
        assert_eq!(d.num_functionals(), 3);
        assert_eq!(d.meta().seed, 77);
        // All three functional columns draw from the same candidate set.
        let set: Vec<&FunctionalCurve> = d.functionals()[0].iter().collect();
        for col in &d.functionals()[1..] {
            for curve in col {
                assert!(set.contains(&curve));
            }
        }
    }
}
