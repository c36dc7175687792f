//! Clamped uniform B-spline bases on [0,1]: Cox–de Boor evaluation, Gram
//! matrices of pairwise basis products, low-order moment integrals and
//! basis-peak locations.
//!
//! A basis is fixed by the number of functions `K` and the order `m`
//! (order 1 = piecewise constant, 4 = cubic). The knot sequence has
//! `K - m + 2` distinct, uniformly spaced values on [0,1], with the first
//! and last knot each replicated `m` times.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1,1],
/// exact for polynomials up to degree `2n - 1`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_deriv(n, z);
            dp = d;
            let step = p / d;
            z -= step;
            if step.abs() < 1e-15 {
                let (_, d) = legendre_with_deriv(n, z);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_deriv(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let pk = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Maximize a unimodal function on [a,b] by golden-section search.
fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// A clamped uniform B-spline basis of `K` functions of order `m` on [0,1].
///
/// The Gram matrix of pairwise basis products, the moment vectors for
/// powers 0 and 1 and the basis-peak locations are precomputed once; the
/// type is immutable afterwards and cheap to share behind an [`Arc`].
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    num_basis: usize,
    order: usize,
    knots: Vec<f64>,
    gram: DMatrix<f64>,
    moment0: Vec<f64>,
    moment1: Vec<f64>,
    peaks: Vec<f64>,
}

impl BSplineBasis {
    /// Build the basis for `num_basis` functions of order `order`.
    ///
    /// Rejects `num_basis < order` and `order < 1`.
    pub fn new(num_basis: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidParameter(format!(
                "spline order must be at least 1, got {order}"
            )));
        }
        if num_basis < order {
            return Err(Error::InvalidParameter(format!(
                "need at least as many basis functions as the order, got K={num_basis} < m={order}"
            )));
        }
        let mut knots = Vec::with_capacity(num_basis + order);
        let spans = num_basis - order + 1; // number of nonempty knot intervals
        knots.extend(std::iter::repeat_n(0.0, order));
        for j in 1..spans {
            knots.push(j as f64 / spans as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, order));
        debug_assert_eq!(knots.len(), num_basis + order);

        let mut basis = BSplineBasis {
            num_basis,
            order,
            knots,
            gram: DMatrix::zeros(num_basis, num_basis),
            moment0: vec![0.0; num_basis],
            moment1: vec![0.0; num_basis],
            peaks: vec![0.0; num_basis],
        };
        basis.compute_integrals();
        basis.compute_peaks();
        Ok(basis)
    }

    /// Number of basis functions `K`.
    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    /// Spline order `m` (polynomial degree plus one).
    pub fn order(&self) -> usize {
        self.order
    }

    /// Full knot sequence of length `K + m`, clamped at 0 and 1.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Distinct knot values (the `K - m + 2` uniform break points).
    pub fn distinct_knots(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &t in &self.knots {
            if out.last().is_none_or(|&last: &f64| t > last) {
                out.push(t);
            }
        }
        out
    }

    /// Gram matrix `J` with entries `∫ B_i(t) B_j(t) dt`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Locations where each basis function attains its maximum.
    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    /// Peak location of basis function `i` (0-based).
    pub fn peak(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.peaks[i])
    }

    /// Moment vector `v_i = ∫ t^p B_i(t) dt` for `p` in {0, 1}.
    pub fn moment_vector(&self, p: usize) -> Result<&[f64]> {
        match p {
            0 => Ok(&self.moment0),
            1 => Ok(&self.moment1),
            _ => Err(Error::InvalidParameter(format!(
                "moment power must be 0 or 1, got {p}"
            ))),
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.num_basis {
            return Err(Error::InvalidParameter(format!(
                "basis index {i} out of range for K={}",
                self.num_basis
            )));
        }
        Ok(())
    }

    fn check_location(&self, t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "evaluation point {t} outside [0,1]"
            )));
        }
        Ok(())
    }

    /// Evaluate basis function `i` (0-based) at `t` via the Cox–de Boor
    /// recursion; 0/0 terms evaluate as 0 and `t = 1` belongs to the last
    /// nonempty interval so the basis still sums to one there.
    pub fn eval(&self, i: usize, t: f64) -> Result<f64> {
        self.check_index(i)?;
        self.check_location(t)?;
        Ok(self.eval_unchecked(i, t))
    }

    fn order1(&self, j: usize, t: f64) -> f64 {
        let a = self.knots[j];
        let b = self.knots[j + 1];
        if a >= b {
            return 0.0; // empty interval from replicated knots
        }
        if (t >= a && t < b) || (t >= 1.0 && b >= 1.0) {
            1.0
        } else {
            0.0
        }
    }

    pub(crate) fn eval_unchecked(&self, i: usize, t: f64) -> f64 {
        let m = self.order;
        // Triangular sweep: start from the order-1 indicators on the
        // support of B_{i,m} and raise the order in place.
        let mut values: Vec<f64> = (i..i + m).map(|j| self.order1(j, t)).collect();
        for r in 2..=m {
            for offset in 0..=(m - r) {
                let j = i + offset;
                let left_den = self.knots[j + r - 1] - self.knots[j];
                let right_den = self.knots[j + r] - self.knots[j + 1];
                let left = if left_den > 0.0 {
                    (t - self.knots[j]) / left_den * values[offset]
                } else {
                    0.0
                };
                let right = if right_den > 0.0 {
                    (self.knots[j + r] - t) / right_den * values[offset + 1]
                } else {
                    0.0
                };
                values[offset] = left + right;
            }
        }
        values[0]
    }

    /// All `K` basis values at `t`.
    pub fn eval_all(&self, t: f64) -> Result<Vec<f64>> {
        self.check_location(t)?;
        Ok((0..self.num_basis)
            .map(|i| self.eval_unchecked(i, t))
            .collect())
    }

    /// Per-span Gauss–Legendre quadrature with `m` nodes, exact for the
    /// degree-`2(m-1)` products appearing in the Gram matrix and for the
    /// degree-`m` integrands of the moment vectors.
    fn compute_integrals(&mut self) {
        let k = self.num_basis;
        let m = self.order;
        let (nodes, weights) = gauss_legendre(m);
        for span in self.distinct_knots().windows(2) {
            let (a, b) = (span[0], span[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&x, &w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let wt = half * w;
                let values: Vec<f64> = (0..k).map(|i| self.eval_unchecked(i, t)).collect();
                for i in 0..k {
                    if values[i] == 0.0 {
                        continue;
                    }
                    self.moment0[i] += wt * values[i];
                    self.moment1[i] += wt * t * values[i];
                    for j in i..k.min(i + m) {
                        self.gram[(i, j)] += wt * values[i] * values[j];
                    }
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                self.gram[(i, j)] = self.gram[(j, i)];
            }
        }
    }

    fn compute_peaks(&mut self) {
        for i in 0..self.num_basis {
            self.peaks[i] = if self.order == 1 {
                // Indicator plateau: take the interval midpoint as the
                // canonical argmax.
                0.5 * (self.knots[i] + self.knots[i + 1])
            } else {
                let grid_best = (0..=1000)
                    .map(|g| g as f64 / 1000.0)
                    .max_by(|&a, &b| {
                        self.eval_unchecked(i, a)
                            .partial_cmp(&self.eval_unchecked(i, b))
                            .unwrap()
                    })
                    .unwrap();
                let lo = (grid_best - 1e-3).max(0.0);
                let hi = (grid_best + 1e-3).min(1.0);
                golden_max(|t| self.eval_unchecked(i, t), lo, hi, 1e-8)
            };
        }
    }

    /// Squared L2 distance `δ'Jδ` between two coefficient vectors on this
    /// basis. No validation; hot path for design search and model fitting.
    pub fn l2_dist_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.num_basis);
        debug_assert_eq!(b.len(), self.num_basis);
        let k = self.num_basis;
        let m = self.order;
        let mut sum = 0.0;
        for i in 0..k {
            let di = a[i] - b[i];
            sum += di * di * self.gram[(i, i)];
            for j in (i + 1)..k.min(i + m) {
                let dj = a[j] - b[j];
                sum += 2.0 * di * dj * self.gram[(i, j)];
            }
        }
        sum.max(0.0)
    }

    /// Squared weighted L2 distance `(w∘δ)'J(w∘δ)` for a diagonal weight
    /// vector `w`.
    pub fn weighted_l2_dist_sq(&self, a: &[f64], b: &[f64], w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.num_basis);
        let k = self.num_basis;
        let m = self.order;
        let mut sum = 0.0;
        for i in 0..k {
            let di = w[i] * (a[i] - b[i]);
            sum += di * di * self.gram[(i, i)];
            for j in (i + 1)..k.min(i + m) {
                let dj = w[j] * (a[j] - b[j]);
                sum += 2.0 * di * dj * self.gram[(i, j)];
            }
        }
        sum.max(0.0)
    }

    /// Weighted squared norm `(w∘δ)'J(w∘δ)` of a coefficient difference
    /// that is already formed.
    pub fn weighted_norm_sq(&self, delta: &[f64], w: &[f64]) -> f64 {
        debug_assert_eq!(delta.len(), self.num_basis);
        debug_assert_eq!(w.len(), self.num_basis);
        let k = self.num_basis;
        let m = self.order;
        let mut sum = 0.0;
        for i in 0..k {
            let di = w[i] * delta[i];
            sum += di * di * self.gram[(i, i)];
            for j in (i + 1)..k.min(i + m) {
                let dj = w[j] * delta[j];
                sum += 2.0 * di * dj * self.gram[(i, j)];
            }
        }
        sum.max(0.0)
    }
}

/// One realization of a functional input: coefficients in [0,1]^K tied to
/// a shared basis, representing `f(t) = Σ β_i B_{i,m}(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalCurve {
    basis: Arc<BSplineBasis>,
    coeffs: Vec<f64>,
}

impl FunctionalCurve {
    /// Wrap a coefficient vector; every coefficient must lie in [0,1] so
    /// that the curve itself stays in [0,1].
    pub fn new(basis: Arc<BSplineBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.num_basis() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                basis.num_basis(),
                coeffs.len()
            )));
        }
        if let Some(bad) = coeffs.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidParameter(format!(
                "curve coefficient {bad} outside [0,1]"
            )));
        }
        Ok(FunctionalCurve { basis, coeffs })
    }

    pub fn basis(&self) -> &Arc<BSplineBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Curve value `Σ β_i B_i(t)`; stays within [0,1] by partition of unity.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let values = self.basis.eval_all(t)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&values)
            .map(|(c, b)| c * b)
            .sum())
    }

    /// True when two curves live on the same (K, m) basis.
    pub fn same_basis(&self, other: &FunctionalCurve) -> bool {
        self.basis.num_basis() == other.basis.num_basis()
            && self.basis.order() == other.basis.order()
    }
}
