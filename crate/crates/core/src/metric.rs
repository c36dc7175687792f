//! Distances between runs: the functional L2 distance as a quadratic form
//! on the basis Gram matrix, its diagonally weighted variant, and the
//! combined scalar-plus-functional distance.

use crate::bspline::{BSplineBasis, FunctionalCurve};
use crate::error::{Error, Result};

/// One experimental run: scalar inputs in [0,1] plus one curve per
/// functional input.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    scalars: Vec<f64>,
    curves: Vec<FunctionalCurve>,
}

impl RunPoint {
    pub fn new(scalars: Vec<f64>, curves: Vec<FunctionalCurve>) -> Result<Self> {
        if let Some(bad) = scalars.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidParameter(format!(
                "scalar input {bad} outside [0,1]"
            )));
        }
        Ok(RunPoint { scalars, curves })
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }

    pub fn curves(&self) -> &[FunctionalCurve] {
        &self.curves
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn num_functionals(&self) -> usize {
        self.curves.len()
    }

    pub(crate) fn check_conformable(&self, other: &RunPoint) -> Result<()> {
        if self.scalars.len() != other.scalars.len() || self.curves.len() != other.curves.len() {
            return Err(Error::DimensionMismatch(format!(
                "run points have shapes ({}, {}) and ({}, {})",
                self.scalars.len(),
                self.curves.len(),
                other.scalars.len(),
                other.curves.len()
            )));
        }
        for (a, b) in self.curves.iter().zip(&other.curves) {
            if !a.same_basis(b) {
                return Err(Error::BasisMismatch(
                    "functional inputs use different bases across runs".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Diagonal weighting matrix `W(ω)`: nonnegative entries with trace one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    diag: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "weight matrix entries must be finite and nonnegative".into(),
            ));
        }
        let trace: f64 = diag.iter().sum();
        if (trace - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "weight matrix trace must be 1, got {trace}"
            )));
        }
        Ok(WeightMatrix { diag })
    }

    /// Uniform weights `1/K` (the beta(1,1) case).
    pub fn uniform(k: usize) -> Self {
        WeightMatrix {
            diag: vec![1.0 / k as f64; k],
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

fn require_same_basis(f: &FunctionalCurve, g: &FunctionalCurve) -> Result<()> {
    if !f.same_basis(g) {
        return Err(Error::BasisMismatch(format!(
            "curves on (K={}, m={}) and (K={}, m={}) bases",
            f.basis().num_basis(),
            f.basis().order(),
            g.basis().num_basis(),
            g.basis().order()
        )));
    }
    Ok(())
}

/// L2 distance between two curves on a shared basis, `sqrt(δ'Jδ)` with
/// `δ` the coefficient difference.
pub fn functional_dist(f: &FunctionalCurve, g: &FunctionalCurve) -> Result<f64> {
    require_same_basis(f, g)?;
    Ok(f.basis().l2_dist_sq(f.coeffs(), g.coeffs()).sqrt())
}

/// Weighted L2 distance `sqrt(δ'W J W δ)`.
pub fn weighted_functional_dist(
    f: &FunctionalCurve,
    g: &FunctionalCurve,
    w: &WeightMatrix,
) -> Result<f64> {
    require_same_basis(f, g)?;
    if w.len() != f.basis().num_basis() {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix of size {} for basis with K={}",
            w.len(),
            f.basis().num_basis()
        )));
    }
    Ok(f.basis()
        .weighted_l2_dist_sq(f.coeffs(), g.coeffs(), w.diag())
        .sqrt())
}

/// Combined distance over a full run: Euclidean on the scalars, L2 on the
/// functional inputs, aggregated as `sqrt(Σ Δx² + Σ D_f²)`. With no
/// scalar inputs this reduces to the purely functional form.
pub fn combined_dist(a: &RunPoint, b: &RunPoint) -> Result<f64> {
    a.check_conformable(b)?;
    let mut sum = 0.0;
    for (x, y) in a.scalars().iter().zip(b.scalars()) {
        sum += (x - y) * (x - y);
    }
    for (f, g) in a.curves().iter().zip(b.curves()) {
        sum += f.basis().l2_dist_sq(f.coeffs(), g.coeffs());
    }
    Ok(sum.sqrt())
}

/// Diagonal weights proportional to the beta(α, β) density evaluated at
/// the basis-peak locations, normalized to trace one.
///
/// Densities are computed in log space so the normalization stays stable
/// for extreme shape parameters; peak locations are clipped away from the
/// endpoints where the density can diverge.
pub fn beta_weight_matrix(omega: (f64, f64), basis: &BSplineBasis) -> Result<WeightMatrix> {
    let (alpha, beta) = omega;
    if !(alpha > 0.0) || !(beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta weighting parameters must be positive, got ({alpha}, {beta})"
        )));
    }
    Ok(beta_weights_unchecked(alpha, beta, basis.peaks()))
}

/// Core of [`beta_weight_matrix`] without validation; also used inside
/// likelihood evaluations where ω is already bounded.
pub(crate) fn beta_weights_unchecked(alpha: f64, beta: f64, peaks: &[f64]) -> WeightMatrix {
    const EPS: f64 = 1e-6;
    let log_density: Vec<f64> = peaks
        .iter()
        .map(|&t| {
            let tc = t.clamp(EPS, 1.0 - EPS);
            (alpha - 1.0) * tc.ln() + (beta - 1.0) * (1.0 - tc).ln()
        })
        .collect();
    let max = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut diag: Vec<f64> = log_density.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = diag.iter().sum();
    for w in &mut diag {
        *w /= total;
    }
    WeightMatrix { diag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn basis(k: usize, m: usize) -> Arc<BSplineBasis> {
        Arc::new(BSplineBasis::new(k, m).unwrap())
    }

    fn curve(b: &Arc<BSplineBasis>, coeffs: &[f64]) -> FunctionalCurve {
        FunctionalCurve::new(b.clone(), coeffs.to_vec()).unwrap()
    }

    fn random_curve(b: &Arc<BSplineBasis>, rng: &mut ChaCha8Rng) -> FunctionalCurve {
        let coeffs: Vec<f64> = (0..b.num_basis()).map(|_| rng.random()).collect();
        FunctionalCurve::new(b.clone(), coeffs).unwrap()
    }

    /// Brute-force `∫ (f-g)²` by a composite midpoint rule split at the
    /// knots, so order-1 discontinuities never land on a sample point.
    fn quadrature_dist(f: &FunctionalCurve, g: &FunctionalCurve, points: usize) -> f64 {
        let spans = f.basis().distinct_knots();
        let mut acc = 0.0;
        for win in spans.windows(2) {
            let (a, b) = (win[0], win[1]);
            let steps = ((points as f64 * (b - a)).ceil() as usize).max(2);
            let h = (b - a) / steps as f64;
            for i in 0..steps {
                let t = a + (i as f64 + 0.5) * h;
                let d = f.eval(t).unwrap() - g.eval(t).unwrap();
                acc += d * d * h;
            }
        }
        acc.sqrt()
    }

    #[test]
    fn functional_distance_basics() {
        let b = basis(5, 1);
        let f = curve(&b, &[1.0, 0.3, 0.7, 0.2, 0.9]);
        assert_eq!(functional_dist(&f, &f).unwrap(), 0.0);

        let ones = curve(&b, &[1.0; 5]);
        let zeros = curve(&b, &[0.0; 5]);
        assert_abs_diff_eq!(functional_dist(&ones, &zeros).unwrap(), 1.0, epsilon = 1e-14);

        let e1 = curve(&b, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(
            functional_dist(&e1, &zeros).unwrap(),
            0.2f64.sqrt(),
            epsilon = 1e-14
        );

        let other = basis(5, 2);
        let g = curve(&other, &[0.5; 5]);
        assert!(matches!(
            functional_dist(&f, &g),
            Err(Error::BasisMismatch(_))
        ));
    }

    #[test]
    fn functional_distance_matches_integral_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=5usize {
            let b = basis(8.max(m), m);
            for _ in 0..10 {
                let f = random_curve(&b, &mut rng);
                let g = random_curve(&b, &mut rng);
                let exact = functional_dist(&f, &g).unwrap();
                let brute = quadrature_dist(&f, &g, 100_000);
                assert_abs_diff_eq!(exact, brute, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn weighted_distance() {
        let b = basis(5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);

        // Uniform weights reduce to the plain distance divided by K.
        let w = WeightMatrix::uniform(5);
        for _ in 0..20 {
            let f = random_curve(&b, &mut rng);
            let g = random_curve(&b, &mut rng);
            let plain = functional_dist(&f, &g).unwrap();
            let weighted = weighted_functional_dist(&f, &g, &w).unwrap();
            assert_abs_diff_eq!(weighted, plain / 5.0, epsilon = 1e-12);
        }

        // All mass on one index: differences elsewhere vanish.
        let w1 = WeightMatrix::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let f = curve(&b, &[0.2, 0.9, 0.1, 0.6, 0.4]);
        let g = curve(&b, &[0.2, 0.1, 0.8, 0.3, 0.7]);
        assert_eq!(weighted_functional_dist(&f, &g, &w1).unwrap(), 0.0);

        // Hand-checked quadratic form.
        let w = WeightMatrix::new(vec![0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let ones = curve(&b, &[1.0; 5]);
        let zeros = curve(&b, &[0.0; 5]);
        assert_abs_diff_eq!(
            weighted_functional_dist(&ones, &zeros, &w).unwrap(),
            (0.25f64 * 0.2 * 2.0).sqrt(),
            epsilon = 1e-14
        );

        let wrong = WeightMatrix::uniform(4);
        assert!(weighted_functional_dist(&ones, &zeros, &wrong).is_err());
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(WeightMatrix::new(vec![0.5, 0.6]).is_err());
        assert!(WeightMatrix::new(vec![1.5, -0.5]).is_err());
        assert!(WeightMatrix::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn combined_distance() {
        let b = basis(6, 3);
        let f = curve(&b, &[0.1, 0.4, 0.3, 0.8, 0.6, 0.2]);
        let g = curve(&b, &[0.9, 0.2, 0.5, 0.1, 0.7, 0.3]);

        let a = RunPoint::new(vec![0.2, 0.5], vec![f.clone()]).unwrap();
        assert_eq!(combined_dist(&a, &a).unwrap(), 0.0);

        // No functional inputs: plain Euclidean distance.
        let p = RunPoint::new(vec![0.0, 0.0], vec![]).unwrap();
        let q = RunPoint::new(vec![0.3, 0.4], vec![]).unwrap();
        assert_abs_diff_eq!(combined_dist(&p, &q).unwrap(), 0.5, epsilon = 1e-14);

        // 3-4-5 split between the scalar and functional parts.
        let d_f = functional_dist(&f, &g).unwrap();
        let x = 0.75 * d_f; // makes the ratio 3:4 exactly
        let p = RunPoint::new(vec![0.0], vec![f.clone()]).unwrap();
        let q = RunPoint::new(vec![x], vec![g.clone()]).unwrap();
        assert_abs_diff_eq!(
            combined_dist(&p, &q).unwrap(),
            1.25 * d_f,
            epsilon = 1e-12
        );

        let r = RunPoint::new(vec![0.1], vec![]).unwrap();
        assert!(combined_dist(&p, &r).is_err());
    }

    #[test]
    fn beta_weights() {
        let b = basis(5, 1);
        let w = beta_weight_matrix((1.0, 1.0), &b).unwrap();
        for v in w.diag() {
            assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-12);
        }

        // dbeta(t; 2, 1) = 2t at peaks (0.1, 0.3, 0.5, 0.7, 0.9).
        let w = beta_weight_matrix((2.0, 1.0), &b).unwrap();
        let expect = [0.04, 0.12, 0.2, 0.28, 0.36];
        for (v, e) in w.diag().iter().zip(expect) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }

        // Reflection symmetry when the peaks are symmetric about 0.5.
        let w_ab = beta_weight_matrix((3.0, 1.5), &b).unwrap();
        let w_ba = beta_weight_matrix((1.5, 3.0), &b).unwrap();
        for (v, r) in w_ab.diag().iter().zip(w_ba.diag().iter().rev()) {
            assert_abs_diff_eq!(*v, *r, epsilon = 1e-12);
        }

        assert!(beta_weight_matrix((0.0, 1.0), &b).is_err());
        assert!(beta_weight_matrix((1.0, -2.0), &b).is_err());
    }

    #[test]
    fn beta_weights_stable_over_parameter_box() {
        // Includes the clamped cubic basis whose first peak is exactly 0.
        for (k, m) in [(5usize, 1usize), (7, 4), (12, 5)] {
            let b = basis(k, m);
            for &alpha in &[0.05, 0.3, 1.0, 4.0, 50.0] {
                for &beta in &[0.05, 0.3, 1.0, 4.0, 50.0] {
                    let w = beta_weight_matrix((alpha, beta), &b).unwrap();
                    let trace: f64 = w.diag().iter().sum();
                    assert_abs_diff_eq!(trace, 1.0, epsilon = 1e-12);
                    assert!(w.diag().iter().all(|&v| v >= 0.0 && v.is_finite()));
                }
            }
        }
    }

    #[test]
    fn distances_are_metrics_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let b = basis(7, 4);
        for _ in 0..200 {
            let f = random_curve(&b, &mut rng);
            let g = random_curve(&b, &mut rng);
            let h = random_curve(&b, &mut rng);
            let fg = functional_dist(&f, &g).unwrap();
            let gf = functional_dist(&g, &f).unwrap();
            assert_abs_diff_eq!(fg, gf, epsilon = 1e-14);
            assert!(fg >= 0.0);
            let fh = functional_dist(&f, &h).unwrap();
            let gh = functional_dist(&g, &h).unwrap();
            assert!(fg <= fh + gh + 1e-10);

            let a = RunPoint::new(vec![rng.random(), rng.random()], vec![f.clone()]).unwrap();
            let c = RunPoint::new(vec![rng.random(), rng.random()], vec![g.clone()]).unwrap();
            let d = RunPoint::new(vec![rng.random(), rng.random()], vec![h.clone()]).unwrap();
            let ac = combined_dist(&a, &c).unwrap();
            assert_abs_diff_eq!(ac, combined_dist(&c, &a).unwrap(), epsilon = 1e-14);
            assert!(
                ac <= combined_dist(&a, &d).unwrap() + combined_dist(&d, &c).unwrap() + 1e-10
            );
        }
    }
}
