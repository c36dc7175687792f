//! Box-constrained Nelder–Mead simplex search.
//!
//! Small and dependency-free; candidates are clamped into the box before
//! evaluation, which is adequate for the smooth likelihood surfaces and
//! wide bounds used here.

/// Search options; `ftol_rel` compares the spread of simplex values to
/// the best value's magnitude.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    pub ftol_rel: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 500,
            ftol_rel: 1e-8,
        }
    }
}

pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimize `f` starting from `x0`, staying within `[lo, hi]`.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus an offset along each axis, flipped when the
    // offset would leave the box.
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lo, hi);
    points.push(start.clone());
    for i in 0..dim {
        let mut p = start.clone();
        let up = p[i] + step[i];
        p[i] = if up <= hi[i] { up } else { p[i] - step[i] };
        clamp_into(&mut p, lo, hi);
        points.push(p);
    }
    let mut values: Vec<f64> = points.iter().map(|p| eval(p, &mut evals)).collect();

    loop {
        // Order so points[0] is best, points[dim] worst.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        points = order.iter().map(|&i| points[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[dim];
        if evals >= opts.max_evals {
            break;
        }
        if worst.is_finite() && (worst - best).abs() <= opts.ftol_rel * (best.abs() + 1e-12) {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for p in points.iter().take(dim) {
            for i in 0..dim {
                centroid[i] += p[i] / dim as f64;
            }
        }

        let blend = |from: &[f64], coeff: f64| -> Vec<f64> {
            let mut out = vec![0.0; dim];
            for i in 0..dim {
                out[i] = centroid[i] + coeff * (centroid[i] - from[i]);
            }
            clamp_into(&mut out, lo, hi);
            out
        };

        let reflected = blend(&points[dim], REFLECT);
        let f_reflected = eval(&reflected, &mut evals);

        if f_reflected < values[0] {
            let expanded = blend(&points[dim], EXPAND);
            let f_expanded = eval(&expanded, &mut evals);
            if f_expanded < f_reflected {
                points[dim] = expanded;
                values[dim] = f_expanded;
            } else {
                points[dim] = reflected;
                values[dim] = f_reflected;
            }
        } else if f_reflected < values[dim - 1] {
            points[dim] = reflected;
            values[dim] = f_reflected;
        } else {
            let contracted = blend(&points[dim], -CONTRACT);
            let f_contracted = eval(&contracted, &mut evals);
            if f_contracted < values[dim] {
                points[dim] = contracted;
                values[dim] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                for idx in 1..=dim {
                    for i in 0..dim {
                        points[idx][i] = points[0][i] + SHRINK * (points[idx][i] - points[0][i]);
                    }
                    values[idx] = eval(&points[idx].clone(), &mut evals);
                }
            }
        }
        if evals >= opts.max_evals {
            break;
        }
    }

    let mut best_idx = 0;
    for i in 1..=dim {
        if values[i] < values[best_idx] {
            best_idx = i;
        }
    }
    SimplexResult {
        x: points[best_idx].clone(),
        value: values[best_idx],
        evaluations: evals,
    }
}
