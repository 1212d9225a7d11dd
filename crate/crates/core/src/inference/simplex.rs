//! Bounded Nelder–Mead simplex.
//!
//! The search runs in unit-box coordinates u ∈ [0, 1]^d mapped affinely onto
//! the bounds; trial points are projected back into the box.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn box_to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    fn unit_to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| lo + v.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    /// Uniform random point inside the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Spread of function values across the simplex, relative to 1 + |f_best|.
    pub f_tol: f64,
    /// Simplex diameter in unit-box coordinates.
    pub x_tol: f64,
    /// Initial edge length in unit-box coordinates.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

/// Minimises `f` inside `bounds` starting from `x0`.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let d = bounds.dim();
    let mut evals = 0usize;
    let mut eval = |u: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(&bounds.unit_to_box(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = bounds.box_to_unit(x0);
    for v in &mut start {
        *v = v.clamp(0.0, 1.0);
    }
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..d {
        let mut p = start.clone();
        // step inward when the start sits near the upper face
        p[i] = if p[i] + opts.initial_step <= 1.0 {
            p[i] + opts.initial_step
        } else {
            p[i] - opts.initial_step
        };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();
        history.push(values[0]);

        let spread = (values[d] - values[0]).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (spread <= opts.f_tol * (1.0 + values[0].abs()))
            && diameter <= opts.x_tol
        {
            converged = true;
            break;
        }
        if diameter <= 1e-15 {
            converged = spread <= opts.f_tol * (1.0 + values[0].abs());
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| (c + t * (c - w)).clamp(0.0, 1.0))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        for k in 1..=d {
            let p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[k])
                .map(|(b, v)| b + shrink * (v - b))
                .collect();
            values[k] = eval(&p, &mut evals);
            simplex[k] = p;
        }
    }

    let best = (0..=d)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    SimplexResult {
        x: bounds.unit_to_box(&simplex[best]),
        f: values[best],
        iterations,
        evaluations: evals,
        converged,
        history,
    }
}
