//! Box-constrained Nelder–Mead simplex minimiser.
//!
//! Trial points are projected onto the box before evaluation, which keeps the
//! method derivative-free and deterministic.

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Initial simplex edge along each coordinate.
    pub initial_step: f64,
    /// Stop once the spread of objective values drops below this.
    pub f_tolerance: f64,
    /// ...and the simplex diameter drops below this.
    pub x_tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iterations: 300,
            initial_step: 0.3,
            f_tolerance: 1e-12,
            x_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn lerp(from: &[f64], to: &[f64], t: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let mut p: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect();
    project(&mut p, bounds);
    p
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = start.len();
    assert_eq!(bounds.len(), n, "one bound per coordinate");
    let mut x0 = start.to_vec();
    project(&mut x0, bounds);

    let mut simplex = vec![x0.clone()];
    for i in 0..n {
        let mut p = x0.clone();
        let (lo, hi) = bounds[i];
        // Step inward if the start sits on the upper bound.
        p[i] = if p[i] + opts.initial_step <= hi {
            p[i] + opts.initial_step
        } else {
            (p[i] - opts.initial_step).max(lo)
        };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tolerance && diameter <= opts.x_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();

        let reflected = lerp(&centroid, &worst, -REFLECT, bounds);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = lerp(&centroid, &worst, -EXPAND, bounds);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        // Outside contraction towards the reflected point, else inside.
        let (target, accept_below) = if fr < values[n] {
            (&reflected, fr)
        } else {
            (&worst, values[n])
        };
        let contracted = lerp(&centroid, target, CONTRACT, bounds);
        let fc = f(&contracted);
        if fc < accept_below {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = lerp(&best, &simplex[i], SHRINK, bounds);
            values[i] = f(&simplex[i]);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is nonempty");
    NelderMeadResult {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        converged,
    }
}
