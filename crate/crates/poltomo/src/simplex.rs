//! Derivative-free Nelder-Mead simplex minimizer.
//!
//! Standard reflection/expansion/contraction/shrink moves. Convergence is
//! declared when the best value improves by less than a relative tolerance
//! over a full cycle of n+1 iterations, or when the simplex collapses below
//! the step tolerance.

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Relative improvement of the best value over one full cycle below which
    /// the search stops.
    pub relative_tolerance: f64,
    /// Simplex diameter (max-norm) below which the search stops.
    pub step_tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            relative_tolerance: 1e-10,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: u64,
    pub evaluations: u64,
    pub converged: bool,
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

/// Minimizes `f` starting from `x0`, displacing each coordinate by the
/// matching entry of `steps` to build the initial simplex.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    options: &SimplexOptions,
) -> SimplexResult {
    assert_eq!(x0.len(), steps.len(), "one step per coordinate");
    let n = x0.len();
    assert!(n >= 1, "need at least one parameter");

    let mut evaluations: u64 = 0;
    let mut eval = |x: &[f64], evals: &mut u64| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vertex> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evaluations);
    simplex.push(Vertex {
        x: x0.to_vec(),
        f: f0,
    });
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = if steps[i] != 0.0 { steps[i] } else { 1e-3 };
        x[i] += step;
        let fx = eval(&x, &mut evaluations);
        simplex.push(Vertex { x, f: fx });
    }
    simplex.sort_by(|a, b| a.f.total_cmp(&b.f));

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const BETA: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut iterations: u64 = 0;
    let mut converged = false;
    let mut cycle_best = simplex[0].f;

    for iter in 0..options.max_iterations {
        iterations = iter as u64 + 1;

        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, &xi) in centroid.iter_mut().zip(&v.x) {
                *c += xi / n as f64;
            }
        }

        let worst = simplex[n].f;
        let second_worst = simplex[n - 1].f;
        let best = simplex[0].f;

        let reflected: Vec<f64> = centroid
            .iter()
            .zip(&simplex[n].x)
            .map(|(&c, &w)| c + ALPHA * (c - w))
            .collect();
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected < best {
            let expanded: Vec<f64> = centroid
                .iter()
                .zip(&reflected)
                .map(|(&c, &r)| c + GAMMA * (r - c))
                .collect();
            let f_expanded = eval(&expanded, &mut evaluations);
            if f_expanded < f_reflected {
                simplex[n] = Vertex {
                    x: expanded,
                    f: f_expanded,
                };
            } else {
                simplex[n] = Vertex {
                    x: reflected,
                    f: f_reflected,
                };
            }
        } else if f_reflected < second_worst {
            simplex[n] = Vertex {
                x: reflected,
                f: f_reflected,
            };
        } else {
            let (base, f_base) = if f_reflected < worst {
                (&reflected, f_reflected)
            } else {
                (&simplex[n].x, worst)
            };
            let contracted: Vec<f64> = centroid
                .iter()
                .zip(base)
                .map(|(&c, &b)| c + BETA * (b - c))
                .collect();
            let f_contracted = eval(&contracted, &mut evaluations);
            if f_contracted < f_base {
                simplex[n] = Vertex {
                    x: contracted,
                    f: f_contracted,
                };
            } else {
                // shrink toward the best vertex
                let best_x = simplex[0].x.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (xi, &bi) in v.x.iter_mut().zip(&best_x) {
                        *xi = bi + SIGMA * (*xi - bi);
                    }
                    v.f = eval(&v.x, &mut evaluations);
                }
            }
        }

        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));

        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| {
                v.x.iter()
                    .zip(&simplex[0].x)
                    .map(|(&a, &b)| (a - b).abs())
            })
            .fold(0.0f64, f64::max);
        if diameter < options.step_tolerance {
            converged = true;
            break;
        }

        if iterations % (n as u64 + 1) == 0 {
            let best_now = simplex[0].f;
            let improvement = (cycle_best - best_now) / cycle_best.abs().max(1e-300);
            if best_now.is_finite() && improvement.abs() < options.relative_tolerance {
                converged = true;
                break;
            }
            cycle_best = best_now;
        }
    }

    SimplexResult {
        x: simplex[0].x.clone(),
        value: simplex[0].f,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minimizes_quadratic_bowl() {
        let result = minimize(
            |x| x.iter().enumerate().map(|(i, &v)| (i as f64 + 1.0) * v * v).sum(),
            &[1.0, -2.0, 3.0],
            &[0.5, 0.5, 0.5],
            &SimplexOptions::default(),
        );
        assert!(result.converged);
        for xi in result.x {
            assert_abs_diff_eq!(xi, 0.0, epsilon = 1e-6);
        }
        assert!(result.value < 1e-11);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let rosenbrock =
            |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let result = minimize(
            rosenbrock,
            &[-1.2, 1.0],
            &[0.5, 0.5],
            &SimplexOptions::default(),
        );
        assert!(result.converged);
        assert_abs_diff_eq!(result.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(result.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn survives_infinite_regions() {
        // objective is +inf on half the plane
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2) + x[1] * x[1]
            }
        };
        let result = minimize(f, &[0.5, 1.0], &[0.2, 0.2], &SimplexOptions::default());
        assert!(result.converged);
        assert_abs_diff_eq!(result.x[0], 2.0, epsilon = 1e-5);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let options = SimplexOptions {
            max_iterations: 3,
            ..Default::default()
        };
        let result = minimize(
            |x| (x[0] - 10.0).powi(2) + (x[1] + 4.0).powi(2),
            &[0.0, 0.0],
            &[0.1, 0.1],
            &options,
        );
        assert!(!result.converged);
        assert_eq!(result.iterations, 3);
    }
}
