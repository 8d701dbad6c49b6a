//! Derivative-free minimization.

/// Nelder–Mead settings; the defaults suit the low-dimensional,
/// well-scaled objectives used by the baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop once the simplex's objective spread falls below this.
    pub f_tol: f64,
    /// ...and its largest vertex offset falls below this.
    pub x_tol: f64,
    /// Initial simplex edge along each coordinate.
    pub step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            f_tol: 1e-11,
            x_tol: 1e-9,
            step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite objective values are treated as `+inf`.
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let dim = x0.len();
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let f0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), f0));
        for i in 0..dim {
            let mut x = x0.to_vec();
            x[i] += self.step;
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }

        let mut converged = false;
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[dim].1);
            let spread = simplex
                .iter()
                .skip(1)
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (worst - best).abs() <= self.f_tol * (1.0 + best.abs()) && spread <= self.x_tol {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[dim].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[dim].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
                continue;
            }
            // Shrink towards the best vertex.
            let x_best = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x_best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                let fx = eval(&x, &mut evals);
                *v = (x, fx);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        Minimum {
            x,
            fx,
            evals,
            converged,
        }
    }

    /// Runs from every start, then restarts from the overall best until a
    /// restart stops improving; returns the best point found.
    pub fn minimize_multi(&self, mut f: impl FnMut(&[f64]) -> f64, starts: &[Vec<f64>]) -> Minimum {
        let mut best: Option<Minimum> = None;
        let mut evals = 0;
        for s in starts {
            let m = self.minimize(&mut f, s);
            evals += m.evals;
            if best.as_ref().map_or(true, |b| m.fx < b.fx) {
                best = Some(m);
            }
        }
        let mut best = best.expect("at least one start");
        let polish = NelderMead {
            step: self.step * 0.1,
            ..*self
        };
        for _ in 0..5 {
            let m = polish.minimize(&mut f, &best.x);
            evals += m.evals;
            let improved = m.fx < best.fx - self.f_tol * (1.0 + best.fx.abs());
            if m.fx <= best.fx {
                best = Minimum {
                    converged: m.converged,
                    ..m
                };
            }
            if !improved {
                break;
            }
        }
        best.evals = evals;
        best
    }
}
