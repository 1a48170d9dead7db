//! Nonlinear conjugate gradient (Polak–Ribière, non-negative beta) with a
//! backtracking Armijo line search.

pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    fn value_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub line_searches: usize,
    pub max_backtracks: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Cap on how much the initial trial step may grow between searches.
    pub max_ratio: f64,
    /// Cap on extrapolation past an accepted first trial, as a multiple of it.
    pub max_extrapolate: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            line_searches: 3,
            max_backtracks: 30,
            armijo: 1e-4,
            max_ratio: 10.0,
            max_extrapolate: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub initial: f64,
    pub last: f64,
    pub accepted_steps: usize,
    pub restarts: usize,
}

fn step(dst: &mut [f64], x: &[f64], dir: &[f64], alpha: f64) {
    for ((t, xi), di) in dst.iter_mut().zip(x).zip(dir) {
        *t = xi + alpha * di;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs up to `opts.line_searches` conjugate-gradient line searches on `x`
/// in place. Returns without moving if the starting value is non-finite.
///
/// The first trial step is `1 / (1 + |g|²)` along the direction; later
/// searches scale the previous accepted step by the ratio of slopes.
pub fn minimize<O: Objective>(x: &mut Vec<f64>, objective: &mut O, opts: CgOptions) -> CgOutcome {
    let (mut f, mut g) = objective.value_and_gradient(x);
    let mut outcome = CgOutcome {
        initial: f,
        last: f,
        accepted_steps: 0,
        restarts: 0,
    };
    if !f.is_finite() {
        return outcome;
    }
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut trial = vec![0.0; x.len()];
    let mut alpha = 1.0 / (1.0 + dot(&g, &g));
    let mut prev_slope: Option<f64> = None;

    for search in 0..opts.line_searches {
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = -dot(&g, &g);
            outcome.restarts += 1;
        }
        if slope == 0.0 {
            break;
        }
        if let Some(prev) = prev_slope {
            alpha *= (prev / slope).min(opts.max_ratio);
        }
        prev_slope = Some(slope);
        let mut accepted = None;
        for attempt in 0..opts.max_backtracks {
            step(&mut trial, x, &dir, alpha);
            let f_trial = objective.value(&trial);
            if f_trial.is_finite() && f_trial <= f + opts.armijo * alpha * slope {
                accepted = Some((f_trial, attempt));
                break;
            }
            // minimizer of the quadratic through f, slope and f_trial
            alpha = match f_trial.is_finite() {
                true => {
                    let curv = f_trial - f - slope * alpha;
                    (-slope * alpha * alpha / (2.0 * curv)).clamp(0.1 * alpha, 0.5 * alpha)
                }
                false => 0.1 * alpha,
            };
        }
        let Some((mut f_new, attempt)) = accepted else {
            break;
        };
        if attempt == 0 {
            // first trial accepted: try the interpolated minimizer if it lies further out
            let curv = f_new - f - slope * alpha;
            if curv > 0.0 {
                let ext = (-slope * alpha * alpha / (2.0 * curv)).min(opts.max_extrapolate * alpha);
                if ext > alpha {
                    let mut probe = vec![0.0; x.len()];
                    step(&mut probe, x, &dir, ext);
                    let f_ext = objective.value(&probe);
                    if f_ext.is_finite() && f_ext < f_new {
                        trial = probe;
                        f_new = f_ext;
                        alpha = ext;
                    }
                }
            } else {
                let ext = opts.max_extrapolate * alpha;
                let mut probe = vec![0.0; x.len()];
                step(&mut probe, x, &dir, ext);
                let f_ext = objective.value(&probe);
                if f_ext.is_finite() && f_ext < f_new {
                    trial = probe;
                    f_new = f_ext;
                    alpha = ext;
                }
            }
        }
        std::mem::swap(x, &mut trial);
        outcome.accepted_steps += 1;
        f = f_new;
        outcome.last = f;

        if search + 1 == opts.line_searches {
            break;
        }
        let (f_eval, g_new) = objective.value_and_gradient(x);
        f = f_eval;
        let gg = dot(&g, &g);
        let beta = if gg > 0.0 {
            ((dot(&g_new, &g_new) - dot(&g_new, &g)) / gg).max(0.0)
        } else {
            0.0
        };
        dir.iter_mut()
            .zip(&g_new)
            .for_each(|(d, gi)| *d = -gi + beta * *d);
        g = g_new;
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ill-conditioned quadratic 0.5 Σ k_i x_i².
    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn value(&mut self, x: &[f64]) -> f64 {
            0.5 * x.iter().zip(&self.0).map(|(v, k)| k * v * v).sum::<f64>()
        }
        fn value_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
            let g = x.iter().zip(&self.0).map(|(v, k)| k * v).collect();
            (self.value(x), g)
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&mut self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            (self.value(x), vec![g0, g1])
        }
    }

    #[test]
    fn decreases_quadratic_monotonically() {
        let mut q = Quadratic(vec![1.0, 10.0, 100.0]);
        let mut x = vec![1.0, 1.0, 1.0];
        let mut prev = q.value(&x);
        for _ in 0..20 {
            let out = minimize(&mut x, &mut q, CgOptions::default());
            assert!(out.last <= out.initial);
            assert!(out.last <= prev);
            prev = out.last;
        }
        assert!(prev < 1e-3, "final value {prev}");
    }

    #[test]
    fn makes_progress_on_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let start = Rosenbrock.value(&x);
        for _ in 0..200 {
            minimize(&mut x, &mut Rosenbrock, CgOptions::default());
        }
        let end = Rosenbrock.value(&x);
        assert!(end < start * 1e-2, "{start} -> {end}");
    }

    #[test]
    fn stationary_point_does_not_move() {
        let mut q = Quadratic(vec![1.0, 2.0]);
        let mut x = vec![0.0, 0.0];
        let out = minimize(&mut x, &mut q, CgOptions::default());
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(out.accepted_steps, 0);
    }
}
