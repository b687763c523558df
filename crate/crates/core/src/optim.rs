//! Unconstrained minimisation: Nelder-Mead simplex, BFGS on finite-difference
//! gradients, and parallel multi-start.

use rayon::prelude::*;

use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadConfig<T> {
    /// Stop once every vertex lies within this distance (max-norm) of the best.
    pub diameter_tol: T,
    /// Hard cap on objective evaluations per run.
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub initial_step: T,
    /// Restart once from the best vertex after the simplex collapses.
    pub restart: bool,
}

impl<T: Real> Default for NelderMeadConfig<T> {
    fn default() -> Self {
        NelderMeadConfig {
            diameter_tol: T::lit(1e-8),
            max_evals: 10_000,
            initial_step: T::lit(0.25),
            restart: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub point: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimises `f` starting from `start`. Non-finite objective values are
/// treated as `+inf`, so infeasible regions can be signalled that way.
///
/// Uses the dimension-adaptive coefficients of Gao and Han, which behave
/// better than the textbook ones beyond two or three dimensions. With
/// `restart`, the search starts again from the best vertex after the simplex
/// collapses, to guard against premature convergence.
pub fn nelder_mead<T, F>(mut f: F, start: &[T], config: &NelderMeadConfig<T>) -> Minimum<T>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let (mut best, mut best_value, mut converged) = simplex_run(&mut eval, start, config, &mut evals);
    if config.restart && converged && evals < config.max_evals {
        let (point, value, ok) = simplex_run(&mut eval, &best, config, &mut evals);
        if value < best_value {
            best = point;
            best_value = value;
        }
        converged = ok;
    }
    Minimum { point: best, value: best_value, evaluations: evals, converged }
}

fn simplex_run<T, E>(eval: &mut E, start: &[T], config: &NelderMeadConfig<T>, evals: &mut usize) -> (Vec<T>, T, bool)
where
    T: Real,
    E: FnMut(&[T], &mut usize) -> T,
{
    let n = start.len();
    let nf = T::from_count(n.max(1));
    let reflect = T::one();
    let expand = T::one() + T::lit(2.0) / nf;
    let contract = T::lit(0.75) - T::lit(0.5) / nf;
    let shrink = T::one() - T::one() / nf;

    let mut vertices: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    vertices.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] = v[i] + config.initial_step;
        vertices.push(v);
    }
    let mut values: Vec<T> = vertices.iter().map(|v| eval(v, evals)).collect();

    let mut centroid = vec![T::zero(); n];
    let along = |from: &[T], to: &[T], t: T| -> Vec<T> {
        from.iter().zip(to).map(|(&a, &b)| a + t * (b - a)).collect()
    };

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        vertices = order.iter().map(|&i| vertices[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = vertices[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&vertices[0]).map(|(&a, &b)| (a - b).abs()))
            .fold(T::zero(), |acc, d| acc.max(d));
        if diameter < config.diameter_tol && values[0].is_finite() {
            return (vertices[0].clone(), values[0], true);
        }
        if *evals >= config.max_evals {
            return (vertices[0].clone(), values[0], false);
        }

        for c in centroid.iter_mut() {
            *c = T::zero();
        }
        for v in &vertices[..n] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c = *c + x / nf;
            }
        }
        let worst = n;
        let reflected = along(&centroid, &vertices[worst], -reflect);
        let f_r = eval(&reflected, evals);
        if f_r < values[0] {
            let expanded = along(&centroid, &vertices[worst], -reflect * expand);
            let f_e = eval(&expanded, evals);
            if f_e < f_r {
                vertices[worst] = expanded;
                values[worst] = f_e;
            } else {
                vertices[worst] = reflected;
                values[worst] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            vertices[worst] = reflected;
            values[worst] = f_r;
            continue;
        }
        let (candidate, f_c) = if f_r < values[worst] {
            let outside = along(&centroid, &reflected, contract);
            let f = eval(&outside, evals);
            (outside, f)
        } else {
            let inside = along(&centroid, &vertices[worst], contract);
            let f = eval(&inside, evals);
            (inside, f)
        };
        if f_c < values[worst].min(f_r) {
            vertices[worst] = candidate;
            values[worst] = f_c;
            continue;
        }
        let best = vertices[0].clone();
        for i in 1..=n {
            vertices[i] = along(&best, &vertices[i], shrink);
            values[i] = eval(&vertices[i], evals);
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsConfig<T> {
    /// Stop once the predicted decrease `g' H^-1 g / 2` falls below this.
    pub decrease_tol: T,
    pub max_iters: usize,
    /// Central-difference step, relative to `max(1, |x_i|)`.
    pub fd_step: T,
    /// Largest step (max-norm) taken in one iteration.
    pub max_step: T,
}

impl<T: Real> Default for BfgsConfig<T> {
    fn default() -> Self {
        BfgsConfig { decrease_tol: T::lit(1e-10), max_iters: 200, fd_step: T::lit(1e-5), max_step: T::one() }
    }
}

fn fd_gradient<T, E>(eval: &mut E, x: &[T], fx: T, step: T, evals: &mut usize) -> Option<Vec<T>>
where
    T: Real,
    E: FnMut(&[T], &mut usize) -> T,
{
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(T::one());
        probe[i] = x[i] + h;
        let up = eval(&probe, evals);
        probe[i] = x[i] - h;
        let down = eval(&probe, evals);
        probe[i] = x[i];
        // one-sided differences at the edge of a feasible region
        let gi = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (h + h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => return None,
        };
        g.push(gi);
    }
    Some(g)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Quasi-Newton minimisation with an Armijo backtracking line search.
/// Suited to polishing from a point already inside the basin.
pub fn bfgs<T, F>(mut f: F, start: &[T], config: &BfgsConfig<T>) -> Minimum<T>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    let mut x = start.to_vec();
    let mut fx = eval(&x, &mut evals);
    let stop = |x: Vec<T>, fx: T, evals: usize, converged: bool| Minimum { point: x, value: fx, evaluations: evals, converged };
    if !fx.is_finite() {
        return stop(x, fx, evals, false);
    }
    let Some(mut g) = fd_gradient(&mut eval, &x, fx, config.fd_step, &mut evals) else {
        return stop(x, fx, evals, false);
    };
    let identity = |n: usize| -> Vec<Vec<T>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect()
    };
    let mut hinv = identity(n);
    let mut curvature_known = false;
    for _ in 0..config.max_iters {
        let mut d: Vec<T> = hinv.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            hinv = identity(n);
            curvature_known = false;
            d = g.iter().map(|&v| -v).collect();
            slope = -dot(&g, &g);
        }
        let predicted = -slope / T::lit(2.0);
        if curvature_known && predicted < config.decrease_tol {
            return stop(x, fx, evals, true);
        }
        if slope == T::zero() {
            return stop(x, fx, evals, true);
        }
        let longest = d.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        if longest > config.max_step {
            let shrink = config.max_step / longest;
            d.iter_mut().for_each(|v| *v = *v * shrink);
            slope = slope * shrink;
        }
        let mut t = T::one();
        let (xn, fxn) = loop {
            let cand: Vec<T> = x.iter().zip(&d).map(|(&a, &b)| a + t * b).collect();
            let fc = eval(&cand, &mut evals);
            if fc.is_finite() && fc <= fx + T::lit(1e-4) * t * slope {
                break (cand, fc);
            }
            t = t * T::lit(0.5);
            if t < T::lit(1e-12) {
                // no descent left at working precision
                let ok = curvature_known && predicted < config.decrease_tol * T::lit(1e4);
                return stop(x, fx, evals, ok);
            }
        };
        let Some(gn) = fd_gradient(&mut eval, &xn, fxn, config.fd_step, &mut evals) else {
            return stop(xn, fxn, evals, false);
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::lit(1e-12) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !curvature_known {
                let scale = sy / dot(&y, &y);
                hinv = identity(n).into_iter().map(|r| r.into_iter().map(|v| v * scale).collect()).collect();
                curvature_known = true;
            }
            let rho = T::one() / sy;
            let hy: Vec<T> = hinv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] = hinv[i][j] - rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    stop(x, fx, evals, false)
}

#[derive(Clone, Debug)]
pub struct MultiStart<T> {
    pub best: Minimum<T>,
    /// Objective value at each starting point, in start order.
    pub start_values: Vec<T>,
    pub runs: Vec<Minimum<T>>,
}

/// Runs [`nelder_mead`] from every start (in parallel) and keeps the lowest
/// minimum; ties resolve to the earliest start.
pub fn multi_start<T, F>(f: F, starts: &[Vec<T>], config: &NelderMeadConfig<T>) -> MultiStart<T>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    assert!(!starts.is_empty(), "multi_start needs at least one start");
    let runs: Vec<Minimum<T>> = starts.par_iter().map(|s| nelder_mead(&f, s, config)).collect();
    let start_values = starts.iter().map(|s| f(s)).collect();
    let best = runs
        .iter()
        .fold(None::<&Minimum<T>>, |acc, r| match acc {
            Some(b) if !(r.value < b.value) => Some(b),
            _ => Some(r),
        })
        .cloned()
        .expect("non-empty");
    MultiStart { best, start_values, runs }
}
