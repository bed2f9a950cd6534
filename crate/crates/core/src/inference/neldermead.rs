//! Nelder-Mead simplex minimisation.

/// Reflection, expansion, contraction and shrink coefficients, stopping
/// rules, and an optional target value at which to stop early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Converged once every vertex is within this distance of the best one.
    pub diameter_tol: f64,
    pub max_evaluations: usize,
    /// Stop as soon as a value at or below this is seen.
    pub target: Option<f64>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            diameter_tol: 1e-6,
            max_evaluations: 2000,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub reached_target: bool,
}

/// Minimise `f` from `start`. The initial simplex perturbs each coordinate
/// by 5% (or 0.00025 for zero coordinates).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let d = start.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let hit = |v: f64| opts.target.is_some_and(|t| v <= t);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(start, &mut evals);
    simplex.push((start.to_vec(), v0));
    if hit(v0) || d == 0 {
        return NelderMeadResult { point: start.to_vec(), value: v0, evaluations: evals, converged: d == 0, reached_target: hit(v0) };
    }
    for i in 0..d {
        let mut x = start.to_vec();
        x[i] = if x[i] != 0.0 { x[i] * 1.05 } else { 0.00025 };
        let v = eval(&x, &mut evals);
        if hit(v) {
            return NelderMeadResult { point: x, value: v, evaluations: evals, converged: false, reached_target: true };
        }
        simplex.push((x, v));
    }

    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            return NelderMeadResult { point: best, value: simplex[0].1, evaluations: evals, converged: true, reached_target: false };
        }
        if evals >= opts.max_evaluations {
            return NelderMeadResult { point: best, value: simplex[0].1, evaluations: evals, converged: false, reached_target: false };
        }

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let (worst, worst_val) = simplex[d].clone();
        let second_val = simplex[d - 1].1;
        let best_val = simplex[0].1;

        let reflected = combine(&centroid, &worst, -opts.reflection);
        let fr = eval(&reflected, &mut evals);
        if hit(fr) {
            return NelderMeadResult { point: reflected, value: fr, evaluations: evals, converged: false, reached_target: true };
        }
        if fr < best_val {
            let expanded = combine(&centroid, &worst, -opts.reflection * opts.expansion);
            let fe = eval(&expanded, &mut evals);
            if hit(fe) {
                return NelderMeadResult { point: expanded, value: fe, evaluations: evals, converged: false, reached_target: true };
            }
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < second_val {
            simplex[d] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst_val {
            let x = combine(&centroid, &reflected, opts.contraction);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = combine(&centroid, &worst, opts.contraction);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if hit(fc) {
            return NelderMeadResult { point: contracted, value: fc, evaluations: evals, converged: false, reached_target: true };
        }
        if fc < worst_val.min(fr) {
            simplex[d] = (contracted, fc);
            continue;
        }
        for i in 1..=d {
            let x = combine(&best, &simplex[i].0, opts.shrink);
            let v = eval(&x, &mut evals);
            if hit(v) {
                return NelderMeadResult { point: x, value: v, evaluations: evals, converged: false, reached_target: true };
            }
            simplex[i] = (x, v);
        }
    }
}
