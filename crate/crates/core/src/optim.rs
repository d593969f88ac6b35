//! Derivative-free minimisation (Nelder–Mead with restarts) and a bounded
//! one-dimensional golden-section search.

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_iter: 4000, f_tol: 1e-18, x_tol: 1e-11, restarts: 6 }
    }
}

/// Minimise `f` from `start` with initial simplex offsets `step`.
///
/// Restarts rebuild the simplex around the incumbent until a restart no
/// longer improves the objective, which guards against premature collapse.
pub fn nelder_mead<F>(f: F, start: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = start.to_vec();
    let mut best_val = eval(&best);
    let mut evaluations = 1;
    let mut converged = false;
    let mut scale = 1.0;
    for _ in 0..=opts.restarts {
        let step_now: Vec<f64> = step.iter().map(|s| s * scale).collect();
        let (x, v, ok, n) = run_simplex(&eval, &best, &step_now, opts);
        evaluations += n;
        let improved = best_val - v;
        if v <= best_val {
            best = x;
            best_val = v;
        }
        converged = ok;
        if ok && improved.abs() <= opts.f_tol.max(1e-15 * best_val.abs()) {
            break;
        }
        scale *= 0.5;
    }
    Minimum { x: best, value: best_val, converged, evaluations }
}

fn run_simplex<F>(f: &F, start: &[f64], step: &[f64], opts: NelderMeadOptions) -> (Vec<f64>, f64, bool, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += if step[i] == 0.0 { 1e-3 } else { step[i] };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;

    for _ in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let f_spread = (values[n] - values[0]).abs();
        let x_spread =
            simplex[1..].iter().flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        let magnitude = simplex[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if f_spread <= opts.f_tol || x_spread <= opts.x_tol * (1.0 + magnitude) {
            return (simplex[0].clone(), values[0], true, evals);
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let toward =
            |coef: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + coef * (c - w)).collect() };

        let xr = toward(alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = toward(gamma);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = toward(rho);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = toward(-rho);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, p)| b + sigma * (p - b)).collect();
            values[i] = f(&shrunk);
            simplex[i] = shrunk;
            evals += 1;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best].clone(), values[best], false, evals)
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (hi - lo).abs() <= tol * (1.0 + c.abs().max(d.abs())) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn quadratic_bowl_3d() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 0.5 * (x[2] - 0.25).powi(2);
        let m = nelder_mead(f, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], NelderMeadOptions::default());
        assert!(m.value < 1e-14);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }
}
