//! Derivative-free simplex minimization (Nelder–Mead) for the small
//! likelihood surfaces fitted in this crate (at most a handful of parameters).

/// Options for [`minimize`].
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Per-coordinate initial simplex displacement.
    pub init_steps: Vec<f64>,
    /// Number of restarts from the incumbent with a shrunken simplex.
    pub restarts: usize,
}

impl NelderMeadOptions {
    pub fn with_steps(init_steps: Vec<f64>) -> Self {
        NelderMeadOptions { max_iter: 2000, f_tol: 1e-10, x_tol: 1e-10, init_steps, restarts: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fval: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0` with the standard reflect/expand/contract
/// simplex updates.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> OptimResult {
    let mut best = run_simplex(&f, x0, &opts.init_steps, opts);
    for _ in 0..opts.restarts {
        let steps: Vec<f64> = opts.init_steps.iter().map(|s| s * 0.1).collect();
        let restart = run_simplex(&f, &best.x, &steps, opts);
        if restart.fval < best.fval {
            let evals = best.evals + restart.evals;
            best = restart;
            best.evals = evals;
        } else {
            best.evals += restart.evals;
            best.converged = best.converged || restart.converged;
        }
    }
    best
}

fn run_simplex<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
) -> OptimResult {
    let n = x0.len();
    assert_eq!(steps.len(), n, "one initial step per coordinate");
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if steps[i] != 0.0 { steps[i] } else { 1e-4 };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reorder: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let refvals: Vec<f64> = order.iter().map(|&i| fvals[i]).collect();
        simplex = reorder;
        fvals = refvals;

        let f_spread = fvals[n] - fvals[0];
        let x_spread = (0..n)
            .map(|j| {
                simplex
                    .iter()
                    .map(|v| (v[j] - simplex[0][j]).abs())
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        if f_spread.abs() < opts.f_tol && x_spread < opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of the n best vertices.
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for j in 0..n {
                centroid[j] += v[j] / n as f64;
            }
        }

        let at = |from: &[f64], coef: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + coef * (from[j] - centroid[j])).collect()
        };

        let reflected = at(&simplex[n], -alpha);
        let f_r = eval(&reflected, &mut evals);
        if f_r < fvals[0] {
            let expanded = at(&simplex[n], -alpha * gamma);
            let f_e = eval(&expanded, &mut evals);
            if f_e < f_r {
                simplex[n] = expanded;
                fvals[n] = f_e;
            } else {
                simplex[n] = reflected;
                fvals[n] = f_r;
            }
        } else if f_r < fvals[n - 1] {
            simplex[n] = reflected;
            fvals[n] = f_r;
        } else {
            let contracted = if f_r < fvals[n] { at(&simplex[n], -rho) } else { at(&simplex[n], rho) };
            let f_c = eval(&contracted, &mut evals);
            if f_c < fvals[n].min(f_r) {
                simplex[n] = contracted;
                fvals[n] = f_c;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=n {
                    for j in 0..n {
                        simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                    }
                    fvals[i] = eval(&simplex[i].clone(), &mut evals);
                }
            }
        }
    }

    let best = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    OptimResult { x: simplex[best].clone(), fval: fvals[best], evals, converged }
}
