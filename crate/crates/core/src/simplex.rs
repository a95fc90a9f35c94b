//! Nelder-Mead downhill simplex minimizer.

/// Stopping rules and initial simplex size.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex costs falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter (in parameter units) falls below this.
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            f_tol: 1e-14,
            x_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimize `cost` from `start`, with per-coordinate initial steps `step`.
///
/// Non-finite costs are treated as `+inf`, so callers can reject infeasible
/// points by returning `f64::INFINITY`.
pub fn minimize<F>(start: &[f64], step: &[f64], opts: SimplexOptions, mut cost: F) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert_eq!(step.len(), n, "step length must match dimension");
    let evals = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let c = cost(x);
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(start.to_vec());
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let mut centroid = vec![0.0; n];

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diameter = pts[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.f_tol && diameter <= opts.x_tol.max(1e-300))
            || diameter == 0.0
        {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_evals {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64, towards: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(towards)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-alpha, &pts[n]);
        let f_r = eval(&reflected);
        if f_r < vals[0] {
            let expanded = along(-gamma, &pts[n]);
            let f_e = eval(&expanded);
            if f_e < f_r {
                pts[n] = expanded;
                vals[n] = f_e;
            } else {
                pts[n] = reflected;
                vals[n] = f_r;
            }
            continue;
        }
        if f_r < vals[n - 1] {
            pts[n] = reflected;
            vals[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < vals[n] {
            let c = along(-rho, &pts[n]);
            let f = eval(&c);
            (c, f)
        } else {
            let c = along(rho, &pts[n]);
            let f = eval(&c);
            (c, f)
        };
        if f_c < vals[n].min(f_r) {
            pts[n] = contracted;
            vals[n] = f_c;
            continue;
        }
        // shrink toward the best vertex
        let best = pts[0].clone();
        for i in 1..=n {
            for (x, b) in pts[i].iter_mut().zip(&best) {
                *x = b + sigma * (*x - b);
            }
            vals[i] = eval(&pts[i]);
        }
    }

    SimplexResult {
        x: pts[0].clone(),
        cost: vals[0],
        evals: evals.get(),
        converged,
    }
}
