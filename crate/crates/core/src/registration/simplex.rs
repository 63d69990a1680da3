//! Nelder–Mead downhill simplex.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop once the spread of function values over the simplex is below this.
    pub f_tolerance: f64,
    /// Stop once every vertex lies within this distance of the best one.
    pub x_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// True when a tolerance was met rather than the iteration limit.
    pub converged: bool,
}

/// Minimizes `f` starting from the simplex `x0`, `x0 + steps[i]`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[Vec<f64>],
    opts: &SimplexOptions,
) -> SimplexOutcome {
    let n = x0.len();
    assert_eq!(steps.len(), n, "one step vector per dimension");
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for s in steps {
        pts.push(x0.iter().zip(s).map(|(a, b)| a + b).collect());
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable ordering keeps runs reproducible when values tie.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diameter = pts[1..]
            .iter()
            .map(|p| dist(p, &pts[0]))
            .fold(0.0, f64::max);
        if spread.abs() < opts.f_tolerance || diameter < opts.x_tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, if fc <= fr { fc } else { f64::INFINITY })
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, if fc < vals[n] { fc } else { f64::INFINITY })
        };
        if fc.is_finite() {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        let best = pts[0].clone();
        for i in 1..=n {
            pts[i] = best.iter().zip(&pts[i]).map(|(b, p)| b + 0.5 * (p - b)).collect();
            vals[i] = eval(&pts[i]);
        }
    }
    SimplexOutcome {
        x: pts[0].clone(),
        f: vals[0],
        iterations,
        evaluations,
        converged,
    }
}

/// Axis-aligned steps of the given per-coordinate size.
pub fn axis_steps(sizes: &[f64]) -> Vec<Vec<f64>> {
    (0..sizes.len())
        .map(|i| {
            let mut s = vec![0.0; sizes.len()];
            s[i] = sizes[i];
            s
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
