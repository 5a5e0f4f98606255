//! Two-dimensional Nelder–Mead minimiser.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: [f64; 2],
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Relative spread of the simplex values at which to stop.
    pub f_tol: f64,
    /// Absolute value spread that also counts as converged (zero-residual problems).
    pub f_abs: f64,
    /// Relative simplex diameter at which to stop.
    pub x_tol: f64,
    pub max_evaluations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { f_tol: 1e-10, f_abs: 1e-24, x_tol: 1e-13, max_evaluations: 4000 }
    }
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Minimises `f` from `start` with initial simplex edges `step`.
pub fn nelder_mead<F>(f: F, start: [f64; 2], step: [f64; 2], opts: &SimplexOptions) -> Minimum
where
    F: Fn([f64; 2]) -> f64,
{
    let eval = |x: [f64; 2]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut vals = [eval(pts[0]), eval(pts[1]), eval(pts[2])];
    let mut evaluations = 3;
    let mut converged = false;

    while evaluations < opts.max_evaluations {
        // order: best, middle, worst (stable on ties)
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = [pts[idx[0]], pts[idx[1]], pts[idx[2]]];
        vals = [vals[idx[0]], vals[idx[1]], vals[idx[2]]];

        let spread = vals[2] - vals[0];
        let scale = pts[0][0].abs().max(pts[0][1].abs()).max(1.0);
        let diameter = pts[1..]
            .iter()
            .map(|p| (p[0] - pts[0][0]).abs().max((p[1] - pts[0][1]).abs()))
            .fold(0.0, f64::max);
        if vals[0].is_finite()
            && (spread <= opts.f_tol * vals[0].abs() || spread <= opts.f_abs || diameter <= opts.x_tol * scale)
        {
            converged = true;
            break;
        }

        let centroid = lerp(pts[0], pts[1], 0.5);
        let reflected = lerp(centroid, pts[2], -1.0);
        let fr = eval(reflected);
        evaluations += 1;
        if fr < vals[0] {
            let expanded = lerp(centroid, pts[2], -2.0);
            let fe = eval(expanded);
            evaluations += 1;
            if fe < fr {
                pts[2] = expanded;
                vals[2] = fe;
            } else {
                pts[2] = reflected;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            pts[2] = reflected;
            vals[2] = fr;
        } else {
            let (contracted, fc) = if fr < vals[2] {
                let c = lerp(centroid, reflected, 0.5);
                (c, eval(c))
            } else {
                let c = lerp(centroid, pts[2], 0.5);
                (c, eval(c))
            };
            evaluations += 1;
            if fc < vals[2].min(fr) {
                pts[2] = contracted;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    pts[i] = lerp(pts[0], pts[i], 0.5);
                    vals[i] = eval(pts[i]);
                }
                evaluations += 2;
            }
        }
    }

    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Minimum { x: pts[best], value: vals[best], evaluations, converged }
}
