//! Small derivative-free optimisers and simplex utilities.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Brent's parabolic-interpolation method for the maximum of `f` on `[a, b]`.
pub fn brent_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let g = |x: f64| -f(x);
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = g(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

/// Maximum of a concave function on `[0, 1]`: golden section to `tol`, a Brent
/// refinement around the result, and both endpoints.
pub fn maximize_unit_interval<F: Fn(f64) -> f64>(f: F, tol: f64) -> (f64, f64) {
    let mut best = golden_max(&f, 0.0, 1.0, tol);
    let lo = (best.0 - 1e-3).max(0.0);
    let hi = (best.0 + 1e-3).min(1.0);
    let refined = brent_max(&f, lo, hi, 1e-12, 200);
    for cand in [refined, (0.0, f(0.0)), (1.0, f(1.0))] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    pub initial_step: f64,
    pub ftol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            initial_step: 0.5,
            ftol: 1e-12,
        }
    }
}

/// Nelder–Mead minimisation of `f` from `x0`. Returns `(argmin, min)`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> (Vec<f64>, f64) {
    let n = x0.len();
    if n == 0 {
        return (vec![], f(x0));
    }
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    for _ in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= opts.ftol * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    for j in 0..n {
                        pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    }
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[best].clone(), vals[best])
}

/// Softmax with the last logit pinned at zero: maps R^(k-1) onto the open
/// (k-1)-simplex.
pub fn softmax_pinned(x: &[f64]) -> Vec<f64> {
    let m = x.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut e: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    e.push((-m).exp());
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Inverse of [`softmax_pinned`] for a strictly positive PMF (entries are
/// floored at 1e-12 first).
pub fn softmax_pinned_inverse(p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let last = p[k - 1].max(1e-12);
    p[..k - 1].iter().map(|&v| (v.max(1e-12) / last).ln()).collect()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// All points of the simplex grid {k/steps} in `dim` coordinates.
pub fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(dim, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    rec(dim, steps, steps, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_and_brent_find_parabola_peak() {
        let f = |x: f64| -(x - 0.3).powi(2);
        let (x, _) = golden_max(f, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let (x, _) = brent_max(f, 0.0, 1.0, 1e-12, 200);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn unit_interval_endpoint() {
        let (x, v) = maximize_unit_interval(|s| (1.0 - s) * 2f64.ln(), 1e-10);
        assert_eq!(x, 0.0);
        assert_eq!(v, 2f64.ln());
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_iter: 5000, initial_step: 0.5, ftol: 1e-15 };
        let (x, v) = nelder_mead(f, &[-1.0, 1.0], &opts);
        assert!(v < 1e-8, "{x:?} {v}");
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let q = softmax_pinned(&softmax_pinned_inverse(&[0.2, 0.3, 0.5]));
        assert!((q[0] - 0.2).abs() < 1e-12 && (q[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_size() {
        assert_eq!(simplex_grid(3, 10).len(), 66);
        assert_eq!(simplex_grid(1, 10), vec![vec![1.0]]);
    }
}
