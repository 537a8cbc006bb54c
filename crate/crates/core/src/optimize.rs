//! Derivative-free minimisers: Brent's method in one dimension and
//! Nelder–Mead with restarts in several.

#[derive(Debug, Clone, Copy)]
pub struct Minimum1d {
    pub x: f64,
    pub value: f64,
}

/// Brent's golden-section / parabolic-interpolation search on `[a, b]`.
pub fn brent_minimize(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Minimum1d {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12 * tol.max(1e-300).min(1.0) + tol;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
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
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
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
    // the interior search never evaluates the bracket ends
    let (fa, fb) = (f(a), f(b));
    let mut best = Minimum1d { x, value: fx };
    if fa < best.value {
        best = Minimum1d { x: a, value: fa };
    }
    if fb < best.value {
        best = Minimum1d { x: b, value: fb };
    }
    best
}

#[derive(Debug, Clone)]
pub struct MinimumNd {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex search, restarted from the incumbent until a restart
/// no longer improves it.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    initial_step: &[f64],
    xtol: f64,
    max_iter: usize,
) -> MinimumNd {
    let mut best = nelder_mead_once(&f, start, initial_step, xtol, max_iter);
    let mut iterations = best.iterations;
    for _ in 0..20 {
        let step: Vec<f64> = initial_step
            .iter()
            .zip(&best.x)
            .map(|(s, x)| (s * 1e-2).max(1e-3 * x.abs()).min(*s))
            .collect();
        let next = nelder_mead_once(&f, &best.x, &step, xtol, max_iter);
        iterations += next.iterations;
        let improved = next.value < best.value;
        let moved = next
            .x
            .iter()
            .zip(&best.x)
            .any(|(a, b)| (a - b).abs() > xtol);
        if improved {
            best = next;
        }
        if !improved || !moved {
            break;
        }
    }
    best.iterations = iterations;
    best
}

fn nelder_mead_once(
    f: &impl Fn(&[f64]) -> f64,
    start: &[f64],
    step: &[f64],
    xtol: f64,
    max_iter: usize,
) -> MinimumNd {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= xtol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = towards(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = towards(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = towards(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = towards(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = simplex[i]
                        .iter()
                        .zip(&best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let (idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    MinimumNd {
        x: simplex[idx].clone(),
        value: values[idx],
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_minimum() {
        let m = brent_minimize(|x| (x - 0.3).powi(2), -2.0, 5.0, 1e-12);
        assert!((m.x - 0.3).abs() < 1e-9, "{m:?}");
        assert!(m.value < 1e-18);
    }

    #[test]
    fn brent_returns_boundary_minimum() {
        let m = brent_minimize(|x| x, 0.0, 1.0, 1e-12);
        assert_eq!(m.x, 0.0);
        let m = brent_minimize(|x| -x, 0.0, 1.0, 1e-12);
        assert_eq!(m.x, 1.0);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[0.5, 0.5], 1e-12, 20_000);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-7 && (m.x[1] - 1.0).abs() < 1e-7,
            "{:?}",
            m.x
        );
    }
}
