use serde::{Deserialize, Serialize};

/// Saturating curve `Q = a·(1 − e^{−b·L}) + c` fitted to per-size means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Sum of squared residuals over the fitted means.
    pub sse: f64,
}

impl RqCurve {
    pub fn eval(&self, l_p: f64) -> f64 {
        self.a * -(-self.b * l_p).exp_m1() + self.c
    }

    /// Least squares over (a, b, c): coarse log-spaced scan over `b` with a
    /// closed-form solve for (a, c) at each `b`, then golden-section
    /// refinement of `log b` around the best scan point.
    pub fn fit(xs: &[f64], ys: &[f64]) -> RqCurve {
        assert_eq!(xs.len(), ys.len());
        assert!(!xs.is_empty());
        if xs.len() == 1 {
            return RqCurve {
                a: 0.0,
                b: 1.0,
                c: ys[0],
                sse: 0.0,
            };
        }
        let x_max = xs.iter().cloned().fold(f64::MIN, f64::max).abs().max(f64::MIN_POSITIVE);
        let x_min = xs
            .iter()
            .cloned()
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min)
            .min(x_max);
        let (lo, hi) = ((1e-3 / x_max).ln(), (1e3 / x_min).ln());
        const STEPS: usize = 240;
        let scan: Vec<RqCurve> = (0..=STEPS)
            .map(|i| solve_linear(xs, ys, (lo + (hi - lo) * i as f64 / STEPS as f64).exp()))
            .collect();
        let best = (0..scan.len()).fold(0, |best, i| if scan[i].sse < scan[best].sse { i } else { best });
        let step = (hi - lo) / STEPS as f64;
        let (mut a, mut d) = (lo + step * (best as f64 - 1.0), lo + step * (best as f64 + 1.0));
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let f = |lb: f64| solve_linear(xs, ys, lb.exp());
        let mut b = d - phi * (d - a);
        let mut c = a + phi * (d - a);
        let (mut fb, mut fc) = (f(b), f(c));
        for _ in 0..80 {
            if fb.sse < fc.sse {
                d = c;
                c = b;
                fc = fb;
                b = d - phi * (d - a);
                fb = f(b);
            } else {
                a = b;
                b = c;
                fb = fc;
                c = a + phi * (d - a);
                fc = f(c);
            }
        }
        let refined = if fb.sse < fc.sse { fb } else { fc };
        if refined.sse < scan[best].sse {
            refined
        } else {
            scan[best]
        }
    }
}

fn solve_linear(xs: &[f64], ys: &[f64], b: f64) -> RqCurve {
    let n = xs.len() as f64;
    let phi: Vec<f64> = xs.iter().map(|&x| -(-b * x).exp_m1()).collect();
    let pm = phi.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let spp: f64 = phi.iter().map(|p| (p - pm).powi(2)).sum();
    let spy: f64 = phi.iter().zip(ys).map(|(p, y)| (p - pm) * (y - ym)).sum();
    let (a, c) = if spp > 1e-24 {
        let a = spy / spp;
        (a, ym - a * pm)
    } else {
        (0.0, ym)
    };
    let sse = phi.iter().zip(ys).map(|(p, y)| (a * p + c - y).powi(2)).sum();
    RqCurve { a, b, c, sse }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_curve() {
        let truth = RqCurve {
            a: 9.0,
            b: 0.7,
            c: 0.5,
            sse: 0.0,
        };
        let xs = [0.25, 0.5, 1.0, 2.0, 3.0, 4.5];
        let ys: Vec<f64> = xs.iter().map(|&x| truth.eval(x)).collect();
        let fit = RqCurve::fit(&xs, &ys);
        assert!((fit.a - 9.0).abs() < 1e-5, "{fit:?}");
        assert!((fit.b - 0.7).abs() < 1e-5);
        assert!((fit.c - 0.5).abs() < 1e-5);
        assert!(fit.sse < 1e-12);
        assert_eq!(fit, RqCurve::fit(&xs, &ys));
    }

    #[test]
    fn constant_data_gives_flat_curve() {
        let fit = RqCurve::fit(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]);
        for x in [1.0, 2.5, 10.0] {
            assert!((fit.eval(x) - 4.0).abs() < 1e-12);
        }
    }
}
