//! Finite differences, quadrature and interpolation on uniform grids.

use serde::{Deserialize, Serialize};

/// First derivative: 4th-order central in the interior, 2nd-order one-sided
/// at the two boundary layers.
pub fn d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 5 {
        return d1_low(f, h);
    }
    for i in 2..n - 2 {
        out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[1] = (f[2] - f[0]) / (2.0 * h);
    out[n - 2] = (f[n - 1] - f[n - 3]) / (2.0 * h);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    out
}

fn d1_low(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| match i {
            0 => (f[1] - f[0]) / h,
            _ if i == n - 1 => (f[n - 1] - f[n - 2]) / h,
            _ => (f[i + 1] - f[i - 1]) / (2.0 * h),
        })
        .collect()
}

/// Second derivative with the same stencil orders as [`d1`].
pub fn d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 5 {
        return out;
    }
    let h2 = h * h;
    for i in 2..n - 2 {
        out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / (12.0 * h2);
    }
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    out[1] = (f[0] - 2.0 * f[1] + f[2]) / h2;
    out[n - 2] = (f[n - 1] - 2.0 * f[n - 2] + f[n - 3]) / h2;
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    out
}

/// Periodic 4th-order first derivative.
pub fn d1_periodic(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let at = |k: isize| f[((i as isize + k).rem_euclid(n as isize)) as usize];
            (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h)
        })
        .collect()
}

/// Periodic 4th-order second derivative.
pub fn d2_periodic(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let at = |k: isize| f[((i as isize + k).rem_euclid(n as isize)) as usize];
            (-at(-2) + 16.0 * at(-1) - 30.0 * at(0) + 16.0 * at(1) - at(2)) / (12.0 * h * h)
        })
        .collect()
}

/// Finite-difference scheme for derivatives along the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFd {
    /// 2nd-order central, 2nd-order one-sided at the ends.
    #[default]
    Plain,
    /// 4th-order stencils everywhere (Richardson-extrapolated central differences).
    Richardson,
}

/// Time derivatives `(f', f'')` on a uniform grid of spacing `dt`.
pub fn time_derivatives(f: &[f64], dt: f64, scheme: TimeFd) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    if n < 4 {
        return (d1_low(f, dt), vec![0.0; n]);
    }
    match scheme {
        TimeFd::Plain => {
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            for k in 1..n - 1 {
                a[k] = (f[k + 1] - f[k - 1]) / (2.0 * dt);
                b[k] = (f[k - 1] - 2.0 * f[k] + f[k + 1]) / (dt * dt);
            }
            a[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
            a[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt);
            b[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (dt * dt);
            b[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / (dt * dt);
            (a, b)
        }
        TimeFd::Richardson if n >= 6 => {
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let dt2 = dt * dt;
            for k in 2..n - 2 {
                a[k] = (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]) / (12.0 * dt);
                b[k] = (-f[k - 2] + 16.0 * f[k - 1] - 30.0 * f[k] + 16.0 * f[k + 1] - f[k + 2])
                    / (12.0 * dt2);
            }
            let fwd1 = |g: &dyn Fn(usize) -> f64| {
                (-25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4)) / (12.0 * dt)
            };
            let fwd1b = |g: &dyn Fn(usize) -> f64| {
                (-3.0 * g(0) - 10.0 * g(1) + 18.0 * g(2) - 6.0 * g(3) + g(4)) / (12.0 * dt)
            };
            let fwd2 = |g: &dyn Fn(usize) -> f64| {
                (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4) - 10.0 * g(5))
                    / (12.0 * dt2)
            };
            let fwd2b = |g: &dyn Fn(usize) -> f64| {
                (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)) / (12.0 * dt2)
            };
            let left = |i: usize| f[i];
            let right = |i: usize| f[n - 1 - i];
            a[0] = fwd1(&left);
            a[1] = fwd1b(&left);
            a[n - 1] = -fwd1(&right);
            a[n - 2] = -fwd1b(&right);
            b[0] = fwd2(&left);
            b[1] = fwd2b(&left);
            b[n - 1] = fwd2(&right);
            b[n - 2] = fwd2b(&right);
            (a, b)
        }
        TimeFd::Richardson => time_derivatives(f, dt, TimeFd::Plain),
    }
}

/// Composite trapezoid weights over cells whose endpoints both satisfy `keep`.
/// Nodes outside every kept cell get weight zero.
pub fn trapezoid_weights(n: usize, h: f64, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        if keep(i) && keep(i + 1) {
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
    }
    w
}

/// Cumulative integral of `f` with the trapezoid rule plus the Euler–Maclaurin
/// end-point correction per cell; `df` is the derivative of `f`.
/// Cells where `keep` fails contribute nothing. Increments are clamped at 0
/// when `f` is nonnegative.
pub fn cumulative(f: &[f64], df: &[f64], h: f64, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let inc = if keep(i) && keep(i + 1) {
            let v = 0.5 * h * (f[i] + f[i + 1]) + h * h / 12.0 * (df[i] - df[i + 1]);
            v.max(0.0)
        } else {
            0.0
        };
        out[i + 1] = out[i] + inc;
    }
    out
}

/// Index `j` with `xs[j] <= x < xs[j+1]` for increasing `xs`, clamped to valid cells.
pub fn bracket(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    if n < 2 || x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Cubic Lagrange interpolation through the four nodes around `x`
/// (nonuniform, increasing `xs`). Falls back to linear near the ends.
pub fn interp_cubic(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let j = bracket(xs, x);
    if n < 4 {
        let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
        return ys[j] + t * (ys[j + 1] - ys[j]);
    }
    let s = j.saturating_sub(1).min(n - 4);
    let mut acc = 0.0;
    for a in s..s + 4 {
        let mut l = 1.0;
        for b in s..s + 4 {
            if a != b {
                l *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        acc += l * ys[a];
    }
    acc
}

/// Cubic Hermite interpolation on cell `[x0, x0+h]` with values and slopes at
/// both ends; `s` is the local coordinate in `[0, 1]`.
pub fn hermite(s: f64, h: f64, f0: f64, f1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * f1
        + (s3 - s2) * h * d1
}

/// Derivative in `x` of [`hermite`].
pub fn hermite_slope(s: f64, h: f64, f0: f64, f1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    ((6.0 * s2 - 6.0 * s) * f0 + (-6.0 * s2 + 6.0 * s) * f1) / h
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (3.0 * s2 - 2.0 * s) * d1
}

/// Hermite interpolation of uniformly sampled values with known slopes.
pub fn interp_hermite_uniform(a: f64, h: f64, f: &[f64], df: &[f64], x: f64) -> f64 {
    let n = f.len();
    let pos = ((x - a) / h).clamp(0.0, (n - 1) as f64);
    let j = (pos.floor() as usize).min(n - 2);
    let s = pos - j as f64;
    hermite(s, h, f[j], f[j + 1], df[j], df[j + 1])
}

/// Solve `hermite(s) = target` for `s` in `[0,1]` on a cell where the
/// interpolant brackets the target. Safeguarded Newton.
pub fn invert_hermite(h: f64, f0: f64, f1: f64, d0: f64, d1: f64, target: f64) -> f64 {
    if f1 <= f0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut s = ((target - f0) / (f1 - f0)).clamp(0.0, 1.0);
    for _ in 0..60 {
        let v = hermite(s, h, f0, f1, d0, d1) - target;
        if v.abs() <= 1e-15 * (f1.abs() + 1e-300) {
            break;
        }
        if v > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let slope = hermite_slope(s, h, f0, f1, d0, d1) * h;
        let mut next = if slope > 0.0 { s - v / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() < 1e-16 {
            s = next;
            break;
        }
        s = next;
    }
    s
}

/// Trapezoid integral over a nonuniform increasing abscissa.
pub fn trapezoid_nonuniform(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, a: f64, b: f64) -> (Vec<f64>, f64) {
        let h = (b - a) / (n - 1) as f64;
        ((0..n).map(|i| a + h * i as f64).collect(), h)
    }

    #[test]
    fn spatial_stencils_exact_on_cubics() {
        let (x, h) = grid(40, -1.0, 2.0);
        let f: Vec<f64> = x.iter().map(|x| x * x * x - 2.0 * x).collect();
        let df = d1(&f, h);
        let ddf = d2(&f, h);
        for i in 2..38 {
            assert!((df[i] - (3.0 * x[i] * x[i] - 2.0)).abs() < 1e-9);
            assert!((ddf[i] - 6.0 * x[i]).abs() < 1e-8);
        }
        // boundary stencils are exact on quadratics
        let q: Vec<f64> = x.iter().map(|x| x * x).collect();
        let dq = d1(&q, h);
        let ddq = d2(&q, h);
        assert!((dq[0] - 2.0 * x[0]).abs() < 1e-10);
        assert!((dq[39] - 2.0 * x[39]).abs() < 1e-10);
        assert!((ddq[0] - 2.0).abs() < 1e-7);
        assert!((ddq[39] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn time_stencils() {
        let (t, dt) = grid(20, 0.0, 1.0);
        let f: Vec<f64> = t.iter().map(|t| t.powi(4) - t * t).collect();
        let (a, b) = time_derivatives(&f, dt, TimeFd::Richardson);
        for k in 0..20 {
            assert!((a[k] - (4.0 * t[k].powi(3) - 2.0 * t[k])).abs() < 1e-10, "k={k}");
            assert!((b[k] - (12.0 * t[k] * t[k] - 2.0)).abs() < 1e-8, "k={k}");
        }
        let g: Vec<f64> = t.iter().map(|t| 3.0 * t * t - t).collect();
        let (a, b) = time_derivatives(&g, dt, TimeFd::Plain);
        for k in 0..20 {
            assert!((a[k] - (6.0 * t[k] - 1.0)).abs() < 1e-10);
            assert!((b[k] - 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn periodic_derivative() {
        let n = 64;
        let h = std::f64::consts::TAU / n as f64;
        let f: Vec<f64> = (0..n).map(|i| (h * i as f64).sin()).collect();
        let df = d1_periodic(&f, h);
        let ddf = d2_periodic(&f, h);
        for i in 0..n {
            let x = h * i as f64;
            assert!((df[i] - x.cos()).abs() < 1e-5);
            assert!((ddf[i] + x.sin()).abs() < 1e-5);
        }
    }

    #[test]
    fn cumulative_is_fourth_order() {
        let (x, h) = grid(101, 0.0, 1.0);
        let f: Vec<f64> = x.iter().map(|x| x * x * x).collect();
        let df: Vec<f64> = x.iter().map(|x| 3.0 * x * x).collect();
        let c = cumulative(&f, &df, h, |_| true);
        for i in 0..101 {
            assert!((c[i] - x[i].powi(4) / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_inverse_roundtrip() {
        let (f0, f1, d0, d1, h) = (0.2, 0.7, 3.0, 2.0, 0.2);
        for k in 1..10 {
            let target = f0 + (f1 - f0) * k as f64 / 10.0;
            let s = invert_hermite(h, f0, f1, d0, d1, target);
            assert!((hermite(s, h, f0, f1, d0, d1) - target).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_interp_exact_on_cubics() {
        let xs = [0.0, 0.3, 0.7, 1.2, 2.0, 2.1];
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x - x).collect();
        for &x in &[0.1, 0.5, 1.0, 1.9, 2.05] {
            assert!((interp_cubic(&xs, &ys, x) - (x * x * x - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn bracket_edges() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bracket(&xs, -1.0), 0);
        assert_eq!(bracket(&xs, 1.5), 1);
        assert_eq!(bracket(&xs, 3.0), 2);
    }
}
