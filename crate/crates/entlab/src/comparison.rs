//! Distortion coefficients, comparison solutions and the `DC_N` classifier.

use serde::{Deserialize, Serialize};

use crate::entropy::Generator;
use crate::error::{LabError, Result};
use crate::geometry::Dim;

/// Below this value of `θ√(|K|/N)` the coefficients use their series.
pub const SERIES_CUTOFF: f64 = 1e-4;
/// Relative slack of a `DC_N` condition on the probe grid.
pub const DCN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionQuery {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: Dim,
    pub theta: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distortion {
    /// `+∞` past the conjugate point.
    pub sigma: f64,
    pub tau: f64,
}

/// `σ^{(t)}_{K,N}(θ)`
pub fn sigma(k: f64, n: Dim, theta: f64, t: f64) -> f64 {
    if n.0 <= 0.0 {
        return if k > 0.0 && theta > 0.0 { f64::INFINITY } else { t };
    }
    let kk = k * theta * theta * n.recip();
    if k > 0.0 && kk >= std::f64::consts::PI.powi(2) {
        return f64::INFINITY;
    }
    let a = kk.abs().sqrt();
    if a < SERIES_CUTOFF {
        // sin(ta)/sin(a) = t (1 + a²(1 − t²)/6 + O(a⁴)), sign flipped for sinh
        return t * (1.0 + kk * (1.0 - t * t) / 6.0);
    }
    if k > 0.0 {
        (t * a).sin() / a.sin()
    } else {
        (t * a).sinh() / a.sinh()
    }
}

/// `τ^{(t)}_{K,N}(θ) = t^{1/N} σ^{(t)}_{K,N−1}(θ)^{1−1/N}`, with `τ = t` at `N = 1`.
pub fn tau(k: f64, n: Dim, theta: f64, t: f64) -> f64 {
    if n.is_infinite() {
        return sigma(k, n, theta, t);
    }
    if n.0 <= 1.0 || k == 0.0 {
        return t;
    }
    let s = sigma(k, Dim(n.0 - 1.0), theta, t);
    if s.is_infinite() {
        return f64::INFINITY;
    }
    t.powf(1.0 / n.0) * s.powf(1.0 - 1.0 / n.0)
}

pub fn distortion_coefficients(q: DistortionQuery) -> Distortion {
    Distortion { sigma: sigma(q.k, q.n, q.theta, q.t), tau: tau(q.k, q.n, q.theta, q.t) }
}

/// Data of the comparison problems on the normalized parameter `u ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonQuery {
    #[serde(rename = "K")]
    pub k: f64,
    pub m: Dim,
    pub theta: f64,
    /// Boundary values `N(0)`, `N(1)`.
    pub n0: f64,
    pub n1: f64,
    /// `H′(0)` for the Riccati problem.
    pub hprime0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonProfiles {
    pub times: Vec<f64>,
    /// `σ(1−u) N₀ + σ(u) N₁`
    pub nmk: Vec<f64>,
    /// Two-point solution of `N″ = −(Kθ²/m) N` by RK4.
    pub nmk_ode: Vec<f64>,
    /// Solution of `H″ + H′²/m + Kθ² = 0`; `−∞` from the blow-up on.
    pub hprime: Vec<f64>,
    pub blowup: Option<f64>,
}

pub fn comparison_profiles(q: ComparisonQuery, times: &[f64]) -> Result<ComparisonProfiles> {
    let kt2 = q.k * q.theta * q.theta;
    if !q.m.is_infinite() && q.k > 0.0 && kt2 >= q.m.0 * std::f64::consts::PI.powi(2) {
        return Err(LabError::ConjugatePoint { value: kt2 });
    }
    if times.iter().any(|t| !(0.0..=1.0).contains(t)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::Precondition("comparison times must be increasing in [0, 1]".into()));
    }
    let nmk = times
        .iter()
        .map(|&u| sigma(q.k, q.m, q.theta, 1.0 - u) * q.n0 + sigma(q.k, q.m, q.theta, u) * q.n1)
        .collect();
    let c = kt2 * q.m.recip();
    let linear = |_: f64, y: [f64; 2]| [y[1], -c * y[0]];
    let a = ode::rk4_at(linear, [1.0, 0.0], 0.0, &[1.0], ode::RK4_STEPS)[0];
    let b = ode::rk4_at(linear, [0.0, 1.0], 0.0, &[1.0], ode::RK4_STEPS)[0];
    let slope = (q.n1 - q.n0 * a[0]) / b[0];
    let nmk_ode = ode::rk4_at(linear, [q.n0, slope], 0.0, times, ode::RK4_STEPS).iter().map(|y| y[0]).collect();
    let inv_m = q.m.recip();
    let (hprime, blowup) = ode::dopri5_scalar(|_, y| -inv_m * y * y - kt2, q.hprime0, 0.0, times);
    Ok(ComparisonProfiles { times: times.to_vec(), nmk, nmk_ode, hprime, blowup })
}

/// Verdicts of the four `DC_N` conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcnClass {
    pub generator: Generator,
    #[serde(rename = "N")]
    pub n: Dim,
    pub member: bool,
    /// `r p₁′ ≥ (1 − 1/N) p₁`
    pub pressure_growth: bool,
    /// `p₂ + p₁/N ≥ 0`
    pub p2_bound: bool,
    /// `p₁/r^{1−1/N}` nondecreasing
    pub ratio_monotone: bool,
    /// `δ ↦ δ^N e(δ^{−N})` convex (`e^δ e(e^{−δ})` when `N = ∞`)
    pub u_convex: bool,
    /// `K_{N,U}/K = inf p₁(r)/r^{1−1/N}`
    pub k_ratio: f64,
    /// `sup p₁(r)/r^{1−1/N}`, the factor used when `K < 0`
    pub sup_ratio: f64,
}

/// `n` log-spaced probes on `[lo, hi]`.
pub fn probe_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn dcn_classify(gen: Generator, n: Dim) -> Result<DcnClass> {
    dcn_classify_on(gen, n, &probe_grid(1e-6, 1e6, 2001))
}

pub fn dcn_classify_on(gen: Generator, n: Dim, probes: &[f64]) -> Result<DcnClass> {
    if !(n.0 >= 1.0) {
        return Err(LabError::Params(format!("N = {n} < 1")));
    }
    let inv = n.recip();
    let e = 1.0 - inv;
    let holds = |v: f64, scale: f64| v >= -DCN_TOL * scale;

    let pressure_growth = probes.iter().all(|&r| {
        let (a, b) = (r * gen.dp1(r), e * gen.p1(r));
        holds(a - b, a.abs() + b.abs())
    });
    let p2_bound = probes.iter().all(|&r| {
        let (a, b) = (gen.p2(r), inv * gen.p1(r));
        holds(a + b, a.abs() + b.abs())
    });
    let ratio: Vec<f64> = probes.iter().map(|&r| gen.p1(r) / r.powf(e)).collect();
    let ratio_monotone = ratio.windows(2).all(|w| holds(w[1] - w[0], w[0].abs().max(w[1].abs())));

    let (delta, u): (Vec<f64>, Vec<f64>) = if n.is_infinite() {
        probes.iter().rev().map(|&r| (-r.ln(), gen.e(r) / r)).unzip()
    } else {
        probes.iter().rev().map(|&r| (r.powf(-inv), gen.e(r) / r)).unzip()
    };
    let slopes: Vec<f64> = (0..delta.len() - 1).map(|i| (u[i + 1] - u[i]) / (delta[i + 1] - delta[i])).collect();
    let u_convex = slopes.windows(2).all(|w| holds(w[1] - w[0], w[0].abs().max(w[1].abs())));

    let verdicts = [pressure_growth, p2_bound, ratio_monotone, u_convex];
    if verdicts.iter().any(|v| *v != verdicts[0]) {
        return Err(LabError::DcnDisagreement {
            n: n.0,
            detail: format!("{}: {verdicts:?}", gen.name()),
        });
    }

    // power-law continuation of the ratio beyond the probe range
    let k = ratio.len();
    let slope = |i: usize, j: usize| (ratio[j].ln() - ratio[i].ln()) / (probes[j].ln() - probes[i].ln());
    let low = slope(0, 1);
    let high = slope(k - 2, k - 1);
    let k_ratio = if low > 1e-8 || high < -1e-8 {
        0.0
    } else {
        ratio.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let sup_ratio = if low < -1e-8 || high > 1e-8 {
        f64::INFINITY
    } else {
        ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(DcnClass {
        generator: gen,
        n,
        member: verdicts[0],
        pressure_growth,
        p2_bound,
        ratio_monotone,
        u_convex,
        k_ratio,
        sup_ratio,
    })
}

pub(crate) mod ode {
    /// Steps per unit length for the fixed-step solver.
    pub const RK4_STEPS: usize = 4096;

    /// Classical RK4 from `t0`, reporting the state at each increasing time.
    pub fn rk4_at(f: impl Fn(f64, [f64; 2]) -> [f64; 2], y0: [f64; 2], t0: f64, at: &[f64], per_unit: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(at.len());
        let (mut t, mut y) = (t0, y0);
        let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
        for &target in at {
            let span = target - t;
            let steps = ((span.abs() * per_unit as f64).ceil() as usize).max(1);
            let h = span / steps as f64;
            for _ in 0..steps {
                let k1 = f(t, y);
                let k2 = f(t + 0.5 * h, add(y, k1, 0.5 * h));
                let k3 = f(t + 0.5 * h, add(y, k2, 0.5 * h));
                let k4 = f(t + h, add(y, k3, h));
                for i in 0..2 {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                t += h;
            }
            t = target;
            out.push(y);
        }
        out
    }

    const BLOWUP: f64 = 1e12;

    /// Adaptive Dormand–Prince 5(4) for a scalar ODE. Values from the first
    /// blow-up on are `−∞`; the blow-up time is returned.
    pub fn dopri5_scalar(f: impl Fn(f64, f64) -> f64, y0: f64, t0: f64, at: &[f64]) -> (Vec<f64>, Option<f64>) {
        const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] =
            [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
        let (rtol, atol) = (1e-12, 1e-14);
        let mut out = Vec::with_capacity(at.len());
        let (mut t, mut y) = (t0, y0);
        let mut h: f64 = 1e-3;
        let mut blowup = None;
        for &target in at {
            while blowup.is_none() && t < target {
                let step = h.min(target - t);
                let mut k = [0.0; 7];
                for s in 0..7 {
                    let yi = y + step * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
                    k[s] = f(t + C[s] * step, yi);
                }
                let y5 = y + step * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
                let y4 = y + step * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
                let err = (y5 - y4).abs() / (atol + rtol * y.abs().max(y5.abs()));
                let tiny = 1e-14 * (1.0 + t.abs());
                if !err.is_finite() {
                    h = step * 0.2;
                    if h < tiny {
                        blowup = Some(t);
                    }
                    continue;
                }
                if err <= 1.0 {
                    t += step;
                    y = y5;
                    if y.abs() > BLOWUP {
                        blowup = Some(t);
                        break;
                    }
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * fac;
                if h < tiny {
                    blowup = Some(t);
                }
            }
            out.push(if blowup.is_some_and(|b| b <= target) { f64::NEG_INFINITY } else { y });
        }
        (out, blowup)
    }
}
