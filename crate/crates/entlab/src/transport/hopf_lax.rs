//! Hopf–Lax engine: phases by inf-convolution on the grid, densities along
//! straight characteristics.

use super::{check_times, Clock, Engine, GeodesicPath, Trajectories};
use crate::error::{LabError, Result};
use crate::geometry::{ManifoldModel, ScalarField};

/// `inf_y φ₀(y) + (x − y)²/2s` at every grid node, refined by a parabola
/// through the discrete minimizer and its neighbours.
pub fn inf_convolution(model: &ManifoldModel, phi0: &ScalarField, s: f64) -> Vec<f64> {
    let g = &model.grid;
    let f = phi0.values();
    if s <= 0.0 {
        return f.to_vec();
    }
    let xs = g.nodes();
    let cost = |x: f64, j: usize| f[j] + (x - xs[j]).powi(2) / (2.0 * s);
    xs.iter()
        .map(|&x| {
            let (mut best, mut arg) = (f64::INFINITY, 0);
            for j in 0..xs.len() {
                let c = cost(x, j);
                if c < best {
                    best = c;
                    arg = j;
                }
            }
            if arg == 0 || arg + 1 == xs.len() {
                return best;
            }
            let (a, b, c) = (cost(x, arg - 1), best, cost(x, arg + 1));
            let curv = a - 2.0 * b + c;
            if curv <= 0.0 {
                return best;
            }
            let off = 0.5 * (a - c) / curv;
            let refined = b - 0.25 * (a - c) * off;
            if off.abs() <= 1.0 && refined <= best {
                refined
            } else {
                best
            }
        })
        .collect()
}

/// Evolve `(φ₀, ρ₀)` given at `times[0]` along the Hamilton–Jacobi flow.
pub fn hopf_lax_evolve(
    model: &ManifoldModel,
    phi0: &ScalarField,
    rho0: &ScalarField,
    times: &[f64],
) -> Result<GeodesicPath> {
    check_times(times)?;
    if times[0] < 0.0 {
        return Err(LabError::Precondition("Hopf–Lax times must be nonnegative".into()));
    }
    if phi0.len() != model.grid.size || rho0.len() != model.grid.size {
        return Err(LabError::Grid("field length differs from the grid".into()));
    }
    let t0 = times[0];
    let (d1, d2) = model.derivatives(phi0);
    let traj = Trajectories::new(model, rho0.values(), |j| d1[j], |j| d2[j], Clock { shift: t0, rate: 1.0 })?;
    let min_dv = traj.dvel.iter().copied().fold(f64::INFINITY, f64::min);
    if min_dv < 0.0 {
        let caustic = t0 - 1.0 / min_dv;
        if caustic <= times[times.len() - 1] {
            return Err(LabError::Caustic { time: caustic });
        }
    }
    GeodesicPath::assemble(model, times, traj, Engine::HopfLax, |k| {
        ScalarField::new(&model.grid, inf_convolution(model, phi0, k.t - t0))
    })
}

/// `∫|∂ₜφ + ½|∇φ|²| ρ dμ` at sample `k` over the interior 90% of the grid,
/// with second-order time differences.
pub fn hj_residual(path: &GeodesicPath, k: usize) -> f64 {
    let n = path.times.len();
    let dt = path.times[1] - path.times[0];
    let phi = |j: usize, i: usize| path.phases[j].values()[i];
    let dphi_dt = |i: usize| {
        if n < 3 {
            (phi(1, i) - phi(0, i)) / dt
        } else if k == 0 {
            (-3.0 * phi(0, i) + 4.0 * phi(1, i) - phi(2, i)) / (2.0 * dt)
        } else if k + 1 == n {
            (3.0 * phi(n - 1, i) - 4.0 * phi(n - 2, i) + phi(n - 3, i)) / (2.0 * dt)
        } else {
            (phi(k + 1, i) - phi(k - 1, i)) / (2.0 * dt)
        }
    };
    let (d1, _) = path.model.derivatives(&path.phases[k]);
    let rho = path.densities[k].values();
    let w = super::presets::support_weights(&path.model, rho);
    let size = path.model.grid.size;
    let margin = size / 20;
    (margin..size - margin)
        .map(|i| w[i] * rho[i] * (dphi_dt(i) + 0.5 * d1[i] * d1[i]).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::tests::line;
    use crate::transport::{interpolate_path, monotone_map, recover_phase, sample_density, uniform_times, DensitySpec};

    #[test]
    fn quadratic_inf_convolution() {
        let m = line(-12.0, 12.0, 1024);
        let phi0 = ScalarField::from_fn(&m.grid, |x| 0.5 * x * x).unwrap();
        let out = inf_convolution(&m, &phi0, 0.7);
        for (i, v) in out.iter().enumerate() {
            let x = m.grid.x(i);
            if x.abs() < 8.0 {
                assert!((v - x * x / (2.0 * 1.7)).abs() < 1e-10, "x={x}");
            }
        }
        let zero = ScalarField::from_fn(&m.grid, |_| 0.0).unwrap();
        assert!(inf_convolution(&m, &zero, 1.0).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn model_phase_from_positive_time() {
        let m = line(-24.0, 24.0, 2048);
        let tau = 0.5;
        let phi0 = ScalarField::from_fn(&m.grid, |x| x * x / (2.0 * tau)).unwrap();
        let rho0 = sample_density(&m, &DensitySpec::Gaussian { mean: 0.0, std: 2f64.sqrt() * tau }).unwrap();
        let times = uniform_times(tau, 1.5, 65);
        let p = hopf_lax_evolve(&m, &phi0, &rho0, &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            for (i, v) in p.phases[k].values().iter().enumerate() {
                let x = m.grid.x(i);
                if x.abs() < 8.0 {
                    assert!((v - x * x / (2.0 * t)).abs() < 1e-9);
                }
            }
            assert!(hj_residual(&p, k) < 5e-3, "{}", hj_residual(&p, k));
        }
        let std_end = 2f64.sqrt() * 1.5;
        let want = sample_density(&m, &DensitySpec::Gaussian { mean: 0.0, std: std_end }).unwrap();
        let l1: f64 = want.values().iter().zip(p.densities[64].values()).map(|(a, b)| (a - b).abs()).sum::<f64>() * m.grid.h();
        assert!(l1 < 1e-6, "{l1}");
    }

    #[test]
    fn frozen_and_caustic() {
        let m = line(-12.0, 12.0, 512);
        let rho0 = sample_density(&m, &DensitySpec::Gaussian { mean: 0.0, std: 1.0 }).unwrap();
        let zero = ScalarField::from_fn(&m.grid, |_| 0.0).unwrap();
        let p = hopf_lax_evolve(&m, &zero, &rho0, &uniform_times(0.0, 1.0, 5)).unwrap();
        assert_eq!(p.densities[0], p.densities[4]);
        assert!(p.phases[4].max_abs() < 1e-15);
        let focus = ScalarField::from_fn(&m.grid, |x| -x * x).unwrap();
        match hopf_lax_evolve(&m, &focus, &rho0, &uniform_times(0.0, 1.0, 5)) {
            Err(LabError::Caustic { time }) => assert!((time - 0.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn agrees_with_quantile_engine() {
        let m = line(-24.0, 24.0, 2048);
        let r0 = sample_density(&m, &DensitySpec::Gaussian { mean: -1.0, std: 1.0 }).unwrap();
        let r1 = sample_density(&m, &DensitySpec::Gaussian { mean: 1.5, std: 1.7 }).unwrap();
        let map = monotone_map(&m, &r0, &r1).unwrap();
        let times = uniform_times(0.0, 1.0, 9);
        let q = interpolate_path(&m, &map, &r0, &times).unwrap();
        let phi0 = recover_phase(&m, &map, 0.0).unwrap();
        let h = hopf_lax_evolve(&m, &phi0, &r0, &times).unwrap();
        for k in 0..times.len() {
            let l1: f64 = q.densities[k]
                .values()
                .iter()
                .zip(h.densities[k].values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * m.grid.h();
            assert!(l1 < 5e-3, "k={k} {l1}");
        }
    }
}
