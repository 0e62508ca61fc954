//! Wasserstein geodesics between densities on a model: monotone (quantile)
//! transport, displacement interpolation and a Hopf–Lax grid engine.
//!
//! Every path carries its source nodes as trajectories. Densities, Jacobians
//! and phase derivatives along the trajectories are exact functions of time
//! given the map, which keeps time differences free of resampling noise. The
//! grid-sampled densities and phases are derived from them.

mod hopf_lax;
pub mod presets;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{BakryEmeryParams, Dim, Grid, Jet, Local, ManifoldModel, ModelKind, ScalarField};
use crate::numerics;

pub use hopf_lax::{hj_residual, hopf_lax_evolve, inf_convolution};
pub use presets::{sample_density, sample_phase, DensitySpec, PhaseSpec};

/// Quantile levels outside `[QUANTILE_CLAMP, 1 − QUANTILE_CLAMP]` use the
/// affine continuation of the map.
pub const QUANTILE_CLAMP: f64 = 1e-9;
/// Source nodes below this fraction of the peak density are not transported.
pub const SUPPORT_FLOOR: f64 = 1e-16;
/// Tolerance on the mass of endpoint densities.
pub const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap {
    pub source_grid: Grid,
    pub map_values: Vec<f64>,
    pub map_derivative: Vec<f64>,
    /// Nodes where the source density is positive.
    pub support: Vec<bool>,
}

impl TransportMap {
    pub fn identity(grid: Grid) -> Self {
        TransportMap {
            source_grid: grid,
            map_values: grid.nodes(),
            map_derivative: vec![1.0; grid.size],
            support: vec![true; grid.size],
        }
    }

    pub fn displacement(&self, j: usize) -> f64 {
        self.map_values[j] - self.source_grid.x(j)
    }
}

/// Affine time change `s = rate (t − shift)` from path time to the
/// geodesic parameter of the underlying map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clock {
    pub shift: f64,
    pub rate: f64,
}

impl Clock {
    pub const IDENTITY: Clock = Clock { shift: 0.0, rate: 1.0 };

    /// Traverse parameter `[0, 1]` over path times `[t0, t1]`.
    pub fn window(t0: f64, t1: f64) -> Clock {
        Clock { shift: t0, rate: 1.0 / (t1 - t0) }
    }

    pub fn param(&self, t: f64) -> f64 {
        self.rate * (t - self.shift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Quantile,
    HopfLax,
    Model,
}

/// Source nodes carried along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    /// Grid indices of the transported nodes.
    pub index: Vec<usize>,
    pub x: Vec<f64>,
    /// μ-quadrature weight of each source node.
    pub weight: Vec<f64>,
    /// Source density w.r.t. μ, normalized so that `Σ weight·rho0 = 1`.
    pub rho0: Vec<f64>,
    /// Displacement per unit geodesic parameter and its derivative.
    pub vel: Vec<f64>,
    pub dvel: Vec<f64>,
    pub clock: Clock,
}

impl Trajectories {
    fn new(
        model: &ManifoldModel,
        rho0: &[f64],
        vel: impl Fn(usize) -> f64,
        dvel: impl Fn(usize) -> f64,
        clock: Clock,
    ) -> Result<Self> {
        let w = presets::support_weights(model, rho0);
        let peak = rho0.iter().fold(0.0f64, |m, v| m.max(*v));
        if !(peak > 0.0) {
            return Err(LabError::Mass { mass: 0.0 });
        }
        let mut t = Trajectories {
            index: Vec::new(),
            x: Vec::new(),
            weight: Vec::new(),
            rho0: Vec::new(),
            vel: Vec::new(),
            dvel: Vec::new(),
            clock,
        };
        for j in 0..rho0.len() {
            if rho0[j] >= SUPPORT_FLOOR * peak && w[j] > 0.0 {
                t.index.push(j);
                t.x.push(model.grid.x(j));
                t.weight.push(w[j]);
                t.rho0.push(rho0[j]);
                t.vel.push(vel(j));
                t.dvel.push(dvel(j));
            }
        }
        let total: f64 = t.weight.iter().zip(&t.rho0).map(|(w, r)| w * r).sum();
        t.rho0.iter_mut().for_each(|r| *r /= total);
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Mass carried by each node.
    pub fn mass(&self) -> Vec<f64> {
        self.weight.iter().zip(&self.rho0).map(|(w, r)| w * r).collect()
    }

    /// Squared speed of each node in path-time units.
    pub fn speed_sq(&self) -> Vec<f64> {
        self.vel.iter().map(|v| (self.clock.rate * v).powi(2)).collect()
    }

    /// `W₂` per unit path time.
    pub fn speed(&self) -> f64 {
        self.mass().iter().zip(self.speed_sq()).map(|(m, v)| m * v).sum::<f64>().sqrt()
    }

    /// Kinematic state at path time `t`.
    pub fn state(&self, model: &ManifoldModel, t: f64) -> Result<Kinematics> {
        let s = self.clock.param(t);
        let rate = self.clock.rate;
        let n = self.len();
        let mut k = Kinematics {
            t,
            position: Vec::with_capacity(n),
            jacobian: Vec::with_capacity(n),
            density: Vec::with_capacity(n),
            cell: Vec::with_capacity(n),
            jet: Vec::with_capacity(n),
            local: Vec::with_capacity(n),
        };
        for j in 0..n {
            let y = self.x[j] + s * self.vel[j];
            let fp = 1.0 + s * self.dvel[j];
            if !(fp > 0.0) {
                return Err(LabError::Jacobian { t });
            }
            if !model.grid.contains(y) || !model.admits(y) {
                return Err(LabError::ExitsDomain { t, x: y });
            }
            let jac = fp * model.log_mu_ratio(self.x[j], y).exp();
            if !(jac > 0.0) || !jac.is_finite() {
                return Err(LabError::Jacobian { t });
            }
            k.position.push(y);
            k.jacobian.push(jac);
            k.density.push(self.rho0[j] / jac);
            k.cell.push(self.weight[j] * jac);
            k.jet.push(Jet { d1: rate * self.vel[j], d2: rate * self.dvel[j] / fp });
            k.local.push(model.local(y));
        }
        for j in 1..n {
            if self.index[j] == self.index[j - 1] + 1 && k.position[j] <= k.position[j - 1] {
                return Err(LabError::NonMonotone { t });
            }
        }
        Ok(k)
    }

    /// Contiguous runs of grid indices.
    fn runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for j in 1..=self.len() {
            if j == self.len() || self.index[j] != self.index[j - 1] + 1 {
                out.push(start..j);
                start = j;
            }
        }
        out
    }
}

/// Trajectory data at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub t: f64,
    pub position: Vec<f64>,
    /// Jacobian of the flow relative to μ.
    pub jacobian: Vec<f64>,
    /// Density w.r.t. μ at the transported point.
    pub density: Vec<f64>,
    /// μ-measure carried by each node's cell.
    pub cell: Vec<f64>,
    /// Phase derivatives at the transported point.
    pub jet: Vec<Jet>,
    pub local: Vec<Local>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub model: ManifoldModel,
    pub params: BakryEmeryParams,
    pub times: Vec<f64>,
    pub densities: Vec<ScalarField>,
    pub phases: Vec<ScalarField>,
    /// `jacobians[k][j]`: μ-Jacobian of trajectory `j` at time `k`.
    pub jacobians: Vec<Vec<f64>>,
    /// `W₂` between the densities at path times `s` and `s + 1`.
    pub theta: f64,
    pub engine: Engine,
    pub trajectories: Trajectories,
    pub kinematics: Vec<Kinematics>,
}

impl GeodesicPath {
    fn assemble(
        model: &ManifoldModel,
        times: &[f64],
        traj: Trajectories,
        engine: Engine,
        phases: impl Fn(&Kinematics) -> Result<ScalarField>,
    ) -> Result<Self> {
        check_times(times)?;
        let mut kinematics = Vec::with_capacity(times.len());
        let mut densities = Vec::with_capacity(times.len());
        let mut phase_fields = Vec::with_capacity(times.len());
        for &t in times {
            let k = traj.state(model, t)?;
            densities.push(resample(model, &traj, &k));
            phase_fields.push(phases(&k)?);
            kinematics.push(k);
        }
        Ok(GeodesicPath {
            model: model.clone(),
            params: default_params(model),
            times: times.to_vec(),
            densities,
            phases: phase_fields,
            jacobians: kinematics.iter().map(|k| k.jacobian.clone()).collect(),
            theta: traj.speed(),
            engine,
            trajectories: traj,
            kinematics,
        })
    }

    pub fn with_params(mut self, params: BakryEmeryParams) -> Self {
        self.params = params;
        self
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Infimum of `Ric_{m,n}` over every transported point of the path.
    pub fn min_ric_mn(&self, m: Dim) -> f64 {
        self.kinematics
            .iter()
            .flat_map(|k| k.local.iter().map(move |l| l.ric_mn(m)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Weighted L¹ residual of `ρ₀(x) = ρ_t(F_t x) J_t(x)` with `ρ_t` read
    /// from the grid-sampled density.
    pub fn pushforward_residual(&self, k: usize) -> f64 {
        let tr = &self.trajectories;
        let kin = &self.kinematics[k];
        let g = &self.model.grid;
        let xs = g.nodes();
        let rho = self.densities[k].values();
        (0..tr.len())
            .map(|j| {
                let r = numerics::interp_cubic(&xs, rho, kin.position[j]).max(0.0);
                tr.weight[j] * (tr.rho0[j] - r * kin.jacobian[j]).abs()
            })
            .sum()
    }
}

fn default_params(model: &ManifoldModel) -> BakryEmeryParams {
    let m = if model.is_weighted() { f64::INFINITY } else { model.dim() };
    BakryEmeryParams::new(m, 0.0, 2.0, m.max(2.0))
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(LabError::Precondition("need at least two times".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(LabError::NonFinite("times"));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(LabError::Precondition("times must increase".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(LabError::Precondition("times must be uniformly spaced".into()));
        }
    }
    Ok(())
}

/// `n` uniform samples on `[t0, t1]`.
pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect()
}

/// Grid-sampled density from trajectory data.
fn resample(model: &ManifoldModel, traj: &Trajectories, k: &Kinematics) -> ScalarField {
    let g = &model.grid;
    let mut out = vec![0.0; g.size];
    for run in traj.runs() {
        if run.len() < 2 {
            continue;
        }
        let ys = &k.position[run.clone()];
        let rs = &k.density[run.clone()];
        let (lo, hi) = (ys[0], ys[ys.len() - 1]);
        let h = g.h();
        let first = (((lo - g.a) / h).ceil().max(0.0)) as usize;
        for (i, v) in out.iter_mut().enumerate().skip(first) {
            let x = g.x(i);
            if x > hi {
                break;
            }
            if x >= lo {
                *v = numerics::interp_cubic(ys, rs, x).max(0.0);
            }
        }
    }
    ScalarField::from_vec_unchecked(out)
}

/// Integrate a velocity field known at increasing points `ys` into a phase on
/// the grid, with `φ(a) = 0`. Outside `[ys₀, ys_last]` the velocity is
/// continued affinely.
pub(crate) fn phase_from_velocity(grid: &Grid, ys: &[f64], d1: &[f64], d2: &[f64]) -> ScalarField {
    let n = ys.len();
    let h = grid.h();
    let mut p = vec![0.0; grid.size];
    let mut q = vec![0.0; grid.size];
    for i in 0..grid.size {
        let x = grid.x(i);
        let (a, b) = if n == 0 {
            (0.0, 0.0)
        } else if x < ys[0] {
            (d1[0] + d2[0] * (x - ys[0]), d2[0])
        } else if x > ys[n - 1] {
            (d1[n - 1] + d2[n - 1] * (x - ys[n - 1]), d2[n - 1])
        } else {
            (numerics::interp_cubic(ys, d1, x), numerics::interp_cubic(ys, d2, x))
        };
        p[i] = a;
        q[i] = b;
    }
    let mut phi = vec![0.0; grid.size];
    for i in 0..grid.size - 1 {
        phi[i + 1] = phi[i] + 0.5 * h * (p[i] + p[i + 1]) + h * h / 12.0 * (q[i] - q[i + 1]);
    }
    ScalarField::from_vec_unchecked(phi)
}

fn check_endpoint(model: &ManifoldModel, rho: &ScalarField) -> Result<()> {
    let v = rho.values();
    if v.iter().any(|r| *r < 0.0) {
        return Err(LabError::Precondition("negative density".into()));
    }
    let m = presets::mass(model, v);
    if (m - 1.0).abs() > MASS_TOL {
        return Err(LabError::Mass { mass: m });
    }
    let peak = v.iter().fold(0.0f64, |a, b| a.max(*b));
    if v[0] > SUPPORT_FLOOR * peak || v[v.len() - 1] > SUPPORT_FLOOR * peak {
        return Err(LabError::SupportAtBoundary);
    }
    Ok(())
}

/// Normalized CDF of a coordinate mass density, its node slopes, and the
/// slope derivatives used for Hermite evaluation.
struct Cdf {
    g: Vec<f64>,
    m: Vec<f64>,
    dm: Vec<f64>,
}

impl Cdf {
    fn new(mass_density: Vec<f64>, h: f64) -> Self {
        let n = mass_density.len();
        let mut dm = vec![0.0; n];
        // derivatives restricted to each positive run
        let mut i = 0;
        while i < n {
            if mass_density[i] > 0.0 {
                let start = i;
                while i < n && mass_density[i] > 0.0 {
                    i += 1;
                }
                let run = &mass_density[start..i];
                if run.len() >= 5 {
                    dm[start..i].copy_from_slice(&numerics::d1(run, h));
                }
            } else {
                i += 1;
            }
        }
        let g = numerics::cumulative(&mass_density, &dm, h, |k| mass_density[k] > 0.0);
        let total = g[n - 1];
        Cdf {
            g: g.iter().map(|v| v / total).collect(),
            m: mass_density.iter().map(|v| v / total).collect(),
            dm: dm.iter().map(|v| v / total).collect(),
        }
    }

    fn inverse(&self, grid: &Grid, level: f64) -> f64 {
        let i = numerics::bracket(&self.g, level);
        let h = grid.h();
        let s = numerics::invert_hermite(h, self.g[i], self.g[i + 1], self.m[i], self.m[i + 1], level);
        grid.x(i) + s * h
    }

    fn slope_at(&self, grid: &Grid, x: f64) -> f64 {
        numerics::interp_hermite_uniform(grid.a, grid.h(), &self.m, &self.dm, x)
    }
}

/// Monotone rearrangement `T = G₁⁻¹ ∘ G₀` in the model coordinate.
pub fn monotone_map(model: &ManifoldModel, rho0: &ScalarField, rho1: &ScalarField) -> Result<TransportMap> {
    let g = model.grid;
    if g.periodic {
        return Err(LabError::Precondition("monotone transport needs a non-periodic grid".into()));
    }
    check_endpoint(model, rho0)?;
    check_endpoint(model, rho1)?;
    let coord = |rho: &ScalarField| -> Vec<f64> {
        rho.values().iter().enumerate().map(|(i, r)| r * model.mu_density(g.x(i))).collect()
    };
    let c0 = Cdf::new(coord(rho0), g.h());
    let c1 = Cdf::new(coord(rho1), g.h());
    let n = g.size;
    let mut t = vec![f64::NAN; n];
    let mut dt = vec![f64::NAN; n];
    let mut valid = Vec::new();
    for j in 0..n {
        let level = c0.g[j];
        if c0.m[j] <= 0.0 || !(QUANTILE_CLAMP..=1.0 - QUANTILE_CLAMP).contains(&level) {
            continue;
        }
        let y = c1.inverse(&g, level);
        let slope = c1.slope_at(&g, y);
        if slope > 0.0 {
            t[j] = y;
            dt[j] = c0.m[j] / slope;
            valid.push(j);
        }
    }
    let (Some(&lo), Some(&hi)) = (valid.first(), valid.last()) else {
        return Err(LabError::Precondition("source support too small for the grid".into()));
    };
    for j in 0..n {
        if j < lo {
            dt[j] = dt[lo];
            t[j] = t[lo] + dt[lo] * (g.x(j) - g.x(lo));
        } else if j > hi {
            dt[j] = dt[hi];
            t[j] = t[hi] + dt[hi] * (g.x(j) - g.x(hi));
        }
    }
    // gaps between valid nodes: linear in the node index
    for w in valid.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in a + 1..b {
            let s = (j - a) as f64 / (b - a) as f64;
            t[j] = t[a] + s * (t[b] - t[a]);
            dt[j] = dt[a] + s * (dt[b] - dt[a]);
        }
    }
    Ok(TransportMap {
        source_grid: g,
        map_values: t,
        map_derivative: dt,
        support: rho0.values().iter().map(|r| *r > 0.0).collect(),
    })
}

/// Displacement interpolation along a monotone map.
pub fn interpolate_path(
    model: &ManifoldModel,
    map: &TransportMap,
    rho0: &ScalarField,
    times: &[f64],
) -> Result<GeodesicPath> {
    interpolate_path_with(model, map, rho0, times, Clock::IDENTITY)
}

pub fn interpolate_path_with(
    model: &ManifoldModel,
    map: &TransportMap,
    rho0: &ScalarField,
    times: &[f64],
    clock: Clock,
) -> Result<GeodesicPath> {
    let traj = Trajectories::new(
        model,
        rho0.values(),
        |j| map.displacement(j),
        |j| map.map_derivative[j] - 1.0,
        clock,
    )?;
    let grid = model.grid;
    GeodesicPath::assemble(model, times, traj, Engine::Quantile, |k| {
        let d1: Vec<f64> = k.jet.iter().map(|j| j.d1).collect();
        let d2: Vec<f64> = k.jet.iter().map(|j| j.d2).collect();
        Ok(phase_from_velocity(&grid, &k.position, &d1, &d2))
    })
}

/// Phase at geodesic parameter `t` of the map, pinned to 0 at the left end.
pub fn recover_phase(model: &ManifoldModel, map: &TransportMap, t: f64) -> Result<ScalarField> {
    let g = model.grid;
    let mut ys = Vec::new();
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    for j in 0..g.size {
        if !map.support[j] {
            continue;
        }
        let x = g.x(j);
        let v = map.map_values[j] - x;
        let fp = 1.0 + t * (map.map_derivative[j] - 1.0);
        let y = x + t * v;
        if !(fp > 0.0) || ys.last().is_some_and(|p| y <= *p) {
            return Err(LabError::NonMonotone { t });
        }
        ys.push(y);
        d1.push(v);
        d2.push((map.map_derivative[j] - 1.0) / fp);
    }
    Ok(phase_from_velocity(&g, &ys, &d1, &d2))
}

/// Speed diagnostics of a path computed from its grid fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedReport {
    pub theta: f64,
    pub energy: Vec<f64>,
    /// `max_k |energy_k − θ²| ≤ 1e−3 θ²`
    pub constant: bool,
}

pub fn wasserstein_speed(path: &GeodesicPath) -> SpeedReport {
    let model = &path.model;
    let energy: Vec<f64> = path
        .densities
        .iter()
        .zip(&path.phases)
        .map(|(rho, phi)| {
            let (d1, _) = model.derivatives(phi);
            let w = presets::support_weights(model, rho.values());
            (0..model.grid.size).map(|i| w[i] * d1[i] * d1[i] * rho.values()[i]).sum()
        })
        .collect();
    let mean = energy.iter().sum::<f64>() / energy.len() as f64;
    let theta = mean.max(0.0).sqrt();
    let constant = energy.iter().all(|e| (e - mean).abs() <= 1e-3 * mean.max(1e-300)) || mean < 1e-24;
    SpeedReport { theta, energy, constant }
}

/// The model pair `ρ = e^{−x²/4t²}/(4πt²)^{1/2}`, `φ = x²/2t` on a line grid.
pub fn model_gaussian_path(n: u32, times: &[f64], grid: Grid) -> Result<GeodesicPath> {
    if n != 1 {
        return Err(LabError::Precondition("the model path is available for n = 1 only".into()));
    }
    check_times(times)?;
    if !(times[0] > 0.0) {
        return Err(LabError::Precondition("model path times must be positive".into()));
    }
    for &t in times {
        let s = 2.0 * t; // ρ is normal with standard deviation √2 t; tails via erfc(x / 2t)
        let out = 0.5 * statrs::function::erf::erfc(-grid.a / s) + 0.5 * statrs::function::erf::erfc(grid.b / s);
        if out > 1e-8 {
            return Err(LabError::Precondition(format!("grid holds only 1 − {out:e} of the mass at t = {t}")));
        }
    }
    let model = crate::geometry::build_model(&crate::geometry::ModelDescriptor {
        kind: ModelKind::Line,
        n: 1,
        domain: [grid.a, grid.b],
        grid_size: grid.size,
        periodic: false,
        potential: None,
    })?;
    let t0 = times[0];
    let rho = |x: f64, t: f64| (-x * x / (4.0 * t * t)).exp() / (4.0 * std::f64::consts::PI * t * t).sqrt();
    let rho0: Vec<f64> = grid.nodes().iter().map(|&x| rho(x, t0)).collect();
    let traj = Trajectories::new(&model, &rho0, |j| grid.x(j) / t0, |_| 1.0 / t0, Clock { shift: t0, rate: 1.0 })?;
    let mut path = GeodesicPath::assemble(&model, times, traj, Engine::Model, |k| {
        ScalarField::from_fn(&grid, |x| x * x / (2.0 * k.t))
    })?;
    for (k, &t) in times.iter().enumerate() {
        path.densities[k] = ScalarField::from_fn(&grid, |x| rho(x, t))?;
    }
    path.params = BakryEmeryParams::new(1.0, 0.0, 2.0, 2.0);
    Ok(path)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{build_model, ModelDescriptor};

    pub(crate) fn line(a: f64, b: f64, size: usize) -> ManifoldModel {
        build_model(&ModelDescriptor {
            kind: ModelKind::Line,
            n: 1,
            domain: [a, b],
            grid_size: size,
            periodic: false,
            potential: None,
        })
        .unwrap()
    }

    fn gauss(m: &ManifoldModel, mean: f64, std: f64) -> ScalarField {
        sample_density(m, &DensitySpec::Gaussian { mean, std }).unwrap()
    }

    #[test]
    fn gaussian_dilation_map() {
        let m = line(-24.0, 24.0, 2048);
        let map = monotone_map(&m, &gauss(&m, 0.0, 1.0), &gauss(&m, 0.0, 2.0)).unwrap();
        for j in 0..m.grid.size {
            let x = m.grid.x(j);
            if x.abs() < 5.0 {
                assert!((map.map_values[j] - 2.0 * x).abs() < 1e-7, "x={x} T={}", map.map_values[j]);
                let tol = if x.abs() < 3.0 { 1e-7 } else { 1e-6 };
                assert!((map.map_derivative[j] - 2.0).abs() < tol, "x={x}");
            }
        }
    }

    #[test]
    fn identity_and_uniform_maps() {
        let m = line(-24.0, 24.0, 2048);
        let r = gauss(&m, 0.5, 1.5);
        let map = monotone_map(&m, &r, &r).unwrap();
        for j in 0..m.grid.size {
            if map.support[j] && m.grid.x(j).abs() < 6.0 {
                assert!((map.map_values[j] - m.grid.x(j)).abs() < 1e-10);
            }
        }
        let u = line(-1.0, 3.0, 2049);
        let r0 = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 1.0 }).unwrap();
        let r1 = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 2.0 }).unwrap();
        let map = monotone_map(&u, &r0, &r1).unwrap();
        for j in 0..u.grid.size {
            if map.support[j] {
                assert!((map.map_values[j] - 2.0 * u.grid.x(j)).abs() < 1e-12);
                assert!((map.map_derivative[j] - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn map_errors() {
        let m = line(-3.0, 3.0, 256);
        let wide = sample_density(&m, &DensitySpec::Uniform { a: -3.0, b: 1.0 }).unwrap();
        let ok = gauss(&m, 0.0, 0.3);
        assert!(matches!(monotone_map(&m, &wide, &ok), Err(LabError::SupportAtBoundary)));
        let heavy = ScalarField::new(&m.grid, ok.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!(matches!(monotone_map(&m, &heavy, &ok), Err(LabError::Mass { .. })));
    }

    #[test]
    fn dilation_path() {
        let m = line(-24.0, 24.0, 2048);
        let r0 = gauss(&m, 0.0, 1.0);
        let map = monotone_map(&m, &r0, &gauss(&m, 0.0, 2.0)).unwrap();
        let times = uniform_times(0.0, 1.0, 5);
        let p = interpolate_path(&m, &map, &r0, &times).unwrap();
        assert!((p.theta - 1.0).abs() < 1e-8);
        let half = gauss(&m, 0.0, 1.5);
        let err: f64 = half.values().iter().zip(p.densities[2].values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
        for k in 0..5 {
            assert!((presets::mass(&m, p.densities[k].values()) - 1.0).abs() < 1e-6);
            assert!(p.pushforward_residual(k) < 1e-6, "k={k} {}", p.pushforward_residual(k));
        }
        // linear-in-t Jacobian on the flat line
        for (k, &t) in times.iter().enumerate() {
            for (j, jac) in p.jacobians[k].iter().enumerate() {
                let idx = p.trajectories.index[j];
                let want = (1.0 - t) + t * map.map_derivative[idx];
                assert!((jac - want).abs() <= 4.0 * f64::EPSILON * want);
            }
        }
        let s = wasserstein_speed(&p);
        assert!((s.theta - 1.0).abs() < 1e-5, "{}", s.theta);
        assert!(s.constant);
    }

    #[test]
    fn uniform_path_and_identity_path() {
        let u = line(-1.0, 3.0, 2049);
        let r0 = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 1.0 }).unwrap();
        let r1 = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 2.0 }).unwrap();
        let map = monotone_map(&u, &r0, &r1).unwrap();
        let p = interpolate_path(&u, &map, &r0, &uniform_times(0.0, 1.0, 3)).unwrap();
        let mid = &p.densities[1];
        let i = (0.75f64 + 1.0) / u.grid.h();
        assert!((mid.values()[i.round() as usize] - 2.0 / 3.0).abs() < 1e-12);
        assert!(p.trajectories.rho0.iter().zip(&p.kinematics[1].density).all(|(_, d)| (d - 2.0 / 3.0).abs() < 1e-12));

        let m = line(-24.0, 24.0, 1024);
        let r = gauss(&m, 0.0, 1.0);
        let id = TransportMap::identity(m.grid);
        let p = interpolate_path(&m, &id, &r, &uniform_times(0.0, 1.0, 4)).unwrap();
        assert_eq!(p.theta, 0.0);
        assert_eq!(p.densities[0], p.densities[3]);
        assert_eq!(wasserstein_speed(&p).theta, 0.0);
    }

    #[test]
    fn phases() {
        let m = line(-24.0, 24.0, 2048);
        let r0 = gauss(&m, 0.0, 1.0);
        let map = monotone_map(&m, &r0, &gauss(&m, 0.0, 2.0)).unwrap();
        let t = 0.4;
        let phi = recover_phase(&m, &map, t).unwrap();
        // the far tails shift the additive constant, so compare against the origin
        let origin = phi.values()[1023] - m.grid.x(1023).powi(2) / (2.0 * (1.0 + t));
        for (i, v) in phi.values().iter().enumerate() {
            let y = m.grid.x(i);
            if y.abs() < 8.0 {
                let want = y * y / (2.0 * (1.0 + t));
                assert!((v - origin - want).abs() < 1e-6, "y={y}");
            }
        }
        // gradient reproduces the velocity at transported nodes
        let (d1, _) = m.derivatives(&phi);
        let xs = m.grid.nodes();
        for j in (0..m.grid.size).step_by(7) {
            let x = m.grid.x(j);
            if x.abs() < 6.0 {
                let y = x + t * map.displacement(j);
                let g = numerics::interp_cubic(&xs, &d1, y);
                assert!((g - map.displacement(j)).abs() < 1e-6);
            }
        }
        let id = recover_phase(&m, &TransportMap::identity(m.grid), 0.3).unwrap();
        assert!(id.max_abs() < 1e-14);

        let tr = monotone_map(&m, &r0, &gauss(&m, 2.0, 1.0)).unwrap();
        let phi = recover_phase(&m, &tr, 0.5).unwrap();
        let origin = phi.values()[1023] - 2.0 * m.grid.x(1023);
        for (i, v) in phi.values().iter().enumerate() {
            let y = m.grid.x(i);
            if y.abs() < 6.0 {
                assert!((v - origin - 2.0 * y).abs() < 1e-6, "y={y}");
            }
        }
    }

    #[test]
    fn translation_speed() {
        let m = line(-24.0, 24.0, 2048);
        let r0 = gauss(&m, 0.0, 1.0);
        let map = monotone_map(&m, &r0, &gauss(&m, 2.0, 1.0)).unwrap();
        let p = interpolate_path(&m, &map, &r0, &uniform_times(0.0, 1.0, 9)).unwrap();
        assert!((p.theta - 2.0).abs() < 1e-8);
        assert!((wasserstein_speed(&p).theta - 2.0).abs() < 1e-5);
    }

    #[test]
    fn model_pair() {
        let g = Grid::new(-24.0, 24.0, 2048, false).unwrap();
        let times = uniform_times(0.5, 1.5, 9);
        let p = model_gaussian_path(1, &times, g).unwrap();
        let r = &p.densities[0];
        let want = 1.0 / std::f64::consts::PI.sqrt();
        assert!((r.values()[1023] - want * (-g.x(1023).powi(2)).exp()).abs() < 1e-14);
        let last = p.phases.last().unwrap();
        assert!((last.values()[0] - 24.0f64.powi(2) / 3.0).abs() < 1e-12);
        // trajectory densities agree with the exact samples
        let k = &p.kinematics[4];
        for (j, y) in k.position.iter().enumerate() {
            let t = k.t;
            let exact = (-y * y / (4.0 * t * t)).exp() / (4.0 * std::f64::consts::PI * t * t).sqrt();
            assert!((k.density[j] - exact).abs() < 1e-12 * (1.0 + exact));
        }
        assert!((p.theta - 2f64.sqrt()).abs() < 1e-9);
        assert!(model_gaussian_path(2, &times, g).is_err());
        assert!(model_gaussian_path(1, &uniform_times(0.0, 1.0, 5), g).is_err());
        let narrow = Grid::new(-3.0, 3.0, 256, false).unwrap();
        assert!(model_gaussian_path(1, &times, narrow).is_err());
    }

    #[test]
    fn exits_domain() {
        let m = line(-6.0, 6.0, 512);
        let r0 = gauss(&m, -2.0, 0.3);
        let map = monotone_map(&m, &r0, &gauss(&m, 2.0, 0.3)).unwrap();
        assert!(matches!(
            interpolate_path(&m, &map, &r0, &uniform_times(0.0, 3.0, 7)),
            Err(LabError::ExitsDomain { .. })
        ));
    }
}
