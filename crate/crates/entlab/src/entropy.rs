//! Entropy functionals, their dissipation formulas and time series along a
//! geodesic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{apply_witten_laplacian, BakryEmeryParams, Dim, ManifoldModel, ScalarField};
use crate::numerics::{time_derivatives, TimeFd};
use crate::transport::{presets, GeodesicPath, Kinematics};

/// Densities below this value contribute nothing to entropy integrands.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Mass tolerance for entropy inputs.
pub const NORMALIZATION_TOL: f64 = 1e-4;

/// Internal-energy generator `e` with pressures `p₁ = re′ − e` and
/// `p₂ = rp₁′ − p₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[serde(rename = "xlogx")]
    XLogX,
    /// `r^p/(p − 1)`; `p = 1` is read as `r log r`.
    Power(f64),
    /// `−N r^{1−1/N}`, so that `U = N S_N`.
    Sturm(Dim),
}

impl Generator {
    fn exponent(self) -> Option<f64> {
        match self {
            Generator::XLogX => None,
            Generator::Power(1.0) => None,
            Generator::Power(p) => Some(p),
            Generator::Sturm(n) => Some(1.0 - n.recip()),
        }
    }

    pub fn name(self) -> String {
        match self {
            Generator::XLogX => "xlogx".into(),
            Generator::Power(p) => format!("power_{p}"),
            Generator::Sturm(n) => format!("sturm_{n}"),
        }
    }

    pub fn e(self, r: f64) -> f64 {
        match self.exponent() {
            None if r <= 0.0 => 0.0,
            None => r * r.ln(),
            Some(p) => r.powf(p) / (p - 1.0),
        }
    }

    pub fn de(self, r: f64) -> f64 {
        match self.exponent() {
            None => r.ln() + 1.0,
            Some(p) => p * r.powf(p - 1.0) / (p - 1.0),
        }
    }

    pub fn p1(self, r: f64) -> f64 {
        match self.exponent() {
            None => r,
            Some(p) => r.powf(p),
        }
    }

    pub fn dp1(self, r: f64) -> f64 {
        match self.exponent() {
            None => 1.0,
            Some(p) => p * r.powf(p - 1.0),
        }
    }

    pub fn p2(self, r: f64) -> f64 {
        match self.exponent() {
            None => 0.0,
            Some(p) => (p - 1.0) * r.powf(p),
        }
    }

    /// Whether `p₂` is finite as `r → 0`.
    pub fn regular_at_zero(self) -> bool {
        self.exponent().is_none_or(|p| p >= 0.0)
    }
}

/// Integrands at the transported nodes of a path at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// μ-measure of each node's cell.
    pub cell: Vec<f64>,
    pub rho: Vec<f64>,
    pub lphi: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub grad_sq: Vec<f64>,
}

impl Snapshot {
    pub fn from_kinematics(k: &Kinematics) -> Self {
        let n = k.position.len();
        let mut s = Snapshot {
            cell: k.cell.clone(),
            rho: k.density.clone(),
            lphi: Vec::with_capacity(n),
            gamma2: Vec::with_capacity(n),
            grad_sq: Vec::with_capacity(n),
        };
        for (l, j) in k.local.iter().zip(&k.jet) {
            s.lphi.push(l.witten(*j));
            s.gamma2.push(l.gamma2(*j));
            s.grad_sq.push(j.d1 * j.d1);
        }
        s
    }

    /// Whether the density gets close to 0 on its support.
    pub fn decays(&self) -> bool {
        let peak = self.rho.iter().fold(0.0f64, |a, b| a.max(*b));
        self.rho.iter().any(|r| *r < 1e-8 * peak)
    }

    /// `∫ f dμ` over the cells.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.cell.len()).map(|j| if self.rho[j] > DENSITY_FLOOR { self.cell[j] * f(j) } else { 0.0 }).sum()
    }

    pub fn shannon(&self) -> f64 {
        -self.integrate(|j| self.rho[j] * self.rho[j].ln())
    }

    /// `log ∫ρ^p dμ`, factored by the peak density.
    pub fn log_power_integral(&self, p: f64) -> f64 {
        let peak = self.rho.iter().fold(0.0f64, |a, b| a.max(*b));
        p * peak.ln() + self.integrate(|j| (self.rho[j] / peak).powf(p)).ln()
    }

    pub fn renyi(&self, p: f64) -> f64 {
        if p == 1.0 {
            self.shannon()
        } else {
            self.log_power_integral(p) / (1.0 - p)
        }
    }

    pub fn sn(&self, n: Dim) -> f64 {
        let e = 1.0 - n.recip();
        -self.integrate(|j| self.rho[j].powf(e))
    }

    pub fn fisher(&self) -> f64 {
        self.integrate(|j| self.lphi[j] * self.rho[j])
    }

    /// `γ`-weights `ρ^p/∫ρ^p dμ` times the cell measure.
    pub fn gamma_weights(&self, p: f64) -> Vec<f64> {
        let peak = self.rho.iter().fold(0.0f64, |a, b| a.max(*b));
        let raw: Vec<f64> = (0..self.rho.len())
            .map(|j| if self.rho[j] > DENSITY_FLOOR { self.cell[j] * (self.rho[j] / peak).powf(p) } else { 0.0 })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    /// `(∫Lφ dγ, Var_γ(Lφ), ∫|∇φ|² dγ)`
    pub fn gamma_moments(&self, p: f64) -> (f64, f64, f64) {
        let w = self.gamma_weights(p);
        let mean: f64 = w.iter().zip(&self.lphi).map(|(w, l)| w * l).sum();
        let var: f64 = w.iter().zip(&self.lphi).map(|(w, l)| w * (l - mean).powi(2)).sum();
        let energy: f64 = w.iter().zip(&self.grad_sq).map(|(w, g)| w * g).sum();
        (mean, var, energy)
    }

    pub fn internal_energy(&self, g: Generator) -> f64 {
        self.integrate(|j| g.e(self.rho[j]))
    }

    /// `(U′, U″) = (−∫Lφ p₁(ρ) dμ, ∫Γ₂ p₁(ρ) dμ + ∫(Lφ)² p₂(ρ) dμ)`
    pub fn dissipation(&self, g: Generator) -> (f64, f64) {
        let u1 = -self.integrate(|j| self.lphi[j] * g.p1(self.rho[j]));
        let u2 = self.integrate(|j| self.gamma2[j] * g.p1(self.rho[j]) + self.lphi[j].powi(2) * g.p2(self.rho[j]));
        (u1, u2)
    }
}

fn check_normalized(model: &ManifoldModel, rho: &ScalarField) -> Result<Vec<f64>> {
    let w = presets::support_weights(model, rho.values());
    let mass: f64 = w.iter().zip(rho.values()).map(|(w, r)| w * r).sum();
    if rho.values().iter().any(|r| *r < 0.0) {
        return Err(LabError::Precondition("negative density".into()));
    }
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(LabError::Mass { mass });
    }
    Ok(w)
}

/// `−∫ρ log ρ dμ`
pub fn shannon_entropy(model: &ManifoldModel, rho: &ScalarField) -> Result<f64> {
    let w = check_normalized(model, rho)?;
    Ok(-rho
        .values()
        .iter()
        .zip(&w)
        .filter(|(r, _)| **r > DENSITY_FLOOR)
        .map(|(r, w)| w * r * r.ln())
        .sum::<f64>())
}

/// `(1/(1−p)) log ∫ρ^p dμ`; `p = 1` gives the Shannon entropy.
pub fn renyi_entropy(model: &ManifoldModel, rho: &ScalarField, p: f64) -> Result<f64> {
    if p == 1.0 {
        return shannon_entropy(model, rho);
    }
    if !p.is_finite() {
        return Err(LabError::Params(format!("Rényi exponent {p}")));
    }
    let w = check_normalized(model, rho)?;
    let v = rho.values();
    let peak = v.iter().fold(0.0f64, |a, b| a.max(*b));
    let pos = v.iter().zip(&w).filter(|(r, w)| **r > DENSITY_FLOOR && **w > 0.0);
    if p <= 0.0 {
        let low = pos.clone().map(|(r, _)| *r).fold(f64::INFINITY, f64::min);
        if low < 1e-8 * peak {
            return Err(LabError::Divergent(format!("∫ρ^p dμ with p = {p} on a decaying density")));
        }
    }
    let s: f64 = pos.map(|(r, w)| w * (r / peak).powf(p)).sum();
    Ok((p * peak.ln() + s.ln()) / (1.0 - p))
}

/// `S_N(ρ) = −∫ρ^{1−1/N} dμ`
pub fn sn_functional(model: &ManifoldModel, rho: &ScalarField, n: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(LabError::Params(format!("N = {n} < 1")));
    }
    let w = check_normalized(model, rho)?;
    let e = 1.0 - Dim(n).recip();
    Ok(-rho.values().iter().zip(&w).filter(|(r, _)| **r > DENSITY_FLOOR).map(|(r, w)| w * r.powf(e)).sum::<f64>())
}

/// `(∫Lφ ρ dμ, ∫Lφ dγ)` with `γ = ρ^p μ/∫ρ^p dμ`.
pub fn fisher_information(model: &ManifoldModel, rho: &ScalarField, phi: &ScalarField, p: f64) -> Result<(f64, f64)> {
    let w = check_normalized(model, rho)?;
    let l = apply_witten_laplacian(model, phi)?;
    let v = rho.values();
    let peak = v.iter().fold(0.0f64, |a, b| a.max(*b));
    let mut i = 0.0;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..v.len() {
        if v[k] > DENSITY_FLOOR {
            i += w[k] * v[k] * l.values()[k];
            let g = w[k] * (v[k] / peak).powf(p);
            num += g * l.values()[k];
            den += g;
        }
    }
    Ok((i, num / den))
}

/// Analytic `(U′, U″)` at sample `k` of the path.
pub fn generalized_dissipation(path: &GeodesicPath, gen: Generator, k: usize) -> Result<(f64, f64)> {
    let kin = path
        .kinematics
        .get(k)
        .ok_or_else(|| LabError::Precondition(format!("no time sample {k}")))?;
    let snap = Snapshot::from_kinematics(kin);
    if !gen.regular_at_zero() && snap.decays() {
        return Err(LabError::Precondition(format!("p₂ of {} is undefined at ρ = 0", gen.name())));
    }
    Ok(snap.dissipation(gen))
}

/// One generator's series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorSeries {
    pub generator: Generator,
    #[serde(rename = "U")]
    pub u: Vec<f64>,
    #[serde(rename = "dU")]
    pub du: Vec<f64>,
    #[serde(rename = "d2U")]
    pub d2u: Vec<f64>,
    #[serde(rename = "U1")]
    pub u1: Vec<f64>,
    #[serde(rename = "U2")]
    pub u2: Vec<f64>,
}

/// Entropy functionals with finite-difference and analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct EntropySeries {
    pub times: Vec<f64>,
    pub fd: TimeFd,
    pub m: Dim,
    pub p: f64,
    #[serde(rename = "N")]
    pub n_sturm: Dim,
    pub H: Vec<f64>,
    pub Ent: Vec<f64>,
    pub Hp: Vec<f64>,
    pub SN: Vec<f64>,
    pub Nm: Vec<f64>,
    pub Nmp: Vec<f64>,
    pub I: Vec<f64>,
    pub Ip: Vec<f64>,
    pub var_gamma: Vec<f64>,
    pub dH: Vec<f64>,
    pub d2H: Vec<f64>,
    pub dHp: Vec<f64>,
    pub d2Hp: Vec<f64>,
    pub dSN: Vec<f64>,
    pub d2SN: Vec<f64>,
    pub dNm: Vec<f64>,
    pub d2Nm: Vec<f64>,
    pub dNmp: Vec<f64>,
    pub d2Nmp: Vec<f64>,
    /// `∫Γ₂(φ,φ) ρ dμ`
    pub gamma2_rho: Vec<f64>,
    /// `∫(Lφ)² ρ dμ`
    pub lphi_sq: Vec<f64>,
    /// `∫|Lφ − I|² ρ dμ`
    pub lphi_var: Vec<f64>,
    /// `∫|∇φ|² ρ dμ`
    pub energy: Vec<f64>,
    /// `∫|∇φ|² dγ`
    pub energy_gamma: Vec<f64>,
    /// `∫|∇φ|² ρ^{1−1/N} dμ`
    pub energy_sn: Vec<f64>,
    /// Analytic `H_p′`, `H_p″`.
    pub dHp_formula: Vec<f64>,
    pub d2Hp_formula: Vec<f64>,
    /// Analytic `S_N′`, `S_N″`.
    pub dSN_formula: Vec<f64>,
    pub d2SN_formula: Vec<f64>,
    pub generators: Vec<GeneratorSeries>,
}

impl EntropySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Analytic `H″ = −∫Γ₂ρ dμ`.
    pub fn d2h_formula(&self) -> Vec<f64> {
        self.gamma2_rho.iter().map(|g| -g).collect()
    }

    pub fn generator(&self, g: Generator) -> Option<&GeneratorSeries> {
        self.generators.iter().find(|s| s.generator == g)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut cols: Vec<(String, &Vec<f64>)> = vec![
            ("t".into(), &self.times),
            ("H".into(), &self.H),
            ("Ent".into(), &self.Ent),
            ("Hp".into(), &self.Hp),
            ("SN".into(), &self.SN),
            ("Nm".into(), &self.Nm),
            ("Nmp".into(), &self.Nmp),
            ("I".into(), &self.I),
            ("Ip".into(), &self.Ip),
            ("var_gamma".into(), &self.var_gamma),
            ("dH".into(), &self.dH),
            ("d2H".into(), &self.d2H),
            ("dHp".into(), &self.dHp),
            ("d2Hp".into(), &self.d2Hp),
            ("dSN".into(), &self.dSN),
            ("d2SN".into(), &self.d2SN),
            ("dNm".into(), &self.dNm),
            ("d2Nm".into(), &self.d2Nm),
            ("gamma2_rho".into(), &self.gamma2_rho),
            ("lphi_var".into(), &self.lphi_var),
            ("energy".into(), &self.energy),
            ("energy_gamma".into(), &self.energy_gamma),
            ("energy_sn".into(), &self.energy_sn),
        ];
        for g in &self.generators {
            let n = g.generator.name();
            cols.push((format!("U_{n}"), &g.u));
            cols.push((format!("dU_{n}"), &g.du));
            cols.push((format!("d2U_{n}"), &g.d2u));
            cols.push((format!("U1_{n}"), &g.u1));
            cols.push((format!("U2_{n}"), &g.u2));
        }
        let header: Vec<&str> = cols.iter().map(|c| c.0.as_str()).collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = cols.iter().map(|c| format!("{:.17e}", c.1[k])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn build_series(path: &GeodesicPath, params: &BakryEmeryParams, generators: &[Generator]) -> Result<EntropySeries> {
    build_series_with(path, params, generators, TimeFd::Plain)
}

pub fn build_series_with(
    path: &GeodesicPath,
    params: &BakryEmeryParams,
    generators: &[Generator],
    fd: TimeFd,
) -> Result<EntropySeries> {
    let n = path.times.len();
    if n < 5 {
        return Err(LabError::Precondition("a series needs at least 5 time samples".into()));
    }
    let snaps: Vec<Snapshot> = path.kinematics.iter().map(Snapshot::from_kinematics).collect();
    let map = |f: &dyn Fn(&Snapshot) -> f64| snaps.iter().map(f).collect::<Vec<f64>>();
    let m = params.m;
    let p = params.p;
    let nn = params.n_sturm;
    let dt = path.dt();

    let h = map(&|s| s.shannon());
    let hp = map(&|s| s.renyi(p));
    let sn = map(&|s| s.sn(nn));
    let nm: Vec<f64> = h.iter().map(|v| (v * m.recip()).exp()).collect();
    let nmp: Vec<f64> = hp.iter().map(|v| (v * m.recip()).exp()).collect();
    let i = map(&|s| s.fisher());
    let moments: Vec<(f64, f64, f64)> = snaps.iter().map(|s| s.gamma_moments(p)).collect();
    let lphi_var: Vec<f64> = snaps
        .iter()
        .zip(&i)
        .map(|(s, i)| s.integrate(|j| (s.lphi[j] - i).powi(2) * s.rho[j]))
        .collect();

    let renyi_gen = if p == 1.0 { Generator::XLogX } else { Generator::Power(p) };
    let mut dhp_formula = Vec::with_capacity(n);
    let mut d2hp_formula = Vec::with_capacity(n);
    for s in &snaps {
        if p == 1.0 {
            let (u1, u2) = s.dissipation(Generator::XLogX);
            dhp_formula.push(-u1);
            d2hp_formula.push(-u2);
        } else {
            let (u1, u2) = s.dissipation(renyi_gen);
            let z = s.log_power_integral(p).exp();
            dhp_formula.push(-u1 / z);
            d2hp_formula.push(-u2 / z + (p - 1.0) * (u1 / z).powi(2));
        }
    }
    let sturm = Generator::Sturm(nn);
    let (dsn_formula, d2sn_formula): (Vec<f64>, Vec<f64>) = if nn.is_infinite() {
        (vec![0.0; n], vec![0.0; n])
    } else {
        snaps
            .iter()
            .map(|s| {
                let (u1, u2) = s.dissipation(sturm);
                (u1 / nn.0, u2 / nn.0)
            })
            .unzip()
    };
    let e_sn = 1.0 - nn.recip();

    let fd2 = |f: &[f64]| time_derivatives(f, dt, fd);
    let (dh, d2h) = fd2(&h);
    let (dhp, d2hp) = fd2(&hp);
    let (dsn, d2sn) = fd2(&sn);
    let (dnm, d2nm) = fd2(&nm);
    let (dnmp, d2nmp) = fd2(&nmp);

    let mut gens = Vec::new();
    for &g in generators {
        if !g.regular_at_zero() && snaps.iter().any(Snapshot::decays) {
            return Err(LabError::Precondition(format!("p₂ of {} is undefined at ρ = 0", g.name())));
        }
        let u = map(&|s| s.internal_energy(g));
        let (du, d2u) = fd2(&u);
        let (u1, u2) = snaps.iter().map(|s| s.dissipation(g)).unzip();
        gens.push(GeneratorSeries { generator: g, u, du, d2u, u1, u2 });
    }

    Ok(EntropySeries {
        times: path.times.clone(),
        fd,
        m,
        p,
        n_sturm: nn,
        Ent: h.iter().map(|v| -v).collect(),
        H: h,
        Hp: hp,
        SN: sn,
        Nm: nm,
        Nmp: nmp,
        Ip: moments.iter().map(|m| m.0).collect(),
        var_gamma: moments.iter().map(|m| m.1).collect(),
        energy_gamma: moments.iter().map(|m| m.2).collect(),
        I: i,
        dH: dh,
        d2H: d2h,
        dHp: dhp,
        d2Hp: d2hp,
        dSN: dsn,
        d2SN: d2sn,
        dNm: dnm,
        d2Nm: d2nm,
        dNmp: dnmp,
        d2Nmp: d2nmp,
        gamma2_rho: map(&|s| s.integrate(|j| s.gamma2[j] * s.rho[j])),
        lphi_sq: map(&|s| s.integrate(|j| s.lphi[j].powi(2) * s.rho[j])),
        lphi_var,
        energy: map(&|s| s.integrate(|j| s.grad_sq[j] * s.rho[j])),
        energy_sn: map(&|s| s.integrate(|j| s.grad_sq[j] * s.rho[j].powf(e_sn))),
        dHp_formula: dhp_formula,
        d2Hp_formula: d2hp_formula,
        dSN_formula: dsn_formula,
        d2SN_formula: d2sn_formula,
        generators: gens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_model, ModelDescriptor, ModelKind};
    use crate::transport::{interpolate_path, model_gaussian_path, monotone_map, sample_density, uniform_times, DensitySpec, TransportMap};
    use std::f64::consts::{E, PI};

    fn line(a: f64, b: f64, size: usize) -> ManifoldModel {
        build_model(&ModelDescriptor { kind: ModelKind::Line, n: 1, domain: [a, b], grid_size: size, periodic: false, potential: None })
            .unwrap()
    }

    fn gauss(m: &ManifoldModel, mean: f64, std: f64) -> ScalarField {
        sample_density(m, &DensitySpec::Gaussian { mean, std }).unwrap()
    }

    fn dilation(times: &[f64]) -> GeodesicPath {
        let m = line(-24.0, 24.0, 2048);
        let r0 = gauss(&m, 0.0, 1.0);
        let map = monotone_map(&m, &r0, &gauss(&m, 0.0, 2.0)).unwrap();
        interpolate_path(&m, &map, &r0, times).unwrap()
    }

    fn unit_params() -> BakryEmeryParams {
        BakryEmeryParams::new(1.0, 0.0, 2.0, 2.0)
    }

    #[test]
    fn closed_form_entropies() {
        let m = line(-24.0, 24.0, 2048);
        let g = gauss(&m, 0.0, 1.0);
        assert!((shannon_entropy(&m, &g).unwrap() - 0.5 * (2.0 * PI * E).ln()).abs() < 1e-10);
        assert!((renyi_entropy(&m, &g, 2.0).unwrap() - (2.0 * PI.sqrt()).ln()).abs() < 1e-10);
        let s = 1.7;
        let wide = gauss(&m, 0.3, s);
        let want = -(8.0 * PI).powf(0.25) * s.sqrt();
        assert!((sn_functional(&m, &wide, 2.0).unwrap() - want).abs() < 1e-10);

        let u = line(-1.0, 3.0, 2049);
        let un = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 1.0 }).unwrap();
        assert!(shannon_entropy(&u, &un).unwrap().abs() < 1e-12);
        for p in [0.5, 2.0, 3.5] {
            assert!(renyi_entropy(&u, &un, p).unwrap().abs() < 1e-12);
        }
        assert!((sn_functional(&u, &un, 2.0).unwrap() + 1.0).abs() < 1e-12);
        assert!(renyi_entropy(&m, &g, -0.5).is_err());
        assert!(renyi_entropy(&u, &un, -0.5).unwrap().abs() < 1e-12);
        assert!(sn_functional(&m, &g, 0.5).is_err());
        let heavy = ScalarField::new(&m.grid, g.values().iter().map(|v| 1.1 * v).collect()).unwrap();
        assert!(matches!(shannon_entropy(&m, &heavy), Err(LabError::Mass { .. })));
    }

    #[test]
    fn renyi_continuity_at_one() {
        let m = line(-24.0, 24.0, 2048);
        let g = gauss(&m, 0.0, 1.0);
        let h = shannon_entropy(&m, &g).unwrap();
        // H_p − H ≈ (1 − p) Var(log ρ)/2 and Var(log ρ) = 1/2 for a normal law
        for d in [1e-3, -1e-3] {
            let p = 1.0 + d;
            let hp = renyi_entropy(&m, &g, p).unwrap();
            assert!((hp - h + d * 0.25).abs() < 1e-6, "{}", hp - h);
        }
        for d in [1e-4, -1e-4] {
            assert!((renyi_entropy(&m, &g, 1.0 + d).unwrap() - h).abs() <= 1e-4);
        }
    }

    #[test]
    fn model_renyi_value() {
        let g = crate::geometry::Grid::new(-24.0, 24.0, 2048, false).unwrap();
        let p = model_gaussian_path(1, &uniform_times(0.5, 1.5, 5), g).unwrap();
        let rho = &p.densities[2];
        let want = 0.5 * (4.0 * PI * E).ln() + 0.5 * 2f64.ln() - 0.5;
        assert!((renyi_entropy(&p.model, rho, 2.0).unwrap() - want).abs() < 1e-10);
        assert!((shannon_entropy(&p.model, rho).unwrap() - 0.5 * (4.0 * PI * E).ln()).abs() < 1e-10);
    }

    #[test]
    fn sn_bridge_halves() {
        let m = line(-24.0, 24.0, 2048);
        for rho in [gauss(&m, 0.0, 1.0), gauss(&m, 1.0, 0.6)] {
            let target = -shannon_entropy(&m, &rho).unwrap();
            let err: Vec<f64> = [100.0, 200.0, 400.0]
                .iter()
                .map(|&n| (n * (1.0 + sn_functional(&m, &rho, n).unwrap()) - target).abs())
                .collect();
            assert!(err[0] / err[1] >= 1.8 && err[1] / err[2] >= 1.8, "{err:?}");
        }
    }

    #[test]
    fn generator_pressures() {
        for g in [Generator::XLogX, Generator::Power(2.0), Generator::Power(1.5), Generator::Power(0.5), Generator::Sturm(Dim(3.0))] {
            for k in -12..=12 {
                let r = 10f64.powf(k as f64 / 2.0);
                let h = 1e-6 * r;
                let de = (g.e(r + h) - g.e(r - h)) / (2.0 * h);
                assert!((g.de(r) - de).abs() <= 1e-7 * (1.0 + g.de(r).abs()));
                assert!((g.p1(r) - (r * g.de(r) - g.e(r))).abs() <= 1e-9 * (1.0 + g.p1(r).abs()));
                let dp1 = (g.p1(r + h) - g.p1(r - h)) / (2.0 * h);
                assert!((g.dp1(r) - dp1).abs() <= 1e-7 * (1.0 + dp1.abs()));
                assert!((g.p2(r) - (r * g.dp1(r) - g.p1(r))).abs() <= 1e-9 * (1.0 + g.p1(r).abs()));
            }
        }
        assert_eq!(Generator::Power(1.0).p2(3.0), 0.0);
        let s: Generator = serde_json::from_str("\"xlogx\"").unwrap();
        assert_eq!(s, Generator::XLogX);
        let s: Generator = serde_json::from_str("{\"power\": 1.5}").unwrap();
        assert_eq!(s, Generator::Power(1.5));
    }

    #[test]
    fn fisher_values() {
        let times = uniform_times(0.0, 1.0, 5);
        let p = dilation(&times);
        for (k, &t) in times.iter().enumerate() {
            let (i, ip) = fisher_information(&p.model, &p.densities[k], &p.phases[k], 2.0).unwrap();
            assert!((i - 1.0 / (1.0 + t)).abs() < 1e-5, "{i}");
            assert!((ip - 1.0 / (1.0 + t)).abs() < 1e-5);
        }
        let g = crate::geometry::Grid::new(-24.0, 24.0, 2048, false).unwrap();
        let mp = model_gaussian_path(1, &uniform_times(0.5, 1.5, 5), g).unwrap();
        for k in 0..5 {
            let (i, _) = fisher_information(&mp.model, &mp.densities[k], &mp.phases[k], 2.0).unwrap();
            assert!((i - 1.0 / mp.times[k]).abs() < 1e-6);
        }
        let m = line(-24.0, 24.0, 1024);
        let r = gauss(&m, 0.0, 1.0);
        let id = interpolate_path(&m, &TransportMap::identity(m.grid), &r, &times).unwrap();
        assert!(fisher_information(&m, &r, &id.phases[2], 2.0).unwrap().0.abs() < 1e-14);
    }

    #[test]
    fn dissipation_values() {
        let p = dilation(&uniform_times(0.0, 1.0, 5));
        let (u1, u2) = generalized_dissipation(&p, Generator::XLogX, 0).unwrap();
        assert!((u1 + 1.0).abs() < 1e-10 && (u2 - 1.0).abs() < 1e-10, "{u1} {u2}");

        let u = line(-1.0, 3.0, 2049);
        let r0 = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 1.0 }).unwrap();
        let r1 = sample_density(&u, &DensitySpec::Uniform { a: 0.0, b: 2.0 }).unwrap();
        let map = monotone_map(&u, &r0, &r1).unwrap();
        let up = interpolate_path(&u, &map, &r0, &uniform_times(0.0, 1.0, 5)).unwrap();
        let (u1, _) = generalized_dissipation(&up, Generator::Power(2.0), 0).unwrap();
        assert!((u1 + 1.0).abs() < 1e-12, "{u1}");

        let m = line(-24.0, 24.0, 1024);
        let r = gauss(&m, 0.0, 1.0);
        let id = interpolate_path(&m, &TransportMap::identity(m.grid), &r, &uniform_times(0.0, 1.0, 5)).unwrap();
        for g in [Generator::XLogX, Generator::Power(2.0), Generator::Sturm(Dim(2.0))] {
            assert_eq!(generalized_dissipation(&id, g, 3).unwrap(), (0.0, 0.0));
        }
        assert!(generalized_dissipation(&up, Generator::Power(-1.0), 0).is_ok());
        assert!(generalized_dissipation(&p, Generator::Power(-1.0), 0).is_err());
    }

    #[test]
    fn dilation_series() {
        let times = uniform_times(0.0, 1.0, 65);
        let p = dilation(&times);
        let gens = [Generator::XLogX, Generator::Power(2.0), Generator::Power(1.5), Generator::Power(0.5)];
        let s = build_series_with(&p, &unit_params(), &gens, TimeFd::Richardson).unwrap();
        let h0 = 0.5 * (2.0 * PI * E).ln();
        for (k, &t) in times.iter().enumerate() {
            assert!((s.H[k] - h0 - (1.0 + t).ln()).abs() < 1e-9);
            assert!((s.dH[k] - 1.0 / (1.0 + t)).abs() < 1e-6, "{k} {}", s.dH[k] - 1.0 / (1.0 + t));
            assert!(s.var_gamma[k].abs() < 1e-12);
            assert!((s.I[k] - 1.0 / (1.0 + t)).abs() < 1e-9);
            assert!(s.lphi_sq[k] >= s.I[k].powi(2) * (1.0 - 1e-12));
            assert!((s.energy[k] - 1.0).abs() < 1e-9);
        }
        let plain = build_series(&p, &unit_params(), &gens).unwrap();
        for k in 0..times.len() {
            let scale = |a: f64| 1.0 + a.abs();
            assert!((plain.dH[k] - plain.I[k]).abs() <= 1e-3 * scale(plain.I[k]));
            let g2 = plain.gamma2_rho[k];
            assert!((plain.d2H[k] + g2).abs() <= 3e-3 * (1.0 + g2));
            for g in &plain.generators {
                assert!((g.du[k] - g.u1[k]).abs() <= 1e-3 * scale(g.u1[k]), "{:?} {k}", g.generator);
                assert!((g.d2u[k] - g.u2[k]).abs() <= 3e-3 * scale(g.u2[k]), "{:?} {k}", g.generator);
            }
            assert!((plain.dHp[k] - plain.dHp_formula[k]).abs() <= 1e-3 * scale(plain.dHp_formula[k]));
            assert!((plain.d2Hp[k] - plain.d2Hp_formula[k]).abs() <= 3e-3 * scale(plain.d2Hp_formula[k]));
            assert!((plain.dSN[k] - plain.dSN_formula[k]).abs() <= 1e-3 * scale(plain.dSN_formula[k]));
            assert!((plain.d2SN[k] - plain.d2SN_formula[k]).abs() <= 3e-3 * scale(plain.d2SN_formula[k]));
            assert!((plain.Ip[k] - plain.dHp_formula[k]).abs() < 1e-12);
        }
        let mut csv = Vec::new();
        plain.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 66);
        assert!(text.starts_with("t,H,Ent,"));
    }

    #[test]
    fn constant_series() {
        let m = line(-24.0, 24.0, 1024);
        let r = gauss(&m, 0.0, 1.0);
        let id = interpolate_path(&m, &TransportMap::identity(m.grid), &r, &uniform_times(0.0, 1.0, 9)).unwrap();
        let s = build_series(&id, &unit_params(), &[Generator::Power(2.0)]).unwrap();
        for arr in [&s.dH, &s.d2H, &s.dHp, &s.d2Hp, &s.dSN, &s.d2SN, &s.dNm, &s.d2Nm] {
            assert!(arr.iter().all(|v| v.abs() < 1e-12));
        }
        assert!(s.generators[0].du.iter().all(|v| v.abs() < 1e-12));
        assert!(build_series(&interpolate_path(&m, &TransportMap::identity(m.grid), &r, &uniform_times(0.0, 1.0, 4)).unwrap(), &unit_params(), &[]).is_err());
    }
}
