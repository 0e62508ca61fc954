//! Inequality and identity checks along a geodesic, with signed margins and
//! rigidity diagnostics.
//!
//! Margins are `LHS − RHS` for `≥` claims and `RHS − LHS` for `≤` claims, so a
//! nonnegative margin always means the claim holds.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comparison::{comparison_profiles, dcn_classify, tau, ComparisonQuery};
use crate::entropy::{EntropySeries, Generator, Snapshot};
use crate::error::{LabError, Result};
use crate::geometry::{Dim, Jet};
use crate::numerics::{self, time_derivatives};
use crate::transport::GeodesicPath;

/// Default tolerance for closed-form engines and analytic derivatives.
pub const CLOSED_FORM_TOL: f64 = 1e-6;
/// Default tolerance for grid engines with finite-difference derivatives.
pub const GRID_TOL: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Equality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Inequality,
    Identity,
}

/// Where time derivatives of entropy functionals come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// Finite differences of the sampled series.
    #[default]
    Fd,
    /// Dissipation formulas.
    Analytic,
}

/// Sign of the `(m−n)/t` shift in the potential term of the W-entropy formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WSign {
    #[default]
    Plus,
    Minus,
}

impl WSign {
    fn factor(self) -> f64 {
        match self {
            WSign::Plus => 1.0,
            WSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabOptions {
    pub tolerance: f64,
    pub derivatives: DerivativeSource,
    pub w_sign: WSign,
}

impl Default for LabOptions {
    fn default() -> Self {
        LabOptions { tolerance: GRID_TOL, derivatives: DerivativeSource::Fd, w_sign: WSign::Plus }
    }
}

impl LabOptions {
    pub fn closed_form() -> Self {
        LabOptions { tolerance: CLOSED_FORM_TOL, derivatives: DerivativeSource::Analytic, w_sign: WSign::Plus }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub kind: CheckKind,
    /// The claim, written with the `lhs` and `rhs` arrays as its sides.
    pub relation: String,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub margin: Vec<f64>,
    pub residual: Vec<f64>,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn inequality(id: &str, relation: &str, times: Vec<f64>, lhs: Vec<f64>, rhs: Vec<f64>, geq: bool, tol: f64) -> Self {
        let margin = lhs.iter().zip(&rhs).map(|(l, r)| if geq { l - r } else { r - l }).collect();
        Self::from_margin(id, relation, CheckKind::Inequality, times, lhs, rhs, margin, tol)
    }

    fn identity(id: &str, relation: &str, times: Vec<f64>, lhs: Vec<f64>, rhs: Vec<f64>, tol: f64) -> Self {
        let margin = lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect();
        Self::from_margin(id, relation, CheckKind::Identity, times, lhs, rhs, margin, tol)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_margin(
        id: &str,
        relation: &str,
        kind: CheckKind,
        times: Vec<f64>,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        margin: Vec<f64>,
        tol: f64,
    ) -> Self {
        let residual = margin.iter().map(|m: &f64| m.abs()).collect();
        let mut r = CheckReport {
            check_id: id.into(),
            kind,
            relation: relation.into(),
            times,
            lhs,
            rhs,
            margin,
            residual,
            verdict: Verdict::Pass,
            tolerance: tol,
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
        };
        r.verdict = r.judge();
        r
    }

    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    fn judge(&self) -> Verdict {
        let broken = self.margin.iter().any(|m| m.is_nan() || *m == f64::NEG_INFINITY);
        if broken {
            return Verdict::Fail;
        }
        if self.max_residual() <= self.tolerance {
            Verdict::Equality
        } else if self.kind == CheckKind::Inequality && self.min_margin() >= -self.tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,lhs,rhs,margin,residual")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.times[k], self.lhs[k], self.rhs[k], self.margin[k], self.residual[k]
            )?;
        }
        Ok(())
    }
}

fn ensure_same(series: &EntropySeries, path: &GeodesicPath) -> Result<()> {
    if series.times != path.times {
        return Err(LabError::Precondition("series and path use different times".into()));
    }
    Ok(())
}

/// `(H′, H″)` from the chosen source.
fn h_derivs(s: &EntropySeries, src: DerivativeSource) -> (Vec<f64>, Vec<f64>) {
    match src {
        DerivativeSource::Fd => (s.dH.clone(), s.d2H.clone()),
        DerivativeSource::Analytic => (s.I.clone(), s.d2h_formula()),
    }
}

/// `N_m″` from the chosen source.
fn nm_second(s: &EntropySeries, src: DerivativeSource) -> Vec<f64> {
    match src {
        DerivativeSource::Fd => s.d2Nm.clone(),
        DerivativeSource::Analytic => {
            let inv = s.m.recip();
            (0..s.len()).map(|k| s.Nm[k] * inv * (-s.gamma2_rho[k] + inv * s.I[k].powi(2))).collect()
        }
    }
}

fn m_label(m: Dim) -> String {
    if m.is_infinite() {
        "∞".into()
    } else {
        format!("{}", m.0)
    }
}

/// EDI, its refined form with the variance of `Lφ`, and the EPDI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdiReports {
    pub edi: CheckReport,
    pub refined: CheckReport,
    pub epdi: CheckReport,
}

pub fn check_edi_epdi(series: &EntropySeries, k: f64, theta: f64, opts: &LabOptions) -> EdiReports {
    let inv = series.m.recip();
    let (d1, d2) = h_derivs(series, opts.derivatives);
    let n = series.len();
    let lhs: Vec<f64> = d2.iter().map(|v| -v).collect();
    let rhs: Vec<f64> = (0..n).map(|i| inv * d1[i].powi(2) + k * theta * theta).collect();
    let rel = format!("−H″ ≥ H′²/m + Kθ² (m = {}, K = {k})", m_label(series.m));
    let mut edi = CheckReport::inequality("edi", &rel, series.times.clone(), lhs.clone(), rhs.clone(), true, opts.tolerance);

    let rhs_ref: Vec<f64> = (0..n).map(|i| rhs[i] + inv * series.lphi_var[i]).collect();
    let refined = CheckReport::inequality(
        "edi_refined",
        "−H″ ≥ H′²/m + Kθ² + (1/m)∫|Lφ − I|²ρ dμ",
        series.times.clone(),
        lhs,
        rhs_ref,
        true,
        opts.tolerance,
    );

    let d2nm = nm_second(series, opts.derivatives);
    let rhs_n: Vec<f64> = (0..n).map(|i| -k * series.Nm[i] * inv * theta * theta).collect();
    let mut epdi = CheckReport::inequality("epdi", "N_m″ ≤ −(K N_m/m) θ²", series.times.clone(), d2nm, rhs_n, false, opts.tolerance);

    // the EPDI margin obtained from the EDI margin by the chain rule on the same H samples
    let chain = (0..n).map(|i| (series.Nm[i] * inv * edi.margin[i] - {
        let d2nm_chain = series.Nm[i] * inv * (d2[i] + inv * d1[i].powi(2));
        -k * series.Nm[i] * inv * theta * theta - d2nm_chain
    }).abs()).fold(0.0, f64::max);
    epdi.diagnostics.insert("chain_rule_residual".into(), chain);
    edi.diagnostics.insert("theta".into(), theta);
    EdiReports { edi, refined, epdi }
}

fn window(times: &[f64]) -> (f64, f64) {
    let t0 = times[0];
    (t0, times[times.len() - 1] - t0)
}

/// Power bound against the σ-combination and `H′ ≤ H′_{m,K}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerBoundReports {
    pub power: CheckReport,
    pub riccati: CheckReport,
}

pub fn check_power_bound(series: &EntropySeries, k: f64, theta: f64, opts: &LabOptions) -> Result<PowerBoundReports> {
    let (t0, span) = window(&series.times);
    let u: Vec<f64> = series.times.iter().map(|t| ((t - t0) / span).clamp(0.0, 1.0)).collect();
    let n = series.len();
    let q = ComparisonQuery {
        k,
        m: series.m,
        theta: theta * span,
        n0: series.Nm[0],
        n1: series.Nm[n - 1],
        hprime0: series.I[0] * span,
    };
    let prof = comparison_profiles(q, &u)?;
    let mut power = CheckReport::inequality(
        "power_bound",
        "N_m(t) ≥ σ(1−u) N_m(ρ₀) + σ(u) N_m(ρ₁)",
        series.times.clone(),
        series.Nm.clone(),
        prof.nmk.clone(),
        true,
        opts.tolerance,
    );
    let ode_gap = prof.nmk.iter().zip(&prof.nmk_ode).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    power.diagnostics.insert("sigma_ode_gap".into(), ode_gap);
    let hk: Vec<f64> = prof.hprime.iter().map(|h| h / span).collect();
    let mut riccati =
        CheckReport::inequality("riccati", "I(t) ≤ H′_{m,K}(t)", series.times.clone(), series.I.clone(), hk, false, opts.tolerance);
    if let Some(b) = prof.blowup {
        riccati.diagnostics.insert("blowup_time".into(), t0 + b * span);
    }
    Ok(PowerBoundReports { power, riccati })
}

/// Rényi entropy inequalities (concavity of `H_p` and of `N_{m,p}`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenyiReports {
    pub entropy: CheckReport,
    pub power: CheckReport,
}

pub fn check_renyi(series: &EntropySeries, k: f64, opts: &LabOptions) -> Result<RenyiReports> {
    let p = series.p;
    let inv = series.m.recip();
    if p < 1.0 - inv {
        return Err(LabError::Precondition(format!("p = {p} below 1 − 1/m")));
    }
    let n = series.len();
    let (d1, d2) = match opts.derivatives {
        DerivativeSource::Fd => (series.dHp.clone(), series.d2Hp.clone()),
        DerivativeSource::Analytic => (series.dHp_formula.clone(), series.d2Hp_formula.clone()),
    };
    let lhs: Vec<f64> = (0..n).map(|i| d2[i] + inv * d1[i].powi(2)).collect();
    let rhs: Vec<f64> = (0..n).map(|i| -k * series.energy_gamma[i]).collect();
    let mut entropy =
        CheckReport::inequality("renyi_entropy", "H_p″ + H_p′²/m ≤ −K ∫|∇φ|² dγ", series.times.clone(), lhs, rhs, false, opts.tolerance);

    let d2n: Vec<f64> = match opts.derivatives {
        DerivativeSource::Fd => series.d2Nmp.clone(),
        DerivativeSource::Analytic => (0..n).map(|i| series.Nmp[i] * inv * (d2[i] + inv * d1[i].powi(2))).collect(),
    };
    let rhs_n: Vec<f64> = (0..n).map(|i| -k * inv * series.energy_gamma[i] * series.Nmp[i]).collect();
    let mut power =
        CheckReport::inequality("renyi_power", "N_{m,p}″ ≤ −(K/m) ∫|∇φ|² dγ · N_{m,p}", series.times.clone(), d2n.clone(), rhs_n.clone(), false, opts.tolerance);
    let shift = p - 1.0 + inv;
    let refined = (0..n)
        .map(|i| rhs_n[i] - shift * series.Nmp[i] * inv * series.var_gamma[i] - d2n[i])
        .fold(f64::INFINITY, f64::min);
    power.diagnostics.insert("refined_min_margin".into(), refined);
    let refined_h = (0..n)
        .map(|i| -k * series.energy_gamma[i] - shift * series.var_gamma[i] - (d2[i] + inv * d1[i].powi(2)))
        .fold(f64::INFINITY, f64::min);
    entropy.diagnostics.insert("refined_min_margin".into(), refined_h);
    Ok(RenyiReports { entropy, power })
}

/// `S_N` inequalities: full form with the `(N−m)/m` term and the weak form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnReports {
    pub full: CheckReport,
    pub weak: CheckReport,
}

pub fn check_sn(series: &EntropySeries, k: f64, opts: &LabOptions) -> Result<SnReports> {
    let (m, nn) = (series.m, series.n_sturm);
    if nn.0 < m.0 {
        return Err(LabError::Precondition(format!("N = {nn} < m = {m}")));
    }
    let n = series.len();
    let (d1, d2) = match opts.derivatives {
        DerivativeSource::Fd => (series.dSN.clone(), series.d2SN.clone()),
        DerivativeSource::Analytic => (series.dSN_formula.clone(), series.d2SN_formula.clone()),
    };
    let coef = if nn.is_infinite() || m.is_infinite() { 0.0 } else { (nn.0 - m.0) / m.0 };
    let rhs: Vec<f64> = (0..n).map(|i| k * nn.recip() * series.energy_sn[i]).collect();
    let full_lhs: Vec<f64> = (0..n).map(|i| d2[i] + coef * d1[i].powi(2) / series.SN[i]).collect();
    let full = CheckReport::inequality(
        "sn",
        "S_N″ + ((N−m)/m) S_N⁻¹ S_N′² ≥ (K/N) ∫|∇φ|² ρ^{1−1/N} dμ",
        series.times.clone(),
        full_lhs,
        rhs.clone(),
        true,
        opts.tolerance,
    );
    let weak = CheckReport::inequality("sn_weak", "S_N″ ≥ (K/N) ∫|∇φ|² ρ^{1−1/N} dμ", series.times.clone(), d2, rhs, true, opts.tolerance);
    Ok(SnReports { full, weak })
}

/// Sturm's coupling inequality with the monotone coupling.
pub fn check_sturm(path: &GeodesicPath, k: f64, n_sturm: Dim, n_prime: Dim, opts: &LabOptions) -> Result<CheckReport> {
    if n_prime.0 < n_sturm.0 || n_sturm.0 < path.model.dim() {
        return Err(LabError::Precondition(format!(
            "need N′ ≥ N ≥ n (N′ = {n_prime}, N = {n_sturm}, n = {})",
            path.model.dim()
        )));
    }
    let tr = &path.trajectories;
    let kin = &path.kinematics;
    let (t0, span) = window(&path.times);
    let first = &kin[0];
    let last = &kin[kin.len() - 1];
    let mass = tr.mass();
    let e = n_prime.recip();
    let dist: Vec<f64> = (0..tr.len()).map(|j| (last.position[j] - first.position[j]).abs()).collect();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for (idx, kk) in kin.iter().enumerate() {
        let u = ((path.times[idx] - t0) / span).clamp(0.0, 1.0);
        let s = -(0..tr.len()).map(|j| kk.cell[j] * kk.density[j].powf(1.0 - e)).sum::<f64>();
        let mut r = 0.0;
        for j in 0..tr.len() {
            let a = tau(k, n_prime, dist[j], 1.0 - u);
            let b = tau(k, n_prime, dist[j], u);
            if a.is_infinite() || b.is_infinite() {
                return Err(LabError::ConjugatePoint { value: k * dist[j] * dist[j] });
            }
            r -= mass[j] * (a * first.density[j].powf(-e) + b * last.density[j].powf(-e));
        }
        lhs.push(s);
        rhs.push(r);
    }
    let id = format!("sturm_{}", m_label(n_prime));
    let mut rep = CheckReport::inequality(&id, "S_{N′}(ρ_t) ≤ −∫[τ^{(1−t)} ρ₀^{−1/N′} + τ^{(t)} ρ₁^{−1/N′}] dq", path.times.clone(), lhs, rhs, false, opts.tolerance);
    rep.diagnostics.insert("N_prime".into(), n_prime.0);
    Ok(rep)
}

/// Concavity of `J_t^{1/N}` along each trajectory.
pub fn check_jacobian(path: &GeodesicPath, k: f64, n: Dim, opts: &LabOptions) -> Result<CheckReport> {
    if n.0 < path.model.dim() {
        return Err(LabError::Precondition(format!("N = {n} < n = {}", path.model.dim())));
    }
    let tr = &path.trajectories;
    let kin = &path.kinematics;
    let times = path.times.len();
    let dt = path.dt();
    let inv = n.recip();
    let rate = tr.clock.rate;
    let mut worst = vec![f64::INFINITY; times];
    let mut worst_lhs = vec![0.0; times];
    let mut worst_rhs = vec![0.0; times];
    let mut rho4 = f64::INFINITY;
    let scheme = numerics::TimeFd::Plain;
    for j in 0..tr.len() {
        let series: Vec<f64> = kin.iter().map(|kk| kk.jacobian[j].powf(inv)).collect();
        let (_, d2) = time_derivatives(&series, dt, scheme);
        let d_sq = (rate * tr.vel[j]).powi(2);
        for i in 0..times {
            let bound = -k * inv * series[i] * d_sq;
            let margin = bound - d2[i];
            if margin < worst[i] {
                worst[i] = margin;
                worst_lhs[i] = d2[i];
                worst_rhs[i] = bound;
            }
            rho4 = rho4.min(tr.rho0[j].powf(-inv) * margin);
        }
    }
    let mut rep = CheckReport::inequality(
        "jacobian",
        "∂²ₜ J^{1/N} ≤ −(K/N) J^{1/N} d²(x, F₁x), worst trajectory per time",
        path.times.clone(),
        worst_lhs,
        worst_rhs,
        false,
        opts.tolerance,
    );
    let push = (0..times).map(|i| path.pushforward_residual(i)).fold(0.0, f64::max);
    rep.diagnostics.insert("pushforward_residual".into(), push);
    rep.diagnostics.insert("rho4_min_margin".into(), rho4);
    rep.diagnostics.insert("N".into(), n.0);
    Ok(rep)
}

/// The identity `∫|∇φ_t|² ρ_t^{1−1/N} dμ = ∫ d²(x, F₁x) ρ_t^{1−1/N}(F_t x) J_t dμ`.
pub fn identity_ij(path: &GeodesicPath, n: Dim, opts: &LabOptions) -> CheckReport {
    let tr = &path.trajectories;
    let e = 1.0 - n.recip();
    let xs = path.model.grid.nodes();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut eulerian = 0.0f64;
    for (idx, kk) in path.kinematics.iter().enumerate() {
        let (grad, _) = path.model.derivatives(&path.phases[idx]);
        let mut l = 0.0;
        let mut r = 0.0;
        for j in 0..tr.len() {
            let g = numerics::interp_cubic(&xs, &grad, kk.position[j]);
            let w = kk.cell[j] * kk.density[j].powf(e);
            l += w * g * g;
            r += w * (tr.clock.rate * tr.vel[j]).powi(2);
        }
        let rho = path.densities[idx].values();
        let wts = crate::transport::presets::support_weights(&path.model, rho);
        let grid_side: f64 = (0..rho.len()).map(|i| wts[i] * grad[i] * grad[i] * rho[i].powf(e)).sum();
        eulerian = eulerian.max((grid_side - r).abs());
        lhs.push(l);
        rhs.push(r);
    }
    let mut rep = CheckReport::identity(
        &format!("identity_ij_{}", m_label(n)),
        "∫|∇φ_t|² ρ_t^{1−1/N} dμ = ∫ d²(x, F₁x) ρ_t^{1−1/N}(F_t x) J_t dμ",
        path.times.clone(),
        lhs,
        rhs,
        opts.tolerance,
    );
    rep.diagnostics.insert("grid_quadrature_gap".into(), eulerian);
    rep
}

/// `K`-convexity of `Ent` and the `DC_N` functional bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntInftyReports {
    pub differential: CheckReport,
    pub integrated: CheckReport,
    pub functional: Option<CheckReport>,
}

pub fn check_ent_infty(series: &EntropySeries, k: f64, theta: f64, generator: Option<Generator>, opts: &LabOptions) -> Result<EntInftyReports> {
    let n = series.len();
    let (_, d2) = h_derivs(series, opts.derivatives);
    let ent2: Vec<f64> = d2.iter().map(|v| -v).collect();
    let differential = CheckReport::inequality(
        "ent_convexity",
        "Ent″ ≥ K θ²",
        series.times.clone(),
        ent2,
        vec![k * theta * theta; n],
        true,
        opts.tolerance,
    );
    let (t0, span) = window(&series.times);
    let tw = theta * span;
    let (e0, e1) = (series.Ent[0], series.Ent[n - 1]);
    let rhs: Vec<f64> = series
        .times
        .iter()
        .map(|t| {
            let u = (t - t0) / span;
            (1.0 - u) * e0 + u * e1 - 0.5 * k * u * (1.0 - u) * tw * tw
        })
        .collect();
    let integrated = CheckReport::inequality(
        "ent_integrated",
        "Ent(ρ_t) ≤ (1−t) Ent(ρ₀) + t Ent(ρ₁) − (K/2) t(1−t) W₂²",
        series.times.clone(),
        series.Ent.clone(),
        rhs,
        false,
        opts.tolerance,
    );
    let functional = match generator {
        None => None,
        Some(g) => {
            let gs = series
                .generator(g)
                .ok_or_else(|| LabError::Precondition(format!("series lacks generator {}", g.name())))?;
            let class = dcn_classify(g, series.n_sturm)?;
            if !class.member {
                return Err(LabError::Precondition(format!("{} is not in DC_{}", g.name(), series.n_sturm)));
            }
            let knu = if k >= 0.0 { k * class.k_ratio } else { k * class.sup_ratio };
            let u2 = match opts.derivatives {
                DerivativeSource::Fd => gs.d2u.clone(),
                DerivativeSource::Analytic => gs.u2.clone(),
            };
            let rhs: Vec<f64> = series.energy_sn.iter().map(|e| knu * e).collect();
            let mut rep = CheckReport::inequality(
                &format!("dcn_functional_{}", g.name()),
                "U″ ≥ K_{N,U} ∫|∇φ_t|² ρ_t^{1−1/N} dμ",
                series.times.clone(),
                u2,
                rhs,
                true,
                opts.tolerance,
            );
            rep.diagnostics.insert("K_NU".into(), knu);
            Some(rep)
        }
    };
    Ok(EntInftyReports { differential, integrated, functional })
}

/// W-entropy quantities along a positive-time window.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct WEntropySeries {
    pub times: Vec<f64>,
    pub Hm: Vec<f64>,
    pub Hmp: Vec<f64>,
    pub Wm: Vec<f64>,
    pub Wmp: Vec<f64>,
    pub dWm: Vec<f64>,
    pub dWmp: Vec<f64>,
    /// `t ×` the analytic right-hand side of `(1/t) dW_m/dt`.
    pub dWm_formula: Vec<f64>,
    pub dWmp_formula: Vec<f64>,
    pub w_sign: WSign,
}

impl WEntropySeries {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,Hm,Hmp,Wm,Wmp,dWm,dWmp,dWm_formula,dWmp_formula")?;
        for k in 0..self.times.len() {
            let row = [
                self.times[k], self.Hm[k], self.Hmp[k], self.Wm[k], self.Wmp[k], self.dWm[k], self.dWmp[k],
                self.dWm_formula[k], self.dWmp_formula[k],
            ];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `H_p(ρ_m(t))` for the model pair, with `m` in every term.
pub fn model_renyi(m: f64, p: f64, t: f64) -> f64 {
    let base = 0.5 * m * (4.0 * std::f64::consts::PI * std::f64::consts::E * t * t).ln();
    if p == 1.0 {
        base
    } else {
        base + 0.5 * m * p.ln() / (p - 1.0) - 0.5 * m
    }
}

/// Pointwise analytic integrands of `(1/t) dW/dt`.
fn w_integrand(l: &crate::geometry::Local, j: Jet, t: f64, m: f64, sign: WSign) -> f64 {
    let n = l.n;
    let mut v = -(l.shifted_hess_sq(j, t) + l.ric_mn(Dim(m)) * j.d1 * j.d1);
    if m > n {
        v -= (l.dv * j.d1 + sign.factor() * (m - n) / t).powi(2) / (m - n);
    }
    v
}

pub fn w_entropy_profile(series: &EntropySeries, path: &GeodesicPath, opts: &LabOptions) -> Result<(WEntropySeries, CheckReport)> {
    ensure_same(series, path)?;
    let m = series.m;
    if m.is_infinite() {
        return Err(LabError::Precondition("the W-entropy needs a finite m".into()));
    }
    let m = m.0;
    if series.times[0] <= 0.0 {
        return Err(LabError::Precondition("the W-entropy needs a positive time window".into()));
    }
    let p = series.p;
    let n = series.len();
    let t = &series.times;
    let fourpi = 4.0 * std::f64::consts::PI;
    let hm: Vec<f64> = (0..n).map(|k| series.H[k] - 0.5 * m * (1.0 + (fourpi * t[k] * t[k]).ln())).collect();
    let hmp: Vec<f64> = (0..n).map(|k| series.Hp[k] - model_renyi(m, p, t[k])).collect();
    let (h1, h2, q1, q2) = match opts.derivatives {
        DerivativeSource::Fd => (series.dH.clone(), series.d2H.clone(), series.dHp.clone(), series.d2Hp.clone()),
        DerivativeSource::Analytic => (series.I.clone(), series.d2h_formula(), series.dHp_formula.clone(), series.d2Hp_formula.clone()),
    };
    let w_of = |h: &[f64], d1: &[f64], d2: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (0..n)
            .map(|k| {
                let a = d1[k] - m / t[k];
                let b = d2[k] + m / (t[k] * t[k]);
                (h[k] + t[k] * a, 2.0 * a + t[k] * b)
            })
            .unzip()
    };
    let (wm, dwm) = w_of(&hm, &h1, &h2);
    let (wmp, dwmp) = w_of(&hmp, &q1, &q2);

    let mut f = Vec::with_capacity(n);
    let mut fp = Vec::with_capacity(n);
    for (k, kin) in path.kinematics.iter().enumerate() {
        let snap = Snapshot::from_kinematics(kin);
        let tk = t[k];
        let vals: Vec<f64> = kin.local.iter().zip(&kin.jet).map(|(l, j)| w_integrand(l, *j, tk, m, opts.w_sign)).collect();
        f.push(tk * snap.integrate(|j| vals[j] * snap.rho[j]));
        let g = snap.gamma_weights(p);
        let mean: f64 = vals.iter().zip(&g).map(|(v, g)| v * g).sum();
        fp.push(tk * (mean - (p - 1.0) * series.var_gamma[k]));
    }
    let w = WEntropySeries {
        times: t.clone(),
        Hm: hm,
        Hmp: hmp,
        Wm: wm,
        Wmp: wmp,
        dWm: dwm.clone(),
        dWmp: dwmp,
        dWm_formula: f.clone(),
        dWmp_formula: fp,
        w_sign: opts.w_sign,
    };
    let interior: Vec<usize> = (1..n - 1).collect();
    let mut rep = CheckReport::inequality(
        "w_monotone",
        "dW_m/dt ≤ 0 at interior samples",
        interior.iter().map(|&k| t[k]).collect(),
        interior.iter().map(|&k| dwm[k]).collect(),
        vec![0.0; interior.len()],
        false,
        opts.tolerance,
    );
    let gap = (0..n).map(|k| (dwm[k] - f[k]).abs()).fold(0.0, f64::max);
    rep.diagnostics.insert("formula_residual".into(), gap);
    let ric = path.min_ric_mn(Dim(m));
    rep.diagnostics.insert("min_ric_mn".into(), ric);
    if ric < 0.0 {
        rep.notes.push("Ric_{m,n}(L) takes negative values; monotonicity is not implied".into());
    }
    Ok((w, rep))
}

/// NIW identity and the W-inequality under `Ric_{m,n}(L) ≥ K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiwReports {
    pub identity: CheckReport,
    pub inequality: CheckReport,
}

/// Relative tolerance of the NIW identity.
pub const NIW_TOL: f64 = 3e-3;

pub fn check_niw(series: &EntropySeries, w: &WEntropySeries, k: f64, opts: &LabOptions) -> Result<NiwReports> {
    if series.m.is_infinite() {
        return Err(LabError::Precondition("NIW needs a finite m".into()));
    }
    let m = series.m.0;
    let n = series.len();
    let t = &series.times;
    let d2n = nm_second(series, opts.derivatives);
    let rhs: Vec<f64> = (0..n)
        .map(|i| series.Nm[i] / m * ((series.I[i] - m / t[i]).powi(2) / m + w.dWm_formula[i] / t[i]))
        .collect();
    // scaled residual (LHS − RHS)/(1 + |LHS|)
    let margin: Vec<f64> = (0..n).map(|i| (d2n[i] - rhs[i]) / (1.0 + d2n[i].abs())).collect();
    let tol = opts.tolerance.max(NIW_TOL);
    let mut identity = CheckReport::from_margin(
        "niw",
        "N_m″ = (N_m/m)[(1/m)|I − m/t|² + (1/t) dW_m/dt], residual scaled by 1 + |N_m″|",
        CheckKind::Identity,
        t.clone(),
        d2n,
        rhs,
        margin,
        tol,
    );
    let d2np = match opts.derivatives {
        DerivativeSource::Fd => series.d2Nmp.clone(),
        DerivativeSource::Analytic => {
            (0..n).map(|i| series.Nmp[i] / m * (series.d2Hp_formula[i] + series.dHp_formula[i].powi(2) / m)).collect()
        }
    };
    let renyi = (0..n)
        .map(|i| {
            let r = series.Nmp[i] / m * ((series.Ip[i] - m / t[i]).powi(2) / m + w.dWmp_formula[i] / t[i]);
            (d2np[i] - r).abs() / (1.0 + d2np[i].abs())
        })
        .fold(0.0, f64::max);
    identity.diagnostics.insert("renyi_residual".into(), renyi);

    let lhs: Vec<f64> = (0..n).map(|i| w.dWm_formula[i] / t[i]).collect();
    let rhs: Vec<f64> = (0..n).map(|i| -k * series.energy[i] - (series.I[i] - m / t[i]).powi(2) / m).collect();
    let inequality = CheckReport::inequality(
        "w_inequality",
        "(1/t) dW_m/dt ≤ −K ∫|∇φ|²ρ dμ − (1/m)|I − m/t|²",
        t.clone(),
        lhs,
        rhs,
        false,
        opts.tolerance,
    );
    Ok(NiwReports { identity, inequality })
}

/// Equality-case diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityDiagnostics {
    pub applicable: bool,
    /// `max_t ‖∇²φ − (I/m) g‖_{L²(ρ dμ)}`
    pub hessian_soliton: Option<f64>,
    /// `sup |Ric_{m,n}(L) − K|` over the transported points.
    pub ric_deviation: Option<f64>,
    /// `max_t |I′ + I²/m + Kθ²|`
    pub riccati_residual: Option<f64>,
    /// `max_t ((m−n)/(mn)) ∫(Lφ + (m/(m−n)) ∇V·∇φ)² ρ dμ`
    pub weighted_term: Option<f64>,
    /// Spread of the map derivative over the trajectories.
    pub map_derivative_spread: Option<f64>,
    pub warning: Option<String>,
}

impl RigidityDiagnostics {
    pub fn max(&self) -> f64 {
        [self.hessian_soliton, self.ric_deviation, self.riccati_residual, self.weighted_term]
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

pub fn rigidity_probe(path: &GeodesicPath, series: &EntropySeries, k: f64, report: &CheckReport, opts: &LabOptions) -> RigidityDiagnostics {
    if report.verdict != Verdict::Equality {
        return RigidityDiagnostics {
            applicable: false,
            hessian_soliton: None,
            ric_deviation: None,
            riccati_residual: None,
            weighted_term: None,
            map_derivative_spread: None,
            warning: Some(format!("{} is not an equality case", report.check_id)),
        };
    }
    let m = series.m;
    let inv = m.recip();
    let mut soliton = 0.0f64;
    let mut ric = 0.0f64;
    let mut weighted = 0.0f64;
    for (idx, kin) in path.kinematics.iter().enumerate() {
        let snap = Snapshot::from_kinematics(kin);
        let target = series.I[idx] * inv;
        let dev: Vec<f64> = kin
            .local
            .iter()
            .zip(&kin.jet)
            .map(|(l, j)| (j.d2 - target).powi(2) + (l.n - 1.0) * (l.c * j.d1 - target).powi(2))
            .collect();
        soliton = soliton.max(snap.integrate(|j| dev[j] * snap.rho[j]).sqrt());
        for l in &kin.local {
            ric = ric.max((l.ric_mn(m) - k).abs());
        }
        let cross: Vec<f64> = kin.local.iter().zip(&kin.jet).map(|(l, j)| l.hessian_terms(*j, 1.0, m).cross).collect();
        weighted = weighted.max(snap.integrate(|j| cross[j] * snap.rho[j]));
    }
    let theta = path.theta;
    let di = match opts.derivatives {
        DerivativeSource::Fd => time_derivatives(&series.I, path.dt(), series.fd).0,
        DerivativeSource::Analytic => series.d2h_formula(),
    };
    let riccati = (0..series.len())
        .map(|i| (di[i] + inv * series.I[i].powi(2) + k * theta * theta).abs())
        .fold(0.0, f64::max);
    let dv = &path.trajectories.dvel;
    let spread = dv.iter().copied().fold(f64::NEG_INFINITY, f64::max) - dv.iter().copied().fold(f64::INFINITY, f64::min);
    RigidityDiagnostics {
        applicable: true,
        hessian_soliton: Some(soliton),
        ric_deviation: Some(ric),
        riccati_residual: Some(riccati),
        weighted_term: Some(weighted),
        map_derivative_spread: Some(spread),
        warning: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::build_series_with;
    use crate::geometry::BakryEmeryParams;
    use crate::numerics::TimeFd;
    use crate::transport::tests::line;
    use crate::transport::{interpolate_path, monotone_map, sample_density, uniform_times, DensitySpec};

    fn dilation(times: &[f64]) -> GeodesicPath {
        let m = line(-30.0, 30.0, 4096);
        let r0 = sample_density(&m, &DensitySpec::Gaussian { mean: 0.0, std: 1.0 }).unwrap();
        let r1 = sample_density(&m, &DensitySpec::Gaussian { mean: 0.0, std: 2.0 }).unwrap();
        let map = monotone_map(&m, &r0, &r1).unwrap();
        interpolate_path(&m, &map, &r0, times).unwrap().with_params(BakryEmeryParams::new(1.0, 0.0, 2.0, 2.0))
    }

    fn uniform_pair() -> GeodesicPath {
        let m = line(-0.5, 2.5, 3001);
        let r0 = sample_density(&m, &DensitySpec::Uniform { a: 0.0, b: 1.0 }).unwrap();
        let r1 = sample_density(&m, &DensitySpec::Uniform { a: 0.0, b: 2.0 }).unwrap();
        let map = monotone_map(&m, &r0, &r1).unwrap();
        interpolate_path(&m, &map, &r0, &uniform_times(0.0, 1.0, 65)).unwrap()
    }

    #[test]
    fn dilation_is_an_equality_case() {
        let path = dilation(&uniform_times(0.0, 1.0, 65));
        let s = build_series_with(&path, &path.params, &[], TimeFd::Plain).unwrap();
        let closed = check_edi_epdi(&s, 0.0, path.theta, &LabOptions::closed_form());
        assert_eq!(closed.edi.verdict, Verdict::Equality, "{}", closed.edi.max_residual());
        assert_eq!(closed.epdi.verdict, Verdict::Equality);
        assert_eq!(closed.refined.verdict, Verdict::Equality);
        let grid = check_edi_epdi(&s, 0.0, path.theta, &LabOptions::default());
        assert_eq!(grid.edi.verdict, Verdict::Equality, "{}", grid.edi.max_residual());
        let rig = rigidity_probe(&path, &s, 0.0, &closed.edi, &LabOptions::closed_form());
        assert!(rig.applicable && rig.max() < 1e-6, "{rig:?}");
        let pb = check_power_bound(&s, 0.0, path.theta, &LabOptions::closed_form()).unwrap();
        assert_eq!(pb.power.verdict, Verdict::Equality, "{}", pb.power.max_residual());
        assert_eq!(pb.riccati.verdict, Verdict::Equality, "{}", pb.riccati.max_residual());
    }

    #[test]
    fn rigidity_needs_equality() {
        let path = dilation(&uniform_times(0.0, 1.0, 17));
        let s = build_series_with(&path, &path.params, &[], TimeFd::Plain).unwrap();
        let mut rep = check_edi_epdi(&s, 0.0, path.theta, &LabOptions::closed_form()).edi;
        rep.verdict = Verdict::Pass;
        let rig = rigidity_probe(&path, &s, 0.0, &rep, &LabOptions::closed_form());
        assert!(!rig.applicable && rig.warning.is_some() && rig.hessian_soliton.is_none());
    }

    #[test]
    fn sturm_on_uniform_pair() {
        let path = uniform_pair();
        let opts = LabOptions::closed_form();
        let two = check_sturm(&path, 0.0, Dim(1.0), Dim(2.0), &opts).unwrap();
        let mid = 32;
        assert!((two.lhs[mid] + 1.5f64.sqrt()).abs() < 1e-9, "{}", two.lhs[mid]);
        assert!((two.rhs[mid] + 0.5 + 0.5 * 2f64.sqrt()).abs() < 1e-9, "{}", two.rhs[mid]);
        assert!((two.margin[mid] - 0.017638).abs() < 1e-6);
        assert_eq!(two.verdict, Verdict::Pass);
        let one = check_sturm(&path, 0.0, Dim(1.0), Dim(1.0), &opts).unwrap();
        assert_eq!(one.verdict, Verdict::Equality, "{}", one.max_residual());
        assert!(matches!(check_sturm(&path, 0.0, Dim(2.0), Dim(1.0), &opts), Err(LabError::Precondition(_))));

        let jac = check_jacobian(&path, 0.0, Dim(1.0), &opts).unwrap();
        assert!(jac.min_margin() >= -1e-9);
        let id = identity_ij(&path, Dim(2.0), &LabOptions { tolerance: 1e-8, ..opts });
        assert_eq!(id.verdict, Verdict::Equality, "{}", id.max_residual());
    }

    #[test]
    fn sturm_in_conjugate_regime() {
        let path = uniform_pair();
        let big = check_sturm(&path, 1e4, Dim(1.0), Dim(2.0), &LabOptions::default());
        assert!(matches!(big, Err(LabError::ConjugatePoint { .. })), "{big:?}");
    }

    #[test]
    fn w_entropy_on_shifted_window() {
        let times = uniform_times(1.0, 2.0, 65);
        let path = dilation(&times);
        let s = build_series_with(&path, &path.params, &[], TimeFd::Richardson).unwrap();
        let (w, rep) = w_entropy_profile(&s, &path, &LabOptions::closed_form()).unwrap();
        assert!((w.dWm[0] + 0.25).abs() < 1e-4, "{}", w.dWm[0]);
        assert!((w.dWm_formula[0] + 0.25).abs() < 1e-6);
        assert!(rep.passed() && rep.diagnostics["formula_residual"] < 1e-9);
        let niw = check_niw(&s, &w, 0.0, &LabOptions::default()).unwrap();
        assert_ne!(niw.identity.verdict, Verdict::Fail, "{}", niw.identity.max_residual());
        assert!(niw.identity.diagnostics["renyi_residual"] < 3e-3);
        assert!(niw.inequality.passed());

        let minus = LabOptions { w_sign: WSign::Minus, ..LabOptions::closed_form() };
        let (wm, _) = w_entropy_profile(&s, &path, &minus).unwrap();
        assert_eq!(wm.dWm_formula, w.dWm_formula, "m = n drops the potential term");
    }

    #[test]
    fn renyi_and_sn_on_dilation() {
        let path = dilation(&uniform_times(0.0, 1.0, 65));
        let s = build_series_with(&path, &path.params, &[], TimeFd::Plain).unwrap();
        let r = check_renyi(&s, 0.0, &LabOptions::default()).unwrap();
        assert!(r.entropy.passed() && r.power.passed());
        let sn = check_sn(&s, 0.0, &LabOptions::default()).unwrap();
        assert!(sn.full.passed() && sn.weak.passed());
        let low = BakryEmeryParams::new(2.0, 0.0, 0.2, 2.0);
        let s2 = build_series_with(&path, &low, &[], TimeFd::Plain).unwrap();
        assert!(matches!(check_renyi(&s2, 0.0, &LabOptions::default()), Err(LabError::Precondition(_))));
    }

    #[test]
    fn verdict_rules() {
        let t = vec![0.0, 1.0];
        let r = CheckReport::inequality("x", "a ≥ b", t.clone(), vec![1.0, 2.0], vec![0.0, 0.0], true, 1e-6);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = CheckReport::inequality("x", "a ≤ b", t.clone(), vec![1.0, 2.0], vec![0.0, 0.0], false, 1e-6);
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.min_margin(), -2.0);
        let r = CheckReport::identity("x", "a = b", t.clone(), vec![1.0, 2.0], vec![1.0 + 1e-9, 2.0], 1e-6);
        assert_eq!(r.verdict, Verdict::Equality);
        let r = CheckReport::identity("x", "a = b", t, vec![f64::NAN, 2.0], vec![1.0, 2.0], 1e-6);
        assert_eq!(r.verdict, Verdict::Fail);
    }
}
