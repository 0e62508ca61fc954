//! Scenario configuration, single runs, batteries and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{dcn_classify, DcnClass};
use crate::entropy::{build_series_with, EntropySeries, Generator};
use crate::error::{LabError, Result};
use crate::geometry::{build_model, BakryEmeryParams, Dim, Grid, ManifoldModel, ModelDescriptor};
use crate::lab::{self, CheckReport, DerivativeSource, LabOptions, RigidityDiagnostics, WSign, CLOSED_FORM_TOL, GRID_TOL};
use crate::numerics::TimeFd;
use crate::transport::{
    hj_residual, hopf_lax_evolve, interpolate_path_with, model_gaussian_path, monotone_map, recover_phase,
    sample_density, sample_phase, uniform_times, Clock, DensitySpec, GeodesicPath, PhaseSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineChoice {
    #[default]
    Quantile,
    HopfLax,
    Both,
    /// Closed-form model Gaussian pair.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    Edi,
    Epdi,
    PowerBound,
    Renyi,
    Sn,
    Sturm,
    Jacobian,
    IdentityIj,
    EntInfty,
    WEntropy,
    Niw,
    Rigidity,
    HjResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub rho0: DensitySpec,
    #[serde(default)]
    pub rho1: Option<DensitySpec>,
    #[serde(default)]
    pub phi0: Option<PhaseSpec>,
}

/// Bakry–Émery parameters; `m` defaults to `n` (∞ on weighted models), `K`
/// to the infimum of `Ric_{m,n}` over the path and `N` to `max(m, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub m: Option<Dim>,
    #[serde(rename = "K", default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(rename = "N", default)]
    pub n: Option<Dim>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// The endpoints sit at the ends of the window.
    #[default]
    Window,
    /// Path time is the geodesic parameter of the endpoint map.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub clock: ClockMode,
}

fn default_samples() -> usize {
    65
}

impl Default for TimeWindow {
    fn default() -> Self {
        TimeWindow { t0: 0.0, t1: 1.0, samples: default_samples(), clock: ClockMode::Window }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub series: bool,
    #[serde(default = "yes")]
    pub path: bool,
    #[serde(default = "yes")]
    pub margins: bool,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { series: true, path: true, margins: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelDescriptor,
    #[serde(default)]
    pub endpoints: Option<Endpoints>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub engine: EngineChoice,
    #[serde(default)]
    pub time_window: TimeWindow,
    pub checks: Vec<CheckId>,
    /// `"default"` and per-check overrides keyed by check id.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub fd: TimeFd,
    #[serde(default)]
    pub derivatives: Option<DerivativeSource>,
    #[serde(default)]
    pub w_sign: WSign,
    #[serde(default)]
    pub generators: Vec<Generator>,
    /// Exponents for the Sturm, Jacobian and `I_N` checks; defaults to `[N]`.
    #[serde(default)]
    pub exponents: Vec<Dim>,
    #[serde(default)]
    pub expect: Expectation,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.time_window;
        if !(w.t1 > w.t0) || w.samples < 5 {
            return Err(LabError::Config("time window needs t1 > t0 and at least 5 samples".into()));
        }
        if self.engine != EngineChoice::Model {
            let ep = self.endpoints.as_ref().ok_or_else(|| LabError::Config("missing endpoints".into()))?;
            if ep.rho1.is_none() && ep.phi0.is_none() {
                return Err(LabError::Config("endpoints need rho1 or phi0".into()));
            }
            if ep.rho1.is_none() && self.engine != EngineChoice::HopfLax {
                return Err(LabError::Config("the quantile engine needs rho1".into()));
            }
        }
        let positive = w.t0 > 0.0;
        if !positive && self.checks.iter().any(|c| matches!(c, CheckId::WEntropy | CheckId::Niw)) {
            return Err(LabError::Config("W-entropy checks need a positive time window".into()));
        }
        Ok(())
    }

    fn tolerance(&self, id: &str, base: f64) -> f64 {
        self.tolerances
            .get(id)
            .or_else(|| self.tolerances.get("default"))
            .copied()
            .unwrap_or(base)
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub grid_size: Option<usize>,
    pub time_samples: Option<usize>,
    pub tolerance: Option<f64>,
    pub engine: Option<EngineChoice>,
    pub w_sign: Option<WSign>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(g) = self.grid_size {
            cfg.model.grid_size = g;
        }
        if let Some(s) = self.time_samples {
            cfg.time_window.samples = s;
        }
        if let Some(t) = self.tolerance {
            cfg.tolerances.insert("default".into(), t);
        }
        if let Some(e) = self.engine {
            cfg.engine = e;
        }
        if let Some(w) = self.w_sign {
            cfg.w_sign = w;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSource {
    Override,
    MinRicMn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineReport {
    pub engine: String,
    pub params: BakryEmeryParams,
    pub k_source: KSource,
    pub min_ric_mn: f64,
    pub theta: f64,
    pub checks: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rigidity: Option<RigidityDiagnostics>,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub expect: Expectation,
    /// Every check passed (verdict pass or equality).
    pub passed: bool,
    pub engines: Vec<EngineReport>,
    pub dcn: Vec<DcnClass>,
}

impl ScenarioReport {
    fn failure(name: &str, expect: Expectation, e: &LabError) -> Self {
        ScenarioReport {
            name: name.into(),
            status: RunStatus::Error,
            error: Some(e.to_string()),
            expect,
            passed: false,
            engines: Vec::new(),
            dcn: Vec::new(),
        }
    }

    pub fn checks(&self) -> impl Iterator<Item = (&str, &CheckReport)> {
        self.engines.iter().flat_map(|e| e.checks.iter().map(move |c| (e.engine.as_str(), c)))
    }

    pub fn check(&self, engine: &str, id: &str) -> Option<&CheckReport> {
        self.checks().find(|(e, c)| *e == engine && c.check_id == id).map(|(_, c)| c)
    }
}

/// A finished run: the report plus the data behind its CSV files.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub paths: Vec<GeodesicPath>,
    pub series: Vec<EntropySeries>,
    pub w_entropy: Vec<Option<lab::WEntropySeries>>,
}

fn default_params(model: &ManifoldModel, cfg: &ParamsConfig) -> BakryEmeryParams {
    let m = cfg.m.unwrap_or(if model.is_weighted() { Dim::INFINITE } else { Dim(model.dim()) });
    let n = cfg.n.unwrap_or(if m.0 >= 2.0 { m } else { Dim(2.0) });
    BakryEmeryParams { m, k: 0.0, p: cfg.p.unwrap_or(2.0), n_sturm: n }
}

fn build_paths(cfg: &ScenarioConfig, model: &ManifoldModel) -> Result<Vec<GeodesicPath>> {
    let w = &cfg.time_window;
    let times = uniform_times(w.t0, w.t1, w.samples);
    if cfg.engine == EngineChoice::Model {
        let grid = Grid::new(cfg.model.domain[0], cfg.model.domain[1], cfg.model.grid_size, false)?;
        return Ok(vec![model_gaussian_path(cfg.model.n, &times, grid)?]);
    }
    let ep = cfg.endpoints.as_ref().ok_or_else(|| LabError::Config("missing endpoints".into()))?;
    let rho0 = sample_density(model, &ep.rho0)?;
    let clock = match w.clock {
        ClockMode::Window => Clock::window(w.t0, w.t1),
        ClockMode::Identity => Clock::IDENTITY,
    };
    let mut out = Vec::new();
    let quantile = match &ep.rho1 {
        Some(r1) => {
            let rho1 = sample_density(model, r1)?;
            let map = monotone_map(model, &rho0, &rho1)?;
            let path = interpolate_path_with(model, &map, &rho0, &times, clock)?;
            Some((map, path))
        }
        None => None,
    };
    if let Some((_, p)) = &quantile {
        if cfg.engine != EngineChoice::HopfLax {
            out.push(p.clone());
        }
    }
    if matches!(cfg.engine, EngineChoice::HopfLax | EngineChoice::Both) {
        let (phi0, start) = match (&ep.phi0, &quantile) {
            (Some(spec), _) => (sample_phase(model, spec)?, rho0.clone()),
            (None, Some((map, p))) => {
                let mut phi = recover_phase(model, map, clock.param(w.t0))?;
                let scaled: Vec<f64> = phi.values().iter().map(|v| v * clock.rate).collect();
                phi = crate::geometry::ScalarField::new(&model.grid, scaled)?;
                (phi, p.densities[0].clone())
            }
            (None, None) => return Err(LabError::Config("Hopf–Lax runs need phi0 or rho1".into())),
        };
        out.push(hopf_lax_evolve(model, &phi0, &start, &times)?);
    }
    Ok(out)
}

fn engine_name(path: &GeodesicPath) -> &'static str {
    match path.engine {
        crate::transport::Engine::Quantile => "quantile",
        crate::transport::Engine::HopfLax => "hopf_lax",
        crate::transport::Engine::Model => "model",
    }
}

fn run_engine(
    cfg: &ScenarioConfig,
    path: GeodesicPath,
) -> Result<(EngineReport, GeodesicPath, EntropySeries, Option<lab::WEntropySeries>)> {
    let mut params = if path.engine == crate::transport::Engine::Model && cfg.params == ParamsConfig::default() {
        path.params
    } else {
        default_params(&path.model, &cfg.params)
    };
    let min_ric = path.min_ric_mn(params.m);
    let k_source = match cfg.params.k {
        Some(k) => {
            params.k = k;
            KSource::Override
        }
        None => {
            params.k = min_ric;
            KSource::MinRicMn
        }
    };
    params.validate(&path.model)?;
    let path = path.with_params(params);
    let closed = path.engine == crate::transport::Engine::Model;
    let source = cfg.derivatives.unwrap_or(if closed { DerivativeSource::Analytic } else { DerivativeSource::Fd });
    let base = if closed || source == DerivativeSource::Analytic { CLOSED_FORM_TOL } else { GRID_TOL };
    let opts = |id: &str| LabOptions { tolerance: cfg.tolerance(id, base), derivatives: source, w_sign: cfg.w_sign };
    let series = build_series_with(&path, &params, &cfg.generators, cfg.fd)?;
    let (k, theta) = (params.k, path.theta);
    let exponents = if cfg.exponents.is_empty() { vec![params.n_sturm] } else { cfg.exponents.clone() };

    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut rigidity = None;
    let mut w_series = None;
    let wants = |c: CheckId| cfg.checks.contains(&c);
    if wants(CheckId::Edi) || wants(CheckId::Epdi) || wants(CheckId::Rigidity) {
        let r = lab::check_edi_epdi(&series, k, theta, &opts("edi"));
        if wants(CheckId::Rigidity) {
            rigidity = Some(lab::rigidity_probe(&path, &series, k, &r.edi, &opts("rigidity")));
        }
        if wants(CheckId::Edi) || wants(CheckId::Rigidity) {
            checks.push(r.edi);
            checks.push(r.refined);
        }
        if wants(CheckId::Epdi) {
            let mut e = r.epdi;
            e.tolerance = cfg.tolerance("epdi", base);
            e.verdict = rejudge(&e);
            checks.push(e);
        }
    }
    if wants(CheckId::PowerBound) {
        // these compare exact path quantities with ODE solutions
        let r = lab::check_power_bound(&series, k, theta, &opts_with(cfg, "power_bound", CLOSED_FORM_TOL, source))?;
        checks.push(r.power);
        checks.push(r.riccati);
    }
    if wants(CheckId::Renyi) {
        let r = lab::check_renyi(&series, k, &opts("renyi"))?;
        checks.push(r.entropy);
        checks.push(r.power);
    }
    if wants(CheckId::Sn) {
        let r = lab::check_sn(&series, k, &opts("sn"))?;
        checks.push(r.full);
        checks.push(r.weak);
    }
    for &e in &exponents {
        if wants(CheckId::Sturm) {
            checks.push(lab::check_sturm(&path, k, params.n_sturm, e, &opts("sturm"))?);
        }
        if wants(CheckId::Jacobian) {
            let mut r = lab::check_jacobian(&path, k, e, &opts("jacobian"))?;
            r.check_id = format!("jacobian_{}", label(e));
            checks.push(r);
        }
        if wants(CheckId::IdentityIj) {
            checks.push(lab::identity_ij(&path, e, &opts("identity_ij")));
        }
    }
    if wants(CheckId::EntInfty) {
        let r = lab::check_ent_infty(&series, k, theta, None, &opts("ent_infty"))?;
        checks.push(r.differential);
        checks.push(r.integrated);
        for &g in &cfg.generators {
            if dcn_classify(g, params.n_sturm)?.member {
                if let Some(f) = lab::check_ent_infty(&series, k, theta, Some(g), &opts("ent_infty"))?.functional {
                    checks.push(f);
                }
            } else {
                notes.push(format!("{} is not in DC_{}; functional check skipped", g.name(), params.n_sturm));
            }
        }
    }
    if wants(CheckId::WEntropy) || wants(CheckId::Niw) {
        let (w, rep) = lab::w_entropy_profile(&series, &path, &opts("w_entropy"))?;
        if wants(CheckId::WEntropy) {
            checks.push(rep);
        }
        if wants(CheckId::Niw) {
            let r = lab::check_niw(&series, &w, k, &opts("niw"))?;
            checks.push(r.identity);
            checks.push(r.inequality);
        }
        w_series = Some(w);
    }
    let mut diagnostics = BTreeMap::new();
    if path.engine == crate::transport::Engine::HopfLax {
        let worst = (0..path.times.len()).map(|i| hj_residual(&path, i)).fold(0.0, f64::max);
        diagnostics.insert("hj_residual".into(), worst);
        if wants(CheckId::HjResidual) {
            let tol = cfg.tolerance("hj_residual", GRID_TOL);
            let res: Vec<f64> = (0..path.times.len()).map(|i| hj_residual(&path, i)).collect();
            let r = CheckReport {
                check_id: "hj_residual".into(),
                kind: lab::CheckKind::Identity,
                relation: "∫|∂ₜφ + ½|∇φ|²| ρ dμ = 0".into(),
                times: path.times.clone(),
                lhs: res.clone(),
                rhs: vec![0.0; res.len()],
                margin: res.clone(),
                residual: res,
                verdict: lab::Verdict::Pass,
                tolerance: tol,
                diagnostics: BTreeMap::new(),
                notes: Vec::new(),
            };
            let mut r = r;
            r.verdict = rejudge(&r);
            checks.push(r);
        }
    }
    let push = (0..path.times.len()).map(|i| path.pushforward_residual(i)).fold(0.0, f64::max);
    diagnostics.insert("pushforward_residual".into(), push);
    let report = EngineReport {
        engine: engine_name(&path).into(),
        params,
        k_source,
        min_ric_mn: min_ric,
        theta,
        checks,
        rigidity,
        diagnostics,
        notes,
    };
    Ok((report, path, series, w_series))
}

fn opts_with(cfg: &ScenarioConfig, id: &str, base: f64, source: DerivativeSource) -> LabOptions {
    LabOptions { tolerance: cfg.tolerance(id, base), derivatives: source, w_sign: cfg.w_sign }
}

fn rejudge(r: &CheckReport) -> lab::Verdict {
    let broken = r.margin.iter().any(|m| m.is_nan() || *m == f64::NEG_INFINITY);
    if broken {
        lab::Verdict::Fail
    } else if r.max_residual() <= r.tolerance {
        lab::Verdict::Equality
    } else if r.kind == lab::CheckKind::Inequality && r.min_margin() >= -r.tolerance {
        lab::Verdict::Pass
    } else {
        lab::Verdict::Fail
    }
}

fn label(d: Dim) -> String {
    if d.is_infinite() {
        "inf".into()
    } else {
        format!("{}", d.0)
    }
}

/// Build the model, the paths and the series, and evaluate the requested checks.
pub fn execute(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let model = build_model(&cfg.model)?;
    let paths = build_paths(cfg, &model)?;
    let mut engines = Vec::new();
    let mut kept = Vec::new();
    let mut series = Vec::new();
    let mut ws = Vec::new();
    for p in paths {
        let (r, p, s, w) = run_engine(cfg, p)?;
        engines.push(r);
        kept.push(p);
        series.push(s);
        ws.push(w);
    }
    if kept.len() == 2 {
        let (a, b) = (&kept[0], &kept[1]);
        let h = model.grid.h();
        let gap = (0..a.times.len())
            .map(|k| {
                a.densities[k].values().iter().zip(b.densities[k].values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * h
            })
            .fold(0.0, f64::max);
        engines[1].diagnostics.insert("engine_l1_gap".into(), gap);
    }
    let n_sturm = kept.first().map(|p| p.params.n_sturm).unwrap_or(Dim(2.0));
    let dcn = cfg.generators.iter().map(|&g| dcn_classify(g, n_sturm)).collect::<Result<Vec<_>>>()?;
    let passed = engines.iter().all(|e| e.checks.iter().all(|c| c.passed()));
    let report = ScenarioReport {
        name: cfg.name.clone(),
        status: RunStatus::Ok,
        error: None,
        expect: cfg.expect,
        passed,
        engines,
        dcn,
    };
    Ok(ScenarioRun { report, paths: kept, series, w_entropy: ws })
}

/// Run one scenario and write its artifacts under `out_dir/<name>`. Errors
/// become a report with status `error`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioReport> {
    let dir = out_dir.join(&cfg.name);
    fs::create_dir_all(&dir)?;
    let report = match execute(cfg) {
        Ok(run) => {
            write_artifacts(cfg, &run, &dir)?;
            run.report
        }
        Err(e) => ScenarioReport::failure(&cfg.name, cfg.expect, &e),
    };
    let f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(f, &report)?;
    Ok(report)
}

fn write_artifacts(cfg: &ScenarioConfig, run: &ScenarioRun, dir: &Path) -> Result<()> {
    for (i, path) in run.paths.iter().enumerate() {
        let tag = engine_name(path);
        if cfg.outputs.series {
            run.series[i].write_csv(BufWriter::new(File::create(dir.join(format!("series_{tag}.csv")))?))?;
            if let Some(w) = &run.w_entropy[i] {
                w.write_csv(BufWriter::new(File::create(dir.join(format!("w_entropy_{tag}.csv")))?))?;
            }
        }
        if cfg.outputs.path {
            write_path_csv(path, BufWriter::new(File::create(dir.join(format!("path_{tag}.csv")))?))?;
        }
    }
    if cfg.outputs.margins {
        let mdir = dir.join("margins");
        fs::create_dir_all(&mdir)?;
        for (engine, c) in run.report.checks() {
            c.write_csv(BufWriter::new(File::create(mdir.join(format!("{engine}_{}.csv", c.check_id)))?))?;
        }
    }
    Ok(())
}

/// Long-format plot data `t,x,rho,phi`.
pub fn write_path_csv(path: &GeodesicPath, mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "t,x,rho,phi")?;
    let xs = path.model.grid.nodes();
    for (k, &t) in path.times.iter().enumerate() {
        let rho = path.densities[k].values();
        let phi = path.phases[k].values();
        for i in 0..xs.len() {
            writeln!(w, "{t:.17e},{:.17e},{:.17e},{:.17e}", xs[i], rho[i], phi[i])?;
        }
    }
    Ok(())
}

/// Scenario files of a battery, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenarios: Vec<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub engine: String,
    pub check_id: String,
    pub verdict: String,
    pub min_margin: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStatus {
    pub scenario: String,
    pub passed: bool,
    pub expect: Expectation,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatterySummary {
    pub scenarios: Vec<ScenarioStatus>,
    pub rows: Vec<SummaryRow>,
}

impl BatterySummary {
    pub fn from_reports(reports: &[ScenarioReport]) -> Self {
        let mut s = BatterySummary::default();
        for r in reports {
            s.scenarios.push(ScenarioStatus {
                scenario: r.name.clone(),
                passed: r.passed,
                expect: r.expect,
                error: r.error.clone(),
            });
            for (engine, c) in r.checks() {
                s.rows.push(SummaryRow {
                    scenario: r.name.clone(),
                    engine: engine.into(),
                    check_id: c.check_id.clone(),
                    verdict: serde_json::to_value(c.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    min_margin: c.min_margin(),
                    max_residual: c.max_residual(),
                });
            }
        }
        s
    }

    pub fn all_passed(&self) -> bool {
        self.scenarios.iter().all(|s| s.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:<9} {:<26} {:<9} {:>13} {:>13}", "scenario", "engine", "check", "verdict", "min margin", "max residual");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:<9} {:<26} {:<9} {:>13.4e} {:>13.4e}",
                r.scenario, r.engine, r.check_id, r.verdict, r.min_margin, r.max_residual
            );
        }
        for s in &self.scenarios {
            let state = if s.passed { "pass" } else { "FAIL" };
            let exp = match s.expect {
                Expectation::Pass => "",
                Expectation::Fail => " (expected to fail)",
            };
            let err = s.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default();
            let _ = writeln!(out, "{state} {}{exp}{err}", s.scenario);
        }
        out
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "scenario,engine,check_id,verdict,min_margin,max_residual")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{:.17e},{:.17e}", r.scenario, r.engine, r.check_id, r.verdict, r.min_margin, r.max_residual)?;
        }
        Ok(())
    }
}

/// Run every scenario of a manifest in parallel and write `summary.json` and
/// `summary.csv` next to the per-scenario directories.
pub fn run_battery(manifest: &Path, overrides: &Overrides, out_dir: &Path) -> Result<BatterySummary> {
    let (m, base) = Manifest::load(manifest)?;
    fs::create_dir_all(out_dir)?;
    let reports: Vec<ScenarioReport> = m
        .scenarios
        .par_iter()
        .map(|rel| {
            let file = base.join(rel);
            let name = rel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match ScenarioConfig::load(&file) {
                Ok(mut cfg) => {
                    overrides.apply(&mut cfg);
                    run_scenario(&cfg, out_dir).unwrap_or_else(|e| ScenarioReport::failure(&cfg.name, cfg.expect, &e))
                }
                Err(e) => ScenarioReport::failure(&name, Expectation::Pass, &e),
            }
        })
        .collect();
    let summary = BatterySummary::from_reports(&reports);
    serde_json::to_writer_pretty(BufWriter::new(File::create(out_dir.join("summary.json"))?), &summary)?;
    summary.write_csv(BufWriter::new(File::create(out_dir.join("summary.csv"))?))?;
    Ok(summary)
}

/// Re-render the summary of a battery or single-run directory.
pub fn report(run_dir: &Path) -> Result<BatterySummary> {
    let summary = run_dir.join("summary.json");
    if summary.exists() {
        let text = fs::read_to_string(summary)?;
        return Ok(serde_json::from_str(&text)?);
    }
    let mut reports = Vec::new();
    let mut candidates = vec![run_dir.join("report.json")];
    let mut subdirs: Vec<PathBuf> = fs::read_dir(run_dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    candidates.extend(subdirs.into_iter().map(|d| d.join("report.json")));
    for c in candidates.into_iter().filter(|c| c.exists()) {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&c)?)?;
        reports.push(stored_report(&v)?);
    }
    if reports.is_empty() {
        return Err(LabError::Config(format!("no report.json under {}", run_dir.display())));
    }
    Ok(summarize_stored(&reports))
}

struct StoredReport {
    status: ScenarioStatus,
    rows: Vec<SummaryRow>,
}

fn stored_report(v: &serde_json::Value) -> Result<StoredReport> {
    let bad = || LabError::Config("malformed report.json".into());
    let name = v["name"].as_str().ok_or_else(bad)?.to_string();
    let expect: Expectation = serde_json::from_value(v["expect"].clone()).unwrap_or_default();
    let status = ScenarioStatus {
        scenario: name.clone(),
        passed: v["passed"].as_bool().ok_or_else(bad)?,
        expect,
        error: v["error"].as_str().map(String::from),
    };
    let mut rows = Vec::new();
    for e in v["engines"].as_array().into_iter().flatten() {
        let engine = e["engine"].as_str().unwrap_or_default();
        for c in e["checks"].as_array().into_iter().flatten() {
            let nums = |key: &str| -> Vec<f64> { c[key].as_array().into_iter().flatten().filter_map(|x| x.as_f64()).collect() };
            rows.push(SummaryRow {
                scenario: name.clone(),
                engine: engine.into(),
                check_id: c["check_id"].as_str().unwrap_or_default().into(),
                verdict: c["verdict"].as_str().unwrap_or_default().into(),
                min_margin: nums("margin").into_iter().fold(f64::INFINITY, f64::min),
                max_residual: nums("residual").into_iter().fold(0.0, f64::max),
            });
        }
    }
    Ok(StoredReport { status, rows })
}

fn summarize_stored(reports: &[StoredReport]) -> BatterySummary {
    BatterySummary {
        scenarios: reports.iter().map(|r| r.status.clone()).collect(),
        rows: reports.iter().flat_map(|r| r.rows.iter().cloned()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioConfig {
        serde_json::from_str(
            r#"{
                "name": "g",
                "model": {"kind": "line", "n": 1, "domain": [-16, 16], "grid_size": 1024},
                "endpoints": {"rho0": {"preset": "gaussian", "std": 1}, "rho1": {"preset": "gaussian", "mean": 1, "std": 1.5}},
                "checks": ["edi", "sturm"],
                "tolerances": {"sturm": 1e-5}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_overrides() {
        let mut cfg = minimal();
        assert_eq!(cfg.engine, EngineChoice::Quantile);
        assert_eq!(cfg.time_window, TimeWindow::default());
        assert_eq!(cfg.tolerance("sturm", GRID_TOL), 1e-5);
        assert_eq!(cfg.tolerance("edi", GRID_TOL), GRID_TOL);
        Overrides { grid_size: Some(256), tolerance: Some(1e-4), engine: Some(EngineChoice::Both), ..Default::default() }
            .apply(&mut cfg);
        assert_eq!(cfg.model.grid_size, 256);
        assert_eq!(cfg.tolerance("edi", GRID_TOL), 1e-4);
        assert_eq!(cfg.tolerance("sturm", GRID_TOL), 1e-5);
        assert_eq!(cfg.engine, EngineChoice::Both);
    }

    #[test]
    fn execute_resolves_k_and_engines() {
        let mut cfg = minimal();
        cfg.engine = EngineChoice::Both;
        let run = execute(&cfg).unwrap();
        assert_eq!(run.report.engines.len(), 2);
        let e = &run.report.engines[0];
        assert_eq!(e.k_source, KSource::MinRicMn);
        assert_eq!(e.params.k, 0.0);
        assert_eq!(e.params.n_sturm, Dim(2.0));
        assert!(run.report.passed);
        assert!(run.report.engines[1].diagnostics["engine_l1_gap"] < 5e-3);
    }

    #[test]
    fn validation() {
        let mut cfg = minimal();
        cfg.checks.push(CheckId::Niw);
        assert!(matches!(cfg.validate(), Err(LabError::Config(_))));
        let mut cfg = minimal();
        cfg.endpoints.as_mut().unwrap().rho1 = None;
        assert!(matches!(cfg.validate(), Err(LabError::Config(_))));
        let bad = serde_json::from_str::<ScenarioConfig>(r#"{"name": "x", "model": {"kind": "line", "n": 1, "domain": [0, 1]}, "checks": ["nope"]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn summary_rendering() {
        let run = execute(&minimal()).unwrap();
        let s = BatterySummary::from_reports(std::slice::from_ref(&run.report));
        assert!(s.all_passed());
        let text = s.render();
        assert!(text.contains("sturm_2") && text.contains("pass g"));
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + s.rows.len());
    }
}
