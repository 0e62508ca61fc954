//! Model manifolds reducible to one coordinate, their measures, curvature
//! profiles and the radial differential operators.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};
use crate::numerics;

/// Distance kept from the poles of a sphere-radial domain.
pub const POLE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub size: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl Grid {
    pub fn new(a: f64, b: f64, size: usize, periodic: bool) -> Result<Self> {
        if size < 16 {
            return Err(LabError::Grid(format!("size {size} < 16")));
        }
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(LabError::Grid(format!("bounds [{a}, {b}]")));
        }
        Ok(Grid { a, b, size, periodic })
    }

    pub fn h(&self) -> f64 {
        if self.periodic {
            (self.b - self.a) / self.size as f64
        } else {
            (self.b - self.a) / (self.size - 1) as f64
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.a + self.h() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.x(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = 1e-12 * (self.b - self.a);
        x >= self.a - tol && x <= self.b + tol
    }
}

/// Values sampled on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size {
            return Err(LabError::Grid(format!(
                "field has {} values, grid has {}",
                values.len(),
                grid.size
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("scalar field"));
        }
        Ok(ScalarField(values))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ScalarField(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A dimension parameter that may be `+∞`. Serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dim(pub f64);

impl Dim {
    pub const INFINITE: Dim = Dim(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `1/m`, zero at infinity.
    pub fn recip(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Dim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Dim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Dim(v)),
            Raw::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "+inf") => Ok(Dim::INFINITE),
            Raw::Text(s) => Err(de::Error::custom(format!("bad dimension {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Line,
    WeightedLine,
    SphereRadial,
    HyperbolicRadial,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Line => "line",
            ModelKind::WeightedLine => "weighted_line",
            ModelKind::SphereRadial => "sphere_radial",
            ModelKind::HyperbolicRadial => "hyperbolic_radial",
        }
    }

    /// Sectional curvature of the model space.
    fn kappa(self) -> f64 {
        match self {
            ModelKind::SphereRadial => 1.0,
            ModelKind::HyperbolicRadial => -1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `k (x − center)² / 2`
    Quadratic {
        #[serde(default = "one")]
        k: f64,
        #[serde(default)]
        center: f64,
    },
    /// `a x⁴ / 4`
    Quartic { a: f64 },
    /// `amplitude · cos(frequency · x)`
    Cosine { amplitude: f64, frequency: f64 },
    /// Samples on the model grid.
    Table { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
enum Potential {
    Zero,
    Quadratic { k: f64, center: f64 },
    Quartic { a: f64 },
    Cosine { amp: f64, freq: f64 },
    Table { a: f64, h: f64, v: Vec<f64>, dv: Vec<f64>, d2v: Vec<f64> },
}

impl Potential {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Potential::Zero => (0.0, 0.0, 0.0),
            Potential::Quadratic { k, center } => {
                let y = x - center;
                (0.5 * k * y * y, k * y, *k)
            }
            Potential::Quartic { a } => (0.25 * a * x.powi(4), a * x.powi(3), 3.0 * a * x * x),
            Potential::Cosine { amp, freq } => {
                let (s, c) = (freq * x).sin_cos();
                (amp * c, -amp * freq * s, -amp * freq * freq * c)
            }
            Potential::Table { a, h, v, dv, d2v } => {
                let n = v.len();
                let pos = ((x - a) / h).clamp(0.0, (n - 1) as f64);
                let j = (pos.floor() as usize).min(n - 2);
                let s = pos - j as f64;
                let val = numerics::hermite(s, *h, v[j], v[j + 1], dv[j], dv[j + 1]);
                let d = numerics::hermite(s, *h, dv[j], dv[j + 1], d2v[j], d2v[j + 1]);
                let dd = d2v[j] + s * (d2v[j + 1] - d2v[j]);
                (val, d, dd)
            }
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Quadratic { k, .. } => *k == 0.0,
            Potential::Quartic { a } => *a == 0.0,
            Potential::Cosine { amp, freq } => *amp == 0.0 || *freq == 0.0,
            Potential::Table { v, .. } => v.iter().all(|x| *x == v[0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub kind: ModelKind,
    pub n: u32,
    pub domain: [f64; 2],
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub periodic: bool,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

fn default_grid_size() -> usize {
    2048
}

/// Local geometric data at one point of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Local {
    pub n: f64,
    /// Radial shape factor: `cot r`, `coth r` or 0.
    pub c: f64,
    /// Ricci curvature on the unit radial direction.
    pub ric: f64,
    pub dv: f64,
    pub d2v: f64,
}

/// First and second radial derivatives of a function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub d1: f64,
    pub d2: f64,
}

impl Local {
    pub fn laplacian(&self, j: Jet) -> f64 {
        j.d2 + (self.n - 1.0) * self.c * j.d1
    }

    pub fn witten(&self, j: Jet) -> f64 {
        self.laplacian(j) - self.dv * j.d1
    }

    pub fn hess_sq(&self, j: Jet) -> f64 {
        let tang = self.c * j.d1;
        j.d2 * j.d2 + (self.n - 1.0) * tang * tang
    }

    pub fn ric_l(&self) -> f64 {
        self.ric + self.d2v
    }

    pub fn ric_mn(&self, m: Dim) -> f64 {
        if m.is_infinite() {
            self.ric_l()
        } else if m.0 <= self.n {
            self.ric
        } else {
            self.ric_l() - self.dv * self.dv / (m.0 - self.n)
        }
    }

    pub fn gamma2(&self, j: Jet) -> f64 {
        self.hess_sq(j) + self.ric_l() * j.d1 * j.d1
    }

    /// `‖∇²φ − (Δφ/n) g‖²`
    pub fn traceless(&self, j: Jet) -> f64 {
        let mean = self.laplacian(j) / self.n;
        let tang = self.c * j.d1;
        (j.d2 - mean).powi(2) + (self.n - 1.0) * (tang - mean).powi(2)
    }

    /// `‖∇²φ − g/t‖²`
    pub fn shifted_hess_sq(&self, j: Jet, t: f64) -> f64 {
        let tang = self.c * j.d1;
        (j.d2 - 1.0 / t).powi(2) + (self.n - 1.0) * (tang - 1.0 / t).powi(2)
    }

    pub fn hessian_terms(&self, j: Jet, t: f64, m: Dim) -> HessianTerms {
        let lap = self.laplacian(j);
        let lphi = self.witten(j);
        let drift = self.dv * j.d1;
        let n = self.n;
        let (scalar, potential, cross) = if m.is_infinite() {
            (-2.0 * lphi / t + n / (t * t), -2.0 * drift / t, (lphi + drift).powi(2) / n)
        } else if m.0 <= n {
            ((lphi - m.0 / t).powi(2) / m.0, 0.0, 0.0)
        } else {
            let m = m.0;
            let r = m - n;
            (
                (lphi - m / t).powi(2) / m,
                -(drift + r / t).powi(2) / r,
                r / (m * n) * (lphi + m / r * drift).powi(2),
            )
        };
        let shifted = self.shifted_hess_sq(j, t);
        let traceless = self.traceless(j);
        HessianTerms {
            shifted,
            laplacian: lap,
            witten: lphi,
            drift,
            traceless,
            cross,
            residual: shifted - (scalar + potential + cross + traceless),
        }
    }
}

/// Pointwise terms of the shifted-Hessian decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianTerms {
    pub shifted: f64,
    pub laplacian: f64,
    pub witten: f64,
    pub drift: f64,
    pub traceless: f64,
    /// `((m−n)/(mn)) (Lφ + (m/(m−n)) ∇V·∇φ)²`
    pub cross: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub n: u32,
    pub grid: Grid,
    pub volume_density: ScalarField,
    pub potential: ScalarField,
    pot: Potential,
}

impl ManifoldModel {
    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    /// `ω(r)`
    pub fn omega(&self, r: f64) -> f64 {
        let e = self.n as i32 - 1;
        match self.kind {
            ModelKind::SphereRadial => r.sin().powi(e),
            ModelKind::HyperbolicRadial => r.sinh().powi(e),
            _ => 1.0,
        }
    }

    pub fn shape_factor(&self, r: f64) -> f64 {
        match self.kind {
            ModelKind::SphereRadial => 1.0 / r.tan(),
            ModelKind::HyperbolicRadial => 1.0 / r.tanh(),
            _ => 0.0,
        }
    }

    /// Potential and its first two derivatives.
    pub fn potential_at(&self, x: f64) -> (f64, f64, f64) {
        self.pot.eval(x)
    }

    pub fn is_weighted(&self) -> bool {
        !self.pot.is_constant()
    }

    /// Density of `μ = e^{−V} ω dr` with respect to `dr`.
    pub fn mu_density(&self, x: f64) -> f64 {
        self.omega(x) * (-self.pot.eval(x).0).exp()
    }

    /// `log` of the μ-density ratio `dμ(y)/dμ(x)` per unit coordinate.
    pub fn log_mu_ratio(&self, x: f64, y: f64) -> f64 {
        let vx = self.pot.eval(x).0;
        let vy = self.pot.eval(y).0;
        let e = self.dim() - 1.0;
        let lw = match self.kind {
            ModelKind::SphereRadial if e > 0.0 => e * (y.sin() / x.sin()).ln(),
            ModelKind::HyperbolicRadial if e > 0.0 => e * (y.sinh() / x.sinh()).ln(),
            _ => 0.0,
        };
        lw + vx - vy
    }

    pub fn ricci(&self) -> f64 {
        (self.dim() - 1.0) * self.kind.kappa()
    }

    pub fn local(&self, x: f64) -> Local {
        let (_, dv, d2v) = self.pot.eval(x);
        Local { n: self.dim(), c: self.shape_factor(x), ric: self.ricci(), dv, d2v }
    }

    /// Whether `x` lies where the model is nondegenerate.
    pub fn admits(&self, x: f64) -> bool {
        match self.kind {
            ModelKind::SphereRadial => x > 0.0 && x < std::f64::consts::PI,
            ModelKind::HyperbolicRadial => x > 0.0,
            _ => x.is_finite(),
        }
    }

    /// μ-quadrature weights on the grid.
    pub fn mu_weights(&self) -> Vec<f64> {
        let h = self.grid.h();
        let mut w = if self.grid.periodic {
            vec![h; self.grid.size]
        } else {
            numerics::trapezoid_weights(self.grid.size, h, |_| true)
        };
        for (i, wi) in w.iter_mut().enumerate() {
            *wi *= self.mu_density(self.grid.x(i));
        }
        w
    }

    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.mu_weights().iter().zip(f.values()).map(|(w, v)| w * v).sum()
    }

    pub fn derivatives(&self, f: &ScalarField) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.h();
        if self.grid.periodic {
            (numerics::d1_periodic(f.values(), h), numerics::d2_periodic(f.values(), h))
        } else {
            (numerics::d1(f.values(), h), numerics::d2(f.values(), h))
        }
    }

    fn pointwise(&self, f: &ScalarField, g: impl Fn(&Local, Jet) -> f64) -> Result<ScalarField> {
        let (d1, d2) = self.derivatives(f);
        let out: Vec<f64> = (0..self.grid.size)
            .map(|i| g(&self.local(self.grid.x(i)), Jet { d1: d1[i], d2: d2[i] }))
            .collect();
        ScalarField::new(&self.grid, out).map_err(|_| LabError::NonFinite("differential operator"))
    }
}

pub fn build_model(desc: &ModelDescriptor) -> Result<ManifoldModel> {
    let [a, b] = desc.domain;
    if desc.n == 0 {
        return Err(LabError::Params("n must be positive".into()));
    }
    let grid = Grid::new(a, b, desc.grid_size, desc.periodic)?;
    let bad = || LabError::Domain { kind: desc.kind.name(), a, b };
    match desc.kind {
        ModelKind::SphereRadial => {
            if a < POLE_MARGIN || b > std::f64::consts::PI - POLE_MARGIN || desc.periodic {
                return Err(bad());
            }
        }
        ModelKind::HyperbolicRadial => {
            if a < POLE_MARGIN || desc.periodic {
                return Err(bad());
            }
        }
        ModelKind::Line | ModelKind::WeightedLine => {}
    }
    let pot = match (&desc.kind, &desc.potential) {
        (ModelKind::WeightedLine, Some(spec)) => potential_from_spec(spec, &grid)?,
        (ModelKind::WeightedLine, None) => {
            return Err(LabError::Params("weighted_line needs a potential".into()))
        }
        (_, Some(_)) => {
            return Err(LabError::Params(format!("{} carries no potential", desc.kind.name())))
        }
        (_, None) => Potential::Zero,
    };
    let mut model = ManifoldModel {
        kind: desc.kind,
        n: desc.n,
        grid,
        volume_density: ScalarField(Vec::new()),
        potential: ScalarField(Vec::new()),
        pot,
    };
    let omega: Vec<f64> = grid.nodes().iter().map(|&x| model.omega(x)).collect();
    if omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(bad());
    }
    let v: Vec<f64> = grid.nodes().iter().map(|&x| model.pot.eval(x).0).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(LabError::NonFinite("potential samples"));
    }
    model.volume_density = ScalarField(omega);
    model.potential = ScalarField(v);
    Ok(model)
}

fn potential_from_spec(spec: &PotentialSpec, grid: &Grid) -> Result<Potential> {
    Ok(match spec {
        PotentialSpec::Quadratic { k, center } => Potential::Quadratic { k: *k, center: *center },
        PotentialSpec::Quartic { a } => Potential::Quartic { a: *a },
        PotentialSpec::Cosine { amplitude, frequency } => {
            Potential::Cosine { amp: *amplitude, freq: *frequency }
        }
        PotentialSpec::Table { values } => {
            let f = ScalarField::new(grid, values.clone())
                .map_err(|_| LabError::NonFinite("potential samples"))?;
            let h = grid.h();
            let dv = numerics::d1(f.values(), h);
            let d2v = numerics::d2(f.values(), h);
            Potential::Table { a: grid.a, h, v: values.clone(), dv, d2v }
        }
    })
}

/// Dimension parameters of a Bakry–Émery run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BakryEmeryParams {
    pub m: Dim,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(rename = "N", default = "two_dim")]
    pub n_sturm: Dim,
}

fn two() -> f64 {
    2.0
}

fn two_dim() -> Dim {
    Dim(2.0)
}

impl BakryEmeryParams {
    pub fn new(m: f64, k: f64, p: f64, n_sturm: f64) -> Self {
        BakryEmeryParams { m: Dim(m), k, p, n_sturm: Dim(n_sturm) }
    }

    pub fn validate(&self, model: &ManifoldModel) -> Result<()> {
        let n = model.dim();
        if !(self.m.0 >= n) {
            return Err(LabError::Params(format!("m = {} < n = {n}", self.m)));
        }
        if self.m.0 == n && model.is_weighted() {
            return Err(LabError::Params("m = n requires a constant potential".into()));
        }
        if !(self.n_sturm.0 >= 1.0) {
            return Err(LabError::Params(format!("N = {} < 1", self.n_sturm)));
        }
        if !self.k.is_finite() || !self.p.is_finite() {
            return Err(LabError::NonFinite("parameters"));
        }
        Ok(())
    }

    pub fn renyi_admissible(&self) -> bool {
        self.p >= 1.0 - self.m.recip()
    }
}

pub fn curvature_profile(
    model: &ManifoldModel,
    params: &BakryEmeryParams,
) -> Result<(ScalarField, ScalarField)> {
    if params.m.0 < model.dim() || (params.m.0 == model.dim() && model.is_weighted()) {
        return Err(LabError::Params("m = n with non-constant potential".into()));
    }
    let xs = model.grid.nodes();
    let ric = xs.iter().map(|&x| model.local(x).ric).collect();
    let ric_mn = xs.iter().map(|&x| model.local(x).ric_mn(params.m)).collect();
    Ok((ScalarField(ric), ScalarField(ric_mn)))
}

pub fn apply_witten_laplacian(model: &ManifoldModel, f: &ScalarField) -> Result<ScalarField> {
    model.pointwise(f, |g, j| g.witten(j))
}

pub fn gamma2_field(
    model: &ManifoldModel,
    phi: &ScalarField,
    _params: &BakryEmeryParams,
) -> Result<ScalarField> {
    model.pointwise(phi, |g, j| g.gamma2(j))
}

/// `½ L|∇φ|² − ⟨∇φ, ∇Lφ⟩` by direct differencing.
pub fn gamma2_direct(model: &ManifoldModel, phi: &ScalarField) -> Result<ScalarField> {
    let (d1, _) = model.derivatives(phi);
    let sq = ScalarField::new(&model.grid, d1.iter().map(|v| v * v).collect())?;
    let lsq = apply_witten_laplacian(model, &sq)?;
    let lphi = apply_witten_laplacian(model, phi)?;
    let (dl, _) = model.derivatives(&lphi);
    let out = (0..model.grid.size).map(|i| 0.5 * lsq.values()[i] - d1[i] * dl[i]).collect();
    ScalarField::new(&model.grid, out)
}

/// Fields of the shifted-Hessian decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianDecomposition {
    pub shifted: ScalarField,
    pub laplacian: ScalarField,
    pub witten: ScalarField,
    pub drift: ScalarField,
    pub traceless: ScalarField,
    pub cross: ScalarField,
    pub residual: ScalarField,
}

pub fn hessian_decomposition(
    model: &ManifoldModel,
    phi: &ScalarField,
    t: f64,
    params: &BakryEmeryParams,
) -> Result<HessianDecomposition> {
    if !(t > 0.0) {
        return Err(LabError::Precondition(format!("t = {t} must be positive")));
    }
    let (d1, d2) = model.derivatives(phi);
    let terms: Vec<HessianTerms> = (0..model.grid.size)
        .map(|i| model.local(model.grid.x(i)).hessian_terms(Jet { d1: d1[i], d2: d2[i] }, t, params.m))
        .collect();
    let field = |f: fn(&HessianTerms) -> f64| {
        ScalarField::new(&model.grid, terms.iter().map(f).collect())
    };
    Ok(HessianDecomposition {
        shifted: field(|h| h.shifted)?,
        laplacian: field(|h| h.laplacian)?,
        witten: field(|h| h.witten)?,
        drift: field(|h| h.drift)?,
        traceless: field(|h| h.traceless)?,
        cross: field(|h| h.cross)?,
        residual: field(|h| h.residual)?,
    })
}
