//! Named density and phase presets.
//!
//! Density presets describe the law of the coordinate: the returned field is
//! the density with respect to μ whose pushforward to the coordinate has the
//! given shape.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{ManifoldModel, ScalarField};
use crate::numerics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DensitySpec {
    Gaussian {
        #[serde(default)]
        mean: f64,
        std: f64,
    },
    Uniform { a: f64, b: f64 },
    /// `(1 − s²)^power` on `|s| < 1`, `s = (x − center)/width`.
    Bump {
        center: f64,
        width: f64,
        #[serde(default = "four")]
        power: f64,
    },
    Mixture { components: Vec<Component> },
    /// Density w.r.t. μ on the model grid (normalized on load).
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub density: DensitySpec,
}

fn four() -> f64 {
    4.0
}

impl DensitySpec {
    /// Unnormalized coordinate law at `x`.
    fn shape(&self, x: f64, h: f64) -> Result<f64> {
        Ok(match self {
            DensitySpec::Gaussian { mean, std } => {
                if !(*std > 0.0) {
                    return Err(LabError::Params(format!("gaussian std {std}")));
                }
                let z = (x - mean) / std;
                (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
            DensitySpec::Uniform { a, b } => {
                if !(b > a) {
                    return Err(LabError::Params(format!("uniform [{a}, {b}]")));
                }
                let tol = 1e-9 * h;
                if x >= a - tol && x <= b + tol {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            DensitySpec::Bump { center, width, power } => {
                if !(*width > 0.0) {
                    return Err(LabError::Params(format!("bump width {width}")));
                }
                let s = (x - center) / width;
                if s.abs() < 1.0 {
                    (1.0 - s * s).powf(*power)
                } else {
                    0.0
                }
            }
            DensitySpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(LabError::Params("empty mixture".into()));
                }
                let mut acc = 0.0;
                for c in components {
                    if !(c.weight >= 0.0) {
                        return Err(LabError::Params("negative mixture weight".into()));
                    }
                    if matches!(c.density, DensitySpec::Table { .. }) {
                        return Err(LabError::Params("tables cannot be mixed".into()));
                    }
                    acc += c.weight * c.density.shape(x, h)?;
                }
                acc
            }
            DensitySpec::Table { .. } => unreachable!(),
        })
    }
}

/// Support-restricted trapezoid μ-weights: cells count only when the density
/// is positive at both ends.
pub fn support_weights(model: &ManifoldModel, rho: &[f64]) -> Vec<f64> {
    let g = &model.grid;
    let mut w = numerics::trapezoid_weights(g.size, g.h(), |i| rho[i] > 0.0);
    for (i, wi) in w.iter_mut().enumerate() {
        *wi *= model.mu_density(g.x(i));
    }
    w
}

/// `∫ρ dμ` under [`support_weights`].
pub fn mass(model: &ManifoldModel, rho: &[f64]) -> f64 {
    support_weights(model, rho).iter().zip(rho).map(|(w, r)| w * r).sum()
}

/// Sample a preset as a μ-normalized density on the model grid.
pub fn sample_density(model: &ManifoldModel, spec: &DensitySpec) -> Result<ScalarField> {
    let g = &model.grid;
    let raw: Vec<f64> = match spec {
        DensitySpec::Table { values } => values.clone(),
        _ => {
            let h = g.h();
            let mut v = Vec::with_capacity(g.size);
            for i in 0..g.size {
                let x = g.x(i);
                v.push(spec.shape(x, h)? / model.mu_density(x));
            }
            v
        }
    };
    if raw.len() != g.size {
        return Err(LabError::Grid("density table length".into()));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(LabError::NonFinite("density samples"));
    }
    let total = mass(model, &raw);
    if !(total > 0.0) {
        return Err(LabError::Mass { mass: total });
    }
    ScalarField::new(g, raw.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum PhaseSpec {
    Zero,
    /// `a (x − center)² / 2`
    Quadratic {
        a: f64,
        #[serde(default)]
        center: f64,
    },
    /// `c x`
    Linear { c: f64 },
    Table { values: Vec<f64> },
}

pub fn sample_phase(model: &ManifoldModel, spec: &PhaseSpec) -> Result<ScalarField> {
    let g = &model.grid;
    match spec {
        PhaseSpec::Zero => ScalarField::from_fn(g, |_| 0.0),
        PhaseSpec::Quadratic { a, center } => ScalarField::from_fn(g, |x| 0.5 * a * (x - center).powi(2)),
        PhaseSpec::Linear { c } => ScalarField::from_fn(g, |x| c * x),
        PhaseSpec::Table { values } => ScalarField::new(g, values.clone()),
    }
}
