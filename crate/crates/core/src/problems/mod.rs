//! Problem definitions for the scaled linear transfer equation
//!
//! ```text
//! ε² ∂t f + ε Ω·∇f = σ(⟨f⟩ − f) − ε² α f + ε² G
//! ```
//!
//! on a box `D` over a time interval, with inflow or periodic boundary data
//! and optional random inputs `z ∈ [−1,1]^d`.

mod builtin;
mod field;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet, JetLayout, OutputActivation};
use crate::error::{Error, Result};

pub use builtin::{builtin_problem, BuiltinId};
pub use field::{build_batch, constrained_network, ConstrainedField, PhasePoint};

/// Spatially varying (and possibly random) coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientField {
    Constant { value: f64 },
    /// `1 + (10x)²`
    #[serde(rename = "polynomial_1p10x_sq")]
    Polynomial1p10xSq,
    /// `1 + 0.1 Σᵢ cos(π zᵢ)`
    CosineRandom,
    /// `1 + 0.1 Πᵢ sin(π zᵢ)`
    SineProductRandom,
    /// `Σₖ cₖ xᵏ`, for user-defined profiles in x.
    Polynomial { coefficients: Vec<f64> },
}

impl CoefficientField {
    pub fn constant(value: f64) -> Self {
        CoefficientField::Constant { value }
    }

    pub fn value(&self, r: &[f64], z: &[f64]) -> f64 {
        match self {
            CoefficientField::Constant { value } => *value,
            CoefficientField::Polynomial1p10xSq => 1.0 + 100.0 * r[0] * r[0],
            CoefficientField::CosineRandom => {
                1.0 + 0.1 * z.iter().map(|zi| (PI * zi).cos()).sum::<f64>()
            }
            CoefficientField::SineProductRandom => {
                1.0 + 0.1 * z.iter().map(|zi| (PI * zi).sin()).product::<f64>()
            }
            CoefficientField::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * r[0] + c)
            }
        }
    }

    /// Jet in the space-time variables `(t, x[, y])` of `layout`.
    pub fn jet(&self, layout: &Arc<JetLayout>, r: &[f64], z: &[f64]) -> Jet {
        match self {
            CoefficientField::Polynomial1p10xSq => {
                let x = Jet::variable(layout, 1, r[0]);
                x.mul(&x).scale(100.0).offset(1.0)
            }
            CoefficientField::Polynomial { coefficients } => {
                let x = Jet::variable(layout, 1, r[0]);
                coefficients
                    .iter()
                    .rev()
                    .fold(Jet::constant(layout, 0.0), |acc, &c| acc.mul(&x).offset(c))
            }
            _ => Jet::constant(layout, self.value(r, z)),
        }
    }

    /// Whether the field depends on the random inputs.
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            CoefficientField::CosineRandom | CoefficientField::SineProductRandom
        )
    }
}

/// Source term `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceTerm {
    Constant { value: f64 },
    /// Source for which `f = t x(1−x)(μ + 11 + Σz)/22` is exact, with `α = 0`
    /// and the problem's σ.
    ManufacturedUq,
}

impl SourceTerm {
    pub fn constant(value: f64) -> Self {
        SourceTerm::Constant { value }
    }

    /// Jet of `G` in `(t, x[, y])` at a phase point; `sigma` is the jet of σ
    /// there.
    pub fn jet(
        &self,
        layout: &Arc<JetLayout>,
        epsilon: f64,
        sigma: &Jet,
        t: f64,
        r: &[f64],
        omega: [f64; 2],
        z: &[f64],
    ) -> Jet {
        match self {
            SourceTerm::Constant { value } => Jet::constant(layout, *value),
            SourceTerm::ManufacturedUq => {
                let mu = omega[0];
                let c = mu + 11.0 + z.iter().sum::<f64>();
                let tj = Jet::variable(layout, 0, t);
                let x = Jet::variable(layout, 1, r[0]);
                let q = x.mul(&x.scale(-1.0).offset(1.0));
                let dq = x.scale(-2.0).offset(1.0);
                q.scale(c / 22.0)
                    .add(&tj.mul(&dq).scale(mu * c / (22.0 * epsilon)))
                    .add(&tj.mul(&q).mul(sigma).scale(mu / (22.0 * epsilon * epsilon)))
            }
        }
    }

    pub fn value(&self, epsilon: f64, sigma: f64, t: f64, r: &[f64], omega: [f64; 2], z: &[f64]) -> f64 {
        match self {
            SourceTerm::Constant { value } => *value,
            SourceTerm::ManufacturedUq => {
                let mu = omega[0];
                let x = r[0];
                let c = mu + 11.0 + z.iter().sum::<f64>();
                let q = x * (1.0 - x);
                q * c / 22.0
                    + mu * t * (1.0 - 2.0 * x) * c / (22.0 * epsilon)
                    + sigma * t * q * mu / (22.0 * epsilon * epsilon)
            }
        }
    }
}

/// Initial intensity `f₀(r, Ω, z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Constant { value: f64 },
    /// `(1 + cos 4πx) e^(−μ²/2) / √(2π)`
    CosineGaussian,
}

impl InitialData {
    pub fn value(&self, r: &[f64], omega: [f64; 2], _z: &[f64]) -> f64 {
        match self {
            InitialData::Constant { value } => *value,
            InitialData::CosineGaussian => {
                let mu = omega[0];
                (1.0 + (4.0 * PI * r[0]).cos()) / (2.0 * PI).sqrt() * (-0.5 * mu * mu).exp()
            }
        }
    }
}

/// Boundary conditions. Inflow data is isotropic and constant per face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    Inflow {
        #[serde(default)]
        x_low: f64,
        #[serde(default)]
        x_high: f64,
        #[serde(default)]
        y_low: f64,
        #[serde(default)]
        y_high: f64,
    },
    Periodic,
}

impl BoundaryCondition {
    pub fn inflow_1d(left: f64, right: f64) -> Self {
        BoundaryCondition::Inflow {
            x_low: left,
            x_high: right,
            y_low: 0.0,
            y_high: 0.0,
        }
    }

    /// Incoming intensity on `face`, if the condition is of inflow type.
    pub fn inflow_value(&self, face: Face) -> Option<f64> {
        match *self {
            BoundaryCondition::Inflow {
                x_low,
                x_high,
                y_low,
                y_high,
            } => Some(match face {
                Face::XLow => x_low,
                Face::XHigh => x_high,
                Face::YLow => y_low,
                Face::YHigh => y_high,
            }),
            BoundaryCondition::Periodic => None,
        }
    }
}

/// Face of the box domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Face {
    XLow,
    XHigh,
    YLow,
    YHigh,
}

impl Face {
    pub fn all(dimension: usize) -> &'static [Face] {
        if dimension == 1 {
            &[Face::XLow, Face::XHigh]
        } else {
            &[Face::XLow, Face::XHigh, Face::YLow, Face::YHigh]
        }
    }

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Face::XLow => [-1.0, 0.0],
            Face::XHigh => [1.0, 0.0],
            Face::YLow => [0.0, -1.0],
            Face::YHigh => [0.0, 1.0],
        }
    }

    /// Whether direction `omega` enters the domain through this face.
    pub fn is_inflow(self, omega: [f64; 2]) -> bool {
        let n = self.normal();
        omega[0] * n[0] + omega[1] * n[1] < 0.0
    }

    /// Spatial axis the face is normal to.
    pub fn axis(self) -> usize {
        match self {
            Face::XLow | Face::XHigh => 0,
            Face::YLow | Face::YHigh => 1,
        }
    }

    pub fn is_low(self) -> bool {
        matches!(self, Face::XLow | Face::YLow)
    }
}

/// Structural enforcement of boundary/initial data in the network output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardConstraint {
    #[default]
    None,
    /// Replaces x by `(sin 2πx̂, cos 2πx̂)`, x̂ the position scaled to the
    /// period, so the output is periodic in x.
    PeriodicLift,
    /// `t (x + Relu(−ξ)²)(1 − x + Relu(ξ)²)(y + Relu(−η)²)(1 − y + Relu(η)²) · NN`
    /// on the unit square (shifted/scaled to the actual box).
    #[serde(rename = "box2d_relu_product")]
    Box2dReluProduct,
    /// `t x (1 − x) · NN` (shifted to the actual interval).
    UqTxx,
}

/// One transfer problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: String,
    pub dimension: usize,
    pub epsilon: f64,
    /// `[lo, hi]` per spatial axis.
    pub domain: Vec<[f64; 2]>,
    pub time: [f64; 2],
    pub sigma: CoefficientField,
    pub alpha: CoefficientField,
    pub source: SourceTerm,
    pub boundary: BoundaryCondition,
    pub initial: InitialData,
    #[serde(default)]
    pub uq_dim: usize,
    #[serde(default)]
    pub hard_constraint: HardConstraint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_activation: Option<OutputActivation>,
}

/// Coefficient jets at one phase point.
#[derive(Clone, Debug)]
pub struct CoefficientJets {
    pub sigma: Jet,
    pub inv_sigma: Jet,
    pub alpha: Jet,
    pub source: Jet,
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Problem(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(1..=2).contains(&self.dimension) {
            return bad(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if self.domain.len() != self.dimension {
            return bad(format!(
                "domain has {} axes but dimension is {}",
                self.domain.len(),
                self.dimension
            ));
        }
        if self.domain.iter().any(|[a, b]| !(a < b)) || !(self.time[0] < self.time[1]) {
            return bad("domain and time interval must be nondegenerate".into());
        }
        let sobol_room = 32 - (1 + self.dimension);
        if self.uq_dim > sobol_room {
            return bad(format!(
                "at most {sobol_room} random inputs are supported in {}D",
                self.dimension
            ));
        }
        if (self.sigma.is_random() || self.alpha.is_random()) && self.uq_dim == 0 {
            return bad("random coefficient requires uq_dim >= 1".into());
        }
        if self.dimension == 2 && matches!(self.boundary, BoundaryCondition::Periodic) {
            return bad("periodic boundary conditions are only supported in 1D".into());
        }
        if matches!(self.source, SourceTerm::ManufacturedUq) && self.dimension != 1 {
            return bad("the manufactured source is one-dimensional".into());
        }
        match self.hard_constraint {
            HardConstraint::PeriodicLift
                if self.dimension != 1 || !matches!(self.boundary, BoundaryCondition::Periodic) =>
            {
                return bad("periodic_lift needs a 1D periodic problem".into())
            }
            HardConstraint::Box2dReluProduct if self.dimension != 2 => {
                return bad("box2d_relu_product needs a 2D problem".into())
            }
            HardConstraint::UqTxx if self.dimension != 1 => {
                return bad("uq_txx needs a 1D problem".into())
            }
            _ => {}
        }
        self.check_sigma_positive()
    }

    /// Samples σ on a grid (and a few points of the open random cube) and
    /// rejects non-positive values. The random fields may vanish on the
    /// closed cube's corners, which have probability zero.
    fn check_sigma_positive(&self) -> Result<()> {
        let zs: Vec<Vec<f64>> = if self.uq_dim == 0 {
            vec![vec![]]
        } else {
            [-0.95, -0.5, 0.0, 0.5, 0.95]
                .iter()
                .map(|&v| vec![v; self.uq_dim])
                .collect()
        };
        let n = 33;
        for z in &zs {
            for i in 0..=n {
                for j in 0..=if self.dimension == 2 { n } else { 0 } {
                    let mut r = vec![self.domain[0][0] + (self.domain[0][1] - self.domain[0][0]) * i as f64 / n as f64];
                    if self.dimension == 2 {
                        r.push(self.domain[1][0] + (self.domain[1][1] - self.domain[1][0]) * j as f64 / n as f64);
                    }
                    let s = self.sigma.value(&r, z);
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::Problem(format!("sigma = {s} at r = {r:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of space-time jet variables: `t` plus the spatial axes.
    pub fn jet_vars(&self) -> usize {
        1 + self.dimension
    }

    /// Input width of the raw network.
    pub fn input_dim(&self) -> usize {
        let base = match (self.dimension, self.hard_constraint) {
            (1, HardConstraint::PeriodicLift) => 4,
            (1, _) => 3,
            _ => 5,
        };
        base + self.uq_dim
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation.unwrap_or_default()
    }

    /// `⟨Ω_x²⟩`: 1/3 in 1D, 1/2 in 2D.
    pub fn omega_second_moment(&self) -> f64 {
        if self.dimension == 1 {
            1.0 / 3.0
        } else {
            0.5
        }
    }

    /// Domain volume (length in 1D, area in 2D).
    pub fn volume(&self) -> f64 {
        self.domain.iter().map(|[a, b]| b - a).product()
    }

    pub fn sigma_at(&self, r: &[f64], z: &[f64]) -> f64 {
        self.sigma.value(r, z)
    }

    /// `ν = σ/ε² + α`.
    pub fn nu(&self, r: &[f64], z: &[f64]) -> f64 {
        self.sigma.value(r, z) / (self.epsilon * self.epsilon) + self.alpha.value(r, z)
    }
}

/// σ, 1/σ, α and G as jets in `(t, x[, y])` at a phase point.
pub fn evaluate_coefficients(
    problem: &ProblemConfig,
    layout: &Arc<JetLayout>,
    point: &PhasePoint,
) -> Result<CoefficientJets> {
    let r = &point.r[..problem.dimension];
    let sigma = problem.sigma.jet(layout, r, &point.z);
    if !(sigma.value() > 0.0) || !sigma.value().is_finite() {
        return Err(Error::Problem(format!(
            "sigma = {} at r = {r:?}",
            sigma.value()
        )));
    }
    let inv_sigma = sigma.recip();
    let alpha = problem.alpha.jet(layout, r, &point.z);
    let source = problem.source.jet(
        layout,
        problem.epsilon,
        &sigma,
        point.t,
        r,
        point.omega,
        &point.z,
    );
    Ok(CoefficientJets {
        sigma,
        inv_sigma,
        alpha,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::MultiIndex;

    #[test]
    fn inverse_sigma_derivative_of_quadratic_profile() {
        let p = builtin_problem(BuiltinId::Ex414);
        let layout = JetLayout::full(2, 2).unwrap();
        let pt = PhasePoint::new(0.3, &[0.1], [0.5, 0.0], vec![]);
        let c = evaluate_coefficients(&p, &layout, &pt).unwrap();
        assert!((c.sigma.value() - 2.0).abs() < 1e-15);
        let dx = c.inv_sigma.get(&MultiIndex::new(&[0, 1])).unwrap();
        assert!((dx + 5.0).abs() < 1e-13);
        let pt0 = PhasePoint::new(0.3, &[0.0], [0.5, 0.0], vec![]);
        let c0 = evaluate_coefficients(&p, &layout, &pt0).unwrap();
        assert_eq!(c0.inv_sigma.get(&MultiIndex::new(&[0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn constant_sigma_has_flat_inverse() {
        let p = builtin_problem(BuiltinId::Ex413);
        let layout = JetLayout::full(2, 3).unwrap();
        let c = evaluate_coefficients(&p, &layout, &PhasePoint::new(0.5, &[0.5], [1.0, 0.0], vec![])).unwrap();
        assert_eq!(c.inv_sigma.values()[0], 1.0);
        assert!(c.inv_sigma.values()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn faces_and_inflow_directions() {
        assert!(Face::XLow.is_inflow([0.3, 0.0]));
        assert!(!Face::XLow.is_inflow([-0.3, 0.0]));
        assert!(Face::XHigh.is_inflow([-0.3, 0.0]));
        assert!(Face::YHigh.is_inflow([0.0, -1.0]));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut p = builtin_problem(BuiltinId::Ex411);
        p.epsilon = 0.0;
        assert!(p.validate().is_err());
        let mut p = builtin_problem(BuiltinId::Ex411);
        p.hard_constraint = HardConstraint::Box2dReluProduct;
        assert!(p.validate().is_err());
        let mut p = builtin_problem(BuiltinId::Ex411);
        p.sigma = CoefficientField::Polynomial {
            coefficients: vec![0.5, -1.0],
        };
        assert!(p.validate().is_err());
        let mut p = builtin_problem(BuiltinId::UqProblem1);
        p.uq_dim = 0;
        assert!(p.validate().is_err());
    }
}
