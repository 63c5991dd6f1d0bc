use std::fmt;
use std::str::FromStr;

use crate::autodiff::OutputActivation;
use crate::error::Error;

use super::{
    BoundaryCondition, CoefficientField, HardConstraint, InitialData, ProblemConfig, SourceTerm,
};

/// Identifiers of the built-in problem instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinId {
    /// Kinetic regime, isotropic inflow.
    Ex411,
    /// Initial layer, periodic, soft periodicity penalty.
    Ex412,
    /// Same as `Ex412` with the periodic feature lift.
    Ex412Hard,
    /// Diffusion regime, ε = 1e-8, constant σ.
    Ex413,
    /// Diffusion regime, ε = 1e-4, σ = 1 + (10x)².
    Ex414,
    /// Intermediate regime, ε = 1e-2, source G = 1.
    Ex415,
    Ex42Kinetic,
    Ex42Diffusion,
    UqProblem1,
    UqProblem2,
}

impl BuiltinId {
    pub const ALL: [BuiltinId; 10] = [
        BuiltinId::Ex411,
        BuiltinId::Ex412,
        BuiltinId::Ex412Hard,
        BuiltinId::Ex413,
        BuiltinId::Ex414,
        BuiltinId::Ex415,
        BuiltinId::Ex42Kinetic,
        BuiltinId::Ex42Diffusion,
        BuiltinId::UqProblem1,
        BuiltinId::UqProblem2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinId::Ex411 => "ex_4_1_1",
            BuiltinId::Ex412 => "ex_4_1_2",
            BuiltinId::Ex412Hard => "ex_4_1_2_hard",
            BuiltinId::Ex413 => "ex_4_1_3",
            BuiltinId::Ex414 => "ex_4_1_4",
            BuiltinId::Ex415 => "ex_4_1_5",
            BuiltinId::Ex42Kinetic => "ex_4_2_kinetic",
            BuiltinId::Ex42Diffusion => "ex_4_2_diffusion",
            BuiltinId::UqProblem1 => "uq_problem_1",
            BuiltinId::UqProblem2 => "uq_problem_2",
        }
    }
}

impl fmt::Display for BuiltinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        BuiltinId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = BuiltinId::ALL.iter().map(|id| id.name()).collect();
                Error::Config(format!(
                    "unknown example id `{s}`; valid ids: {}",
                    names.join(", ")
                ))
            })
    }
}

fn unit_interval_1d(name: &str, epsilon: f64, end: f64) -> ProblemConfig {
    ProblemConfig {
        name: name.to_string(),
        dimension: 1,
        epsilon,
        domain: vec![[0.0, 1.0]],
        time: [0.0, end],
        sigma: CoefficientField::constant(1.0),
        alpha: CoefficientField::constant(0.0),
        source: SourceTerm::constant(0.0),
        boundary: BoundaryCondition::inflow_1d(0.0, 0.0),
        initial: InitialData::Constant { value: 0.0 },
        uq_dim: 0,
        hard_constraint: HardConstraint::None,
        output_activation: None,
    }
}

/// The problem definition of a built-in example.
pub fn builtin_problem(id: BuiltinId) -> ProblemConfig {
    let name = id.name();
    match id {
        BuiltinId::Ex411 => ProblemConfig {
            boundary: BoundaryCondition::inflow_1d(0.0, 1.0),
            ..unit_interval_1d(name, 1.0, 4.0)
        },
        BuiltinId::Ex412 | BuiltinId::Ex412Hard => ProblemConfig {
            boundary: BoundaryCondition::Periodic,
            initial: InitialData::CosineGaussian,
            hard_constraint: if id == BuiltinId::Ex412Hard {
                HardConstraint::PeriodicLift
            } else {
                HardConstraint::None
            },
            ..unit_interval_1d(name, 1.0, 1.0)
        },
        BuiltinId::Ex413 => ProblemConfig {
            boundary: BoundaryCondition::inflow_1d(1.0, 0.0),
            ..unit_interval_1d(name, 1e-8, 2.0)
        },
        BuiltinId::Ex414 => ProblemConfig {
            boundary: BoundaryCondition::inflow_1d(1.0, 0.0),
            sigma: CoefficientField::Polynomial1p10xSq,
            ..unit_interval_1d(name, 1e-4, 2.0)
        },
        BuiltinId::Ex415 => ProblemConfig {
            boundary: BoundaryCondition::inflow_1d(1.0, 0.0),
            sigma: CoefficientField::Polynomial1p10xSq,
            source: SourceTerm::constant(1.0),
            output_activation: Some(OutputActivation::Identity),
            ..unit_interval_1d(name, 1e-2, 2.0)
        },
        BuiltinId::Ex42Kinetic | BuiltinId::Ex42Diffusion => ProblemConfig {
            name: name.to_string(),
            dimension: 2,
            epsilon: if id == BuiltinId::Ex42Kinetic { 1.0 } else { 1e-8 },
            domain: vec![[0.0, 1.0], [0.0, 1.0]],
            time: [0.0, 1.0],
            sigma: CoefficientField::constant(1.0),
            alpha: CoefficientField::constant(0.0),
            source: SourceTerm::constant(1.0),
            boundary: BoundaryCondition::Inflow {
                x_low: 0.0,
                x_high: 0.0,
                y_low: 0.0,
                y_high: 0.0,
            },
            initial: InitialData::Constant { value: 0.0 },
            uq_dim: 0,
            hard_constraint: HardConstraint::Box2dReluProduct,
            output_activation: None,
        },
        BuiltinId::UqProblem1 => ProblemConfig {
            sigma: CoefficientField::CosineRandom,
            source: SourceTerm::ManufacturedUq,
            uq_dim: 10,
            hard_constraint: HardConstraint::UqTxx,
            ..unit_interval_1d(name, 1.0, 1.0)
        },
        BuiltinId::UqProblem2 => ProblemConfig {
            sigma: CoefficientField::SineProductRandom,
            boundary: BoundaryCondition::inflow_1d(1.0, 0.0),
            uq_dim: 20,
            ..unit_interval_1d(name, 1e-5, 1.0)
        },
    }
}
