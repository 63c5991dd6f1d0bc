use std::f64::consts::PI;
use std::sync::Arc;

use crate::autodiff::{
    Jet, JetBatch, JetLayout, JetTable, MultiIndex, NetworkArith, NetworkSpec, ParameterVector,
    PlainNet,
};
use crate::error::{Error, Result};
use crate::quadrature::AngularQuadrature;

use super::{HardConstraint, ProblemConfig};

/// A point `(t, r, Ω, z)` of phase space. Unused components are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub r: [f64; 2],
    pub omega: [f64; 2],
    pub z: Vec<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, r: &[f64], omega: [f64; 2], z: Vec<f64>) -> Self {
        let mut rr = [0.0; 2];
        rr[..r.len()].copy_from_slice(r);
        PhasePoint {
            t,
            r: rr,
            omega,
            z,
        }
    }
}

fn relu_sq(v: f64) -> f64 {
    if v > 0.0 {
        v * v
    } else {
        0.0
    }
}

impl ProblemConfig {
    /// Fills the raw network inputs of `point` into slot `p` of `batch`.
    fn write_inputs(&self, layout: &Arc<JetLayout>, batch: &mut JetBatch, p: usize, pt: &PhasePoint) {
        batch.set_coordinate(p, 0, pt.t, Some(0));
        let first_z = match (self.dimension, self.hard_constraint) {
            (1, HardConstraint::PeriodicLift) => {
                let [a, b] = self.domain[0];
                // Reduce to one period first so that x = a and x = b give
                // bitwise identical features.
                let turns = ((pt.r[0] - a) / (b - a)).floor();
                let angle = Jet::variable(layout, 1, pt.r[0])
                    .offset(-a)
                    .scale(2.0 * PI / (b - a))
                    .offset(-2.0 * PI * turns);
                batch.set_feature(p, 1, angle.sin().values());
                batch.set_feature(p, 2, angle.cos().values());
                batch.set_coordinate(p, 3, pt.omega[0], None);
                4
            }
            (1, _) => {
                batch.set_coordinate(p, 1, pt.r[0], Some(1));
                batch.set_coordinate(p, 2, pt.omega[0], None);
                3
            }
            _ => {
                batch.set_coordinate(p, 1, pt.r[0], Some(1));
                batch.set_coordinate(p, 2, pt.r[1], Some(2));
                batch.set_coordinate(p, 3, pt.omega[0], None);
                batch.set_coordinate(p, 4, pt.omega[1], None);
                5
            }
        };
        for (i, &zi) in pt.z.iter().enumerate() {
            batch.set_coordinate(p, first_z + i, zi, None);
        }
    }

    /// Multiplier jet of a product-type hard constraint at `pt`.
    fn multiplier(&self, layout: &Arc<JetLayout>, pt: &PhasePoint) -> Option<Jet> {
        let t = Jet::variable(layout, 0, pt.t).offset(-self.time[0]);
        match self.hard_constraint {
            HardConstraint::UqTxx => {
                let [a, b] = self.domain[0];
                let x = Jet::variable(layout, 1, pt.r[0]);
                Some(t.mul(&x.offset(-a)).mul(&x.scale(-1.0).offset(b)))
            }
            HardConstraint::Box2dReluProduct => {
                let [xa, xb] = self.domain[0];
                let [ya, yb] = self.domain[1];
                let (xi, eta) = (pt.omega[0], pt.omega[1]);
                let x = Jet::variable(layout, 1, pt.r[0]);
                let y = Jet::variable(layout, 2, pt.r[1]);
                Some(
                    t.mul(&x.offset(-xa + relu_sq(-xi)))
                        .mul(&x.scale(-1.0).offset(xb + relu_sq(xi)))
                        .mul(&y.offset(-ya + relu_sq(-eta)))
                        .mul(&y.scale(-1.0).offset(yb + relu_sq(eta))),
                )
            }
            HardConstraint::None | HardConstraint::PeriodicLift => None,
        }
    }
}

/// Network inputs (and hard-constraint multipliers) for a set of phase
/// points, ready for [`NetworkArith::network`].
pub fn build_batch(
    problem: &ProblemConfig,
    layout: &Arc<JetLayout>,
    points: &[PhasePoint],
) -> Result<(JetBatch, Option<Vec<f64>>)> {
    if layout.nvars() != problem.jet_vars() {
        return Err(Error::DimensionMismatch {
            expected: problem.jet_vars(),
            got: layout.nvars(),
        });
    }
    let mut batch = JetBatch::new(layout.clone(), problem.input_dim(), points.len());
    let product = !matches!(
        problem.hard_constraint,
        HardConstraint::None | HardConstraint::PeriodicLift
    );
    let mut mult = if product {
        Vec::with_capacity(points.len() * layout.len())
    } else {
        Vec::new()
    };
    for (p, pt) in points.iter().enumerate() {
        if pt.z.len() != problem.uq_dim {
            return Err(Error::DimensionMismatch {
                expected: problem.uq_dim,
                got: pt.z.len(),
            });
        }
        problem.write_inputs(layout, &mut batch, p, pt);
        if let Some(m) = problem.multiplier(layout, pt) {
            mult.extend_from_slice(m.values());
        }
    }
    Ok((batch, product.then_some(mult)))
}

/// The network wrapped by the problem's hard constraint: the trial field
/// `f_θ(t, r, Ω, z)`.
#[derive(Clone, Copy, Debug)]
pub struct ConstrainedField<'a> {
    pub problem: &'a ProblemConfig,
    pub spec: &'a NetworkSpec,
    pub theta: &'a ParameterVector,
}

pub fn constrained_network<'a>(
    problem: &'a ProblemConfig,
    theta: &'a ParameterVector,
    spec: &'a NetworkSpec,
) -> Result<ConstrainedField<'a>> {
    problem.validate()?;
    spec.validate()?;
    if spec.input_dim() != problem.input_dim() {
        return Err(Error::InvalidSpec(format!(
            "problem `{}` needs input width {}, network has {}",
            problem.name,
            problem.input_dim(),
            spec.input_dim()
        )));
    }
    if !theta.matches(spec) {
        return Err(Error::InvalidSpec("parameter vector does not match the network".into()));
    }
    Ok(ConstrainedField {
        problem,
        spec,
        theta,
    })
}

impl ConstrainedField<'_> {
    /// Exact space-time derivatives of the wrapped field at one point.
    /// Multi-indices are over `(t, x[, y])`.
    pub fn jet(&self, point: &PhasePoint, requested: &[MultiIndex]) -> Result<JetTable> {
        let layout = JetLayout::new(self.problem.jet_vars(), requested.iter().cloned())?;
        let (batch, mult) = build_batch(self.problem, &layout, std::slice::from_ref(point))?;
        let values = PlainNet {
            spec: self.spec,
            theta: self.theta,
        }
        .network(&batch, mult)?;
        let mut coords = vec![point.t];
        coords.extend_from_slice(&point.r[..self.problem.dimension]);
        Ok(JetTable::new(layout, values, coords))
    }

    /// Field values at many points.
    pub fn values(&self, points: &[PhasePoint]) -> Result<Vec<f64>> {
        let layout = JetLayout::new(self.problem.jet_vars(), [])?;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(4096) {
            let (batch, mult) = build_batch(self.problem, &layout, chunk)?;
            out.extend(
                PlainNet {
                    spec: self.spec,
                    theta: self.theta,
                }
                .network(&batch, mult)?,
            );
        }
        Ok(out)
    }

    /// `ρ_θ = ⟨f_θ⟩` at space-time points `(t, r, z)`.
    pub fn density(&self, quad: &AngularQuadrature, points: &[(f64, [f64; 2], Vec<f64>)]) -> Result<Vec<f64>> {
        let n = quad.len();
        let mut out = Vec::with_capacity(points.len());
        let per_chunk = (4096 / n).max(1);
        for chunk in points.chunks(per_chunk) {
            let phase: Vec<PhasePoint> = chunk
                .iter()
                .flat_map(|(t, r, z)| {
                    quad.nodes().iter().map(move |&om| PhasePoint {
                        t: *t,
                        r: *r,
                        omega: om,
                        z: z.clone(),
                    })
                })
                .collect();
            let f = self.values(&phase)?;
            for fp in f.chunks(n) {
                out.push(fp.iter().zip(quad.weights()).map(|(a, w)| a * w).sum());
            }
        }
        Ok(out)
    }
}
