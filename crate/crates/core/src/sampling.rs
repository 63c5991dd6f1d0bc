//! Collocation point sets drawn from Sobol sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{BoundaryCondition, Face, ProblemConfig};
use crate::quadrature::AngularQuadrature;
use crate::sobol::Sobol;

/// A space-time point with its random inputs. Directions are attached later:
/// every point is paired with all quadrature nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub r: [f64; 2],
    pub z: Vec<f64>,
}

/// A point on one face of the spatial boundary. For periodic problems the
/// face is always the low x face and the point stands for the matched pair
/// `(x_L, x_R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySample {
    pub face: Face,
    pub point: SamplePoint,
}

/// Sample counts `(N_int, N_sb, N_tb, N_c)`; `N_sb` is per face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub interior: usize,
    pub boundary_per_face: usize,
    pub initial: usize,
    #[serde(default)]
    pub conservation: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSets {
    pub interior: Vec<SamplePoint>,
    pub boundary: Vec<BoundarySample>,
    pub initial: Vec<SamplePoint>,
    /// Time samples (with random inputs) for the conservation residual; the
    /// spatial coordinate is unused.
    pub conservation: Vec<SamplePoint>,
}

fn scale(u: f64, [a, b]: [f64; 2]) -> f64 {
    a + (b - a) * u
}

fn random_inputs(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| 2.0 * v - 1.0).collect()
}

fn draw(dim: usize, count: usize, skip: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    crate::sobol::sobol_points(dim, count, skip)
}

/// Draws every point set for `problem`. `seed_offset` skips that many Sobol
/// points in each set, so different offsets give disjoint batches.
pub fn sample_domain(
    problem: &ProblemConfig,
    counts: SampleCounts,
    quad: &AngularQuadrature,
    seed_offset: u64,
) -> Result<SampleSets> {
    problem.validate()?;
    if quad.dim() != problem.dimension {
        return Err(Error::Quadrature(format!(
            "{}D quadrature for a {}D problem",
            quad.dim(),
            problem.dimension
        )));
    }
    let d = problem.dimension;
    let q = problem.uq_dim;
    // Validate the largest Sobol dimension up front for a clear error.
    Sobol::new(1 + d + q)?;

    let interior = draw(1 + d + q, counts.interior, seed_offset)?
        .into_iter()
        .map(|u| {
            let mut r = [0.0; 2];
            for k in 0..d {
                r[k] = scale(u[1 + k], problem.domain[k]);
            }
            SamplePoint {
                t: scale(u[0], problem.time),
                r,
                z: random_inputs(&u[1 + d..]),
            }
        })
        .collect();

    let faces: &[Face] = match problem.boundary {
        BoundaryCondition::Periodic => &[Face::XLow],
        BoundaryCondition::Inflow { .. } => Face::all(d),
    };
    let face_pts = draw(d + q, counts.boundary_per_face, seed_offset)?;
    let mut boundary = Vec::with_capacity(faces.len() * face_pts.len());
    for &face in faces {
        let axis = face.axis();
        for u in &face_pts {
            let mut r = [0.0; 2];
            let mut k = 1;
            for (ax, slot) in r.iter_mut().enumerate().take(d) {
                *slot = if ax == axis {
                    problem.domain[ax][if face.is_low() { 0 } else { 1 }]
                } else {
                    let v = scale(u[k], problem.domain[ax]);
                    k += 1;
                    v
                };
            }
            boundary.push(BoundarySample {
                face,
                point: SamplePoint {
                    t: scale(u[0], problem.time),
                    r,
                    z: random_inputs(&u[d..]),
                },
            });
        }
    }

    let initial = draw(d + q, counts.initial, seed_offset)?
        .into_iter()
        .map(|u| {
            let mut r = [0.0; 2];
            for k in 0..d {
                r[k] = scale(u[k], problem.domain[k]);
            }
            SamplePoint {
                t: problem.time[0],
                r,
                z: random_inputs(&u[d..]),
            }
        })
        .collect();

    let conservation = draw(1 + q, counts.conservation, seed_offset)?
        .into_iter()
        .map(|u| SamplePoint {
            t: scale(u[0], problem.time),
            r: [0.0; 2],
            z: random_inputs(&u[1..]),
        })
        .collect();

    Ok(SampleSets {
        interior,
        boundary,
        initial,
        conservation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{builtin_problem, BuiltinId};
    use crate::quadrature::{circle_quadrature, gauss_legendre};

    #[test]
    fn empty_counts_give_empty_sets() {
        let p = builtin_problem(BuiltinId::Ex411);
        let s = sample_domain(
            &p,
            SampleCounts {
                interior: 0,
                boundary_per_face: 0,
                initial: 0,
                conservation: 0,
            },
            &gauss_legendre(8).unwrap(),
            0,
        )
        .unwrap();
        assert_eq!(s, SampleSets::default());
    }

    #[test]
    fn faces_and_counts_2d() {
        let p = builtin_problem(BuiltinId::Ex42Kinetic);
        let s = sample_domain(
            &p,
            SampleCounts {
                interior: 10,
                boundary_per_face: 5,
                initial: 3,
                conservation: 0,
            },
            &circle_quadrature(8).unwrap(),
            0,
        )
        .unwrap();
        assert_eq!(s.boundary.len(), 20);
        for b in &s.boundary {
            let ax = b.face.axis();
            let want = if b.face.is_low() { 0.0 } else { 1.0 };
            assert_eq!(b.point.r[ax], want);
        }
    }

    #[test]
    fn quadrature_dimension_must_match() {
        let p = builtin_problem(BuiltinId::Ex411);
        let c = SampleCounts {
            interior: 1,
            boundary_per_face: 1,
            initial: 1,
            conservation: 0,
        };
        assert!(sample_domain(&p, c, &circle_quadrature(8).unwrap(), 0).is_err());
    }
}
