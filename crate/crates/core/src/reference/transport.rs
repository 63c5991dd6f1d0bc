//! Implicit discrete-ordinates solver for the 1D scaled transport equation.

use super::{cell_centers, check_snapshots, steps_to, Grid1D, ReferenceField, ReferenceMeta};
use crate::error::{Error, Result};
use crate::problems::{BoundaryCondition, Face, ProblemConfig};
use crate::quadrature::AngularQuadrature;

const TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

/// Backward Euler in time, first-order upwind in x, source iteration on the
/// scattering term. `z` fixes the random inputs of a UQ problem.
pub fn sn_transport_1d(
    problem: &ProblemConfig,
    grid: Grid1D,
    quad: &AngularQuadrature,
    z: &[f64],
    snapshots: &[f64],
) -> Result<ReferenceField> {
    problem.validate()?;
    grid.validate()?;
    check_snapshots(snapshots, problem.time)?;
    if problem.dimension != 1 || quad.dim() != 1 {
        return Err(Error::Solver("the discrete-ordinates solver is one-dimensional".into()));
    }
    if problem.epsilon < 0.1 {
        return Err(Error::Solver(format!(
            "epsilon = {} is below the kinetic range of this solver (>= 0.1); use the diffusion solver",
            problem.epsilon
        )));
    }
    if z.len() != problem.uq_dim {
        return Err(Error::DimensionMismatch {
            expected: problem.uq_dim,
            got: z.len(),
        });
    }
    let n = grid.cells;
    let dom = problem.domain[0];
    let h = (dom[1] - dom[0]) / n as f64;
    let x = cell_centers(n, dom);
    let eps = problem.epsilon;
    let sigma: Vec<f64> = x.iter().map(|&xi| problem.sigma.value(&[xi], z)).collect();
    let alpha: Vec<f64> = x.iter().map(|&xi| problem.alpha.value(&[xi], z)).collect();
    let nodes: Vec<f64> = quad.nodes().iter().map(|o| o[0]).collect();
    let w = quad.weights();
    let ns = nodes.len();
    let periodic = matches!(problem.boundary, BoundaryCondition::Periodic);
    let left = problem.boundary.inflow_value(Face::XLow).unwrap_or(0.0);
    let right = problem.boundary.inflow_value(Face::XHigh).unwrap_or(0.0);

    let mut f: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&mu| x.iter().map(|&xi| problem.initial.value(&[xi], [mu, 0.0], z)).collect())
        .collect();
    let density = |f: &[Vec<f64>]| -> Vec<f64> {
        (0..n).map(|i| (0..ns).map(|m| w[m] * f[m][i]).sum()).collect()
    };

    let mut t = problem.time[0];
    let mut out = Vec::with_capacity(snapshots.len());
    let mut a = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for &ts in snapshots {
        let (steps, dt) = steps_to(t, ts, grid.dt);
        for _ in 0..steps {
            let t_new = t + dt;
            let old = f.clone();
            let mut rho = density(&f);
            let mut converged = false;
            for _sweep in 0..MAX_SWEEPS {
                for m in 0..ns {
                    let mu = nodes[m];
                    let b = mu.abs() / (eps * h);
                    for i in 0..n {
                        let s = sigma[i] / (eps * eps);
                        a[i] = 1.0 / dt + b + s + alpha[i];
                        let g = problem.source.value(eps, sigma[i], t_new, &[x[i]], [mu, 0.0], z);
                        r[i] = old[m][i] / dt + s * rho[i] + g;
                    }
                    let fm = &mut f[m];
                    // Index order along the direction of travel.
                    let order: Box<dyn Fn(usize) -> usize> = if mu >= 0.0 {
                        Box::new(|k| k)
                    } else {
                        Box::new(move |k| n - 1 - k)
                    };
                    let upstream = if periodic {
                        // f_k = P_k + Q_k f_last, closed around the cycle.
                        let (mut pp, mut qq) = (0.0, 1.0);
                        for k in 0..n {
                            let i = order(k);
                            pp = (r[i] + b * pp) / a[i];
                            qq = b * qq / a[i];
                            p[k] = pp;
                            q[k] = qq;
                        }
                        p[n - 1] / (1.0 - q[n - 1])
                    } else if mu >= 0.0 {
                        left
                    } else {
                        right
                    };
                    let mut prev = upstream;
                    for k in 0..n {
                        let i = order(k);
                        let v = (r[i] + b * prev) / a[i];
                        fm[i] = v;
                        prev = v;
                    }
                }
                let new_rho = density(&f);
                let change = new_rho
                    .iter()
                    .zip(&rho)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                rho = new_rho;
                if change < TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Solver(format!(
                    "source iteration did not converge in {MAX_SWEEPS} sweeps at t = {t_new}"
                )));
            }
            t = t_new;
        }
        t = ts;
        out.push(density(&f));
    }
    Ok(ReferenceField {
        meta: ReferenceMeta {
            problem: problem.name.clone(),
            scheme: format!("implicit S_{ns} upwind, source iteration"),
            grid: format!("{n} cells, dt = {}", grid.dt),
        },
        times: snapshots.to_vec(),
        x,
        y: None,
        rho: out,
    })
}
