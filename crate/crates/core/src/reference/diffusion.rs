//! Finite-volume solvers for the diffusion limit
//! `ρ_t = ⟨Ω²⟩ ∇·(σ⁻¹ ∇ρ) − αρ + ⟨G⟩`.

use super::{cell_centers, check_snapshots, steps_to, Grid1D, Grid2D, ReferenceField, ReferenceMeta};
use crate::error::{Error, Result};
use crate::problems::{BoundaryCondition, Face, ProblemConfig};
use crate::quadrature::for_dimension;

/// Backward-Euler half steps taken before Crank–Nicolson, to damp the
/// start-up oscillations from incompatible initial data.
const STARTUP_HALF_STEPS: usize = 4;
const AVERAGE_NODES: usize = 16;

fn check_z(problem: &ProblemConfig, z: &[f64]) -> Result<()> {
    if z.len() != problem.uq_dim {
        return Err(Error::DimensionMismatch {
            expected: problem.uq_dim,
            got: z.len(),
        });
    }
    Ok(())
}

/// Angular averages of the source and initial data, taken with a 16-node
/// rule of the problem dimension.
struct Averages {
    omega: Vec<[f64; 2]>,
    w: Vec<f64>,
}

impl Averages {
    fn new(dimension: usize) -> Result<Self> {
        let q = for_dimension(dimension, AVERAGE_NODES)?;
        Ok(Averages {
            omega: q.nodes().to_vec(),
            w: q.weights().to_vec(),
        })
    }

    fn source(&self, p: &ProblemConfig, sigma: f64, t: f64, r: &[f64], z: &[f64]) -> f64 {
        self.omega
            .iter()
            .zip(&self.w)
            .map(|(&o, &w)| w * p.source.value(p.epsilon, sigma, t, r, o, z))
            .sum()
    }

    fn initial(&self, p: &ProblemConfig, r: &[f64], z: &[f64]) -> f64 {
        self.omega
            .iter()
            .zip(&self.w)
            .map(|(&o, &w)| w * p.initial.value(r, o, z))
            .sum()
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

/// Cyclic tridiagonal solve by Sherman–Morrison. `corner_low` is the entry
/// in row `n-1`, column 0 and `corner_high` the one in row 0, column `n-1`.
fn solve_cyclic(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    corner_low: f64,
    corner_high: f64,
    rhs: &[f64],
) -> Vec<f64> {
    let n = diag.len();
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= corner_low * corner_high / gamma;
    let mut x = solve_tridiagonal(lower, &bb, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_low;
    let zz = solve_tridiagonal(lower, &bb, upper, &u);
    let fact = (x[0] + corner_high * x[n - 1] / gamma) / (1.0 + zz[0] + corner_high * zz[n - 1] / gamma);
    for (xi, zi) in x.iter_mut().zip(&zz) {
        *xi -= fact * zi;
    }
    x
}

/// Crank–Nicolson in time with a Rannacher start, cell-centered finite
/// volumes in x with harmonic-mean face diffusivities. Dirichlet data is the
/// isotropic inflow value, imposed half a cell outside the first center.
pub fn diffusion_fd_1d(
    problem: &ProblemConfig,
    grid: Grid1D,
    z: &[f64],
    snapshots: &[f64],
) -> Result<ReferenceField> {
    problem.validate()?;
    grid.validate()?;
    check_snapshots(snapshots, problem.time)?;
    check_z(problem, z)?;
    if problem.dimension != 1 {
        return Err(Error::Solver("diffusion_fd_1d needs a one-dimensional problem".into()));
    }
    let periodic = matches!(problem.boundary, BoundaryCondition::Periodic);
    let n = grid.cells;
    if periodic && n < 3 {
        return Err(Error::Solver("periodic grids need at least 3 cells".into()));
    }
    let dom = problem.domain[0];
    let h = (dom[1] - dom[0]) / n as f64;
    let x = cell_centers(n, dom);
    let m2 = problem.omega_second_moment();
    let avg = Averages::new(1)?;
    let sigma: Vec<f64> = x.iter().map(|&xi| problem.sigma.value(&[xi], z)).collect();
    let alpha: Vec<f64> = x.iter().map(|&xi| problem.alpha.value(&[xi], z)).collect();
    let kappa: Vec<f64> = sigma.iter().map(|s| m2 / s).collect();

    // Face diffusivities over h², face i between cells i-1 and i.
    let mut face = vec![0.0; n + 1];
    for i in 1..n {
        face[i] = harmonic(kappa[i - 1], kappa[i]) / (h * h);
    }
    let (mut bc_left, mut bc_right) = (0.0, 0.0);
    if periodic {
        let k = harmonic(kappa[n - 1], kappa[0]) / (h * h);
        face[0] = k;
        face[n] = k;
    } else {
        // Half-cell distance to the boundary doubles the coefficient.
        face[0] = 2.0 * m2 / problem.sigma.value(&[dom[0]], z) / (h * h);
        face[n] = 2.0 * m2 / problem.sigma.value(&[dom[1]], z) / (h * h);
        bc_left = face[0] * problem.boundary.inflow_value(Face::XLow).unwrap_or(0.0);
        bc_right = face[n] * problem.boundary.inflow_value(Face::XHigh).unwrap_or(0.0);
    }
    // L = tridiag(lower, diag, upper), plus the periodic corners.
    let lower: Vec<f64> = (0..n).map(|i| face[i]).collect();
    let upper: Vec<f64> = (0..n).map(|i| face[i + 1]).collect();
    let diag: Vec<f64> = (0..n).map(|i| -(face[i] + face[i + 1]) - alpha[i]).collect();
    let corner = if periodic { face[0] } else { 0.0 };
    let apply = |rho: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let west = if i > 0 { rho[i - 1] } else if periodic { rho[n - 1] } else { 0.0 };
                let east = if i + 1 < n { rho[i + 1] } else if periodic { rho[0] } else { 0.0 };
                lower[i] * west + diag[i] * rho[i] + upper[i] * east
            })
            .collect()
    };
    let source = |t: f64| -> Vec<f64> {
        let mut s: Vec<f64> = (0..n).map(|i| avg.source(problem, sigma[i], t, &[x[i]], z)).collect();
        s[0] += bc_left;
        s[n - 1] += bc_right;
        s
    };
    // One θ-step: (I − θ dt L) ρ' = ρ + (1−θ) dt L ρ + dt (θ s' + (1−θ) s).
    let step = |rho: &[f64], t: f64, dt: f64, theta: f64| -> Vec<f64> {
        let lr = apply(rho);
        let s0 = source(t);
        let s1 = source(t + dt);
        let rhs: Vec<f64> = (0..n)
            .map(|i| rho[i] + (1.0 - theta) * dt * lr[i] + dt * (theta * s1[i] + (1.0 - theta) * s0[i]))
            .collect();
        let lo: Vec<f64> = lower.iter().map(|v| -theta * dt * v).collect();
        let up: Vec<f64> = upper.iter().map(|v| -theta * dt * v).collect();
        let di: Vec<f64> = diag.iter().map(|v| 1.0 - theta * dt * v).collect();
        if periodic {
            let c = -theta * dt * corner;
            solve_cyclic(&lo, &di, &up, c, c, &rhs)
        } else {
            solve_tridiagonal(&lo, &di, &up, &rhs)
        }
    };

    let mut rho: Vec<f64> = x.iter().map(|&xi| avg.initial(problem, &[xi], z)).collect();
    let mut t = problem.time[0];
    let mut startup = STARTUP_HALF_STEPS;
    let mut out = Vec::with_capacity(snapshots.len());
    for &ts in snapshots {
        let (steps, dt) = steps_to(t, ts, grid.dt);
        for k in 0..steps {
            let t_k = t + k as f64 * dt;
            if startup >= 2 {
                rho = step(&rho, t_k, 0.5 * dt, 1.0);
                rho = step(&rho, t_k + 0.5 * dt, 0.5 * dt, 1.0);
                startup -= 2;
            } else {
                rho = step(&rho, t_k, dt, 0.5);
            }
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("diffusion solution at t = {ts}")));
        }
        t = ts;
        out.push(rho.clone());
    }
    Ok(ReferenceField {
        meta: ReferenceMeta {
            problem: problem.name.clone(),
            scheme: "diffusion limit, Crank-Nicolson with Rannacher start".into(),
            grid: format!("{n} cells, dt = {}", grid.dt),
        },
        times: snapshots.to_vec(),
        x,
        y: None,
        rho: out,
    })
}

/// Matrix-free 5-point operator `A = −∇·(κ∇) + α` with Dirichlet faces.
struct Operator2D {
    nx: usize,
    ny: usize,
    /// Face coefficients over h², `(nx+1) × ny`, face i left of cell i.
    cx: Vec<f64>,
    /// `nx × (ny+1)`, face j below cell j.
    cy: Vec<f64>,
    alpha: Vec<f64>,
}

impl Operator2D {
    fn diag(&self, i: usize, j: usize) -> f64 {
        let nx = self.nx;
        self.cx[j * (nx + 1) + i] + self.cx[j * (nx + 1) + i + 1] + self.cy[j * nx + i] + self.cy[(j + 1) * nx + i]
            + self.alpha[j * nx + i]
    }

    /// `out = (I + c A) v`.
    fn apply_shifted(&self, c: f64, v: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let mut av = self.diag(i, j) * v[k];
                if i > 0 {
                    av -= self.cx[j * (nx + 1) + i] * v[k - 1];
                }
                if i + 1 < nx {
                    av -= self.cx[j * (nx + 1) + i + 1] * v[k + 1];
                }
                if j > 0 {
                    av -= self.cy[j * nx + i] * v[k - nx];
                }
                if j + 1 < ny {
                    av -= self.cy[(j + 1) * nx + i] * v[k + nx];
                }
                out[k] = v[k] + c * av;
            }
        }
    }

    /// Jacobi-preconditioned conjugate gradients on `(I + c A) x = b`,
    /// starting from `x`.
    fn solve_shifted(&self, c: f64, b: &[f64], x: &mut [f64]) -> Result<()> {
        let n = b.len();
        let inv_diag: Vec<f64> = (0..n)
            .map(|k| 1.0 / (1.0 + c * self.diag(k % self.nx, k / self.nx)))
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut ax = vec![0.0; n];
        self.apply_shifted(c, x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
        let mut zv: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = zv.clone();
        let mut rz = dot(&r, &zv);
        let mut ap = vec![0.0; n];
        for _ in 0..10 * n {
            if dot(&r, &r).sqrt() <= 1e-13 * bnorm {
                return Ok(());
            }
            self.apply_shifted(c, &p, &mut ap);
            let a = rz / dot(&p, &ap);
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * ap[k];
            }
            for k in 0..n {
                zv[k] = r[k] * inv_diag[k];
            }
            let rz_new = dot(&r, &zv);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = zv[k] + beta * p[k];
            }
        }
        Err(Error::Solver("conjugate gradients did not converge".into()))
    }
}

/// 2D counterpart of [`diffusion_fd_1d`] on a box with Dirichlet data on
/// every face. Linear systems are solved by preconditioned CG.
pub fn diffusion_fd_2d(
    problem: &ProblemConfig,
    grid: Grid2D,
    z: &[f64],
    snapshots: &[f64],
) -> Result<ReferenceField> {
    problem.validate()?;
    grid.validate()?;
    check_snapshots(snapshots, problem.time)?;
    check_z(problem, z)?;
    if problem.dimension != 2 {
        return Err(Error::Solver("diffusion_fd_2d needs a two-dimensional problem".into()));
    }
    if matches!(problem.boundary, BoundaryCondition::Periodic) {
        return Err(Error::Solver("diffusion_fd_2d supports inflow boundaries only".into()));
    }
    let (nx, ny) = (grid.cells_x, grid.cells_y);
    let [dx, dy] = [problem.domain[0], problem.domain[1]];
    let hx = (dx[1] - dx[0]) / nx as f64;
    let hy = (dy[1] - dy[0]) / ny as f64;
    let xs = cell_centers(nx, dx);
    let ys = cell_centers(ny, dy);
    let m2 = problem.omega_second_moment();
    let kappa_at = |x: f64, y: f64| m2 / problem.sigma.value(&[x, y], z);
    let mut kappa = vec![0.0; nx * ny];
    let mut alpha = vec![0.0; nx * ny];
    let mut sigma = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            kappa[j * nx + i] = kappa_at(xs[i], ys[j]);
            alpha[j * nx + i] = problem.alpha.value(&[xs[i], ys[j]], z);
            sigma[j * nx + i] = problem.sigma.value(&[xs[i], ys[j]], z);
        }
    }
    let value = |f: Face| problem.boundary.inflow_value(f).unwrap_or(0.0);
    let mut cx = vec![0.0; (nx + 1) * ny];
    let mut cy = vec![0.0; nx * (ny + 1)];
    let mut bc = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..=nx {
            let f = j * (nx + 1) + i;
            cx[f] = if i == 0 {
                2.0 * kappa_at(dx[0], ys[j])
            } else if i == nx {
                2.0 * kappa_at(dx[1], ys[j])
            } else {
                harmonic(kappa[j * nx + i - 1], kappa[j * nx + i])
            } / (hx * hx);
        }
        bc[j * nx] += cx[j * (nx + 1)] * value(Face::XLow);
        bc[j * nx + nx - 1] += cx[j * (nx + 1) + nx] * value(Face::XHigh);
    }
    for j in 0..=ny {
        for i in 0..nx {
            cy[j * nx + i] = if j == 0 {
                2.0 * kappa_at(xs[i], dy[0])
            } else if j == ny {
                2.0 * kappa_at(xs[i], dy[1])
            } else {
                harmonic(kappa[(j - 1) * nx + i], kappa[j * nx + i])
            } / (hy * hy);
        }
    }
    for i in 0..nx {
        bc[i] += cy[i] * value(Face::YLow);
        bc[(ny - 1) * nx + i] += cy[ny * nx + i] * value(Face::YHigh);
    }
    let op = Operator2D { nx, ny, cx, cy, alpha };
    let avg = Averages::new(2)?;
    let source = |t: f64| -> Vec<f64> {
        (0..nx * ny)
            .map(|k| {
                let r = [xs[k % nx], ys[k / nx]];
                avg.source(problem, sigma[k], t, &r, z) + bc[k]
            })
            .collect()
    };
    let step = |rho: &mut Vec<f64>, t: f64, dt: f64, theta: f64| -> Result<()> {
        // (I + θ dt A) ρ' = (I − (1−θ) dt A) ρ + dt (θ s' + (1−θ) s)
        let mut explicit = vec![0.0; rho.len()];
        op.apply_shifted(-(1.0 - theta) * dt, rho, &mut explicit);
        let s0 = source(t);
        let s1 = source(t + dt);
        let rhs: Vec<f64> = (0..rho.len())
            .map(|k| explicit[k] + dt * (theta * s1[k] + (1.0 - theta) * s0[k]))
            .collect();
        op.solve_shifted(theta * dt, &rhs, rho)
    };

    let mut rho: Vec<f64> = (0..nx * ny)
        .map(|k| avg.initial(problem, &[xs[k % nx], ys[k / nx]], z))
        .collect();
    let mut t = problem.time[0];
    let mut startup = STARTUP_HALF_STEPS;
    let mut out = Vec::with_capacity(snapshots.len());
    for &ts in snapshots {
        let (steps, dt) = steps_to(t, ts, grid.dt);
        for k in 0..steps {
            let t_k = t + k as f64 * dt;
            if startup >= 2 {
                step(&mut rho, t_k, 0.5 * dt, 1.0)?;
                step(&mut rho, t_k + 0.5 * dt, 0.5 * dt, 1.0)?;
                startup -= 2;
            } else {
                step(&mut rho, t_k, dt, 0.5)?;
            }
        }
        t = ts;
        out.push(rho.clone());
    }
    Ok(ReferenceField {
        meta: ReferenceMeta {
            problem: problem.name.clone(),
            scheme: "diffusion limit, Crank-Nicolson with Rannacher start, PCG".into(),
            grid: format!("{nx}x{ny} cells, dt = {}", grid.dt),
        },
        times: snapshots.to_vec(),
        x: xs,
        y: Some(ys),
        rho: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_and_cyclic_solves() {
        let lo = [0.0, -1.0, -1.0, -1.0];
        let di = [4.0, 4.0, 4.0, 4.0];
        let up = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mul = |c: f64, v: &[f64]| -> Vec<f64> {
            (0..4)
                .map(|i| {
                    let w = if i > 0 { lo[i] * v[i - 1] } else { c * v[3] };
                    let e = if i < 3 { up[i] * v[i + 1] } else { c * v[0] };
                    w + di[i] * v[i] + e
                })
                .collect()
        };
        let got = solve_tridiagonal(&lo, &di, &up, &mul(0.0, &x));
        let cyc = solve_cyclic(&lo, &di, &up, -0.7, -0.7, &mul(-0.7, &x));
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-14);
            assert!((cyc[i] - x[i]).abs() < 1e-14);
        }
    }
}
