//! Angular quadrature rules for the velocity average `⟨·⟩`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete direction set with normalized weights (summing to one), so that
/// `⟨f⟩ ≈ Σ wₘ f(Ωₘ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularQuadrature {
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
    dim: usize,
}

/// Which rule to build, as stored in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    GaussLegendre,
    Circle,
}

impl AngularQuadrature {
    /// Dimension of the direction variable: 1 for `μ ∈ [−1,1]`, 2 for `S¹`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Direction `m`. In 1D only the first component is meaningful.
    pub fn node(&self, m: usize) -> [f64; 2] {
        self.nodes[m]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `⟨Ω_x²⟩` reproduced by the rule (1/3 in 1D, 1/2 on the circle).
    pub fn second_moment(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(n, w)| w * n[0] * n[0])
            .sum()
    }
}

/// Gauss–Legendre rule on `[−1, 1]` with `n` nodes, ascending.
pub fn gauss_legendre(n: usize) -> Result<AngularQuadrature> {
    if !(1..=128).contains(&n) {
        return Err(Error::Quadrature(format!(
            "Gauss-Legendre order must be in 1..=128, got {n}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut raw = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-14 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        raw[n - 1 - i] = w;
        raw[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(AngularQuadrature {
        nodes: nodes.into_iter().map(|x| [x, 0.0]).collect(),
        weights: raw.into_iter().map(|w| w / 2.0).collect(),
        dim: 1,
    })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Equispaced rule on the unit circle: angles `2π(m − ½)/n`, weights `1/n`.
pub fn circle_quadrature(n: usize) -> Result<AngularQuadrature> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::Quadrature(format!(
            "circle quadrature needs an even node count >= 4, got {n}"
        )));
    }
    let nodes = (1..=n)
        .map(|m| {
            let phi = 2.0 * PI * (m as f64 - 0.5) / n as f64;
            [phi.cos(), phi.sin()]
        })
        .collect();
    Ok(AngularQuadrature {
        nodes,
        weights: vec![1.0 / n as f64; n],
        dim: 2,
    })
}

/// Builds the rule for a problem of spatial dimension `dim`.
pub fn for_dimension(dim: usize, n: usize) -> Result<AngularQuadrature> {
    match dim {
        1 => gauss_legendre(n),
        2 => circle_quadrature(n),
        d => Err(Error::Quadrature(format!("no angular rule for dimension {d}"))),
    }
}

/// `Σ valuesₘ wₘ`.
pub fn angular_average(values: &[f64], quad: &AngularQuadrature) -> Result<f64> {
    if values.len() != quad.len() {
        return Err(Error::DimensionMismatch {
            expected: quad.len(),
            got: values.len(),
        });
    }
    Ok(values.iter().zip(&quad.weights).map(|(v, w)| v * w).sum())
}
