//! Pointwise residuals of the transfer equation and of the macroscopic
//! auxiliary equation.
//!
//! Fields are handled as partially known jets (`Option` per entry) over the
//! space-time variables `(t, x[, y])`. Differentiating shifts entries down,
//! so an entry that would need a derivative the layout does not carry
//! becomes `None`, and asking for the value of such an entry fails with
//! [`Error::MissingDerivative`]. Coefficients are plain `f64` jets in the
//! same layout.
//!
//! With `s = 1/σ`, `D = Ω·∇` and `Q = ∂t f + α f − G`:
//!
//! ```text
//! 𝒜 = s ∂t(s D f) + s D(s (Q − D(s D f)))
//! ℬ = s² ∂t Q − s D(s D(s Q))
//! ```

use crate::autodiff::{Arith, JetLayout};
use crate::error::{Error, Result};

/// Partially known jet.
pub type PJet<S> = Vec<Option<S>>;

/// Coefficient jets at one phase point, as slices over the layout.
#[derive(Clone, Copy, Debug)]
pub struct PointCoefficients<'a> {
    pub sigma: &'a [f64],
    pub inv_sigma: &'a [f64],
    pub alpha: &'a [f64],
    pub source: &'a [f64],
}

/// Equation-level constants shared by all points.
#[derive(Clone, Copy, Debug)]
pub struct EquationParams {
    pub epsilon: f64,
    /// Number of spatial axes.
    pub dimension: usize,
    /// `⟨Ω_x²⟩` (1/3 in 1D, 1/2 in 2D).
    pub omega_sq: f64,
}

/// Wraps fully known jet values.
pub fn known<S: Copy>(values: &[S]) -> PJet<S> {
    values.iter().map(|&v| Some(v)).collect()
}

/// `∂_var u`.
pub fn deriv<S: Copy>(layout: &JetLayout, u: &[Option<S>], var: usize) -> PJet<S> {
    (0..layout.len())
        .map(|e| layout.shifted(e, var).and_then(|s| u[s]))
        .collect()
}

/// `Σ wᵢ uᵢ + c` entrywise, where `c` is an optional constant jet.
pub fn combine<A: Arith>(ctx: &mut A, terms: &[(f64, &[Option<A::S>])], c: Option<&[f64]>) -> PJet<A::S> {
    let k = terms.first().map(|t| t.1.len()).or(c.map(|c| c.len())).unwrap_or(0);
    let mut buf: Vec<(f64, A::S)> = Vec::with_capacity(terms.len());
    (0..k)
        .map(|e| {
            buf.clear();
            for &(w, u) in terms {
                if w == 0.0 {
                    continue;
                }
                buf.push((w, u[e]?));
            }
            let c0 = c.map_or(0.0, |c| c[e]);
            Some(ctx.lin(&buf, c0))
        })
        .collect()
}

/// Leibniz product of a coefficient jet with a field jet. Terms with a zero
/// coefficient entry are skipped, so constant coefficients do not consume
/// derivatives.
pub fn coef_mul<A: Arith>(ctx: &mut A, layout: &JetLayout, c: &[f64], u: &[Option<A::S>]) -> PJet<A::S> {
    let mut buf: Vec<(f64, A::S)> = Vec::new();
    (0..layout.len())
        .map(|e| {
            buf.clear();
            for &(a, b) in layout.leibniz_pairs(e) {
                if c[a] != 0.0 {
                    buf.push((c[a], u[b]?));
                }
            }
            Some(ctx.lin(&buf, 0.0))
        })
        .collect()
}

/// `Ω·∇u`.
pub fn transport<A: Arith>(
    ctx: &mut A,
    layout: &JetLayout,
    eq: &EquationParams,
    omega: [f64; 2],
    u: &[Option<A::S>],
) -> PJet<A::S> {
    let dx = deriv(layout, u, 1);
    if eq.dimension == 1 {
        combine(ctx, &[(omega[0], &dx)], None)
    } else {
        let dy = deriv(layout, u, 2);
        combine(ctx, &[(omega[0], &dx), (omega[1], &dy)], None)
    }
}

fn value<S: Copy>(u: &[Option<S>], what: &'static str) -> Result<S> {
    u[0].ok_or(Error::MissingDerivative(what))
}

fn entry<S: Copy>(layout: &JetLayout, u: &[Option<S>], var: usize, what: &'static str) -> Result<S> {
    layout
        .first(var)
        .and_then(|e| u[e])
        .ok_or(Error::MissingDerivative(what))
}

/// `Q = ∂t f + α f − G`.
fn q_jet<A: Arith>(ctx: &mut A, layout: &JetLayout, c: &PointCoefficients<'_>, f: &[Option<A::S>]) -> PJet<A::S> {
    let ft = deriv(layout, f, 0);
    let af = coef_mul(ctx, layout, c.alpha, f);
    let neg_g: Vec<f64> = c.source.iter().map(|g| -g).collect();
    combine(ctx, &[(1.0, &ft), (1.0, &af)], Some(&neg_g))
}

/// `ε² ∂t f + ε Ω·∇f − σ(ρ − f) + ε² α f − ε² G` at one phase point, with
/// `rho` the angular average at the same space-time point.
pub fn governing_residual<A: Arith>(
    ctx: &mut A,
    layout: &JetLayout,
    eq: &EquationParams,
    c: &PointCoefficients<'_>,
    omega: [f64; 2],
    f: &[Option<A::S>],
    rho: A::S,
) -> Result<A::S> {
    const WHAT: &str = "the governing residual";
    let e2 = eq.epsilon * eq.epsilon;
    let (sig, alpha, g) = (c.sigma[0], c.alpha[0], c.source[0]);
    let f0 = value(f, WHAT)?;
    let ft = entry(layout, f, 0, WHAT)?;
    let fx = entry(layout, f, 1, WHAT)?;
    let mut terms = vec![
        (e2, ft),
        (eq.epsilon * omega[0], fx),
        (-sig, rho),
        (sig + e2 * alpha, f0),
    ];
    if eq.dimension == 2 {
        terms.push((eq.epsilon * omega[1], entry(layout, f, 2, WHAT)?));
    }
    Ok(ctx.lin(&terms, -e2 * g))
}

/// `𝒜(f, G)` at one phase point.
pub fn operator_a<A: Arith>(
    ctx: &mut A,
    layout: &JetLayout,
    eq: &EquationParams,
    c: &PointCoefficients<'_>,
    omega: [f64; 2],
    f: &[Option<A::S>],
) -> Result<A::S> {
    let s = c.inv_sigma;
    let df = transport(ctx, layout, eq, omega, f);
    let s_df = coef_mul(ctx, layout, s, &df);
    // s ∂t(s D f)
    let s_df_t = deriv(layout, &s_df, 0);
    let first = coef_mul(ctx, layout, s, &s_df_t);
    // s D(s (Q − D(s D f)))
    let q = q_jet(ctx, layout, c, f);
    let d_s_df = transport(ctx, layout, eq, omega, &s_df);
    let inner = combine(ctx, &[(1.0, &q), (-1.0, &d_s_df)], None);
    let s_inner = coef_mul(ctx, layout, s, &inner);
    let d_inner = transport(ctx, layout, eq, omega, &s_inner);
    let second = coef_mul(ctx, layout, s, &d_inner);
    let a = value(&first, "operator A")?;
    let b = value(&second, "operator A")?;
    Ok(ctx.add(a, b))
}

/// `ℬ(f, G)` at one phase point.
pub fn operator_b<A: Arith>(
    ctx: &mut A,
    layout: &JetLayout,
    eq: &EquationParams,
    c: &PointCoefficients<'_>,
    omega: [f64; 2],
    f: &[Option<A::S>],
) -> Result<A::S> {
    let s = c.inv_sigma;
    let q = q_jet(ctx, layout, c, f);
    let s2: Vec<f64> = {
        let mut out = vec![0.0; layout.len()];
        crate::autodiff::jet::product(layout, s, s, &mut out);
        out
    };
    let q_t = deriv(layout, &q, 0);
    let first = coef_mul(ctx, layout, &s2, &q_t);
    let sq = coef_mul(ctx, layout, s, &q);
    let d_sq = transport(ctx, layout, eq, omega, &sq);
    let d1 = coef_mul(ctx, layout, s, &d_sq);
    let d_d1 = transport(ctx, layout, eq, omega, &d1);
    let d2 = coef_mul(ctx, layout, s, &d_d1);
    let a = value(&first, "operator B")?;
    let b = value(&d2, "operator B")?;
    Ok(ctx.sub(a, b))
}

/// Diffusion-limit operator applied to a density jet:
/// `∂t ρ − ⟨Ω²⟩ ∇·(s ∇ρ) + α ρ − ⟨G⟩`.
pub fn diffusion_residual<A: Arith>(
    ctx: &mut A,
    layout: &JetLayout,
    eq: &EquationParams,
    c: &PointCoefficients<'_>,
    rho: &[Option<A::S>],
    mean_source: f64,
) -> Result<A::S> {
    const WHAT: &str = "the diffusion operator";
    let s = c.inv_sigma;
    let mut terms = vec![(1.0, entry(layout, rho, 0, WHAT)?), (c.alpha[0], value(rho, WHAT)?)];
    for axis in 1..=eq.dimension {
        let flux = coef_mul(ctx, layout, s, &deriv(layout, rho, axis));
        terms.push((-eq.omega_sq, entry(layout, &flux, axis, WHAT)?));
    }
    Ok(ctx.lin(&terms, -mean_source))
}

/// Macroscopic auxiliary residual at one space-time point:
/// `∂t ρ − ⟨Ω²⟩∇·(s∇ρ) + αρ − ⟨G⟩ − ε⟨σ𝒜⟩ − ε²⟨σℬ⟩`.
///
/// `f` holds the field jet for every quadrature node, `coefs` the matching
/// coefficients (only the source may differ between nodes).
#[allow(clippy::too_many_arguments)]
pub fn macro_aux_residual<A: Arith>(
    ctx: &mut A,
    layout: &JetLayout,
    eq: &EquationParams,
    nodes: &[[f64; 2]],
    weights: &[f64],
    coefs: &[PointCoefficients<'_>],
    f: &[PJet<A::S>],
    include_ab: bool,
) -> Result<A::S> {
    let terms: Vec<(f64, &[Option<A::S>])> = weights.iter().zip(f).map(|(&w, u)| (w, u.as_slice())).collect();
    let rho = combine(ctx, &terms, None);
    let mean_g: f64 = weights.iter().zip(coefs).map(|(w, c)| w * c.source[0]).sum();
    let base = diffusion_residual(ctx, layout, eq, &coefs[0], &rho, mean_g)?;
    if !include_ab {
        return Ok(base);
    }
    let mut acc = vec![(1.0, base)];
    for m in 0..nodes.len() {
        let a = operator_a(ctx, layout, eq, &coefs[m], nodes[m], &f[m])?;
        let b = operator_b(ctx, layout, eq, &coefs[m], nodes[m], &f[m])?;
        let ws = weights[m] * coefs[m].sigma[0];
        acc.push((-eq.epsilon * ws, a));
        acc.push((-eq.epsilon * eq.epsilon * ws, b));
    }
    Ok(ctx.lin(&acc, 0.0))
}

/// Multi-indices over `(t, x[, y])` needed by the residuals.
pub fn required_indices(dimension: usize, with_ab: bool, with_diffusion: bool) -> Vec<crate::autodiff::MultiIndex> {
    use crate::autodiff::MultiIndex;
    let mut out = vec![MultiIndex::from_vars(&[0])];
    for ax in 1..=dimension {
        out.push(MultiIndex::from_vars(&[ax]));
        if with_diffusion || with_ab {
            out.push(MultiIndex::from_vars(&[ax, ax]));
        }
    }
    if with_ab {
        out.push(MultiIndex::from_vars(&[0, 0]));
        for a in 1..=dimension {
            for b in a..=dimension {
                out.push(MultiIndex::from_vars(&[0, a, b]));
                for c in b..=dimension {
                    out.push(MultiIndex::from_vars(&[a, b, c]));
                }
            }
        }
    }
    out
}
