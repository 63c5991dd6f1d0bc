//! Empirical losses: MA-APNN and the PINN baselines.
//!
//! The sample sets are turned once into [`EmpiricalLoss`], which caches
//! network inputs, hard-constraint multipliers and coefficient jets in small
//! chunks. Every evaluation then runs the same generic chunk code, either
//! with plain numbers or on a tape for the parameter gradient. Chunks are
//! summed in a fixed order, so results are bitwise reproducible.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    grad_params_into, Arith, JetBatch, JetLayout, NetworkArith, NetworkSpec, ParameterVector,
    PlainNet,
};
use crate::error::{Error, Result};
use crate::problems::{
    build_batch, evaluate_coefficients, BoundaryCondition, ConstrainedField, Face, PhasePoint,
    ProblemConfig,
};
use crate::quadrature::AngularQuadrature;
use crate::residuals::{
    diffusion_residual, governing_residual, known, macro_aux_residual, required_indices,
    EquationParams, PJet, PointCoefficients,
};
use crate::sampling::{SamplePoint, SampleSets};

/// Where λ enters the governing/auxiliary split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightExponent {
    /// `λ r_g² + (1 − λ) r_m²`
    #[default]
    LossWeighted,
    /// `(λ r_g)² + ((1 − λ) r_m)²`
    ResidualWeighted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    MaApnn,
    Pinn,
    PinnPlusDiffusion,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::MaApnn => "ma_apnn",
            LossMode::Pinn => "pinn",
            LossMode::PinnPlusDiffusion => "pinn_plus_diffusion",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma_apnn" => Ok(LossMode::MaApnn),
            "pinn" => Ok(LossMode::Pinn),
            "pinn_plus_diffusion" => Ok(LossMode::PinnPlusDiffusion),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}` (expected ma_apnn, pinn or pinn_plus_diffusion)"
            ))),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_cells() -> usize {
    128
}

/// Loss weights and switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_b: f64,
    pub lambda_i: f64,
    pub lambda_c: f64,
    /// Governing weight of the PINN baselines.
    #[serde(default = "one")]
    pub lambda_g: f64,
    /// Diffusion-residual weight of `pinn_plus_diffusion`.
    #[serde(default = "one")]
    pub lambda_d: f64,
    #[serde(default)]
    pub weight_exponent: WeightExponent,
    /// Keep the O(ε) and O(ε²) terms of the auxiliary equation.
    #[serde(default = "yes", rename = "include_ab")]
    pub include_ab: bool,
    /// Midpoint cells for the spatial integrals of the conservation term.
    #[serde(default = "default_cells")]
    pub conservation_cells: usize,
}

impl LossHyper {
    pub fn new(beta1: f64, beta2: f64, lambda_b: f64, lambda_i: f64, lambda_c: f64) -> Self {
        LossHyper {
            beta1,
            beta2,
            lambda_b,
            lambda_i,
            lambda_c,
            lambda_g: 1.0,
            lambda_d: 1.0,
            weight_exponent: WeightExponent::LossWeighted,
            include_ab: true,
            conservation_cells: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.lambda_b,
            self.lambda_i,
            self.lambda_c,
            self.lambda_g,
            self.lambda_d,
        ];
        if !(self.beta1 > 0.0 && self.beta2 > 0.0) {
            return Err(Error::Loss("beta1 and beta2 must be positive".into()));
        }
        if nonneg.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Loss("loss weights must be finite and nonnegative".into()));
        }
        if self.conservation_cells == 0 {
            return Err(Error::Loss("conservation_cells must be positive".into()));
        }
        Ok(())
    }
}

/// Per-term loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub governing: f64,
    pub macro_aux: f64,
    pub boundary: f64,
    pub initial: f64,
    pub conservation: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn from_parts(p: [f64; 5]) -> Self {
        LossBreakdown {
            governing: p[0],
            macro_aux: p[1],
            boundary: p[2],
            initial: p[3],
            conservation: p[4],
            total: p.iter().sum(),
        }
    }
}

/// `λ = e^(−νβ₁) + β₂` with `ν = σ/ε² + α`.
pub fn ap_weight(r: &[f64], z: &[f64], problem: &ProblemConfig, hyper: &LossHyper) -> f64 {
    (-problem.nu(r, z) * hyper.beta1).exp() + hyper.beta2
}

/// `(w_g, w_m)` for a given λ.
pub fn split_weights(lambda: f64, exponent: WeightExponent) -> (f64, f64) {
    match exponent {
        WeightExponent::LossWeighted => (lambda, 1.0 - lambda),
        WeightExponent::ResidualWeighted => (lambda * lambda, (1.0 - lambda) * (1.0 - lambda)),
    }
}

const GOV: usize = 0;
const MAC: usize = 1;
const BND: usize = 2;
const INI: usize = 3;
const CON: usize = 4;

/// Interior points, each paired with every quadrature node.
struct InteriorChunk {
    batch: JetBatch,
    mult: Option<Vec<f64>>,
    /// `[σ, 1/σ, α, G]` jets per phase point, flattened.
    coefs: Vec<f64>,
    /// `(w_g, w_m)` per space-time point, already divided by `N_int`.
    weights: Vec<(f64, f64)>,
}

/// Boundary points with the directions that are constrained there.
struct BoundaryChunk {
    batch: JetBatch,
    mult: Option<Vec<f64>>,
    /// Number of direction slots per point.
    dirs: usize,
    /// Weights of the pointwise term over the slots, zero on outflow slots.
    dir_weights: Vec<f64>,
    /// Weights of the averaged term over the slots.
    mean_weights: Vec<f64>,
    /// Inflow value per point (inflow), or `None` for periodic pairs, whose
    /// batch holds the low face block followed by the high face block.
    data: Option<Vec<f64>>,
    points: usize,
}

struct InitialChunk {
    batch: JetBatch,
    mult: Option<Vec<f64>>,
    /// `f₀` per phase point.
    target: Vec<f64>,
    /// `⟨f₀⟩` per point.
    target_mean: Vec<f64>,
}

/// One conservation time sample: cell midpoints then the two end points,
/// each with every direction.
struct ConservationChunk {
    batch: JetBatch,
    mult: Option<Vec<f64>>,
    /// `Δx Σ_c α(x_c)` weights per cell.
    alpha: Vec<f64>,
    /// `Δx Σ_c ⟨G⟩(x_c)`.
    source_integral: f64,
}

/// A loss bound to a fixed set of samples.
pub struct EmpiricalLoss {
    problem: ProblemConfig,
    hyper: LossHyper,
    mode: LossMode,
    quad: AngularQuadrature,
    eq: EquationParams,
    layout: Arc<JetLayout>,
    plain_layout: Arc<JetLayout>,
    cons_layout: Arc<JetLayout>,
    interior: Vec<InteriorChunk>,
    boundary: Vec<BoundaryChunk>,
    initial: Vec<InitialChunk>,
    conservation: Vec<ConservationChunk>,
    scale: [f64; 5],
    lambda_range: (f64, f64),
}

/// Phase points per interior chunk.
const CHUNK: usize = 512;

impl EmpiricalLoss {
    pub fn new(
        problem: &ProblemConfig,
        hyper: &LossHyper,
        mode: LossMode,
        quad: &AngularQuadrature,
        samples: &SampleSets,
    ) -> Result<Self> {
        problem.validate()?;
        hyper.validate()?;
        if quad.dim() != problem.dimension {
            return Err(Error::Quadrature("quadrature does not match the problem dimension".into()));
        }
        if samples.interior.is_empty() {
            return Err(Error::Loss("the interior sample set is empty".into()));
        }
        let with_ab = mode == LossMode::MaApnn && hyper.include_ab;
        let with_diff = mode != LossMode::Pinn;
        let nv = problem.jet_vars();
        let layout = JetLayout::new(nv, required_indices(problem.dimension, with_ab, with_diff))?;
        let plain_layout = JetLayout::new(nv, [])?;
        let cons_layout = JetLayout::new(nv, [crate::autodiff::MultiIndex::from_vars(&[0])])?;
        let eq = EquationParams {
            epsilon: problem.epsilon,
            dimension: problem.dimension,
            omega_sq: problem.omega_second_moment(),
        };
        let mut me = EmpiricalLoss {
            problem: problem.clone(),
            hyper: hyper.clone(),
            mode,
            quad: quad.clone(),
            eq,
            layout,
            plain_layout,
            cons_layout,
            interior: Vec::new(),
            boundary: Vec::new(),
            initial: Vec::new(),
            conservation: Vec::new(),
            scale: [0.0; 5],
            lambda_range: (f64::INFINITY, f64::NEG_INFINITY),
        };
        me.prepare_interior(&samples.interior)?;
        if hyper.lambda_b > 0.0 {
            me.prepare_boundary(samples)?;
        }
        if hyper.lambda_i > 0.0 {
            me.prepare_initial(&samples.initial)?;
        }
        if hyper.lambda_c > 0.0 {
            me.prepare_conservation(&samples.conservation)?;
        }
        Ok(me)
    }

    pub fn problem(&self) -> &ProblemConfig {
        &self.problem
    }

    pub fn hyper(&self) -> &LossHyper {
        &self.hyper
    }

    pub fn mode(&self) -> LossMode {
        self.mode
    }

    pub fn quadrature(&self) -> &AngularQuadrature {
        &self.quad
    }

    /// Smallest and largest λ over the interior samples.
    pub fn lambda_range(&self) -> (f64, f64) {
        self.lambda_range
    }

    /// Jet entries per phase point used by the interior residuals.
    pub fn jet_len(&self) -> usize {
        self.layout.len()
    }

    fn prepare_interior(&mut self, pts: &[SamplePoint]) -> Result<()> {
        let ns = self.quad.len();
        let n = pts.len() as f64;
        let per = (CHUNK / ns).max(1);
        let k = self.layout.len();
        for chunk in pts.chunks(per) {
            let mut phase = Vec::with_capacity(chunk.len() * ns);
            let mut coefs = Vec::with_capacity(chunk.len() * ns * 4 * k);
            let mut weights = Vec::with_capacity(chunk.len());
            for sp in chunk {
                let r = &sp.r[..self.problem.dimension];
                let lambda = ap_weight(r, &sp.z, &self.problem, &self.hyper);
                if !(lambda < 1.0) {
                    return Err(Error::Loss(format!(
                        "lambda = {lambda} >= 1 at r = {r:?}; decrease beta2 or increase beta1"
                    )));
                }
                self.lambda_range.0 = self.lambda_range.0.min(lambda);
                self.lambda_range.1 = self.lambda_range.1.max(lambda);
                let (wg, wm) = split_weights(lambda, self.hyper.weight_exponent);
                weights.push((wg / n, wm / n));
                for &om in self.quad.nodes() {
                    let pp = PhasePoint {
                        t: sp.t,
                        r: sp.r,
                        omega: om,
                        z: sp.z.clone(),
                    };
                    let c = evaluate_coefficients(&self.problem, &self.layout, &pp)?;
                    coefs.extend_from_slice(c.sigma.values());
                    coefs.extend_from_slice(c.inv_sigma.values());
                    coefs.extend_from_slice(c.alpha.values());
                    coefs.extend_from_slice(c.source.values());
                    phase.push(pp);
                }
            }
            let (batch, mult) = build_batch(&self.problem, &self.layout, &phase)?;
            self.interior.push(InteriorChunk {
                batch,
                mult,
                coefs,
                weights,
            });
        }
        let (g, m) = match self.mode {
            LossMode::MaApnn => (1.0, 1.0),
            LossMode::Pinn => (self.hyper.lambda_g / n, 0.0),
            LossMode::PinnPlusDiffusion => (self.hyper.lambda_g / n, self.hyper.lambda_d / n),
        };
        self.scale[GOV] = g;
        self.scale[MAC] = m;
        Ok(())
    }

    fn prepare_boundary(&mut self, samples: &SampleSets) -> Result<()> {
        let pts = &samples.boundary;
        if pts.is_empty() {
            return Ok(());
        }
        self.scale[BND] = self.hyper.lambda_b / pts.len() as f64;
        let ns = self.quad.len();
        let augmented = self.mode == LossMode::MaApnn;
        match self.problem.boundary {
            BoundaryCondition::Periodic => {
                let [a, b] = self.problem.domain[0];
                let per = (CHUNK / (2 * ns)).max(1);
                for chunk in pts.chunks(per) {
                    let mut phase = Vec::with_capacity(2 * chunk.len() * ns);
                    for x in [a, b] {
                        for bs in chunk {
                            for &om in self.quad.nodes() {
                                phase.push(PhasePoint::new(bs.point.t, &[x], om, bs.point.z.clone()));
                            }
                        }
                    }
                    let (batch, mult) = build_batch(&self.problem, &self.plain_layout, &phase)?;
                    self.boundary.push(BoundaryChunk {
                        batch,
                        mult,
                        dirs: ns,
                        dir_weights: self.quad.weights().to_vec(),
                        mean_weights: self.quad.weights().to_vec(),
                        data: None,
                        points: chunk.len(),
                    });
                }
            }
            BoundaryCondition::Inflow { .. } => {
                // Group by face; each face has its own inflow direction set.
                for &face in Face::all(self.problem.dimension) {
                    let on_face: Vec<_> = pts.iter().filter(|b| b.face == face).collect();
                    if on_face.is_empty() {
                        continue;
                    }
                    let inflow: Vec<usize> = (0..ns).filter(|&m| face.is_inflow(self.quad.node(m))).collect();
                    if inflow.is_empty() {
                        return Err(Error::Quadrature(format!("no inflow direction on face {face:?}")));
                    }
                    let wsum: f64 = inflow.iter().map(|&m| self.quad.weights()[m]).sum();
                    // The averaged term needs every direction: it is the incident
                    // radiation at the wall, matched against the inflow value.
                    let dirs: Vec<usize> = if augmented { (0..ns).collect() } else { inflow };
                    let w = self.quad.weights();
                    let dir_weights: Vec<f64> = dirs
                        .iter()
                        .map(|&m| if face.is_inflow(self.quad.node(m)) { w[m] / wsum } else { 0.0 })
                        .collect();
                    let mean_weights: Vec<f64> = dirs.iter().map(|&m| w[m]).collect();
                    let fb = self.problem.boundary.inflow_value(face).unwrap_or(0.0);
                    let per = (CHUNK / dirs.len()).max(1);
                    for chunk in on_face.chunks(per) {
                        let mut phase = Vec::with_capacity(chunk.len() * dirs.len());
                        for bs in chunk {
                            for &m in &dirs {
                                phase.push(PhasePoint {
                                    t: bs.point.t,
                                    r: bs.point.r,
                                    omega: self.quad.node(m),
                                    z: bs.point.z.clone(),
                                });
                            }
                        }
                        let (batch, mult) = build_batch(&self.problem, &self.plain_layout, &phase)?;
                        self.boundary.push(BoundaryChunk {
                            batch,
                            mult,
                            dirs: dirs.len(),
                            dir_weights: dir_weights.clone(),
                            mean_weights: mean_weights.clone(),
                            data: Some(vec![fb; chunk.len()]),
                            points: chunk.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn prepare_initial(&mut self, pts: &[SamplePoint]) -> Result<()> {
        if pts.is_empty() {
            return Ok(());
        }
        self.scale[INI] = self.hyper.lambda_i / pts.len() as f64;
        let ns = self.quad.len();
        let per = (CHUNK / ns).max(1);
        for chunk in pts.chunks(per) {
            let mut phase = Vec::with_capacity(chunk.len() * ns);
            let mut target = Vec::with_capacity(chunk.len() * ns);
            let mut target_mean = Vec::with_capacity(chunk.len());
            for sp in chunk {
                let r = &sp.r[..self.problem.dimension];
                let mut mean = 0.0;
                for (m, &om) in self.quad.nodes().iter().enumerate() {
                    let v = self.problem.initial.value(r, om, &sp.z);
                    mean += self.quad.weights()[m] * v;
                    target.push(v);
                    phase.push(PhasePoint {
                        t: sp.t,
                        r: sp.r,
                        omega: om,
                        z: sp.z.clone(),
                    });
                }
                target_mean.push(mean);
            }
            let (batch, mult) = build_batch(&self.problem, &self.plain_layout, &phase)?;
            self.initial.push(InitialChunk {
                batch,
                mult,
                target,
                target_mean,
            });
        }
        Ok(())
    }

    fn prepare_conservation(&mut self, pts: &[SamplePoint]) -> Result<()> {
        if pts.is_empty() {
            return Ok(());
        }
        if self.problem.dimension != 1 {
            return Err(Error::Loss(
                "the conservation term is implemented for 1D problems only; set lambda_c = 0".into(),
            ));
        }
        self.scale[CON] = self.hyper.lambda_c / pts.len() as f64;
        let cells = self.hyper.conservation_cells;
        let [a, b] = self.problem.domain[0];
        let dx = (b - a) / cells as f64;
        for sp in pts {
            let mut phase = Vec::with_capacity((cells + 2) * self.quad.len());
            let mut alpha = Vec::with_capacity(cells);
            let mut source_integral = 0.0;
            for c in 0..cells {
                let x = a + (c as f64 + 0.5) * dx;
                alpha.push(dx * self.problem.alpha.value(&[x], &sp.z));
                let sigma = self.problem.sigma.value(&[x], &sp.z);
                for (m, &om) in self.quad.nodes().iter().enumerate() {
                    let g = self
                        .problem
                        .source
                        .value(self.problem.epsilon, sigma, sp.t, &[x], om, &sp.z);
                    source_integral += dx * self.quad.weights()[m] * g;
                    phase.push(PhasePoint::new(sp.t, &[x], om, sp.z.clone()));
                }
            }
            for x in [a, b] {
                for &om in self.quad.nodes() {
                    phase.push(PhasePoint::new(sp.t, &[x], om, sp.z.clone()));
                }
            }
            let (batch, mult) = build_batch(&self.problem, &self.cons_layout, &phase)?;
            self.conservation.push(ConservationChunk {
                batch,
                mult,
                alpha,
                source_integral,
            });
        }
        Ok(())
    }

    fn interior_parts<A: NetworkArith>(&self, ctx: &mut A, ch: &InteriorChunk) -> Result<[Option<A::S>; 2]> {
        let k = self.layout.len();
        let ns = self.quad.len();
        let f = ctx.network(&ch.batch, ch.mult.clone())?;
        let weights = self.quad.weights();
        let mut gov = Vec::new();
        let mut mac = Vec::new();
        for (p, &(wg, wm)) in ch.weights.iter().enumerate() {
            let jets: Vec<PJet<A::S>> = (0..ns)
                .map(|m| known(&f[(p * ns + m) * k..(p * ns + m + 1) * k]))
                .collect();
            let cs: Vec<PointCoefficients<'_>> = (0..ns)
                .map(|m| {
                    let base = ((p * ns + m) * 4) * k;
                    let c = &ch.coefs[base..base + 4 * k];
                    PointCoefficients {
                        sigma: &c[..k],
                        inv_sigma: &c[k..2 * k],
                        alpha: &c[2 * k..3 * k],
                        source: &c[3 * k..],
                    }
                })
                .collect();
            let rho_terms: Vec<(f64, A::S)> = (0..ns).map(|m| (weights[m], f[(p * ns + m) * k])).collect();
            let rho = ctx.lin(&rho_terms, 0.0);
            let (g_w, m_w) = match self.mode {
                LossMode::MaApnn => (wg, wm),
                _ => (1.0, 1.0),
            };
            for m in 0..ns {
                let r = governing_residual(ctx, &self.layout, &self.eq, &cs[m], self.quad.node(m), &jets[m], rho)?;
                let r2 = ctx.square(r);
                gov.push((g_w * weights[m], r2));
            }
            match self.mode {
                LossMode::MaApnn => {
                    let r = macro_aux_residual(
                        ctx,
                        &self.layout,
                        &self.eq,
                        self.quad.nodes(),
                        weights,
                        &cs,
                        &jets,
                        self.hyper.include_ab,
                    )?;
                    let r2 = ctx.square(r);
                    mac.push((m_w, r2));
                }
                LossMode::PinnPlusDiffusion => {
                    let rho_jet = crate::residuals::combine(
                        ctx,
                        &jets
                            .iter()
                            .zip(weights)
                            .map(|(j, &w)| (w, j.as_slice()))
                            .collect::<Vec<_>>(),
                        None,
                    );
                    let mean_g: f64 = weights.iter().zip(&cs).map(|(w, c)| w * c.source[0]).sum();
                    let r = diffusion_residual(ctx, &self.layout, &self.eq, &cs[0], &rho_jet, mean_g)?;
                    let r2 = ctx.square(r);
                    mac.push((1.0, r2));
                }
                LossMode::Pinn => {}
            }
        }
        let g = ctx.lin(&gov, 0.0);
        let m = if mac.is_empty() { None } else { Some(ctx.lin(&mac, 0.0)) };
        Ok([Some(g), m])
    }

    fn boundary_part<A: NetworkArith>(&self, ctx: &mut A, ch: &BoundaryChunk) -> Result<A::S> {
        let f = ctx.network(&ch.batch, ch.mult.clone())?;
        let augmented = self.mode == LossMode::MaApnn;
        let nd = ch.dirs;
        let mut acc = Vec::new();
        for p in 0..ch.points {
            match &ch.data {
                Some(data) => {
                    let fb = data[p];
                    let mut mean = Vec::with_capacity(nd);
                    for m in 0..nd {
                        let v = f[p * nd + m];
                        if ch.dir_weights[m] > 0.0 {
                            let d = ctx.lin(&[(1.0, v)], -fb);
                            let d2 = ctx.square(d);
                            acc.push((ch.dir_weights[m], d2));
                        }
                        mean.push((ch.mean_weights[m], v));
                    }
                    if augmented {
                        let d = ctx.lin(&mean, -fb);
                        let d2 = ctx.square(d);
                        acc.push((1.0, d2));
                    }
                }
                None => {
                    let off = ch.points * nd;
                    let mut mean = Vec::with_capacity(2 * nd);
                    for m in 0..nd {
                        let (lo, hi) = (f[p * nd + m], f[off + p * nd + m]);
                        let d = ctx.sub(lo, hi);
                        let d2 = ctx.square(d);
                        acc.push((ch.dir_weights[m], d2));
                        mean.push((ch.mean_weights[m], lo));
                        mean.push((-ch.mean_weights[m], hi));
                    }
                    if augmented {
                        let d = ctx.lin(&mean, 0.0);
                        let d2 = ctx.square(d);
                        acc.push((1.0, d2));
                    }
                }
            }
        }
        Ok(ctx.lin(&acc, 0.0))
    }

    fn initial_part<A: NetworkArith>(&self, ctx: &mut A, ch: &InitialChunk) -> Result<A::S> {
        let f = ctx.network(&ch.batch, ch.mult.clone())?;
        let augmented = self.mode == LossMode::MaApnn;
        let ns = self.quad.len();
        let w = self.quad.weights();
        let mut acc = Vec::new();
        for (p, &mean_target) in ch.target_mean.iter().enumerate() {
            let mut mean = Vec::with_capacity(ns);
            for m in 0..ns {
                let v = f[p * ns + m];
                let d = ctx.lin(&[(1.0, v)], -ch.target[p * ns + m]);
                let d2 = ctx.square(d);
                acc.push((w[m], d2));
                mean.push((w[m], v));
            }
            if augmented {
                let d = ctx.lin(&mean, -mean_target);
                let d2 = ctx.square(d);
                acc.push((1.0, d2));
            }
        }
        Ok(ctx.lin(&acc, 0.0))
    }

    fn conservation_part<A: NetworkArith>(&self, ctx: &mut A, ch: &ConservationChunk) -> Result<A::S> {
        let f = ctx.network(&ch.batch, ch.mult.clone())?;
        let k = self.cons_layout.len();
        let ns = self.quad.len();
        let w = self.quad.weights();
        let cells = ch.alpha.len();
        let [a, b] = self.problem.domain[0];
        let dx = (b - a) / cells as f64;
        let periodic = matches!(self.problem.boundary, BoundaryCondition::Periodic);
        // Periodic: d/dt∫ρ + ∫αρ − ∫G. Inflow: ε d/dt∫ρ + [⟨μf⟩] + ε∫αρ − ε∫G.
        let e = if periodic { 1.0 } else { self.problem.epsilon };
        let mut terms = Vec::with_capacity(2 * cells * ns + 2 * ns);
        for c in 0..cells {
            for m in 0..ns {
                let base = (c * ns + m) * k;
                terms.push((e * dx * w[m], f[base + 1]));
                terms.push((e * ch.alpha[c] * w[m], f[base]));
            }
        }
        if !periodic {
            for (side, sign) in [(0usize, -1.0), (1usize, 1.0)] {
                for m in 0..ns {
                    let base = ((cells + side) * ns + m) * k;
                    terms.push((sign * w[m] * self.quad.node(m)[0], f[base]));
                }
            }
        }
        let r = ctx.lin(&terms, -e * ch.source_integral);
        Ok(ctx.square(r))
    }

    /// Loss value without gradient.
    pub fn evaluate(&self, spec: &NetworkSpec, theta: &ParameterVector) -> Result<LossBreakdown> {
        let mut ctx = PlainNet { spec, theta };
        let mut parts = [0.0; 5];
        for ch in &self.interior {
            let [g, m] = self.interior_parts(&mut ctx, ch)?;
            parts[GOV] += self.scale[GOV] * g.unwrap_or(0.0);
            parts[MAC] += self.scale[MAC] * m.unwrap_or(0.0);
        }
        for ch in &self.boundary {
            parts[BND] += self.scale[BND] * self.boundary_part(&mut ctx, ch)?;
        }
        for ch in &self.initial {
            parts[INI] += self.scale[INI] * self.initial_part(&mut ctx, ch)?;
        }
        for ch in &self.conservation {
            parts[CON] += self.scale[CON] * self.conservation_part(&mut ctx, ch)?;
        }
        finite(LossBreakdown::from_parts(parts))
    }

    /// Loss value and gradient of the total with respect to θ.
    pub fn evaluate_with_gradient(
        &self,
        spec: &NetworkSpec,
        theta: &ParameterVector,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        let mut grad = vec![0.0; theta.len()];
        let mut parts = [0.0; 5];
        for ch in &self.interior {
            let mut vals = [0.0; 2];
            grad_params_into(spec, theta, &mut grad, |tp| {
                let [g, m] = self.interior_parts(tp, ch)?;
                let g = g.expect("governing part is always present");
                vals[0] = tp.val(g);
                let mut terms = vec![(self.scale[GOV], g)];
                if let Some(m) = m {
                    vals[1] = tp.val(m);
                    terms.push((self.scale[MAC], m));
                }
                Ok(tp.lin(&terms, 0.0))
            })?;
            parts[GOV] += self.scale[GOV] * vals[0];
            parts[MAC] += self.scale[MAC] * vals[1];
        }
        let groups: [(usize, usize); 3] = [
            (BND, self.boundary.len()),
            (INI, self.initial.len()),
            (CON, self.conservation.len()),
        ];
        for (part, count) in groups {
            for i in 0..count {
                let mut v = 0.0;
                grad_params_into(spec, theta, &mut grad, |tp| {
                    let s = match part {
                        BND => self.boundary_part(tp, &self.boundary[i])?,
                        INI => self.initial_part(tp, &self.initial[i])?,
                        _ => self.conservation_part(tp, &self.conservation[i])?,
                    };
                    v = tp.val(s);
                    Ok(tp.scale(s, self.scale[part]))
                })?;
                parts[part] += self.scale[part] * v;
            }
        }
        Ok((finite(LossBreakdown::from_parts(parts))?, grad))
    }
}

fn finite(b: LossBreakdown) -> Result<LossBreakdown> {
    if b.total.is_finite() {
        Ok(b)
    } else {
        Err(Error::NonFinite(format!("loss {b:?}")))
    }
}

/// Evaluates the loss of a constrained field on the given samples.
pub fn empirical_loss(
    field: &ConstrainedField<'_>,
    hyper: &LossHyper,
    samples: &SampleSets,
    quad: &AngularQuadrature,
    mode: LossMode,
) -> Result<LossBreakdown> {
    EmpiricalLoss::new(field.problem, hyper, mode, quad, samples)?.evaluate(field.spec, field.theta)
}

/// Loss and gradient of the total with respect to the flat parameters.
pub fn loss_gradient(
    theta: &ParameterVector,
    spec: &NetworkSpec,
    problem: &ProblemConfig,
    hyper: &LossHyper,
    samples: &SampleSets,
    quad: &AngularQuadrature,
    mode: LossMode,
) -> Result<(LossBreakdown, Vec<f64>)> {
    crate::problems::constrained_network(problem, theta, spec)?;
    EmpiricalLoss::new(problem, hyper, mode, quad, samples)?.evaluate_with_gradient(spec, theta)
}
