//! Scalar reverse-mode tape whose leaves are network output jets.
//!
//! Residual code is written once against [`Arith`]; running it with [`Plain`]
//! or [`PlainNet`] evaluates numbers, running it with a [`Tape`] records the
//! computation so [`grad_params`] can pull the adjoint back through the
//! network.

use std::sync::Arc;

use super::jet::{self, JetLayout};
use super::mlp::{self, ForwardCache, JetBatch, NetworkSpec, ParameterVector};
use crate::error::{Error, Result};

/// Minimal arithmetic over scalars that may or may not be recorded.
pub trait Arith {
    type S: Copy;

    fn cst(&mut self, c: f64) -> Self::S;
    fn val(&self, s: Self::S) -> f64;
    /// `c + Σ wᵢ sᵢ`
    fn lin(&mut self, terms: &[(f64, Self::S)], c: f64) -> Self::S;
    fn mul(&mut self, a: Self::S, b: Self::S) -> Self::S;

    fn add(&mut self, a: Self::S, b: Self::S) -> Self::S {
        self.lin(&[(1.0, a), (1.0, b)], 0.0)
    }

    fn sub(&mut self, a: Self::S, b: Self::S) -> Self::S {
        self.lin(&[(1.0, a), (-1.0, b)], 0.0)
    }

    fn scale(&mut self, a: Self::S, c: f64) -> Self::S {
        self.lin(&[(c, a)], 0.0)
    }

    fn square(&mut self, a: Self::S) -> Self::S {
        self.mul(a, a)
    }
}

/// Arithmetic that can also evaluate the network on a batch of jets.
pub trait NetworkArith: Arith {
    /// Output jets of the network for every point of `batch`, point-major,
    /// optionally multiplied (Leibniz rule) by a per-point multiplier jet.
    fn network(&mut self, batch: &JetBatch, multiplier: Option<Vec<f64>>) -> Result<Vec<Self::S>>;
}

/// Plain `f64` arithmetic.
#[derive(Clone, Copy, Debug, Default)]
pub struct Plain;

impl Arith for Plain {
    type S = f64;

    #[inline]
    fn cst(&mut self, c: f64) -> f64 {
        c
    }

    #[inline]
    fn val(&self, s: f64) -> f64 {
        s
    }

    #[inline]
    fn lin(&mut self, terms: &[(f64, f64)], c: f64) -> f64 {
        terms.iter().fold(c, |acc, &(w, s)| acc + w * s)
    }

    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
}

/// Plain arithmetic bound to a network, for evaluating losses without
/// gradients.
#[derive(Clone, Copy, Debug)]
pub struct PlainNet<'a> {
    pub spec: &'a NetworkSpec,
    pub theta: &'a ParameterVector,
}

impl Arith for PlainNet<'_> {
    type S = f64;

    #[inline]
    fn cst(&mut self, c: f64) -> f64 {
        c
    }

    #[inline]
    fn val(&self, s: f64) -> f64 {
        s
    }

    #[inline]
    fn lin(&mut self, terms: &[(f64, f64)], c: f64) -> f64 {
        Plain.lin(terms, c)
    }

    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
}

impl NetworkArith for PlainNet<'_> {
    fn network(&mut self, batch: &JetBatch, multiplier: Option<Vec<f64>>) -> Result<Vec<f64>> {
        let y = mlp::forward_batch(self.theta, self.spec, batch)?;
        Ok(match multiplier {
            Some(m) => apply_multiplier(batch.layout(), &m, &y),
            None => y,
        })
    }
}

fn apply_multiplier(layout: &JetLayout, m: &[f64], y: &[f64]) -> Vec<f64> {
    let k = layout.len();
    let mut out = vec![0.0; y.len()];
    for ((o, mp), yp) in out.chunks_mut(k).zip(m.chunks(k)).zip(y.chunks(k)) {
        jet::product(layout, mp, yp, o);
    }
    out
}

/// Handle to a recorded scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

struct Block {
    layout: Arc<JetLayout>,
    cache: ForwardCache,
    first: usize,
    count: usize,
    multiplier: Option<Vec<f64>>,
}

/// Recording context for one gradient evaluation.
pub struct Tape<'a> {
    spec: &'a NetworkSpec,
    theta: &'a ParameterVector,
    values: Vec<f64>,
    starts: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    blocks: Vec<Block>,
}

impl<'a> Tape<'a> {
    pub fn new(spec: &'a NetworkSpec, theta: &'a ParameterVector) -> Self {
        Tape {
            spec,
            theta,
            values: Vec::new(),
            starts: vec![0],
            parents: Vec::new(),
            partials: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    fn push(&mut self, value: f64) -> Var {
        self.values.push(value);
        self.starts.push(self.parents.len() as u32);
        Var(self.values.len() as u32 - 1)
    }

    /// Adjoints of every node for the output `out`.
    fn adjoints(&self, out: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        adj[out.0 as usize] = 1.0;
        for i in (0..=out.0 as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (self.starts[i] as usize, self.starts[i + 1] as usize);
            for j in s..e {
                adj[self.parents[j] as usize] += a * self.partials[j];
            }
        }
        adj
    }

    /// Accumulates `∂out/∂θ` into `grad`.
    fn backward(&self, out: Var, grad: &mut [f64]) {
        let adj = self.adjoints(out);
        for b in &self.blocks {
            let mut yadj = adj[b.first..b.first + b.count].to_vec();
            if let Some(m) = &b.multiplier {
                let layout = &*b.layout;
                let k = layout.len();
                let fadj = yadj.clone();
                yadj.iter_mut().for_each(|v| *v = 0.0);
                for ((ya, fa), mp) in yadj.chunks_mut(k).zip(fadj.chunks(k)).zip(m.chunks(k)) {
                    for (e, &fe) in fa.iter().enumerate() {
                        if fe == 0.0 {
                            continue;
                        }
                        for &(a, bb) in layout.leibniz_pairs(e) {
                            ya[bb] += fe * mp[a];
                        }
                    }
                }
            }
            if yadj.iter().all(|&v| v == 0.0) {
                continue;
            }
            mlp::backward_batch(self.theta, self.spec, &b.layout, &b.cache, &yadj, grad);
        }
    }
}

impl Arith for Tape<'_> {
    type S = Var;

    fn cst(&mut self, c: f64) -> Var {
        self.push(c)
    }

    #[inline]
    fn val(&self, s: Var) -> f64 {
        self.values[s.0 as usize]
    }

    fn lin(&mut self, terms: &[(f64, Var)], c: f64) -> Var {
        let mut v = c;
        for &(w, s) in terms {
            if w != 0.0 {
                v += w * self.values[s.0 as usize];
                self.parents.push(s.0);
                self.partials.push(w);
            }
        }
        self.push(v)
    }

    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        self.parents.push(a.0);
        self.partials.push(vb);
        self.parents.push(b.0);
        self.partials.push(va);
        self.push(va * vb)
    }
}

impl NetworkArith for Tape<'_> {
    fn network(&mut self, batch: &JetBatch, multiplier: Option<Vec<f64>>) -> Result<Vec<Var>> {
        let (y, cache) = mlp::forward_batch_cached(self.theta, self.spec, batch)?;
        let out = match &multiplier {
            Some(m) => apply_multiplier(batch.layout(), m, &y),
            None => y,
        };
        let first = self.values.len();
        let vars: Vec<Var> = out.iter().map(|&v| self.push(v)).collect();
        self.blocks.push(Block {
            layout: batch.layout().clone(),
            cache,
            first,
            count: out.len(),
            multiplier,
        });
        Ok(vars)
    }
}

/// Value of the recorded scalar built by `f` and its exact gradient with
/// respect to the flat parameter vector.
pub fn grad_params<F>(spec: &NetworkSpec, theta: &ParameterVector, f: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape<'_>) -> Result<Var>,
{
    let mut grad = vec![0.0; theta.len()];
    let v = grad_params_into(spec, theta, &mut grad, f)?;
    Ok((v, grad))
}

/// Like [`grad_params`] but accumulates into an existing buffer.
pub fn grad_params_into<F>(
    spec: &NetworkSpec,
    theta: &ParameterVector,
    grad: &mut [f64],
    f: F,
) -> Result<f64>
where
    F: FnOnce(&mut Tape<'_>) -> Result<Var>,
{
    if grad.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    let mut tape = Tape::new(spec, theta);
    let out = f(&mut tape)?;
    let v = tape.val(out);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss value {v}")));
    }
    tape.backward(out, grad);
    Ok(v)
}
