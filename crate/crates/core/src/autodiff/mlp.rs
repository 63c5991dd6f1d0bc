//! Fully connected tanh network with jet-valued forward propagation.
//!
//! Activations of a batch are stored as `width × (points · K)` matrices, where
//! the K columns of a point hold the jet entries of one neuron. Affine layers
//! act on all jet entries at once (the bias only touches the value entry), and
//! activations are applied entry-wise through [`jet::compose`]. The reverse
//! pass walks the same layers backwards and accumulates the parameter
//! gradient, which is how derivatives of input derivatives with respect to
//! the parameters are obtained.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::jet::{self, JetLayout, MultiIndex};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Tanh,
    /// Linear hidden units; only useful for building exact test fields.
    Identity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// `u ↦ e^(−u)`, strictly positive.
    #[default]
    ExpNegative,
    Identity,
}

impl HiddenActivation {
    /// Value and first four derivatives at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 5] {
        match self {
            HiddenActivation::Tanh => {
                let a = z.tanh();
                let d1 = 1.0 - a * a;
                let d2 = -2.0 * a * d1;
                let d3 = -2.0 * d1 * d1 - 2.0 * a * d2;
                let d4 = -6.0 * d1 * d2 - 2.0 * a * d3;
                [a, d1, d2, d3, d4]
            }
            HiddenActivation::Identity => [z, 1.0, 0.0, 0.0, 0.0],
        }
    }
}

impl OutputActivation {
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 5] {
        match self {
            OutputActivation::ExpNegative => {
                let e = (-z).exp();
                [e, -e, e, -e, e]
            }
            OutputActivation::Identity => [z, 1.0, 0.0, 0.0, 0.0],
        }
    }
}

/// Layer widths `[m₀, …, m_L]` and activations of a feedforward network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
    #[serde(default)]
    pub output_activation: OutputActivation,
}

impl NetworkSpec {
    pub fn new(layer_widths: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        let spec = NetworkSpec {
            layer_widths,
            hidden_activation: HiddenActivation::Tanh,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 3 {
            return Err(Error::InvalidSpec(format!(
                "need at least one hidden layer (L >= 2), got widths {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "layer widths must be positive, got {:?}",
                self.layer_widths
            )));
        }
        Ok(())
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// `P = Σ_l m_{l+1}(m_l + 1)`.
    pub fn num_params(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.depth() + 1);
        let mut acc = 0;
        offs.push(0);
        for w in self.layer_widths.windows(2) {
            acc += w[1] * (w[0] + 1);
            offs.push(acc);
        }
        offs
    }
}

/// Flat parameter vector θ. Layer `l` occupies one contiguous block: its
/// row-major `m_{l+1} × m_l` weight matrix followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        ParameterVector {
            widths: spec.layer_widths.clone(),
            offsets: spec.layer_offsets(),
            data: vec![0.0; spec.num_params()],
        }
    }

    pub fn from_flat(spec: &NetworkSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                got: data.len(),
            });
        }
        Ok(ParameterVector {
            widths: spec.layer_widths.clone(),
            offsets: spec.layer_offsets(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        self.widths == spec.layer_widths
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (rows, cols) = (self.widths[layer + 1], self.widths[layer]);
        let start = self.offsets[layer];
        ArrayView2::from_shape((rows, cols), &self.data[start..start + rows * cols]).unwrap()
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (rows, cols) = (self.widths[layer + 1], self.widths[layer]);
        let start = self.offsets[layer] + rows * cols;
        ArrayView1::from(&self.data[start..start + rows])
    }

    pub fn weight_mut(&mut self, layer: usize, row: usize, col: usize) -> &mut f64 {
        let cols = self.widths[layer];
        &mut self.data[self.offsets[layer] + row * cols + col]
    }

    pub fn bias_mut(&mut self, layer: usize, row: usize) -> &mut f64 {
        let (rows, cols) = (self.widths[layer + 1], self.widths[layer]);
        &mut self.data[self.offsets[layer] + rows * cols + row]
    }
}

/// Zero-mean normal weights with standard deviation `√(2/(m_l + m_{l+1}))`
/// and zero biases, reproducible from `seed`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<ParameterVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = ParameterVector::zeros(spec);
    for l in 0..spec.depth() {
        let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive standard deviation");
        for r in 0..fan_out {
            for c in 0..fan_in {
                *theta.weight_mut(l, r, c) = normal.sample(&mut rng);
            }
        }
    }
    Ok(theta)
}

fn check_params(theta: &ParameterVector, spec: &NetworkSpec) -> Result<()> {
    if !theta.matches(spec) {
        return Err(Error::InvalidSpec(format!(
            "parameter vector built for widths {:?}, spec has {:?}",
            theta.widths, spec.layer_widths
        )));
    }
    Ok(())
}

/// Plain evaluation of the network at one input. Shares the batched code
/// path so it agrees bitwise with the value entry of every jet.
pub fn forward(theta: &ParameterVector, spec: &NetworkSpec, x: &[f64]) -> Result<f64> {
    check_params(theta, spec)?;
    if x.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            got: x.len(),
        });
    }
    let layout = JetLayout::new(x.len(), [])?;
    let mut batch = JetBatch::new(layout, x.len(), 1);
    for (i, &xi) in x.iter().enumerate() {
        batch.set_coordinate(0, i, xi, None);
    }
    Ok(forward_batch(theta, spec, &batch)?[0])
}

/// Partial derivatives of the network output at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct JetTable {
    layout: Arc<JetLayout>,
    values: Vec<f64>,
    point: Vec<f64>,
}

impl JetTable {
    pub(crate) fn new(layout: Arc<JetLayout>, values: Vec<f64>, point: Vec<f64>) -> Self {
        JetTable {
            layout,
            values,
            point,
        }
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.layout.index_of(alpha).map(|e| self.values[e])
    }

    pub fn value(&self) -> f64 {
        self.values[0]
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.layout.entries().iter().zip(self.values.iter().copied())
    }
}

/// Exact partial derivatives of the network output with respect to its
/// inputs for every requested multi-index (and everything below it).
pub fn forward_jet(
    theta: &ParameterVector,
    spec: &NetworkSpec,
    x: &[f64],
    requested: &[MultiIndex],
) -> Result<JetTable> {
    let m0 = spec.input_dim();
    if x.len() != m0 {
        return Err(Error::DimensionMismatch {
            expected: m0,
            got: x.len(),
        });
    }
    let layout = JetLayout::new(m0, requested.iter().cloned())?;
    let mut batch = JetBatch::new(layout.clone(), m0, 1);
    for (i, &xi) in x.iter().enumerate() {
        batch.set_coordinate(0, i, xi, Some(i));
    }
    let values = forward_batch(theta, spec, &batch)?;
    Ok(JetTable {
        layout,
        values,
        point: x.to_vec(),
    })
}

/// Input-feature jets for a batch of points: an `m₀ × (n · K)` matrix.
#[derive(Clone, Debug)]
pub struct JetBatch {
    layout: Arc<JetLayout>,
    points: usize,
    features: Array2<f64>,
}

impl JetBatch {
    pub fn new(layout: Arc<JetLayout>, input_dim: usize, points: usize) -> Self {
        let k = layout.len();
        JetBatch {
            layout,
            points,
            features: Array2::zeros((input_dim, points * k)),
        }
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn input_dim(&self) -> usize {
        self.features.nrows()
    }

    /// Sets feature `feature` of `point` to a raw coordinate; `var` names the
    /// jet variable it is differentiated as, if any.
    pub fn set_coordinate(&mut self, point: usize, feature: usize, value: f64, var: Option<usize>) {
        let k = self.layout.len();
        let base = point * k;
        self.features.slice_mut(s![feature, base..base + k]).fill(0.0);
        self.features[[feature, base]] = value;
        if let Some(e) = var.and_then(|v| self.layout.first(v)) {
            self.features[[feature, base + e]] = 1.0;
        }
    }

    /// Sets feature `feature` of `point` to an arbitrary jet.
    pub fn set_feature(&mut self, point: usize, feature: usize, jet: &[f64]) {
        let k = self.layout.len();
        let base = point * k;
        for (e, &v) in jet.iter().enumerate().take(k) {
            self.features[[feature, base + e]] = v;
        }
    }
}

/// Forward-pass intermediates needed by [`backward_batch`].
pub(crate) struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    derivs: Vec<Vec<[f64; 5]>>,
}

/// Output jets for every point of the batch, point-major (`n · K` values).
pub fn forward_batch(theta: &ParameterVector, spec: &NetworkSpec, batch: &JetBatch) -> Result<Vec<f64>> {
    forward_impl(theta, spec, batch, false).map(|(out, _)| out)
}

pub(crate) fn forward_batch_cached(
    theta: &ParameterVector,
    spec: &NetworkSpec,
    batch: &JetBatch,
) -> Result<(Vec<f64>, ForwardCache)> {
    forward_impl(theta, spec, batch, true).map(|(out, c)| (out, c.expect("cache requested")))
}

fn forward_impl(
    theta: &ParameterVector,
    spec: &NetworkSpec,
    batch: &JetBatch,
    keep: bool,
) -> Result<(Vec<f64>, Option<ForwardCache>)> {
    check_params(theta, spec)?;
    if batch.input_dim() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            got: batch.input_dim(),
        });
    }
    let layout = &*batch.layout;
    let k = layout.len();
    let n = batch.points;
    let mut cache = keep.then(|| ForwardCache {
        inputs: Vec::with_capacity(spec.depth()),
        pre: Vec::with_capacity(spec.depth()),
        derivs: Vec::with_capacity(spec.depth()),
    });

    let mut a = batch.features.clone();
    for l in 0..spec.depth() {
        let w = theta.weights(l);
        let b = theta.bias(l);
        let mut z = Array2::<f64>::zeros((w.nrows(), n * k));
        general_mat_mul(1.0, &w, &a, 0.0, &mut z);
        let last = l + 1 == spec.depth();
        let mut h = Array2::<f64>::zeros(z.raw_dim());
        let mut dv = Vec::with_capacity(w.nrows() * n);
        for i in 0..w.nrows() {
            let mut zrow = z.row_mut(i);
            let zs = zrow.as_slice_mut().expect("standard layout");
            let mut hrow = h.row_mut(i);
            let hs = hrow.as_slice_mut().expect("standard layout");
            let start = dv.len();
            for zp in zs.chunks_exact_mut(k) {
                zp[0] += b[i];
                dv.push(if last {
                    spec.output_activation.derivatives(zp[0])
                } else {
                    spec.hidden_activation.derivatives(zp[0])
                });
            }
            jet::compose_row(layout, zs, &dv[start..], hs);
            if !keep {
                dv.clear();
            }
        }
        if let Some(c) = cache.as_mut() {
            c.inputs.push(a);
            c.pre.push(z);
            c.derivs.push(dv);
        }
        a = h;
    }
    let out = a.into_raw_vec_and_offset().0;
    Ok((out, cache))
}

/// Accumulates `∂(Σ adjᵢ·outᵢ)/∂θ` into `grad`.
pub(crate) fn backward_batch(
    theta: &ParameterVector,
    spec: &NetworkSpec,
    layout: &JetLayout,
    cache: &ForwardCache,
    out_adjoint: &[f64],
    grad: &mut [f64],
) {
    let k = layout.len();
    let offsets = spec.layer_offsets();
    let mut dh = Array2::from_shape_vec((1, out_adjoint.len()), out_adjoint.to_vec())
        .expect("output layer has width one");
    for l in (0..spec.depth()).rev() {
        let z = &cache.pre[l];
        let derivs = &cache.derivs[l];
        let rows = z.nrows();
        let n = z.ncols() / k;
        let mut dz = Array2::<f64>::zeros(z.raw_dim());
        let (wlen, cols) = (rows * spec.layer_widths[l], spec.layer_widths[l]);
        let bias_off = offsets[l] + wlen;
        // gbar[p][o]: adjoint of the o-th derivative of the activation.
        let mut gbar = vec![[0.0f64; 4]; n];
        for i in 0..rows {
            let zrow = z.row(i);
            let zs = zrow.as_slice().expect("standard layout");
            let dhrow = dh.row(i);
            let dhs = dhrow.as_slice().expect("standard layout");
            let mut dzrow = dz.row_mut(i);
            let dzs = dzrow.as_slice_mut().expect("standard layout");
            let d = &derivs[i * n..(i + 1) * n];
            let (zs, dhs) = (&zs[..n * k], &dhs[..n * k]);
            let dzs = &mut dzs[..n * k];
            gbar.fill([0.0; 4]);
            for (((g, hb), zp), (dzp, dp)) in gbar
                .iter_mut()
                .zip(dhs.chunks_exact(k))
                .zip(zs.chunks_exact(k))
                .zip(dzs.chunks_exact_mut(k).zip(d))
            {
                g[0] = hb[0];
                for e in 1..k {
                    g[1] += hb[e] * zp[e];
                    dzp[e] += hb[e] * dp[1];
                }
            }
            for h in layout.higher_terms() {
                let [f0, f1, f2] = h.factors;
                let (e, ord, c) = (h.entry, h.order, h.coef);
                let it = gbar
                    .iter_mut()
                    .zip(dhs.chunks_exact(k))
                    .zip(zs.chunks_exact(k))
                    .zip(dzs.chunks_exact_mut(k).zip(d));
                if h.len == 2 {
                    for (((g, hb), zp), (dzp, dp)) in it {
                        let s = hb[e] * c;
                        let ds = s * dp[ord];
                        let (a, b) = (zp[f0], zp[f1]);
                        g[ord] += s * a * b;
                        dzp[f0] += ds * b;
                        dzp[f1] += ds * a;
                    }
                } else {
                    for (((g, hb), zp), (dzp, dp)) in it {
                        let s = hb[e] * c;
                        let ds = s * dp[ord];
                        let (a, b, cc) = (zp[f0], zp[f1], zp[f2]);
                        g[ord] += s * a * b * cc;
                        dzp[f0] += ds * b * cc;
                        dzp[f1] += ds * a * cc;
                        dzp[f2] += ds * a * b;
                    }
                }
            }
            let mut db = 0.0;
            for ((g, dzp), dp) in gbar.iter().zip(dzs.chunks_exact_mut(k)).zip(d) {
                dzp[0] += g[0] * dp[1] + g[1] * dp[2] + g[2] * dp[3] + g[3] * dp[4];
                db += dzp[0];
            }
            grad[bias_off + i] += db;
        }
        // dW = dZ · Aᵀ
        {
            let gw = &mut grad[offsets[l]..offsets[l] + wlen];
            let mut gwv = ndarray::ArrayViewMut2::from_shape((rows, cols), gw).unwrap();
            general_mat_mul(1.0, &dz, &cache.inputs[l].t(), 1.0, &mut gwv);
        }
        if l > 0 {
            let w = theta.weights(l);
            let mut da = Array2::<f64>::zeros((cols, dz.ncols()));
            general_mat_mul(1.0, &w.t(), &dz, 0.0, &mut da);
            dh = da;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(w: &[usize]) -> NetworkSpec {
        NetworkSpec::new(w.to_vec(), OutputActivation::ExpNegative).unwrap()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(spec(&[3, 4, 1]).num_params(), 21);
        assert_eq!(spec(&[3, 24, 24, 24, 1]).num_params(), 96 + 600 + 600 + 25);
    }

    #[test]
    fn invalid_specs() {
        assert!(NetworkSpec::new(vec![3, 1], OutputActivation::Identity).is_err());
        assert!(NetworkSpec::new(vec![3, 0, 1], OutputActivation::Identity).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let s = spec(&[3, 4, 1]);
        let a = init_network(&s, 7).unwrap();
        let b = init_network(&s, 7).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(a.len(), 21);
        for l in 0..s.depth() {
            assert!(a.bias(l).iter().all(|&v| v == 0.0));
        }
        assert_ne!(a, init_network(&s, 8).unwrap());
    }

    #[test]
    fn zero_network_outputs() {
        let s = spec(&[3, 5, 1]);
        let z = ParameterVector::zeros(&s);
        assert_eq!(forward(&z, &s, &[0.3, -1.0, 2.0]).unwrap(), 1.0);
        let si = NetworkSpec::new(vec![3, 5, 1], OutputActivation::Identity).unwrap();
        assert_eq!(forward(&ParameterVector::zeros(&si), &si, &[0.3, -1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let s = spec(&[3, 5, 1]);
        let z = ParameterVector::zeros(&s);
        assert!(matches!(
            forward(&z, &s, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn jet_order_zero_matches_forward_exactly() {
        let s = spec(&[3, 8, 8, 1]);
        let th = init_network(&s, 3).unwrap();
        let x = [0.2, -0.4, 0.9];
        let req = [MultiIndex::from_vars(&[0, 1, 2])];
        let jt = forward_jet(&th, &s, &x, &req).unwrap();
        assert_eq!(jt.value(), forward(&th, &s, &x).unwrap());
        assert_eq!(
            jt.get(&MultiIndex::from_vars(&[0, 1])),
            jt.get(&MultiIndex::from_vars(&[1, 0]))
        );
    }

    #[test]
    fn order_four_rejected() {
        let s = spec(&[2, 3, 1]);
        let th = ParameterVector::zeros(&s);
        let err = forward_jet(&th, &s, &[0.0, 0.0], &[MultiIndex::new(&[2, 2])]).unwrap_err();
        assert!(matches!(err, Error::OrderTooHigh(4)));
    }
}
