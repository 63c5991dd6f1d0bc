//! Truncated multivariate jets.
//!
//! A jet stores the partial derivatives `∂^α u` of a scalar quantity for every
//! multi-index `α` of a [`JetLayout`]. Entries are plain derivatives (not
//! Taylor coefficients), so products follow the Leibniz rule over subsets of
//! differentiation positions and compositions follow Faà di Bruno over set
//! partitions. Both rules are tabulated once per layout.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Highest total derivative order carried by any jet.
pub const MAX_ORDER: usize = 3;

/// Per-coordinate derivative exponents in normal form (trailing zeros
/// trimmed), so permuted differentiation orders compare equal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    pub fn zero() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn new(exponents: &[u8]) -> Self {
        let mut v = exponents.to_vec();
        while v.last() == Some(&0) {
            v.pop();
        }
        MultiIndex(v)
    }

    /// Builds the multi-index of differentiating once along each listed
    /// coordinate, in any order.
    pub fn from_vars(vars: &[usize]) -> Self {
        let mut v = Vec::new();
        for &i in vars {
            if v.len() <= i {
                v.resize(i + 1, 0u8);
            }
            v[i] += 1;
        }
        MultiIndex::new(&v)
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn exponent(&self, var: usize) -> u8 {
        self.0.get(var).copied().unwrap_or(0)
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    /// Coordinates with repetition, ascending.
    pub fn vars(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.order());
        for (i, &e) in self.0.iter().enumerate() {
            out.extend(std::iter::repeat_n(i, e as usize));
        }
        out
    }

    pub fn plus(&self, var: usize) -> Self {
        let mut v = self.0.clone();
        if v.len() <= var {
            v.resize(var + 1, 0);
        }
        v[var] += 1;
        MultiIndex(v)
    }

    /// Highest coordinate with a nonzero exponent, plus one.
    pub fn span(&self) -> usize {
        self.0.len()
    }

    fn divides(&self, other: &MultiIndex) -> bool {
        self.0.iter().enumerate().all(|(i, &e)| e <= other.exponent(i))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// One Faà di Bruno term: `g^(order)(z) * Π z[factors]`.
#[derive(Clone, Copy, Debug)]
struct ChainTerm {
    pub order: usize,
    pub len: usize,
    pub factors: [usize; 3],
}

/// A chain-rule term of order two or more, with repeated partitions merged:
/// `coef * g^(order)(z) * Π z[factors]` contributes to `entry`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HigherTerm {
    pub entry: usize,
    pub order: usize,
    pub coef: f64,
    pub len: usize,
    pub factors: [usize; 3],
}

/// The set of multi-indices a jet carries, closed under taking
/// sub-multi-indices, with precomputed product and chain-rule tables.
pub struct JetLayout {
    nvars: usize,
    entries: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    higher: Vec<HigherTerm>,
    leibniz: Vec<Vec<(usize, usize)>>,
    shift: Vec<Vec<Option<usize>>>,
}

impl PartialEq for JetLayout {
    fn eq(&self, other: &Self) -> bool {
        self.nvars == other.nvars && self.entries == other.entries
    }
}

impl fmt::Debug for JetLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetLayout")
            .field("nvars", &self.nvars)
            .field("entries", &self.entries)
            .finish()
    }
}

// Set partitions of {0}, {0,1}, {0,1,2}; each block is a list of positions.
const PARTITIONS_1: &[&[&[usize]]] = &[&[&[0]]];
const PARTITIONS_2: &[&[&[usize]]] = &[&[&[0], &[1]], &[&[0, 1]]];
const PARTITIONS_3: &[&[&[usize]]] = &[
    &[&[0], &[1], &[2]],
    &[&[0, 1], &[2]],
    &[&[0, 2], &[1]],
    &[&[1, 2], &[0]],
    &[&[0, 1, 2]],
];

impl JetLayout {
    /// Smallest downward-closed layout over `nvars` coordinates containing
    /// every requested multi-index (the zero index is always present).
    pub fn new<I>(nvars: usize, requested: I) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = MultiIndex>,
    {
        let mut set: Vec<MultiIndex> = vec![MultiIndex::zero()];
        for alpha in requested {
            if alpha.order() > MAX_ORDER {
                return Err(Error::OrderTooHigh(alpha.order()));
            }
            if alpha.span() > nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    got: alpha.span(),
                });
            }
            let vars = alpha.vars();
            for mask in 0..(1usize << vars.len()) {
                let sub: Vec<usize> = (0..vars.len())
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| vars[b])
                    .collect();
                let beta = MultiIndex::from_vars(&sub);
                debug_assert!(beta.divides(&alpha));
                if !set.contains(&beta) {
                    set.push(beta);
                }
            }
        }
        set.sort_by(|a, b| {
            let pad = |m: &MultiIndex| -> Vec<u8> { (0..nvars).map(|i| m.exponent(i)).collect() };
            a.order()
                .cmp(&b.order())
                .then_with(|| pad(b).cmp(&pad(a)))
        });
        Ok(Arc::new(Self::build(nvars, set)))
    }

    /// Every multi-index over `nvars` coordinates up to total order `order`.
    pub fn full(nvars: usize, order: usize) -> Result<Arc<Self>> {
        if order > MAX_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        let mut req = Vec::new();
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        while let Some(v) = stack.pop() {
            req.push(MultiIndex::from_vars(&v));
            if v.len() < order {
                let start = v.last().copied().unwrap_or(0);
                for i in start..nvars {
                    let mut w = v.clone();
                    w.push(i);
                    stack.push(w);
                }
            }
        }
        Self::new(nvars, req)
    }

    fn build(nvars: usize, entries: Vec<MultiIndex>) -> Self {
        let lookup: HashMap<MultiIndex, usize> = entries
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let idx = |vars: &[usize]| lookup[&MultiIndex::from_vars(vars)];

        let mut chain = Vec::with_capacity(entries.len());
        let mut leibniz = Vec::with_capacity(entries.len());
        let mut shift = Vec::with_capacity(entries.len());
        for alpha in &entries {
            let vars = alpha.vars();
            let n = vars.len();
            let parts: &[&[&[usize]]] = match n {
                0 => &[],
                1 => PARTITIONS_1,
                2 => PARTITIONS_2,
                _ => PARTITIONS_3,
            };
            let mut terms = Vec::new();
            if n == 0 {
                terms.push(ChainTerm {
                    order: 0,
                    len: 0,
                    factors: [0; 3],
                });
            }
            for part in parts {
                let mut factors = [0usize; 3];
                for (k, block) in part.iter().enumerate() {
                    let sub: Vec<usize> = block.iter().map(|&p| vars[p]).collect();
                    factors[k] = idx(&sub);
                }
                terms.push(ChainTerm {
                    order: part.len(),
                    len: part.len(),
                    factors,
                });
            }
            chain.push(terms);

            let mut pairs = Vec::with_capacity(1 << n);
            for mask in 0..(1usize << n) {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (p, &v) in vars.iter().enumerate() {
                    if mask & (1 << p) != 0 {
                        a.push(v);
                    } else {
                        b.push(v);
                    }
                }
                pairs.push((idx(&a), idx(&b)));
            }
            leibniz.push(pairs);

            shift.push(
                (0..nvars)
                    .map(|v| lookup.get(&alpha.plus(v)).copied())
                    .collect(),
            );
        }
        let mut higher: Vec<HigherTerm> = Vec::new();
        for (e, terms) in chain.iter().enumerate() {
            for t in terms.iter().filter(|t| t.order >= 2) {
                let mut f = t.factors;
                f[..t.len].sort_unstable();
                match higher
                    .iter_mut()
                    .find(|h| h.entry == e && h.order == t.order && h.factors[..h.len] == f[..t.len])
                {
                    Some(h) => h.coef += 1.0,
                    None => higher.push(HigherTerm {
                        entry: e,
                        order: t.order,
                        coef: 1.0,
                        len: t.len,
                        factors: f,
                    }),
                }
            }
        }
        JetLayout {
            nvars,
            entries,
            lookup,
            higher,
            leibniz,
            shift,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of entries `K`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Entry for the first derivative along `var`.
    pub fn first(&self, var: usize) -> Option<usize> {
        self.index_of(&MultiIndex::from_vars(&[var]))
    }

    /// Entry holding `∂_var ∂^α` given the entry of `α`.
    pub fn shifted(&self, entry: usize, var: usize) -> Option<usize> {
        self.shift[entry].get(var).copied().flatten()
    }

    pub fn max_order(&self) -> usize {
        self.entries.last().map(|m| m.order()).unwrap_or(0)
    }

    /// Merged chain-rule terms of order two and three. Together with
    /// `g' z[e]` for every `e > 0` and `g` at entry 0 they give `g ∘ z`.
    pub(crate) fn higher_terms(&self) -> &[HigherTerm] {
        &self.higher
    }

    pub(crate) fn leibniz_pairs(&self, entry: usize) -> &[(usize, usize)] {
        &self.leibniz[entry]
    }
}

/// Applies a univariate function to a jet: `out = g ∘ z`, where
/// `g[k]` holds the k-th derivative of g at `z[0]`.
pub fn compose(layout: &JetLayout, z: &[f64], g: &[f64; 4], out: &mut [f64]) {
    let k = layout.len();
    let (z, out) = (&z[..k], &mut out[..k]);
    out[0] = g[0];
    for e in 1..k {
        out[e] = g[1] * z[e];
    }
    for h in layout.higher_terms() {
        let f = &h.factors;
        let p = match h.len {
            2 => z[f[0]] * z[f[1]],
            _ => z[f[0]] * z[f[1]] * z[f[2]],
        };
        out[h.entry] += h.coef * g[h.order] * p;
    }
}

/// [`compose`] for a row of `n` point-major jets, with the derivatives of
/// `g` at each point in `d`. Loops run term-major so the inner loop is over
/// points.
pub(crate) fn compose_row(layout: &JetLayout, z: &[f64], d: &[[f64; 5]], out: &mut [f64]) {
    let k = layout.len();
    let n = d.len();
    let (z, out) = (&z[..n * k], &mut out[..n * k]);
    for ((o, zp), dp) in out.chunks_exact_mut(k).zip(z.chunks_exact(k)).zip(d) {
        o[0] = dp[0];
        for e in 1..k {
            o[e] = dp[1] * zp[e];
        }
    }
    for h in layout.higher_terms() {
        let [f0, f1, f2] = h.factors;
        let (e, ord, c) = (h.entry, h.order, h.coef);
        if h.len == 2 {
            for ((o, zp), dp) in out.chunks_exact_mut(k).zip(z.chunks_exact(k)).zip(d) {
                o[e] += c * dp[ord] * (zp[f0] * zp[f1]);
            }
        } else {
            for ((o, zp), dp) in out.chunks_exact_mut(k).zip(z.chunks_exact(k)).zip(d) {
                o[e] += c * dp[ord] * (zp[f0] * zp[f1] * zp[f2]);
            }
        }
    }
}

/// Leibniz product of two jets sharing a layout.
pub fn product(layout: &JetLayout, u: &[f64], v: &[f64], out: &mut [f64]) {
    for (e, slot) in out.iter_mut().enumerate().take(layout.len()) {
        *slot = layout
            .leibniz_pairs(e)
            .iter()
            .map(|&(a, b)| u[a] * v[b])
            .sum();
    }
}

/// Owned jet with value semantics, used for analytic coefficient fields and
/// test fixtures.
#[derive(Clone, Debug)]
pub struct Jet {
    layout: Arc<JetLayout>,
    values: Vec<f64>,
}

impl Jet {
    pub fn constant(layout: &Arc<JetLayout>, value: f64) -> Self {
        let mut values = vec![0.0; layout.len()];
        values[0] = value;
        Jet {
            layout: layout.clone(),
            values,
        }
    }

    /// The coordinate function `var` evaluated at `value`.
    pub fn variable(layout: &Arc<JetLayout>, var: usize, value: f64) -> Self {
        let mut j = Self::constant(layout, value);
        if let Some(e) = layout.first(var) {
            j.values[e] = 1.0;
        }
        j
    }

    /// A function of the single coordinate `var`; `derivs[k]` is its k-th derivative.
    pub fn univariate(layout: &Arc<JetLayout>, var: usize, derivs: [f64; 4]) -> Self {
        let mut j = Self::constant(layout, derivs[0]);
        for (e, alpha) in layout.entries().iter().enumerate().skip(1) {
            if alpha.order() == alpha.exponent(var) as usize {
                j.values[e] = derivs[alpha.order()];
            }
        }
        j
    }

    pub fn from_values(layout: &Arc<JetLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(Jet {
            layout: layout.clone(),
            values,
        })
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self) -> f64 {
        self.values[0]
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.layout.index_of(alpha).map(|e| self.values[e])
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn offset(&self, c: f64) -> Jet {
        let mut j = self.clone();
        j.values[0] += c;
        j
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let mut out = vec![0.0; self.layout.len()];
        product(&self.layout, &self.values, &other.values, &mut out);
        Jet {
            layout: self.layout.clone(),
            values: out,
        }
    }

    /// `g ∘ self` given the derivatives of g at `self.value()`.
    pub fn compose(&self, g: [f64; 4]) -> Jet {
        let mut out = vec![0.0; self.layout.len()];
        compose(&self.layout, &self.values, &g, &mut out);
        Jet {
            layout: self.layout.clone(),
            values: out,
        }
    }

    pub fn recip(&self) -> Jet {
        let u = self.value();
        let r = 1.0 / u;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s])
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.layout, &other.layout) || self.layout.len() == other.layout.len());
        Jet {
            layout: self.layout.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}
