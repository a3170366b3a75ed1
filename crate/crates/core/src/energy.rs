//! Discrete energy
//!
//! ```text
//! J_beta(u) = 1/2 sum_i sum_edges (u_i(p) - u_i(q))^2
//!           + beta/2 * I[ sum_{|J|=k} gamma_J prod_{j in J} u_j^2 ]
//!           - sum_i I[ F_i(u_i) ]
//! ```
//!
//! with `I` the node quadrature of [`crate::geometry::integrate`]. The
//! gradient returned by [`energy_gradient`] is the exact derivative of this
//! function with respect to interior node values.

use serde::Serialize;

use crate::geometry::{node_weight, Domain};
use crate::model::{InteractionSpec, ProblemSpec};
use crate::{Error, Result};

/// `d` scalar grid fields.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiField {
    fields: Vec<Vec<f64>>,
}

impl MultiField {
    pub fn zeros(d: usize, n: usize) -> Self {
        MultiField {
            fields: vec![vec![0.0; n]; d],
        }
    }

    pub fn from_fields(fields: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = fields.first() {
            if fields.iter().any(|f| f.len() != first.len()) {
                return Err(Error::DimensionMismatch("components have different lengths".into()));
            }
        }
        Ok(MultiField { fields })
    }

    pub fn d(&self) -> usize {
        self.fields.len()
    }

    pub fn len(&self) -> usize {
        self.fields.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.fields[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.fields[i]
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<Vec<f64>> {
        self.fields
    }

    /// Values of all components at node `p`.
    pub fn at(&self, p: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f[p]).collect()
    }

    pub fn dot(&self, other: &MultiField) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &MultiField) -> MultiField {
        MultiField {
            fields: self
                .fields
                .iter()
                .zip(&other.fields)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * y).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> MultiField {
        MultiField {
            fields: self.fields.iter().map(|f| f.iter().map(|v| t * v).collect()).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.fields.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `sum_i 1/2 int |grad u_i|^2`
    pub dirichlet: f64,
    /// `beta/2 int sum_J gamma_J u_J^2`
    pub interaction: f64,
    /// `- sum_i int F_i(u_i)` (signed contribution to the total)
    pub reaction: f64,
    pub total: f64,
}

pub(crate) fn check_field(dom: &Domain, d: usize, u: &MultiField) -> Result<()> {
    if u.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "field has {} components, problem has {d}",
            u.d()
        )));
    }
    if u.len() != dom.len() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} nodes, domain has {}",
            u.len(),
            dom.len()
        )));
    }
    Ok(())
}

fn check_nonnegative(dom: &Domain, u: &MultiField) -> Result<()> {
    for (c, f) in u.fields().iter().enumerate() {
        for (p, &v) in f.iter().enumerate() {
            if dom.is_active(p) && !(v >= 0.0) {
                return Err(Error::NegativeValue {
                    component: c,
                    node: p,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Node-local products of squares over every component subset.
pub(crate) struct SubsetProducts {
    d: usize,
    table: Vec<f64>,
}

impl SubsetProducts {
    pub fn new(d: usize) -> Self {
        SubsetProducts {
            d,
            table: if d <= 8 { vec![1.0; 1 << d] } else { Vec::new() },
        }
    }

    pub fn load(&mut self, squares: &[f64]) {
        if self.d > 8 {
            return;
        }
        self.table[0] = 1.0;
        for m in 1usize..(1 << self.d) {
            let low = m.trailing_zeros() as usize;
            self.table[m] = self.table[m & (m - 1)] * squares[low];
        }
    }

    pub fn product(&self, mask: u32, squares: &[f64]) -> f64 {
        if self.d <= 8 {
            self.table[mask as usize]
        } else {
            let mut acc = 1.0;
            let mut m = mask;
            while m != 0 {
                acc *= squares[m.trailing_zeros() as usize];
                m &= m - 1;
            }
            acc
        }
    }
}

/// `sum_{|J|=k} gamma_J prod_{j in J} u_j^2` at one node.
pub(crate) fn interaction_density(inter: &InteractionSpec, prods: &SubsetProducts, squares: &[f64]) -> f64 {
    inter
        .subsets()
        .iter()
        .map(|&m| inter.gamma_mask(m) * prods.product(m, squares))
        .sum()
}

pub(crate) fn energy_unchecked(spec: &ProblemSpec, u: &MultiField) -> EnergyBreakdown {
    let dom = &spec.domain;
    let d = spec.d();
    let mut dirichlet = 0.0;
    for f in u.fields() {
        let mut acc = 0.0;
        for &(p, q) in dom.edges() {
            let diff = f[p] - f[q];
            acc += diff * diff;
        }
        dirichlet += 0.5 * acc;
    }
    let mut inter = 0.0;
    let mut reaction = 0.0;
    let mut prods = SubsetProducts::new(d);
    let mut sq = vec![0.0; d];
    let zero_f = spec.nonlinearity.is_zero();
    for p in 0..dom.len() {
        let w = node_weight(dom, p);
        if w == 0.0 {
            continue;
        }
        for c in 0..d {
            let v = u.component(c)[p];
            sq[c] = v * v;
        }
        prods.load(&sq);
        inter += w * interaction_density(&spec.interaction, &prods, &sq);
        if !zero_f {
            let x = dom.coords(p);
            for c in 0..d {
                reaction += w * spec.nonlinearity.primitive(c, spec.beta, x, u.component(c)[p]);
            }
        }
    }
    let interaction = 0.5 * spec.beta * inter;
    let reaction = -reaction;
    EnergyBreakdown {
        dirichlet,
        interaction,
        reaction,
        total: dirichlet + interaction + reaction,
    }
}

pub fn energy(spec: &ProblemSpec, u: &MultiField) -> Result<EnergyBreakdown> {
    check_field(&spec.domain, spec.d(), u)?;
    check_nonnegative(&spec.domain, u)?;
    Ok(energy_unchecked(spec, u))
}

pub(crate) fn gradient_into(spec: &ProblemSpec, u: &MultiField, out: &mut MultiField) {
    let dom = &spec.domain;
    let d = spec.d();
    let h2 = dom.h * dom.h;
    let mut prods = SubsetProducts::new(d);
    let mut sq = vec![0.0; d];
    let zero_f = spec.nonlinearity.is_zero();
    for c in 0..d {
        out.component_mut(c).iter_mut().for_each(|v| *v = 0.0);
    }
    for &p in dom.interior_nodes() {
        for c in 0..d {
            let v = u.component(c)[p];
            sq[c] = v * v;
        }
        prods.load(&sq);
        let nb = dom.neighbours(p);
        let x = if zero_f { (0.0, 0.0) } else { dom.coords(p) };
        for c in 0..d {
            let f = u.component(c);
            let mut g = 4.0 * f[p] - f[nb[0]] - f[nb[1]] - f[nb[2]] - f[nb[3]];
            let mut s = 0.0;
            for &(mask, gamma) in spec.interaction.partners(c) {
                s += gamma * prods.product(mask, &sq);
            }
            g += h2 * spec.beta * f[p] * s;
            if !zero_f {
                g -= h2 * spec.nonlinearity.f(c, spec.beta, x, f[p]);
            }
            out.component_mut(c)[p] = g;
        }
    }
}

/// Exact gradient of [`energy`] with respect to interior node values;
/// zero on boundary and exterior nodes.
pub fn energy_gradient(spec: &ProblemSpec, u: &MultiField) -> Result<MultiField> {
    check_field(&spec.domain, spec.d(), u)?;
    check_nonnegative(&spec.domain, u)?;
    let mut out = MultiField::zeros(spec.d(), spec.domain.len());
    gradient_into(spec, u, &mut out);
    Ok(out)
}

/// Diagonal step metric `1 + h^2 beta S_c / 4`, the node-unit Hessian diagonal
/// of the energy divided by that of the Dirichlet term.
pub(crate) fn metric_into(spec: &ProblemSpec, u: &MultiField, out: &mut MultiField) {
    let dom = &spec.domain;
    let d = spec.d();
    let scale = 0.25 * dom.h * dom.h * spec.beta;
    let mut prods = SubsetProducts::new(d);
    let mut sq = vec![0.0; d];
    for c in 0..d {
        out.component_mut(c).iter_mut().for_each(|v| *v = 1.0);
    }
    if scale == 0.0 {
        return;
    }
    for &p in dom.interior_nodes() {
        for c in 0..d {
            let v = u.component(c)[p];
            sq[c] = v * v;
        }
        prods.load(&sq);
        for c in 0..d {
            let s: f64 = spec
                .interaction
                .partners(c)
                .iter()
                .map(|&(mask, gamma)| gamma * prods.product(mask, &sq))
                .sum();
            out.component_mut(c)[p] = 1.0 + scale * s;
        }
    }
}

/// `sum_{J ⊆ [d]\{i}, |J|=k-1} gamma_{J,i} u_J^2` at every node
/// (zero at exterior nodes).
pub fn interaction_sum(spec: &ProblemSpec, u: &MultiField, i: usize) -> Result<Vec<f64>> {
    check_field(&spec.domain, spec.d(), u)?;
    if i >= spec.d() {
        return Err(Error::InvalidArgument(format!("component {i} out of range")));
    }
    let d = spec.d();
    let mut prods = SubsetProducts::new(d);
    let mut sq = vec![0.0; d];
    let mut out = vec![0.0; u.len()];
    for (p, slot) in out.iter_mut().enumerate() {
        if !spec.domain.is_active(p) {
            continue;
        }
        for c in 0..d {
            let v = u.component(c)[p];
            sq[c] = v * v;
        }
        prods.load(&sq);
        *slot = spec
            .interaction
            .partners(i)
            .iter()
            .map(|&(mask, gamma)| gamma * prods.product(mask, &sq))
            .sum();
    }
    Ok(out)
}

/// `beta * int sum_J gamma_J u_J^2`, the scaled interaction integral.
pub fn scaled_interaction(spec: &ProblemSpec, u: &MultiField) -> f64 {
    2.0 * energy_unchecked(&spec.with_beta(spec.beta), u).interaction
}
