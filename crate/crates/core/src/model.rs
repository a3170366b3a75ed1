//! Problem data: k-wise interaction coefficients, reaction nonlinearities
//! with their growth certificate, and boundary traces satisfying the
//! partial k-segregation condition.

use serde::{Deserialize, Serialize};

use crate::geometry::Domain;
use crate::linalg;
use crate::{Error, Result};

/// Largest supported component count (subsets are addressed by `u32` masks).
pub const MAX_COMPONENTS: usize = 16;

/// All `k`-subsets of `0..d` as bitmasks, in lexicographic order.
pub fn k_subsets(d: usize, k: usize) -> Vec<u32> {
    fn rec(start: usize, d: usize, left: usize, mask: u32, out: &mut Vec<u32>) {
        if left == 0 {
            out.push(mask);
            return;
        }
        for i in start..=d - left {
            rec(i + 1, d, left - 1, mask | (1 << i), out);
        }
    }
    let mut out = Vec::new();
    if k <= d {
        rec(0, d, k, 0, &mut out);
    }
    out
}

pub fn mask_members(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Symmetric coefficients `gamma_J > 0` over the `k`-subsets of `d`
/// components. Storage is per unordered subset, so `gamma_{J,i}` with
/// `J ∪ {i} = L` is `gamma_L` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    d: usize,
    k: usize,
    subsets: Vec<u32>,
    table: Vec<f64>,
    /// Per component: `(mask of J, gamma_{J,i})` over the `(k-1)`-subsets of
    /// the other components, lexicographic.
    partners: Vec<Vec<(u32, f64)>>,
}

impl InteractionSpec {
    pub fn uniform(d: usize, k: usize, gamma: f64) -> Result<Self> {
        Self::build(d, k, |_| gamma)
    }

    /// Coefficients given per subset (0-based component indices); subsets
    /// not listed take `default`.
    pub fn with_overrides(d: usize, k: usize, default: f64, overrides: &[(Vec<usize>, f64)]) -> Result<Self> {
        let mut masks = Vec::with_capacity(overrides.len());
        for (set, value) in overrides {
            let mut mask = 0u32;
            for &i in set {
                if i >= d || mask & (1 << i) != 0 {
                    return Err(Error::InvalidInteraction(format!(
                        "subset {set:?} is not a set of distinct components below {d}"
                    )));
                }
                mask |= 1 << i;
            }
            if set.len() != k {
                return Err(Error::InvalidInteraction(format!(
                    "subset {set:?} does not have size k = {k}"
                )));
            }
            masks.push((mask, *value));
        }
        Self::build(d, k, |m| {
            masks.iter().rev().find(|(mm, _)| *mm == m).map_or(default, |&(_, v)| v)
        })
    }

    fn build<F: Fn(u32) -> f64>(d: usize, k: usize, coef: F) -> Result<Self> {
        if !(3 <= k && k <= d) {
            return Err(Error::InvalidInteraction(format!(
                "need 3 ≤ k ≤ d, got k = {k}, d = {d}"
            )));
        }
        if d > MAX_COMPONENTS {
            return Err(Error::InvalidInteraction(format!(
                "at most {MAX_COMPONENTS} components supported, got {d}"
            )));
        }
        let subsets = k_subsets(d, k);
        let mut table = vec![0.0; 1 << d];
        for &m in &subsets {
            let g = coef(m);
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidInteraction(format!(
                    "gamma on subset {:?} must be positive and finite, got {g}",
                    mask_members(m)
                )));
            }
            table[m as usize] = g;
        }
        let partners = (0..d)
            .map(|i| {
                let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
                k_subsets(d - 1, k - 1)
                    .into_iter()
                    .map(|sub| {
                        let mask = mask_members(sub).iter().fold(0u32, |m, &t| m | (1 << others[t]));
                        (mask, table[(mask | (1 << i)) as usize])
                    })
                    .collect()
            })
            .collect();
        Ok(InteractionSpec {
            d,
            k,
            subsets,
            table,
            partners,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// All `k`-subsets as bitmasks, lexicographic.
    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn gamma_mask(&self, mask: u32) -> f64 {
        self.table.get(mask as usize).copied().unwrap_or(0.0)
    }

    pub fn gamma(&self, subset: &[usize]) -> f64 {
        self.gamma_mask(subset.iter().fold(0u32, |m, &i| m | (1 << i)))
    }

    /// `gamma_{J,i}` for a `(k-1)`-subset `J` not containing `i`.
    pub fn gamma_ji(&self, j: &[usize], i: usize) -> f64 {
        let mask = j.iter().fold(1u32 << i, |m, &t| m | (1 << t));
        self.gamma_mask(mask)
    }

    pub fn partners(&self, i: usize) -> &[(u32, f64)] {
        &self.partners[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionKind {
    Zero,
    Linear,
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaRule {
    /// `f_{i,beta} = f_i` for all `beta`.
    Constant,
    /// `f_{i,beta} = f_i / (1 + 1/beta)`.
    Damped,
}

/// Reaction terms `f_{i,beta}(x, s)`, odd in `s`, with primitives
/// `F_{i,beta}` even in `s`. The shipped families are independent of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    pub kind: ReactionKind,
    /// Per-component coefficient `a_i >= 0` (ignored for `Zero`).
    pub a: Vec<f64>,
    pub beta_rule: BetaRule,
}

impl Nonlinearity {
    pub fn zero(d: usize) -> Self {
        Nonlinearity {
            kind: ReactionKind::Zero,
            a: vec![0.0; d],
            beta_rule: BetaRule::Constant,
        }
    }

    pub fn linear(a: Vec<f64>) -> Self {
        Nonlinearity {
            kind: ReactionKind::Linear,
            a,
            beta_rule: BetaRule::Constant,
        }
    }

    pub fn saturating(a: Vec<f64>) -> Self {
        Nonlinearity {
            kind: ReactionKind::Saturating,
            a,
            beta_rule: BetaRule::Constant,
        }
    }

    pub fn with_beta_rule(mut self, rule: BetaRule) -> Self {
        self.beta_rule = rule;
        self
    }

    pub fn check(&self, d: usize) -> Result<()> {
        if self.a.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "nonlinearity has {} coefficients, problem has {d} components",
                self.a.len()
            )));
        }
        if let Some(a) = self.a.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidNonlinearity(format!(
                "coefficients must be finite and >= 0, got {a}"
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.kind == ReactionKind::Zero || self.a.iter().all(|&a| a == 0.0)
    }

    fn beta_factor(&self, beta: f64) -> f64 {
        match self.beta_rule {
            BetaRule::Constant => 1.0,
            BetaRule::Damped if beta.is_infinite() => 1.0,
            BetaRule::Damped if beta <= 0.0 => 0.0,
            BetaRule::Damped => beta / (1.0 + beta),
        }
    }

    /// `f_{i,beta}(x, s)`.
    pub fn f(&self, i: usize, beta: f64, _x: (f64, f64), s: f64) -> f64 {
        let a = self.a[i] * self.beta_factor(beta);
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => a * s,
            ReactionKind::Saturating => a * s / (1.0 + s.abs()),
        }
    }

    /// `F_{i,beta}(x, s) = int_0^s f_{i,beta}(x, t) dt`.
    pub fn primitive(&self, i: usize, beta: f64, _x: (f64, f64), s: f64) -> f64 {
        let a = self.a[i] * self.beta_factor(beta);
        let t = s.abs();
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => 0.5 * a * t * t,
            ReactionKind::Saturating => a * (t - t.ln_1p()),
        }
    }

    /// `d f_{i,beta} / ds`.
    pub fn df(&self, i: usize, beta: f64, _x: (f64, f64), s: f64) -> f64 {
        let a = self.a[i] * self.beta_factor(beta);
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => a,
            ReactionKind::Saturating => a / (1.0 + s.abs()).powi(2),
        }
    }

    /// `grad_x F_{i,beta}(x, s)`; identically zero for the shipped families.
    pub fn grad_x_primitive(&self, _i: usize, _beta: f64, _x: (f64, f64), _s: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    /// Constant growth bound `b` with `|f(x, s)| <= b s` for large `s`.
    pub fn sup_b(&self) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            _ => self.a.iter().copied().fold(0.0, f64::max),
        }
    }
}

pub fn eval_f(n: &Nonlinearity, i: usize, x: (f64, f64), s: f64) -> f64 {
    n.f(i, 1.0, x, s)
}

pub fn eval_primitive(n: &Nonlinearity, i: usize, x: (f64, f64), s: f64) -> f64 {
    n.primitive(i, 1.0, x, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    pub lambda1: f64,
    pub sup_b: f64,
    pub epsilon: f64,
    pub passes: bool,
}

/// Checks `sup b < lambda_1(domain)` with the discrete Dirichlet eigenvalue
/// computed by inverse power iteration.
pub fn validate_f2(n: &Nonlinearity, dom: &Domain) -> Result<GrowthReport> {
    let lambda1 = linalg::smallest_dirichlet_eigenvalue(dom, 1e-8, 100_000)?;
    let sup_b = n.sup_b();
    Ok(GrowthReport {
        lambda1,
        sup_b,
        epsilon: 1.0 - sup_b / lambda1,
        passes: sup_b < lambda1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum TraceRecipe {
    /// Component `i` is a hat supported on the boundary arc
    /// `(i/d, (i+k-1)/d)` of the normalized perimeter.
    RotatingArcs { amplitude: f64 },
    /// Component `i` is a hat on `((i-1/2)/d, (i+3/2)/d)`: only cyclic
    /// neighbours overlap.
    PairwiseBumps { amplitude: f64 },
    /// Explicit values on listed boundary nodes, zero elsewhere.
    Custom { entries: Vec<CustomTrace> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomTrace {
    pub node: (usize, usize),
    pub values: Vec<f64>,
}

/// Boundary data `psi_1..psi_d`, stored as full-grid fields that vanish off
/// the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    pub psi: Vec<Vec<f64>>,
    /// Per component: max over consecutive boundary nodes of
    /// `|psi(p) - psi(q)| / |p - q|`.
    pub lipschitz: Vec<f64>,
}

impl TraceData {
    pub fn d(&self) -> usize {
        self.psi.len()
    }

    /// Traces from a closure `(component, x, y) -> value` on boundary nodes.
    pub fn from_fn<F: Fn(usize, f64, f64) -> f64>(dom: &Domain, d: usize, f: F) -> Result<Self> {
        let mut psi = vec![vec![0.0; dom.len()]; d];
        for (c, field) in psi.iter_mut().enumerate() {
            for &p in dom.boundary_nodes() {
                let (x, y) = dom.coords(p);
                let v = f(c, x, y);
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "trace {c} must be finite and nonnegative, got {v} at node {p}"
                    )));
                }
                field[p] = v;
            }
        }
        Ok(Self::from_fields(dom, psi))
    }

    pub fn zeros(dom: &Domain, d: usize) -> Self {
        Self::from_fields(dom, vec![vec![0.0; dom.len()]; d])
    }

    fn from_fields(dom: &Domain, psi: Vec<Vec<f64>>) -> Self {
        let lipschitz = psi.iter().map(|f| boundary_lipschitz(dom, f)).collect();
        TraceData { psi, lipschitz }
    }

    /// Sets the listed components (0-based) to zero.
    pub fn with_zeroed(mut self, dom: &Domain, comps: &[usize]) -> Result<Self> {
        let d = self.psi.len();
        for &c in comps {
            let field = self
                .psi
                .get_mut(c)
                .ok_or_else(|| Error::InvalidArgument(format!("cannot zero component {c}: only {d} components")))?;
            field.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(Self::from_fields(dom, self.psi))
    }
}

fn boundary_lipschitz(dom: &Domain, field: &[f64]) -> f64 {
    let lp = dom.boundary_loop();
    let mut best = 0.0f64;
    for w in 0..lp.len() {
        let p = lp[w].0;
        let q = lp[(w + 1) % lp.len()].0;
        if p == q {
            continue;
        }
        let (a, b) = (dom.coords(p), dom.coords(q));
        let dist = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        best = best.max((field[p] - field[q]).abs() / dist);
    }
    best
}

pub fn make_trace_library(dom: &Domain, d: usize, k: usize, recipe: &TraceRecipe) -> Result<TraceData> {
    if !(3 <= k && k <= d) {
        return Err(Error::InfeasibleRecipe(format!("need 3 ≤ k ≤ d, got k = {k}, d = {d}")));
    }
    let mut psi = vec![vec![0.0; dom.len()]; d];
    match recipe {
        TraceRecipe::RotatingArcs { amplitude } | TraceRecipe::PairwiseBumps { amplitude } => {
            if !(*amplitude > 0.0 && amplitude.is_finite()) {
                return Err(Error::InfeasibleRecipe(format!(
                    "amplitude must be positive, got {amplitude}"
                )));
            }
            let (offset, len) = match recipe {
                TraceRecipe::RotatingArcs { .. } => (0.0, (k - 1) as f64 / d as f64),
                _ => (-0.5 / d as f64, 2.0 / d as f64),
            };
            let perimeter = dom.boundary_perimeter();
            for (p, s) in dom.boundary_loop() {
                let t = s / perimeter;
                let mut members: Vec<(f64, usize)> = Vec::new();
                for c in 0..d {
                    let start = offset + c as f64 / d as f64;
                    // position inside the arc, measured from its start
                    let rel = (t - start).rem_euclid(1.0);
                    if rel > 0.0 && rel < len {
                        let hat = 1.0 - (rel - 0.5 * len).abs() / (0.5 * len);
                        members.push((amplitude * hat.max(0.0), c));
                    }
                }
                // at most k-1 positive components per node, regardless of rounding
                members.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                for &(v, c) in members.iter().take(k - 1) {
                    psi[c][p] = v;
                }
            }
        }
        TraceRecipe::Custom { entries } => {
            for e in entries {
                let (i, j) = e.node;
                if i >= dom.nx || j >= dom.ny {
                    return Err(Error::InfeasibleRecipe(format!("node {:?} off the grid", e.node)));
                }
                let p = dom.index(i, j);
                if dom.kind(p) != crate::geometry::NodeKind::Boundary {
                    return Err(Error::InfeasibleRecipe(format!(
                        "node {:?} is not a boundary node",
                        e.node
                    )));
                }
                if e.values.len() != d {
                    return Err(Error::InfeasibleRecipe(format!(
                        "node {:?} lists {} values, expected {d}",
                        e.node,
                        e.values.len()
                    )));
                }
                if e.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::InfeasibleRecipe(format!(
                        "node {:?} has a negative value",
                        e.node
                    )));
                }
                let positive = e.values.iter().filter(|&&v| v > 0.0).count();
                if positive > k - 1 {
                    return Err(Error::InfeasibleRecipe(format!(
                        "node {:?} has {positive} positive components, at most k-1 = {} allowed",
                        e.node,
                        k - 1
                    )));
                }
                for c in 0..d {
                    psi[c][p] = e.values[c];
                }
            }
        }
    }
    Ok(TraceData::from_fields(dom, psi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    /// Max over k-subsets and boundary nodes of the trace product.
    pub max_product: f64,
    /// 0-based subset and node achieving it (when positive).
    pub worst: Option<(Vec<usize>, usize)>,
    pub lipschitz: Vec<f64>,
    pub passes: bool,
}

/// Partial k-segregation of the traces, checked bit-exactly.
pub fn validate_traces(traces: &TraceData, interaction: &InteractionSpec, dom: &Domain) -> Result<TraceReport> {
    if traces.d() != interaction.d() {
        return Err(Error::DimensionMismatch(format!(
            "{} traces for {} components",
            traces.d(),
            interaction.d()
        )));
    }
    if let Some(f) = traces.psi.iter().find(|f| f.len() != dom.len()) {
        return Err(Error::DimensionMismatch(format!(
            "trace field has {} nodes, domain has {}",
            f.len(),
            dom.len()
        )));
    }
    let mut max_product = 0.0f64;
    let mut worst = None;
    let mut nonneg = true;
    for &p in dom.boundary_nodes() {
        nonneg &= traces.psi.iter().all(|f| f[p] >= 0.0);
        for &m in interaction.subsets() {
            let prod = mask_members(m).iter().fold(1.0, |acc, &j| acc * traces.psi[j][p]);
            if prod > max_product {
                max_product = prod;
                worst = Some((mask_members(m), p));
            }
        }
    }
    Ok(TraceReport {
        max_product,
        worst,
        lipschitz: traces.lipschitz.clone(),
        passes: nonneg && max_product == 0.0,
    })
}

/// Full boundary value problem at a fixed `beta`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub interaction: InteractionSpec,
    pub traces: TraceData,
    pub nonlinearity: Nonlinearity,
    pub beta: f64,
}

impl ProblemSpec {
    pub fn new(
        domain: Domain,
        interaction: InteractionSpec,
        traces: TraceData,
        nonlinearity: Nonlinearity,
        beta: f64,
    ) -> Result<Self> {
        let d = interaction.d();
        if traces.d() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} traces for {d} components",
                traces.d()
            )));
        }
        nonlinearity.check(d)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        Ok(ProblemSpec {
            domain,
            interaction,
            traces,
            nonlinearity,
            beta,
        })
    }

    pub fn d(&self) -> usize {
        self.interaction.d()
    }

    pub fn k(&self) -> usize {
        self.interaction.k()
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        let mut s = self.clone();
        s.beta = beta;
        s
    }

    /// Runs both trace and growth validation; errors name the offending
    /// subset or eigenvalue bound.
    pub fn validate(&self) -> Result<(TraceReport, GrowthReport)> {
        let tr = validate_traces(&self.traces, &self.interaction, &self.domain)?;
        if !tr.passes {
            let (subset, node) = tr.worst.clone().unwrap_or_default();
            return Err(Error::SegregationViolated {
                subset: subset.iter().map(|i| i + 1).collect(),
                node,
                product: tr.max_product,
            });
        }
        let gr = validate_f2(&self.nonlinearity, &self.domain)?;
        if !gr.passes {
            return Err(Error::GrowthBound {
                sup_b: gr.sup_b,
                lambda1: gr.lambda1,
            });
        }
        Ok((tr, gr))
    }
}
