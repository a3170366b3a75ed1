//! Probes of computed fields: Hölder seminorms, interaction decay along a
//! continuation, segregation violation, the local Pohozaev identity and
//! blow-up rescalings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::{interaction_density, MultiField, SubsetProducts};
use crate::geometry::{sphere_trace, BallSpec, Domain};
use crate::model::ProblemSpec;
use crate::solver::ContinuationResult;
use crate::{Error, Result};

/// Largest node count for which exhaustive pair scans are allowed.
pub const EXHAUSTIVE_LIMIT: usize = 48 * 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum HolderPolicy {
    Exhaustive,
    Subsampled { pairs: usize, seed: u64 },
}

impl HolderPolicy {
    /// Exhaustive on grids up to 48x48 nodes, subsampled beyond.
    pub fn auto(dom: &Domain, pairs: usize, seed: u64) -> Self {
        if dom.len() <= EXHAUSTIVE_LIMIT {
            HolderPolicy::Exhaustive
        } else {
            HolderPolicy::Subsampled { pairs, seed }
        }
    }
}

/// Sampled Hölder seminorm; a lower bound for the sup over all pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub value: f64,
    /// Node pair realizing `value`.
    pub pair: Option<(usize, usize)>,
    pub policy: HolderPolicy,
}

/// `dist^alpha` for every node offset `(di, dj)`, `di, dj >= 0`.
struct DistTable {
    nx: usize,
    table: Vec<f64>,
}

impl DistTable {
    fn new(dom: &Domain, alpha: f64) -> Self {
        let mut table = vec![0.0; dom.nx * dom.ny];
        for dj in 0..dom.ny {
            for di in 0..dom.nx {
                let d = dom.h * ((di * di + dj * dj) as f64).sqrt();
                table[dj * dom.nx + di] = d.powf(alpha);
            }
        }
        DistTable { nx: dom.nx, table }
    }

    fn get(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.table[a.1.abs_diff(b.1) * self.nx + a.0.abs_diff(b.0)]
    }
}

struct PairScan<'a> {
    dom: &'a Domain,
    field: &'a [f64],
    table: DistTable,
    best: f64,
    pair: Option<(usize, usize)>,
}

impl PairScan<'_> {
    fn visit(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        let (p, q) = if p < q { (p, q) } else { (q, p) };
        let v = (self.field[p] - self.field[q]).abs() / self.table.get(self.dom.ij(p), self.dom.ij(q));
        if v > self.best || (v == self.best && self.pair.is_none_or(|old| (p, q) < old)) {
            self.best = v;
            self.pair = Some((p, q));
        }
    }
}

/// `max |u(x) - u(y)| / |x - y|^alpha` over sampled pairs of active nodes.
pub fn holder_seminorm(dom: &Domain, field: &[f64], alpha: f64, policy: &HolderPolicy) -> Result<HolderEstimate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "Hölder exponent must lie in [0, 1], got {alpha}"
        )));
    }
    if field.len() != dom.len() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} nodes, domain has {}",
            field.len(),
            dom.len()
        )));
    }
    let active: Vec<usize> = (0..dom.len()).filter(|&p| dom.is_active(p)).collect();
    let mut scan = PairScan {
        dom,
        field,
        table: DistTable::new(dom, alpha),
        best: 0.0,
        pair: None,
    };
    match *policy {
        HolderPolicy::Exhaustive => {
            if dom.len() > EXHAUSTIVE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "exhaustive Hölder scan limited to {EXHAUSTIVE_LIMIT} nodes, grid has {}",
                    dom.len()
                )));
            }
            for (a, &p) in active.iter().enumerate() {
                for &q in &active[a + 1..] {
                    scan.visit(p, q);
                }
            }
        }
        HolderPolicy::Subsampled { pairs, seed } => {
            // coarse exhaustive pass
            let stride = dom.nx.max(dom.ny).div_ceil(48).max(1);
            let coarse: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&p| {
                    let (i, j) = dom.ij(p);
                    i % stride == 0 && j % stride == 0
                })
                .collect();
            for (a, &p) in coarse.iter().enumerate() {
                for &q in &coarse[a + 1..] {
                    scan.visit(p, q);
                }
            }
            if !active.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..pairs {
                    let p = active[rng.gen_range(0..active.len())];
                    let q = active[rng.gen_range(0..active.len())];
                    scan.visit(p, q);
                }
            }
            if let Some((p, q)) = scan.pair {
                let near_p = neighbourhood(dom, p, 5);
                let near_q = neighbourhood(dom, q, 5);
                for &a in &near_p {
                    for &b in &near_q {
                        scan.visit(a, b);
                    }
                }
            }
        }
    }
    Ok(HolderEstimate {
        alpha,
        value: scan.best,
        pair: scan.pair,
        policy: *policy,
    })
}

fn neighbourhood(dom: &Domain, p: usize, radius: usize) -> Vec<usize> {
    let (i, j) = dom.ij(p);
    let mut out = Vec::new();
    for b in j.saturating_sub(radius)..=(j + radius).min(dom.ny - 1) {
        for a in i.saturating_sub(radius)..=(i + radius).min(dom.nx - 1) {
            let q = dom.index(a, b);
            if dom.is_active(q) {
                out.push(q);
            }
        }
    }
    out
}

/// Max over k-subsets `J` and all nodes of `prod_{j in J} u_j`.
pub fn segregation_violation(u: &MultiField, k: usize) -> f64 {
    if k == 0 || k > u.d() {
        return 0.0;
    }
    let mut vals = vec![0.0; u.d()];
    let mut best = 0.0f64;
    for p in 0..u.len() {
        for (c, v) in vals.iter_mut().enumerate() {
            *v = u.component(c)[p];
        }
        // for nonnegative values the largest k-fold product uses the top k
        vals.sort_by(|a, b| b.total_cmp(a));
        let prod: f64 = vals[..k].iter().product();
        best = best.max(prod);
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTable {
    /// `(beta, beta * int sum_J gamma_J u_J^2)`
    pub rows: Vec<(f64, f64)>,
    /// Every step satisfies `next <= 1.1 * previous`.
    pub monotone: bool,
    /// Last value over first value (`NaN` when the first is 0).
    pub ratio: f64,
}

pub fn interaction_decay(result: &ContinuationResult) -> Result<DecayTable> {
    if result.steps.len() < 2 {
        return Err(Error::InvalidArgument(
            "interaction decay needs at least 2 schedule points".into(),
        ));
    }
    let rows: Vec<(f64, f64)> = result
        .steps
        .iter()
        .map(|s| (s.beta, s.snapshot.interaction_scaled))
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1);
    let first = rows[0].1;
    let last = rows[rows.len() - 1].1;
    let ratio = if first == 0.0 { f64::NAN } else { last / first };
    Ok(DecayTable { rows, monotone, ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PohozaevReport {
    pub ball: BallSpec,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub h: f64,
}

/// Centered-difference gradient at an interior node.
fn node_gradient(dom: &Domain, f: &[f64], p: usize) -> (f64, f64) {
    let [e, w, n, s] = dom.neighbours(p);
    ((f[e] - f[w]) / (2.0 * dom.h), (f[n] - f[s]) / (2.0 * dom.h))
}

/// Both sides of the local Pohozaev identity on `B_r(x0)` in dimension 2:
///
/// ```text
/// LHS = int_S sum |grad u_i|^2
/// RHS = (N-2)/r int_B sum |grad u_i|^2 - 2/r int_B sum (N F_i + grad_x F_i . (x - x0))
///     + 2 int_S sum (d_nu u_i)^2 + 2 int_S sum F_i
/// ```
///
/// `F` is the limit primitive (`beta = infinity`).
pub fn pohozaev_check(spec: &ProblemSpec, u: &MultiField, ball: &BallSpec) -> Result<PohozaevReport> {
    let dom = &spec.domain;
    if u.d() != spec.d() || u.len() != dom.len() {
        return Err(Error::DimensionMismatch("field does not match the problem".into()));
    }
    ball.check_inside(dom)?;
    const N: f64 = 2.0;
    let r = ball.radius;
    let nl = &spec.nonlinearity;
    let mut sphere_grad = 0.0;
    let mut sphere_normal = 0.0;
    let mut sphere_f = 0.0;
    let mut ball_grad = 0.0;
    let mut ball_f = 0.0;
    for c in 0..u.d() {
        let f = u.component(c);
        let samples = sphere_trace(dom, ball, f)?;
        let ds = std::f64::consts::TAU * r / samples.len() as f64;
        for s in &samples {
            let x = (ball.center.0 + r * s.angle.cos(), ball.center.1 + r * s.angle.sin());
            sphere_grad += ds * (s.normal_derivative.powi(2) + s.tangential_derivative.powi(2));
            sphere_normal += ds * s.normal_derivative.powi(2);
            sphere_f += ds * nl.primitive(c, f64::INFINITY, x, s.value);
        }
        for &p in dom.interior_nodes() {
            let x = dom.coords(p);
            let dx = (x.0 - ball.center.0, x.1 - ball.center.1);
            if dx.0 * dx.0 + dx.1 * dx.1 > r * r {
                continue;
            }
            let w = dom.h * dom.h;
            let g = node_gradient(dom, f, p);
            ball_grad += w * (g.0 * g.0 + g.1 * g.1);
            let gx = nl.grad_x_primitive(c, f64::INFINITY, x, f[p]);
            ball_f += w * (N * nl.primitive(c, f64::INFINITY, x, f[p]) + gx.0 * dx.0 + gx.1 * dx.1);
        }
    }
    let lhs = sphere_grad;
    let rhs = (N - 2.0) / r * ball_grad - 2.0 / r * ball_f + 2.0 * sphere_normal + 2.0 * sphere_f;
    Ok(PohozaevReport {
        ball: *ball,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        h: dom.h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlowupOptions {
    /// Sub-grid half-width in samples; the frame has `(2w+1)^2` points.
    pub half_width: usize,
    /// Normalization `L`; defaults to the sampled Hölder seminorm at `alpha`
    /// (max over components).
    pub normalization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupFrame {
    pub center: (f64, f64),
    pub scale: f64,
    pub normalization: f64,
    pub alpha: f64,
    pub half_width: usize,
    /// `v_i(a, b) = u_i(x_n + r (a, b) / w) / (L r^alpha)`, row-major over
    /// `b, a in -w..=w`.
    pub fields: Vec<Vec<f64>>,
    /// `M = beta r^{2 + 2(k-1) alpha} L^{2(k-1)}`
    pub m_n: f64,
    /// `M * max sum_J gamma_J v_J^2` over the frame.
    pub interaction_magnitude: f64,
}

impl BlowupFrame {
    pub fn value(&self, i: usize, a: isize, b: isize) -> f64 {
        let w = self.half_width as isize;
        let side = 2 * w + 1;
        self.fields[i][((b + w) * side + (a + w)) as usize]
    }
}

pub fn blowup_extract(
    spec: &ProblemSpec,
    u: &MultiField,
    center: (f64, f64),
    scale: f64,
    alpha: f64,
    opts: &BlowupOptions,
) -> Result<BlowupFrame> {
    let dom = &spec.domain;
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blow-up scale must be > 0, got {scale}"
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "blow-up exponent must lie in [0, 1), got {alpha}"
        )));
    }
    let l = match opts.normalization {
        Some(l) => l,
        None => {
            let policy = HolderPolicy::auto(dom, 20_000, 42);
            let mut best = 0.0f64;
            for f in u.fields() {
                best = best.max(holder_seminorm(dom, f, alpha, &policy)?.value);
            }
            best
        }
    };
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "blow-up normalization must be > 0, got {l}"
        )));
    }
    let w = opts.half_width.max(1);
    let side = 2 * w + 1;
    let denom = l * scale.powf(alpha);
    let mut fields = vec![vec![0.0; side * side]; u.d()];
    for b in 0..side {
        for a in 0..side {
            let x = center.0 + scale * (a as f64 - w as f64) / w as f64;
            let y = center.1 + scale * (b as f64 - w as f64) / w as f64;
            for (c, field) in fields.iter_mut().enumerate() {
                let v = dom.interpolate(u.component(c), x, y).ok_or_else(|| {
                    Error::WindowOutOfDomain(format!(
                        "blow-up window of radius {scale} about ({}, {}) leaves the domain",
                        center.0, center.1
                    ))
                })?;
                field[b * side + a] = v / denom;
            }
        }
    }
    let k = spec.k() as f64;
    let m_n = spec.beta * scale.powf(2.0 + 2.0 * (k - 1.0) * alpha) * l.powf(2.0 * (k - 1.0));
    let d = u.d();
    let mut prods = SubsetProducts::new(d);
    let mut sq = vec![0.0; d];
    let mut peak = 0.0f64;
    for q in 0..side * side {
        for c in 0..d {
            sq[c] = fields[c][q] * fields[c][q];
        }
        prods.load(&sq);
        peak = peak.max(interaction_density(&spec.interaction, &prods, &sq));
    }
    Ok(BlowupFrame {
        center,
        scale,
        normalization: l,
        alpha,
        half_width: w,
        fields,
        m_n,
        interaction_magnitude: m_n * peak,
    })
}

/// Plain `x y` series, one pair per line.
pub fn plot_series(points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (x, y) in points {
        s.push_str(&format!("{x:e} {y:e}\n"));
    }
    s
}
