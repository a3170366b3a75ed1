//! Projected gradient descent over nonnegative fields with pinned traces,
//! and warm-started `beta` continuation.
//!
//! The projected-gradient norm used as stopping metric is
//! `|u - P(u - g)| / h` (Euclidean norm over all node values, unit step in
//! node units). Since the node-unit gradient carries a factor `h^2`, this is
//! the discrete L2 norm of the strong residual on the free set, which makes
//! `grad_tol` comparable across grid sizes.

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, HolderPolicy};
use crate::energy::{self, check_field, EnergyBreakdown, MultiField};
use crate::geometry::{integrate, Domain};
use crate::linalg::harmonic_fill;
use crate::model::{ProblemSpec, TraceData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Momentum {
    Off,
    #[default]
    RestartAccelerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    /// Backtracking shrink factor in (0, 1).
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub momentum: Momentum,
    /// Scale steps by the inverse Hessian diagonal of the interaction term.
    pub precondition: bool,
    pub seed: u64,
    /// Amplitude of uniform random perturbation added to interior nodes of
    /// the initial field (0 disables).
    pub init_noise: f64,
    /// Hölder exponents tracked along a continuation.
    pub holder_exponents: Vec<f64>,
    /// Random pairs for subsampled Hölder scans on large grids.
    pub holder_samples: usize,
    /// Per-iteration CSV trace `(iter, energy, step, pg)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iters: 20_000,
            grad_tol: 1e-6,
            step0: 0.1,
            shrink: 0.5,
            armijo: 1e-4,
            momentum: Momentum::RestartAccelerated,
            precondition: true,
            seed: 42,
            init_noise: 0.0,
            holder_exponents: vec![0.3, 0.6],
            holder_samples: 20_000,
            trace_path: None,
        }
    }
}

impl SolveConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "solver.grad_tol must be > 0, got {}",
                self.grad_tol
            )));
        }
        if !(self.step0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "solver.step0 must be > 0, got {}",
                self.step0
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "solver.shrink must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "solver.armijo must lie in (0, 1), got {}",
                self.armijo
            )));
        }
        if !(self.init_noise >= 0.0) {
            return Err(Error::InvalidArgument("solver.init_noise must be >= 0".into()));
        }
        if self.holder_exponents.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidArgument(
                "solver.holder_exponents must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub step: f64,
    pub pg: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: MultiField,
    /// Energy after each accepted step; entry 0 is the projected initial field.
    pub energy_trace: Vec<f64>,
    pub records: Vec<IterRecord>,
    pub pg_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Step fell below `1e-14` without sufficient decrease.
    pub stalled: bool,
    pub energy: EnergyBreakdown,
}

/// Box constraints: free nodes are clamped at 0 from below, all other nodes
/// are pinned to `fixed`.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub free: Vec<Vec<bool>>,
    pub fixed: MultiField,
}

impl Bounds {
    /// Interior nodes free, boundary nodes pinned to the traces.
    pub fn traces(dom: &Domain, traces: &TraceData) -> Self {
        let free = vec![(0..dom.len()).map(|p| dom.is_interior(p)).collect(); traces.d()];
        let fixed = MultiField::from_fields(traces.psi.clone()).expect("trace fields share the grid");
        Bounds { free, fixed }
    }

    pub fn project(&self, u: &MultiField) -> MultiField {
        let mut out = u.clone();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, u: &mut MultiField) {
        for c in 0..u.d() {
            let free = &self.free[c];
            let fixed = self.fixed.component(c);
            for (p, v) in u.component_mut(c).iter_mut().enumerate() {
                *v = if free[p] { v.max(0.0) } else { fixed[p] };
            }
        }
    }
}

/// A smooth function of a [`MultiField`] minimized over [`Bounds`].
pub trait Objective {
    fn domain(&self) -> &Domain;
    fn bounds(&self) -> &Bounds;
    fn value(&self, u: &MultiField) -> f64;
    /// Node-unit gradient; entries off the free set are ignored.
    fn gradient(&self, u: &MultiField, out: &mut MultiField);
    /// Fills a diagonal step metric (entries >= 1) at `u`; `false` if none.
    fn metric(&self, _u: &MultiField, _out: &mut MultiField) -> bool {
        false
    }
}

/// `J_beta` of a [`ProblemSpec`] over the trace-pinned set.
pub struct EnergyObjective<'a> {
    pub spec: &'a ProblemSpec,
    pub bounds: Bounds,
}

impl<'a> EnergyObjective<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        EnergyObjective {
            spec,
            bounds: Bounds::traces(&spec.domain, &spec.traces),
        }
    }
}

impl Objective for EnergyObjective<'_> {
    fn domain(&self) -> &Domain {
        &self.spec.domain
    }
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }
    fn value(&self, u: &MultiField) -> f64 {
        energy::energy_unchecked(self.spec, u).total
    }
    fn gradient(&self, u: &MultiField, out: &mut MultiField) {
        energy::gradient_into(self.spec, u, out)
    }
    fn metric(&self, u: &MultiField, out: &mut MultiField) -> bool {
        energy::metric_into(self.spec, u, out);
        true
    }
}

/// Clamps interior values at 0 and overwrites boundary values with the traces.
pub fn project(dom: &Domain, u: &MultiField, traces: &TraceData) -> Result<MultiField> {
    check_field(dom, traces.d(), u)?;
    Ok(Bounds::traces(dom, traces).project(u))
}

/// Discrete harmonic extension of each trace, projected.
pub fn harmonic_init(dom: &Domain, traces: &TraceData) -> Result<MultiField> {
    let free: Vec<bool> = (0..dom.len()).map(|p| dom.is_interior(p)).collect();
    let fields = traces
        .psi
        .iter()
        .map(|psi| harmonic_fill(dom, &free, psi))
        .collect::<Result<Vec<_>>>()?;
    project(dom, &MultiField::from_fields(fields)?, traces)
}

fn pg_norm(bounds: &Bounds, u: &MultiField, g: &MultiField, h: f64) -> f64 {
    let mut acc = 0.0;
    for c in 0..u.d() {
        let free = &bounds.free[c];
        let uc = u.component(c);
        let gc = g.component(c);
        for p in 0..uc.len() {
            if free[p] {
                let diff = uc[p] - (uc[p] - gc[p]).max(0.0);
                acc += diff * diff;
            }
        }
    }
    acc.sqrt() / h
}

fn free_dot(bounds: &Bounds, a: &MultiField, b: &MultiField) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.d() {
        let free = &bounds.free[c];
        for (p, (x, y)) in a.component(c).iter().zip(b.component(c)).enumerate() {
            if free[p] {
                acc += x * y;
            }
        }
    }
    acc
}

fn diff(a: &MultiField, b: &MultiField) -> MultiField {
    a.axpy(-1.0, b)
}

/// Projected trial point `P(y - s g / m)`.
fn trial(bounds: &Bounds, y: &MultiField, g: &MultiField, m: Option<&MultiField>, s: f64) -> MultiField {
    let mut x = match m {
        None => y.axpy(-s, g),
        Some(m) => {
            let mut x = y.clone();
            for c in 0..x.d() {
                let (gc, mc) = (g.component(c), m.component(c));
                for (p, v) in x.component_mut(c).iter_mut().enumerate() {
                    *v -= s * gc[p] / mc[p];
                }
            }
            x
        }
    };
    bounds.project_in_place(&mut x);
    x
}

/// `<a, m a>` over the free set (`m = 1` when absent).
fn metric_norm2(bounds: &Bounds, a: &MultiField, m: Option<&MultiField>) -> f64 {
    match m {
        None => free_dot(bounds, a, a),
        Some(m) => {
            let mut acc = 0.0;
            for c in 0..a.d() {
                let free = &bounds.free[c];
                for (p, (x, w)) in a.component(c).iter().zip(m.component(c)).enumerate() {
                    if free[p] {
                        acc += w * x * x;
                    }
                }
            }
            acc
        }
    }
}

const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1.0;
/// Relative slack on energy comparisons; near convergence the decrease per
/// step falls below the rounding error of the energy sum.
const ROUNDOFF: f64 = 1e-13;

/// Minimizes `obj` starting from `init` (projected first).
pub fn minimize_objective<O: Objective>(obj: &O, init: &MultiField, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.check()?;
    let dom = obj.domain();
    let bounds = obj.bounds();
    let h = dom.h;
    let mut x = init.clone();
    if cfg.init_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for c in 0..x.d() {
            for (p, v) in x.component_mut(c).iter_mut().enumerate() {
                if bounds.free[c][p] {
                    *v += cfg.init_noise * rng.gen::<f64>();
                }
            }
        }
    }
    bounds.project_in_place(&mut x);
    let mut fx = obj.value(&x);
    let mut gx = MultiField::zeros(x.d(), x.len());
    obj.gradient(&x, &mut gx);
    let mut pg = pg_norm(bounds, &x, &gx, h);
    let mut trace = vec![fx];
    let mut records = vec![IterRecord {
        iter: 0,
        energy: fx,
        step: cfg.step0,
        pg,
    }];
    let mut x_prev = x.clone();
    let mut theta = 1.0f64;
    let mut s = cfg.step0.min(MAX_STEP);
    let mut iters = 0;
    let mut converged = pg <= cfg.grad_tol;
    let mut stalled = false;
    let accel = cfg.momentum == Momentum::RestartAccelerated;
    let mut gy = MultiField::zeros(x.d(), x.len());
    let mut gn = MultiField::zeros(x.d(), x.len());
    let mut my = MultiField::zeros(x.d(), x.len());
    let use_metric = cfg.precondition && obj.metric(&x, &mut my);
    // gx is valid for x when `have_gx` holds
    let mut have_gx = true;

    while !converged && iters < cfg.max_iters {
        iters += 1;
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta_m = if accel { (theta - 1.0) / theta_next } else { 0.0 };
        let mut from_x = beta_m == 0.0;
        let (mut y, mut fy) = if from_x {
            (x.clone(), fx)
        } else {
            let mut y = x.axpy(beta_m, &diff(&x, &x_prev));
            bounds.project_in_place(&mut y);
            let fy = obj.value(&y);
            (y, fy)
        };
        if from_x && have_gx {
            gy.clone_from(&gx);
        } else {
            obj.gradient(&y, &mut gy);
        }
        if use_metric {
            obj.metric(&y, &mut my);
        }
        let mut backtracked = false;
        let accepted = loop {
            let m = use_metric.then_some(&my);
            let xn = trial(bounds, &y, &gy, m, s);
            let fxn = obj.value(&xn);
            let dxy = diff(&xn, &y);
            let lin = free_dot(bounds, &gy, &dxy);
            let tol = ROUNDOFF * fy.abs().max(1.0);
            let ok = if from_x && !accel {
                fxn <= fy + cfg.armijo * lin + tol
            } else {
                fxn <= fy + lin + 0.5 / s * metric_norm2(bounds, &dxy, m) + tol
            };
            let mut ok = ok;
            let mut gn_valid = false;
            if ok && fy - fxn <= 100.0 * tol {
                // energy differences are at roundoff: test local curvature instead
                obj.gradient(&xn, &mut gn);
                gn_valid = true;
                let dd = metric_norm2(bounds, &dxy, m);
                let curv = free_dot(bounds, &gn, &dxy) - lin;
                ok = curv <= dd / s;
            }
            if ok && fxn <= fx + tol {
                break Some((xn, fxn, dxy, gn_valid));
            }
            if ok && !from_x {
                // monotone restart: momentum point gave no decrease
                from_x = true;
                y = x.clone();
                fy = fx;
                if have_gx {
                    gy.clone_from(&gx);
                } else {
                    obj.gradient(&y, &mut gy);
                }
                if use_metric {
                    obj.metric(&y, &mut my);
                }
                continue;
            }
            s *= cfg.shrink;
            backtracked = true;
            if s < MIN_STEP {
                if !from_x {
                    from_x = true;
                    s = cfg.step0;
                    y = x.clone();
                    fy = fx;
                    if have_gx {
                        gy.clone_from(&gx);
                    } else {
                        obj.gradient(&y, &mut gy);
                    }
                    if use_metric {
                        obj.metric(&y, &mut my);
                    }
                    continue;
                }
                break None;
            }
        };
        let Some((xn, fxn, dxy, gn_valid)) = accepted else {
            stalled = true;
            break;
        };
        let est = dxy.norm() / (s * h);
        x_prev = std::mem::replace(&mut x, xn);
        fx = fxn;
        have_gx = gn_valid;
        if gn_valid {
            std::mem::swap(&mut gx, &mut gn);
        }
        theta = if from_x { 1.0 } else { theta_next };
        trace.push(fx);
        if est <= cfg.grad_tol || iters % 50 == 0 || iters == cfg.max_iters {
            if !have_gx {
                obj.gradient(&x, &mut gx);
                have_gx = true;
            }
            pg = pg_norm(bounds, &x, &gx, h);
            converged = pg <= cfg.grad_tol;
        } else {
            pg = est;
        }
        records.push(IterRecord {
            iter: iters,
            energy: fx,
            step: s,
            pg,
        });
        if !backtracked {
            s = (s / cfg.shrink.sqrt()).min(MAX_STEP);
        }
    }
    if !have_gx {
        obj.gradient(&x, &mut gx);
        pg = pg_norm(bounds, &x, &gx, h);
        converged = pg <= cfg.grad_tol;
    }
    if let Some(path) = &cfg.trace_path {
        write_trace(path, &records)?;
    }
    Ok(SolveResult {
        u: x,
        energy_trace: trace,
        records,
        pg_norm: pg,
        iterations: iters,
        converged,
        stalled,
        energy: EnergyBreakdown {
            dirichlet: f64::NAN,
            interaction: f64::NAN,
            reaction: f64::NAN,
            total: fx,
        },
    })
}

pub fn write_trace(path: &std::path::Path, records: &[IterRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iter,energy,step,pg")?;
    for r in records {
        writeln!(f, "{},{:e},{:e},{:e}", r.iter, r.energy, r.step, r.pg)?;
    }
    f.flush()?;
    Ok(())
}

/// Minimizes `J_beta` of `spec` from `init`.
pub fn minimize(spec: &ProblemSpec, init: &MultiField, cfg: &SolveConfig) -> Result<SolveResult> {
    check_field(&spec.domain, spec.d(), init)?;
    spec.validate()?;
    let obj = EnergyObjective::new(spec);
    let mut res = minimize_objective(&obj, init, cfg)?;
    res.energy = energy::energy(spec, &res.u)?;
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderValue {
    pub alpha: f64,
    /// Max over components of the sampled seminorm.
    pub value: f64,
}

/// Diagnostics recorded at each continuation step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub beta: f64,
    pub energy: EnergyBreakdown,
    /// `beta * int sum_J gamma_J u_J^2`
    pub interaction_scaled: f64,
    pub holder: Vec<HolderValue>,
    pub seg_violation: f64,
    pub h1_norm: f64,
    pub sup_norm: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ContinuationStep {
    pub beta: f64,
    pub solve: SolveResult,
    pub snapshot: Snapshot,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub steps: Vec<ContinuationStep>,
    /// Set when any step did not converge.
    pub warning: bool,
}

/// Discrete H1 norm `sqrt(sum_i I[u_i^2] + sum_i sum_edges (du_i)^2)`.
pub fn h1_norm(dom: &Domain, u: &MultiField) -> f64 {
    let mut acc = 0.0;
    for f in u.fields() {
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        acc += integrate(dom, &sq);
        for &(p, q) in dom.edges() {
            let d = f[p] - f[q];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn sup_norm(dom: &Domain, u: &MultiField) -> f64 {
    let mut m = 0.0f64;
    for f in u.fields() {
        for (p, v) in f.iter().enumerate() {
            if dom.is_active(p) {
                m = m.max(v.abs());
            }
        }
    }
    m
}

pub fn snapshot(spec: &ProblemSpec, res: &SolveResult, cfg: &SolveConfig) -> Result<Snapshot> {
    let dom = &spec.domain;
    let e = energy::energy(spec, &res.u)?;
    let policy = HolderPolicy::auto(dom, cfg.holder_samples, cfg.seed);
    let holder = cfg
        .holder_exponents
        .iter()
        .map(|&alpha| {
            let mut value = 0.0f64;
            for f in res.u.fields() {
                value = value.max(diagnostics::holder_seminorm(dom, f, alpha, &policy)?.value);
            }
            Ok(HolderValue { alpha, value })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshot {
        beta: spec.beta,
        energy: e,
        interaction_scaled: 2.0 * e.interaction,
        holder,
        seg_violation: diagnostics::segregation_violation(&res.u, spec.k()),
        h1_norm: h1_norm(dom, &res.u),
        sup_norm: sup_norm(dom, &res.u),
        pg_norm: res.pg_norm,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Solves along an increasing `beta` schedule, the first solve from the
/// harmonic extension of the traces and each later one warm-started.
pub fn continuation(spec: &ProblemSpec, schedule: &[f64], cfg: &SolveConfig) -> Result<ContinuationResult> {
    continuation_from(spec, schedule, cfg, None)
}

/// As [`continuation`], optionally from a given first initial field.
pub fn continuation_from(
    spec: &ProblemSpec,
    schedule: &[f64],
    cfg: &SolveConfig,
    init: Option<&MultiField>,
) -> Result<ContinuationResult> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty beta schedule".into()));
    }
    for w in schedule.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "beta schedule must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(b) = schedule.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::InvalidArgument(format!("invalid beta {b} in schedule")));
    }
    spec.validate()?;
    let mut u = match init {
        Some(u0) => u0.clone(),
        None => harmonic_init(&spec.domain, &spec.traces)?,
    };
    let mut steps = Vec::with_capacity(schedule.len());
    let mut warning = false;
    for &beta in schedule {
        let s = spec.with_beta(beta);
        let obj = EnergyObjective::new(&s);
        let mut res = minimize_objective(&obj, &u, cfg)?;
        res.energy = energy::energy(&s, &res.u)?;
        warning |= !res.converged;
        let snap = snapshot(&s, &res, cfg)?;
        u = res.u.clone();
        steps.push(ContinuationStep {
            beta,
            solve: res,
            snapshot: snap,
        });
    }
    Ok(ContinuationResult { steps, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformBoundsReport {
    /// `(beta, h1_norm, sup_norm)`
    pub rows: Vec<(f64, f64, f64)>,
    /// Relative spread `(max - min) / min` over the top decade of `beta`.
    pub h1_variation: f64,
    pub sup_variation: f64,
    /// Either variation exceeds 5%.
    pub flagged: bool,
}

pub fn uniform_bounds_report(result: &ContinuationResult) -> Result<UniformBoundsReport> {
    if result.steps.len() < 2 {
        return Err(Error::InvalidArgument(
            "uniform bounds need at least 2 schedule points".into(),
        ));
    }
    let rows: Vec<(f64, f64, f64)> = result
        .steps
        .iter()
        .map(|s| (s.beta, s.snapshot.h1_norm, s.snapshot.sup_norm))
        .collect();
    let top = rows.last().map(|r| r.0).unwrap_or(0.0);
    let mut window: Vec<&(f64, f64, f64)> = rows.iter().filter(|r| r.0 >= top / 10.0).collect();
    if window.len() < 2 {
        window = rows[rows.len() - 2..].iter().collect();
    }
    let spread = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        let lo = window.iter().map(|r| f(r)).fold(f64::INFINITY, f64::min);
        let hi = window.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
        if hi == 0.0 {
            0.0
        } else {
            (hi - lo) / lo
        }
    };
    let h1_variation = spread(&|r| r.1);
    let sup_variation = spread(&|r| r.2);
    Ok(UniformBoundsReport {
        flagged: h1_variation > 0.05 || sup_variation > 0.05,
        rows,
        h1_variation,
        sup_variation,
    })
}
