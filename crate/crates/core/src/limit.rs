//! Segregated limit problem: minimize `J_inf` (no interaction term, limit
//! reaction `F_inf`) over fields with at most `k-1` positive components at
//! every node.
//!
//! Two routes are provided. The beta-proxy route solves at a large `beta`,
//! projects onto the segregated class and re-solves each component on its
//! frozen support. The penalty route minimizes
//! `J_n(u) + 1/2 sum_i I[arctan((u_i - t_i)^2)]` along increasing `n` towards
//! a reference field `t`, then projects and re-solves the same way.

use serde::Serialize;

use crate::energy::{self, check_field, EnergyBreakdown, MultiField};
use crate::geometry::{integrate, Domain};
use crate::linalg::MaskedLaplacian;
use crate::model::{BetaRule, ProblemSpec};
use crate::solver::{self, Bounds, Objective, SolveConfig};
use crate::{Error, Result};

/// A field with at most `k-1` positive components per node, together with
/// the per-node support bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegregatedField {
    u: MultiField,
    support: Vec<u16>,
    k: usize,
}

impl SegregatedField {
    pub fn field(&self) -> &MultiField {
        &self.u
    }

    pub fn into_field(self) -> MultiField {
        self.u
    }

    /// Bit `i` of entry `p` is set when component `i` may be positive at `p`.
    pub fn support(&self) -> &[u16] {
        &self.support
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Support bitmap, one byte per node (two for `d > 8`, little endian).
    pub fn support_bytes(&self) -> Vec<u8> {
        if self.u.d() <= 8 {
            self.support.iter().map(|&m| m as u8).collect()
        } else {
            self.support.iter().flat_map(|m| m.to_le_bytes()).collect()
        }
    }
}

/// Keeps the `k-1` largest components at every node and zeroes the rest;
/// ties go to the lower component index.
pub fn segregate_project(u: &MultiField, k: usize) -> Result<SegregatedField> {
    let d = u.d();
    if k < 2 || k > d {
        return Err(Error::InvalidArgument(format!("need 2 ≤ k ≤ d, got k = {k}, d = {d}")));
    }
    if d > 16 {
        return Err(Error::InvalidArgument("at most 16 components".into()));
    }
    let keep = k - 1;
    let mut out = MultiField::zeros(d, u.len());
    let mut support = vec![0u16; u.len()];
    let mut order: Vec<usize> = (0..d).collect();
    for p in 0..u.len() {
        if let Some((c, v)) = (0..d).map(|c| (c, u.component(c)[p])).find(|(_, v)| !(*v >= 0.0)) {
            return Err(Error::NegativeValue {
                component: c,
                node: p,
                value: v,
            });
        }
        order.sort_by(|&a, &b| u.component(b)[p].total_cmp(&u.component(a)[p]).then(a.cmp(&b)));
        for &c in &order[..keep] {
            let v = u.component(c)[p];
            if v > 0.0 {
                out.component_mut(c)[p] = v;
                support[p] |= 1 << c;
            }
        }
    }
    Ok(SegregatedField { u: out, support, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitMethod {
    HardProjection,
    ArctanPenalty,
    BetaProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityResidual {
    pub component: usize,
    /// `max |4u - sum_nb u - h^2 f(u)|` over interior nodes with `u > delta`.
    pub residual: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyStep {
    pub n: f64,
    /// `sum_i I[arctan((u_i - t_i)^2)]`
    pub penalty: f64,
    /// Penalized energy at the minimizer.
    pub energy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LimitResult {
    pub u: SegregatedField,
    pub c_infty: f64,
    pub breakdown: EnergyBreakdown,
    pub residuals: Vec<PositivityResidual>,
    pub method: LimitMethod,
    /// Projection / re-solve rounds performed.
    pub rounds: usize,
    /// Energy of the large-`beta` (or largest-`n`) minimizer, when computed.
    pub c_beta: Option<f64>,
    /// `J_inf` of the projected field before the frozen-support re-solve.
    pub projected_energy: f64,
    pub penalty_trace: Vec<PenaltyStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitConfig {
    /// Maximal projection / re-solve rounds.
    pub rounds: usize,
    /// Positivity threshold; defaults to `1e-3 * max u`.
    pub delta: Option<f64>,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig { rounds: 5, delta: None }
    }
}

/// The limit functional: `beta = 0` and the reaction at `beta = infinity`.
pub fn limit_spec(spec: &ProblemSpec) -> ProblemSpec {
    let mut s = spec.with_beta(0.0);
    // the damped rule tends to the undamped reaction
    s.nonlinearity.beta_rule = BetaRule::Constant;
    s
}

/// Minimizes `J_inf` with each component confined to its frozen support.
/// Values off the support are 0 in the interior and the trace on the
/// boundary.
pub fn frozen_support_solve(spec: &ProblemSpec, seg: &SegregatedField) -> Result<MultiField> {
    let spec = limit_spec(spec);
    let dom = &spec.domain;
    check_field(dom, spec.d(), &seg.u)?;
    let mut out = MultiField::zeros(spec.d(), dom.len());
    for c in 0..spec.d() {
        let free: Vec<bool> = (0..dom.len())
            .map(|p| dom.is_interior(p) && seg.support[p] & (1 << c) != 0)
            .collect();
        let fixed: Vec<f64> = (0..dom.len())
            .map(|p| if dom.is_interior(p) { 0.0 } else { spec.traces.psi[c][p] })
            .collect();
        let x = solve_component(&spec, c, &free, &fixed, seg.u.component(c))?;
        out.component_mut(c).copy_from_slice(&x);
    }
    Ok(out)
}

/// Solves `-Delta u = f(u)` on `free` with `u = fixed` elsewhere (Newton
/// with CG inner solves; a single CG solve when `f = 0`).
fn solve_component(spec: &ProblemSpec, c: usize, free: &[bool], fixed: &[f64], start: &[f64]) -> Result<Vec<f64>> {
    let dom = &spec.domain;
    let n = dom.len();
    let h2 = dom.h * dom.h;
    let op = MaskedLaplacian { dom, free, shift: None };
    let b = op.dirichlet_rhs(fixed);
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let max_cg = 20 * n + 100;
    let mut x: Vec<f64> = (0..n).map(|p| if free[p] { start[p].max(0.0) } else { 0.0 }).collect();
    let nl = &spec.nonlinearity;
    if nl.is_zero() {
        op.solve(&b, &mut x, tol, max_cg)?;
    } else {
        let beta = f64::INFINITY;
        let mut ax = vec![0.0; n];
        let mut converged = false;
        for _ in 0..50 {
            op.apply(&x, &mut ax);
            let mut res = vec![0.0; n];
            let mut shift = vec![0.0; n];
            let mut rmax = 0.0f64;
            for p in 0..n {
                if free[p] {
                    let xy = dom.coords(p);
                    res[p] = b[p] + h2 * nl.f(c, beta, xy, x[p]) - ax[p];
                    shift[p] = -h2 * nl.df(c, beta, xy, x[p]);
                    rmax = rmax.max(res[p].abs());
                }
            }
            if rmax <= tol {
                converged = true;
                break;
            }
            let jac = MaskedLaplacian {
                dom,
                free,
                shift: Some(&shift),
            };
            let mut dx = vec![0.0; n];
            let rnorm = crate::linalg::dot(&res, &res).sqrt();
            jac.solve(&res, &mut dx, (1e-3 * rnorm).max(0.1 * tol), max_cg)?;
            for p in 0..n {
                x[p] += dx[p];
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                what: format!("frozen-support Newton solve for component {}", c + 1),
                iterations: 50,
            });
        }
    }
    for p in 0..n {
        x[p] = if free[p] { x[p].max(0.0) } else { fixed[p] };
    }
    Ok(x)
}

/// Per component, the discrete equation residual (node units) on
/// `{u_i > delta}`; `delta` defaults to `1e-3 * max u`.
pub fn positivity_residual(
    spec: &ProblemSpec,
    u: &SegregatedField,
    delta: Option<f64>,
) -> Result<Vec<PositivityResidual>> {
    let dom = &spec.domain;
    check_field(dom, spec.d(), &u.u)?;
    let delta = delta.unwrap_or(1e-3 * u.u.max_value());
    if !(delta > 0.0) && u.u.max_value() > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "positivity threshold must be > 0, got {delta}"
        )));
    }
    let lim = limit_spec(spec);
    let h2 = dom.h * dom.h;
    Ok((0..spec.d())
        .map(|c| {
            let f = u.u.component(c);
            let mut best = 0.0f64;
            let mut empty = true;
            for &p in dom.interior_nodes() {
                if f[p] > delta {
                    empty = false;
                    let [e, w, nn, s] = dom.neighbours(p);
                    let r = 4.0 * f[p]
                        - f[e]
                        - f[w]
                        - f[nn]
                        - f[s]
                        - h2 * lim.nonlinearity.f(c, f64::INFINITY, dom.coords(p), f[p]);
                    best = best.max(r.abs());
                }
            }
            PositivityResidual {
                component: c,
                residual: best,
                empty,
            }
        })
        .collect())
}

fn finish(
    spec: &ProblemSpec,
    seg: SegregatedField,
    method: LimitMethod,
    rounds: usize,
    c_beta: Option<f64>,
    projected_energy: f64,
    penalty_trace: Vec<PenaltyStep>,
    cfg: &LimitConfig,
) -> Result<LimitResult> {
    let lim = limit_spec(spec);
    let breakdown = energy::energy(&lim, &seg.u)?;
    let residuals = positivity_residual(spec, &seg, cfg.delta)?;
    Ok(LimitResult {
        c_infty: breakdown.total,
        breakdown,
        residuals,
        method,
        rounds,
        c_beta,
        projected_energy,
        penalty_trace,
        u: seg,
    })
}

/// Projection followed by the frozen-support re-solve, without any further
/// `beta` solves.
pub fn solve_limit_hard_projection(spec: &ProblemSpec, u: &MultiField, cfg: &LimitConfig) -> Result<LimitResult> {
    let seg = segregate_project(u, spec.k())?;
    let projected = energy::energy(&limit_spec(spec), &seg.u)?.total;
    let v = frozen_support_solve(spec, &seg)?;
    let seg = segregate_project(&v, spec.k())?;
    finish(
        spec,
        seg,
        LimitMethod::HardProjection,
        1,
        None,
        projected,
        Vec::new(),
        cfg,
    )
}

/// Limit from a minimizer `u_beta` of `J_beta` (with `beta = spec.beta`).
/// Each round projects, re-solves on the frozen supports and re-minimizes
/// `J_beta` from the re-solved field; rounds stop when the support pattern
/// repeats. The lowest `J_inf` found is returned.
pub fn solve_limit_from(
    spec: &ProblemSpec,
    u_beta: &MultiField,
    solve_cfg: &SolveConfig,
    cfg: &LimitConfig,
) -> Result<LimitResult> {
    let lim = limit_spec(spec);
    let c_beta = energy::energy(spec, u_beta)?.total;
    let mut w = u_beta.clone();
    let mut seen: Vec<Vec<u16>> = Vec::new();
    let mut best: Option<(f64, SegregatedField, f64)> = None;
    let mut rounds = 0;
    for round in 0..cfg.rounds.max(1) {
        let seg = segregate_project(&w, spec.k())?;
        if seen.contains(&seg.support) {
            break;
        }
        rounds += 1;
        let projected = energy::energy(&lim, &seg.u)?.total;
        let v = frozen_support_solve(spec, &seg)?;
        let c = energy::energy(&lim, &v)?.total;
        seen.push(seg.support.clone());
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, segregate_project(&v, spec.k())?, projected));
        }
        if round + 1 < cfg.rounds {
            w = solver::minimize(spec, &v, solve_cfg)?.u;
        }
    }
    let (_, seg, projected) = best.expect("at least one round");
    finish(
        spec,
        seg,
        LimitMethod::BetaProxy,
        rounds,
        Some(c_beta),
        projected,
        Vec::new(),
        cfg,
    )
}

/// Continuation over the decades `1, 10, ..., beta_max` followed by
/// [`solve_limit_from`].
pub fn solve_limit_beta_proxy(
    spec: &ProblemSpec,
    beta_max: f64,
    solve_cfg: &SolveConfig,
    cfg: &LimitConfig,
) -> Result<LimitResult> {
    let schedule = decades(beta_max)?;
    let cont = solver::continuation(spec, &schedule, solve_cfg)?;
    let last = cont.steps.last().expect("nonempty schedule");
    solve_limit_from(&spec.with_beta(last.beta), &last.solve.u, solve_cfg, cfg)
}

/// `1, 10, 100, ...` up to `beta_max` (always ending at `beta_max`).
pub fn decades(beta_max: f64) -> Result<Vec<f64>> {
    if !(beta_max > 0.0 && beta_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "beta_max must be positive, got {beta_max}"
        )));
    }
    let mut s = Vec::new();
    let mut b = 1.0;
    while b < beta_max * (1.0 - 1e-12) {
        s.push(b);
        b *= 10.0;
    }
    s.push(beta_max);
    Ok(s)
}

/// `J_n + 1/2 sum_i I[arctan((u_i - t_i)^2)]`.
pub struct PenalizedObjective<'a> {
    pub spec: &'a ProblemSpec,
    pub target: &'a MultiField,
    bounds: Bounds,
}

impl<'a> PenalizedObjective<'a> {
    pub fn new(spec: &'a ProblemSpec, target: &'a MultiField) -> Self {
        PenalizedObjective {
            spec,
            target,
            bounds: Bounds::traces(&spec.domain, &spec.traces),
        }
    }

    /// `sum_i I[arctan((u_i - t_i)^2)]`
    pub fn penalty_integral(&self, u: &MultiField) -> f64 {
        penalty_integral(&self.spec.domain, u, self.target)
    }
}

pub fn penalty_integral(dom: &Domain, u: &MultiField, target: &MultiField) -> f64 {
    (0..u.d())
        .map(|c| {
            let g: Vec<f64> = u
                .component(c)
                .iter()
                .zip(target.component(c))
                .map(|(a, b)| ((a - b) * (a - b)).atan())
                .collect();
            integrate(dom, &g)
        })
        .sum()
}

impl Objective for PenalizedObjective<'_> {
    fn domain(&self) -> &Domain {
        &self.spec.domain
    }
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }
    fn value(&self, u: &MultiField) -> f64 {
        energy::energy_unchecked(self.spec, u).total + 0.5 * self.penalty_integral(u)
    }
    fn gradient(&self, u: &MultiField, out: &mut MultiField) {
        energy::gradient_into(self.spec, u, out);
        let h2 = self.spec.domain.h * self.spec.domain.h;
        for c in 0..u.d() {
            let uc = u.component(c);
            let tc = self.target.component(c);
            let g = out.component_mut(c);
            for &p in self.spec.domain.interior_nodes() {
                // d/ds 1/2 arctan(w^2) = w / (1 + w^4)
                let w = uc[p] - tc[p];
                g[p] += h2 * w / (1.0 + w * w * w * w);
            }
        }
    }
    fn metric(&self, u: &MultiField, out: &mut MultiField) -> bool {
        // the arctan term has curvature at most h^2, below the Dirichlet part
        energy::metric_into(self.spec, u, out);
        true
    }
}

/// Minimizes the penalized functional along `n_schedule` (the coupling of
/// the interaction term), warm-started from the harmonic extension, then
/// projects and re-solves on the frozen supports.
pub fn solve_limit_penalty(
    spec: &ProblemSpec,
    target: &MultiField,
    n_schedule: &[f64],
    solve_cfg: &SolveConfig,
    cfg: &LimitConfig,
) -> Result<LimitResult> {
    if n_schedule.is_empty() {
        return Err(Error::InvalidArgument("empty penalty schedule".into()));
    }
    for w in n_schedule.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(
                "penalty schedule must be strictly increasing".into(),
            ));
        }
    }
    check_field(&spec.domain, spec.d(), target)?;
    spec.validate()?;
    let mut u = solver::harmonic_init(&spec.domain, &spec.traces)?;
    let mut trace = Vec::with_capacity(n_schedule.len());
    let mut last_energy = f64::NAN;
    for &n in n_schedule {
        let s = spec.with_beta(n);
        let obj = PenalizedObjective::new(&s, target);
        let res = solver::minimize_objective(&obj, &u, solve_cfg)?;
        trace.push(PenaltyStep {
            n,
            penalty: obj.penalty_integral(&res.u),
            energy: res.energy.total,
            converged: res.converged,
        });
        last_energy = energy::energy(&s, &res.u)?.total;
        u = res.u;
    }
    let seg = segregate_project(&u, spec.k())?;
    let projected = energy::energy(&limit_spec(spec), &seg.u)?.total;
    let v = frozen_support_solve(spec, &seg)?;
    let seg = segregate_project(&v, spec.k())?;
    finish(
        spec,
        seg,
        LimitMethod::ArctanPenalty,
        1,
        Some(last_energy),
        projected,
        trace,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::segregation_violation;
    use crate::geometry::build_rectangle;
    use crate::model::{InteractionSpec, Nonlinearity, TraceData};

    fn mf(rows: &[[f64; 3]]) -> MultiField {
        MultiField::from_fields((0..3).map(|c| rows.iter().map(|r| r[c]).collect()).collect()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let s = segregate_project(
            &mf(&[[3.0, 2.0, 1.0], [1.0, 1.0, 1.0], [0.0, 5.0, 4.0], [2.0, 0.0, 0.0]]),
            3,
        )
        .unwrap();
        assert_eq!(s.field().at(0), vec![3.0, 2.0, 0.0]);
        assert_eq!(s.field().at(1), vec![1.0, 1.0, 0.0]);
        assert_eq!(s.field().at(2), vec![0.0, 5.0, 4.0]);
        assert_eq!(s.field().at(3), vec![2.0, 0.0, 0.0]);
        assert_eq!(s.support(), &[0b011, 0b011, 0b110, 0b001]);
        assert_eq!(segregation_violation(s.field(), 3), 0.0);
        assert!(segregate_project(&mf(&[[-1.0, 0.0, 0.0]]), 3).is_err());
    }

    fn segregated_spec(n: usize, nl: Nonlinearity) -> ProblemSpec {
        let dom = build_rectangle(n, n, 1.0 / (n - 1) as f64).unwrap();
        let traces = TraceData::from_fn(&dom, 3, |c, x, y| match c {
            0 => 1.0 + x,
            1 => 2.0 * y * (1.0 - y) + x * x,
            _ => 0.0,
        })
        .unwrap();
        ProblemSpec::new(dom, InteractionSpec::uniform(3, 3, 1.0).unwrap(), traces, nl, 1.0).unwrap()
    }

    #[test]
    fn frozen_resolve_is_harmonic_on_support() {
        let spec = segregated_spec(17, Nonlinearity::zero(3));
        let init = solver::harmonic_init(&spec.domain, &spec.traces).unwrap();
        let r = solve_limit_hard_projection(&spec, &init, &LimitConfig::default()).unwrap();
        for res in &r.residuals[..2] {
            assert!(res.residual <= 1e-8, "{res:?}");
        }
        assert!(r.residuals[2].empty);
        assert!(r.c_infty <= r.projected_energy + 1e-12);
    }

    #[test]
    fn newton_resolve_with_saturating_reaction() {
        let spec = segregated_spec(17, Nonlinearity::saturating(vec![5.0; 3]));
        let init = solver::harmonic_init(&spec.domain, &spec.traces).unwrap();
        let r = solve_limit_hard_projection(&spec, &init, &LimitConfig::default()).unwrap();
        for res in &r.residuals[..2] {
            assert!(res.residual <= 1e-10, "{res:?}");
        }
    }

    #[test]
    fn residual_detects_spike_and_empty_set() {
        let spec = segregated_spec(17, Nonlinearity::zero(3));
        let init = solver::harmonic_init(&spec.domain, &spec.traces).unwrap();
        let r = solve_limit_hard_projection(&spec, &init, &LimitConfig::default()).unwrap();
        let mut spiked = r.u.field().clone();
        spiked.component_mut(0)[spec.domain.index(8, 8)] += 1.0;
        let s = segregate_project(&spiked, 3).unwrap();
        assert!(positivity_residual(&spec, &s, None).unwrap()[0].residual > 1.0);
        let all = positivity_residual(&spec, &r.u, Some(1e6)).unwrap();
        assert!(all.iter().all(|x| x.empty && x.residual == 0.0));
    }

    #[test]
    fn penalty_gradient_matches_differences() {
        let spec = segregated_spec(8, Nonlinearity::zero(3)).with_beta(3.0);
        let n = spec.domain.len();
        let u = MultiField::from_fields(
            (0..3)
                .map(|c| (0..n).map(|p| ((p * 7 + c * 3) % 11) as f64 / 5.0).collect())
                .collect(),
        )
        .unwrap();
        let t = MultiField::from_fields(
            (0..3)
                .map(|c| (0..n).map(|p| ((p * 5 + c) % 7) as f64 / 4.0).collect())
                .collect(),
        )
        .unwrap();
        let phi = MultiField::from_fields(
            (0..3)
                .map(|c| {
                    (0..n)
                        .map(|p| {
                            if spec.domain.is_interior(p) {
                                ((p + c) % 5) as f64 / 5.0 - 0.4
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let obj = PenalizedObjective::new(&spec, &t);
        let mut g = MultiField::zeros(3, n);
        obj.gradient(&u, &mut g);
        let eps = 1e-5;
        let fd = (obj.value(&u.axpy(eps, &phi)) - obj.value(&u.axpy(-eps, &phi))) / (2.0 * eps);
        assert!((fd - g.dot(&phi)).abs() <= 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn penalty_route_checks() {
        let spec = segregated_spec(8, Nonlinearity::zero(3));
        let t = MultiField::zeros(3, spec.domain.len());
        assert!(solve_limit_penalty(&spec, &t, &[], &SolveConfig::default(), &LimitConfig::default()).is_err());
    }

    #[test]
    fn decade_schedule() {
        assert_eq!(decades(1e4).unwrap(), vec![1.0, 10.0, 100.0, 1000.0, 1e4]);
        assert_eq!(decades(0.5).unwrap(), vec![0.5]);
        assert_eq!(decades(50.0).unwrap(), vec![1.0, 10.0, 50.0]);
    }
}
