//! Acceptance suite: one PASS/FAIL line per criterion on stdout.
//!
//! Lines are written straight to the process stdout so they show up without
//! `--nocapture`.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{banded_harmonic, max_diff};
use kseg::config::parse_config;
use kseg::diagnostics::{holder_seminorm, interaction_decay, pohozaev_check, segregation_violation, HolderPolicy};
use kseg::energy::{energy, energy_gradient, MultiField};
use kseg::fixtures::{saturating_document, CROSSING_TOML};
use kseg::geometry::{build_rectangle, BallSpec};
use kseg::limit::{
    frozen_support_solve, positivity_residual, segregate_project, solve_limit_from, solve_limit_penalty, LimitResult,
};
use kseg::model::{
    k_subsets, make_trace_library, mask_members, InteractionSpec, Nonlinearity, ProblemSpec, TraceData, TraceRecipe,
};
use kseg::solver::{continuation, h1_norm, minimize, sup_norm, ContinuationResult, SolveConfig};
use kseg::threshold::{alpha_circle, nu_bar, AlphaSearch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("{} [{id:02}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn finish(id: usize, name: &str, checks: &[(bool, String)], elapsed: Duration, budget: Duration) {
    let in_time = elapsed <= budget;
    let pass = checks.iter().all(|c| c.0) && in_time;
    let mut detail: Vec<String> = checks.iter().map(|c| c.1.clone()).collect();
    detail.push(format!(
        "time {:.2}s (limit {}s)",
        elapsed.as_secs_f64(),
        budget.as_secs()
    ));
    report(id, name, pass, &detail.join("; "));
    assert!(pass, "criterion {id} ({name}) failed");
}

struct CrossingRun {
    spec: ProblemSpec,
    solve: SolveConfig,
    cont: ContinuationResult,
    proxy: LimitResult,
    elapsed: Duration,
}

/// The standard crossing fixture: continuation plus the beta-proxy limit,
/// computed once and shared.
fn crossing() -> &'static CrossingRun {
    static RUN: OnceLock<CrossingRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = Instant::now();
        let (_, exp) = parse_config(CROSSING_TOML).unwrap();
        let cont = continuation(&exp.spec, &exp.schedule, &exp.solve).unwrap();
        let last = cont.steps.last().unwrap();
        let proxy = solve_limit_from(&exp.spec.with_beta(last.beta), &last.solve.u, &exp.solve, &exp.limit).unwrap();
        CrossingRun {
            spec: exp.spec,
            solve: exp.solve,
            cont,
            proxy,
            elapsed: t.elapsed(),
        }
    })
}

#[test]
fn criterion_01_gradient_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = rng.gen_range(6..=16);
        let dom = build_rectangle(n, n, 1.0 / (n - 1) as f64).unwrap();
        let nl = if trial % 2 == 0 {
            Nonlinearity::zero(4)
        } else {
            Nonlinearity::saturating(vec![1.0, 2.0, 0.5, 3.0])
        };
        let beta = rng.gen_range(0.0..200.0);
        let spec = ProblemSpec::new(
            dom.clone(),
            InteractionSpec::uniform(4, 3, 1.0).unwrap(),
            TraceData::zeros(&dom, 4),
            nl,
            beta,
        )
        .unwrap();
        let mut u = MultiField::zeros(4, dom.len());
        for c in 0..4 {
            for &p in dom.interior_nodes() {
                u.component_mut(c)[p] = rng.gen_range(0.1..1.5);
            }
        }
        let g = energy_gradient(&spec, &u).unwrap();
        let scale = (0..4)
            .flat_map(|c| g.component(c).to_vec())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let eps = 1e-6;
        for c in 0..4 {
            for &p in dom.interior_nodes() {
                let mut a = u.clone();
                let mut b = u.clone();
                a.component_mut(c)[p] += eps;
                b.component_mut(c)[p] -= eps;
                let fd = (energy(&spec, &a).unwrap().total - energy(&spec, &b).unwrap().total) / (2.0 * eps);
                worst = worst.max((fd - g.component(c)[p]).abs() / scale);
            }
        }
    }
    finish(
        1,
        "gradient matches central differences",
        &[(worst <= 1e-6, format!("max relative error {worst:.2e} (limit 1e-6)"))],
        t.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_02_existence_descent() {
    let t = Instant::now();
    let n = 64;
    let dom = build_rectangle(n, n, 1.0 / (n - 1) as f64).unwrap();
    let traces = TraceData::from_fn(
        &dom,
        3,
        |c, x, y| if c == 0 { 1.0 + x * x - y * y + 0.5 * x } else { 0.0 },
    )
    .unwrap();
    let oracle = banded_harmonic(&dom, &traces.psi[0]);
    let spec = ProblemSpec::new(
        dom.clone(),
        InteractionSpec::uniform(3, 3, 1.0).unwrap(),
        traces,
        Nonlinearity::zero(3),
        0.0,
    )
    .unwrap();
    let r = minimize(&spec, &MultiField::zeros(3, dom.len()), &SolveConfig::default()).unwrap();
    let err = max_diff(r.u.component(0), &oracle);
    finish(
        2,
        "beta = 0 descent reaches the harmonic extension",
        &[
            (
                r.converged && r.pg_norm <= 1e-6,
                format!("pg-norm {:.2e} after {} iterations", r.pg_norm, r.iterations),
            ),
            (err <= 1e-6, format!("max-norm error {err:.2e} (limit 1e-6)")),
        ],
        t.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_03_interaction_decay() {
    let run = crossing();
    let decay = interaction_decay(&run.cont).unwrap();
    let first = decay.rows[0].1;
    let last = decay.rows.last().unwrap().1;
    let wiggle = decay.rows.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1);
    let converged = run.cont.steps.iter().all(|s| s.solve.converged);
    let series: Vec<String> = decay.rows.iter().map(|r| format!("{:.3e}", r.1)).collect();
    finish(
        3,
        "interaction term decays along beta",
        &[
            (last <= 0.1 * first, format!("ratio {:.4} (limit 0.1)", last / first)),
            (
                wiggle,
                format!("series [{}], non-increasing within 10%", series.join(", ")),
            ),
            (converged, format!("all solves converged: {converged}")),
        ],
        run.elapsed,
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_04_uniform_holder_trend() {
    let run = crossing();
    let t = Instant::now();
    let mid: Vec<f64> = run
        .cont
        .steps
        .iter()
        .filter(|s| s.beta >= 1e2 && s.beta <= 1e4)
        .map(|s| {
            s.snapshot
                .holder
                .iter()
                .find(|h| (h.alpha - 0.3).abs() < 1e-12)
                .unwrap()
                .value
        })
        .collect();
    let hmax = mid.iter().cloned().fold(f64::MIN, f64::max);
    let hmin = mid.iter().cloned().fold(f64::MAX, f64::min);
    // independent recomputation on the last step
    let last = run.cont.steps.last().unwrap();
    let again = (0..3)
        .map(|c| {
            holder_seminorm(
                &run.spec.domain,
                last.solve.u.component(c),
                0.3,
                &HolderPolicy::Exhaustive,
            )
            .unwrap()
            .value
        })
        .fold(0.0f64, f64::max);
    let top: Vec<&_> = run.cont.steps.iter().filter(|s| s.beta >= 1e3).collect();
    let var = |f: &dyn Fn(&MultiField) -> f64| {
        let v: Vec<f64> = top.iter().map(|s| f(&s.solve.u)).collect();
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        (hi - lo) / lo
    };
    let h1 = var(&|u| h1_norm(&run.spec.domain, u));
    let sup = var(&|u| sup_norm(&run.spec.domain, u));
    finish(
        4,
        "uniform Hölder and norm bounds",
        &[
            (
                hmax <= 2.0 * hmin,
                format!(
                    "[u]_0.3 over beta in [1e2, 1e4]: {hmin:.4}..{hmax:.4}, ratio {:.3} (limit 2)",
                    hmax / hmin
                ),
            ),
            (
                (again - last.snapshot.holder[0].value).abs() <= 1e-12 * again,
                format!("recomputed [u]_0.3 = {again:.6}"),
            ),
            (h1 <= 0.05, format!("H1 variation over top decade {h1:.4} (limit 0.05)")),
            (
                sup <= 0.05,
                format!("sup variation over top decade {sup:.4} (limit 0.05)"),
            ),
        ],
        run.elapsed + t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_05_energy_convergence() {
    let run = crossing();
    let t = Instant::now();
    let c_beta = run.cont.steps.last().unwrap().snapshot.energy.total;
    let c_inf = run.proxy.c_infty;
    let gap = (c_beta - c_inf).abs() / c_inf.abs();
    let (_, exp) = parse_config(CROSSING_TOML).unwrap();
    let pen = solve_limit_penalty(
        &run.spec,
        run.proxy.u.field(),
        &exp.penalty_schedule,
        &run.solve,
        &exp.limit,
    )
    .unwrap();
    let agree = (pen.c_infty - c_inf).abs() / c_inf.abs();
    let area = 1.0;
    let final_penalty = pen.penalty_trace.last().unwrap().penalty;
    let pen_decreasing = pen.penalty_trace.windows(2).all(|w| w[1].penalty <= w[0].penalty);
    finish(
        5,
        "energy convergence to the segregated limit",
        &[
            (
                gap <= 0.05,
                format!("c_beta(1e4) = {c_beta:.6}, c_inf = {c_inf:.6}, gap {gap:.2e} (limit 0.05)"),
            ),
            (
                agree <= 0.02,
                format!(
                    "penalty route c_inf = {:.6}, disagreement {agree:.2e} (limit 0.02)",
                    pen.c_infty
                ),
            ),
            (
                final_penalty <= 1e-3 * area && pen_decreasing,
                format!("penalty integral {final_penalty:.2e} at final n (limit 1e-3), decreasing: {pen_decreasing}"),
            ),
        ],
        run.elapsed + t.elapsed(),
        Duration::from_secs(600),
    );
}

/// Exhaustive scan: largest k-fold product over all k-subsets and nodes.
fn brute_violation(u: &MultiField, k: usize) -> f64 {
    let subsets = k_subsets(u.d(), k);
    let mut worst = 0.0f64;
    for p in 0..u.len() {
        for &m in &subsets {
            let prod: f64 = mask_members(m).iter().map(|&c| u.component(c)[p]).product();
            worst = worst.max(prod);
        }
    }
    worst
}

#[test]
fn criterion_06_segregation_exactness() {
    let run = crossing();
    let t = Instant::now();
    let mut fields: Vec<(MultiField, usize, String)> = run
        .cont
        .steps
        .iter()
        .map(|s| (s.solve.u.clone(), 3, format!("crossing beta={}", s.beta)))
        .collect();
    let dom = build_rectangle(16, 16, 1.0 / 15.0).unwrap();
    for d in 3..=6 {
        for k in 3..=d {
            let spec = ProblemSpec::new(
                dom.clone(),
                InteractionSpec::uniform(d, k, 1.0).unwrap(),
                make_trace_library(&dom, d, k, &TraceRecipe::PairwiseBumps { amplitude: 2.0 }).unwrap(),
                Nonlinearity::zero(d),
                10.0,
            )
            .unwrap();
            let u = minimize(
                &spec,
                &kseg::solver::harmonic_init(&dom, &spec.traces).unwrap(),
                &SolveConfig::default(),
            )
            .unwrap()
            .u;
            fields.push((u, k, format!("pairwise d={d} k={k}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for d in 2..=6 {
        for k in 2..=d {
            let u = MultiField::from_fields(
                (0..d)
                    .map(|_| {
                        (0..200)
                            .map(|_| {
                                if rng.gen_bool(0.2) {
                                    1.0
                                } else {
                                    rng.gen_range(0.0..2.0)
                                }
                            })
                            .collect()
                    })
                    .collect(),
            )
            .unwrap();
            fields.push((u, k, format!("random d={d} k={k}")));
        }
    }
    let mut bad = Vec::new();
    for (u, k, name) in &fields {
        let s = segregate_project(u, *k).unwrap();
        if segregation_violation(s.field(), *k) != 0.0 || brute_violation(s.field(), *k) != 0.0 {
            bad.push(name.clone());
        }
    }
    finish(
        6,
        "projection is exactly segregated",
        &[(
            bad.is_empty(),
            format!("{} fields scanned, violations: {:?}", fields.len(), bad),
        )],
        t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_07_pohozaev() {
    let t = Instant::now();
    let ball = BallSpec::new((0.5, 0.5), 0.25);
    let mut checks = Vec::new();
    for (name, f) in [
        ("x1", (|x: f64, _y: f64| x) as fn(f64, f64) -> f64),
        ("x1x2", |x: f64, y: f64| x * y),
    ] {
        let mut res = Vec::new();
        for n in [33usize, 65] {
            let dom = build_rectangle(n, n, 1.0 / (n - 1) as f64).unwrap();
            let spec = ProblemSpec::new(
                dom.clone(),
                InteractionSpec::uniform(3, 3, 1.0).unwrap(),
                TraceData::zeros(&dom, 3),
                Nonlinearity::zero(3),
                0.0,
            )
            .unwrap();
            let mut u = MultiField::zeros(3, dom.len());
            u.component_mut(0).copy_from_slice(&dom.sample(f));
            let r = pohozaev_check(&spec, &u, &ball).unwrap();
            // relative residual, C = 1
            res.push((r.residual / r.lhs.abs().max(r.rhs.abs()), dom.h));
        }
        let bound = res.iter().all(|(r, h)| r <= h);
        let ratio = res[1].0 / res[0].0;
        let halves = (0.35..=0.65).contains(&ratio);
        checks.push((
            bound,
            format!(
                "{name}: relative residual {:.2e} at h=1/32, {:.2e} at h=1/64 (limit h)",
                res[0].0, res[1].0
            ),
        ));
        checks.push((halves, format!("{name}: ratio {ratio:.3} (limit 0.5 +- 30%)")));
    }
    finish(
        7,
        "local Pohozaev identity",
        &checks,
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_08_threshold_constants() {
    let t = Instant::now();
    let cfg = AlphaSearch::default();
    let a: Vec<_> = (2..=4).map(|l| alpha_circle(l, &cfg).unwrap()).collect();
    let certified = a.iter().all(|e| e.config.certify());
    let nu = nu_bar(3, &[(2, a[0].alpha), (3, a[1].alpha)]).unwrap();
    finish(
        8,
        "overlapping-partition constants on the circle",
        &[
            ((a[0].alpha - 2.0).abs() <= 1e-6, format!("alpha_2 = {:.9}", a[0].alpha)),
            (a[1].alpha <= 2.0 + 1e-6, format!("alpha_3 <= {:.9}", a[1].alpha)),
            (a[2].alpha <= 2.0 + 1e-6, format!("alpha_4 <= {:.9}", a[2].alpha)),
            (
                certified,
                format!("exact feasibility of returned configurations: {certified}"),
            ),
            (nu <= 2.0 / 3.0 + 1e-6, format!("nu_bar(3) <= {nu:.9}")),
        ],
        t.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_09_positivity_set_equation() {
    let run = crossing();
    let t = Instant::now();
    let zero_res = run.proxy.residuals.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    // saturating reaction on the same fixture
    let (_, exp) = parse_config(&kseg::config::emit_document(&saturating_document(32, 5.0)).unwrap()).unwrap();
    let cont = continuation(&exp.spec, &exp.schedule, &exp.solve).unwrap();
    let last = cont.steps.last().unwrap();
    let seg = segregate_project(&last.solve.u, 3).unwrap();
    let v = frozen_support_solve(&exp.spec, &seg).unwrap();
    let sat = positivity_residual(&exp.spec, &segregate_project(&v, 3).unwrap(), None).unwrap();
    let sat_res = sat.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    let nonempty = sat.iter().all(|r| !r.empty) && run.proxy.residuals.iter().all(|r| !r.empty);
    finish(
        9,
        "equation on the positivity sets",
        &[
            (zero_res <= 1e-8, format!("F = 0: residual {zero_res:.2e} (limit 1e-8)")),
            (
                sat_res <= 1e-6,
                format!("saturating F: residual {sat_res:.2e} (limit 1e-6)"),
            ),
            (nonempty, format!("all positivity sets nonempty: {nonempty}")),
        ],
        run.elapsed + t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("crossing.toml");
    std::fs::write(&cfg, CROSSING_TOML).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_kseg"))
            .args([
                "continue",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "42",
            ])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(std::fs::read(out.join("summary.json")).unwrap());
    }
    let same = outputs[0] == outputs[1];
    finish(
        10,
        "identical seeds give identical summaries",
        &[(
            same,
            format!(
                "summary.json byte-identical across two runs: {same} ({} bytes)",
                outputs[0].len()
            ),
        )],
        t.elapsed(),
        Duration::from_secs(600),
    );
}
