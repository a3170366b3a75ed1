//! Overlapping-partition constants on the circle.
//!
//! For `l` nonnegative profiles on the unit circle whose `l`-fold product
//! vanishes, `alpha_l = inf sum_j gamma(lambda(u_j))`, where `lambda` is the
//! first Dirichlet eigenvalue of the positivity set and
//! `gamma(t) = sqrt(((N-2)/2)^2 + t) - (N-2)/2`. In dimension 2 a support is
//! a union of open arcs, `lambda = (pi / L_max)^2` and `gamma(lambda) =
//! pi / L_max`.
//!
//! Angles are stored as integer ticks, [`TICKS`] per full turn, so that the
//! overlap condition can be certified exactly.

use std::fmt;

use serde::Serialize;

use crate::{Error, Result};

/// Ticks per full turn.
pub const TICKS: u64 = 1 << 40;

pub fn gamma_of(t: f64, n: u32) -> Result<f64> {
    if !(t >= 0.0) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "gamma needs t >= 0 and N >= 2, got t = {t}, N = {n}"
        )));
    }
    let a = (n as f64 - 2.0) / 2.0;
    Ok((a * a + t).sqrt() - a)
}

/// Open arc `(start, start + len)` in ticks, taken modulo [`TICKS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    pub start: u64,
    pub len: u64,
}

impl Arc {
    pub fn new(start: u64, len: u64) -> Self {
        Arc {
            start: start % TICKS,
            len,
        }
    }

    /// From radians; the length is rounded down to whole ticks.
    pub fn from_radians(start: f64, len: f64) -> Self {
        let turn = std::f64::consts::TAU;
        let s = (start.rem_euclid(turn) / turn * TICKS as f64).round() as u64;
        let l = (len / turn * TICKS as f64).floor() as u64;
        Arc::new(s, l.min(TICKS))
    }

    pub fn len_radians(&self) -> f64 {
        std::f64::consts::TAU * self.len as f64 / TICKS as f64
    }

    pub fn start_radians(&self) -> f64 {
        std::f64::consts::TAU * self.start as f64 / TICKS as f64
    }

    /// Whether the point `x / 2` (doubled tick coordinates) lies inside.
    fn contains_doubled(&self, x: u64) -> bool {
        let period = 2 * TICKS;
        let off = (x + period - 2 * self.start) % period;
        off > 0 && off < 2 * self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CircleSupport {
    Whole,
    Arcs(Vec<Arc>),
}

impl CircleSupport {
    fn contains_doubled(&self, x: u64) -> bool {
        match self {
            CircleSupport::Whole => true,
            CircleSupport::Arcs(a) => a.iter().any(|arc| arc.contains_doubled(x)),
        }
    }

    fn longest(&self) -> Option<u64> {
        match self {
            CircleSupport::Whole => None,
            CircleSupport::Arcs(a) => a.iter().map(|x| x.len).max(),
        }
    }

    /// `pi / L_max` (0 for the whole circle, infinite for the empty set).
    pub fn gamma(&self) -> f64 {
        match self {
            CircleSupport::Whole => 0.0,
            CircleSupport::Arcs(_) => match self.longest() {
                None | Some(0) => f64::INFINITY,
                Some(l) => TICKS as f64 / (2.0 * l as f64),
            },
        }
    }

    pub fn intervals_radians(&self) -> Vec<(f64, f64)> {
        match self {
            CircleSupport::Whole => vec![(0.0, std::f64::consts::TAU)],
            CircleSupport::Arcs(a) => a
                .iter()
                .map(|x| (x.start_radians(), x.start_radians() + x.len_radians()))
                .collect(),
        }
    }
}

/// First Dirichlet eigenvalue of a union of arcs: `(pi / L_max)^2`; 0 for
/// the whole circle and `+inf` for the empty set.
pub fn lambda_arcs(support: &CircleSupport) -> f64 {
    let g = support.gamma();
    g * g
}

/// `l` supports on the circle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcConfig {
    pub sets: Vec<CircleSupport>,
}

impl ArcConfig {
    pub fn ell(&self) -> usize {
        self.sets.len()
    }

    /// `sum_j gamma(lambda(u_j))`.
    pub fn cost(&self) -> f64 {
        self.sets.iter().map(CircleSupport::gamma).sum()
    }

    /// Arcs within each set are nonempty, at most one turn long and pairwise
    /// disjoint.
    pub fn well_formed(&self) -> bool {
        self.sets.iter().all(|s| match s {
            CircleSupport::Whole => true,
            CircleSupport::Arcs(arcs) => {
                arcs.iter().all(|a| a.len > 0 && a.len <= TICKS && a.start < TICKS)
                    && arcs.iter().map(|a| a.len).sum::<u64>() <= TICKS
                    && pairwise_disjoint(arcs)
            }
        })
    }

    /// Exact check that no point of the circle lies in every support.
    /// Coverage is constant between consecutive arc endpoints, so it
    /// suffices to test every endpoint and every midpoint between
    /// neighbouring endpoints (in doubled coordinates).
    pub fn certify(&self) -> bool {
        if !self.well_formed() || self.sets.is_empty() {
            return false;
        }
        let mut ends: Vec<u64> = Vec::new();
        for s in &self.sets {
            if let CircleSupport::Arcs(arcs) = s {
                for a in arcs {
                    ends.push(a.start);
                    ends.push((a.start + a.len) % TICKS);
                }
            }
        }
        ends.sort_unstable();
        ends.dedup();
        let mut probes: Vec<u64> = Vec::with_capacity(2 * ends.len() + 1);
        if ends.is_empty() {
            probes.push(0);
        }
        for (n, &e) in ends.iter().enumerate() {
            probes.push(2 * e);
            let next = if n + 1 < ends.len() {
                ends[n + 1]
            } else {
                ends[0] + TICKS
            };
            probes.push((e + next) % (2 * TICKS));
        }
        !probes.iter().any(|&x| self.sets.iter().all(|s| s.contains_doubled(x)))
    }

    pub fn intervals_radians(&self) -> Vec<Vec<(f64, f64)>> {
        self.sets.iter().map(CircleSupport::intervals_radians).collect()
    }
}

fn pairwise_disjoint(arcs: &[Arc]) -> bool {
    for (i, a) in arcs.iter().enumerate() {
        for b in &arcs[i + 1..] {
            // b starts inside a, or a starts inside b
            let ab = (b.start + TICKS - a.start) % TICKS;
            let ba = (a.start + TICKS - b.start) % TICKS;
            if ab < a.len || ba < b.len {
                return false;
            }
        }
    }
    true
}

impl fmt::Display for ArcConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, s) in self.sets.iter().enumerate() {
            write!(f, "u{}: ", j + 1)?;
            match s {
                CircleSupport::Whole => write!(f, "whole circle")?,
                CircleSupport::Arcs(arcs) => {
                    for (n, a) in arcs.iter().enumerate() {
                        if n > 0 {
                            write!(f, " ∪ ")?;
                        }
                        let s0 = a.start_radians();
                        write!(f, "({:.9}, {:.9})", s0, s0 + a.len_radians())?;
                    }
                }
            }
            if j + 1 < self.sets.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

impl Serialize for ArcConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Set {
            whole: bool,
            /// `(start, end)` in radians
            arcs: Vec<(f64, f64)>,
            /// `(start, len)` in ticks
            ticks: Vec<(u64, u64)>,
        }
        let sets: Vec<Set> = self
            .sets
            .iter()
            .map(|x| match x {
                CircleSupport::Whole => Set {
                    whole: true,
                    arcs: Vec::new(),
                    ticks: Vec::new(),
                },
                CircleSupport::Arcs(a) => Set {
                    whole: false,
                    arcs: x.intervals_radians(),
                    ticks: a.iter().map(|a| (a.start, a.len)).collect(),
                },
            })
            .collect();
        sets.serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaSearch {
    /// Maximal number of arcs per support set.
    pub max_arcs: usize,
    /// Golden-section tolerance on arc lengths (turns).
    pub tol: f64,
    /// Smallest admissible arc length (turns).
    pub min_arc: f64,
    /// Coordinate-descent sweeps per arrangement.
    pub sweeps: usize,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch {
            max_arcs: 3,
            tol: 1e-8,
            min_arc: 1e-9,
            sweeps: 50,
        }
    }
}

/// One combinatorial arrangement: `whole` full-circle supports, and
/// partial supports with the given arc counts placed by wrap-around with
/// coverage multiplicity at most `layers`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Arrangement {
    pub whole: usize,
    pub layers: usize,
    pub arcs_per_set: Vec<usize>,
}

fn arc_patterns(p: usize, max_arcs: usize) -> Vec<Vec<usize>> {
    // nondecreasing sequences: sets are interchangeable
    fn rec(p: usize, lo: usize, hi: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for a in lo..=hi {
            cur.push(a);
            rec(p, a, hi, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(p, 1, max_arcs.max(1), &mut Vec::new(), &mut out);
    out
}

pub fn arrangements(ell: usize, max_arcs: usize) -> Vec<Arrangement> {
    let mut out = Vec::new();
    for whole in 0..ell.saturating_sub(1) {
        let p = ell - whole;
        for layers in 1..p {
            for pattern in arc_patterns(p, max_arcs) {
                out.push(Arrangement {
                    whole,
                    layers,
                    arcs_per_set: pattern,
                });
            }
        }
    }
    out
}

/// Continuous lengths (turns) for one arrangement.
struct Lengths<'a> {
    arr: &'a Arrangement,
    /// per set, per arc
    x: Vec<Vec<f64>>,
}

impl Lengths<'_> {
    fn cost(&self) -> f64 {
        self.x
            .iter()
            .map(|set| 1.0 / (2.0 * set.iter().copied().fold(0.0, f64::max)))
            .sum()
    }

    fn set_total(&self, j: usize) -> f64 {
        self.x[j].iter().sum()
    }

    fn total(&self) -> f64 {
        self.x.iter().flatten().sum()
    }
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // golden section may stop next to a kink; keep the best probe
    [(f(mid), mid), (fc, c), (fd, d)]
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|x| x.1)
        .unwrap_or(mid)
}

fn optimize_lengths<'a>(arr: &'a Arrangement, cfg: &AlphaSearch) -> Option<Lengths<'a>> {
    let p = arr.arcs_per_set.len();
    let eps = cfg.min_arc;
    let extra: usize = arr.arcs_per_set.iter().map(|a| a - 1).sum();
    let q = arr.layers as f64;
    let primary = ((q - extra as f64 * eps) / p as f64).min(1.0);
    if primary <= eps {
        return None;
    }
    let mut len = Lengths {
        arr,
        x: arr
            .arcs_per_set
            .iter()
            .map(|&a| {
                let mut v = vec![eps; a];
                v[0] = primary.min(1.0 - (a - 1) as f64 * eps);
                v
            })
            .collect(),
    };
    let vars: Vec<(usize, usize)> = (0..p)
        .flat_map(|j| (0..arr.arcs_per_set[j]).map(move |a| (j, a)))
        .collect();
    let mut best = len.cost();
    for _ in 0..cfg.sweeps {
        let start = best;
        for (m, &(ju, au)) in vars.iter().enumerate() {
            for &(jv, av) in &vars[m + 1..] {
                let sigma = len.x[ju][au] + len.x[jv][av];
                let (ub_u, ub_v) = if ju == jv {
                    (sigma, sigma)
                } else {
                    (
                        1.0 - (len.set_total(ju) - len.x[ju][au]),
                        1.0 - (len.set_total(jv) - len.x[jv][av]),
                    )
                };
                let lo = eps.max(sigma - ub_v);
                let hi = ub_u.min(sigma - eps);
                if hi <= lo {
                    continue;
                }
                let f = |t: f64| {
                    let mut trial = Lengths { arr, x: len.x.clone() };
                    trial.x[ju][au] = t;
                    trial.x[jv][av] = sigma - t;
                    trial.cost()
                };
                let t = golden(f, lo, hi, cfg.tol);
                let c = f(t);
                if c < best {
                    best = c;
                    len.x[ju][au] = t;
                    len.x[jv][av] = sigma - t;
                }
            }
        }
        // hand any slack in the layer budget to the longest arcs
        let mut left = q - len.total();
        if left > 0.0 {
            for j in 0..p {
                let room = 1.0 - len.set_total(j);
                let a = (0..len.x[j].len())
                    .max_by(|&a, &b| len.x[j][a].total_cmp(&len.x[j][b]))
                    .unwrap_or(0);
                let add = room.min(left).max(0.0);
                len.x[j][a] += add;
                left -= add;
            }
            best = best.min(len.cost());
        }
        if best >= start {
            break;
        }
    }
    Some(len)
}

/// Snaps lengths to ticks (rounding down) and places all arcs consecutively
/// around the circle, set after set.
fn place(len: &Lengths<'_>) -> ArcConfig {
    let mut sets = vec![CircleSupport::Whole; len.arr.whole];
    let mut pos: u64 = 0;
    for set in &len.x {
        let mut arcs = Vec::with_capacity(set.len());
        for &t in set {
            let ticks = ((t * TICKS as f64).floor() as u64).clamp(1, TICKS);
            arcs.push(Arc::new(pos % TICKS, ticks));
            pos += ticks;
        }
        sets.push(CircleSupport::Arcs(arcs));
    }
    ArcConfig { sets }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaEstimate {
    pub ell: usize,
    /// Best value found; an upper bound for the infimum.
    pub alpha: f64,
    pub config: ArcConfig,
    pub arrangement: Arrangement,
    pub certified: bool,
    /// Set when the value is below `2 - 1e-6`.
    pub below_two: bool,
}

/// Two-stage search for `alpha_{l,2}`: enumerate arrangements, optimize arc
/// lengths within each, snap to ticks and certify exactly.
pub fn alpha_circle(ell: usize, cfg: &AlphaSearch) -> Result<AlphaEstimate> {
    if ell < 2 {
        return Err(Error::InvalidArgument(format!("alpha needs l >= 2, got {ell}")));
    }
    if cfg.max_arcs == 0 || !(cfg.tol > 0.0) || !(cfg.min_arc > 0.0) {
        return Err(Error::InvalidArgument("invalid alpha search settings".into()));
    }
    let mut best: Option<(f64, ArcConfig, Arrangement)> = None;
    for arr in arrangements(ell, cfg.max_arcs) {
        let Some(len) = optimize_lengths(&arr, cfg) else {
            continue;
        };
        let config = place(&len);
        if !config.certify() {
            continue;
        }
        let c = config.cost();
        let better = match &best {
            None => true,
            Some((bc, bconf, _)) => c < *bc || (c == *bc && config < *bconf),
        };
        if better {
            best = Some((c, config, arr));
        }
    }
    let (alpha, config, arrangement) = best.ok_or_else(|| Error::NoConvergence {
        what: format!("alpha search for l = {ell} found no feasible configuration"),
        iterations: 0,
    })?;
    Ok(AlphaEstimate {
        ell,
        alpha,
        certified: true,
        below_two: alpha < 2.0 - 1e-6,
        config,
        arrangement,
    })
}

/// `min_{l = 2..k} alpha_l / l`; `alphas` holds `(l, alpha_l)`.
pub fn nu_bar(k: usize, alphas: &[(usize, f64)]) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("nu_bar needs k >= 2, got {k}")));
    }
    let mut best = f64::INFINITY;
    for ell in 2..=k {
        let a = alphas
            .iter()
            .find(|(l, _)| *l == ell)
            .map(|x| x.1)
            .ok_or_else(|| Error::InvalidArgument(format!("missing alpha for l = {ell}")))?;
        best = best.min(a / ell as f64);
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub n: u32,
    pub k: usize,
    pub alphas: Vec<AlphaEstimate>,
    pub nu_bar: f64,
    /// All values are upper bounds from a finite search.
    pub upper_bounds: bool,
}

pub fn threshold_report(k: usize, cfg: &AlphaSearch) -> Result<ThresholdReport> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "threshold report needs k >= 2, got {k}"
        )));
    }
    let alphas = (2..=k).map(|l| alpha_circle(l, cfg)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, f64)> = alphas.iter().map(|a| (a.ell, a.alpha)).collect();
    Ok(ThresholdReport {
        n: 2,
        k,
        nu_bar: nu_bar(k, &pairs)?,
        alphas,
        upper_bounds: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF: u64 = TICKS / 2;

    #[test]
    fn gamma_values() {
        for n in 2..6 {
            assert_eq!(gamma_of(0.0, n).unwrap(), 0.0);
            assert!((gamma_of((n - 1) as f64, n).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(gamma_of(4.0, 2).unwrap(), 2.0);
        assert!(gamma_of(-1.0, 2).is_err());
        assert!(gamma_of(1.0, 1).is_err());
    }

    #[test]
    fn lambda_examples() {
        let half = CircleSupport::Arcs(vec![Arc::new(0, HALF)]);
        assert_eq!(lambda_arcs(&half), 1.0);
        let most = CircleSupport::Arcs(vec![Arc::new(0, TICKS)]);
        assert_eq!(lambda_arcs(&most), 0.25);
        let two = CircleSupport::Arcs(vec![Arc::new(0, TICKS / 4), Arc::new(TICKS / 4 + 1, HALF)]);
        assert_eq!(lambda_arcs(&two), 1.0);
        assert_eq!(lambda_arcs(&CircleSupport::Whole), 0.0);
        assert_eq!(lambda_arcs(&CircleSupport::Arcs(vec![])), f64::INFINITY);
        let r = CircleSupport::Arcs(vec![Arc::from_radians(0.0, std::f64::consts::PI)]);
        assert!((lambda_arcs(&r) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn certification() {
        let halves = ArcConfig {
            sets: vec![
                CircleSupport::Arcs(vec![Arc::new(0, HALF)]),
                CircleSupport::Arcs(vec![Arc::new(HALF, HALF)]),
            ],
        };
        assert!(halves.certify());
        assert_eq!(halves.cost(), 2.0);
        let overlap = ArcConfig {
            sets: vec![
                CircleSupport::Arcs(vec![Arc::new(0, HALF + 1)]),
                CircleSupport::Arcs(vec![Arc::new(HALF, HALF)]),
            ],
        };
        assert!(!overlap.certify());
        // arcs touching at a point do not overlap
        let third = TICKS / 3;
        let three = ArcConfig {
            sets: (0..3u64)
                .map(|j| CircleSupport::Arcs(vec![Arc::new(j * third, 2 * third)]))
                .collect(),
        };
        assert!(three.certify());
        let all_whole = ArcConfig {
            sets: vec![CircleSupport::Whole, CircleSupport::Whole],
        };
        assert!(!all_whole.certify());
        let bad = ArcConfig {
            sets: vec![
                CircleSupport::Arcs(vec![Arc::new(0, 10), Arc::new(5, 10)]),
                CircleSupport::Whole,
            ],
        };
        assert!(!bad.well_formed());
    }

    #[test]
    fn alpha_two_is_two() {
        let a = alpha_circle(2, &AlphaSearch::default()).unwrap();
        assert!((a.alpha - 2.0).abs() <= 1e-6);
        assert!(a.config.certify());
        let one = alpha_circle(
            2,
            &AlphaSearch {
                max_arcs: 1,
                ..AlphaSearch::default()
            },
        )
        .unwrap();
        assert!((one.alpha - a.alpha).abs() <= 1e-6);
    }

    #[test]
    fn nu_bar_examples() {
        assert!((nu_bar(3, &[(2, 2.0), (3, 2.0)]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(nu_bar(2, &[(2, 2.0)]).unwrap(), 1.0);
        assert!(nu_bar(4, &[(2, 2.0), (3, 2.0)]).is_err());
    }

    #[test]
    fn display_lists_intervals() {
        let c = ArcConfig {
            sets: vec![CircleSupport::Whole, CircleSupport::Arcs(vec![Arc::new(0, HALF)])],
        };
        let s = c.to_string();
        assert!(s.contains("whole circle"));
        assert!(s.contains("(0.000000000, 3.141592654)"));
    }
}
