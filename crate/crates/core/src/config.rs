//! Problem documents (TOML).
//!
//! ```toml
//! [domain]
//! shape = "rectangle"   # or "disk"
//! nx = 32
//! ny = 32
//! h = 0.032258064516129
//!
//! [interaction]
//! d = 3
//! k = 3
//! gamma = 1.0
//! overrides = [{ subset = [1, 2, 3], gamma = 2.0 }]   # 1-based
//!
//! [traces]
//! recipe = "rotating-arcs"
//! amplitude = 1.0
//!
//! [nonlinearity]
//! kind = "zero"
//!
//! [solver]
//! grad_tol = 1e-6
//!
//! [schedule]
//! betas = [1.0, 10.0, 100.0, 1000.0, 10000.0]
//! ```
//!
//! Sections `limit`, `pohozaev`, `blowup` and `alpha` are optional.
//! [`Document::materialize`] fills every default so that the echoed
//! effective configuration is self-describing.

use serde::{Deserialize, Serialize};

use crate::geometry::{build_disk, build_rectangle, BallSpec, Domain};
use crate::limit::LimitConfig;
use crate::model::{
    make_trace_library, BetaRule, CustomTrace, InteractionSpec, Nonlinearity, ProblemSpec, ReactionKind, TraceData,
    TraceRecipe,
};
use crate::solver::SolveConfig;
use crate::threshold::AlphaSearch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Rectangle,
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    /// Disk side length in nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Defaults to `1/(nx-1)` (rectangle) or `2/(n-3)` (unit disk).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaOverride {
    /// 1-based component indices.
    pub subset: Vec<usize>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSection {
    pub d: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<GammaOverride>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeKind {
    RotatingArcs,
    PairwiseBumps,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracesSection {
    pub recipe: RecipeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Custom recipe: `{ node = [i, j], values = [...] }` per boundary node.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<CustomTrace>,
    /// 1-based components forced to zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zeroed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySection {
    pub kind: ReactionKind,
    /// One coefficient per component, or a single value for all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<f64>,
    #[serde(default = "constant_rule")]
    pub beta_rule: BetaRule,
}

impl TracesSection {
    pub fn to_recipe(&self) -> Result<TraceRecipe> {
        let amp = || {
            self.amplitude
                .ok_or_else(|| Error::Config("traces.amplitude is required for this recipe".into()))
        };
        Ok(match self.recipe {
            RecipeKind::RotatingArcs => TraceRecipe::RotatingArcs { amplitude: amp()? },
            RecipeKind::PairwiseBumps => TraceRecipe::PairwiseBumps { amplitude: amp()? },
            RecipeKind::Custom => TraceRecipe::Custom {
                entries: self.entries.clone(),
            },
        })
    }
}

fn constant_rule() -> BetaRule {
    BetaRule::Constant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSection {
    #[serde(default = "five")]
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Coupling values for the arctan-penalty route; empty disables it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub penalty_schedule: Vec<f64>,
}

fn five() -> usize {
    5
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection {
            rounds: 5,
            delta: None,
            penalty_schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PohozaevSection {
    pub center: (f64, f64),
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupSection {
    pub center: (f64, f64),
    pub scale: f64,
    pub alpha: f64,
    #[serde(default = "eight")]
    pub half_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
}

fn eight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    #[serde(default = "three")]
    pub max_arcs: usize,
    #[serde(default = "golden_tol")]
    pub tol: f64,
}

fn three() -> usize {
    3
}

fn golden_tol() -> f64 {
    1e-8
}

impl Default for AlphaSection {
    fn default() -> Self {
        AlphaSection { max_arcs: 3, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub domain: DomainSection,
    pub interaction: InteractionSection,
    pub traces: TracesSection,
    pub nonlinearity: NonlinearitySection,
    #[serde(default)]
    pub solver: SolveConfig,
    pub schedule: ScheduleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pohozaev: Option<PohozaevSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup: Option<BlowupSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSection>,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ProblemSpec,
    pub solve: SolveConfig,
    pub schedule: Vec<f64>,
    pub limit: LimitConfig,
    pub penalty_schedule: Vec<f64>,
    pub ball: Option<BallSpec>,
    pub blowup: Option<BlowupSection>,
    pub alpha: AlphaSearch,
}

/// Parses a document; schema errors carry the line and field.
pub fn parse_document(text: &str) -> Result<Document> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
}

pub fn emit_document(doc: &Document) -> Result<String> {
    toml::to_string(doc).map_err(|e| Error::Serialization(e.to_string()))
}

/// Parses, materializes defaults and validates.
pub fn parse_config(text: &str) -> Result<(Document, Experiment)> {
    let doc = parse_document(text)?.materialize()?;
    let exp = doc.build()?;
    Ok((doc, exp))
}

impl Document {
    /// Fills grid spacing, coefficient lists and optional sections with
    /// their defaults.
    pub fn materialize(mut self) -> Result<Self> {
        let dm = &mut self.domain;
        match dm.shape {
            Shape::Rectangle => {
                let nx = dm
                    .nx
                    .ok_or_else(|| Error::Config("domain.nx is required for a rectangle".into()))?;
                let ny = dm
                    .ny
                    .ok_or_else(|| Error::Config("domain.ny is required for a rectangle".into()))?;
                if dm.n.is_some() {
                    return Err(Error::Config("domain.n only applies to disks".into()));
                }
                if nx < 3 || ny < 3 {
                    return Err(Error::Config(format!(
                        "domain.nx and domain.ny must be >= 3, got {nx} x {ny}"
                    )));
                }
                dm.h.get_or_insert(1.0 / (nx - 1) as f64);
            }
            Shape::Disk => {
                let n =
                    dm.n.ok_or_else(|| Error::Config("domain.n is required for a disk".into()))?;
                if dm.nx.is_some() || dm.ny.is_some() {
                    return Err(Error::Config("domain.nx / domain.ny only apply to rectangles".into()));
                }
                if n < 5 {
                    return Err(Error::Config(format!("domain.n must be >= 5, got {n}")));
                }
                dm.h.get_or_insert(2.0 / (n - 3) as f64);
            }
        }
        let d = self.interaction.d;
        let nl = &mut self.nonlinearity;
        match (nl.kind, nl.a.len()) {
            (ReactionKind::Zero, 0) => nl.a = vec![0.0; d],
            (_, 1) => nl.a = vec![nl.a[0]; d],
            (ReactionKind::Zero, _) => {}
            (_, 0) => {
                return Err(Error::Config(
                    "nonlinearity.a is required for linear and saturating kinds".into(),
                ))
            }
            _ => {}
        }
        if self.limit.is_none() {
            self.limit = Some(LimitSection::default());
        }
        if self.alpha.is_none() {
            self.alpha = Some(AlphaSection::default());
        }
        Ok(self)
    }

    pub fn build_domain(&self) -> Result<Domain> {
        let dm = &self.domain;
        let h =
            dm.h.ok_or_else(|| Error::Config("domain.h missing (document not materialized)".into()))?;
        match dm.shape {
            Shape::Rectangle => build_rectangle(dm.nx.unwrap_or(0), dm.ny.unwrap_or(0), h),
            Shape::Disk => build_disk(dm.n.unwrap_or(0), h),
        }
    }

    pub fn build(&self) -> Result<Experiment> {
        let dom = self.build_domain()?;
        let it = &self.interaction;
        let overrides = it
            .overrides
            .iter()
            .map(|o| {
                if o.subset.contains(&0) {
                    return Err(Error::Config(format!(
                        "interaction.overrides: component indices are 1-based, got {:?}",
                        o.subset
                    )));
                }
                Ok((o.subset.iter().map(|i| i - 1).collect(), o.gamma))
            })
            .collect::<Result<Vec<_>>>()?;
        let interaction = InteractionSpec::with_overrides(it.d, it.k, it.gamma, &overrides)?;
        let mut traces: TraceData = make_trace_library(&dom, it.d, it.k, &self.traces.to_recipe()?)?;
        if !self.traces.zeroed.is_empty() {
            if self.traces.zeroed.iter().any(|&i| i == 0 || i > it.d) {
                return Err(Error::Config(format!(
                    "traces.zeroed: components must lie in 1..={}, got {:?}",
                    it.d, self.traces.zeroed
                )));
            }
            let comps: Vec<usize> = self.traces.zeroed.iter().map(|i| i - 1).collect();
            traces = traces.with_zeroed(&dom, &comps)?;
        }
        let nl = &self.nonlinearity;
        let nonlinearity = Nonlinearity {
            kind: nl.kind,
            a: nl.a.clone(),
            beta_rule: nl.beta_rule,
        };
        let schedule = self.schedule.betas.clone();
        if schedule.is_empty() {
            return Err(Error::Config("schedule.betas must not be empty".into()));
        }
        for w in schedule.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(format!(
                    "schedule.betas must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let spec = ProblemSpec::new(dom, interaction, traces, nonlinearity, schedule[0])?;
        spec.validate()?;
        self.solver.check()?;
        let lim = self.limit.clone().unwrap_or_default();
        let alpha = self.alpha.clone().unwrap_or_default();
        let ball = self.pohozaev.as_ref().map(|p| BallSpec::new(p.center, p.radius));
        if let Some(b) = &ball {
            b.check_inside(&spec.domain)?;
        }
        Ok(Experiment {
            solve: self.solver.clone(),
            schedule,
            limit: LimitConfig {
                rounds: lim.rounds,
                delta: lim.delta,
            },
            penalty_schedule: lim.penalty_schedule,
            ball,
            blowup: self.blowup.clone(),
            alpha: AlphaSearch {
                max_arcs: alpha.max_arcs,
                tol: alpha.tol,
                ..AlphaSearch::default()
            },
            spec,
        })
    }
}
