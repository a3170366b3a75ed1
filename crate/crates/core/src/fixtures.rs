//! The standard crossing fixture: unit square, 32x32 nodes, three components
//! with third-order interaction, rotating-arc traces (every boundary point
//! carries exactly two positive traces), no reaction, `beta` from 1 to 1e4.

use crate::config::BlowupSection;
use crate::config::{
    AlphaSection, Document, DomainSection, InteractionSection, LimitSection, NonlinearitySection, PohozaevSection,
    RecipeKind, ScheduleSection, Shape, TracesSection,
};
use crate::model::{BetaRule, ReactionKind};
use crate::solver::SolveConfig;

/// Trace amplitude of the crossing fixture.
pub const CROSSING_AMPLITUDE: f64 = 20.0;

pub const CROSSING_SCHEDULE: [f64; 5] = [1.0, 10.0, 100.0, 1e3, 1e4];

pub const CROSSING_TOML: &str = include_str!("../fixtures/crossing.toml");

/// The crossing fixture on an `n x n` grid of the unit square.
pub fn crossing_document(n: usize) -> Document {
    Document {
        domain: DomainSection {
            shape: Shape::Rectangle,
            nx: Some(n),
            ny: Some(n),
            n: None,
            h: Some(1.0 / (n - 1) as f64),
        },
        interaction: InteractionSection {
            d: 3,
            k: 3,
            gamma: 1.0,
            overrides: Vec::new(),
        },
        traces: TracesSection {
            recipe: RecipeKind::RotatingArcs,
            amplitude: Some(CROSSING_AMPLITUDE),
            entries: Vec::new(),
            zeroed: Vec::new(),
        },
        nonlinearity: NonlinearitySection {
            kind: ReactionKind::Zero,
            a: vec![0.0; 3],
            beta_rule: BetaRule::Constant,
        },
        solver: SolveConfig::default(),
        schedule: ScheduleSection {
            betas: CROSSING_SCHEDULE.to_vec(),
        },
        limit: Some(LimitSection {
            rounds: 5,
            delta: None,
            penalty_schedule: CROSSING_SCHEDULE.to_vec(),
        }),
        pohozaev: Some(PohozaevSection {
            center: (0.5, 0.5),
            radius: 0.25,
        }),
        blowup: Some(BlowupSection {
            center: (0.5, 0.5),
            scale: 0.125,
            alpha: 0.3,
            half_width: 8,
            normalization: None,
        }),
        alpha: Some(AlphaSection::default()),
    }
}

/// The same fixture with the saturating reaction `f(s) = a s / (1 + s)`.
pub fn saturating_document(n: usize, a: f64) -> Document {
    let mut doc = crossing_document(n);
    doc.nonlinearity = NonlinearitySection {
        kind: ReactionKind::Saturating,
        a: vec![a; 3],
        beta_rule: BetaRule::Constant,
    };
    doc
}
