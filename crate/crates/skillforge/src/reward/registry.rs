//! The skill library: one entry per contact-state transition.

use serde::Serialize;

use super::{APrimitive, BPrimitive, ProgramPatch};
use crate::cone::{ContactState, MotionKind};
use crate::error::RewardError;

use APrimitive::*;
use BPrimitive::*;
use ContactState::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Roles {
    pub s: APrimitive,
    pub t: BPrimitive,
    pub u: BPrimitive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkillSpec {
    pub name: &'static str,
    /// Task label and short title, e.g. `("PTG11", "Pick")`.
    pub task: Option<(&'static str, &'static str)>,
    pub from: ContactState,
    pub to: ContactState,
    pub roles: Roles,
    pub overrides: Option<ProgramPatch>,
}

impl SkillSpec {
    pub fn kind(&self) -> MotionKind {
        self.from.kind()
    }

    /// First line of the listing, `Reward NAME (LABEL (Title) task)`.
    pub fn header(&self) -> String {
        match self.task {
            Some((label, title)) => format!("Reward {} ({label} ({title}) task)", self.name),
            None => format!("Reward {}", self.name),
        }
    }
}

const fn entry(
    name: &'static str,
    task: Option<(&'static str, &'static str)>,
    from: ContactState,
    to: ContactState,
    s: APrimitive,
    t: BPrimitive,
    u: BPrimitive,
) -> SkillSpec {
    SkillSpec {
        name,
        task,
        from,
        to,
        roles: Roles { s, t, u },
        overrides: None,
    }
}

static REGISTRY: [SkillSpec; 43] = [
    // Interstate, translational.
    entry("PC-NC-a", Some(("PTG11", "Pick")), PC1, NC, A3, B1, B1),
    entry("PC-NC-b", None, PC1, NC, A1, B1, B5),
    entry("NC-PC-a", Some(("PTG13", "Place")), NC, PC1, A2, B1, B1),
    entry("NC-PC-b", None, NC, PC1, A1, B1, B4),
    entry("TR-NC", None, TR, NC, A1, B1, B8),
    entry("NC-TR", None, NC, TR, A1, B1, B9),
    entry("TR-PC", None, TR, PC1, A1, B1, B7),
    entry("PC-TR", None, PC1, TR, A1, B1, B6),
    entry("PR-NC", None, PR, NC, A1, B8, B8),
    entry("NC-PR", None, NC, PR, A1, B9, B9),
    entry("PR-PC", None, PR, PC1, A1, B8, B7),
    entry("PC-PR", None, PC1, PR, A1, B6, B9),
    entry("PR-TR", None, PR, TR, A1, B8, B3),
    entry("TR-PR", None, TR, PR, A1, B9, B3),
    entry("PR-OT", None, PR, OT1, A1, B3, B7),
    entry("OT-PR", None, OT1, PR, A1, B3, B6),
    entry("OP-PR", Some(("PTG31", "Drawer-open")), OP, PR, A3, B3, B3),
    entry("PR-OP", Some(("PTG33", "Drawer-close")), PR, OP, A2, B3, B3),
    entry("OT-NC", None, OT1, NC, A1, B5, B8),
    entry("NC-OT", None, NC, OT1, A1, B4, B9),
    entry("OT-PC-a", None, OT1, PC1, A1, B2, B8),
    entry("OT-PC-b", None, OT1, PC1, A1, B5, B7),
    entry("PC-OT-a", None, PC1, OT1, A1, B2, B9),
    entry("PC-OT-b", None, PC1, OT1, A1, B4, B6),
    entry("OT-TR-a", None, OT1, TR, A3, B1, B3),
    entry("OT-TR-b", None, OT1, TR, A1, B3, B5),
    entry("TR-OT-a", None, TR, OT1, A2, B1, B3),
    entry("TR-OT-b", None, TR, OT1, A1, B3, B4),
    // Intrastate, translational.
    entry("NC-NC", Some(("PTG12", "Bring")), NC, NC, A1, B1, B1),
    entry("PC1-PC1", Some(("STG2", "Wipe")), PC1, PC1, A1, B1, B2),
    entry("PC1-PC2", None, PC1, PC2, A2, B1, B2),
    entry("PC2-PC1", None, PC2, PC1, A3, B1, B2),
    entry("PC2-PC2", None, PC2, PC2, A1, B2, B2),
    entry("PC2-PCN", None, PC2, PCN, A2, B2, B2),
    entry("PCN-PC2", None, PCN, PC2, A3, B2, B2),
    entry("TR-TR", None, TR, TR, A1, B1, B3),
    entry("OT1-OT1", None, OT1, OT1, A1, B2, B3),
    entry("OT1-OT2", None, OT1, OT2, A2, B2, B3),
    entry("OT2-OT1", None, OT2, OT1, A3, B2, B3),
    entry("PR-PR", Some(("PTG32", "Drawer-adjust")), PR, PR, A1, B3, B3),
    // Rotational.
    entry("OR-RV", Some(("PTG51", "Door-open")), OR, RV, A3, B3, B3),
    entry("RV-OR", Some(("PTG53", "Door-close")), RV, OR, A2, B3, B3),
    entry("RV-RV", Some(("PTG52", "Door-adjust")), RV, RV, A1, B3, B3),
];

pub fn registry() -> &'static [SkillSpec] {
    &REGISTRY
}

/// Finds a skill by name, ignoring ASCII case.
pub fn lookup(name: &str) -> Result<&'static SkillSpec, RewardError> {
    REGISTRY
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| RewardError::UnknownSkill(name.to_string()))
}
