//! Reference listings bundled into the binary, one per registry entry.

use super::syntax::{parse_listing, Listing};
use super::{compose, lookup, RewardProgram};
use crate::error::RewardError;

pub static FIXTURES: [(&str, &str); 43] = [
    ("NC-NC", include_str!("../../fixtures/rewards/NC-NC.txt")),
    ("NC-OT", include_str!("../../fixtures/rewards/NC-OT.txt")),
    ("NC-PC-a", include_str!("../../fixtures/rewards/NC-PC-a.txt")),
    ("NC-PC-b", include_str!("../../fixtures/rewards/NC-PC-b.txt")),
    ("NC-PR", include_str!("../../fixtures/rewards/NC-PR.txt")),
    ("NC-TR", include_str!("../../fixtures/rewards/NC-TR.txt")),
    ("OP-PR", include_str!("../../fixtures/rewards/OP-PR.txt")),
    ("OR-RV", include_str!("../../fixtures/rewards/OR-RV.txt")),
    ("OT-NC", include_str!("../../fixtures/rewards/OT-NC.txt")),
    ("OT-PC-a", include_str!("../../fixtures/rewards/OT-PC-a.txt")),
    ("OT-PC-b", include_str!("../../fixtures/rewards/OT-PC-b.txt")),
    ("OT-PR", include_str!("../../fixtures/rewards/OT-PR.txt")),
    ("OT-TR-a", include_str!("../../fixtures/rewards/OT-TR-a.txt")),
    ("OT-TR-b", include_str!("../../fixtures/rewards/OT-TR-b.txt")),
    ("OT1-OT1", include_str!("../../fixtures/rewards/OT1-OT1.txt")),
    ("OT1-OT2", include_str!("../../fixtures/rewards/OT1-OT2.txt")),
    ("OT2-OT1", include_str!("../../fixtures/rewards/OT2-OT1.txt")),
    ("PC-NC-a", include_str!("../../fixtures/rewards/PC-NC-a.txt")),
    ("PC-NC-b", include_str!("../../fixtures/rewards/PC-NC-b.txt")),
    ("PC-OT-a", include_str!("../../fixtures/rewards/PC-OT-a.txt")),
    ("PC-OT-b", include_str!("../../fixtures/rewards/PC-OT-b.txt")),
    ("PC-PR", include_str!("../../fixtures/rewards/PC-PR.txt")),
    ("PC-TR", include_str!("../../fixtures/rewards/PC-TR.txt")),
    ("PC1-PC1", include_str!("../../fixtures/rewards/PC1-PC1.txt")),
    ("PC1-PC2", include_str!("../../fixtures/rewards/PC1-PC2.txt")),
    ("PC2-PC1", include_str!("../../fixtures/rewards/PC2-PC1.txt")),
    ("PC2-PC2", include_str!("../../fixtures/rewards/PC2-PC2.txt")),
    ("PC2-PCN", include_str!("../../fixtures/rewards/PC2-PCN.txt")),
    ("PCN-PC2", include_str!("../../fixtures/rewards/PCN-PC2.txt")),
    ("PR-NC", include_str!("../../fixtures/rewards/PR-NC.txt")),
    ("PR-OP", include_str!("../../fixtures/rewards/PR-OP.txt")),
    ("PR-OT", include_str!("../../fixtures/rewards/PR-OT.txt")),
    ("PR-PC", include_str!("../../fixtures/rewards/PR-PC.txt")),
    ("PR-PR", include_str!("../../fixtures/rewards/PR-PR.txt")),
    ("PR-TR", include_str!("../../fixtures/rewards/PR-TR.txt")),
    ("RV-OR", include_str!("../../fixtures/rewards/RV-OR.txt")),
    ("RV-RV", include_str!("../../fixtures/rewards/RV-RV.txt")),
    ("TR-NC", include_str!("../../fixtures/rewards/TR-NC.txt")),
    ("TR-OT-a", include_str!("../../fixtures/rewards/TR-OT-a.txt")),
    ("TR-OT-b", include_str!("../../fixtures/rewards/TR-OT-b.txt")),
    ("TR-PC", include_str!("../../fixtures/rewards/TR-PC.txt")),
    ("TR-PR", include_str!("../../fixtures/rewards/TR-PR.txt")),
    ("TR-TR", include_str!("../../fixtures/rewards/TR-TR.txt")),
];

pub fn fixture_text(name: &str) -> Option<&'static str> {
    FIXTURES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, t)| *t)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixtureCheck {
    pub name: String,
    pub expected: Option<RewardProgram>,
    pub composed: Option<RewardProgram>,
    pub error: Option<String>,
}

impl FixtureCheck {
    pub fn matches(&self) -> bool {
        self.error.is_none() && self.expected.is_some() && self.expected == self.composed
    }
}

/// Compares a listing against the composed program of the skill it names.
pub fn check_listing(name: &str, text: &str) -> FixtureCheck {
    let mut check = FixtureCheck {
        name: name.to_string(),
        expected: None,
        composed: None,
        error: None,
    };
    let result = (|| -> Result<(), RewardError> {
        let Listing { name: header, program, .. } = parse_listing(text)?;
        if let Some(h) = header {
            if !h.eq_ignore_ascii_case(name) {
                return Err(RewardError::UnknownSkill(format!("{h} (listed as {name})")));
            }
        }
        check.expected = Some(program);
        check.composed = Some(compose(lookup(name)?)?);
        Ok(())
    })();
    if let Err(e) = result {
        check.error = Some(e.to_string());
    }
    check
}

/// Checks every bundled fixture.
pub fn check_all() -> Vec<FixtureCheck> {
    FIXTURES.iter().map(|(n, t)| check_listing(n, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::registry;

    #[test]
    fn every_fixture_matches_its_composition() {
        let checks = check_all();
        let bad: Vec<_> = checks.iter().filter(|c| !c.matches()).collect();
        assert!(bad.is_empty(), "{bad:#?}");
        assert_eq!(checks.len(), registry().len());
    }

    #[test]
    fn fixture_directory_covers_registry() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rewards");
        let files = std::fs::read_dir(dir).unwrap().count();
        assert_eq!(files, registry().len());
        for s in registry() {
            assert!(fixture_text(s.name).is_some(), "{}", s.name);
        }
    }

    #[test]
    fn mismatched_listing_is_reported() {
        let c = check_listing("PR-OP", "if S = goal-s, then reward\n");
        assert!(!c.matches());
        let c = check_listing("PR-OP", "Reward PR-NC\nif S = goal-s, then reward\n");
        assert!(c.error.is_some());
    }
}
