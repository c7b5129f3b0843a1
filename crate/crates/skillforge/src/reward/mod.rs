//! Reward programs for contact-state transitions.
//!
//! Each skill assigns one motion-direction primitive (`A1`..`A3`) to the
//! motion axis S and one orthogonal primitive (`B1`..`B9`) to each of T and
//! U. A primitive contributes penalty atoms for the stage before the
//! transition, penalty atoms for the stage after it, and reward atoms. The
//! program of a skill is the union of its three fragments.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::RewardError;
use crate::scalar::Real;

pub mod fixtures;
pub mod registry;
pub mod syntax;

pub use registry::{lookup, registry, Roles, SkillSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    S,
    T,
    U,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::S, Axis::T, Axis::U];

    pub fn index(self) -> usize {
        match self {
            Axis::S => 0,
            Axis::T => 1,
            Axis::U => 2,
        }
    }

    pub fn upper(self) -> char {
        match self {
            Axis::S => 'S',
            Axis::T => 'T',
            Axis::U => 'U',
        }
    }

    pub fn lower(self) -> char {
        self.upper().to_ascii_lowercase()
    }

    pub fn from_char(c: char) -> Option<Axis> {
        match c.to_ascii_uppercase() {
            'S' => Some(Axis::S),
            'T' => Some(Axis::T),
            'U' => Some(Axis::U),
            _ => None,
        }
    }
}

/// `F-x` is the drag opposing the axis, `F+x` the drag along it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ForceSense {
    Opposing,
    Along,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Threshold {
    Zero,
    Collision,
}

impl Threshold {
    fn name(self) -> &'static str {
        match self {
            Threshold::Zero => "delta-zero",
            Threshold::Collision => "delta-collision",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomKind {
    ForceAbove(ForceSense, Threshold),
    ForceBelow(ForceSense, Threshold),
    /// `|X - feature-x| > delta-gap`
    FeatureGap,
    /// `X = goal-x`
    AtGoal,
}

/// One comparison in a reward program. Ordering is by axis first, which is
/// also the order atoms are printed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionAtom {
    pub axis: Axis,
    pub kind: AtomKind,
}

impl ConditionAtom {
    pub const fn new(axis: Axis, kind: AtomKind) -> Self {
        Self { axis, kind }
    }

    pub const fn above(axis: Axis, sense: ForceSense, t: Threshold) -> Self {
        Self::new(axis, AtomKind::ForceAbove(sense, t))
    }

    pub const fn below(axis: Axis, sense: ForceSense, t: Threshold) -> Self {
        Self::new(axis, AtomKind::ForceBelow(sense, t))
    }

    pub const fn gap(axis: Axis) -> Self {
        Self::new(axis, AtomKind::FeatureGap)
    }

    pub const fn goal(axis: Axis) -> Self {
        Self::new(axis, AtomKind::AtGoal)
    }
}

impl fmt::Display for ConditionAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (x, lx) = (self.axis.upper(), self.axis.lower());
        let sign = |s: ForceSense| match s {
            ForceSense::Opposing => '-',
            ForceSense::Along => '+',
        };
        match self.kind {
            AtomKind::ForceAbove(s, t) => write!(f, "F{}{lx} > {}", sign(s), t.name()),
            AtomKind::ForceBelow(s, t) => write!(f, "F{}{lx} < {}", sign(s), t.name()),
            AtomKind::FeatureGap => write!(f, "|{x} - feature-{lx}| > delta-gap"),
            AtomKind::AtGoal => write!(f, "{x} = goal-{lx}"),
        }
    }
}

pub type AtomSet = BTreeSet<ConditionAtom>;

/// Penalty sets for the two stages around the transition, plus the
/// conjunction that signals success. A program is staged exactly when the
/// two penalty sets differ.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardProgram {
    pub pre_penalties: AtomSet,
    pub post_penalties: AtomSet,
    pub reward: AtomSet,
}

impl RewardProgram {
    pub fn is_staged(&self) -> bool {
        self.pre_penalties != self.post_penalties
    }

    /// Union of fragments.
    pub fn merge(&mut self, other: &RewardProgram) {
        self.pre_penalties.extend(other.pre_penalties.iter().copied());
        self.post_penalties.extend(other.post_penalties.iter().copied());
        self.reward.extend(other.reward.iter().copied());
    }

    pub fn slot_mut(&mut self, slot: Slot) -> &mut AtomSet {
        match slot {
            Slot::Pre => &mut self.pre_penalties,
            Slot::Post => &mut self.post_penalties,
            Slot::Reward => &mut self.reward,
        }
    }

    pub fn active_penalties(&self, after_transition: bool) -> &AtomSet {
        if after_transition {
            &self.post_penalties
        } else {
            &self.pre_penalties
        }
    }

    /// How the stage flag of this program is driven.
    pub fn trigger(&self) -> TransitionTrigger {
        let gaps: Vec<Axis> = self
            .pre_penalties
            .iter()
            .filter(|a| a.kind == AtomKind::FeatureGap)
            .map(|a| a.axis)
            .collect();
        if !gaps.is_empty() {
            return TransitionTrigger::Onset(gaps);
        }
        let lost = AtomKind::ForceBelow(ForceSense::Opposing, Threshold::Zero);
        let released: Vec<Axis> = self
            .pre_penalties
            .iter()
            .filter(|a| a.kind == lost && !self.post_penalties.contains(a))
            .map(|a| a.axis)
            .collect();
        if !released.is_empty() {
            return TransitionTrigger::Release(released);
        }
        TransitionTrigger::Never
    }

    /// Atoms referenced anywhere in the program.
    pub fn atoms(&self) -> impl Iterator<Item = &ConditionAtom> {
        self.pre_penalties
            .iter()
            .chain(self.post_penalties.iter())
            .chain(self.reward.iter())
    }
}

fn write_penalties(f: &mut fmt::Formatter<'_>, atoms: &AtomSet, indent: &str) -> fmt::Result {
    for a in atoms {
        writeln!(f, "{indent}if {a}, then penalty")?;
    }
    Ok(())
}

fn write_reward(f: &mut fmt::Formatter<'_>, atoms: &AtomSet, indent: &str) -> fmt::Result {
    let parts: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
    writeln!(f, "{indent}if {}, then reward", parts.join(" AND "))
}

impl fmt::Display for RewardProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.is_staged() {
            write_penalties(f, &self.pre_penalties, "")?;
            return write_reward(f, &self.reward, "");
        }
        let common: AtomSet = self
            .pre_penalties
            .intersection(&self.post_penalties)
            .copied()
            .collect();
        let pre: AtomSet = self.pre_penalties.difference(&common).copied().collect();
        let post: AtomSet = self.post_penalties.difference(&common).copied().collect();
        write_penalties(f, &common, "")?;
        writeln!(f, "if NOT(AfterTransition):")?;
        write_penalties(f, &pre, "  ")?;
        writeln!(f, "else:")?;
        write_penalties(f, &post, "  ")?;
        write_reward(f, &self.reward, "  ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransitionTrigger {
    /// Contact appears on one of the axes that were aligned visually.
    Onset(Vec<Axis>),
    /// Contact on one of these axes is lost.
    Release(Vec<Axis>),
    Never,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum APrimitive {
    A1,
    A2,
    A3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BPrimitive {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B9,
}

use ForceSense::{Along, Opposing};
use Threshold::{Collision, Zero};

fn set<const N: usize>(atoms: [ConditionAtom; N]) -> AtomSet {
    atoms.into_iter().collect()
}

/// Fragment contributed by the motion-direction primitive on axis S.
pub fn a_fragment(a: APrimitive) -> RewardProgram {
    let s = Axis::S;
    let reward = match a {
        APrimitive::A1 => set([ConditionAtom::goal(s)]),
        APrimitive::A2 => set([ConditionAtom::above(s, Opposing, Zero)]),
        APrimitive::A3 => set([ConditionAtom::below(s, Along, Zero), ConditionAtom::goal(s)]),
    };
    RewardProgram {
        reward,
        ..Default::default()
    }
}

/// Fragment contributed by an orthogonal primitive on axis `x`.
pub fn b_fragment(b: BPrimitive, x: Axis) -> RewardProgram {
    let collide = ConditionAtom::above(x, Opposing, Collision);
    let lost = ConditionAtom::below(x, Opposing, Zero);
    let free = ConditionAtom::below(x, Opposing, Zero);
    let goal = ConditionAtom::goal(x);
    let both = |p: AtomSet, reward: AtomSet| RewardProgram {
        pre_penalties: p.clone(),
        post_penalties: p,
        reward,
    };
    match b {
        BPrimitive::B1 => both(AtomSet::new(), set([goal])),
        BPrimitive::B2 | BPrimitive::B6 | BPrimitive::B7 => both(set([collide, lost]), AtomSet::new()),
        BPrimitive::B3 => both(set([collide]), AtomSet::new()),
        BPrimitive::B4 => RewardProgram {
            pre_penalties: set([ConditionAtom::gap(x)]),
            post_penalties: set([collide, lost]),
            reward: AtomSet::new(),
        },
        BPrimitive::B5 => RewardProgram {
            pre_penalties: set([collide, lost]),
            post_penalties: AtomSet::new(),
            reward: set([free, goal]),
        },
        BPrimitive::B8 => both(set([collide]), set([free, goal])),
        BPrimitive::B9 => RewardProgram {
            pre_penalties: set([ConditionAtom::gap(x)]),
            post_penalties: set([collide]),
            reward: AtomSet::new(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Pre,
    Post,
    Reward,
}

/// Manual edit applied after composition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramPatch {
    pub add: Vec<(Slot, ConditionAtom)>,
    pub remove: Vec<(Slot, ConditionAtom)>,
}

impl ProgramPatch {
    pub fn apply(&self, program: &mut RewardProgram) -> Result<(), RewardError> {
        if let Some((_, atom)) = self.add.iter().find(|a| self.remove.contains(a)) {
            return Err(RewardError::ConflictingOverride(atom.to_string()));
        }
        for (s, atom) in &self.remove {
            program.slot_mut(*s).remove(atom);
        }
        for (s, atom) in &self.add {
            program.slot_mut(*s).insert(*atom);
        }
        Ok(())
    }
}

/// Program of `spec`: union of its role fragments, then its override.
pub fn compose(spec: &SkillSpec) -> Result<RewardProgram, RewardError> {
    let mut program = a_fragment(spec.roles.s);
    program.merge(&b_fragment(spec.roles.t, Axis::T));
    program.merge(&b_fragment(spec.roles.u, Axis::U));
    if let Some(patch) = &spec.overrides {
        patch.apply(&mut program)?;
    }
    Ok(program)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds<T: Real> {
    pub zero: T,
    pub collision: T,
    pub gap: T,
}

impl<T: Real> Default for Thresholds<T> {
    fn default() -> Self {
        Self {
            zero: T::lit(3.0),
            collision: T::lit(30.0),
            gap: T::lit(0.005),
        }
    }
}

/// Everything a program can test, expressed in the skill frame (S, T, U).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T: Real> {
    /// Progress along each axis since the skill started.
    pub position: [T; 3],
    pub goal: [Option<T>; 3],
    /// Allowed deviation for `X = goal-x`.
    pub goal_tolerance: [T; 3],
    /// Signed force component on each axis (measured minus baseline).
    pub force: [T; 3],
    pub feature: [Option<T>; 3],
    pub after_transition: bool,
}

impl<T: Real> Observation<T> {
    pub fn new() -> Self {
        Self {
            position: [T::zero(); 3],
            goal: [None; 3],
            goal_tolerance: [T::lit(1e-3); 3],
            force: [T::zero(); 3],
            feature: [None; 3],
            after_transition: false,
        }
    }

    /// Drag magnitude with the requested sense. On S the sign matters; on the
    /// orthogonal axes any force opposes the motion.
    pub fn drag(&self, axis: Axis, sense: ForceSense) -> T {
        let f = self.force[axis.index()];
        match (axis, sense) {
            (Axis::S, ForceSense::Opposing) => (-f).max(T::zero()),
            (Axis::S, ForceSense::Along) => f.max(T::zero()),
            _ => f.abs(),
        }
    }

    pub fn holds(&self, atom: &ConditionAtom, th: &Thresholds<T>) -> Result<bool, RewardError> {
        let i = atom.axis.index();
        let level = |t: Threshold| match t {
            Threshold::Zero => th.zero,
            Threshold::Collision => th.collision,
        };
        Ok(match atom.kind {
            AtomKind::ForceAbove(s, t) => self.drag(atom.axis, s) > level(t),
            AtomKind::ForceBelow(s, t) => self.drag(atom.axis, s) < level(t),
            AtomKind::FeatureGap => {
                let feature = self.feature[i].ok_or(RewardError::MissingFeature(atom.axis.upper()))?;
                (self.position[i] - feature).abs() > th.gap
            }
            AtomKind::AtGoal => match self.goal[i] {
                Some(g) => (self.position[i] - g).abs() <= self.goal_tolerance[i],
                None => false,
            },
        })
    }
}

impl<T: Real> Default for Observation<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Success,
    PenaltyFailure,
    Timeout,
    Error,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Success => "success",
            Termination::PenaltyFailure => "penalty-failure",
            Termination::Timeout => "timeout",
            Termination::Error => "error",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub penalty: bool,
    pub reward: bool,
    pub termination: Option<Termination>,
}

/// Penalty is the disjunction of the active stage's penalties, reward the
/// conjunction of the reward atoms. A penalty ends the episode even if the
/// reward holds in the same step.
pub fn evaluate<T: Real>(
    program: &RewardProgram,
    obs: &Observation<T>,
    th: &Thresholds<T>,
) -> Result<Evaluation, RewardError> {
    let mut penalty = false;
    for atom in program.active_penalties(obs.after_transition) {
        if obs.holds(atom, th)? {
            penalty = true;
            break;
        }
    }
    let mut reward = true;
    for atom in &program.reward {
        if !obs.holds(atom, th)? {
            reward = false;
            break;
        }
    }
    let termination = if penalty {
        Some(Termination::PenaltyFailure)
    } else if reward {
        Some(Termination::Success)
    } else {
        None
    };
    Ok(Evaluation {
        penalty,
        reward,
        termination,
    })
}

/// Monotone stage flag driven by a program's trigger.
#[derive(Clone, Debug)]
pub struct TransitionLatch {
    trigger: TransitionTrigger,
    fired: bool,
}

impl TransitionLatch {
    pub fn new(program: &RewardProgram) -> Self {
        Self {
            trigger: program.trigger(),
            fired: false,
        }
    }

    pub fn fired(&self) -> bool {
        self.fired
    }

    /// Feeds one observation and returns the flag after it.
    pub fn update<T: Real>(&mut self, obs: &Observation<T>, th: &Thresholds<T>) -> bool {
        if !self.fired {
            self.fired = match &self.trigger {
                TransitionTrigger::Onset(axes) => {
                    axes.iter().any(|a| obs.drag(*a, ForceSense::Opposing) > th.zero)
                }
                TransitionTrigger::Release(axes) => {
                    axes.iter().any(|a| obs.drag(*a, ForceSense::Opposing) < th.zero)
                }
                TransitionTrigger::Never => false,
            };
        }
        self.fired
    }
}

/// Stage flag after replaying `history`.
pub fn detect_transition<T: Real>(
    program: &RewardProgram,
    history: &[Observation<T>],
    th: &Thresholds<T>,
) -> bool {
    let mut latch = TransitionLatch::new(program);
    for obs in history {
        latch.update(obs, th);
    }
    latch.fired()
}
