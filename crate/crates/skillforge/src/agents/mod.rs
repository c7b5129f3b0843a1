//! Skill controllers, the episode runner and the policy learners.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cone::MotionKind;
use crate::error::AgentError;
use crate::reward::{Thresholds, SkillSpec};
use crate::scalar::Real;
use crate::sim::{Hinge, Pose};
use crate::{Quat, Vec3};

pub mod learn;
pub mod policy;
pub mod runner;

pub use learn::{train, CurvePoint, EnvFactory, LearnerConfig, Method, TrainingOutcome};
pub use policy::{Architecture, Policy, PolicyController};
pub use runner::{run_skill, write_trace_csv, EpisodeTrace, RunOptions, TraceRow};

/// `(c + Δc) / |c + Δc|`.
pub fn direction_update<T: Real>(c: &Vector3<T>, dc: &Vector3<T>) -> Result<Vector3<T>, AgentError> {
    let sum = c + dc;
    let n = sum.norm();
    if !(n > T::lit(T::FEAS_TOL)) {
        return Err(AgentError::DegenerateDirection);
    }
    Ok(sum / n)
}

/// Drawer and door adjustment reward, `-|f|`.
pub fn prpr_reward<T: Real>(f: &Vector3<T>) -> T {
    -f.norm()
}

/// Rotates the hand about its grasp center by the rotation taking
/// `old_dir` to `new_dir`. Returns the new pose and the rotated `old_dir`.
pub fn rvrv_corotate(pose: &Pose, old_dir: &Vec3, new_dir: &Vec3, grasp_center: &Vec3) -> (Pose, Vec3) {
    let rot = rotation_between(old_dir, new_dir);
    (pose.rotated_about(&rot, grasp_center), rot * old_dir)
}

/// Rotation taking `a` to `b` about `a × b`; identity when they coincide.
pub fn rotation_between(a: &Vec3, b: &Vec3) -> Quat {
    Quat::rotation_between(a, b).unwrap_or_else(Quat::identity)
}

/// `f0 + (f_c - f0·n) n`: the baseline with its normal component replaced
/// by `f_c`.
pub fn pc1pc1_target_force<T: Real>(f0: &Vector3<T>, n: &Vector3<T>, f_c: T) -> Vector3<T> {
    f0 + n * (f_c - f0.dot(n))
}

/// Per-step wipe reward. The success bonus is added by the runner.
pub fn pc1pc1_reward(f_desc: u32, detached: bool, f_max: u32) -> f64 {
    let f_max_f = f64::from(f_max);
    if detached || f_desc > f_max {
        -f_max_f
    } else {
        f_max_f / 2.0 - f64::from(f_desc)
    }
}

/// How a skill moves the hand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkillFamily {
    /// Straight moves toward the goal with no correction.
    Position,
    /// Drawer and door skills: the motion direction is re-estimated from the
    /// lateral force every step.
    Direction,
    /// Sliding along a surface while regulating the normal force.
    Wipe,
}

impl SkillFamily {
    pub fn of(spec: &SkillSpec) -> SkillFamily {
        if spec.kind() == MotionKind::Rotation {
            return SkillFamily::Direction;
        }
        match spec.name {
            "OP-PR" | "PR-OP" | "PR-PR" => SkillFamily::Direction,
            "PC1-PC1" => SkillFamily::Wipe,
            _ => SkillFamily::Position,
        }
    }
}

/// Orthonormal right-handed skill axes in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub s: Vec3,
    pub t: Vec3,
    pub u: Vec3,
}

impl Frame {
    /// `S = s`, `U` = the first of `preferred_u` that is not parallel to `S`
    /// (orthogonalized), `T = U × S`.
    pub fn complete(s: &Vec3, preferred_u: &[Vec3]) -> Result<Frame, AgentError> {
        let s = s
            .try_normalize(1e-12)
            .ok_or_else(|| AgentError::Config("motion direction is zero".into()))?;
        let fallbacks = [Vec3::z(), Vec3::x(), Vec3::y()];
        for cand in preferred_u.iter().chain(fallbacks.iter()) {
            let u = cand - s * s.dot(cand);
            if let Some(u) = u.try_normalize(1e-6) {
                let t = u.cross(&s);
                return Ok(Frame { s, t, u });
            }
        }
        unreachable!("one of three orthogonal fallbacks is never parallel to s")
    }

    pub fn axis(&self, i: usize) -> Vec3 {
        [self.s, self.t, self.u][i]
    }

    /// Components of `v` on the three axes.
    pub fn coords(&self, v: &Vec3) -> [f64; 3] {
        [v.dot(&self.s), v.dot(&self.t), v.dot(&self.u)]
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let unit = |v: &Vec3| (v.norm() - 1.0).abs() <= tol;
        unit(&self.s)
            && unit(&self.t)
            && unit(&self.u)
            && self.s.dot(&self.t).abs() <= tol
            && self.s.dot(&self.u).abs() <= tol
            && self.t.dot(&self.u).abs() <= tol
            && (self.t.cross(&self.u) - self.s).norm() <= tol
    }
}

/// Everything a run needs besides the skill, controller and environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillParameters {
    pub frame: Frame,
    /// Goal per axis relative to the start: meters, or radians for the S
    /// axis of rotational skills.
    pub goal: [Option<f64>; 3],
    pub feature: [Option<f64>; 3],
    pub thresholds: Thresholds<f64>,
    pub hinge: Option<Hinge>,
    pub goal_tolerance: f64,
    pub angle_tolerance: f64,
    pub horizon: usize,
    /// Target normal force for wiping.
    pub f_c: f64,
    pub f_max: u32,
    /// Bound on `|Δc|` per step.
    pub action_cap: f64,
}

impl SkillParameters {
    pub fn new(frame: Frame) -> Self {
        Self {
            frame,
            goal: [None; 3],
            feature: [None; 3],
            thresholds: Thresholds::default(),
            hinge: None,
            goal_tolerance: 1e-3,
            angle_tolerance: 0.5f64.to_radians(),
            horizon: 200,
            f_c: 10.0,
            f_max: 10,
            action_cap: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !self.frame.is_orthonormal(1e-6) {
            return Err(AgentError::Config("skill frame is not orthonormal".into()));
        }
        if self.f_max == 0 || !(self.action_cap > 0.0) || !(self.goal_tolerance > 0.0) {
            return Err(AgentError::Config("f_max, action cap and goal tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// What a controller sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AgentState {
    Direction {
        /// Current estimate of the feasible direction.
        c: Vec3,
        /// Unit direction of the force change since the skill started.
        f_n: Vec3,
        /// The force change itself.
        force: Vec3,
    },
    Wipe {
        /// Surface normal, pointing out of the surface.
        n: Vec3,
        /// Unit in-plane translation toward the target.
        dd: Vec3,
        /// Unit direction of `f - f_d` for the target force `f_d`.
        f_n: Vec3,
        f_desc: u32,
        /// `(f - f0)·n`.
        pressing: f64,
        f_max: u32,
    },
    Position,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AgentAction {
    /// Correction of the motion direction.
    Direction(Vec3),
    /// Displacement along `-n`, into the surface.
    Normal(f64),
    None,
}

impl AgentAction {
    pub fn as_array(&self) -> [f64; 3] {
        match *self {
            AgentAction::Direction(v) => [v.x, v.y, v.z],
            AgentAction::Normal(d) => [d, 0.0, 0.0],
            AgentAction::None => [0.0; 3],
        }
    }
}

pub trait Controller {
    fn act(&mut self, state: &AgentState) -> Result<AgentAction, AgentError>;
}

/// Never corrects anything: the straight-line baseline.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoFeedback;

impl Controller for NoFeedback {
    fn act(&mut self, _state: &AgentState) -> Result<AgentAction, AgentError> {
        Ok(AgentAction::None)
    }
}

/// `Δc = k_p f_lat`, with `f_lat` the part of the force change
/// perpendicular to `c`. The force is the environment's reaction, so it
/// points away from the wall being pushed.
#[derive(Clone, Copy, Debug)]
pub struct DirectionFeedback {
    pub k_p: f64,
}

impl Controller for DirectionFeedback {
    fn act(&mut self, state: &AgentState) -> Result<AgentAction, AgentError> {
        match *state {
            AgentState::Direction { c, force, .. } => {
                let lateral = force - c * force.dot(&c);
                Ok(AgentAction::Direction(lateral * self.k_p))
            }
            _ => Err(AgentError::PolicyMismatch("direction controller got a non-direction state".into())),
        }
    }
}

/// `d_n = k_p e + k_i Σe` with `e = f_c - (f - f0)·n`. With `k_i = 0`
/// this is the plain proportional rule; the integral removes the offset
/// left when the surface is tilted against the believed frame.
#[derive(Clone, Copy, Debug)]
pub struct NormalForceFeedback {
    pub k_p: f64,
    pub k_i: f64,
    pub f_c: f64,
    pub integral: f64,
}

impl NormalForceFeedback {
    pub fn new(k_p: f64, k_i: f64, f_c: f64) -> Self {
        Self {
            k_p,
            k_i,
            f_c,
            integral: 0.0,
        }
    }
}

impl Controller for NormalForceFeedback {
    fn act(&mut self, state: &AgentState) -> Result<AgentAction, AgentError> {
        match *state {
            AgentState::Wipe { pressing, .. } => {
                let e = self.f_c - pressing;
                self.integral += e;
                Ok(AgentAction::Normal(self.k_p * e + self.k_i * self.integral))
            }
            _ => Err(AgentError::PolicyMismatch("normal-force controller got a non-wipe state".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    /// Direction correction per newton of lateral force.
    pub direction: f64,
    /// Normal displacement per newton of force error, m/N.
    pub normal: f64,
    /// Normal displacement per newton of accumulated force error, m/N.
    pub normal_integral: f64,
    pub f_c: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            direction: 0.02,
            normal: 6e-5,
            normal_integral: 1e-5,
            f_c: 10.0,
        }
    }
}

pub fn analytic_controller(family: SkillFamily, gains: &Gains) -> Box<dyn Controller + Send> {
    match family {
        SkillFamily::Position => Box::new(NoFeedback),
        SkillFamily::Direction => Box::new(DirectionFeedback { k_p: gains.direction }),
        SkillFamily::Wipe => Box::new(NormalForceFeedback::new(gains.normal, gains.normal_integral, gains.f_c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn direction_update_normalizes() {
        let c = Vec3::x();
        assert_eq!(direction_update(&c, &Vec3::zeros()).unwrap(), c);
        let h = 1.0 / 2f64.sqrt();
        assert_relative_eq!(direction_update(&c, &Vec3::y()).unwrap(), Vec3::new(h, h, 0.0), epsilon = 1e-15);
        assert!(matches!(
            direction_update(&Vec3::z(), &-Vec3::z()),
            Err(AgentError::DegenerateDirection)
        ));
    }

    #[test]
    fn prpr_reward_is_minus_norm() {
        assert_eq!(prpr_reward(&Vec3::zeros()), 0.0);
        assert_eq!(prpr_reward(&Vec3::new(3.0, 4.0, 0.0)), -5.0);
    }

    #[test]
    fn corotation_by_45_degrees() {
        let pose = Pose::at(Vec3::new(1.0, 2.0, 3.0));
        let new_dir = Vec3::new(1.0, 1.0, 0.0).normalize();
        let (p, d) = rvrv_corotate(&pose, &Vec3::x(), &new_dir, &pose.position);
        assert_relative_eq!(p.position, pose.position, epsilon = 1e-15);
        assert_relative_eq!(d, new_dir, epsilon = 1e-15);
        let (axis, angle) = p.orientation.axis_angle().unwrap();
        assert_relative_eq!(angle, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(axis.into_inner(), Vec3::z(), epsilon = 1e-12);
        let (same, _) = rvrv_corotate(&pose, &Vec3::x(), &Vec3::x(), &pose.position);
        assert_eq!(same, pose);
    }

    #[test]
    fn target_force_examples() {
        let n = Vec3::z();
        assert_eq!(pc1pc1_target_force(&Vec3::zeros(), &n, 10.0), Vec3::new(0.0, 0.0, 10.0));
        assert_eq!(pc1pc1_target_force(&Vec3::new(1.0, 2.0, 7.0), &n, 10.0), Vec3::new(1.0, 2.0, 10.0));
        let f0 = Vec3::new(4.0, -1.0, 10.0);
        assert_eq!(pc1pc1_target_force(&f0, &n, 10.0), f0);
    }

    #[test]
    fn wipe_reward_clauses() {
        assert_eq!(pc1pc1_reward(11, false, 10), -10.0);
        assert_eq!(pc1pc1_reward(2, true, 10), -10.0);
        assert_eq!(pc1pc1_reward(0, false, 10), 5.0);
        assert_eq!(pc1pc1_reward(10, false, 10), -5.0);
    }

    #[test]
    fn analytic_controllers() {
        let mut d = DirectionFeedback { k_p: 0.1 };
        let quiet = AgentState::Direction {
            c: Vec3::x(),
            f_n: Vec3::x(),
            force: Vec3::new(-5.0, 0.0, 0.0),
        };
        assert_eq!(d.act(&quiet).unwrap(), AgentAction::Direction(Vec3::zeros()));
        let pushed = AgentState::Direction {
            c: Vec3::x(),
            f_n: -Vec3::y(),
            force: Vec3::new(0.0, -2.0, 0.0),
        };
        let AgentAction::Direction(dc) = d.act(&pushed).unwrap() else { panic!() };
        assert!(dc.y < 0.0 && dc.x == 0.0);

        let mut w = NormalForceFeedback::new(1e-4, 0.0, 10.0);
        let at_target = AgentState::Wipe {
            n: Vec3::z(),
            dd: Vec3::x(),
            f_n: Vec3::zeros(),
            f_desc: 0,
            pressing: 10.0,
            f_max: 10,
        };
        assert_eq!(w.act(&at_target).unwrap(), AgentAction::Normal(0.0));
    }

    #[test]
    fn frame_falls_back_when_vertical() {
        let f = Frame::complete(&Vec3::z(), &[Vec3::z()]).unwrap();
        assert!(f.is_orthonormal(1e-12));
        assert_eq!(f.s, Vec3::z());
        let g = Frame::complete(&Vec3::x(), &[Vec3::z()]).unwrap();
        assert_eq!((g.t, g.u), (Vec3::y(), Vec3::z()));
    }
}
