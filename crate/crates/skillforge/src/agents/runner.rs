//! The observe / evaluate / act / step loop shared by every skill.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    direction_update, pc1pc1_reward, pc1pc1_target_force, prpr_reward, rotation_between, AgentAction, AgentState,
    Controller, Frame, SkillFamily, SkillParameters,
};
use crate::cone::MotionKind;
use crate::error::{AgentError, SimError};
use crate::reward::{compose, evaluate, APrimitive, Axis, ForceSense, Observation, SkillSpec, Termination, TransitionLatch};
use crate::sim::{sense, Env, Pose};
use crate::{Quat, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Refuse to start unless the scene is in the skill's source state.
    pub check_state: bool,
    pub stop_on_penalty: bool,
    pub stop_on_success: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            check_state: true,
            stop_on_penalty: true,
            stop_on_success: true,
        }
    }
}

impl RunOptions {
    /// Fixed-length episodes for training.
    pub fn fixed_horizon() -> Self {
        Self {
            check_state: false,
            stop_on_penalty: false,
            stop_on_success: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub pose: Pose,
    /// Force change since the skill started, world frame.
    pub force: Vec3,
    /// The same force on the S, T, U axes in use at this step.
    pub frame_force: [f64; 3],
    pub f_desc: u32,
    /// Motion direction in use at this step.
    pub direction: Vec3,
    pub reward: f64,
    pub penalty: bool,
    pub after_transition: bool,
    /// Action chosen from this observation; absent on the final row.
    pub action: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub skill: String,
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
    /// Why an episode ended in `Termination::Error`.
    pub error: Option<String>,
}

impl EpisodeTrace {
    /// Environment steps taken.
    pub fn steps(&self) -> usize {
        self.rows.last().map_or(0, |r| r.step)
    }

    pub fn start_pose(&self) -> Pose {
        self.rows[0].pose
    }

    pub fn end_pose(&self) -> Pose {
        self.rows[self.rows.len() - 1].pose
    }

    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    pub fn max_force(&self) -> f64 {
        self.rows.iter().map(|r| r.force.norm()).fold(0.0, f64::max)
    }

    /// Largest magnitude on each of S, T, U.
    pub fn max_axis_forces(&self) -> [f64; 3] {
        let mut m = [0.0f64; 3];
        for r in &self.rows {
            for (k, v) in m.iter_mut().enumerate() {
                *v = v.max(r.frame_force[k].abs());
            }
        }
        m
    }

    /// `TERMINATION steps=N max|f|=X`
    pub fn summary_line(&self) -> String {
        format!("{} steps={} max|f|={:.3}", self.termination, self.steps(), self.max_force())
    }
}

pub const TRACE_HEADER: [&str; 16] = [
    "step",
    "t",
    "px",
    "py",
    "pz",
    "qw",
    "qx",
    "qy",
    "qz",
    "fx",
    "fy",
    "fz",
    "f_desc",
    "reward",
    "penalty",
    "after_transition",
];

pub fn write_trace_csv<W: Write>(trace: &EpisodeTrace, out: W) -> Result<(), AgentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        let q = r.pose.quaternion_wxyz();
        let p = r.pose.position;
        let mut rec: Vec<String> = vec![r.step.to_string(), r.t.to_string()];
        rec.extend([p.x, p.y, p.z].iter().map(f64::to_string));
        rec.extend(q.iter().map(f64::to_string));
        rec.extend([r.force.x, r.force.y, r.force.z].iter().map(f64::to_string));
        rec.push(r.f_desc.to_string());
        rec.push(r.reward.to_string());
        rec.push(u8::from(r.penalty).to_string());
        rec.push(u8::from(r.after_transition).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(trace: &EpisodeTrace, path: &Path) -> Result<(), AgentError> {
    let file = std::fs::File::create(path)?;
    write_trace_csv(trace, std::io::BufWriter::new(file))
}

struct Context<'a> {
    family: SkillFamily,
    params: &'a SkillParameters,
    rotational: bool,
    start: Vec3,
}

impl Context<'_> {
    fn force_frame(&self, c: &Vec3) -> Result<Frame, AgentError> {
        match self.family {
            SkillFamily::Direction => Frame::complete(c, &[self.params.frame.u]),
            _ => Ok(self.params.frame),
        }
    }

    fn progress(&self, grasp: &Vec3) -> [f64; 3] {
        let mut p = self.params.frame.coords(&(grasp - self.start));
        if self.rotational {
            if let Some(h) = &self.params.hinge {
                p[0] = h.angle_between(&self.start, grasp);
            }
        }
        p
    }

    fn observation(&self, env: &Env, force_frame: &Frame) -> Observation<f64> {
        let tol = self.params.goal_tolerance;
        let s_tol = if self.rotational { self.params.angle_tolerance } else { tol };
        Observation {
            position: self.progress(&env.grasp_center()),
            goal: self.params.goal,
            goal_tolerance: [s_tol, tol, tol],
            force: force_frame.coords(&env.reading().delta()),
            feature: self.params.feature,
            after_transition: false,
        }
    }

    /// Scalar reward for one observation.
    fn step_reward(&self, env: &Env, obs: &Observation<f64>, penalty: bool, success: bool) -> f64 {
        match self.family {
            SkillFamily::Direction => prpr_reward(&env.reading().delta()),
            SkillFamily::Wipe => {
                let (f_desc, _) = self.wipe_error(env);
                let detached = env.touching().is_empty()
                    || obs.drag(Axis::U, ForceSense::Opposing) < self.params.thresholds.zero;
                pc1pc1_reward(f_desc, detached, self.params.f_max)
            }
            SkillFamily::Position => {
                if penalty {
                    -1.0
                } else if success {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Quantized distance from the target force, and its direction.
    fn wipe_error(&self, env: &Env) -> (u32, Vec3) {
        let n = self.params.frame.u;
        let f_d = pc1pc1_target_force(&env.baseline(), &n, self.params.f_c);
        let r = sense(&env.force(), &f_d, env.config().f_step);
        (r.f_desc, r.f_n)
    }

    fn in_plane_move(&self, pos: &[f64; 3], step: f64) -> Vec3 {
        let f = &self.params.frame;
        let mut d = Vec3::zeros();
        for k in 0..2 {
            match self.params.goal[k] {
                Some(g) => d += f.axis(k) * (g - pos[k]),
                None if k == 0 => d += f.s * step,
                None => {}
            }
        }
        clip(d, step)
    }
}

fn clip(v: Vec3, limit: f64) -> Vec3 {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}

/// Runs one skill to success, penalty, timeout or a simulator blowup.
///
/// Blowups end the episode with `Termination::Error` and the reason in the
/// trace; other failures are returned as errors.
pub fn run_skill(
    spec: &SkillSpec,
    controller: &mut dyn Controller,
    env: &mut Env,
    params: &SkillParameters,
    opts: &RunOptions,
) -> Result<EpisodeTrace, AgentError> {
    params.validate()?;
    let rotational = spec.kind() == MotionKind::Rotation;
    if rotational && params.hinge.is_none() {
        return Err(AgentError::Config(format!("{} needs a hinge", spec.name)));
    }
    if opts.check_state {
        let actual = env.classify()?.state;
        if actual != spec.from {
            return Err(AgentError::StateMismatch {
                skill: spec.name.to_string(),
                expected: spec.from.to_string(),
                actual: actual.to_string(),
            });
        }
    }
    let program = compose(spec)?;
    let th = params.thresholds;
    let mut latch = TransitionLatch::new(&program);
    env.capture_baseline();

    let ctx = Context {
        family: SkillFamily::of(spec),
        params,
        rotational,
        start: env.grasp_center(),
    };
    let step_size = env.config().step_size;
    let mut c = params.frame.s;
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut step = 0usize;
    let t0 = env.time();

    let (termination, error) = loop {
        let frame = ctx.force_frame(&c)?;
        let mut obs = ctx.observation(env, &frame);
        obs.after_transition = latch.update(&obs, &th);
        let eval = evaluate(&program, &obs, &th)?;
        let termination = if eval.penalty && opts.stop_on_penalty {
            Some(Termination::PenaltyFailure)
        } else if eval.reward && opts.stop_on_success {
            Some(Termination::Success)
        } else if step >= params.horizon {
            Some(Termination::Timeout)
        } else {
            None
        };
        let mut reward = ctx.step_reward(env, &obs, eval.penalty, eval.reward);
        if ctx.family == SkillFamily::Wipe
            && matches!(termination, Some(Termination::Success | Termination::Timeout))
            && !rows.iter().any(|r| r.penalty)
            && !eval.penalty
        {
            reward += f64::from(params.f_max) / 2.0;
        }
        let reading = env.reading();
        rows.push(TraceRow {
            step,
            t: env.time() - t0,
            pose: env.pose(),
            force: reading.delta(),
            frame_force: obs.force,
            f_desc: reading.f_desc,
            direction: c,
            reward,
            penalty: eval.penalty,
            after_transition: obs.after_transition,
            action: None,
        });
        if let Some(t) = termination {
            break (t, None);
        }

        let state = match ctx.family {
            SkillFamily::Direction => AgentState::Direction {
                c,
                f_n: reading.f_n,
                force: reading.delta(),
            },
            SkillFamily::Wipe => {
                let n = params.frame.u;
                let (f_desc, f_n) = ctx.wipe_error(env);
                let dd = ctx.in_plane_move(&obs.position, step_size);
                AgentState::Wipe {
                    n,
                    dd: dd.try_normalize(1e-12).unwrap_or_else(Vec3::zeros),
                    f_n,
                    f_desc,
                    pressing: reading.delta().dot(&n),
                    f_max: params.f_max,
                }
            }
            SkillFamily::Position => AgentState::Position,
        };
        let action = controller.act(&state)?;
        if let Some(last) = rows.last_mut() {
            last.action = Some(action.as_array());
        }

        let (dpos, drot, next_c) = match ctx.family {
            SkillFamily::Position => {
                let mut d = Vec3::zeros();
                for k in 0..3 {
                    let axis = params.frame.axis(k);
                    match params.goal[k] {
                        Some(g) => d += axis * (g - obs.position[k]),
                        None if k == 0 && spec.roles.s == APrimitive::A2 => d += axis * step_size,
                        None => {}
                    }
                }
                (clip(d, step_size), Quat::identity(), c)
            }
            SkillFamily::Direction => {
                let dc = match action {
                    AgentAction::Direction(v) => clip(v, params.action_cap),
                    AgentAction::None => Vec3::zeros(),
                    AgentAction::Normal(_) => {
                        return Err(AgentError::PolicyMismatch("normal action for a direction skill".into()))
                    }
                };
                let next = direction_update(&c, &dc)?;
                let mut length = step_size;
                if let Some(g) = params.goal[0] {
                    let remaining = g - obs.position[0];
                    if rotational {
                        let h = params.hinge.as_ref().expect("checked above");
                        let arc = remaining * h.radius_of(&env.grasp_center());
                        length = length.min(arc.max(0.0));
                    } else {
                        let along = next.dot(&params.frame.s);
                        if along > 1e-6 {
                            length = length.min((remaining / along).max(0.0));
                        }
                    }
                }
                let drot = if rotational { rotation_between(&c, &next) } else { Quat::identity() };
                (next * length, drot, next)
            }
            SkillFamily::Wipe => {
                let d_n = match action {
                    AgentAction::Normal(d) => d.clamp(-step_size, step_size),
                    AgentAction::None => 0.0,
                    AgentAction::Direction(_) => {
                        return Err(AgentError::PolicyMismatch("direction action for a wipe skill".into()))
                    }
                };
                let d = ctx.in_plane_move(&obs.position, step_size) - params.frame.u * d_n;
                (d, Quat::identity(), c)
            }
        };

        step += 1;
        match env.step(&dpos, &drot) {
            Ok(_) => c = next_c,
            Err(e @ SimError::Blowup { .. }) => {
                let reading = env.reading();
                let frame = ctx.force_frame(&next_c)?;
                let failure = match ctx.family {
                    SkillFamily::Direction => prpr_reward(&reading.delta()),
                    SkillFamily::Wipe => -f64::from(params.f_max),
                    SkillFamily::Position => -1.0,
                };
                rows.push(TraceRow {
                    step,
                    t: env.time() - t0,
                    pose: env.pose(),
                    force: reading.delta(),
                    frame_force: frame.coords(&reading.delta()),
                    f_desc: reading.f_desc,
                    direction: next_c,
                    reward: failure,
                    penalty: false,
                    after_transition: latch.fired(),
                    action: None,
                });
                break (Termination::Error, Some(e.to_string()));
            }
            Err(e) => return Err(e.into()),
        }
    };

    Ok(EpisodeTrace {
        skill: spec.name.to_string(),
        rows,
        termination,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{analytic_controller, Gains, NoFeedback};
    use crate::reward::lookup;
    use crate::sim::preset;

    fn lifted_table(h: f64) -> Env {
        let s = preset("tabletop").unwrap();
        let p = s.object.pose.position + Vec3::new(0.0, 0.0, h);
        Env::new(s.with_object_position(p)).unwrap()
    }

    #[test]
    fn bring_in_free_space() {
        let spec = lookup("NC-NC").unwrap();
        let mut env = lifted_table(0.1);
        let frame = Frame::complete(&Vec3::x(), &[Vec3::z()]).unwrap();
        let mut params = SkillParameters::new(frame);
        params.goal = [Some(0.1), Some(0.02), Some(0.0)];
        let trace = run_skill(spec, &mut NoFeedback, &mut env, &params, &RunOptions::default()).unwrap();
        assert_eq!(trace.termination, Termination::Success);
        assert_eq!(trace.max_force(), 0.0);
        let end = trace.end_pose().position - trace.start_pose().position;
        assert!((end - Vec3::new(0.1, 0.02, 0.0)).norm() <= 1e-3);
        assert!(trace.rows.iter().all(|r| !r.penalty));
    }

    #[test]
    fn wrong_start_state_is_refused() {
        let spec = lookup("NC-NC").unwrap();
        let mut env = Env::new(preset("tabletop").unwrap()).unwrap();
        let params = SkillParameters::new(Frame::complete(&Vec3::x(), &[Vec3::z()]).unwrap());
        let err = run_skill(spec, &mut NoFeedback, &mut env, &params, &RunOptions::default());
        assert!(matches!(err, Err(AgentError::StateMismatch { .. })));
    }

    #[test]
    fn place_stops_at_contact() {
        let spec = lookup("NC-PC-a").unwrap();
        let mut env = lifted_table(0.06);
        let frame = Frame::complete(&-Vec3::z(), &[Vec3::x()]).unwrap();
        let mut params = SkillParameters::new(frame);
        params.goal = [None, Some(0.0), Some(0.0)];
        let mut ctl = analytic_controller(SkillFamily::Position, &Gains::default());
        let trace = run_skill(spec, ctl.as_mut(), &mut env, &params, &RunOptions::default()).unwrap();
        assert_eq!(trace.termination, Termination::Success);
        // The bottom face reaches the table after 12 steps of 5 mm.
        assert!(trace.steps().abs_diff(12) <= 1);
        let last = trace.rows.last().unwrap();
        assert!(last.force.z > 3.0);
        assert!(env.max_penetration() <= 0.005);
        assert!(trace.rows[..trace.rows.len() - 1].iter().all(|r| r.force.norm() == 0.0));
    }

    #[test]
    fn trace_csv_layout() {
        let spec = lookup("NC-NC").unwrap();
        let mut env = lifted_table(0.1);
        let mut params = SkillParameters::new(Frame::complete(&Vec3::x(), &[Vec3::z()]).unwrap());
        params.goal = [Some(0.012), Some(0.0), Some(0.0)];
        let trace = run_skill(spec, &mut NoFeedback, &mut env, &params, &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,t,px,py,pz,qw,qx,qy,qz,fx,fy,fz,f_desc,reward,penalty,after_transition"
        );
        assert_eq!(lines.count(), trace.rows.len());
        assert_eq!(trace.steps(), 3);
    }
}
