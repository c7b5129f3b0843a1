//! Task-model sequences: parsing, parameter binding and chained execution.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::learn::derive_seed;
use crate::agents::policy::{Policy, PolicyController};
use crate::agents::runner::{run_skill, save_trace_csv, EpisodeTrace, RunOptions};
use crate::agents::{analytic_controller, Controller, Frame, Gains, SkillFamily, SkillParameters};
use crate::cone::{ContactState, MotionKind};
use crate::error::{AgentError, PipelineError};
use crate::reward::{compose, lookup, APrimitive, AtomKind, Termination, Thresholds};
use crate::sim::{touching_contacts, Env, Pose, Scene};
use crate::{Quat, Vec3};

/// End hand configuration: position and an optional `[w, x, y, z]`
/// orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edc {
    pub p: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f64; 4]>,
}

impl Edc {
    pub fn pose(&self, current: &Quat) -> Pose {
        let orientation = match self.q {
            Some([w, x, y, z]) => Quat::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)),
            None => *current,
        };
        Pose::new(Vec3::from(self.p), orientation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskModel {
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edc: Option<Edc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtd: Option<[f64; 3]>,
    /// Labanotation string, kept but never read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edl: Option<String>,
}

impl TaskModel {
    pub fn new(task: &str) -> Self {
        Self {
            task: task.to_string(),
            actor: None,
            object: None,
            edc: None,
            dtd: None,
            edl: None,
        }
    }

    pub fn is_marker(&self) -> bool {
        self.task == "release" || self.task.starts_with("grasp:")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSequence {
    /// Preset to run the sequence on when none is given elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    pub tasks: Vec<TaskModel>,
}

impl TaskSequence {
    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.task.as_str()).collect()
    }
}

pub fn parse_task_sequence(text: &str) -> Result<TaskSequence, PipelineError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let seq: TaskSequence = serde_path_to_error::deserialize(de)
        .map_err(|e| PipelineError::Sequence(format!("{}: {}", e.path(), e.inner())))?;
    for (i, t) in seq.tasks.iter().enumerate() {
        if !t.is_marker() && lookup(&t.task).is_err() {
            return Err(PipelineError::Sequence(format!("tasks[{i}].task: unknown task `{}`", t.task)));
        }
        if let Some(d) = t.dtd {
            let n = Vec3::from(d).norm();
            if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
                return Err(PipelineError::Sequence(format!("tasks[{i}].dtd: not a unit vector (|dtd| = {n})")));
            }
        }
        if let Some(q) = t.edc.as_ref().and_then(|e| e.q) {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n > 1e-9) || !n.is_finite() {
                return Err(PipelineError::Sequence(format!("tasks[{i}].edc.q: zero quaternion")));
            }
        }
    }
    Ok(seq)
}

pub fn load_task_sequence(path: &Path) -> Result<TaskSequence, PipelineError> {
    parse_task_sequence(&fs::read_to_string(path)?)
}

/// Knobs for binding beyond what the task model carries.
#[derive(Clone, Debug, PartialEq)]
pub struct BindOptions {
    pub thresholds: Thresholds<f64>,
    pub horizon: usize,
    /// Standard deviation of the noise added to oracle features, meters.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for BindOptions {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            horizon: 200,
            feature_noise: 0.0,
            seed: 0,
        }
    }
}

/// Where the visual features sit on the T and U axes, relative to the start:
/// the hand's end coordinate on that axis as placed by the demonstration.
fn feature_oracle(frame: &Frame, displacement: &Vec3) -> [f64; 3] {
    frame.coords(displacement)
}

pub fn bind_parameters(
    model: &TaskModel,
    scene: &Scene,
    start: &Pose,
    opts: &BindOptions,
) -> Result<SkillParameters, AgentError> {
    let spec = lookup(&model.task)?;
    let family = SkillFamily::of(spec);
    let gc = &scene.object.grasp_center;
    let start_grasp = start.transform_point(gc);
    let end_grasp = model.edc.as_ref().map(|e| e.pose(&start.orientation).transform_point(gc));
    let displacement = end_grasp.map(|e| e - start_grasp).unwrap_or_else(Vec3::zeros);
    let rotational = spec.kind() == MotionKind::Rotation;
    let hinge = scene.hinge;
    if rotational && hinge.is_none() {
        return Err(AgentError::Config(format!("{} needs a hinged scene", spec.name)));
    }

    let s = match model.dtd {
        Some(d) => Vec3::from(d),
        None if rotational => {
            let h = hinge.expect("checked above");
            let tangent = h.axis.cross(&(start_grasp - h.point));
            let sign = match end_grasp {
                Some(e) if h.angle_between(&start_grasp, &e) < 0.0 => -1.0,
                _ => 1.0,
            };
            tangent * sign
        }
        None => {
            if displacement.norm() < 1e-9 {
                return Err(AgentError::Config(format!(
                    "{}: no DTD and the EDC does not move the hand",
                    spec.name
                )));
            }
            displacement
        }
    };

    let mut preferred = Vec::new();
    if family == SkillFamily::Wipe {
        let contacts = touching_contacts(scene, start);
        if let Some(c) = contacts.first() {
            preferred.push(c.normal);
        }
    }
    if rotational {
        if let Some(h) = hinge {
            preferred.push(h.axis);
        }
    }
    preferred.push(scene.vertical);
    let frame = Frame::complete(&s, &preferred)?;

    let mut params = SkillParameters::new(frame);
    params.thresholds = opts.thresholds;
    params.horizon = opts.horizon;
    params.hinge = if rotational { hinge } else { None };

    let coords = frame.coords(&displacement);
    params.goal[0] = match (spec.roles.s, &end_grasp) {
        (APrimitive::A2, _) | (_, None) => None,
        (_, Some(e)) if rotational => Some(hinge.expect("checked above").angle_between(&start_grasp, e)),
        _ => Some(coords[0]),
    };
    params.goal[1] = Some(coords[1]);
    params.goal[2] = if family == SkillFamily::Wipe { None } else { Some(coords[2]) };

    let program = compose(spec)?;
    let needs_feature = |k: usize| {
        program
            .atoms()
            .any(|a| a.axis.index() == k && a.kind == AtomKind::FeatureGap)
    };
    let oracle = feature_oracle(&frame, &displacement);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for k in 1..3 {
        if needs_feature(k) {
            let noise = if opts.feature_noise > 0.0 {
                Normal::new(0.0, opts.feature_noise)
                    .map_err(|e| AgentError::Config(e.to_string()))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            params.feature[k] = Some(oracle[k] + noise);
        }
    }
    Ok(params)
}

/// Controllers and binding options for a sequence run.
#[derive(Clone, Debug, Default)]
pub struct ExecOptions {
    pub bind: BindOptions,
    pub gains: Gains,
    /// Learned policies by skill name; other skills use the analytic
    /// controller of their family.
    pub policies: BTreeMap<String, Policy>,
}

fn controller_for(name: &str, family: SkillFamily, opts: &ExecOptions, step_size: f64) -> Box<dyn Controller + Send> {
    match opts.policies.get(name) {
        Some(p) if family != SkillFamily::Position => Box::new(PolicyController {
            policy: p.clone(),
            step_size,
        }),
        _ => analytic_controller(family, &opts.gains),
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExecutionReport {
    pub traces: Vec<EpisodeTrace>,
    /// Markers passed through, in order.
    pub markers: Vec<String>,
}

impl ExecutionReport {
    pub fn success(&self) -> bool {
        self.traces.iter().all(|t| t.termination == Termination::Success)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            success: self.success(),
            skills: self
                .traces
                .iter()
                .map(|t| {
                    let [s, t_, u] = t.max_axis_forces();
                    SkillSummary {
                        skill: t.skill.clone(),
                        termination: t.termination,
                        steps: t.steps(),
                        max_forces: MaxForces {
                            norm: t.max_force(),
                            s,
                            t: t_,
                            u,
                        },
                    }
                })
                .collect(),
        }
    }

    /// One trace CSV per skill plus `summary.json`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (k, t) in self.traces.iter().enumerate() {
            let path = dir.join(format!("{:02}_{}.csv", k + 1, t.skill));
            save_trace_csv(t, &path)?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&self.summary())? + "\n")?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxForces {
    pub norm: f64,
    pub s: f64,
    pub t: f64,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillSummary {
    pub skill: String,
    pub termination: Termination,
    pub steps: usize,
    pub max_forces: MaxForces,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub success: bool,
    pub skills: Vec<SkillSummary>,
}

/// Runs the skills of `seq` one after another on `env`, stopping after the
/// first trace that does not end in success.
pub fn execute_sequence(seq: &TaskSequence, env: &mut Env, opts: &ExecOptions) -> Result<ExecutionReport, PipelineError> {
    let task_error = |index: usize, task: &str, e: AgentError| PipelineError::Task {
        index,
        task: task.to_string(),
        source: Box::new(e),
    };
    if let Some((i, first)) = seq.tasks.iter().enumerate().find(|(_, t)| !t.is_marker()) {
        let spec = lookup(&first.task).map_err(|e| task_error(i, &first.task, e.into()))?;
        let actual = env.classify().map_err(|e| task_error(i, &first.task, e.into()))?.state;
        if actual != spec.from {
            return Err(task_error(
                i,
                &first.task,
                AgentError::StateMismatch {
                    skill: spec.name.to_string(),
                    expected: spec.from.to_string(),
                    actual: actual.to_string(),
                },
            ));
        }
    }

    let mut report = ExecutionReport::default();
    for (i, model) in seq.tasks.iter().enumerate() {
        if model.is_marker() {
            env.attached = model.task != "release";
            report.markers.push(model.task.clone());
            continue;
        }
        if !env.attached {
            return Err(task_error(i, &model.task, AgentError::Config("nothing is held".into())));
        }
        let spec = lookup(&model.task).map_err(|e| task_error(i, &model.task, e.into()))?;
        let bind = BindOptions {
            seed: derive_seed(&[opts.bind.seed, i as u64]),
            ..opts.bind.clone()
        };
        let params = bind_parameters(model, env.scene(), &env.pose(), &bind).map_err(|e| task_error(i, &model.task, e))?;
        let family = SkillFamily::of(spec);
        let mut ctl = controller_for(spec.name, family, opts, env.config().step_size);
        let trace = run_skill(spec, ctl.as_mut(), env, &params, &RunOptions::default())
            .map_err(|e| task_error(i, &model.task, e))?;
        let done = trace.termination != Termination::Success;
        report.traces.push(trace);
        if done {
            break;
        }
    }
    Ok(report)
}

/// A task model that exercises `spec` on `scene` without a demonstration.
pub fn default_task(spec_name: &str, scene: &Scene) -> Result<TaskModel, PipelineError> {
    let spec = lookup(spec_name).map_err(AgentError::from)?;
    let mut model = TaskModel::new(spec.name);
    let start = scene.object.pose;
    let up = scene.vertical;
    let shifted = |d: Vec3| {
        Some(Edc {
            p: (start.position + d).into(),
            q: None,
        })
    };
    if spec.kind() == MotionKind::Rotation {
        let h = scene
            .hinge
            .ok_or_else(|| PipelineError::Sequence(format!("{} needs a hinged scene", spec.name)))?;
        let grasp = start.transform_point(&scene.object.grasp_center);
        let tangent = h.axis.cross(&(grasp - h.point)).normalize();
        let (sign, angle) = match spec.name {
            "OR-RV" => (1.0, Some(60f64.to_radians())),
            "RV-RV" => (1.0, Some(30f64.to_radians())),
            _ => (-1.0, None),
        };
        model.dtd = Some((tangent * sign).into());
        if let Some(a) = angle {
            let rot = Quat::from_axis_angle(&nalgebra::Unit::new_normalize(h.axis), a);
            let pose = Pose::new(h.point + rot * (start.position - h.point), rot * start.orientation);
            model.edc = Some(Edc {
                p: pose.position.into(),
                q: Some(pose.quaternion_wxyz()),
            });
        }
        return Ok(model);
    }
    match spec.name {
        "PR-OP" => model.dtd = Some([-1.0, 0.0, 0.0]),
        "OP-PR" => {
            model.dtd = Some([1.0, 0.0, 0.0]);
            model.edc = shifted(Vec3::new(0.15, 0.0, 0.0));
        }
        "PR-PR" => {
            model.dtd = Some([1.0, 0.0, 0.0]);
            model.edc = shifted(Vec3::new(0.1, 0.0, 0.0));
        }
        "PC1-PC1" => {
            model.dtd = Some([0.0, 1.0, 0.0]);
            model.edc = shifted(Vec3::new(0.0, 0.5, 0.0));
        }
        _ if spec.roles.s == APrimitive::A2 => model.dtd = Some((-up).into()),
        _ if spec.from == ContactState::NC => {
            model.dtd = Some([1.0, 0.0, 0.0]);
            model.edc = shifted(Vec3::new(0.1, 0.0, 0.0));
        }
        _ => {
            model.dtd = Some(up.into());
            model.edc = shifted(up * 0.1);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::preset;
    use approx::assert_relative_eq;

    fn lifted(name: &str, h: f64) -> Scene {
        let s = preset(name).unwrap();
        let p = s.object.pose.position + Vec3::new(0.0, 0.0, h);
        s.with_object_position(p)
    }

    #[test]
    fn parse_markers_and_errors() {
        let seq = parse_task_sequence(r#"{"tasks":[{"task":"grasp:active-force"},{"task":"NC-NC","edc":{"p":[0.1,0,0.2]}},{"task":"release"}]}"#).unwrap();
        assert_eq!(seq.task_names(), ["grasp:active-force", "NC-NC", "release"]);
        assert!(parse_task_sequence(r#"{"tasks":[]}"#).unwrap().tasks.is_empty());

        let err = parse_task_sequence(r#"{"tasks":[{"task":"NC-XX"}]}"#).unwrap_err().to_string();
        assert!(err.contains("tasks[0].task"), "{err}");
        let err = parse_task_sequence(r#"{"tasks":[{"task":"NC-NC","edc":{"p":[1,2]}}]}"#).unwrap_err().to_string();
        assert!(err.contains("tasks[0].edc.p"), "{err}");
        let err = parse_task_sequence(r#"{"tasks":[{"task":"NC-NC","dtd":[0,0,2]}]}"#).unwrap_err().to_string();
        assert!(err.contains("tasks[0].dtd"), "{err}");
        assert!(parse_task_sequence(r#"{"tasks":[{"task":"NC-NC","colour":"red"}]}"#).is_err());
    }

    #[test]
    fn lift_goal_is_along_s() {
        let scene = preset("tabletop").unwrap();
        let start = scene.object.pose;
        let mut m = TaskModel::new("PC-NC-a");
        m.dtd = Some([0.0, 0.0, 1.0]);
        m.edc = Some(Edc {
            p: (start.position + Vec3::new(0.0, 0.0, 0.1)).into(),
            q: None,
        });
        let p = bind_parameters(&m, &scene, &start, &BindOptions::default()).unwrap();
        assert_relative_eq!(p.frame.s, Vec3::z());
        assert_relative_eq!(p.goal[0].unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(p.goal[1].unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.goal[2].unwrap(), 0.0, epsilon = 1e-12);
        assert!(p.frame.is_orthonormal(1e-12));

        m.edc = Some(Edc {
            p: start.position.into(),
            q: None,
        });
        let p = bind_parameters(&m, &scene, &start, &BindOptions::default()).unwrap();
        assert!(p.goal.iter().all(|g| g.unwrap().abs() < 1e-15));
    }

    #[test]
    fn drawer_axis_follows_dtd() {
        let scene = preset("drawer").unwrap();
        let start = scene.object.pose;
        let mut m = TaskModel::new("OP-PR");
        m.dtd = Some([-1.0, 0.0, 0.0]);
        m.edc = Some(Edc {
            p: (start.position + Vec3::new(-0.1, 0.02, 0.0)).into(),
            q: None,
        });
        let p = bind_parameters(&m, &scene, &start, &BindOptions::default()).unwrap();
        assert_relative_eq!(p.frame.s, -Vec3::x());
        assert_relative_eq!(p.frame.u, Vec3::z());
        assert_relative_eq!(p.goal[0].unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(p.frame.t.dot(&Vec3::y()) * 0.02, p.goal[1].unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn rotational_goal_is_an_angle() {
        let scene = preset("door").unwrap();
        let m = default_task("OR-RV", &scene).unwrap();
        let p = bind_parameters(&m, &scene, &scene.object.pose, &BindOptions::default()).unwrap();
        assert_relative_eq!(p.goal[0].unwrap(), 60f64.to_radians(), epsilon = 1e-9);
        assert_relative_eq!(p.frame.s, Vec3::y(), epsilon = 1e-12);
        assert!(p.hinge.is_some());
    }

    #[test]
    fn vertical_motion_falls_back() {
        let scene = preset("tabletop").unwrap();
        let mut m = TaskModel::new("NC-PC-a");
        m.dtd = Some([0.0, 0.0, -1.0]);
        let p = bind_parameters(&m, &scene, &scene.object.pose, &BindOptions::default()).unwrap();
        assert!(p.frame.is_orthonormal(1e-12));
        assert_eq!(p.goal[0], None);
    }

    #[test]
    fn single_bring_reaches_its_goal() {
        let scene = lifted("tabletop", 0.1);
        let start = scene.object.pose.position;
        let mut env = Env::new(scene).unwrap();
        let mut m = TaskModel::new("NC-NC");
        m.edc = Some(Edc {
            p: (start + Vec3::new(0.1, -0.05, 0.02)).into(),
            q: None,
        });
        let seq = TaskSequence {
            scene: None,
            tasks: vec![m],
        };
        let report = execute_sequence(&seq, &mut env, &ExecOptions::default()).unwrap();
        assert_eq!(report.traces.len(), 1);
        assert!(report.success());
        let end = report.traces[0].end_pose().position;
        assert!((end - (start + Vec3::new(0.1, -0.05, 0.02))).norm() <= 2e-3);
    }

    #[test]
    fn wrong_first_state_is_refused_before_running() {
        let mut env = Env::new(preset("tabletop").unwrap()).unwrap();
        let mut m = TaskModel::new("NC-NC");
        m.dtd = Some([1.0, 0.0, 0.0]);
        let seq = TaskSequence {
            scene: None,
            tasks: vec![m],
        };
        let err = execute_sequence(&seq, &mut env, &ExecOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::Task { index: 0, .. }));
        assert_eq!(env.steps(), 0);
    }

    #[test]
    fn failure_stops_the_sequence() {
        // The second bring runs into the table and is penalized.
        let scene = lifted("tabletop", 0.02);
        let start = scene.object.pose.position;
        let mut env = Env::new(scene).unwrap();
        let bring = |d: Vec3| {
            let mut m = TaskModel::new("NC-NC");
            m.edc = Some(Edc {
                p: (start + d).into(),
                q: None,
            });
            m
        };
        let seq = TaskSequence {
            scene: None,
            tasks: vec![
                bring(Vec3::new(0.05, 0.0, 0.0)),
                bring(Vec3::new(0.05, 0.0, -0.1)),
                bring(Vec3::new(0.0, 0.0, 0.0)),
            ],
        };
        let report = execute_sequence(&seq, &mut env, &ExecOptions::default()).unwrap();
        assert_eq!(report.traces.len(), 2);
        assert!(!report.success());
    }

    #[test]
    fn released_object_cannot_be_moved() {
        let mut env = Env::new(lifted("tabletop", 0.1)).unwrap();
        let mut m = TaskModel::new("NC-NC");
        m.dtd = Some([1.0, 0.0, 0.0]);
        m.edc = Some(Edc {
            p: [0.05, 0.0, 0.13],
            q: None,
        });
        let seq = TaskSequence {
            scene: None,
            tasks: vec![TaskModel::new("release"), m],
        };
        assert!(execute_sequence(&seq, &mut env, &ExecOptions::default()).is_err());
    }
}
