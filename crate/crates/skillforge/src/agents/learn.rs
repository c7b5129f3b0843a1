//! Derivative-free policy search over the skill runner.
//!
//! Episodes of one iteration run in parallel on private environments. Every
//! random draw comes from a stream derived from `(seed, iteration, index)`,
//! so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{Architecture, Policy, PolicyController};
use super::runner::{run_skill, RunOptions};
use super::{Frame, SkillFamily, SkillParameters};
use crate::cone::MotionKind;
use crate::error::AgentError;
use crate::reward::{SkillSpec, Termination};
use crate::sim::{preset, Env, Pose};
use crate::{Quat, Vec3};

/// SplitMix64 over the parts, for deriving independent seeds.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Builds one training episode's environment and parameters from a seed.
pub trait EnvFactory: Sync {
    fn skill(&self) -> &'static SkillSpec;
    fn make(&self, seed: u64) -> Result<(Env, SkillParameters), AgentError>;
    fn options(&self) -> RunOptions {
        RunOptions::fixed_horizon()
    }
}

/// Training scenes for the learnable skills: the drawer for the drawer
/// family, the door for the door family and the whiteboard for wiping. Each
/// episode draws a fresh error in the believed motion direction (or surface
/// normal).
#[derive(Clone, Debug)]
pub struct StandardFactory {
    pub spec: &'static SkillSpec,
    pub horizon: usize,
    /// Half-width of the uniform heading error, degrees.
    pub yaw_error_deg: f64,
    pub pitch_error_deg: f64,
    /// Standard deviation of the believed-normal error for wiping, degrees.
    pub normal_noise_deg: f64,
}

impl StandardFactory {
    pub fn new(spec: &'static SkillSpec) -> Result<Self, AgentError> {
        let family = SkillFamily::of(spec);
        let horizon = match family {
            SkillFamily::Position => return Err(AgentError::Unsupported(spec.name.to_string())),
            SkillFamily::Wipe => 100,
            SkillFamily::Direction if spec.kind() == MotionKind::Rotation => 40,
            SkillFamily::Direction => 30,
        };
        Ok(Self {
            spec,
            horizon,
            yaw_error_deg: 10.0,
            pitch_error_deg: 5.0,
            normal_noise_deg: 2.0,
        })
    }
}

fn perturbed(dir: &Vec3, up: &Vec3, yaw: f64, pitch: f64) -> Vec3 {
    let side = up.cross(dir);
    let q = Quat::from_axis_angle(&nalgebra::Unit::new_normalize(*up), yaw)
        * Quat::from_axis_angle(&nalgebra::Unit::new_normalize(side), pitch);
    q * dir
}

impl EnvFactory for StandardFactory {
    fn skill(&self) -> &'static SkillSpec {
        self.spec
    }

    fn make(&self, seed: u64) -> Result<(Env, SkillParameters), AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = |half: f64, rng: &mut ChaCha8Rng| {
            if half > 0.0 {
                Uniform::new_inclusive(-half, half).sample(rng).to_radians()
            } else {
                0.0
            }
        };
        let yaw = uniform(self.yaw_error_deg, &mut rng);
        let pitch = uniform(self.pitch_error_deg, &mut rng);
        let family = SkillFamily::of(self.spec);
        let (scene, dir, goal) = match (family, self.spec.kind()) {
            (SkillFamily::Wipe, _) => (preset("whiteboard")?, Vec3::y(), Some(0.5)),
            (_, MotionKind::Rotation) => {
                let (name, sign, goal) = match self.spec.name {
                    "OR-RV" => ("door", 1.0, Some(60f64.to_radians())),
                    "RV-OR" => ("door-ajar", -1.0, None),
                    _ => ("door-ajar", 1.0, None),
                };
                let scene = preset(name)?;
                let hinge = scene.hinge.expect("door presets are hinged");
                let radial = scene.object.pose.position - hinge.point;
                (scene, hinge.axis.cross(&radial).normalize() * sign, goal)
            }
            _ => match self.spec.name {
                "PR-OP" => (preset("drawer")?, -Vec3::x(), None),
                "OP-PR" => (preset("drawer-closed")?, Vec3::x(), Some(0.15)),
                _ => {
                    let s = preset("drawer")?;
                    (s.with_object_pose(Pose::at(Vec3::new(0.02, 0.0, 0.0))), Vec3::x(), None)
                }
            },
        };
        let vertical = scene.vertical;
        let mut params = match family {
            SkillFamily::Wipe => {
                let n = Vec3::x();
                let normal = StandardNormal;
                let angle: f64 = Distribution::<f64>::sample(&normal, &mut rng) * self.normal_noise_deg.to_radians();
                let axis_angle: f64 = Uniform::new(0.0, std::f64::consts::TAU).sample(&mut rng);
                let axis = Vec3::new(0.0, axis_angle.cos(), axis_angle.sin());
                let tilt = Quat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
                let frame = Frame::complete(&(tilt * dir), &[tilt * n])?;
                SkillParameters::new(frame)
            }
            _ => {
                let s = perturbed(&dir, &vertical, yaw, pitch);
                SkillParameters::new(Frame::complete(&s, &[vertical])?)
            }
        };
        params.hinge = scene.hinge;
        params.horizon = self.horizon;
        params.goal[0] = goal;
        let env = Env::new(scene)?;
        Ok((env, params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CrossEntropy,
    FiniteDifference,
}

impl std::str::FromStr for Method {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cem" | "cross-entropy" => Ok(Method::CrossEntropy),
            "fd" | "finite-difference" => Ok(Method::FiniteDifference),
            _ => Err(AgentError::Config(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub method: Method,
    /// Upper bound on iterations; training also stops when the next
    /// iteration would exceed `max_env_steps`.
    pub iterations: Option<usize>,
    pub max_env_steps: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub episodes: usize,
    pub init_std: f64,
    pub min_std: f64,
    /// Hidden width; `None` trains a linear policy.
    pub hidden: Option<usize>,
    pub fd_perturbation: f64,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            method: Method::CrossEntropy,
            iterations: None,
            max_env_steps: 50_000,
            population: 16,
            elite_fraction: 0.25,
            episodes: 1,
            init_std: 0.3,
            min_std: 0.02,
            hidden: None,
            fd_perturbation: 0.05,
            fd_step: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    /// Best single score seen up to and including this iteration.
    pub best_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOutcome {
    /// The search distribution's mean after the last iteration.
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
    pub env_steps: usize,
}

pub fn write_curve_csv<W: std::io::Write>(curve: &[CurvePoint], out: W) -> Result<(), AgentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "mean_reward", "best_reward"])?;
    for p in curve {
        w.write_record([p.iteration.to_string(), p.mean_reward.to_string(), p.best_reward.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

struct Score {
    value: f64,
    steps: usize,
}

/// Mean return of `params` over the given episode seeds. A blowup is
/// charged twice the collision threshold for every step it cut off.
fn score(
    factory: &dyn EnvFactory,
    policy: &Policy,
    episode_seeds: &[u64],
) -> Result<Score, AgentError> {
    let spec = factory.skill();
    let opts = factory.options();
    let mut total = 0.0;
    let mut steps = 0;
    for &s in episode_seeds {
        let (mut env, params) = factory.make(s)?;
        let mut ctl = PolicyController {
            policy: policy.clone(),
            step_size: env.config().step_size,
        };
        let trace = run_skill(spec, &mut ctl, &mut env, &params, &opts)?;
        let mut r = trace.total_reward();
        if trace.termination == Termination::Error {
            r -= 2.0 * params.thresholds.collision * (params.horizon - trace.steps()) as f64;
        }
        if !r.is_finite() {
            return Err(AgentError::Config(format!("non-finite episode return under seed {s}")));
        }
        total += r;
        steps += trace.steps();
    }
    Ok(Score {
        value: total / episode_seeds.len() as f64,
        steps,
    })
}

pub fn train(factory: &dyn EnvFactory, config: &LearnerConfig) -> Result<TrainingOutcome, AgentError> {
    if config.population < 2 || config.episodes == 0 {
        return Err(AgentError::Config("population must be at least 2 and episodes at least 1".into()));
    }
    if !(config.elite_fraction > 0.0 && config.elite_fraction <= 1.0) || !(config.init_std >= 0.0) {
        return Err(AgentError::Config("elite fraction must lie in (0, 1]".into()));
    }
    let spec = factory.skill();
    let arch = Architecture::for_family(SkillFamily::of(spec), config.hidden)?;
    let policy = Policy::zeros(spec.name, arch, config.seed);
    match config.method {
        Method::CrossEntropy => cem(factory, config, policy),
        Method::FiniteDifference => finite_difference(factory, config, policy),
    }
}

fn episode_seeds(config: &LearnerConfig, iteration: usize) -> Vec<u64> {
    (0..config.episodes)
        .map(|e| derive_seed(&[config.seed, iteration as u64, e as u64]))
        .collect()
}

fn horizon_of(factory: &dyn EnvFactory) -> Result<usize, AgentError> {
    Ok(factory.make(0)?.1.horizon)
}

fn evaluate_all(
    factory: &dyn EnvFactory,
    template: &Policy,
    candidates: &[Vec<f64>],
    seeds: &[u64],
) -> Result<Vec<Score>, AgentError> {
    candidates
        .par_iter()
        .map(|theta| {
            let p = Policy {
                parameters: theta.clone(),
                ..template.clone()
            };
            score(factory, &p, seeds)
        })
        .collect()
}

fn cem(factory: &dyn EnvFactory, config: &LearnerConfig, mut policy: Policy) -> Result<TrainingOutcome, AgentError> {
    let dim = policy.parameters.len();
    let per_iteration = config.population * config.episodes * horizon_of(factory)?;
    let n_elite = ((config.population as f64 * config.elite_fraction).ceil() as usize).clamp(1, config.population);
    let mut mean = policy.parameters.clone();
    let mut std = vec![config.init_std; dim];
    let mut curve = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut env_steps = 0;
    let mut it = 0;
    while config.iterations.map_or(true, |n| it < n) && env_steps + per_iteration <= config.max_env_steps {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, it as u64, u64::MAX]));
        let candidates: Vec<Vec<f64>> = (0..config.population)
            .map(|_| {
                (0..dim)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[j] + std[j] * z
                    })
                    .collect()
            })
            .collect();
        let scores = evaluate_all(factory, &policy, &candidates, &episode_seeds(config, it))?;
        env_steps += scores.iter().map(|s| s.steps).sum::<usize>();
        let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
        let iter_best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        best = best.max(iter_best);
        curve.push(CurvePoint {
            iteration: it,
            mean_reward: values.iter().sum::<f64>() / values.len() as f64,
            best_reward: best,
        });

        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let elites = &order[..n_elite];
        for j in 0..dim {
            let m = elites.iter().map(|&i| candidates[i][j]).sum::<f64>() / n_elite as f64;
            let var = elites.iter().map(|&i| (candidates[i][j] - m).powi(2)).sum::<f64>() / n_elite as f64;
            mean[j] = m;
            std[j] = var.sqrt().max(config.min_std);
        }
        it += 1;
    }
    if it > 0 {
        policy.parameters = mean;
    }
    Ok(TrainingOutcome {
        policy,
        curve,
        env_steps,
    })
}

fn finite_difference(
    factory: &dyn EnvFactory,
    config: &LearnerConfig,
    mut policy: Policy,
) -> Result<TrainingOutcome, AgentError> {
    let dim = policy.parameters.len();
    let per_iteration = 2 * dim * config.episodes * horizon_of(factory)?;
    let h = config.fd_perturbation;
    let mut theta = policy.parameters.clone();
    let mut curve = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut env_steps = 0;
    let mut it = 0;
    while config.iterations.map_or(true, |n| it < n) && env_steps + per_iteration <= config.max_env_steps {
        let candidates: Vec<Vec<f64>> = (0..2 * dim)
            .map(|k| {
                let mut t = theta.clone();
                t[k / 2] += if k % 2 == 0 { h } else { -h };
                t
            })
            .collect();
        let scores = evaluate_all(factory, &policy, &candidates, &episode_seeds(config, it))?;
        env_steps += scores.iter().map(|s| s.steps).sum::<usize>();
        let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
        best = best.max(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        curve.push(CurvePoint {
            iteration: it,
            mean_reward: values.iter().sum::<f64>() / values.len() as f64,
            best_reward: best,
        });
        let grad: Vec<f64> = (0..dim).map(|j| (values[2 * j] - values[2 * j + 1]) / (2.0 * h)).collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t += config.fd_step * g / norm;
            }
        }
        it += 1;
    }
    policy.parameters = theta;
    Ok(TrainingOutcome {
        policy,
        curve,
        env_steps,
    })
}
