//! Position-stepped contact simulation.
//!
//! The hand and the grasped object move as one rigid body whose pose is
//! commanded step by step. Every sample point of the body that penetrates a
//! surface contributes a frictionless spring-damper force along the surface
//! normal; the damper only acts while the penetration grows.

use nalgebra::{Isometry3, Point3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::cone::{classify, Classification, ContactPoint, ContactSet};
use crate::error::SimError;
use crate::scalar::Real;
use crate::{Quat, Vec3};

pub mod presets;

pub use presets::{preset, PRESET_NAMES};

/// Force sensor reading relative to a baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceReading<T: Real> {
    pub f: Vector3<T>,
    pub f0: Vector3<T>,
    /// Unit direction of `f - f0`, zero when the two coincide.
    pub f_n: Vector3<T>,
    /// `floor(|f - f0| / f_step)`.
    pub f_desc: u32,
}

impl<T: Real> ForceReading<T> {
    pub fn delta(&self) -> Vector3<T> {
        self.f - self.f0
    }
}

pub fn sense<T: Real>(f: &Vector3<T>, f0: &Vector3<T>, f_step: T) -> ForceReading<T> {
    let d = f - f0;
    let mag = d.norm();
    let f_n = if mag > T::zero() { d / mag } else { Vector3::zeros() };
    let f_desc = if f_step > T::zero() {
        (mag / f_step).floor().to_u32().unwrap_or(u32::MAX)
    } else {
        0
    };
    ForceReading {
        f: *f,
        f0: *f0,
        f_n,
        f_desc,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn at(position: Vec3) -> Self {
        Self::new(position, Quat::identity())
    }

    pub fn transform_point(&self, body: &Vec3) -> Vec3 {
        self.position + self.orientation * body
    }

    /// Rotates the pose by `rot` about the world point `pivot`.
    pub fn rotated_about(&self, rot: &Quat, pivot: &Vec3) -> Pose {
        Pose {
            position: pivot + rot * (self.position - pivot),
            orientation: rot * self.orientation,
        }
    }

    /// `[w, x, y, z]`
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// In-plane bounds of a planar surface: `|r·axis| <= half_u` and
/// `|r·(n×axis)| <= half_v` for `r` measured from the surface point.
/// With `depth`, points further than that behind the surface are past it
/// rather than in it (a face of a thin board).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub axis: Vec3,
    pub half_u: f64,
    pub half_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// Half-space whose free side is along `normal`.
    Plane {
        point: Vec3,
        normal: Vec3,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extent: Option<Extent>,
    },
    /// Cylindrical wall of radius `radius` about the line through `center`
    /// along `axis`. With `outward` the free side is outside the cylinder.
    Cylinder {
        center: Vec3,
        axis: Vec3,
        radius: f64,
        outward: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "default_stiffness")]
    pub stiffness: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_stiffness() -> f64 {
    5000.0
}

fn default_damping() -> f64 {
    50.0
}

const EXTENT_EPS: f64 = 1e-9;

impl Surface {
    pub fn plane(point: Vec3, normal: Vec3, extent: Option<Extent>) -> Self {
        Self {
            shape: Shape::Plane {
                point,
                normal: normal.normalize(),
                extent,
            },
            stiffness: default_stiffness(),
            damping: default_damping(),
        }
    }

    /// Rectangular plane patch centered at `point`.
    pub fn patch(point: Vec3, normal: Vec3, axis: Vec3, half_u: f64, half_v: f64) -> Self {
        Self::plane(
            point,
            normal,
            Some(Extent {
                axis: axis.normalize(),
                half_u,
                half_v,
                depth: None,
            }),
        )
    }

    /// A patch that only reaches `depth` behind its face.
    pub fn slab_face(point: Vec3, normal: Vec3, axis: Vec3, half_u: f64, half_v: f64, depth: f64) -> Self {
        let mut s = Self::patch(point, normal, axis, half_u, half_v);
        if let Shape::Plane { extent: Some(e), .. } = &mut s.shape {
            e.depth = Some(depth);
        }
        s
    }

    pub fn cylinder(center: Vec3, axis: Vec3, radius: f64, outward: bool) -> Self {
        Self {
            shape: Shape::Cylinder {
                center,
                axis: axis.normalize(),
                radius,
                outward,
            },
            stiffness: default_stiffness(),
            damping: default_damping(),
        }
    }

    /// Signed gap (negative when penetrating) and free-side normal at `x`,
    /// or `None` when `x` lies outside the surface's extent.
    pub fn probe(&self, x: &Vec3) -> Option<(f64, Vec3)> {
        match self.shape {
            Shape::Plane {
                point,
                normal,
                extent,
            } => {
                let r = x - point;
                if let Some(e) = extent {
                    let v = normal.cross(&e.axis);
                    if r.dot(&e.axis).abs() > e.half_u + EXTENT_EPS
                        || r.dot(&v).abs() > e.half_v + EXTENT_EPS
                    {
                        return None;
                    }
                }
                let gap = r.dot(&normal);
                if extent.and_then(|e| e.depth).is_some_and(|d| gap < -d) {
                    return None;
                }
                Some((gap, normal))
            }
            Shape::Cylinder {
                center,
                axis,
                radius,
                outward,
            } => {
                let r = x - center;
                let radial = r - axis * r.dot(&axis);
                let dist = radial.norm();
                if dist <= EXTENT_EPS {
                    return None;
                }
                let e = radial / dist;
                if outward {
                    Some((dist - radius, e))
                } else {
                    Some((radius - dist, -e))
                }
            }
        }
    }

    /// Normal of a planar surface.
    pub fn plane_normal(&self) -> Option<Vec3> {
        match self.shape {
            Shape::Plane { normal, .. } => Some(normal),
            Shape::Cylinder { .. } => None,
        }
    }

    pub fn plane_point(&self) -> Option<Vec3> {
        match self.shape {
            Shape::Plane { point, .. } => Some(point),
            Shape::Cylinder { .. } => None,
        }
    }

    /// Tilts the orientation of the surface by `rot` about its own anchor.
    pub fn tilted(&self, rot: &Quat) -> Surface {
        let shape = match self.shape {
            Shape::Plane {
                point,
                normal,
                extent,
            } => Shape::Plane {
                point,
                normal: rot * normal,
                extent: extent.map(|e| Extent {
                    axis: rot * e.axis,
                    ..e
                }),
            },
            Shape::Cylinder {
                center,
                axis,
                radius,
                outward,
            } => Shape::Cylinder {
                center,
                axis: rot * axis,
                radius,
                outward,
            },
        };
        Surface { shape, ..*self }
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Surface {
        let rot = iso.rotation;
        let shape = match self.shape {
            Shape::Plane {
                point,
                normal,
                extent,
            } => Shape::Plane {
                point: (iso * Point3::from(point)).coords,
                normal: rot * normal,
                extent: extent.map(|e| Extent {
                    axis: rot * e.axis,
                    ..e
                }),
            },
            Shape::Cylinder {
                center,
                axis,
                radius,
                outward,
            } => Shape::Cylinder {
                center: (iso * Point3::from(center)).coords,
                axis: rot * axis,
                radius,
                outward,
            },
        };
        Surface { shape, ..*self }
    }
}

/// The hand together with whatever it holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandObject {
    pub pose: Pose,
    /// Body-frame points tested against the surfaces.
    pub sample_points: Vec<Vec3>,
    /// Body-frame center of the grasp; rotations are applied about it.
    #[serde(default = "Vec3::zeros")]
    pub grasp_center: Vec3,
}

impl HandObject {
    /// A box with corners and face centers as sample points, grasped at its
    /// center.
    pub fn cuboid(pose: Pose, half: Vec3) -> Self {
        Self::cuboid_offset(pose, half, Vec3::zeros())
    }

    /// A box whose center sits at `offset` in the body frame.
    pub fn cuboid_offset(pose: Pose, half: Vec3, offset: Vec3) -> Self {
        let mut pts = Vec::with_capacity(14);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    pts.push(offset + Vec3::new(sx * half.x, sy * half.y, sz * half.z));
                }
            }
        }
        for i in 0..3 {
            for s in [-1.0, 1.0] {
                let mut v = Vec3::zeros();
                v[i] = s * half[i];
                pts.push(offset + v);
            }
        }
        Self {
            pose,
            sample_points: pts,
            grasp_center: Vec3::zeros(),
        }
    }

    pub fn point(pose: Pose) -> Self {
        Self {
            pose,
            sample_points: vec![Vec3::zeros()],
            grasp_center: Vec3::zeros(),
        }
    }
}

/// Revolute joint of an articulated scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub point: Vec3,
    pub axis: Vec3,
    /// The joint is modelled as two pins at `point ± pin_half_height·axis`.
    pub pin_half_height: f64,
}

impl Hinge {
    /// Canonical pin contacts: four normals perpendicular to the axis at
    /// each pin.
    pub fn pin_contacts(&self) -> Vec<ContactPoint<f64>> {
        let a = self.axis.normalize();
        let e1 = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (e1 - a * a.dot(&e1)).normalize();
        let e2 = a.cross(&e1);
        let mut out = Vec::with_capacity(8);
        for h in [self.pin_half_height, -self.pin_half_height] {
            let p = self.point + a * h;
            for n in [e1, -e1, e2, -e2] {
                out.push(ContactPoint { position: p, normal: n });
            }
        }
        out
    }

    /// Signed angle of `x` about the axis, measured from `reference`.
    pub fn angle_between(&self, reference: &Vec3, x: &Vec3) -> f64 {
        let a = self.axis.normalize();
        let r0 = reference - self.point;
        let r1 = x - self.point;
        let r0 = r0 - a * a.dot(&r0);
        let r1 = r1 - a * a.dot(&r1);
        a.dot(&r0.cross(&r1)).atan2(r0.dot(&r1))
    }

    /// Distance of `x` from the axis.
    pub fn radius_of(&self, x: &Vec3) -> f64 {
        let a = self.axis.normalize();
        let r = x - self.point;
        (r - a * a.dot(&r)).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Nominal translation per step; commands longer than twice this fail.
    pub step_size: f64,
    pub dt: f64,
    /// Penetration beyond this depth aborts the episode.
    pub penetration_cap: f64,
    /// Force resolution behind `f_desc`.
    pub f_step: f64,
    /// Gap below which a sample point counts as touching.
    pub contact_tol: f64,
    /// Standard deviation of the surface tilt applied when an `Env` is
    /// built, degrees. Zero keeps the scene as given.
    pub normal_noise: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_size: 0.005,
            dt: 0.1,
            penetration_cap: 0.05,
            f_step: 1.0,
            contact_tol: 5e-4,
            normal_noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub surfaces: Vec<Surface>,
    pub object: HandObject,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hinge: Option<Hinge>,
    #[serde(default = "Vec3::z")]
    pub vertical: Vec3,
    #[serde(default)]
    pub config: SimConfig,
}

impl Scene {
    pub fn with_object_position(mut self, position: Vec3) -> Self {
        self.object.pose.position = position;
        self
    }

    pub fn with_object_pose(mut self, pose: Pose) -> Self {
        self.object.pose = pose;
        self
    }

    /// The whole scene moved rigidly by `iso`.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Scene {
        let mut out = self.clone();
        out.surfaces = self.surfaces.iter().map(|s| s.transformed(iso)).collect();
        out.object.pose = Pose {
            position: (iso * Point3::from(self.object.pose.position)).coords,
            orientation: iso.rotation * self.object.pose.orientation,
        };
        out.hinge = self.hinge.map(|h| Hinge {
            point: (iso * Point3::from(h.point)).coords,
            axis: iso.rotation * h.axis,
            ..h
        });
        out.vertical = iso.rotation * self.vertical;
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let c = &self.config;
        if !(c.step_size > 0.0 && c.dt > 0.0 && c.penetration_cap > 0.0 && c.f_step > 0.0) {
            return Err(SimError::InvalidScene("config values must be positive".into()));
        }
        if !(c.normal_noise >= 0.0) {
            return Err(SimError::InvalidScene("normal noise must be non-negative".into()));
        }
        if self.object.sample_points.is_empty() {
            return Err(SimError::InvalidScene("object has no sample points".into()));
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            let n = match s.shape {
                Shape::Plane { normal, .. } => normal,
                Shape::Cylinder { axis, .. } => axis,
            };
            if (n.norm() - 1.0).abs() > 1e-6 || !(s.stiffness > 0.0) || s.damping < 0.0 {
                return Err(SimError::InvalidScene(format!("surface {i} is malformed")));
            }
        }
        if self.vertical.norm() < 1e-9 {
            return Err(SimError::InvalidScene("vertical is zero".into()));
        }
        Ok(())
    }
}

/// Tilts every surface by a random angle drawn from `N(0, sigma)` about a
/// random axis perpendicular to its normal. Planes pivot about the foot of
/// the held object's position, so a surface under the object stays under it.
/// Used to make the true scene differ from the modelled one.
pub fn randomize_scene<R: Rng + ?Sized>(scene: &Scene, sigma: f64, rng: &mut R) -> Scene {
    let mut out = scene.clone();
    if sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let held = scene.object.pose.position;
    for s in &mut out.surfaces {
        let n = match s.shape {
            Shape::Plane { normal, .. } => normal,
            Shape::Cylinder { axis, .. } => axis,
        };
        let v: [f64; 3] = UnitSphere.sample(rng);
        let v = Vec3::from(v);
        let axis = v - n * n.dot(&v);
        let angle = normal.sample(rng);
        if axis.norm() > 1e-9 {
            let rot = Quat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            *s = match s.shape {
                Shape::Plane { point, normal, .. } => {
                    let foot = held - normal * normal.dot(&(held - point));
                    s.transformed(&Isometry3::from_parts(Translation3::from(foot - rot * foot), rot))
                }
                Shape::Cylinder { .. } => s.tilted(&rot),
            };
        }
    }
    out
}

/// Maps a commanded hand pose to the pose actually reached.
pub trait Carrier: Send {
    fn realize(&mut self, commanded: &Pose) -> Pose;
}

/// Reaches every commanded pose exactly.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityCarrier;

impl Carrier for IdentityCarrier {
    fn realize(&mut self, commanded: &Pose) -> Pose {
        *commanded
    }
}

/// Adds uniform position noise of up to `amplitude` per axis.
#[derive(Clone, Debug)]
pub struct JitteryCarrier {
    pub amplitude: f64,
    rng: ChaCha8Rng,
}

impl JitteryCarrier {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        Self {
            amplitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Carrier for JitteryCarrier {
    fn realize(&mut self, commanded: &Pose) -> Pose {
        let a = self.amplitude;
        let mut jitter = || if a > 0.0 { self.rng.gen_range(-a..=a) } else { 0.0 };
        let d = Vec3::new(jitter(), jitter(), jitter());
        Pose {
            position: commanded.position + d,
            ..*commanded
        }
    }
}

fn touching_points(surfaces: &[Surface], points: &[Vec3], tol: f64) -> Vec<ContactPoint<f64>> {
    let mut out = Vec::new();
    for x in points {
        for s in surfaces {
            if let Some((gap, n)) = s.probe(x) {
                if gap <= tol {
                    out.push(ContactPoint {
                        position: *x,
                        normal: n,
                    });
                }
            }
        }
    }
    out
}

/// Contacts of the scene's object placed at `pose`.
pub fn touching_contacts(scene: &Scene, pose: &Pose) -> Vec<ContactPoint<f64>> {
    let pts: Vec<Vec3> = scene.object.sample_points.iter().map(|p| pose.transform_point(p)).collect();
    touching_points(&scene.surfaces, &pts, scene.config.contact_tol)
}

/// Reaction force on `object` moving rigidly with `velocity`, and which
/// surfaces it penetrates.
pub fn contact_force(
    object: &HandObject,
    velocity: &Vec3,
    surfaces: &[Surface],
    penetration_cap: f64,
) -> Result<(Vec3, Vec<bool>), SimError> {
    let mut total = Vec3::zeros();
    let mut flags = vec![false; surfaces.len()];
    for p in &object.sample_points {
        let x = object.pose.transform_point(p);
        for (i, s) in surfaces.iter().enumerate() {
            let Some((gap, n)) = s.probe(&x) else { continue };
            if gap >= 0.0 {
                continue;
            }
            let depth = -gap;
            if depth > penetration_cap {
                return Err(SimError::Blowup {
                    depth,
                    cap: penetration_cap,
                });
            }
            flags[i] = true;
            let closing = (-velocity.dot(&n)).max(0.0);
            total += n * (s.stiffness * depth + s.damping * closing);
        }
    }
    Ok((total, flags))
}

pub struct Env {
    scene: Scene,
    pose: Pose,
    /// World sample points at the previous step.
    previous: Vec<Vec3>,
    force: Vec3,
    baseline: Vec3,
    steps: usize,
    time: f64,
    pub attached: bool,
    carrier: Box<dyn Carrier>,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("scene", &self.scene.name)
            .field("pose", &self.pose)
            .field("force", &self.force)
            .field("steps", &self.steps)
            .finish()
    }
}

impl Env {
    pub fn new(scene: Scene) -> Result<Self, SimError> {
        scene.validate()?;
        let scene = if scene.config.normal_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(scene.config.seed);
            randomize_scene(&scene, scene.config.normal_noise.to_radians(), &mut rng)
        } else {
            scene
        };
        let pose = scene.object.pose;
        let mut env = Env {
            previous: Vec::new(),
            scene,
            pose,
            force: Vec3::zeros(),
            baseline: Vec3::zeros(),
            steps: 0,
            time: 0.0,
            attached: true,
            carrier: Box::new(IdentityCarrier),
        };
        env.previous = env.world_points(&pose);
        env.force = env.contact_force(&env.previous.clone(), &env.previous.clone())?;
        Ok(env)
    }

    pub fn with_carrier(mut self, carrier: Box<dyn Carrier>) -> Self {
        self.carrier = carrier;
        self
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &SimConfig {
        &self.scene.config
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grasp_center(&self) -> Vec3 {
        self.pose.transform_point(&self.scene.object.grasp_center)
    }

    /// Raw reaction force of the environment on the object.
    pub fn force(&self) -> Vec3 {
        self.force
    }

    pub fn baseline(&self) -> Vec3 {
        self.baseline
    }

    pub fn reading(&self) -> ForceReading<f64> {
        sense(&self.force, &self.baseline, self.scene.config.f_step)
    }

    /// Takes the current force as the new baseline, but only while nothing
    /// is touched; a reading taken in contact would hide the contact force.
    pub fn capture_baseline(&mut self) {
        if self.touching().is_empty() {
            self.baseline = self.force;
        }
    }

    fn world_points(&self, pose: &Pose) -> Vec<Vec3> {
        self.scene
            .object
            .sample_points
            .iter()
            .map(|p| pose.transform_point(p))
            .collect()
    }

    fn contact_force(&self, now: &[Vec3], before: &[Vec3]) -> Result<Vec3, SimError> {
        let cap = self.scene.config.penetration_cap;
        let dt = self.scene.config.dt;
        let mut total = Vec3::zeros();
        for (x, x0) in now.iter().zip(before) {
            for s in &self.scene.surfaces {
                let Some((gap, n)) = s.probe(x) else { continue };
                if gap >= 0.0 {
                    continue;
                }
                let depth = -gap;
                if depth > cap {
                    return Err(SimError::Blowup { depth, cap });
                }
                let gap0 = s.probe(x0).map(|(g, _)| g).unwrap_or(gap);
                let closing = ((gap0 - gap) / dt).max(0.0);
                total += n * (s.stiffness * depth + s.damping * closing);
            }
        }
        Ok(total)
    }

    /// Rotates the body by `drot` about the grasp center, then translates it
    /// by `dpos`.
    pub fn step(&mut self, dpos: &Vec3, drot: &Quat) -> Result<ForceReading<f64>, SimError> {
        let limit = 2.0 * self.scene.config.step_size;
        let length = dpos.norm();
        if !length.is_finite() || length > limit + 1e-12 {
            return Err(SimError::StepTooLarge { length, limit });
        }
        let pivot = self.grasp_center();
        let mut commanded = self.pose.rotated_about(drot, &pivot);
        commanded.position += dpos;
        let next = self.carrier.realize(&commanded);
        let now = self.world_points(&next);
        let result = self.contact_force(&now, &self.previous);
        self.pose = next;
        self.previous = now;
        self.steps += 1;
        self.time += self.scene.config.dt;
        self.force = result?;
        Ok(self.reading())
    }

    /// Sample points within `contact_tol` of a surface, each paired with
    /// that surface's normal.
    pub fn touching(&self) -> Vec<ContactPoint<f64>> {
        touching_points(&self.scene.surfaces, &self.previous, self.scene.config.contact_tol)
    }

    pub fn max_penetration(&self) -> f64 {
        let mut depth: f64 = 0.0;
        for x in &self.previous {
            for s in &self.scene.surfaces {
                if let Some((gap, _)) = s.probe(x) {
                    depth = depth.max(-gap);
                }
            }
        }
        depth
    }

    /// Contacts as seen by the classifier. Hinged scenes are classified for
    /// rotations about the hinge and include the pin contacts.
    pub fn contact_set(&self) -> ContactSet<f64> {
        let touching = self.touching();
        match &self.scene.hinge {
            Some(h) => {
                let mut contacts = h.pin_contacts();
                contacts.extend(touching);
                ContactSet::rotation(contacts, h.point)
            }
            None => ContactSet::translation(touching),
        }
    }

    pub fn classify(&self) -> Result<Classification<f64>, SimError> {
        Ok(classify(&self.contact_set())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ContactState;
    use approx::assert_relative_eq;

    fn table() -> Scene {
        preset("tabletop").unwrap()
    }

    #[test]
    fn sense_quantizes() {
        let r = sense(&Vec3::new(3.5, 0.0, 0.0), &Vec3::new(0.5, 0.0, 0.0), 1.0);
        assert_eq!(r.f_desc, 3);
        assert_relative_eq!(r.f_n, Vec3::x());
        let z = sense(&Vec3::zeros(), &Vec3::zeros(), 1.0);
        assert_eq!(z.f_n, Vec3::zeros());
        let r32 = sense(&nalgebra::Vector3::new(0.0f32, 2.2, 0.0), &nalgebra::Vector3::zeros(), 0.5);
        assert_eq!(r32.f_desc, 4);
    }

    #[test]
    fn spring_force_matches_depth() {
        let mut env = Env::new(table()).unwrap();
        assert_eq!(env.force(), Vec3::zeros());
        let r = env.step(&Vec3::new(0.0, 0.0, -0.001), &Quat::identity()).unwrap();
        // Four bottom corners and the bottom face center touch.
        let n_bottom = 5.0;
        let expected = n_bottom * (5000.0 * 0.001 + 50.0 * 0.001 / 0.1);
        assert_relative_eq!(r.f.z, expected, epsilon = 1e-9);
        let r = env.step(&Vec3::zeros(), &Quat::identity()).unwrap();
        assert_relative_eq!(r.f.z, n_bottom * 5.0, epsilon = 1e-9);
    }

    #[test]
    fn contact_force_examples() {
        let mut plane = Surface::plane(Vec3::zeros(), Vec3::z(), None);
        plane.stiffness = 1000.0;
        plane.damping = 0.0;
        let obj = HandObject::point(Pose::at(Vec3::new(0.0, 0.0, -0.001)));
        let (f, flags) = contact_force(&obj, &Vec3::zeros(), &[plane], 0.05).unwrap();
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_eq!(flags, vec![true]);

        let free = HandObject::point(Pose::at(Vec3::new(0.0, 0.0, 0.1)));
        let (f, flags) = contact_force(&free, &Vec3::zeros(), &[plane], 0.05).unwrap();
        assert_eq!((f, flags), (Vec3::zeros(), vec![false]));

        let left = Surface::plane(Vec3::new(-0.1, 0.0, 0.0), Vec3::x(), None);
        let right = Surface::plane(Vec3::new(0.1, 0.0, 0.0), -Vec3::x(), None);
        let wide = HandObject {
            pose: Pose::at(Vec3::zeros()),
            sample_points: vec![Vec3::new(-0.101, 0.0, 0.0), Vec3::new(0.101, 0.0, 0.0)],
            grasp_center: Vec3::zeros(),
        };
        let (f, flags) = contact_force(&wide, &Vec3::zeros(), &[left, right], 0.05).unwrap();
        assert_relative_eq!(f, Vec3::zeros(), epsilon = 1e-12);
        assert_eq!(flags, vec![true, true]);
    }

    #[test]
    fn large_steps_are_rejected() {
        let mut env = Env::new(table()).unwrap();
        let err = env.step(&Vec3::new(0.02, 0.0, 0.0), &Quat::identity());
        assert!(matches!(err, Err(SimError::StepTooLarge { .. })));
    }

    #[test]
    fn deep_penetration_blows_up() {
        let mut scene = table();
        scene.config.penetration_cap = 0.004;
        let mut env = Env::new(scene).unwrap();
        let down = Vec3::new(0.0, 0.0, -0.005);
        assert!(matches!(env.step(&down, &Quat::identity()), Err(SimError::Blowup { .. })));
    }

    #[test]
    fn presets_classify_as_intended() {
        for &(name, state) in presets::PRESET_STATES {
            let env = Env::new(preset(name).unwrap()).unwrap();
            assert_eq!(env.classify().unwrap().state, state, "{name}");
        }
        assert!(presets::PRESET_STATES.iter().any(|(_, s)| *s == ContactState::OR));
    }

    #[test]
    fn rigid_transform_preserves_state() {
        let iso = Isometry3::new(Vec3::new(0.3, -1.0, 0.2), Vec3::new(0.2, 0.4, -0.7));
        for &(name, state) in presets::PRESET_STATES {
            let env = Env::new(preset(name).unwrap().transformed(&iso)).unwrap();
            assert_eq!(env.classify().unwrap().state, state, "{name}");
        }
    }

    #[test]
    fn baseline_only_in_free_space() {
        let mut env = Env::new(table()).unwrap();
        env.step(&Vec3::new(0.0, 0.0, -0.001), &Quat::identity()).unwrap();
        env.capture_baseline();
        assert_eq!(env.baseline(), Vec3::zeros());
    }

    #[test]
    fn randomization_tilts_normals() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = table();
        let r = randomize_scene(&s, 0.05, &mut rng);
        let a = s.surfaces[0].plane_normal().unwrap();
        let b = r.surfaces[0].plane_normal().unwrap();
        assert!(a.angle(&b) > 0.0 && a.angle(&b) < 0.3);
        assert_relative_eq!(b.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tilted_planes_keep_the_foot_of_the_object() {
        use rand::SeedableRng;
        let s = preset("whiteboard").unwrap();
        let held = s.object.pose.position;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let r = randomize_scene(&s, 3f64.to_radians(), &mut rng);
            let (p, n) = (r.surfaces[0].plane_point().unwrap(), r.surfaces[0].plane_normal().unwrap());
            let foot = Vec3::new(0.0, held.y, held.z);
            assert!(n.dot(&(foot - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_keeps_the_scene() {
        use rand::SeedableRng;
        let s = preset("shelf").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(randomize_scene(&s, 0.0, &mut rng), s);
    }

    #[test]
    fn randomization_is_seeded() {
        use rand::SeedableRng;
        let s = preset("shelf").unwrap();
        let sigma = 5f64.to_radians();
        let a = randomize_scene(&s, sigma, &mut ChaCha8Rng::seed_from_u64(3));
        let b = randomize_scene(&s, sigma, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_ne!(a, s);
    }

    #[test]
    fn tilt_angles_are_half_normal() {
        use rand::SeedableRng;
        let s = Scene {
            surfaces: vec![Surface::plane(Vec3::zeros(), Vec3::z(), None)],
            ..table()
        };
        let sigma = 5f64.to_radians();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| {
                let r = randomize_scene(&s, sigma, &mut rng);
                r.surfaces[0].plane_normal().unwrap().angle(&Vec3::z())
            })
            .sum::<f64>()
            / draws as f64;
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn env_applies_configured_noise() {
        let mut s = preset("tabletop").unwrap();
        s.config.normal_noise = 3.0;
        s.config.seed = 9;
        let a = Env::new(s.clone()).unwrap();
        let b = Env::new(s.clone()).unwrap();
        assert_eq!(a.scene(), b.scene());
        let n = a.scene().surfaces[0].plane_normal().unwrap();
        assert!(n.angle(&Vec3::z()) > 0.0);
    }

    #[test]
    fn hinge_angles() {
        let h = Hinge {
            point: Vec3::zeros(),
            axis: Vec3::z(),
            pin_half_height: 0.3,
        };
        let a = h.angle_between(&Vec3::x(), &Vec3::new(0.0, 2.0, 1.0));
        assert_relative_eq!(a, std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(h.radius_of(&Vec3::new(3.0, 4.0, 9.0)), 5.0);
    }
}
