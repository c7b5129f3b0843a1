//! Contact-state classification from the feasible-motion cone.
//!
//! A contact `(p, n)` admits the infinitesimal motion with rotational part
//! `s` and translational part `t` when `n·t + (p×n)·s >= 0`. Restricting to
//! pure translations or pure rotations about a known center leaves a
//! polyhedral cone `{d : m_i·d >= 0}` in three dimensions whose lineality and
//! span dimensions give the maintain/detach/constrain counts.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::scalar::Real;

pub mod oracle;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPoint<T: Real> {
    pub position: Vector3<T>,
    pub normal: Vector3<T>,
}

impl<T: Real> ContactPoint<T> {
    /// Builds a contact, rejecting normals that are not unit length.
    pub fn new(position: Vector3<T>, normal: Vector3<T>) -> Result<Self, GeometryError> {
        let norm = normal.norm();
        if !norm.is_finite() || (norm - T::one()).abs() > T::lit(T::UNIT_TOL) {
            return Err(GeometryError::NonUnitNormal {
                index: 0,
                norm: norm.as_f64(),
            });
        }
        Ok(Self { position, normal })
    }

    /// Builds a contact after normalizing `normal`.
    pub fn normalized(position: Vector3<T>, normal: Vector3<T>) -> Result<Self, GeometryError> {
        let norm = normal.norm();
        if !(norm > T::lit(T::FEAS_TOL)) {
            return Err(GeometryError::NonUnitNormal {
                index: 0,
                norm: norm.as_f64(),
            });
        }
        Ok(Self {
            position,
            normal: normal / norm,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Translation,
    Rotation,
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionKind::Translation => "translation",
            MotionKind::Rotation => "rotation",
        })
    }
}

impl FromStr for MotionKind {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "translation" | "t" => Ok(MotionKind::Translation),
            "rotation" | "r" => Ok(MotionKind::Rotation),
            other => Err(GeometryError::Parse(format!("unknown motion kind `{other}`"))),
        }
    }
}

/// Zero-pitch screw motion: a translation along `axis` or a rotation about
/// `axis` through `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion<T: Real> {
    Translation { axis: Vector3<T> },
    Rotation { axis: Vector3<T>, center: Vector3<T> },
}

impl<T: Real> Motion<T> {
    /// Rotational and translational parts `(s, t)` of the twist.
    pub fn twist(&self) -> (Vector3<T>, Vector3<T>) {
        match *self {
            Motion::Translation { axis } => (Vector3::zeros(), axis),
            Motion::Rotation { axis, center } => (axis, center.cross(&axis)),
        }
    }
}

/// Left-hand side of the screw constraint `n·t + (p×n)·s`.
pub fn screw_lhs<T: Real>(contact: &ContactPoint<T>, motion: &Motion<T>) -> T {
    let (s, t) = motion.twist();
    contact.normal.dot(&t) + contact.position.cross(&contact.normal).dot(&s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactSet<T: Real> {
    pub contacts: Vec<ContactPoint<T>>,
    pub kind: MotionKind,
    pub center: Option<Vector3<T>>,
}

#[derive(Serialize, Deserialize)]
struct ContactRecord {
    p: [f64; 3],
    n: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct ContactSetRecord {
    contacts: Vec<ContactRecord>,
    #[serde(default = "default_kind")]
    kind: MotionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 3]>,
}

fn default_kind() -> MotionKind {
    MotionKind::Translation
}

impl<T: Real> ContactSet<T> {
    pub fn translation(contacts: Vec<ContactPoint<T>>) -> Self {
        Self {
            contacts,
            kind: MotionKind::Translation,
            center: None,
        }
    }

    pub fn rotation(contacts: Vec<ContactPoint<T>>, center: Vector3<T>) -> Self {
        Self {
            contacts,
            kind: MotionKind::Rotation,
            center: Some(center),
        }
    }

    /// Parses the JSON contact-set format. With `normalize` the normals are
    /// rescaled to unit length instead of being rejected.
    pub fn from_json(text: &str, normalize: bool) -> Result<Self, GeometryError> {
        let record: ContactSetRecord =
            serde_json::from_str(text).map_err(|e| GeometryError::Parse(e.to_string()))?;
        let v = |a: [f64; 3]| Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
        let mut contacts = Vec::with_capacity(record.contacts.len());
        for (index, c) in record.contacts.iter().enumerate() {
            let built = if normalize {
                ContactPoint::normalized(v(c.p), v(c.n))
            } else {
                ContactPoint::new(v(c.p), v(c.n))
            };
            contacts.push(built.map_err(|e| e.at_index(index))?);
        }
        Ok(Self {
            contacts,
            kind: record.kind,
            center: record.center.map(v),
        })
    }

    pub fn to_json(&self) -> String {
        let a = |x: &Vector3<T>| [x.x.as_f64(), x.y.as_f64(), x.z.as_f64()];
        let record = ContactSetRecord {
            contacts: self
                .contacts
                .iter()
                .map(|c| ContactRecord {
                    p: a(&c.position),
                    n: a(&c.normal),
                })
                .collect(),
            kind: self.kind,
            center: self.center.as_ref().map(a),
        };
        serde_json::to_string_pretty(&record).expect("contact set serializes")
    }
}

/// Normals of the rotation cone about `center`, plus the indices of contacts
/// whose lever arm is parallel to their normal (they constrain no rotation).
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveNormals<T: Real> {
    pub normals: Vec<Vector3<T>>,
    pub dropped: Vec<usize>,
}

/// Maps each contact to `m = (p - c) × n`, the normal of its half-space in
/// rotation-axis space.
pub fn rotation_effective_normals<T: Real>(
    contacts: &[ContactPoint<T>],
    center: &Vector3<T>,
) -> EffectiveNormals<T> {
    let mut normals = Vec::with_capacity(contacts.len());
    let mut dropped = Vec::new();
    for (i, c) in contacts.iter().enumerate() {
        let m = (c.position - center).cross(&c.normal);
        let len = m.norm();
        if len <= T::lit(T::FEAS_TOL) {
            dropped.push(i);
        } else {
            normals.push(m / len);
        }
    }
    EffectiveNormals { normals, dropped }
}

/// `(M, D, C)` counts of maintained, detaching and constrained directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DofProfile {
    pub maintain: usize,
    pub detach: usize,
    pub constrain: usize,
}

impl DofProfile {
    pub const fn new(maintain: usize, detach: usize, constrain: usize) -> Self {
        Self {
            maintain,
            detach,
            constrain,
        }
    }
}

impl fmt::Display for DofProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.maintain, self.detach, self.constrain)
    }
}

/// Half-space representation of the feasible cone `{d : m_i·d >= 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleCone<T: Real> {
    pub normals: Vec<Vector3<T>>,
    /// Whether each normal holds with equality on the whole cone.
    pub implicit: Vec<bool>,
    pub lineality_dim: usize,
    pub span_dim: usize,
    /// Number of input normals merged into an earlier, nearly identical one.
    pub merged: usize,
}

impl<T: Real> FeasibleCone<T> {
    pub fn profile(&self) -> DofProfile {
        DofProfile::new(
            self.lineality_dim,
            self.span_dim - self.lineality_dim,
            3 - self.span_dim,
        )
    }

    /// Non-strict membership test.
    pub fn contains(&self, d: &Vector3<T>) -> bool {
        let tol = T::lit(T::FEAS_TOL);
        self.normals.iter().all(|m| m.dot(d) >= -tol)
    }
}

/// Builds the feasible cone of a set of unit half-space normals.
pub fn feasible_cone<T: Real>(normals: &[Vector3<T>]) -> Result<FeasibleCone<T>, GeometryError> {
    let unit_tol = T::lit(T::UNIT_TOL);
    let cos_tol = T::lit(T::ANGLE_TOL.cos());
    let mut kept: Vec<Vector3<T>> = Vec::with_capacity(normals.len());
    let mut merged = 0;
    for (index, n) in normals.iter().enumerate() {
        let norm = n.norm();
        if !norm.is_finite() || (norm - T::one()).abs() > unit_tol {
            return Err(GeometryError::NonUnitNormal {
                index,
                norm: norm.as_f64(),
            });
        }
        if kept.iter().any(|k| k.dot(n) >= cos_tol) {
            merged += 1;
        } else {
            kept.push(*n);
        }
    }

    let implicit = implicit_equalities(&kept);
    let lineality_dim = 3 - rank(kept.iter());
    let span_dim = 3 - rank(kept.iter().zip(&implicit).filter(|(_, e)| **e).map(|(m, _)| m));
    Ok(FeasibleCone {
        normals: kept,
        implicit,
        lineality_dim,
        span_dim,
        merged,
    })
}

fn rank<'a, T: Real>(rows: impl Iterator<Item = &'a Vector3<T>>) -> usize {
    let rows: Vec<&Vector3<T>> = rows.collect();
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let tol = T::lit(T::ANGLE_TOL * 0.5);
    m.singular_values().iter().filter(|s| **s > tol).count()
}

/// Flags constraints with `max m_i·d <= 0` over the cone.
///
/// The cone is intersected with the box `[-1, 1]^3`, which keeps every
/// linear objective bounded, and each maximum is read off the vertices of
/// the resulting polytope. In three dimensions the vertex set is small
/// enough to enumerate directly from plane triples.
fn implicit_equalities<T: Real>(normals: &[Vector3<T>]) -> Vec<bool> {
    let tol = T::lit(T::FEAS_TOL);
    let one = T::one();
    // Planes a·d = b.
    let mut planes: Vec<(Vector3<T>, T)> = normals.iter().map(|m| (*m, T::zero())).collect();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = one;
        planes.push((e, one));
        planes.push((-e, one));
    }

    let mut best = vec![T::min_value().unwrap_or(-one); normals.len()];
    let det_tol = T::lit(T::FEAS_TOL * 1e-3);
    let n = planes.len();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                let m = Matrix3::from_rows(&[
                    planes[a].0.transpose(),
                    planes[b].0.transpose(),
                    planes[c].0.transpose(),
                ]);
                if m.determinant().abs() <= det_tol {
                    continue;
                }
                let Some(inv) = m.try_inverse() else { continue };
                let v = inv * Vector3::new(planes[a].1, planes[b].1, planes[c].1);
                let in_box = v.iter().all(|x| x.abs() <= one + tol);
                if !in_box || normals.iter().any(|m| m.dot(&v) < -tol) {
                    continue;
                }
                for (slot, m) in best.iter_mut().zip(normals) {
                    let val = m.dot(&v);
                    if val > *slot {
                        *slot = val;
                    }
                }
            }
        }
    }
    best.into_iter().map(|b| b <= tol).collect()
}

/// Contact states for translation and rotation, keyed by their profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContactState {
    NC,
    PC1,
    TR,
    PC2,
    OT1,
    PR,
    PCN,
    OT2,
    OP,
    FT,
    NR,
    RT1,
    SP,
    RT2,
    OS1,
    RV,
    RTN,
    OS2,
    OR,
    FR,
}

const STATE_TABLE: [(ContactState, ContactState, DofProfile); 10] = [
    (ContactState::NC, ContactState::NR, DofProfile::new(3, 0, 0)),
    (ContactState::PC1, ContactState::RT1, DofProfile::new(2, 1, 0)),
    (ContactState::TR, ContactState::SP, DofProfile::new(2, 0, 1)),
    (ContactState::PC2, ContactState::RT2, DofProfile::new(1, 2, 0)),
    (ContactState::OT1, ContactState::OS1, DofProfile::new(1, 1, 1)),
    (ContactState::PR, ContactState::RV, DofProfile::new(1, 0, 2)),
    (ContactState::PCN, ContactState::RTN, DofProfile::new(0, 3, 0)),
    (ContactState::OT2, ContactState::OS2, DofProfile::new(0, 2, 1)),
    (ContactState::OP, ContactState::OR, DofProfile::new(0, 1, 2)),
    (ContactState::FT, ContactState::FR, DofProfile::new(0, 0, 3)),
];

impl ContactState {
    pub const ALL: [ContactState; 20] = [
        ContactState::NC,
        ContactState::PC1,
        ContactState::TR,
        ContactState::PC2,
        ContactState::OT1,
        ContactState::PR,
        ContactState::PCN,
        ContactState::OT2,
        ContactState::OP,
        ContactState::FT,
        ContactState::NR,
        ContactState::RT1,
        ContactState::SP,
        ContactState::RT2,
        ContactState::OS1,
        ContactState::RV,
        ContactState::RTN,
        ContactState::OS2,
        ContactState::OR,
        ContactState::FR,
    ];

    pub fn from_profile(profile: DofProfile, kind: MotionKind) -> Option<Self> {
        STATE_TABLE
            .iter()
            .find(|(_, _, p)| *p == profile)
            .map(|(t, r, _)| match kind {
                MotionKind::Translation => *t,
                MotionKind::Rotation => *r,
            })
    }

    pub fn profile(self) -> DofProfile {
        STATE_TABLE
            .iter()
            .find(|(t, r, _)| *t == self || *r == self)
            .map(|(_, _, p)| *p)
            .expect("every state has a table row")
    }

    pub fn kind(self) -> MotionKind {
        if STATE_TABLE.iter().any(|(t, _, _)| *t == self) {
            MotionKind::Translation
        } else {
            MotionKind::Rotation
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ContactState::NC => "NC",
            ContactState::PC1 => "PC1",
            ContactState::TR => "TR",
            ContactState::PC2 => "PC2",
            ContactState::OT1 => "OT1",
            ContactState::PR => "PR",
            ContactState::PCN => "PCN",
            ContactState::OT2 => "OT2",
            ContactState::OP => "OP",
            ContactState::FT => "FT",
            ContactState::NR => "NR",
            ContactState::RT1 => "RT1",
            ContactState::SP => "SP",
            ContactState::RT2 => "RT2",
            ContactState::OS1 => "OS1",
            ContactState::RV => "RV",
            ContactState::RTN => "RTN",
            ContactState::OS2 => "OS2",
            ContactState::OR => "OR",
            ContactState::FR => "FR",
        }
    }

    /// Name used in interstate skill names, where the numbered variants
    /// collapse (`PC1`, `PC2`, `PCN` are all `PC`).
    pub fn family(self) -> &'static str {
        match self {
            ContactState::PC1 | ContactState::PC2 | ContactState::PCN => "PC",
            ContactState::OT1 | ContactState::OT2 => "OT",
            other => other.label(),
        }
    }
}

impl fmt::Display for ContactState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ContactState {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContactState::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| GeometryError::Parse(format!("unknown contact state `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification<T: Real> {
    pub state: ContactState,
    pub profile: DofProfile,
    pub cone: FeasibleCone<T>,
    /// Contacts that impose no constraint on rotations about the center.
    pub dropped: Vec<usize>,
}

/// Half-space normals of the motion cone for `set`.
pub fn cone_normals<T: Real>(set: &ContactSet<T>) -> Result<(Vec<Vector3<T>>, Vec<usize>), GeometryError> {
    for (index, c) in set.contacts.iter().enumerate() {
        let norm = c.normal.norm();
        if !norm.is_finite() || (norm - T::one()).abs() > T::lit(T::UNIT_TOL) {
            return Err(GeometryError::NonUnitNormal {
                index,
                norm: norm.as_f64(),
            });
        }
    }
    match set.kind {
        MotionKind::Translation => Ok((set.contacts.iter().map(|c| c.normal).collect(), Vec::new())),
        MotionKind::Rotation => {
            let center = set.center.ok_or(GeometryError::MissingCenter)?;
            let eff = rotation_effective_normals(&set.contacts, &center);
            Ok((eff.normals, eff.dropped))
        }
    }
}

pub fn classify<T: Real>(set: &ContactSet<T>) -> Result<Classification<T>, GeometryError> {
    let (normals, dropped) = cone_normals(set)?;
    let cone = feasible_cone(&normals)?;
    let profile = cone.profile();
    let state = ContactState::from_profile(profile, set.kind)
        .expect("profiles of 3-d cones always appear in the state table");
    Ok(Classification {
        state,
        profile,
        cone,
        dropped,
    })
}

/// Half-space normals that produce each row of the state table.
fn canonical_normals(profile: DofProfile) -> Vec<Vector3<f64>> {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    match (profile.maintain, profile.detach, profile.constrain) {
        (3, 0, 0) => vec![],
        (2, 1, 0) => vec![z],
        (2, 0, 1) => vec![z, -z],
        (1, 2, 0) => vec![z, x],
        (1, 1, 1) => vec![z, -z, x],
        (1, 0, 2) => vec![x, -x, y, -y],
        (0, 3, 0) => vec![x, y, z],
        (0, 2, 1) => vec![z, -z, x, y],
        (0, 1, 2) => vec![x, -x, y, -y, z],
        _ => vec![x, -x, y, -y, z, -z],
    }
}

/// A contact set in `state`. Rotational sets are built so that each contact
/// has effective normal `m` about the origin: lever arm `r ⊥ m` and contact
/// normal `m × r`.
pub fn canonical_contacts(state: ContactState) -> ContactSet<f64> {
    let normals = canonical_normals(state.profile());
    match state.kind() {
        MotionKind::Translation => ContactSet::translation(
            normals
                .into_iter()
                .enumerate()
                .map(|(i, n)| ContactPoint {
                    position: Vector3::new(0.1 * i as f64, 0.0, 0.0),
                    normal: n,
                })
                .collect(),
        ),
        MotionKind::Rotation => ContactSet::rotation(
            normals
                .into_iter()
                .map(|m| {
                    let helper = if m.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                    let r = (helper - m * m.dot(&helper)).normalize();
                    ContactPoint {
                        position: r,
                        normal: m.cross(&r),
                    }
                })
                .collect(),
            Vector3::zeros(),
        ),
    }
}

/// How a single direction interacts with the cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DState {
    Maintain,
    Detach,
    Constrain,
}

pub fn dstate_of_direction<T: Real>(cone: &FeasibleCone<T>, d: &Vector3<T>) -> DState {
    let tol = T::lit(T::FEAS_TOL);
    let mut all_zero = true;
    for m in &cone.normals {
        let v = m.dot(d);
        if v < -tol {
            return DState::Constrain;
        }
        if v > tol {
            all_zero = false;
        }
    }
    if all_zero {
        DState::Maintain
    } else {
        DState::Detach
    }
}
