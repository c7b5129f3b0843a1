//! Built-in scenes.

use super::{HandObject, Hinge, Pose, Scene, SimConfig, Surface};
use crate::cone::ContactState;
use crate::error::SimError;
use crate::{Quat, Vec3};

pub const PRESET_NAMES: [&str; 9] = [
    "tabletop",
    "tabletop-plate",
    "shelf",
    "whiteboard",
    "walls-gap",
    "drawer",
    "drawer-closed",
    "door",
    "door-ajar",
];

/// The contact state each preset starts in.
pub const PRESET_STATES: &[(&str, ContactState)] = &[
    ("tabletop", ContactState::PC1),
    ("tabletop-plate", ContactState::PC1),
    ("shelf", ContactState::PC1),
    ("whiteboard", ContactState::PC1),
    ("walls-gap", ContactState::TR),
    ("drawer", ContactState::PR),
    ("drawer-closed", ContactState::OP),
    ("door", ContactState::OR),
    ("door-ajar", ContactState::RV),
];

/// Edge length of the default cube.
pub const CUBE: f64 = 0.06;
/// Handle radius of the door.
pub const DOOR_RADIUS: f64 = 0.5;
/// Opening of the `drawer` preset.
pub const DRAWER_OPEN: f64 = 0.15;

pub fn preset(name: &str) -> Result<Scene, SimError> {
    let scene = match name {
        "tabletop" => tabletop(name, false, false),
        "tabletop-plate" => tabletop(name, true, false),
        "shelf" => tabletop(name, false, true),
        "whiteboard" => whiteboard(),
        "walls-gap" => walls_gap(),
        "drawer" => drawer(name, DRAWER_OPEN),
        "drawer-closed" => drawer(name, 0.0),
        "door" => door(name, 0.0),
        "door-ajar" => door(name, 30f64.to_radians()),
        _ => return Err(SimError::UnknownPreset(name.to_string())),
    };
    Ok(scene)
}

fn cube_on_table() -> HandObject {
    let h = CUBE / 2.0;
    HandObject::cuboid(Pose::at(Vec3::new(0.0, 0.0, h)), Vec3::new(h, h, h))
}

fn table() -> Surface {
    Surface::patch(Vec3::new(0.2, 0.0, 0.0), Vec3::z(), Vec3::x(), 0.6, 0.6)
}

fn tabletop(name: &str, plate: bool, shelf: bool) -> Scene {
    let mut surfaces = vec![table()];
    if plate {
        surfaces.push(Surface::patch(Vec3::new(0.3, 0.0, 0.01), Vec3::z(), Vec3::x(), 0.1, 0.1));
    }
    if shelf {
        // A 2 cm board; each face owns half its thickness.
        let c = Vec3::new(0.5, 0.0, 0.25);
        surfaces.push(Surface::slab_face(c, Vec3::z(), Vec3::x(), 0.15, 0.3, 0.01));
        surfaces.push(Surface::slab_face(
            c - Vec3::new(0.0, 0.0, 0.02),
            -Vec3::z(),
            Vec3::x(),
            0.15,
            0.3,
            0.01,
        ));
    }
    Scene {
        name: name.to_string(),
        surfaces,
        object: cube_on_table(),
        hinge: None,
        vertical: Vec3::z(),
        config: SimConfig::default(),
    }
}

fn whiteboard() -> Scene {
    let board = Surface::patch(Vec3::new(0.0, 0.4, 0.3), Vec3::x(), Vec3::y(), 0.6, 0.5);
    let half = Vec3::new(0.02, 0.05, 0.03);
    // Pressed 0.4 mm into the board, about 10 N over five points.
    let pose = Pose::at(Vec3::new(half.x - 0.0004, 0.1, 0.3));
    Scene {
        name: "whiteboard".into(),
        surfaces: vec![board],
        object: HandObject::cuboid(pose, half),
        hinge: None,
        vertical: Vec3::z(),
        config: SimConfig::default(),
    }
}

fn walls_gap() -> Scene {
    let floor = Surface::patch(Vec3::zeros(), Vec3::z(), Vec3::x(), 0.3, 0.3);
    let ceiling = Surface::patch(Vec3::new(0.0, 0.0, CUBE), -Vec3::z(), Vec3::x(), 0.3, 0.3);
    Scene {
        name: "walls-gap".into(),
        surfaces: vec![floor, ceiling],
        object: cube_on_table(),
        hinge: None,
        vertical: Vec3::z(),
        config: SimConfig::default(),
    }
}

/// Drawer 0.4 m deep, 0.3 m wide and 0.1 m high, held at the center of its
/// front face. The cabinet is closed at `x = 0` and its back stop sits at
/// `x = -0.4`.
fn drawer(name: &str, open: f64) -> Scene {
    let (w, h) = (0.15, 0.05);
    let c = Vec3::new(-0.225, 0.0, 0.0);
    let half_len = 0.225;
    let surfaces = vec![
        Surface::patch(c + Vec3::new(0.0, w, 0.0), -Vec3::y(), Vec3::x(), half_len, h),
        Surface::patch(c - Vec3::new(0.0, w, 0.0), Vec3::y(), Vec3::x(), half_len, h),
        Surface::patch(c + Vec3::new(0.0, 0.0, h), -Vec3::z(), Vec3::x(), half_len, w),
        Surface::patch(c - Vec3::new(0.0, 0.0, h), Vec3::z(), Vec3::x(), half_len, w),
        Surface::patch(Vec3::new(-0.4, 0.0, 0.0), Vec3::x(), Vec3::y(), w, h),
    ];
    let pose = Pose::at(Vec3::new(open, 0.0, 0.0));
    let object = HandObject::cuboid_offset(pose, Vec3::new(0.2, w, h), Vec3::new(-0.2, 0.0, 0.0));
    Scene {
        name: name.to_string(),
        surfaces,
        object,
        hinge: None,
        vertical: Vec3::z(),
        config: SimConfig::default(),
    }
}

/// Door hinged on the z axis through the origin, handle at radius 0.5 m.
/// The hand only feels the handle: it is held on its circle by two
/// cylindrical rails, on its height by two planes, and the closed door
/// rests against a stop.
fn door(name: &str, angle: f64) -> Scene {
    let r = DOOR_RADIUS;
    let hinge = Hinge {
        point: Vec3::zeros(),
        axis: Vec3::z(),
        pin_half_height: 0.3,
    };
    let surfaces = vec![
        Surface::cylinder(Vec3::zeros(), Vec3::z(), r, true),
        Surface::cylinder(Vec3::zeros(), Vec3::z(), r, false),
        Surface::patch(Vec3::zeros(), Vec3::z(), Vec3::x(), 0.7, 0.7),
        Surface::patch(Vec3::zeros(), -Vec3::z(), Vec3::x(), 0.7, 0.7),
        Surface::patch(Vec3::new(r, 0.0, 0.0), Vec3::y(), Vec3::x(), 0.2, 0.1),
    ];
    let rot = Quat::from_axis_angle(&Vec3::z_axis(), angle);
    let pose = Pose::new(rot * Vec3::new(r, 0.0, 0.0), rot);
    Scene {
        name: name.to_string(),
        surfaces,
        object: HandObject::point(pose),
        hinge: Some(hinge),
        vertical: Vec3::z(),
        config: SimConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds() {
        for n in PRESET_NAMES {
            assert_eq!(preset(n).unwrap().name, n);
        }
        assert_eq!(PRESET_STATES.len(), PRESET_NAMES.len());
        assert!(matches!(preset("attic"), Err(SimError::UnknownPreset(_))));
    }

    #[test]
    fn scenes_round_trip_through_json() {
        let s = preset("door").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
