use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::arm::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Orange,
    Milk,
    Yogurt,
    Baguette,
    Plate,
    Marshmallow,
    MouthZone,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 7] = [
        ObjectClass::Orange,
        ObjectClass::Milk,
        ObjectClass::Yogurt,
        ObjectClass::Baguette,
        ObjectClass::Plate,
        ObjectClass::Marshmallow,
        ObjectClass::MouthZone,
    ];

    pub fn graspable(self) -> bool {
        !matches!(self, ObjectClass::Plate | ObjectClass::MouthZone)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Orange => "orange",
            ObjectClass::Milk => "milk",
            ObjectClass::Yogurt => "yogurt",
            ObjectClass::Baguette => "baguette",
            ObjectClass::Plate => "plate",
            ObjectClass::Marshmallow => "marshmallow",
            ObjectClass::MouthZone => "mouth_zone",
        }
    }

    pub fn default_color(self) -> [u8; 3] {
        match self {
            ObjectClass::Orange => [255, 140, 0],
            ObjectClass::Milk => [235, 235, 245],
            ObjectClass::Yogurt => [120, 170, 230],
            ObjectClass::Baguette => [200, 150, 80],
            ObjectClass::Plate => [250, 250, 250],
            ObjectClass::Marshmallow => [255, 210, 225],
            ObjectClass::MouthZone => [200, 60, 60],
        }
    }

    pub fn default_radius(self) -> f64 {
        match self {
            ObjectClass::Orange => 0.035,
            ObjectClass::Milk | ObjectClass::Yogurt | ObjectClass::Baguette => 0.03,
            ObjectClass::Plate => 0.08,
            ObjectClass::Marshmallow => 0.015,
            ObjectClass::MouthZone => 0.05,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub class_label: ObjectClass,
    /// Resting point on its support (or the gripper point while held), meters.
    pub position: Vector3<f64>,
    /// Footprint and grasp radius, meters.
    pub radius: f64,
    pub graspable: bool,
    pub color: [u8; 3],
}

impl SceneObject {
    pub fn new(id: impl Into<String>, class_label: ObjectClass, position: Vector3<f64>, radius: f64) -> Self {
        Self {
            id: id.into(),
            class_label,
            position,
            radius,
            graspable: class_label.graspable(),
            color: class_label.default_color(),
        }
    }
}

/// Complete simulator state. Treated as an immutable value: [`super::step`]
/// returns a new one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub arm_config: Configuration,
    pub gripper_open: bool,
    pub attached_object: Option<String>,
    pub objects: Vec<SceneObject>,
    pub time_s: f64,
    pub rng_seed: u64,
    /// Largest gripper-to-object distance at which closing grasps, meters.
    pub grasp_radius: f64,
}

impl WorldState {
    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn first_of_class(&self, class: ObjectClass) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.class_label == class)
    }

    pub fn attached(&self) -> Option<&SceneObject> {
        self.attached_object.as_deref().and_then(|id| self.object(id))
    }
}
