//! Toolkit for a tendon-driven soft continuum arm: constant-curvature
//! kinematics, a kinematic pick-and-place simulator with synthetic cameras,
//! demonstration datasets, a chunked policy protocol and teleoperation.

pub mod angle;
pub mod arm;
pub mod capture;
pub mod dataset;
pub mod error;
pub mod generate;
pub mod image;
pub mod kinematics;
pub mod policy;
pub(crate) mod par;
pub mod pose;
pub mod sim;
pub mod teleop;

pub use angle::wrap_angle;
pub use arm::{default_embuddy_spec, ArmSpec, Configuration, SectionAngles, SectionSpec};
pub use error::{Error, Result};
pub use pose::{Pose, RigidTransform};
