//! Geometric description of the soft arm: sections, limits and configurations.
//!
//! Each section is a revolute joint that rotates the bending plane about the
//! local backbone tangent, followed by a constant-curvature segment that bends
//! within that plane.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angle::wrap_joint;
use crate::error::{Error, Result};
use crate::pose::{Pose, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    /// Backbone length in meters.
    pub arc_length: f64,
    /// Largest admissible bending angle in radians.
    pub max_bend: f64,
    /// Distance of the antagonistic tendons from the centerline, meters.
    pub tendon_radius: f64,
    /// Points emitted per segment when sampling the backbone.
    pub backbone_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub sections: Vec<SectionSpec>,
    /// Arm base in the world frame.
    pub base_pose: Pose,
    /// Rigid offset from the last segment tip to the gripper point.
    pub tool_offset: RigidTransform,
}

/// The three-section arm: 80/50/50 degree bend limits and 1 m of backbone.
pub fn default_embuddy_spec() -> ArmSpec {
    let section = |arc_length: f64, max_bend_deg: f64| SectionSpec {
        arc_length,
        max_bend: max_bend_deg.to_radians(),
        tendon_radius: 0.02,
        backbone_samples: 16,
    };
    ArmSpec {
        sections: vec![section(0.4, 80.0), section(0.3, 50.0), section(0.3, 50.0)],
        base_pose: Pose::identity(),
        tool_offset: RigidTransform::identity(),
    }
}

impl ArmSpec {
    pub fn section_count(&self) -> usize {
        self.sections.len()
    }

    pub fn total_length(&self) -> f64 {
        self.sections.iter().map(|s| s.arc_length).sum()
    }

    /// Same geometry with every bend limit replaced by `max_bend`.
    pub fn with_uniform_limit(&self, max_bend: f64) -> ArmSpec {
        let mut out = self.clone();
        for s in &mut out.sections {
            s.max_bend = max_bend;
        }
        out
    }

    /// Same arm re-mounted so that its base sits at `mount` composed with the current base.
    pub fn mounted_at(&self, mount: &Pose) -> ArmSpec {
        let mut out = self.clone();
        out.base_pose = mount.to_transform().compose(&self.base_pose.to_transform()).to_pose();
        out
    }

    pub fn straight(&self) -> Configuration {
        Configuration::straight(self.section_count())
    }

    /// Loads an arm specification file (TOML, angles in degrees).
    pub fn load(path: impl AsRef<Path>) -> Result<ArmSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|reason| Error::SpecFile {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<ArmSpec, String> {
        let file: ArmSpecFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let spec = file.into_spec();
        validate_spec(&spec).map_err(|violations| {
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        })?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&ArmSpecFile::from_spec(self)).expect("arm spec serializes")
    }
}

/// Joint angle and bend angle of one section.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SectionAngles {
    /// Plane rotation, radians in `(-pi, pi]`.
    pub phi: f64,
    /// Bend within the plane, radians in `[0, max_bend]`.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub sections: Vec<SectionAngles>,
}

impl Configuration {
    pub fn straight(n: usize) -> Self {
        Self {
            sections: vec![SectionAngles::default(); n],
        }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            sections: pairs
                .iter()
                .map(|&(phi, theta)| SectionAngles { phi, theta })
                .collect(),
        }
    }

    /// Interleaved `[phi_0, theta_0, phi_1, theta_1, ...]`.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(Error::Dimension {
                expected: values.len() + 1,
                actual: values.len(),
            });
        }
        Ok(Self {
            sections: values
                .chunks_exact(2)
                .map(|c| SectionAngles {
                    phi: c[0],
                    theta: c[1],
                })
                .collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.sections.iter().flat_map(|s| [s.phi, s.theta]).collect()
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.sections
            .iter()
            .all(|s| s.phi.is_finite() && s.theta.is_finite())
    }

    /// True when every bend lies in `[0, max_bend]` (phi is not checked).
    pub fn within_limits(&self, spec: &ArmSpec) -> bool {
        self.len() == spec.section_count()
            && self
                .sections
                .iter()
                .zip(&spec.sections)
                .all(|(q, s)| q.theta >= 0.0 && q.theta <= s.max_bend)
    }
}

pub(crate) fn check_dimensions(spec: &ArmSpec, q: &Configuration) -> Result<()> {
    if q.len() != spec.section_count() {
        return Err(Error::Dimension {
            expected: spec.section_count(),
            actual: q.len(),
        });
    }
    Ok(())
}

/// Clamps every bend into `[0, max_bend]` and wraps every joint angle into `(-pi, pi]`.
pub fn clamp_configuration(spec: &ArmSpec, q: &Configuration) -> Result<Configuration> {
    check_dimensions(spec, q)?;
    Ok(Configuration {
        sections: q
            .sections
            .iter()
            .zip(&spec.sections)
            .map(|(a, s)| SectionAngles {
                phi: wrap_joint(a.phi),
                theta: a.theta.clamp(0.0, s.max_bend),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecViolation {
    pub section: Option<usize>,
    pub message: String,
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.section {
            Some(i) => write!(f, "section {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Collects every invariant violation of the spec; `Ok` iff there are none.
pub fn validate_spec(spec: &ArmSpec) -> std::result::Result<(), Vec<SpecViolation>> {
    let mut out = Vec::new();
    if spec.sections.is_empty() {
        out.push(SpecViolation {
            section: None,
            message: "arm must have at least one section".into(),
        });
    }
    for (i, s) in spec.sections.iter().enumerate() {
        let mut push = |message: &str| {
            out.push(SpecViolation {
                section: Some(i),
                message: message.into(),
            })
        };
        if !(s.arc_length > 0.0) {
            push("arc_length must be positive");
        }
        if !(s.max_bend > 0.0) {
            push("max_bend must be positive");
        }
        if s.max_bend > PI {
            push("max_bend exceeds π");
        }
        if !(s.tendon_radius > 0.0) {
            push("tendon_radius must be positive");
        }
        if s.backbone_samples < 2 {
            push("backbone_samples must be at least 2");
        }
    }
    if !spec.base_pose.is_finite() {
        out.push(SpecViolation {
            section: None,
            message: "base pose must be finite".into(),
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArmSpecFile {
    #[serde(default)]
    base: PoseEntry,
    #[serde(default)]
    tool: PoseEntry,
    #[serde(rename = "section")]
    sections: Vec<SectionEntry>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct PoseEntry {
    #[serde(default)]
    position: [f64; 3],
    #[serde(default)]
    rpy_deg: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionEntry {
    arc_length: f64,
    max_bend_deg: f64,
    #[serde(default = "default_tendon_radius")]
    tendon_radius: f64,
    #[serde(default = "default_backbone_samples")]
    backbone_samples: usize,
}

fn default_tendon_radius() -> f64 {
    0.02
}

fn default_backbone_samples() -> usize {
    16
}

impl PoseEntry {
    fn to_pose(&self) -> Pose {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        Pose::from_xyz_rpy(self.position, [r, p, y])
    }

    fn from_pose(p: &Pose) -> Self {
        Self {
            position: p.position.into(),
            rpy_deg: p.rpy().map(f64::to_degrees),
        }
    }
}

impl ArmSpecFile {
    fn into_spec(self) -> ArmSpec {
        ArmSpec {
            sections: self
                .sections
                .iter()
                .map(|s| SectionSpec {
                    arc_length: s.arc_length,
                    max_bend: s.max_bend_deg.to_radians(),
                    tendon_radius: s.tendon_radius,
                    backbone_samples: s.backbone_samples,
                })
                .collect(),
            base_pose: self.base.to_pose(),
            tool_offset: self.tool.to_pose().to_transform(),
        }
    }

    fn from_spec(spec: &ArmSpec) -> Self {
        Self {
            base: PoseEntry::from_pose(&spec.base_pose),
            tool: PoseEntry::from_pose(&spec.tool_offset.to_pose()),
            sections: spec
                .sections
                .iter()
                .map(|s| SectionEntry {
                    arc_length: s.arc_length,
                    max_bend_deg: s.max_bend.to_degrees(),
                    tendon_radius: s.tendon_radius,
                    backbone_samples: s.backbone_samples,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_values() {
        let spec = default_embuddy_spec();
        assert_eq!(spec.section_count(), 3);
        assert!((spec.sections[0].max_bend - 1.39626).abs() < 1e-5);
        assert!((spec.sections[1].max_bend - 50f64.to_radians()).abs() < 1e-15);
        assert!((spec.total_length() - 1.0).abs() < 1e-12);
        assert!(spec.sections.iter().all(|s| s.tendon_radius == 0.02));
        assert!(validate_spec(&spec).is_ok());
    }

    #[test]
    fn clamp_examples() {
        let spec = default_embuddy_spec();
        let q = Configuration::from_pairs(&[(0.0, 1.6), (0.1, 0.2), (0.0, 0.0)]);
        let c = clamp_configuration(&spec, &q).unwrap();
        assert!((c.sections[0].theta - 1.39626).abs() < 1e-5);
        assert_eq!(c.sections[1], q.sections[1]);

        let q = Configuration::from_pairs(&[(1.5 * PI, 0.1), (0.0, 0.0), (0.0, 0.0)]);
        let c = clamp_configuration(&spec, &q).unwrap();
        assert!((c.sections[0].phi + 0.5 * PI).abs() < 1e-12);

        let q = Configuration::from_pairs(&[(0.0, -0.3), (0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(clamp_configuration(&spec, &q).unwrap().sections[0].theta, 0.0);
    }

    #[test]
    fn clamp_rejects_wrong_section_count() {
        let spec = default_embuddy_spec();
        let q = Configuration::straight(2);
        assert!(matches!(
            clamp_configuration(&spec, &q),
            Err(Error::Dimension { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn validation_reports_every_violation() {
        let mut spec = default_embuddy_spec();
        spec.sections[0].arc_length = 0.0;
        spec.sections[2].max_bend = 4.0;
        let v = validate_spec(&spec).unwrap_err();
        let msgs: Vec<String> = v.iter().map(|v| v.message.clone()).collect();
        assert_eq!(msgs, ["arc_length must be positive", "max_bend exceeds π"]);
        assert_eq!(v[1].section, Some(2));
    }

    #[test]
    fn spec_file_round_trip_in_degrees() {
        let text = r#"
            [base]
            position = [0.0, 0.0, 0.1]
            rpy_deg = [-90.0, 0.0, 0.0]

            [[section]]
            arc_length = 0.4
            max_bend_deg = 80.0

            [[section]]
            arc_length = 0.3
            max_bend_deg = 50.0
            tendon_radius = 0.015
        "#;
        let spec = ArmSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.section_count(), 2);
        assert!((spec.sections[0].max_bend - 80f64.to_radians()).abs() < 1e-15);
        assert_eq!(spec.sections[1].tendon_radius, 0.015);
        assert!((spec.base_pose.roll + PI / 2.0).abs() < 1e-12);

        let again = ArmSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(again.sections, spec.sections);
    }

    #[test]
    fn spec_file_with_bad_section_is_rejected() {
        let text = "[[section]]\narc_length = -1.0\nmax_bend_deg = 10.0\n";
        let err = ArmSpec::from_toml_str(text).unwrap_err();
        assert!(err.contains("arc_length must be positive"));
    }
}
