//! Monte-Carlo reachability map of the tool point.

use std::collections::HashSet;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arm::{ArmSpec, Configuration, SectionAngles};
use crate::kinematics::tool_transform_unchecked;

pub const DEFAULT_SAMPLES: usize = 50_000;
pub const VOXEL_SIZE: f64 = 0.02;
const WORKSPACE_SEED: u64 = 0x5eed_a4e1;

/// Occupied voxels of tool positions over random configurations within limits.
#[derive(Debug, Clone)]
pub struct Workspace {
    voxel: f64,
    occupied: HashSet<[i32; 3]>,
}

impl Workspace {
    pub fn build(spec: &ArmSpec, samples: usize) -> Self {
        Self::build_seeded(spec, samples, WORKSPACE_SEED)
    }

    pub fn build_seeded(spec: &ArmSpec, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut occupied = HashSet::new();
        for _ in 0..samples {
            let q = random_configuration(spec, &mut rng);
            let p = tool_transform_unchecked(spec, &q).translation;
            occupied.insert(voxel_of(&p, VOXEL_SIZE));
        }
        Self {
            voxel: VOXEL_SIZE,
            occupied,
        }
    }

    /// True when the point's voxel or one of its 26 neighbours was reached.
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        let [i, j, k] = voxel_of(point, self.voxel);
        (-1..=1).any(|di| {
            (-1..=1).any(|dj| (-1..=1).any(|dk| self.occupied.contains(&[i + di, j + dj, k + dk])))
        })
    }

    pub fn occupied_voxels(&self) -> usize {
        self.occupied.len()
    }

    /// Farthest point of the map along the ray from `origin`, scanning out to
    /// `max_distance`. `None` if no sample on the ray is inside.
    pub fn farthest_along(&self, origin: &Vector3<f64>, direction: &Vector3<f64>, max_distance: f64) -> Option<Vector3<f64>> {
        let dir = direction.try_normalize(1e-12)?;
        let step = self.voxel / 4.0;
        let n = (max_distance / step).ceil() as usize;
        (0..=n)
            .map(|k| origin + dir * (k as f64 * step))
            .filter(|p| self.contains(p))
            .last()
    }
}

/// Uniform sample: joint angles in `(-pi, pi]`, bends in `[0, max_bend]`.
pub fn random_configuration(spec: &ArmSpec, rng: &mut impl Rng) -> Configuration {
    Configuration {
        sections: spec
            .sections
            .iter()
            .map(|s| SectionAngles {
                phi: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                theta: rng.gen_range(0.0..=s.max_bend),
            })
            .collect(),
    }
}

fn voxel_of(p: &Vector3<f64>, size: f64) -> [i32; 3] {
    [
        (p.x / size).floor() as i32,
        (p.y / size).floor() as i32,
        (p.z / size).floor() as i32,
    ]
}

/// Builds a default-size reachability map and tests one point.
pub fn workspace_contains(spec: &ArmSpec, point: &Vector3<f64>) -> bool {
    Workspace::build(spec, DEFAULT_SAMPLES).contains(point)
}
