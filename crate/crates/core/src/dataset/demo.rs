use serde::{Deserialize, Serialize};

use super::vectors::{apply_action, encode_action, ActionVector, StateVector};
use crate::image::RgbImage;

/// Side length of stored camera images.
pub const FRAME_IMAGE_SIZE: u32 = 256;
pub const DEFAULT_CAPTURE_HZ: f64 = 5.0;
/// Recommended demonstration length range, frames.
pub const RECOMMENDED_FRAMES: std::ops::RangeInclusive<usize> = 50..=200;

/// One timestep. `action` is the delta that led from the previous frame's
/// state to this one (zero motion on the first frame), so folding
/// [`apply_action`] over the actions replays the states.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step_index: usize,
    pub timestamp_s: f64,
    pub third_image: RgbImage,
    /// Already mirrored horizontally.
    pub wrist_image: RgbImage,
    pub state: StateVector,
    pub action: ActionVector,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub demo_id: String,
    pub task_id: u8,
    pub frames: Vec<Frame>,
    pub capture_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterTolerance {
    pub pos: f64,
    pub rot: f64,
}

impl Default for FilterTolerance {
    fn default() -> Self {
        Self { pos: 1e-4, rot: 1e-3 }
    }
}

impl Demonstration {
    pub fn new(demo_id: impl Into<String>, task_id: u8) -> Self {
        Self {
            demo_id: demo_id.into(),
            task_id,
            frames: Vec::new(),
            capture_hz: DEFAULT_CAPTURE_HZ,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn instruction(&self) -> Option<&str> {
        self.frames.first().map(|f| f.instruction.as_str())
    }

    /// Appends a frame whose action is derived from the previous stored state.
    pub fn push_state(&mut self, timestamp_s: f64, third: RgbImage, wrist: RgbImage, state: StateVector, instruction: &str) {
        let prev = self.frames.last().map_or(state, |f| f.state);
        self.frames.push(Frame {
            step_index: self.frames.len(),
            timestamp_s,
            third_image: third,
            wrist_image: wrist,
            state,
            action: encode_action(&prev, &state),
            instruction: instruction.to_string(),
        });
    }

    /// Invariant violations: frame count, image sizes, timestamp order,
    /// instruction consistency and vector validity.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.frames.is_empty() {
            out.push("demonstration has no frames".to_string());
        }
        for (i, f) in self.frames.iter().enumerate() {
            for (name, img) in [("third", &f.third_image), ("wrist", &f.wrist_image)] {
                if img.width() != FRAME_IMAGE_SIZE || img.height() != FRAME_IMAGE_SIZE {
                    out.push(format!("frame {i}: {name} image is {}x{}", img.width(), img.height()));
                }
            }
            if !f.state.is_valid() {
                out.push(format!("frame {i}: invalid state"));
            }
            if !f.action.is_valid() {
                out.push(format!("frame {i}: invalid action"));
            }
            if i > 0 {
                let prev = &self.frames[i - 1];
                if f.timestamp_s < prev.timestamp_s {
                    out.push(format!("frame {i}: timestamp goes backwards"));
                }
                if f.instruction != prev.instruction {
                    out.push(format!("frame {i}: instruction differs from frame 0"));
                }
            }
        }
        out
    }

    /// Largest per-field gap between stored states and the states rebuilt by
    /// folding the actions from frame 0.
    pub fn reconstruction_error(&self) -> f64 {
        let Some(first) = self.frames.first() else {
            return 0.0;
        };
        let mut s = first.state;
        let mut worst: f64 = 0.0;
        for f in &self.frames {
            s = apply_action(&s, &f.action);
            for (a, b) in s.0.iter().zip(f.state.0.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Removes near-stationary frames.
///
/// Each frame is compared with the last frame kept: it is dropped when the
/// translation is below `tol.pos`, every angle change is below `tol.rot` and
/// the gripper state is the same. Frames where the gripper changes are always
/// kept, as is the first frame. Actions of the kept frames are re-encoded
/// against their new predecessor and step indices renumbered, so the result
/// still replays exactly and filtering again changes nothing.
pub fn filter_noop_frames(demo: &Demonstration, tol: FilterTolerance) -> Demonstration {
    let mut out = Demonstration {
        frames: Vec::with_capacity(demo.frames.len()),
        ..demo.clone_header()
    };
    for f in &demo.frames {
        let Some(last) = out.frames.last() else {
            let mut first = f.clone();
            first.step_index = 0;
            first.action = encode_action(&f.state, &f.state);
            out.frames.push(first);
            continue;
        };
        let a = encode_action(&last.state, &f.state);
        let stationary = a.translation_norm() < tol.pos && a.max_rotation() < tol.rot;
        if stationary && f.state.gripper() == last.state.gripper() {
            continue;
        }
        let mut kept = f.clone();
        kept.step_index = out.frames.len();
        kept.action = a;
        out.frames.push(kept);
    }
    out
}

impl Demonstration {
    fn clone_header(&self) -> Demonstration {
        Demonstration {
            demo_id: self.demo_id.clone(),
            task_id: self.task_id,
            frames: Vec::new(),
            capture_hz: self.capture_hz,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::encode_state;
    use crate::pose::Pose;

    fn img() -> RgbImage {
        RgbImage::new(FRAME_IMAGE_SIZE, FRAME_IMAGE_SIZE)
    }

    fn demo_from(states: &[StateVector]) -> Demonstration {
        let mut d = Demonstration::new("d", 1);
        for (i, s) in states.iter().enumerate() {
            d.push_state(i as f64 * 0.2, img(), img(), *s, "Put the orange in the plate");
        }
        d
    }

    fn state(x: f64, closed: bool) -> StateVector {
        encode_state(&Pose::from_xyz_rpy([x, 0.5, 0.1], [0.0, 0.3, 3.1]), closed)
    }

    #[test]
    fn identical_frames_collapse_to_one() {
        let d = demo_from(&vec![state(0.1, false); 10]);
        assert_eq!(filter_noop_frames(&d, FilterTolerance::default()).len(), 1);
    }

    #[test]
    fn injected_stationary_frames_are_removed() {
        let injected = [4, 22, 41, 71, 91];
        let mut states: Vec<StateVector> = Vec::new();
        let mut x = 0.0;
        for i in 0..100 {
            if !injected.contains(&i) {
                x += 0.01;
            }
            states.push(state(x, false));
        }
        let d = demo_from(&states);
        assert_eq!(d.len(), 100);
        let f = filter_noop_frames(&d, FilterTolerance::default());
        assert_eq!(f.len(), 95);
        let mut survivors: Vec<f64> = f.frames.iter().map(|fr| fr.timestamp_s).collect();
        survivors.dedup();
        let dropped: Vec<usize> = (0..100)
            .filter(|i| !survivors.contains(&(*i as f64 * 0.2)))
            .collect();
        assert_eq!(dropped, injected);
        assert!(f.reconstruction_error() < 1e-12);
    }

    #[test]
    fn gripper_change_is_kept() {
        let d = demo_from(&[state(0.1, false), state(0.1, false), state(0.1, true), state(0.1, true)]);
        let f = filter_noop_frames(&d, FilterTolerance::default());
        assert_eq!(f.len(), 2);
        assert_eq!(f.frames[1].action.gripper(), 1.0);
        assert_eq!(f.frames[1].timestamp_s, 0.4);
    }

    #[test]
    fn filter_is_idempotent() {
        let states: Vec<StateVector> = (0..60)
            .map(|i| state(((i / 3) as f64) * 3e-5 * ((i % 4) as f64), i > 30))
            .collect();
        let once = filter_noop_frames(&demo_from(&states), FilterTolerance::default());
        assert_eq!(filter_noop_frames(&once, FilterTolerance::default()), once);
    }

    #[test]
    fn push_state_actions_replay() {
        let d = demo_from(&[state(0.1, false), state(0.2, false), state(0.25, true)]);
        assert_eq!(d.frames[0].action, ActionVector::zero(0.0));
        assert!(d.reconstruction_error() < 1e-12);
        assert!(d.problems().is_empty());
    }
}
