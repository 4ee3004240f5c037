use super::expert::{rigid_style_policy, scripted_expert_policy};
use super::{ActionChunk, Observation, Policy};
use crate::dataset::{encode_action, ActionVector, Demonstration, StateVector};
use crate::error::{Error, Result};
use crate::sim::TaskSpec;

pub const POLICY_NAMES: [&str; 5] = ["zero", "echo", "replay", "scripted_expert", "rigid_style"];

/// Holds still, keeping the gripper as observed.
#[derive(Debug, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn reset(&mut self, _instruction: &str) -> Result<()> {
        Ok(())
    }

    fn predict(&mut self, obs: &Observation, chunk_size: usize) -> Result<ActionChunk> {
        Ok(ActionChunk {
            actions: vec![ActionVector::zero(obs.state.gripper()); chunk_size],
        })
    }
}

/// Repeats the motion between the last two observed states, spread evenly
/// over the chunk. The first request after a reset gets zero motion.
#[derive(Debug, Default)]
pub struct EchoPolicy {
    last: Option<StateVector>,
}

impl Policy for EchoPolicy {
    fn name(&self) -> &str {
        "echo"
    }

    fn reset(&mut self, _instruction: &str) -> Result<()> {
        self.last = None;
        Ok(())
    }

    fn predict(&mut self, obs: &Observation, chunk_size: usize) -> Result<ActionChunk> {
        let prev = self.last.replace(obs.state).unwrap_or(obs.state);
        let mut a = encode_action(&prev, &obs.state);
        for v in &mut a.0[..6] {
            *v /= chunk_size.max(1) as f64;
        }
        Ok(ActionChunk {
            actions: vec![a; chunk_size],
        })
    }
}

/// Plays back the actions of a recorded demonstration, then holds still.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    actions: Vec<ActionVector>,
    cursor: usize,
}

impl ReplayPolicy {
    /// The first frame's action is the zero motion into the initial state and is skipped.
    pub fn new(demo: &Demonstration) -> Self {
        Self {
            actions: demo.frames.iter().skip(1).map(|f| f.action).collect(),
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.actions.len() - self.cursor
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        "replay"
    }

    fn reset(&mut self, _instruction: &str) -> Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn predict(&mut self, obs: &Observation, chunk_size: usize) -> Result<ActionChunk> {
        let mut hold = self
            .actions
            .get(self.cursor.wrapping_sub(1))
            .map_or(obs.state.gripper(), |a| a.gripper());
        let mut actions = Vec::with_capacity(chunk_size);
        for _ in 0..chunk_size {
            match self.actions.get(self.cursor) {
                Some(a) => {
                    actions.push(*a);
                    hold = a.gripper();
                    self.cursor += 1;
                }
                None => actions.push(ActionVector::zero(hold)),
            }
        }
        Ok(ActionChunk { actions })
    }
}

/// Builds a built-in policy. `task` is needed by the scripted policies and
/// `replay` by the replay policy.
pub fn policy_by_name(name: &str, task: Option<&TaskSpec>, replay: Option<&Demonstration>) -> Result<Box<dyn Policy>> {
    let need_task = || task.cloned().ok_or_else(|| Error::Policy(format!("policy '{name}' needs a task")));
    Ok(match name {
        "zero" => Box::new(ZeroPolicy),
        "echo" => Box::new(EchoPolicy::default()),
        "replay" => Box::new(ReplayPolicy::new(
            replay.ok_or_else(|| Error::Policy("policy 'replay' needs a demonstration".into()))?,
        )),
        "scripted_expert" => Box::new(scripted_expert_policy(need_task()?)),
        "rigid_style" => Box::new(rigid_style_policy(need_task()?)),
        other => {
            return Err(Error::Policy(format!(
                "unknown policy '{other}' (available: {})",
                POLICY_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::apply_action;
    use crate::policy::testing::{observation, task1};
    use crate::sim::step;

    #[test]
    fn zero_keeps_gripper() {
        let (task, arm, mut world) = task1();
        world.gripper_open = false;
        let chunk = ZeroPolicy.predict(&observation(&world, &arm, &task.instruction), 3).unwrap();
        assert_eq!(chunk.actions, vec![ActionVector::zero(1.0); 3]);
    }

    #[test]
    fn echo_repeats_observed_motion() {
        let (task, arm, world) = task1();
        let mut echo = EchoPolicy::default();
        let first = echo.predict(&observation(&world, &arm, &task.instruction), 4).unwrap();
        assert_eq!(first.actions[0], ActionVector::zero(0.0));
        let moved = step(&world, &arm, &ActionVector([0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.2).unwrap();
        let second = echo.predict(&observation(&moved, &arm, &task.instruction), 4).unwrap();
        assert!((second.actions[0].0[0] - 0.0025).abs() < 1e-9);
    }

    #[test]
    fn replay_plays_then_holds() {
        let mut demo = Demonstration::new("d", 1);
        let img = crate::image::RgbImage::new(256, 256);
        let mut s = StateVector([0.1, 0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for k in 0..5 {
            demo.push_state(k as f64 * 0.2, img.clone(), img.clone(), s, "x");
            s.0[0] += 0.01;
            s.0[7] = 1.0;
        }
        let mut replay = ReplayPolicy::new(&demo);
        assert_eq!(replay.remaining(), 4);
        let (task, arm, world) = task1();
        let obs = observation(&world, &arm, &task.instruction);
        let chunk = replay.predict(&obs, 6).unwrap();
        let mut t = demo.frames[0].state;
        for a in &chunk.actions[..4] {
            t = apply_action(&t, a);
        }
        assert_eq!(t, demo.frames[4].state);
        assert_eq!(chunk.actions[5], ActionVector::zero(1.0));
        replay.reset("x").unwrap();
        assert_eq!(replay.remaining(), 4);
    }

    #[test]
    fn lookup_by_name() {
        let (task, _, _) = task1();
        for name in ["zero", "echo", "scripted_expert", "rigid_style"] {
            assert_eq!(policy_by_name(name, Some(&task), None).unwrap().name(), name);
        }
        assert!(policy_by_name("replay", None, None).is_err());
        assert!(policy_by_name("scripted_expert", None, None).is_err());
        let err = policy_by_name("gpt", None, None).err().unwrap();
        assert!(err.to_string().contains("available"));
    }
}
