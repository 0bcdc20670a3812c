//! Simplified planar latch environment: a door on a hinge whose latch
//! releases only after the handle has been turned past a per-task threshold
//! in the per-task direction. After release, pulling the end-effector along
//! the opening tangent swings the door.

use super::{clip_action, norm2, Env, DT};
use serde::{Deserialize, Serialize};

/// Distance of the handle from the hinge along the door.
pub const HANDLE_RADIUS: f64 = 0.4;
/// The end-effector can turn the handle / pull the door within this distance.
pub const GRIP_RADIUS: f64 = 0.1;
/// Additive constant inside the log reward term.
pub const REWARD_EPS: f64 = 1e-2;
pub const EE_START: [f64; 2] = [0.4, -0.3];
pub const MAX_DOOR_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
pub const MAX_HANDLE_ANGLE: f64 = std::f64::consts::PI;

pub const EPISODE_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandleType {
    None,
    Round,
    Lever,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDirection {
    Cw,
    Ccw,
}

impl TurnDirection {
    /// Sign applied to the raw (counter-clockwise positive) handle angle.
    pub fn sign(&self) -> f64 {
        match self {
            TurnDirection::Cw => -1.0,
            TurnDirection::Ccw => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatchTaskParams {
    pub handle_type: HandleType,
    pub turn_direction: TurnDirection,
    /// Sign-corrected handle angle required to release the latch.
    pub handle_threshold: f64,
}

impl LatchTaskParams {
    pub fn for_handle(handle_type: HandleType, turn_direction: TurnDirection) -> Self {
        let handle_threshold = match handle_type {
            HandleType::None => 0.0,
            HandleType::Round => std::f64::consts::FRAC_PI_2,
            HandleType::Lever => std::f64::consts::FRAC_PI_4,
        };
        Self { handle_type, turn_direction, handle_threshold }
    }

    fn released(&self, handle_angle: f64) -> bool {
        self.turn_direction.sign() * handle_angle >= self.handle_threshold
    }
}

/// Task order: no handle, then round/lever clockwise, then the same handles
/// counter-clockwise.
pub fn task_params_sequence() -> [LatchTaskParams; 5] {
    [
        LatchTaskParams::for_handle(HandleType::None, TurnDirection::Cw),
        LatchTaskParams::for_handle(HandleType::Round, TurnDirection::Cw),
        LatchTaskParams::for_handle(HandleType::Lever, TurnDirection::Cw),
        LatchTaskParams::for_handle(HandleType::Round, TurnDirection::Ccw),
        LatchTaskParams::for_handle(HandleType::Lever, TurnDirection::Ccw),
    ]
}

/// State layout: `(door_angle, door_rate, handle_angle, handle_rate, ee_x, ee_y)`.
#[derive(Debug, Clone)]
pub struct LatchEnv {
    pub params: LatchTaskParams,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl LatchEnv {
    pub fn new(params: LatchTaskParams) -> Self {
        Self { params, low: vec![-0.05, -0.05, -0.25], high: vec![0.05, 0.05, 0.25] }
    }

    pub fn task_sequence() -> Vec<LatchEnv> {
        task_params_sequence().into_iter().map(LatchEnv::new).collect()
    }

    pub fn handle_position(door_angle: f64) -> [f64; 2] {
        let (s, c) = door_angle.sin_cos();
        [HANDLE_RADIUS * c, HANDLE_RADIUS * s]
    }
}

impl Env for LatchEnv {
    fn name(&self) -> &'static str {
        "latch"
    }

    fn state_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn episode_len(&self) -> usize {
        EPISODE_LEN
    }

    fn action_low(&self) -> &[f64] {
        &self.low
    }

    fn action_high(&self) -> &[f64] {
        &self.high
    }

    fn reset(&self) -> Vec<f64> {
        vec![0.0, 0.0, 0.0, 0.0, EE_START[0], EE_START[1]]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let a = clip_action(action, &self.low, &self.high);
        let door = state[0];
        let handle = state[2];
        let ee = [state[4], state[5]];

        let ee_new = [ee[0] + a[0], ee[1] + a[1]];
        let handle_pos = Self::handle_position(door);
        let in_grip = norm2(&[ee_new[0] - handle_pos[0], ee_new[1] - handle_pos[1]]) <= GRIP_RADIUS;

        // Handle turns only under grip, and freezes once the latch releases.
        let mut handle_new = handle;
        if !self.params.released(handle) && in_grip {
            handle_new = (handle + a[2]).clamp(-MAX_HANDLE_ANGLE, MAX_HANDLE_ANGLE);
        }
        let handle_rate = (handle_new - handle) / DT;

        // Once released, pulling along the opening tangent swings the door.
        let mut door_new = door;
        if self.params.released(handle_new) && in_grip {
            let (s, c) = door.sin_cos();
            let tangent = [-s, c];
            let pull = (a[0] * tangent[0] + a[1] * tangent[1]).max(0.0);
            door_new = (door + pull / HANDLE_RADIUS).min(MAX_DOOR_ANGLE);
        }
        let door_rate = (door_new - door) / DT;

        let next = vec![door_new, door_rate, handle_new, handle_rate, ee_new[0], ee_new[1]];
        let r = self.reward(&next, &a);
        (next, r)
    }

    fn reward(&self, state: &[f64], _action: &[f64]) -> f64 {
        let handle_pos = Self::handle_position(state[0]);
        let offset = [state[4] - handle_pos[0], state[5] - handle_pos[1]];
        let dist = norm2(&offset);
        -dist - (dist + REWARD_EPS).ln() + 50.0 * state[0]
            + 20.0 * self.params.turn_direction.sign() * state[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cw_round() -> LatchEnv {
        LatchEnv::new(LatchTaskParams::for_handle(HandleType::Round, TurnDirection::Cw))
    }

    #[test]
    fn reward_at_handle_with_closed_door() {
        let env = cw_round();
        let s = vec![0.0, 0.0, 0.0, 0.0, HANDLE_RADIUS, 0.0];
        assert_relative_eq!(env.reward(&s, &[0.0; 3]), -(REWARD_EPS.ln()), epsilon = 1e-12);
        assert_relative_eq!(env.reward(&s, &[0.0; 3]), 4.6052, epsilon = 1e-4);
    }

    #[test]
    fn wrong_direction_torque_never_releases() {
        let env = cw_round();
        let mut s = vec![0.0, 0.0, 0.0, 0.0, HANDLE_RADIUS, -0.05];
        for _ in 0..EPISODE_LEN {
            // turn counter-clockwise on a clockwise latch, then try to pull
            s = env.step(&s, &[0.0, 0.01, 0.25]).0;
        }
        assert_eq!(s[0], 0.0, "door must stay shut");
    }

    #[test]
    fn handle_needs_grip() {
        let env = cw_round();
        let s0 = env.reset(); // ee is 0.3 away from the handle
        let (s1, _) = env.step(&s0, &[0.0, 0.0, -0.25]);
        assert_eq!(s1[2], 0.0);
    }

    #[test]
    fn no_handle_latch_opens_without_turning() {
        let env = LatchEnv::new(LatchTaskParams::for_handle(HandleType::None, TurnDirection::Cw));
        let mut s = vec![0.0, 0.0, 0.0, 0.0, HANDLE_RADIUS, 0.0];
        s = env.step(&s, &[0.0, 0.05, 0.0]).0;
        assert!(s[0] > 0.0, "unlatched door should swing on a tangential pull");
    }

    #[test]
    fn scripted_policy_opens_the_door() {
        // Oracle: a hand-scripted policy must reach door angle >= 1.0 rad.
        for params in task_params_sequence() {
            let env = LatchEnv::new(params);
            let mut s = env.reset();
            let dir = params.turn_direction.sign();
            for _ in 0..EPISODE_LEN {
                let handle_pos = LatchEnv::handle_position(s[0]);
                let to_handle = [handle_pos[0] - s[4], handle_pos[1] - s[5]];
                let dist = norm2(&to_handle);
                let a = if dist > GRIP_RADIUS * 0.5 {
                    // approach the handle
                    [to_handle[0].clamp(-0.05, 0.05), to_handle[1].clamp(-0.05, 0.05), 0.0]
                } else if !params.released(s[2]) {
                    [0.0, 0.0, 0.25 * dir]
                } else {
                    let (sn, cs) = s[0].sin_cos();
                    [-0.05 * sn, 0.05 * cs, 0.0]
                };
                s = env.step(&s, &a).0;
            }
            assert!(s[0] >= 1.0, "scripted policy reached only {} rad for {params:?}", s[0]);
        }
    }

    #[test]
    fn handle_freezes_after_release() {
        let env = LatchEnv::new(LatchTaskParams::for_handle(HandleType::Lever, TurnDirection::Ccw));
        let mut s = vec![0.0, 0.0, 0.0, 0.0, HANDLE_RADIUS, 0.0];
        for _ in 0..4 {
            s = env.step(&s, &[0.0, 0.0, 0.25]).0;
        }
        assert!(env.params.released(s[2]));
        let frozen = s[2];
        s = env.step(&s, &[0.0, 0.0, 0.25]).0;
        assert_eq!(s[2], frozen);
    }
}
