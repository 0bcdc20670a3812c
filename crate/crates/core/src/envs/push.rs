//! Pushing environment: a quasi-static block with a density split between its
//! left and right halves. Pushing off the line through the center of mass
//! rotates the block, so the pusher must offset its contact point to keep the
//! goal orientation. Density pairs vary per task.

use super::{clip_action, norm2, Env};
use serde::{Deserialize, Serialize};

/// Block width (x, split into left/right halves) and height (y).
pub const BLOCK_W: f64 = 0.2;
pub const BLOCK_H: f64 = 0.1;
/// Rotational compliance: radians per unit torque-like lever product.
pub const ROT_GAIN: f64 = 25.0;
/// Contact tolerance absorbing float rounding in pose round-trips.
const GEOM_TOL: f64 = 1e-9;

/// The push direction is +y, so the left/right density split (block-local x)
/// is lateral to the direction of travel and an off-center COM produces a
/// torque under a head-on push.
pub const BLOCK_START: [f64; 2] = [0.3, 0.3];
pub const EE_START: [f64; 2] = [0.3, 0.1];
pub const GOAL_CENTER: [f64; 2] = [0.3, 0.55];
pub const GOAL_ANGLE: f64 = 0.0;

pub const EPISODE_LEN: usize = 100;

/// Densities of the left and right block halves, kg/m^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushTaskParams {
    pub density_left: f64,
    pub density_right: f64,
}

impl PushTaskParams {
    /// Center-of-mass x offset in the block frame, from the two-half split.
    pub fn com_offset_x(&self) -> f64 {
        (self.density_right - self.density_left) / (self.density_right + self.density_left)
            * (BLOCK_W / 4.0)
    }
}

/// Task order for the five-task sequence.
pub const DENSITY_SEQUENCE: [(f64, f64); 5] =
    [(500.0, 500.0), (100.0, 500.0), (500.0, 100.0), (500.0, 250.0), (250.0, 500.0)];

#[derive(Debug, Clone)]
pub struct PushEnv {
    pub params: PushTaskParams,
    low: Vec<f64>,
    high: Vec<f64>,
}

const CORNERS: [[f64; 2]; 4] = [
    [-BLOCK_W / 2.0, -BLOCK_H / 2.0],
    [BLOCK_W / 2.0, -BLOCK_H / 2.0],
    [BLOCK_W / 2.0, BLOCK_H / 2.0],
    [-BLOCK_W / 2.0, BLOCK_H / 2.0],
];

fn rot(angle: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

impl PushEnv {
    pub fn new(params: PushTaskParams) -> Self {
        Self { params, low: vec![-0.05; 2], high: vec![0.05; 2] }
    }

    pub fn task_sequence() -> Vec<PushEnv> {
        DENSITY_SEQUENCE
            .iter()
            .map(|&(l, r)| PushEnv::new(PushTaskParams { density_left: l, density_right: r }))
            .collect()
    }

    /// Observation: end-effector position relative to the block center,
    /// followed by the four corner positions in the world frame.
    fn observation(ee_world: [f64; 2], center: [f64; 2], angle: f64) -> Vec<f64> {
        let mut s = Vec::with_capacity(10);
        s.push(ee_world[0] - center[0]);
        s.push(ee_world[1] - center[1]);
        for off in CORNERS {
            let w = rot(angle, off);
            s.push(center[0] + w[0]);
            s.push(center[1] + w[1]);
        }
        s
    }

    /// Recover `(ee_world, center, angle)` from an observation.
    fn pose(state: &[f64]) -> ([f64; 2], [f64; 2], f64) {
        let mut center = [0.0; 2];
        for i in 0..4 {
            center[0] += state[2 + 2 * i];
            center[1] += state[3 + 2 * i];
        }
        center[0] *= 0.25;
        center[1] *= 0.25;
        // corner 0 -> corner 1 is the rotated +x edge
        let ex = state[4] - state[2];
        let ey = state[5] - state[3];
        let angle = ey.atan2(ex);
        let ee = [state[0] + center[0], state[1] + center[1]];
        (ee, center, angle)
    }

    /// Face crossed by the pusher segment `old -> new` (block frame), as
    /// `(penetration depth, outward normal)`. `None` when `old` already sat
    /// inside the block.
    fn entry_face(old: [f64; 2], new: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let half = [BLOCK_W / 2.0, BLOCK_H / 2.0];
        let mut best: Option<(f64, usize, f64)> = None; // (entry time, axis, side)
        for axis in 0..2 {
            let h = half[axis];
            // tolerance: rounding can leave a pusher resting on a face a few
            // ulps inside it
            if old[axis].abs() < h - GEOM_TOL {
                continue;
            }
            let side = old[axis].signum();
            let run = side * (old[axis] - new[axis]);
            if run <= 0.0 {
                continue;
            }
            let t = (side * old[axis] - h) / run;
            if best.is_none_or(|(bt, _, _)| t > bt) {
                best = Some((t, axis, side));
            }
        }
        best.map(|(_, axis, side)| {
            let depth = half[axis] - side * new[axis];
            let mut n = [0.0; 2];
            n[axis] = side;
            (depth, n)
        })
    }
}

impl Env for PushEnv {
    fn name(&self) -> &'static str {
        "push"
    }

    fn state_dim(&self) -> usize {
        10
    }

    fn action_dim(&self) -> usize {
        2
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
        Self::observation(EE_START, BLOCK_START, 0.0)
    }

    fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let a = clip_action(action, &self.low, &self.high);
        let (ee, mut center, mut angle) = Self::pose(state);
        let ee_new = [ee[0] + a[0], ee[1] + a[1]];
        let mut moved = false;

        // Resolve penetration a few times; rotation can re-expose the pusher.
        for iter in 0..3 {
            let local = rot(-angle, [ee_new[0] - center[0], ee_new[1] - center[1]]);
            let dx = BLOCK_W / 2.0 - local[0].abs();
            let dy = BLOCK_H / 2.0 - local[1].abs();
            if dx <= GEOM_TOL || dy <= GEOM_TOL {
                break;
            }
            // Outward normal of the face the pusher came through. On the
            // first pass the pre-move position identifies the entry face
            // (least penetration alone picks the wrong face when the pusher
            // crosses the block midline in one step); later passes only see
            // shallow re-penetration from rotation, where least penetration
            // is reliable.
            let entry = if iter == 0 {
                let old = rot(-angle, [ee[0] - center[0], ee[1] - center[1]]);
                Self::entry_face(old, local)
            } else {
                None
            };
            let (depth, n_local) = entry.unwrap_or_else(|| {
                if dx <= dy {
                    (dx, [local[0].signum(), 0.0])
                } else {
                    (dy, [0.0, local[1].signum()])
                }
            });
            let n_world = rot(angle, n_local);
            let shift = [-n_world[0] * depth, -n_world[1] * depth];
            // translate away from the pusher
            let com_world = {
                let c = rot(angle, [self.params.com_offset_x(), 0.0]);
                [center[0] + c[0], center[1] + c[1]]
            };
            center[0] += shift[0];
            center[1] += shift[1];
            // torque about the center of mass from the contact lever arm
            let lever = [ee_new[0] - com_world[0], ee_new[1] - com_world[1]];
            let torque = lever[0] * shift[1] - lever[1] * shift[0];
            let dphi = ROT_GAIN * torque;
            if dphi != 0.0 {
                // rotating about the COM also moves the geometric center
                let com_new = [com_world[0] + shift[0], com_world[1] + shift[1]];
                let arm = [center[0] - com_new[0], center[1] - com_new[1]];
                let arm_rot = rot(dphi, arm);
                center = [com_new[0] + arm_rot[0], com_new[1] + arm_rot[1]];
                angle += dphi;
            }
            moved = true;
        }

        // keep the corner coordinates bit-exact when nothing touched the block
        let next = if moved {
            Self::observation(ee_new, center, angle)
        } else {
            let mut s = Vec::with_capacity(10);
            s.push(ee_new[0] - center[0]);
            s.push(ee_new[1] - center[1]);
            s.extend_from_slice(&state[2..]);
            s
        };
        let r = self.reward(&next, &a);
        (next, r)
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut r = 0.0;
        for (i, off) in CORNERS.iter().enumerate() {
            let g = rot(GOAL_ANGLE, *off);
            let gx = GOAL_CENTER[0] + g[0];
            let gy = GOAL_CENTER[1] + g[1];
            let dx = state[2 + 2 * i] - gx;
            let dy = state[3 + 2 * i] - gy;
            r += 1.0 - (10.0 * (dx * dx + dy * dy).sqrt()).tanh();
        }
        r - 0.25 * norm2(action)
    }
}
