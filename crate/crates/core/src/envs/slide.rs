//! Block-sliding environment: the end-effector hits block 1, which slides
//! under friction and transfers its velocity to block 2 on contact; block 2
//! slides until friction stops it. Friction of block 2 varies per task.
//!
//! Contact chains resolve to rest within a single control step, so the
//! position-only observation is a complete state.

use super::{clip_action, norm2, Env, DT, G};
use serde::{Deserialize, Serialize};

/// Half side length of both (square) blocks.
pub const BLOCK_HALF: f64 = 0.05;
/// Friction coefficient of block 1 (fixed across tasks). High enough that a
/// full-speed strike slides block 1 ~0.17 m, keeping it in reach for repeated
/// pushes within an episode.
pub const MU1: f64 = 0.30;
/// Initial end-effector position: a hair from block 1's left face, so most
/// exploratory actions with a positive x component make contact.
pub const EE_START: [f64; 2] = [0.19, 0.0];
/// Initial block centers; block 1's right face sits 0.01 from block 2.
pub const B1_START: [f64; 2] = [0.25, 0.0];
pub const B2_START: [f64; 2] = [0.36, 0.0];
/// Goal pose of block 2 (center). Far enough from the start that the tanh
/// shaping gives little credit for leaving the block untouched, but within
/// one to three strikes for every μ₂ in the task sequence.
pub const GOAL_CENTER: [f64; 2] = [0.50, 0.0];

pub const EPISODE_LEN: usize = 30;

const CORNERS: [[f64; 2]; 4] = [
    [-BLOCK_HALF, -BLOCK_HALF],
    [BLOCK_HALF, -BLOCK_HALF],
    [BLOCK_HALF, BLOCK_HALF],
    [-BLOCK_HALF, BLOCK_HALF],
];

/// Per-task parameters: friction coefficient of block 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideTaskParams {
    pub mu2: f64,
}

/// Task order for the five-task sequence.
pub const MU2_SEQUENCE: [f64; 5] = [0.30, 0.10, 0.50, 0.20, 0.40];

#[derive(Debug, Clone)]
pub struct SlideEnv {
    pub params: SlideTaskParams,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl SlideEnv {
    pub fn new(params: SlideTaskParams) -> Self {
        assert!(params.mu2 > 0.0, "mu2 must be positive");
        Self { params, low: vec![-0.1; 2], high: vec![0.1; 2] }
    }

    pub fn task_sequence() -> Vec<SlideEnv> {
        MU2_SEQUENCE.iter().map(|&mu2| SlideEnv::new(SlideTaskParams { mu2 })).collect()
    }

    fn observation(ee: [f64; 2], c1: [f64; 2], c2: [f64; 2]) -> Vec<f64> {
        let mut s = Vec::with_capacity(18);
        s.extend_from_slice(&ee);
        for off in CORNERS {
            s.push(c1[0] + off[0]);
            s.push(c1[1] + off[1]);
        }
        for off in CORNERS {
            s.push(c2[0] + off[0]);
            s.push(c2[1] + off[1]);
        }
        s
    }

    fn centers(state: &[f64]) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let ee = [state[0], state[1]];
        let mut c1 = [0.0; 2];
        let mut c2 = [0.0; 2];
        for i in 0..4 {
            c1[0] += state[2 + 2 * i];
            c1[1] += state[3 + 2 * i];
            c2[0] += state[10 + 2 * i];
            c2[1] += state[11 + 2 * i];
        }
        for v in c1.iter_mut().chain(c2.iter_mut()) {
            *v *= 0.25;
        }
        (ee, c1, c2)
    }
}

/// Distance a block slides from speed `v0` under friction `mu` until rest,
/// integrated with exact piecewise kinematics over fixed substeps (the sum
/// telescopes to the closed-form stopping distance up to rounding).
pub fn free_slide_distance(v0: f64, mu: f64) -> f64 {
    let decel = mu * G;
    let dt = 1e-3;
    let mut v = v0.abs();
    let mut x = 0.0;
    while v > 0.0 {
        if v <= decel * dt {
            x += v * v / (2.0 * decel);
            break;
        }
        x += v * dt - 0.5 * decel * dt * dt;
        v -= decel * dt;
    }
    x
}

/// Does the segment `p -> q` intersect the closed AABB centered at `c` with
/// half extent `h`? Slab test.
fn segment_hits_aabb(p: [f64; 2], q: [f64; 2], c: [f64; 2], h: f64) -> bool {
    let mut t_enter = 0.0f64;
    let mut t_exit = 1.0f64;
    for axis in 0..2 {
        let d = q[axis] - p[axis];
        let lo = c[axis] - h - p[axis];
        let hi = c[axis] + h - p[axis];
        if d.abs() < 1e-15 {
            if p[axis] < c[axis] - h || p[axis] > c[axis] + h {
                return false;
            }
        } else {
            let (t0, t1) = if d > 0.0 { (lo / d, hi / d) } else { (hi / d, lo / d) };
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return false;
            }
        }
    }
    true
}

/// Sweep an AABB (half `h`, center `c1`) along unit direction `u` against a
/// static AABB of the same size at `c2`. Returns the travel distance at first
/// touch, if any, within `max_dist`.
fn sweep_contact(c1: [f64; 2], u: [f64; 2], c2: [f64; 2], h: f64, max_dist: f64) -> Option<f64> {
    let span = 2.0 * h;
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for axis in 0..2 {
        let delta = c2[axis] - c1[axis];
        if u[axis].abs() < 1e-15 {
            if delta.abs() > span {
                return None;
            }
        } else {
            let t0 = (delta - span) / u[axis];
            let t1 = (delta + span) / u[axis];
            let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return None;
            }
        }
    }
    if t_exit < 0.0 {
        return None;
    }
    let t = t_enter.max(0.0);
    (t <= max_dist).then_some(t)
}

impl Env for SlideEnv {
    fn name(&self) -> &'static str {
        "slide"
    }

    fn state_dim(&self) -> usize {
        18
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
        Self::observation(EE_START, B1_START, B2_START)
    }

    fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let a = clip_action(action, &self.low, &self.high);
        let (ee, c1, c2) = Self::centers(state);
        let ee_new = [ee[0] + a[0], ee[1] + a[1]];

        // displacements applied to the stored corners, so untouched blocks
        // keep their exact coordinates
        let mut d1 = [0.0; 2];
        let mut d2 = [0.0; 2];
        let speed = norm2(&a) / DT;
        if speed > 1e-12 && segment_hits_aabb(ee, ee_new, c1, BLOCK_HALF) {
            // block 1 acquires the end-effector velocity
            let u = [a[0] / (speed * DT), a[1] / (speed * DT)];
            let approaching = u[0] * (c2[0] - c1[0]) + u[1] * (c2[1] - c1[1]) > 0.0;
            let d_free = free_slide_distance(speed, MU1);
            let contact = if approaching {
                sweep_contact(c1, u, c2, BLOCK_HALF, d_free)
            } else {
                None
            };
            match contact {
                Some(d_c) => {
                    d1 = [u[0] * d_c, u[1] * d_c];
                    // full velocity transfer (equal masses, restitution 1)
                    let v_at = (speed * speed - 2.0 * MU1 * G * d_c).max(0.0).sqrt();
                    let dist2 = free_slide_distance(v_at, self.params.mu2);
                    d2 = [u[0] * dist2, u[1] * dist2];
                }
                None => {
                    d1 = [u[0] * d_free, u[1] * d_free];
                }
            }
        }

        let mut next = Vec::with_capacity(18);
        next.extend_from_slice(&ee_new);
        for i in 0..4 {
            next.push(state[2 + 2 * i] + d1[0]);
            next.push(state[3 + 2 * i] + d1[1]);
        }
        for i in 0..4 {
            next.push(state[10 + 2 * i] + d2[0]);
            next.push(state[11 + 2 * i] + d2[1]);
        }
        let r = self.reward(&next, &a);
        (next, r)
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut r = 0.0;
        for (i, off) in CORNERS.iter().enumerate() {
            let gx = GOAL_CENTER[0] + off[0];
            let gy = GOAL_CENTER[1] + off[1];
            let dx = state[10 + 2 * i] - gx;
            let dy = state[11 + 2 * i] - gy;
            r += 1.0 - (10.0 * (dx * dx + dy * dy).sqrt()).tanh();
        }
        r - 0.1 * norm2(action)
    }
}
