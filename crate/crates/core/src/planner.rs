//! Cross-entropy-method planning over open-loop action sequences, and the
//! MPC loop that replans every control step through a learned (or true)
//! dynamics model.

use crate::dynamics::Transition;
use crate::envs::Env;
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Lower bound on the sampling standard deviation, keeping later CEM
/// iterations from collapsing to a point.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// One-step dynamics used for planning rollouts.
pub trait DynModel {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>>;
}

impl<F> DynModel for F
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        self(state, action)
    }
}

/// Plans through the true environment transition; the oracle planner used in
/// tests.
pub struct EnvModel<'a>(pub &'a dyn Env);

impl DynModel for EnvModel<'_> {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.step(state, action).0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub horizon: usize,
    pub iterations: usize,
    pub population: usize,
    pub elite_frac: f64,
    /// Initial (and warm-start padding) sampling std per action dimension.
    pub init_std: Vec<f64>,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl CemConfig {
    /// Defaults for an environment: 5 iterations, 10% elites, initial std of
    /// half the action half-range.
    pub fn for_env(env: &dyn Env, horizon: usize, population: usize) -> Self {
        let low = env.action_low().to_vec();
        let high = env.action_high().to_vec();
        let init_std: Vec<f64> =
            low.iter().zip(&high).map(|(l, h)| 0.5 * (h - l) / 2.0).collect();
        Self {
            horizon,
            iterations: 5,
            population,
            elite_frac: 0.1,
            init_std,
            action_low: low,
            action_high: high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.iterations == 0 || self.population == 0 {
            return Err(Error::Config("cem horizon/iterations/population must be >= 1".into()));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return Err(Error::Config("cem elite_frac must be in (0, 1]".into()));
        }
        let d = self.action_low.len();
        if self.action_high.len() != d || self.init_std.len() != d || d == 0 {
            return Err(Error::Config("cem action bound/std lengths disagree".into()));
        }
        if self.action_low.iter().zip(&self.action_high).any(|(l, h)| l >= h) {
            return Err(Error::Config("cem action bounds must satisfy low < high".into()));
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_frac).ceil() as usize).clamp(1, self.population)
    }
}

/// Diagonal Gaussian over an action sequence: `mu[t][d]`, `sigma[t][d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

impl Plan {
    /// Fresh plan at the bound midpoint with the initial std.
    pub fn fresh(cfg: &CemConfig) -> Self {
        let mid: Vec<f64> = cfg
            .action_low
            .iter()
            .zip(&cfg.action_high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        Self {
            mu: vec![mid; cfg.horizon],
            sigma: vec![cfg.init_std.clone(); cfg.horizon],
        }
    }

    /// Warm start for the next control step: drop the executed first step,
    /// pad the tail with a fresh midpoint/init-std step.
    pub fn shifted(&self, cfg: &CemConfig) -> Self {
        let mut next = self.clone();
        next.mu.rotate_left(1);
        next.sigma.rotate_left(1);
        if let Some(last) = next.mu.last_mut() {
            *last = cfg
                .action_low
                .iter()
                .zip(&cfg.action_high)
                .map(|(l, h)| 0.5 * (l + h))
                .collect();
        }
        if let Some(last) = next.sigma.last_mut() {
            *last = cfg.init_std.clone();
        }
        next
    }
}

/// Return of one open-loop rollout through the model. Any non-finite
/// prediction poisons the rollout to `-inf`.
pub fn rollout_return<M: DynModel + ?Sized>(
    model: &M,
    reward: &dyn Fn(&[f64], &[f64]) -> f64,
    s0: &[f64],
    actions: &[Vec<f64>],
) -> f64 {
    let mut s = s0.to_vec();
    let mut total = 0.0;
    for a in actions {
        let next = match model.predict(&s, a) {
            Ok(n) => n,
            Err(_) => return f64::NEG_INFINITY,
        };
        if next.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let r = reward(&next, a);
        if !r.is_finite() {
            return f64::NEG_INFINITY;
        }
        total += r;
        s = next;
    }
    total
}

/// Run CEM from `init` (or a fresh plan) and return the refined distribution.
/// Candidates are clipped to the action bounds at sampling time; elites are
/// selected by return with a stable index tie-break.
pub fn cem_plan<M: DynModel + ?Sized>(
    model: &M,
    reward: &dyn Fn(&[f64], &[f64]) -> f64,
    s0: &[f64],
    cfg: &CemConfig,
    init: Option<Plan>,
    rng: &mut ChaCha8Rng,
) -> Result<Plan> {
    cfg.validate()?;
    let mut plan = init.unwrap_or_else(|| Plan::fresh(cfg));
    if plan.mu.len() != cfg.horizon || plan.sigma.len() != cfg.horizon {
        return Err(Error::Config("plan horizon does not match cem config".into()));
    }
    let dim = cfg.action_dim();
    let n_elite = cfg.elite_count();

    for _ in 0..cfg.iterations {
        // sample first, then evaluate, so the rng stream is independent of
        // model behavior
        let mut candidates: Vec<Vec<Vec<f64>>> = Vec::with_capacity(cfg.population);
        for _ in 0..cfg.population {
            let mut seq = Vec::with_capacity(cfg.horizon);
            for t in 0..cfg.horizon {
                let mut a = Vec::with_capacity(dim);
                for d in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = plan.mu[t][d] + plan.sigma[t][d] * z;
                    a.push(v.clamp(cfg.action_low[d], cfg.action_high[d]));
                }
                seq.push(a);
            }
            candidates.push(seq);
        }

        let returns: Vec<f64> =
            candidates.iter().map(|seq| rollout_return(model, reward, s0, seq)).collect();
        if returns.iter().all(|r| *r == f64::NEG_INFINITY) {
            return Err(Error::PlannerFailure(
                "every sampled action sequence produced an invalid rollout".into(),
            ));
        }

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&i, &j| returns[j].partial_cmp(&returns[i]).unwrap().then(i.cmp(&j)));
        let elites = &order[..n_elite];

        for t in 0..cfg.horizon {
            for d in 0..dim {
                let mean = elites.iter().map(|&i| candidates[i][t][d]).sum::<f64>()
                    / n_elite as f64;
                let var = elites
                    .iter()
                    .map(|&i| (candidates[i][t][d] - mean).powi(2))
                    .sum::<f64>()
                    / n_elite as f64;
                plan.mu[t][d] = mean;
                plan.sigma[t][d] = var.sqrt().max(SIGMA_FLOOR);
            }
        }
    }
    Ok(plan)
}

/// One MPC control step: refine the warm-started plan and return the action
/// to execute together with the plan to carry forward.
pub fn mpc_step<M: DynModel + ?Sized>(
    model: &M,
    reward: &dyn Fn(&[f64], &[f64]) -> f64,
    s0: &[f64],
    cfg: &CemConfig,
    warm: Option<&Plan>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Plan)> {
    let init = warm.map(|p| p.shifted(cfg));
    let plan = cem_plan(model, reward, s0, cfg, init, rng)?;
    let action = plan.mu[0].clone();
    Ok((action, plan))
}

/// Outcome of one episode driven by MPC through `model` in the real `env`.
pub struct EpisodeTrace {
    pub transitions: Vec<Transition>,
    pub total_reward: f64,
}

/// Run a `steps`-long episode in `env`, replanning through `model` every step.
pub fn mpc_episode<M: DynModel + ?Sized>(
    env: &dyn Env,
    model: &M,
    cfg: &CemConfig,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeTrace> {
    let mut s = env.reset();
    let mut warm: Option<Plan> = None;
    let mut transitions = Vec::with_capacity(steps);
    let mut total_reward = 0.0;
    let reward = |st: &[f64], a: &[f64]| env.reward(st, a);
    for _ in 0..steps {
        let (action, plan) = mpc_step(model, &reward, &s, cfg, warm.as_ref(), rng)?;
        let (next, r) = env.step(&s, &action);
        transitions.push(Transition { s: s.clone(), a: action, s_next: next.clone() });
        total_reward += r;
        s = next;
        warm = Some(plan);
    }
    Ok(EpisodeTrace { transitions, total_reward })
}

/// A uniformly random `steps`-long episode in `env` (the exploration phase).
pub fn random_episode(env: &dyn Env, steps: usize, rng: &mut ChaCha8Rng) -> EpisodeTrace {
    let mut s = env.reset();
    let mut transitions = Vec::with_capacity(steps);
    let mut total_reward = 0.0;
    for _ in 0..steps {
        let a: Vec<f64> = env
            .action_low()
            .iter()
            .zip(env.action_high())
            .map(|(l, h)| rng.gen_range(*l..*h))
            .collect();
        let (next, r) = env.step(&s, &a);
        transitions.push(Transition { s: s.clone(), a, s_next: next.clone() });
        total_reward += r;
        s = next;
    }
    EpisodeTrace { transitions, total_reward }
}
