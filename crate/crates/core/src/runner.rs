//! The task-sequence training loop and evaluation protocol.
//!
//! Per task: `p` random episodes seed the buffer, then `m` sessions of
//! (normalizer refit, `s` gradient steps, one MPC episode). After each task
//! the frozen learner is evaluated on every task seen so far, filling the
//! upper-triangular reward matrix `eval[i][j]` = mean return on task `i`
//! after finishing task `j`.
//!
//! Evaluation random streams are keyed by `(seed, task, episode)` only — not
//! by the checkpoint column — so two identical models always receive
//! identical evaluation rewards.

use crate::config::{Method, RunConfig};
use crate::dynamics::{Normalizer, ReplayBuffer};
use crate::envs::{make_task_sequence, Env, EnvKind};
use crate::error::{Error, Result};
use crate::learner::{Learner, LearnerInner, TaskModel};
use crate::planner::{mpc_step, random_episode, CemConfig, Plan};
use crate::rng::SeedStream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One training episode's bookkeeping entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Global episode index across the whole run.
    pub episode: usize,
    /// 0-based task id.
    pub task: usize,
    pub reward: f64,
}

/// Everything a finished (or in-progress) run has produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub env: EnvKind,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// `eval[i][j]`: mean evaluation return on task `i` after finishing task
    /// `j`; `None` where `i > j` or not yet evaluated.
    pub eval: Vec<Vec<Option<f64>>>,
    /// `||H(e_0) at end - H(e_0) after task 0||_2`, hypernetwork methods only.
    pub hyper_drift: Option<f64>,
    pub hygiene_violations: u64,
    pub train_env_steps: u64,
    pub eval_env_steps: u64,
}

impl RunRecord {
    fn new(cfg: &RunConfig, seed: u64) -> Self {
        let t = cfg.env.num_tasks();
        Self {
            method: cfg.method,
            env: cfg.env,
            seed,
            episodes: Vec::new(),
            eval: vec![vec![None; t]; t],
            hyper_drift: None,
            hygiene_violations: 0,
            train_env_steps: 0,
            eval_env_steps: 0,
        }
    }
}

/// Resumable state of a run; checkpoints serialize exactly this (plus the
/// config), which is why resume points are task boundaries only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub learner: Learner,
    pub record: RunRecord,
    /// Next task to train; equals the task count when the run is complete.
    pub next_task: usize,
    /// Hypernetwork output on the first embedding, frozen after task 0
    /// (drift-diagnostic reference point).
    pub h0_output: Option<Vec<f64>>,
}

pub fn init_run(cfg: &RunConfig, seed: u64) -> Result<RunState> {
    cfg.validate()?;
    let envs = make_task_sequence(cfg.env);
    let ss = SeedStream::new(seed);
    let learner = Learner::new(
        cfg,
        envs[0].state_dim(),
        envs[0].action_dim(),
        &mut ss.stream("init", &[]),
    )?;
    Ok(RunState {
        learner,
        record: RunRecord::new(cfg, seed),
        next_task: 0,
        h0_output: None,
    })
}

fn cem_config(cfg: &RunConfig, env: &dyn Env) -> CemConfig {
    CemConfig {
        iterations: cfg.cem_iterations,
        elite_frac: cfg.cem_elite_frac,
        ..CemConfig::for_env(env, cfg.cem_horizon, cfg.cem_population)
    }
}

/// An MPC-driven episode that keeps its prefix when the planner fails
/// mid-episode: the collected transitions are real data and stay usable.
/// Returns `(transitions, total_reward, planner_failed)`.
fn plan_episode(
    env: &dyn Env,
    model: &TaskModel,
    cem: &CemConfig,
    steps: usize,
    explore_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<crate::dynamics::Transition>, f64, bool)> {
    let mut s = env.reset();
    let mut warm: Option<Plan> = None;
    let mut transitions = Vec::with_capacity(steps);
    let mut total = 0.0;
    let reward = |st: &[f64], a: &[f64]| env.reward(st, a);
    for _ in 0..steps {
        match mpc_step(model, &reward, &s, cem, warm.as_ref(), rng) {
            Ok((mut action, plan)) => {
                // Training-time exploration: perturb the executed action so a
                // model that has settled on "do nothing" still generates
                // informative data. Evaluation passes explore_std = 0.
                if explore_std > 0.0 {
                    for ((a, l), h) in
                        action.iter_mut().zip(env.action_low()).zip(env.action_high())
                    {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        *a = (*a + explore_std * 0.5 * (h - l) * z).clamp(*l, *h);
                    }
                }
                let (next, r) = env.step(&s, &action);
                transitions.push(crate::dynamics::Transition {
                    s: s.clone(),
                    a: action,
                    s_next: next.clone(),
                });
                total += r;
                s = next;
                warm = Some(plan);
            }
            Err(Error::PlannerFailure(_)) => return Ok((transitions, total, true)),
            Err(e) => return Err(e),
        }
    }
    Ok((transitions, total, false))
}

/// Train the next task, then evaluate on every task seen so far.
pub fn advance_task(cfg: &RunConfig, envs: &[Box<dyn Env>], state: &mut RunState) -> Result<()> {
    let t = state.next_task;
    if t >= envs.len() {
        return Err(Error::State("run is already complete".into()));
    }
    let ss = SeedStream::new(state.record.seed);
    let env = envs[t].as_ref();
    let sched = &cfg.schedule;
    let cem = cem_config(cfg, env);

    state.learner.start_task(t, &mut ss.stream("embed", &[t as u64]))?;
    let mut buffer = ReplayBuffer::new(t, cfg.buffer_capacity);

    let episode_base = state.record.episodes.len();
    let push_episode = |record: &mut RunRecord, idx: usize, reward: f64| {
        record.episodes.push(EpisodeRecord { episode: episode_base + idx, task: t, reward });
    };

    // Exploration phase: p uniformly random episodes.
    for ep in 0..sched.p {
        let trace = random_episode(env, sched.k, &mut ss.stream("env", &[t as u64, ep as u64]));
        state.record.train_env_steps += trace.transitions.len() as u64;
        for tr in trace.transitions {
            buffer.add(tr);
        }
        push_episode(&mut state.record, ep, trace.total_reward);
    }

    // m sessions: refit normalizer, s gradient steps, one planned episode.
    for session in 0..sched.m {
        state.learner.set_normalizer(Normalizer::fit(&buffer)?)?;
        let mut train_rng = ss.stream("train", &[t as u64, session as u64]);
        for _ in 0..sched.s {
            match state.learner.train_step(&buffer, &mut train_rng) {
                Ok(_) => {}
                // a diverged update aborts the session; the episode still runs
                Err(Error::TrainingDiverged(_)) => break,
                Err(e) => return Err(e),
            }
        }
        let model = state.learner.model_for_task(t)?;
        let mut cem_rng = ss.stream("cem", &[t as u64, session as u64]);
        let (transitions, reward, _failed) =
            plan_episode(env, &model, &cem, sched.k, cfg.explore_std, &mut cem_rng)?;
        state.record.train_env_steps += transitions.len() as u64;
        for tr in transitions {
            buffer.add(tr);
        }
        push_episode(&mut state.record, sched.p + session, reward);
    }

    // Final refit so evaluation and consolidation see all of the task's data.
    state.learner.set_normalizer(Normalizer::fit(&buffer)?)?;
    state.learner.end_task(&buffer, &mut ss.stream("consolidate", &[t as u64]))?;

    if let LearnerInner::Hyper(h) = &state.learner.inner {
        let current = h.st.generate(&h.st.embeddings[0])?.flat;
        match &state.h0_output {
            None => state.h0_output = Some(current),
            Some(h0) => {
                let drift = current
                    .iter()
                    .zip(h0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                state.record.hyper_drift = Some(drift);
            }
        }
    }

    // Evaluate the frozen learner on every task seen so far.
    for i in 0..=t {
        let mean = evaluate_task(cfg, envs[i].as_ref(), &state.learner, i, &ss, &mut state.record)?;
        state.record.eval[i][t] = Some(mean);
    }

    state.record.hygiene_violations = state.learner.hygiene_violations;
    state.next_task = t + 1;
    Ok(())
}

/// Mean return over `eval_episodes` MPC episodes on task `i` with the frozen
/// model. Stream ids depend on `(task, episode)` only; see the module docs.
fn evaluate_task(
    cfg: &RunConfig,
    env: &dyn Env,
    learner: &Learner,
    i: usize,
    ss: &SeedStream,
    record: &mut RunRecord,
) -> Result<f64> {
    let cem = cem_config(cfg, env);
    let model = learner.model_for_task(i)?;
    let mut total = 0.0;
    for ep in 0..cfg.eval_episodes {
        let mut rng = ss.stream("eval", &[i as u64, ep as u64]);
        let (transitions, reward, _failed) =
            plan_episode(env, &model, &cem, cfg.schedule.k, 0.0, &mut rng)?;
        record.eval_env_steps += transitions.len() as u64;
        total += reward;
    }
    Ok(total / cfg.eval_episodes as f64)
}

/// Full run: all tasks in sequence from a fresh learner.
pub fn run_sequence(cfg: &RunConfig, seed: u64) -> Result<RunRecord> {
    let envs = make_task_sequence(cfg.env);
    let mut state = init_run(cfg, seed)?;
    while state.next_task < envs.len() {
        advance_task(cfg, &envs, &mut state)?;
    }
    Ok(state.record)
}

/// From-scratch single-task reference `r*_i`: a fresh learner trained on task
/// `i` alone, evaluated on task `i`. Used as the forward-transfer denominator.
pub fn run_single_task(cfg: &RunConfig, seed: u64, i: usize) -> Result<f64> {
    let envs = make_task_sequence(cfg.env);
    if i >= envs.len() {
        return Err(Error::Config(format!("task {i} out of range")));
    }
    let mut single_cfg = cfg.clone();
    single_cfg.method = Method::Single;
    let env = envs[i].as_ref();
    let ss = SeedStream::new(seed);
    let sched = &cfg.schedule;
    let cem = cem_config(cfg, env);

    let mut learner = Learner::new(
        &single_cfg,
        env.state_dim(),
        env.action_dim(),
        &mut ss.stream("init-single", &[i as u64]),
    )?;
    learner.start_task(0, &mut ss.stream("embed-single", &[i as u64]))?;
    let mut buffer = ReplayBuffer::new(0, cfg.buffer_capacity);
    for ep in 0..sched.p {
        let trace =
            random_episode(env, sched.k, &mut ss.stream("env-single", &[i as u64, ep as u64]));
        for tr in trace.transitions {
            buffer.add(tr);
        }
    }
    for session in 0..sched.m {
        learner.set_normalizer(Normalizer::fit(&buffer)?)?;
        let mut train_rng = ss.stream("train-single", &[i as u64, session as u64]);
        for _ in 0..sched.s {
            match learner.train_step(&buffer, &mut train_rng) {
                Ok(_) => {}
                Err(Error::TrainingDiverged(_)) => break,
                Err(e) => return Err(e),
            }
        }
        let model = learner.model_for_task(0)?;
        let mut cem_rng = ss.stream("cem-single", &[i as u64, session as u64]);
        let (transitions, _, _) =
            plan_episode(env, &model, &cem, sched.k, cfg.explore_std, &mut cem_rng)?;
        for tr in transitions {
            buffer.add(tr);
        }
    }
    learner.set_normalizer(Normalizer::fit(&buffer)?)?;
    let model = learner.model_for_task(0)?;
    let mut total = 0.0;
    for ep in 0..cfg.eval_episodes {
        let mut rng = ss.stream("eval", &[i as u64, ep as u64]);
        let (_, reward, _) = plan_episode(env, &model, &cem, sched.k, 0.0, &mut rng)?;
        total += reward;
    }
    Ok(total / cfg.eval_episodes as f64)
}
