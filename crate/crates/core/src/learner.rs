//! Unified learner: one task-boundary/update-step interface over the
//! hypernetwork methods and the multi-head baselines, so the training loop
//! is method-agnostic.
//!
//! Data hygiene is instrumented here: every batch item is tagged with its
//! task of origin and checked against the method's allowed set. Methods
//! without replay must never read prior-task transitions; violations are
//! counted and reported, never silently dropped.

use crate::baselines::{
    hypernet_multitask_loss_grads, mh_loss_grad, mixed_batch, Coreset, EwcState, MultiHeadNet,
    SiState,
};
use crate::config::{Method, RunConfig};
use crate::dynamics::{predict_next, target_spec, Normalizer, ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::hypernet::HypernetState;
use crate::nn::{AdamState, MlpParams, MlpSpec};
use crate::planner::DynModel;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperLearner {
    pub st: HypernetState,
    pub adam_theta: AdamState,
    pub adam_e: AdamState,
    /// Full task-tagged history; populated only by the multitask variant.
    pub history: Vec<(usize, Transition)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhLearner {
    pub net: MultiHeadNet,
    pub ewc: Option<EwcState>,
    pub si: Option<SiState>,
    pub coreset: Coreset,
    /// Full task-tagged history; populated only by the multitask baseline.
    pub history: Vec<(usize, Transition)>,
    /// Optimizer over the `(trunk, active head)` concatenation; fresh per task.
    pub adam: AdamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerInner {
    Hyper(HyperLearner),
    MultiHead(MhLearner),
}

/// Method-agnostic continual learner. The training loop drives it through
/// `start_task` / `train_step` / `end_task`; planners and evaluation get
/// frozen per-task models from `model_for_task`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub method: Method,
    /// Per-task input normalizers; index = task id. The current task's entry
    /// is refit between episodes, finished tasks' entries are frozen.
    pub norms: Vec<Normalizer>,
    /// Current 0-based task id; `None` before the first `start_task`.
    pub task: Option<usize>,
    pub inner: LearnerInner,
    pub squared_loss: bool,
    pub batch_size: usize,
    pub alpha_theta: f64,
    pub alpha_e: f64,
    /// Count of batch items whose task tag was outside the method's allowed
    /// set. Must stay zero; see the module docs.
    pub hygiene_violations: u64,
}

impl Learner {
    pub fn new(cfg: &RunConfig, state_dim: usize, action_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let tspec = target_spec(state_dim, action_dim, cfg.target_hidden.clone())?;
        let inner = if cfg.method.is_hypernet() {
            // hypercrl-mt replays everything; its output regularizer is off.
            let beta = if cfg.method == Method::HypercrlMt { 0.0 } else { cfg.beta_reg };
            let st = HypernetState::new(
                cfg.hyper_hidden.clone(),
                cfg.hyper_activation,
                tspec,
                beta,
                rng,
            )?;
            let theta_len = st.theta.flat.len();
            LearnerInner::Hyper(HyperLearner {
                st,
                adam_theta: AdamState::new(theta_len),
                adam_e: AdamState::new(crate::hypernet::EMBED_DIM),
                history: Vec::new(),
            })
        } else {
            let net = MultiHeadNet::new(
                state_dim + action_dim,
                &cfg.target_hidden,
                state_dim,
                crate::nn::Activation::Relu,
                rng,
            )?;
            let ewc = (cfg.method == Method::Ewc).then(|| EwcState::new(cfg.ewc_lambda));
            let si = (cfg.method == Method::Si).then(|| {
                let len = net.trunk.flat.len() + net.head_len();
                SiState::new(vec![0.0; len], cfg.si_xi, cfg.si_c)
            });
            let adam = AdamState::new(net.trunk.flat.len() + net.head_len());
            LearnerInner::MultiHead(MhLearner {
                net,
                ewc,
                si,
                coreset: Coreset::new(),
                history: Vec::new(),
                adam,
            })
        };
        Ok(Self {
            method: cfg.method,
            norms: Vec::new(),
            task: None,
            inner,
            squared_loss: cfg.squared_loss,
            batch_size: cfg.schedule.b,
            alpha_theta: cfg.schedule.alpha_theta,
            alpha_e: cfg.schedule.alpha_e,
            hygiene_violations: 0,
        })
    }

    /// Begin task `task` (must be the next in sequence): allocate the task's
    /// embedding or head, reset the optimizer, and register an identity
    /// normalizer until real data arrives.
    pub fn start_task(&mut self, task: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let expected = self.task.map_or(0, |t| t + 1);
        if task != expected {
            return Err(Error::State(format!(
                "start_task({task}) out of order (expected {expected})"
            )));
        }
        self.task = Some(task);
        match &mut self.inner {
            LearnerInner::Hyper(h) => {
                h.st.push_task_embedding(rng);
                h.adam_theta = AdamState::new(h.st.theta.flat.len());
                h.adam_e = AdamState::new(crate::hypernet::EMBED_DIM);
            }
            LearnerInner::MultiHead(m) => {
                m.net.push_head(rng);
                m.adam = AdamState::new(m.net.trunk.flat.len() + m.net.head_len());
                if let Some(si) = &mut m.si {
                    // re-anchor the head block at the fresh head; importance
                    // there is always zero, so this only keeps lengths honest
                    let anchor = m.net.concat_params(task)?;
                    si.theta_anchor = anchor;
                }
            }
        }
        let dim = self.input_dim();
        self.norms.push(Normalizer::identity(dim));
        Ok(())
    }

    fn input_dim(&self) -> usize {
        match &self.inner {
            LearnerInner::Hyper(h) => h.st.target_spec.input_dim,
            LearnerInner::MultiHead(m) => m.net.trunk_spec.input_dim,
        }
    }

    fn current_task(&self) -> Result<usize> {
        self.task.ok_or_else(|| Error::State("no task started yet".into()))
    }

    /// Refit the current task's input normalizer (called between episodes).
    pub fn set_normalizer(&mut self, norm: Normalizer) -> Result<()> {
        let t = self.current_task()?;
        self.norms[t] = norm;
        Ok(())
    }

    /// Check batch tags against the method's allowed set; count violations.
    fn audit_batch(&mut self, tags: impl Iterator<Item = usize>, current: usize) {
        let replay = self.method.uses_replay();
        for tag in tags {
            let allowed = if replay { tag <= current } else { tag == current };
            if !allowed {
                self.hygiene_violations += 1;
            }
        }
    }

    /// One gradient step on a batch drawn from `buffer` (plus replay data for
    /// the replay methods). Returns the loss value used for the step.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<f64> {
        let t = self.current_task()?;
        if buffer.task_id != t {
            return Err(Error::Data(format!(
                "train_step got buffer for task {} while task {t} is current",
                buffer.task_id
            )));
        }
        let b = self.batch_size;
        match self.method {
            Method::Hypercrl => {
                let batch = buffer.sample(b, rng)?;
                self.audit_batch(std::iter::repeat(t).take(batch.len()), t);
                let LearnerInner::Hyper(h) = &mut self.inner else { unreachable!() };
                let (loss, g_theta, g_e) =
                    h.st.total_loss_and_grads(&self.norms[t], &batch, self.squared_loss)?;
                h.adam_theta.step(&mut h.st.theta.flat, &g_theta, self.alpha_theta)?;
                let e = h.st.embeddings.last_mut().unwrap();
                h.adam_e.step(&mut e.values, &g_e, self.alpha_e)?;
                Ok(loss)
            }
            Method::HypercrlMt => {
                let LearnerInner::Hyper(h) = &mut self.inner else { unreachable!() };
                let items = mixed_batch(buffer, &h.history, b, t, rng)?;
                let tags: Vec<usize> = items.iter().map(|(tag, _)| *tag).collect();
                let (loss, g_theta, g_e) =
                    hypernet_multitask_loss_grads(&h.st, &items, &self.norms, self.squared_loss)?;
                h.adam_theta.step(&mut h.st.theta.flat, &g_theta, self.alpha_theta)?;
                let e = h.st.embeddings.last_mut().unwrap();
                h.adam_e.step(&mut e.values, &g_e, self.alpha_e)?;
                self.audit_batch(tags.into_iter(), t);
                Ok(loss)
            }
            Method::Finetune | Method::Single | Method::Ewc | Method::Si => {
                let batch = buffer.sample(b, rng)?;
                self.audit_batch(std::iter::repeat(t).take(batch.len()), t);
                let items: Vec<(usize, &Transition)> = batch.into_iter().map(|x| (t, x)).collect();
                self.mh_step(&items, t)
            }
            Method::Coreset | Method::Multitask => {
                let LearnerInner::MultiHead(m) = &self.inner else { unreachable!() };
                let past = if self.method == Method::Coreset { &m.coreset.kept } else { &m.history };
                // SAFETY of the borrow dance: mixed_batch borrows from the
                // learner, so clone the references out before mutating.
                let items: Vec<(usize, Transition)> = mixed_batch(buffer, past, b, t, rng)?
                    .into_iter()
                    .map(|(tag, tr)| (tag, tr.clone()))
                    .collect();
                self.audit_batch(items.iter().map(|(tag, _)| *tag), t);
                let refs: Vec<(usize, &Transition)> =
                    items.iter().map(|(tag, tr)| (*tag, tr)).collect();
                self.mh_step(&refs, t)
            }
        }
    }

    /// Shared multi-head gradient step: dynamics loss + any penalty, one Adam
    /// step over `(trunk, active head)`.
    fn mh_step(&mut self, items: &[(usize, &Transition)], t: usize) -> Result<f64> {
        let LearnerInner::MultiHead(m) = &mut self.inner else { unreachable!() };
        let trunk_len = m.net.trunk.flat.len();
        let mut grad_trunk = vec![0.0; trunk_len];
        let mut grad_heads: Vec<Vec<f64>> =
            m.net.heads.iter().map(|h| vec![0.0; h.len()]).collect();
        let mut loss =
            mh_loss_grad(&m.net, items, &self.norms, self.squared_loss, &mut grad_trunk, &mut grad_heads)?;
        if let Some(ewc) = &m.ewc {
            loss += ewc.penalty(&m.net)?;
            ewc.penalty_grad(&m.net, &mut grad_trunk, &mut grad_heads)?;
        }
        let before = m.net.concat_params(t)?;
        if let Some(si) = &m.si {
            loss += si.penalty(&before);
            si.penalty_grad(&before, trunk_len, &mut grad_trunk, &mut grad_heads[t]);
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!("non-finite loss {loss}")));
        }
        let mut params = before.clone();
        let mut grads = grad_trunk;
        grads.extend_from_slice(&grad_heads[t]);
        m.adam.step(&mut params, &grads, self.alpha_theta)?;
        m.net.trunk.flat.copy_from_slice(&params[..trunk_len]);
        m.net.heads[t].copy_from_slice(&params[trunk_len..]);
        if let Some(si) = &mut m.si {
            si.track(&before, &params, &grads);
        }
        Ok(loss)
    }

    /// End-of-task consolidation: snapshot / Fisher anchor / importance
    /// update / replay absorption, per method.
    pub fn end_task(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<()> {
        let t = self.current_task()?;
        match &mut self.inner {
            LearnerInner::Hyper(h) => {
                h.st.snapshot()?;
                if self.method == Method::HypercrlMt {
                    h.history.extend(buffer.transitions().iter().map(|tr| (t, tr.clone())));
                }
            }
            LearnerInner::MultiHead(m) => {
                if let Some(ewc) = &mut m.ewc {
                    ewc.consolidate(&m.net, t, buffer, &self.norms, self.squared_loss)?;
                }
                if let Some(si) = &mut m.si {
                    let end = m.net.concat_params(t)?;
                    si.consolidate(&end, m.net.trunk.flat.len());
                }
                match self.method {
                    Method::Coreset => m.coreset.update(t, buffer, rng),
                    Method::Multitask => {
                        m.history.extend(buffer.transitions().iter().map(|tr| (t, tr.clone())));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Frozen dynamics model for planning or evaluating task `task`. Uses the
    /// task's own normalizer and (for the hypernetwork) its own embedding.
    pub fn model_for_task(&self, task: usize) -> Result<TaskModel> {
        let t = self.current_task()?;
        if task > t {
            return Err(Error::State(format!("task {task} has not started (current {t})")));
        }
        match &self.inner {
            LearnerInner::Hyper(h) => {
                let theta = h.st.generate(&h.st.embeddings[task])?;
                Ok(TaskModel::Target {
                    theta,
                    spec: h.st.target_spec.clone(),
                    norm: self.norms[task].clone(),
                })
            }
            LearnerInner::MultiHead(m) => Ok(TaskModel::MultiHead {
                net: m.net.clone(),
                head: task,
                norm: self.norms[task].clone(),
            }),
        }
    }
}

/// A frozen per-task dynamics model handed to the planner. Owns its weights,
/// so it stays valid while the learner keeps training.
#[derive(Debug, Clone)]
pub enum TaskModel {
    Target { theta: MlpParams, spec: MlpSpec, norm: Normalizer },
    MultiHead { net: MultiHeadNet, head: usize, norm: Normalizer },
}

impl DynModel for TaskModel {
    fn predict(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        match self {
            TaskModel::Target { theta, spec, norm } => predict_next(theta, spec, norm, s, a),
            TaskModel::MultiHead { net, head, norm } => net.predict_next(*head, norm, s, a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;
    use crate::envs::EnvKind;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn toy_cfg(method: Method) -> RunConfig {
        let mut cfg = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
        cfg.method = method;
        cfg.target_hidden = vec![16, 16];
        cfg.hyper_hidden = vec![12, 12];
        cfg.schedule.b = 16;
        cfg
    }

    /// Linear toy dynamics: s' = s + 0.1 * a (broadcast), 2-d state, 1-d action.
    fn toy_buffer(task: usize, n: usize, shift: f64, rng: &mut ChaCha8Rng) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(task, 10_000);
        for _ in 0..n {
            let s: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = rng.gen_range(-1.0..1.0);
            let s_next: Vec<f64> = s.iter().map(|si| si + 0.1 * a + shift).collect();
            buf.add(Transition { s, a: vec![a], s_next });
        }
        buf
    }

    fn train_one_task(method: Method, steps: usize) -> (Learner, f64, f64) {
        let cfg = toy_cfg(method);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        learner.start_task(0, &mut rng).unwrap();
        let buf = toy_buffer(0, 200, 0.0, &mut rng);
        learner.set_normalizer(Normalizer::fit(&buf).unwrap()).unwrap();
        let first = learner.train_step(&buf, &mut rng).unwrap();
        let mut last = first;
        for _ in 1..steps {
            last = learner.train_step(&buf, &mut rng).unwrap();
        }
        (learner, first, last)
    }

    #[test]
    fn every_method_reduces_training_loss() {
        for method in crate::config::ALL_METHODS {
            let (_, first, last) = train_one_task(method, 300);
            assert!(
                last < 0.5 * first,
                "{}: loss {first} -> {last}",
                method.as_str()
            );
        }
    }

    #[test]
    fn task_bookkeeping_and_order_enforcement() {
        let cfg = toy_cfg(Method::Hypercrl);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        assert!(learner.start_task(1, &mut rng).is_err());
        learner.start_task(0, &mut rng).unwrap();
        assert!(learner.start_task(0, &mut rng).is_err());
        let buf = toy_buffer(0, 50, 0.0, &mut rng);
        learner.end_task(&buf, &mut rng).unwrap();
        learner.start_task(1, &mut rng).unwrap();
        let LearnerInner::Hyper(h) = &learner.inner else { panic!() };
        assert_eq!(h.st.embeddings.len(), 2);
        assert_eq!(learner.norms.len(), 2);
    }

    #[test]
    fn wrong_buffer_task_is_rejected() {
        let cfg = toy_cfg(Method::Finetune);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        learner.start_task(0, &mut rng).unwrap();
        let wrong = toy_buffer(5, 50, 0.0, &mut rng);
        assert!(matches!(learner.train_step(&wrong, &mut rng), Err(Error::Data(_))));
    }

    #[test]
    fn hygiene_counter_stays_zero_across_all_methods() {
        for method in crate::config::ALL_METHODS {
            let cfg = toy_cfg(method);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
            for task in 0..3 {
                learner.start_task(task, &mut rng).unwrap();
                let buf = toy_buffer(task, 100, 0.05 * task as f64, &mut rng);
                learner.set_normalizer(Normalizer::fit(&buf).unwrap()).unwrap();
                for _ in 0..20 {
                    learner.train_step(&buf, &mut rng).unwrap();
                }
                learner.end_task(&buf, &mut rng).unwrap();
            }
            assert_eq!(learner.hygiene_violations, 0, "{}", method.as_str());
        }
    }

    #[test]
    fn audit_flags_prior_task_reads_for_non_replay() {
        let cfg = toy_cfg(Method::Finetune);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        learner.audit_batch([1usize, 2, 2].into_iter(), 2);
        assert_eq!(learner.hygiene_violations, 1);
        let cfg = toy_cfg(Method::Coreset);
        let mut replay = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        replay.audit_batch([0usize, 1, 2].into_iter(), 2);
        assert_eq!(replay.hygiene_violations, 0);
        replay.audit_batch([3usize].into_iter(), 2);
        assert_eq!(replay.hygiene_violations, 1);
    }

    #[test]
    fn replay_methods_see_past_data_in_their_batches() {
        for method in [Method::Coreset, Method::Multitask, Method::HypercrlMt] {
            let cfg = toy_cfg(method);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
            learner.start_task(0, &mut rng).unwrap();
            let buf0 = toy_buffer(0, 200, 0.0, &mut rng);
            learner.set_normalizer(Normalizer::fit(&buf0).unwrap()).unwrap();
            learner.end_task(&buf0, &mut rng).unwrap();
            learner.start_task(1, &mut rng).unwrap();
            let buf1 = toy_buffer(1, 200, 0.1, &mut rng);
            learner.set_normalizer(Normalizer::fit(&buf1).unwrap()).unwrap();
            learner.train_step(&buf1, &mut rng).unwrap();
            let past_len = match &learner.inner {
                LearnerInner::Hyper(h) => h.history.len(),
                LearnerInner::MultiHead(m) => {
                    if method == Method::Coreset {
                        m.coreset.len()
                    } else {
                        m.history.len()
                    }
                }
            };
            assert!(past_len > 0, "{}", method.as_str());
        }
    }

    #[test]
    fn model_for_task_matches_direct_prediction() {
        let (learner, _, _) = train_one_task(Method::Hypercrl, 20);
        let model = learner.model_for_task(0).unwrap();
        let LearnerInner::Hyper(h) = &learner.inner else { panic!() };
        let theta = h.st.generate(&h.st.embeddings[0]).unwrap();
        let s = [0.3, -0.2];
        let a = [0.4];
        let direct = predict_next(&theta, &h.st.target_spec, &learner.norms[0], &s, &a).unwrap();
        assert_eq!(model.predict(&s, &a).unwrap(), direct);

        let (learner, _, _) = train_one_task(Method::Ewc, 20);
        let model = learner.model_for_task(0).unwrap();
        let LearnerInner::MultiHead(m) = &learner.inner else { panic!() };
        let direct = m.net.predict_next(0, &learner.norms[0], &s, &a).unwrap();
        assert_eq!(model.predict(&s, &a).unwrap(), direct);

        assert!(learner.model_for_task(1).is_err());
    }

    /// Old-task models are bitwise frozen under hypernetwork training iff the
    /// hypernetwork output drifts zero; here we just check the model captured
    /// at the boundary keeps predicting the same values after more training.
    #[test]
    fn captured_model_is_independent_of_later_training() {
        let cfg = toy_cfg(Method::Finetune);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        learner.start_task(0, &mut rng).unwrap();
        let buf0 = toy_buffer(0, 100, 0.0, &mut rng);
        learner.set_normalizer(Normalizer::fit(&buf0).unwrap()).unwrap();
        for _ in 0..10 {
            learner.train_step(&buf0, &mut rng).unwrap();
        }
        learner.end_task(&buf0, &mut rng).unwrap();
        let frozen = learner.model_for_task(0).unwrap();
        let s = [0.1, 0.2];
        let a = [-0.3];
        let before = frozen.predict(&s, &a).unwrap();
        learner.start_task(1, &mut rng).unwrap();
        let buf1 = toy_buffer(1, 100, 0.2, &mut rng);
        learner.set_normalizer(Normalizer::fit(&buf1).unwrap()).unwrap();
        for _ in 0..10 {
            learner.train_step(&buf1, &mut rng).unwrap();
        }
        assert_eq!(frozen.predict(&s, &a).unwrap(), before);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let run = || {
            let cfg = toy_cfg(Method::Si);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
            learner.start_task(0, &mut rng).unwrap();
            let buf = toy_buffer(0, 100, 0.0, &mut rng);
            learner.set_normalizer(Normalizer::fit(&buf).unwrap()).unwrap();
            for _ in 0..30 {
                learner.train_step(&buf, &mut rng).unwrap();
            }
            let LearnerInner::MultiHead(m) = learner.inner else { panic!() };
            m.net.concat_params(0).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hypercrl_mt_has_no_output_regularizer() {
        let cfg = toy_cfg(Method::HypercrlMt);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let learner = Learner::new(&cfg, 2, 1, &mut rng).unwrap();
        let LearnerInner::Hyper(h) = &learner.inner else { panic!() };
        assert_eq!(h.st.beta_reg, 0.0);
    }
}
