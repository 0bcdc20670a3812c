//! Task-conditional hypernetwork: `H_Theta(e) -> theta`, learned task
//! embeddings, snapshotting at task boundaries, and the output-preserving
//! regularizer that penalizes drift of the hypernetwork's outputs on old
//! task embeddings.
//!
//! The hypernetwork emits the full flat target-parameter vector in one
//! output layer. Old embeddings are frozen; gradients flow to the current
//! embedding through the dynamics loss only, and the snapshot is treated as
//! constant data.

use crate::dynamics::{dyn_loss_grad, Normalizer, Transition};
use crate::error::{Error, Result};
use crate::nn::{
    mlp_forward, mlp_grad, mlp_grad_accumulate, xavier_init, Activation, MlpParams, MlpSpec,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Embedding dimension, fixed for all tasks in a run.
pub const EMBED_DIM: usize = 10;

/// Learned task-identifying vector. Trainable only while its task is current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEmbedding {
    pub values: Vec<f64>,
    pub task_id: usize,
    pub trainable: bool,
}

impl TaskEmbedding {
    /// Standard-normal sample of dimension [`EMBED_DIM`].
    pub fn random<R: Rng>(task_id: usize, rng: &mut R) -> Self {
        let values = (0..EMBED_DIM).map(|_| StandardNormal.sample(rng)).collect();
        Self { values, task_id, trainable: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypernetState {
    /// Hypernetwork weights Theta for the current task.
    pub theta: MlpParams,
    /// Hypernetwork layout: input [`EMBED_DIM`], output = target parameter count.
    pub spec: MlpSpec,
    /// Layout of the target network the hypernetwork emits weights for.
    pub target_spec: MlpSpec,
    /// Embeddings e_1..e_t; only the last one is trainable.
    pub embeddings: Vec<TaskEmbedding>,
    /// Frozen copy of Theta taken at the last task boundary. Present iff t >= 2.
    pub snapshot: Option<MlpParams>,
    /// Snapshot outputs H_snapshot(e_i) for the embeddings frozen at snapshot
    /// time, cached because both sides are immutable during a task.
    pub snapshot_outputs: Vec<Vec<f64>>,
    pub beta_reg: f64,
}

impl HypernetState {
    pub fn new<R: Rng>(
        hyper_hidden: Vec<usize>,
        hyper_activation: Activation,
        target_spec: MlpSpec,
        beta_reg: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::new(EMBED_DIM, hyper_hidden, target_spec.param_count(), hyper_activation)?;
        let mut theta = xavier_init(&spec, rng);
        // seed the output-layer bias with a standard target-net init, so the
        // generated network starts where a directly-trained one would instead
        // of near zero (a raw Xavier hypernetwork emits tiny, rank-limited
        // weights and the target's hidden units barely activate)
        let bias = xavier_init(&target_spec, rng).flat;
        let n = theta.flat.len();
        theta.flat[n - bias.len()..].copy_from_slice(&bias);
        Ok(Self {
            theta,
            spec,
            target_spec,
            embeddings: Vec::new(),
            snapshot: None,
            snapshot_outputs: Vec::new(),
            beta_reg,
        })
    }

    /// Current task index t (1-based); 0 before the first task starts.
    pub fn current_task(&self) -> usize {
        self.embeddings.len()
    }

    pub fn current_embedding(&self) -> Result<&TaskEmbedding> {
        self.embeddings
            .last()
            .ok_or_else(|| Error::State("no task embedding exists yet".into()))
    }

    /// Generate target-network weights `theta_t = H_Theta(e)`.
    pub fn generate(&self, e: &TaskEmbedding) -> Result<MlpParams> {
        let out = mlp_forward(&self.theta, &self.spec, &e.values)?;
        if out.len() != self.target_spec.param_count() {
            return Err(Error::Config(format!(
                "hypernetwork output length {} does not match target layout {}",
                out.len(),
                self.target_spec.param_count()
            )));
        }
        Ok(MlpParams { flat: out })
    }

    /// Freeze the current hypernetwork as the regularization target.
    /// Called once at each task boundary, after finishing the task.
    pub fn snapshot(&mut self) -> Result<()> {
        let mut outputs = Vec::with_capacity(self.embeddings.len());
        for e in &self.embeddings {
            outputs.push(mlp_forward(&self.theta, &self.spec, &e.values)?);
        }
        self.snapshot = Some(self.theta.clone());
        self.snapshot_outputs = outputs;
        Ok(())
    }

    /// Freeze the previous embedding and append a fresh standard-normal one.
    pub fn push_task_embedding<R: Rng>(&mut self, rng: &mut R) -> &TaskEmbedding {
        for e in self.embeddings.iter_mut() {
            e.trainable = false;
        }
        let id = self.embeddings.len() + 1;
        self.embeddings.push(TaskEmbedding::random(id, rng));
        self.embeddings.last().unwrap()
    }

    /// `(beta / (t-1)) * sum_i ||H_snapshot(e_i) - H_Theta(e_i)||^2` over the
    /// frozen embeddings. Requires t >= 2.
    pub fn reg_loss(&self) -> Result<f64> {
        let t = self.current_task();
        if t < 2 {
            return Err(Error::State("reg_loss requires task index >= 2".into()));
        }
        if self.snapshot.is_none() {
            return Err(Error::State("missing snapshot at task index >= 2".into()));
        }
        let n_old = t - 1;
        let mut total = 0.0;
        for i in 0..n_old {
            let cur = mlp_forward(&self.theta, &self.spec, &self.embeddings[i].values)?;
            let snap = &self.snapshot_outputs[i];
            total += cur
                .iter()
                .zip(snap)
                .map(|(c, s)| (c - s) * (c - s))
                .sum::<f64>();
        }
        Ok(self.beta_reg / n_old as f64 * total)
    }

    /// Total loss `L_dyn + L_reg` and its gradients with respect to Theta and
    /// the current embedding. Gradients to Theta flow through both terms; the
    /// embedding gradient flows through the dynamics loss only.
    pub fn total_loss_and_grads(
        &self,
        norm: &Normalizer,
        batch: &[&Transition],
        squared: bool,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let e_t = self.current_embedding()?;
        let target_params = self.generate(e_t)?;

        // Dynamics loss and gradient with respect to the generated weights.
        let mut grad_target = vec![0.0; target_params.flat.len()];
        let dyn_l = dyn_loss_grad(&target_params, &self.target_spec, norm, batch, squared, &mut grad_target)?;

        // Chain rule through the hypernetwork.
        let (mut grad_theta, grad_e) = mlp_grad(&self.theta, &self.spec, &e_t.values, &grad_target)?;

        // Regularizer over the frozen embeddings; snapshot outputs are constants.
        let mut reg_l = 0.0;
        let n_old = self.current_task().saturating_sub(1);
        if n_old > 0 && self.beta_reg != 0.0 {
            if self.snapshot.is_none() {
                return Err(Error::State("missing snapshot at task index >= 2".into()));
            }
            let coeff = self.beta_reg / n_old as f64;
            for i in 0..n_old {
                let cur = mlp_forward(&self.theta, &self.spec, &self.embeddings[i].values)?;
                let diff: Vec<f64> = cur
                    .iter()
                    .zip(&self.snapshot_outputs[i])
                    .map(|(c, s)| c - s)
                    .collect();
                reg_l += coeff * diff.iter().map(|d| d * d).sum::<f64>();
                let upstream: Vec<f64> = diff.iter().map(|d| 2.0 * coeff * d).collect();
                mlp_grad_accumulate(&self.theta, &self.spec, &self.embeddings[i].values, &upstream, &mut grad_theta)?;
            }
        }

        let loss = dyn_l + reg_l;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!("non-finite total loss {loss}")));
        }
        Ok((loss, grad_theta, grad_e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::target_spec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_state(beta: f64, seed: u64) -> HypernetState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tspec = target_spec(3, 1, vec![4]).unwrap();
        let mut st = HypernetState::new(vec![6], Activation::Elu, tspec, beta, &mut rng).unwrap();
        st.push_task_embedding(&mut rng);
        st
    }

    fn toy_batch(rng: &mut ChaCha8Rng) -> Vec<Transition> {
        (0..5)
            .map(|_| Transition {
                s: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                a: vec![rng.gen_range(-1.0..1.0)],
                s_next: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn zero_hypernet_generates_zero_target() {
        let mut st = toy_state(0.5, 1);
        st.theta.flat.iter_mut().for_each(|v| *v = 0.0);
        let theta = st.generate(&st.embeddings[0]).unwrap();
        assert!(theta.flat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generate_is_deterministic_and_matches_forward() {
        let st = toy_state(0.5, 2);
        let a = st.generate(&st.embeddings[0]).unwrap();
        let b = st.generate(&st.embeddings[0]).unwrap();
        assert_eq!(a, b);
        let direct = mlp_forward(&st.theta, &st.spec, &st.embeddings[0].values).unwrap();
        assert_eq!(a.flat, direct);
    }

    #[test]
    fn reg_loss_zero_when_theta_equals_snapshot() {
        let mut st = toy_state(0.5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        st.snapshot().unwrap();
        st.push_task_embedding(&mut rng);
        assert_eq!(st.reg_loss().unwrap(), 0.0);
    }

    #[test]
    fn reg_loss_requires_second_task() {
        let st = toy_state(0.5, 4);
        assert!(matches!(st.reg_loss(), Err(Error::State(_))));
    }

    #[test]
    fn reg_loss_matches_direct_evaluation_at_t3() {
        let mut st = toy_state(0.7, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        st.snapshot().unwrap();
        st.push_task_embedding(&mut rng);
        st.snapshot().unwrap();
        st.push_task_embedding(&mut rng);
        // perturb Theta so outputs drift
        for (i, v) in st.theta.flat.iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f64 - 3.0);
        }
        // direct scalar evaluation of (beta/2) * (||d1||^2 + ||d2||^2)
        let mut expect = 0.0;
        for i in 0..2 {
            let cur = mlp_forward(&st.theta, &st.spec, &st.embeddings[i].values).unwrap();
            let mut sq = 0.0;
            for (c, s) in cur.iter().zip(&st.snapshot_outputs[i]) {
                sq += (c - s) * (c - s);
            }
            expect += sq;
        }
        expect *= 0.7 / 2.0;
        assert_relative_eq!(st.reg_loss().unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn total_loss_equals_dyn_loss_at_t1() {
        let st = toy_state(0.5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let batch_owned = toy_batch(&mut rng);
        let batch: Vec<&Transition> = batch_owned.iter().collect();
        let norm = Normalizer::identity(4);
        let (loss, _, _) = st.total_loss_and_grads(&norm, &batch, false).unwrap();
        let theta = st.generate(&st.embeddings[0]).unwrap();
        let dyn_l = crate::dynamics::dyn_loss(&theta, &st.target_spec, &norm, &batch, false).unwrap();
        assert_relative_eq!(loss, dyn_l, max_relative = 1e-12);
    }

    #[test]
    fn beta_zero_matches_pure_finetuning_grads() {
        let mut st = toy_state(0.5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        st.snapshot().unwrap();
        st.push_task_embedding(&mut rng);
        for v in st.theta.flat.iter_mut() {
            *v += 0.02;
        }
        let batch_owned = toy_batch(&mut rng);
        let batch: Vec<&Transition> = batch_owned.iter().collect();
        let norm = Normalizer::identity(4);
        let mut st0 = st.clone();
        st0.beta_reg = 0.0;
        let (_, g_reg, ge_reg) = st.total_loss_and_grads(&norm, &batch, false).unwrap();
        let (l0, g0, ge0) = st0.total_loss_and_grads(&norm, &batch, false).unwrap();
        // with beta = 0 the gradients are exactly the finetuning gradients
        let theta = st0.generate(st0.current_embedding().unwrap()).unwrap();
        let dyn_l = crate::dynamics::dyn_loss(&theta, &st0.target_spec, &norm, &batch, false).unwrap();
        assert_relative_eq!(l0, dyn_l, max_relative = 1e-12);
        assert_ne!(g_reg, g0);
        // embedding gradient never sees the regularizer
        assert_eq!(ge_reg, ge0);
    }

    #[test]
    fn total_loss_grads_match_finite_differences() {
        let mut st = toy_state(0.3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        st.snapshot().unwrap();
        st.push_task_embedding(&mut rng);
        for (i, v) in st.theta.flat.iter_mut().enumerate() {
            *v += 0.005 * ((i % 5) as f64 - 2.0);
        }
        let batch_owned = toy_batch(&mut rng);
        let batch: Vec<&Transition> = batch_owned.iter().collect();
        let norm = Normalizer::identity(4);
        let (_, g_theta, g_e) = st.total_loss_and_grads(&norm, &batch, false).unwrap();
        let loss_of = |st_mod: &HypernetState| -> f64 {
            let e_t = st_mod.current_embedding().unwrap();
            let theta = st_mod.generate(e_t).unwrap();
            let dyn_l =
                crate::dynamics::dyn_loss(&theta, &st_mod.target_spec, &norm, &batch, false).unwrap();
            dyn_l + st_mod.reg_loss().unwrap()
        };
        let h = 1e-5;
        for i in (0..st.theta.flat.len()).step_by(11) {
            let mut a = st.clone();
            a.theta.flat[i] += h;
            let mut b = st.clone();
            b.theta.flat[i] -= h;
            let fd = (loss_of(&a) - loss_of(&b)) / (2.0 * h);
            let denom = fd.abs().max(g_theta[i].abs()).max(1e-6);
            assert!((fd - g_theta[i]).abs() / denom <= 1e-4, "theta {i}: {fd} vs {}", g_theta[i]);
        }
        let last = st.embeddings.len() - 1;
        for i in 0..EMBED_DIM {
            let mut a = st.clone();
            a.embeddings[last].values[i] += h;
            let mut b = st.clone();
            b.embeddings[last].values[i] -= h;
            let fd = (loss_of(&a) - loss_of(&b)) / (2.0 * h);
            let denom = fd.abs().max(g_e[i].abs()).max(1e-6);
            assert!((fd - g_e[i]).abs() / denom <= 1e-4, "e {i}: {fd} vs {}", g_e[i]);
        }
    }

    #[test]
    fn snapshot_is_immutable_under_training() {
        let mut st = toy_state(0.5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        st.snapshot().unwrap();
        let frozen = st.snapshot.clone().unwrap();
        st.push_task_embedding(&mut rng);
        for v in st.theta.flat.iter_mut() {
            *v += 1.0;
        }
        assert_eq!(st.snapshot.as_ref().unwrap(), &frozen);
        assert!(st.reg_loss().unwrap() > 0.0);
    }

    #[test]
    fn sequential_snapshots_without_training_are_identical() {
        let mut st = toy_state(0.5, 10);
        st.snapshot().unwrap();
        let a = st.snapshot.clone().unwrap();
        let out_a = st.snapshot_outputs.clone();
        st.snapshot().unwrap();
        assert_eq!(st.snapshot.as_ref().unwrap(), &a);
        assert_eq!(st.snapshot_outputs, out_a);
    }

    #[test]
    fn exactly_one_trainable_embedding() {
        let mut st = toy_state(0.5, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(110);
        for _ in 0..4 {
            st.snapshot().unwrap();
            st.push_task_embedding(&mut rng);
            let trainable = st.embeddings.iter().filter(|e| e.trainable).count();
            assert_eq!(trainable, 1);
            assert!(st.embeddings.last().unwrap().trainable);
        }
    }

    #[test]
    fn embedding_seed_determinism_and_moments() {
        let a = TaskEmbedding::random(1, &mut ChaCha8Rng::seed_from_u64(42));
        let b = TaskEmbedding::random(1, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert_eq!(a.values.len(), EMBED_DIM);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sums = vec![0.0; EMBED_DIM];
        for _ in 0..n {
            let e = TaskEmbedding::random(1, &mut rng);
            for (s, v) in sums.iter_mut().zip(&e.values) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.02);
        }
    }
}
