//! Continual-learning baselines sharing one multi-head target network:
//! finetuning, EWC, SI, coreset replay, the all-data multitask oracle, and
//! the multitask variant of the hypernetwork learner.
//!
//! Task ids are 0-based throughout. Baseline penalties operate on the
//! concatenation `(trunk, head)` of the flat parameter vectors.

use crate::dynamics::{dyn_loss_grad, Normalizer, ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::hypernet::HypernetState;
use crate::nn::{mlp_forward, mlp_grad_accumulate, xavier_init, Activation, MlpParams, MlpSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shared trunk plus one linear output head per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadNet {
    /// Trunk layout; its "output layer" is the last hidden layer, emitted as
    /// pre-activations (the activation is applied before the head).
    pub trunk_spec: MlpSpec,
    pub trunk: MlpParams,
    /// One flat linear layer per task: `(output_dim x feature_dim)` weights,
    /// then `output_dim` biases.
    pub heads: Vec<Vec<f64>>,
    pub active_head: usize,
    pub output_dim: usize,
}

impl MultiHeadNet {
    /// `hidden` must have at least two layers: all but the last form the
    /// trunk's hidden stack, the last is the shared feature layer.
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.len() < 2 {
            return Err(Error::Config(
                "multi-head net needs at least two hidden layers (trunk + feature)".into(),
            ));
        }
        let feature_dim = *hidden.last().unwrap();
        let trunk_spec =
            MlpSpec::new(input_dim, hidden[..hidden.len() - 1].to_vec(), feature_dim, activation)?;
        let trunk = xavier_init(&trunk_spec, rng);
        Ok(Self { trunk_spec, trunk, heads: Vec::new(), active_head: 0, output_dim })
    }

    pub fn feature_dim(&self) -> usize {
        self.trunk_spec.output_dim
    }

    pub fn head_len(&self) -> usize {
        self.output_dim * self.feature_dim() + self.output_dim
    }

    /// Append a fresh Xavier-initialized head and make it active.
    pub fn push_head<R: Rng>(&mut self, rng: &mut R) {
        let feat = self.feature_dim();
        let bound = (6.0 / (feat + self.output_dim) as f64).sqrt();
        let mut head = Vec::with_capacity(self.head_len());
        for _ in 0..feat * self.output_dim {
            head.push(rng.gen_range(-bound..bound));
        }
        head.extend(std::iter::repeat(0.0).take(self.output_dim));
        self.heads.push(head);
        self.active_head = self.heads.len() - 1;
    }

    fn check_head(&self, head: usize) -> Result<()> {
        if head >= self.heads.len() {
            return Err(Error::Data(format!(
                "head {head} does not exist ({} heads)",
                self.heads.len()
            )));
        }
        Ok(())
    }

    /// Activated shared features for input `x`.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = mlp_forward(&self.trunk, &self.trunk_spec, x)?;
        Ok(pre.iter().map(|&z| self.trunk_spec.activation.apply(z)).collect())
    }

    /// Forward pass through the trunk and the given head.
    pub fn forward_head(&self, head: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_head(head)?;
        let feat = self.features(x)?;
        let fd = feat.len();
        let h = &self.heads[head];
        let mut out = Vec::with_capacity(self.output_dim);
        for row in 0..self.output_dim {
            let mut acc = h[self.output_dim * fd + row];
            for (w, f) in h[row * fd..(row + 1) * fd].iter().zip(&feat) {
                acc += w * f;
            }
            out.push(acc);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_head(self.active_head, x)
    }

    /// Delta prediction: `s + f(normalize(s, a))` through the given head.
    pub fn predict_next(
        &self,
        head: usize,
        norm: &Normalizer,
        s: &[f64],
        a: &[f64],
    ) -> Result<Vec<f64>> {
        let delta = self.forward_head(head, &norm.apply(s, a))?;
        Ok(s.iter().zip(&delta).map(|(si, d)| si + d).collect())
    }

    /// Accumulate gradients of `upstream . f(x)` into the trunk and head
    /// accumulators.
    pub fn grad_accumulate(
        &self,
        head: usize,
        x: &[f64],
        upstream: &[f64],
        grad_trunk: &mut [f64],
        grad_head: &mut [f64],
    ) -> Result<()> {
        self.check_head(head)?;
        if upstream.len() != self.output_dim || grad_head.len() != self.head_len() {
            return Err(Error::Config("multi-head gradient length mismatch".into()));
        }
        let pre = mlp_forward(&self.trunk, &self.trunk_spec, x)?;
        let act = self.trunk_spec.activation;
        let feat: Vec<f64> = pre.iter().map(|&z| act.apply(z)).collect();
        let fd = feat.len();
        let h = &self.heads[head];

        let mut grad_feat = vec![0.0; fd];
        for row in 0..self.output_dim {
            let u = upstream[row];
            for c in 0..fd {
                grad_head[row * fd + c] += u * feat[c];
                grad_feat[c] += u * h[row * fd + c];
            }
            grad_head[self.output_dim * fd + row] += u;
        }
        let grad_pre: Vec<f64> =
            grad_feat.iter().zip(&pre).map(|(g, &z)| g * act.derivative(z)).collect();
        mlp_grad_accumulate(&self.trunk, &self.trunk_spec, x, &grad_pre, grad_trunk)?;
        Ok(())
    }

    /// `(trunk, head)` concatenation used by the EWC/SI penalties.
    pub fn concat_params(&self, head: usize) -> Result<Vec<f64>> {
        self.check_head(head)?;
        let mut v = self.trunk.flat.clone();
        v.extend_from_slice(&self.heads[head]);
        Ok(v)
    }
}

/// Dynamics loss over a batch of task-tagged transitions, each routed through
/// its own head and its own task's normalizer. Mean over the whole batch,
/// same convention as [`crate::dynamics::dyn_loss`]. Gradients accumulate
/// into `grad_trunk` and the per-head accumulators of the involved heads.
pub fn mh_loss_grad(
    net: &MultiHeadNet,
    items: &[(usize, &Transition)],
    norms: &[Normalizer],
    squared: bool,
    grad_trunk: &mut [f64],
    grad_heads: &mut [Vec<f64>],
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::State("mh_loss_grad on empty batch".into()));
    }
    if grad_heads.len() != net.heads.len() {
        return Err(Error::Config("per-head gradient accumulator count mismatch".into()));
    }
    let scale = 1.0 / items.len() as f64;
    let mut total = 0.0;
    for &(task, t) in items {
        net.check_head(task)?;
        let norm = norms
            .get(task)
            .ok_or_else(|| Error::Data(format!("no normalizer for task {task}")))?;
        let x = norm.apply(&t.s, &t.a);
        let delta = net.forward_head(task, &x)?;
        let err: Vec<f64> = delta
            .iter()
            .zip(t.s.iter().zip(&t.s_next))
            .map(|(d, (si, yi))| si + d - yi)
            .collect();
        let sq: f64 = err.iter().map(|e| e * e).sum();
        let nrm = sq.sqrt();
        total += if squared { sq } else { nrm };
        let upstream: Vec<f64> = if squared {
            err.iter().map(|e| 2.0 * e * scale).collect()
        } else if nrm > 1e-12 {
            err.iter().map(|e| e / nrm * scale).collect()
        } else {
            continue;
        };
        net.grad_accumulate(task, &x, &upstream, grad_trunk, &mut grad_heads[task])?;
    }
    Ok(total * scale)
}

/// Per-task anchor of an EWC penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcAnchor {
    /// `(trunk, head)` parameters at the end of the task.
    pub theta_star: Vec<f64>,
    /// Diagonal empirical Fisher over the same layout; elementwise >= 0.
    pub fisher: Vec<f64>,
    /// Which head the anchor's head block refers to.
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    pub anchors: Vec<EwcAnchor>,
    pub lambda: f64,
}

/// One anchor's penalty: `(lambda/2) sum_j fisher_j (theta_j - theta*_j)^2`.
pub fn ewc_anchor_penalty(theta: &[f64], anchor: &EwcAnchor, lambda: f64) -> f64 {
    0.5 * lambda
        * theta
            .iter()
            .zip(&anchor.theta_star)
            .zip(&anchor.fisher)
            .map(|((t, s), f)| f * (t - s) * (t - s))
            .sum::<f64>()
}

impl EwcState {
    pub fn new(lambda: f64) -> Self {
        Self { anchors: Vec::new(), lambda }
    }

    /// End-of-task consolidation: record the current `(trunk, head)` and the
    /// empirical diagonal Fisher (mean of squared per-transition gradients of
    /// the dynamics loss) over the task buffer.
    pub fn consolidate(
        &mut self,
        net: &MultiHeadNet,
        head: usize,
        buffer: &ReplayBuffer,
        norms: &[Normalizer],
        squared: bool,
    ) -> Result<()> {
        if buffer.is_empty() {
            return Err(Error::State("ewc_consolidate with an empty buffer".into()));
        }
        let trunk_len = net.trunk.flat.len();
        let mut fisher = vec![0.0; trunk_len + net.head_len()];
        let mut grad_trunk = vec![0.0; trunk_len];
        let mut grad_heads: Vec<Vec<f64>> = net.heads.iter().map(|h| vec![0.0; h.len()]).collect();
        for t in buffer.transitions() {
            grad_trunk.iter_mut().for_each(|g| *g = 0.0);
            grad_heads[head].iter_mut().for_each(|g| *g = 0.0);
            mh_loss_grad(net, &[(head, t)], norms, squared, &mut grad_trunk, &mut grad_heads)?;
            for (f, g) in fisher.iter_mut().zip(grad_trunk.iter().chain(&grad_heads[head])) {
                *f += g * g;
            }
        }
        let n = buffer.len() as f64;
        fisher.iter_mut().for_each(|f| *f /= n);
        self.anchors.push(EwcAnchor { theta_star: net.concat_params(head)?, fisher, head });
        Ok(())
    }

    /// Total penalty over all anchors, evaluated at the current parameters.
    pub fn penalty(&self, net: &MultiHeadNet) -> Result<f64> {
        let mut total = 0.0;
        for anchor in &self.anchors {
            let theta = net.concat_params(anchor.head)?;
            total += ewc_anchor_penalty(&theta, anchor, self.lambda);
        }
        Ok(total)
    }

    /// Add the penalty gradient `lambda * fisher * (theta - theta*)` into the
    /// trunk and per-head accumulators. No-op at lambda = 0 so finetuning
    /// trajectories stay bitwise identical.
    pub fn penalty_grad(
        &self,
        net: &MultiHeadNet,
        grad_trunk: &mut [f64],
        grad_heads: &mut [Vec<f64>],
    ) -> Result<()> {
        if self.lambda == 0.0 {
            return Ok(());
        }
        let trunk_len = net.trunk.flat.len();
        for anchor in &self.anchors {
            let theta = net.concat_params(anchor.head)?;
            for (j, ((t, s), f)) in
                theta.iter().zip(&anchor.theta_star).zip(&anchor.fisher).enumerate()
            {
                let g = self.lambda * f * (t - s);
                if j < trunk_len {
                    grad_trunk[j] += g;
                } else {
                    grad_heads[anchor.head][j - trunk_len] += g;
                }
            }
        }
        Ok(())
    }
}

/// Synaptic-intelligence importance state over the `(trunk, head)` layout.
/// Importance is consolidated for the shared trunk only: heads are
/// task-private, so they carry no cross-task importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    pub omega: Vec<f64>,
    pub theta_anchor: Vec<f64>,
    pub path_accumulator: Vec<f64>,
    pub xi: f64,
    pub c: f64,
}

impl SiState {
    pub fn new(theta_init: Vec<f64>, xi: f64, c: f64) -> Self {
        let len = theta_init.len();
        Self {
            omega: vec![0.0; len],
            theta_anchor: theta_init,
            path_accumulator: vec![0.0; len],
            xi,
            c,
        }
    }

    /// Per-update-step tracking: `path += -grad * (theta_after - theta_before)`.
    /// `grad` is the loss gradient used for the step (penalty included).
    pub fn track(&mut self, before: &[f64], after: &[f64], grad: &[f64]) {
        for (p, ((b, a), g)) in
            self.path_accumulator.iter_mut().zip(before.iter().zip(after).zip(grad))
        {
            *p += -g * (a - b);
        }
    }

    /// End-of-task consolidation over the trunk block; resets the path and
    /// re-anchors at `theta_end`.
    pub fn consolidate(&mut self, theta_end: &[f64], trunk_len: usize) {
        for j in 0..trunk_len {
            let delta = theta_end[j] - self.theta_anchor[j];
            self.omega[j] += self.path_accumulator[j].max(0.0) / (delta * delta + self.xi);
        }
        self.theta_anchor = theta_end.to_vec();
        self.path_accumulator.iter_mut().for_each(|p| *p = 0.0);
    }

    /// `c * sum_j omega_j (theta_j - anchor_j)^2`.
    pub fn penalty(&self, theta: &[f64]) -> f64 {
        self.c
            * theta
                .iter()
                .zip(&self.theta_anchor)
                .zip(&self.omega)
                .map(|((t, a), w)| w * (t - a) * (t - a))
                .sum::<f64>()
    }

    /// Add `2c * omega * (theta - anchor)` into the trunk/head accumulators.
    /// No-op at c = 0 so finetuning trajectories stay bitwise identical.
    pub fn penalty_grad(
        &self,
        theta: &[f64],
        trunk_len: usize,
        grad_trunk: &mut [f64],
        grad_head: &mut [f64],
    ) {
        if self.c == 0.0 {
            return;
        }
        for (j, ((t, a), w)) in theta.iter().zip(&self.theta_anchor).zip(&self.omega).enumerate() {
            let g = 2.0 * self.c * w * (t - a);
            if j < trunk_len {
                grad_trunk[j] += g;
            } else {
                grad_head[j - trunk_len] += g;
            }
        }
    }
}

/// Replayed subset of past transitions: one percent per finished task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coreset {
    /// Task-tagged kept transitions, in insertion order.
    pub kept: Vec<(usize, Transition)>,
    /// Quota actually stored per finished task.
    pub per_task: Vec<usize>,
}

/// `ceil(0.01 * n)` — at least one transition for any non-empty task.
pub fn coreset_quota(n: usize) -> usize {
    (n as f64 * 0.01).ceil() as usize
}

impl Coreset {
    pub fn new() -> Self {
        Self { kept: Vec::new(), per_task: Vec::new() }
    }

    /// End-of-task update: keep `ceil(1%)` of the finished task's buffer,
    /// sampled uniformly without replacement.
    pub fn update(&mut self, task: usize, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) {
        let n = buffer.len();
        let quota = coreset_quota(n);
        let picks = rand::seq::index::sample(rng, n, quota);
        for i in picks.iter() {
            self.kept.push((task, buffer.transitions()[i].clone()));
        }
        self.per_task.push(quota);
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }
}

impl Default for Coreset {
    fn default() -> Self {
        Self::new()
    }
}

/// A current-task batch of size `b` plus (when past data exists) a past-data
/// batch of size `b`, both sampled uniformly with replacement. The combined
/// batch is averaged as one, so both halves carry equal weight.
pub fn mixed_batch<'a>(
    buffer: &'a ReplayBuffer,
    past: &'a [(usize, Transition)],
    b: usize,
    current_task: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, &'a Transition)>> {
    let mut batch: Vec<(usize, &Transition)> = buffer
        .sample(b, rng)?
        .into_iter()
        .map(|t| (current_task, t))
        .collect();
    if !past.is_empty() {
        for _ in 0..b {
            let (task, t) = &past[rng.gen_range(0..past.len())];
            batch.push((*task, t));
        }
    }
    Ok(batch)
}

/// Multitask-hypernetwork update: the dynamics loss over a batch mixing all
/// tasks, each transition routed through its own task's embedding; no
/// regularizer. Returns `(loss, grad_theta, grad_current_embedding)` — only
/// the current (last) embedding is trainable.
pub fn hypernet_multitask_loss_grads(
    st: &HypernetState,
    items: &[(usize, &Transition)],
    norms: &[Normalizer],
    squared: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::State("multitask update on empty batch".into()));
    }
    let n_tasks = st.embeddings.len();
    let current = n_tasks - 1;
    let total_n = items.len() as f64;

    let mut grad_theta = vec![0.0; st.theta.flat.len()];
    let mut grad_e = vec![0.0; st.embeddings[current].values.len()];
    let mut loss = 0.0;
    for task in 0..n_tasks {
        let group: Vec<&Transition> =
            items.iter().filter(|(t, _)| *t == task).map(|(_, tr)| *tr).collect();
        if group.is_empty() {
            continue;
        }
        let norm = norms
            .get(task)
            .ok_or_else(|| Error::Data(format!("no normalizer for task {task}")))?;
        let e = &st.embeddings[task];
        let theta_t = st.generate(e)?;
        let mut grad_target = vec![0.0; theta_t.flat.len()];
        let l = dyn_loss_grad(&theta_t, &st.target_spec, norm, &group, squared, &mut grad_target)?;
        let w = group.len() as f64 / total_n;
        loss += w * l;
        grad_target.iter_mut().for_each(|g| *g *= w);
        let ge =
            mlp_grad_accumulate(&st.theta, &st.spec, &e.values, &grad_target, &mut grad_theta)?;
        if task == current {
            for (a, b) in grad_e.iter_mut().zip(&ge) {
                *a += b;
            }
        }
    }
    if items.iter().any(|(t, _)| *t >= n_tasks) {
        return Err(Error::Data("batch contains a transition from an unknown task".into()));
    }
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(format!("non-finite multitask loss {loss}")));
    }
    Ok((loss, grad_theta, grad_e))
}
