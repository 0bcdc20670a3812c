//! Target dynamics model: delta prediction on normalized inputs, the
//! dynamics loss, per-task replay buffers, and input normalization.

use crate::error::{Error, Result};
use crate::nn::{mlp_forward, mlp_grad_accumulate, Activation, MlpParams, MlpSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One observed `(s, a, s')` tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.a).chain(&self.s_next).all(|v| v.is_finite())
    }
}

/// Replay buffer holding only the current task's data. Reset at every task
/// boundary; the capacity bound exists to honor the finite-memory setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub task_id: usize,
    pub capacity: usize,
    transitions: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new(task_id: usize, capacity: usize) -> Self {
        Self { task_id, capacity, transitions: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn add(&mut self, t: Transition) {
        if self.transitions.len() == self.capacity {
            self.transitions.remove(0);
        }
        self.transitions.push(t);
    }

    /// Uniform sampling with replacement. Deterministic given the generator.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.transitions.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch_size)
            .map(|_| &self.transitions[rng.gen_range(0..self.transitions.len())])
            .collect())
    }
}

/// Elementwise floor applied to the standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension statistics over concatenated `(s, a)` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

impl Normalizer {
    /// Identity normalizer (zero mean, unit std).
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim], count: 0 }
    }

    /// Fit from the current task buffer. Recomputed before each update
    /// session; idempotent on an unchanged buffer.
    pub fn fit(buffer: &ReplayBuffer) -> Result<Self> {
        let first = buffer
            .transitions()
            .first()
            .ok_or_else(|| Error::State("normalizer_fit on empty buffer".into()))?;
        let dim = first.s.len() + first.a.len();
        let n = buffer.len() as f64;
        let mut mean = vec![0.0; dim];
        for t in buffer.transitions() {
            for (m, v) in mean.iter_mut().zip(t.s.iter().chain(&t.a)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for t in buffer.transitions() {
            for (s, (m, v)) in var.iter_mut().zip(mean.iter().zip(t.s.iter().chain(&t.a))) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std, count: buffer.len() })
    }

    /// `(x - mean) / std` over the concatenated `(s, a)` vector.
    pub fn apply(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        s.iter()
            .chain(a)
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, sd))| (x - m) / sd)
            .collect()
    }
}

/// Standard target-network spec: input `|s| + |a|`, output `|s|`, ReLU.
pub fn target_spec(state_dim: usize, action_dim: usize, hidden: Vec<usize>) -> Result<MlpSpec> {
    MlpSpec::new(state_dim + action_dim, hidden, state_dim, Activation::Relu)
}

/// `s + f_theta(normalize(s, a))`. Pure; non-finite outputs are passed
/// through so the planner can invalidate the candidate trajectory.
pub fn predict_next(
    theta: &MlpParams,
    spec: &MlpSpec,
    norm: &Normalizer,
    s: &[f64],
    a: &[f64],
) -> Result<Vec<f64>> {
    let x = norm.apply(s, a);
    let delta = mlp_forward(theta, spec, &x)?;
    Ok(s.iter().zip(&delta).map(|(si, d)| si + d).collect())
}

/// Mean over the batch of the Euclidean norm of the prediction error.
/// With `squared` set, uses the mean of squared norms instead (sensitivity knob).
pub fn dyn_loss(
    theta: &MlpParams,
    spec: &MlpSpec,
    norm: &Normalizer,
    batch: &[&Transition],
    squared: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::State("dyn_loss on empty batch".into()));
    }
    let mut total = 0.0;
    for t in batch {
        let pred = predict_next(theta, spec, norm, &t.s, &t.a)?;
        let sq: f64 = pred.iter().zip(&t.s_next).map(|(p, y)| (p - y) * (p - y)).sum();
        total += if squared { sq } else { sq.sqrt() };
    }
    Ok(total / batch.len() as f64)
}

/// Norms below this contribute a zero gradient to the unsquared loss
/// (the norm is not differentiable at zero).
const NORM_GUARD: f64 = 1e-12;

/// Dynamics loss and its gradient with respect to `theta`, accumulated into
/// `grad_theta`. Returns the loss.
pub fn dyn_loss_grad(
    theta: &MlpParams,
    spec: &MlpSpec,
    norm: &Normalizer,
    batch: &[&Transition],
    squared: bool,
    grad_theta: &mut [f64],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::State("dyn_loss_grad on empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for t in batch {
        let x = norm.apply(&t.s, &t.a);
        let delta = mlp_forward(theta, spec, &x)?;
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
        } else if nrm > NORM_GUARD {
            err.iter().map(|e| e / nrm * scale).collect()
        } else {
            continue;
        };
        mlp_grad_accumulate(theta, spec, &x, &upstream, grad_theta)?;
    }
    Ok(total * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::xavier_init;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(s: Vec<f64>, a: Vec<f64>, s_next: Vec<f64>) -> Transition {
        Transition { s, a, s_next }
    }

    #[test]
    fn zero_theta_predicts_no_change() {
        let spec = target_spec(3, 1, vec![8, 8]).unwrap();
        let theta = MlpParams::zeros(&spec);
        let norm = Normalizer::identity(4);
        let s = [0.5, -1.0, 2.0];
        let next = predict_next(&theta, &spec, &norm, &s, &[0.3]).unwrap();
        assert_eq!(next, s.to_vec());
    }

    #[test]
    fn delta_definition_holds() {
        let spec = target_spec(2, 1, vec![4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = xavier_init(&spec, &mut rng);
        let norm = Normalizer::identity(3);
        let s = [0.2, 0.7];
        let a = [0.1];
        let next = predict_next(&theta, &spec, &norm, &s, &a).unwrap();
        let raw = mlp_forward(&theta, &spec, &norm.apply(&s, &a)).unwrap();
        for i in 0..2 {
            assert_relative_eq!(next[i] - s[i], raw[i]);
        }
    }

    #[test]
    fn dyn_loss_three_four_five() {
        let spec = target_spec(2, 1, vec![4]).unwrap();
        let theta = MlpParams::zeros(&spec);
        let norm = Normalizer::identity(3);
        // zero model predicts s; error vector is s - s_next
        let t1 = tr(vec![3.0, 4.0], vec![0.0], vec![0.0, 0.0]);
        let batch = [&t1];
        assert_relative_eq!(dyn_loss(&theta, &spec, &norm, &batch, false).unwrap(), 5.0);
    }

    #[test]
    fn dyn_loss_mean_convention() {
        let spec = target_spec(2, 1, vec![4]).unwrap();
        let theta = MlpParams::zeros(&spec);
        let norm = Normalizer::identity(3);
        let t1 = tr(vec![3.0, 4.0], vec![0.0], vec![0.0, 0.0]); // error 5
        let t2 = tr(vec![1.0, 1.0], vec![0.0], vec![1.0, 1.0]); // error 0
        let batch = [&t1, &t2];
        assert_relative_eq!(dyn_loss(&theta, &spec, &norm, &batch, false).unwrap(), 2.5);
    }

    #[test]
    fn dyn_loss_zero_iff_perfect() {
        let spec = target_spec(2, 1, vec![4]).unwrap();
        let theta = MlpParams::zeros(&spec);
        let norm = Normalizer::identity(3);
        let t = tr(vec![0.4, -0.1], vec![0.0], vec![0.4, -0.1]);
        assert_eq!(dyn_loss(&theta, &spec, &norm, &[&t], false).unwrap(), 0.0);
        assert!(matches!(dyn_loss(&theta, &spec, &norm, &[], false), Err(Error::State(_))));
    }

    #[test]
    fn dyn_loss_grad_matches_finite_differences() {
        let spec = target_spec(3, 2, vec![6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta = xavier_init(&spec, &mut rng);
        let norm = Normalizer::identity(5);
        let batch_owned: Vec<Transition> = (0..4)
            .map(|_| {
                tr(
                    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let batch: Vec<&Transition> = batch_owned.iter().collect();
        for squared in [false, true] {
            let mut grad = vec![0.0; theta.flat.len()];
            let loss = dyn_loss_grad(&theta, &spec, &norm, &batch, squared, &mut grad).unwrap();
            assert_relative_eq!(loss, dyn_loss(&theta, &spec, &norm, &batch, squared).unwrap());
            let h = 1e-5;
            for i in (0..theta.flat.len()).step_by(7) {
                let mut p1 = theta.clone();
                p1.flat[i] += h;
                let mut p2 = theta.clone();
                p2.flat[i] -= h;
                let fd = (dyn_loss(&p1, &spec, &norm, &batch, squared).unwrap()
                    - dyn_loss(&p2, &spec, &norm, &batch, squared).unwrap())
                    / (2.0 * h);
                let denom = fd.abs().max(grad[i].abs()).max(1e-6);
                assert!((fd - grad[i]).abs() / denom <= 1e-4, "i={i} fd={fd} an={}", grad[i]);
            }
        }
    }

    #[test]
    fn normalizer_floors_constant_columns() {
        let mut buf = ReplayBuffer::new(1, 100);
        for i in 0..10 {
            buf.add(tr(vec![1.0, i as f64], vec![0.5], vec![0.0, 0.0]));
        }
        let norm = Normalizer::fit(&buf).unwrap();
        // constant columns normalize to exactly zero
        let x = norm.apply(&[1.0, 4.5], &[0.5]);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[2], 0.0);
        assert!(norm.std[0] >= STD_FLOOR);
    }

    #[test]
    fn normalizer_standardizes_gaussian_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut buf = ReplayBuffer::new(1, 100_000);
        for _ in 0..20_000 {
            let v: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            buf.add(tr(vec![v], vec![0.0], vec![0.0]));
        }
        let norm = Normalizer::fit(&buf).unwrap();
        let normalized: Vec<f64> = buf.transitions().iter().map(|t| norm.apply(&t.s, &t.a)[0]).collect();
        let n = normalized.len() as f64;
        let mean = normalized.iter().sum::<f64>() / n;
        let std = (normalized.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.02);
        assert!((std - 1.0).abs() < 0.05);
    }

    #[test]
    fn normalizer_fit_is_idempotent() {
        let mut buf = ReplayBuffer::new(1, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..32 {
            buf.add(tr(
                vec![rng.gen_range(-1.0..1.0)],
                vec![rng.gen_range(-1.0..1.0)],
                vec![0.0],
            ));
        }
        let a = Normalizer::fit(&buf).unwrap();
        let b = Normalizer::fit(&buf).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_with_replacement_from_singleton() {
        let mut buf = ReplayBuffer::new(1, 10);
        buf.add(tr(vec![1.0], vec![2.0], vec![3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = buf.sample(100, &mut rng).unwrap();
        assert_eq!(batch.len(), 100);
        assert!(batch.iter().all(|t| t.s == vec![1.0]));
    }

    #[test]
    fn sample_is_seed_deterministic() {
        let mut buf = ReplayBuffer::new(1, 100);
        for i in 0..50 {
            buf.add(tr(vec![i as f64], vec![0.0], vec![0.0]));
        }
        let a: Vec<f64> = buf
            .sample(20, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap()
            .iter()
            .map(|t| t.s[0])
            .collect();
        let b: Vec<f64> = buf
            .sample(20, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap()
            .iter()
            .map(|t| t.s[0])
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_empty_buffer_errors() {
        let buf = ReplayBuffer::new(1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::State(_))));
    }

    #[test]
    fn sample_frequencies_are_uniform() {
        let mut buf = ReplayBuffer::new(1, 100);
        let n_items = 10usize;
        for i in 0..n_items {
            buf.add(tr(vec![i as f64], vec![0.0], vec![0.0]));
        }
        let draws = 100_000usize;
        let mut counts = vec![0usize; n_items];
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for t in buf.sample(draws, &mut rng).unwrap() {
            counts[t.s[0] as usize] += 1;
        }
        // 3-sigma binomial bound around draws/n
        let p = 1.0 / n_items as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let expect = draws as f64 * p;
        for c in counts {
            assert!((c as f64 - expect).abs() <= 3.0 * sigma, "count {c} vs {expect}");
        }
    }
}
