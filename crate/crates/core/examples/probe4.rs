//! Scratch probe: how often do random episodes actually move a block?
use crl_core::envs::{make_task_sequence, EnvKind};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let envs = make_task_sequence(EnvKind::Slide);
    let env = &envs[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut contact = 0usize;
    let mut total = 0usize;
    let mut max_move = 0.0f64;
    for _ in 0..20 {
        let mut s = env.reset();
        for _ in 0..env.episode_len() {
            let a: Vec<f64> = (0..env.action_dim())
                .map(|_| rng.gen_range(-0.1..0.1))
                .collect();
            let (s2, _r) = env.step(&s, &a);
            let block_delta: f64 = s2[2..18]
                .iter()
                .zip(&s[2..18])
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if block_delta > 1e-9 {
                contact += 1;
            }
            max_move = max_move.max(block_delta);
            total += 1;
        }
    }
    println!("contact transitions: {contact}/{total}  max block move {max_move:.4}");
    let s0 = env.reset();
    println!("reset state: {s0:?}");
}
