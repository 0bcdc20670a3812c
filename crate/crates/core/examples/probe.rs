//! Scratch probe: can CEM/MPC through the true dynamics solve the slide task?
use crl_core::envs::{make_task_sequence, EnvKind};
use crl_core::planner::{mpc_episode, CemConfig, EnvModel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let envs = make_task_sequence(EnvKind::Slide);
    for (h, pop) in [(8usize, 60usize), (8, 200), (12, 200), (15, 500)] {
        for (i, env) in envs.iter().enumerate() {
            let cfg = CemConfig::for_env(env.as_ref(), h, pop);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let model = EnvModel(env.as_ref());
            let tr = mpc_episode(env.as_ref(), &model, &cfg, env.episode_len(), &mut rng).unwrap();
            print!("task{i}: {:7.2}  ", tr.total_reward);
        }
        println!("  (h={h}, pop={pop})");
    }
}
