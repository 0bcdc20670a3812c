//! Scratch probe: dissect a failing hypernet seed — per-session training
//! episode rewards, buffer contact fraction, and model error on contact
//! transitions after each session.
use crl_core::config::{Profile, RunConfig};
use crl_core::dynamics::{Normalizer, ReplayBuffer};
use crl_core::envs::{make_task_sequence, EnvKind};
use crl_core::learner::Learner;
use crl_core::planner::{mpc_episode, random_episode, CemConfig, DynModel};
use crl_core::rng::SeedStream;

fn main() {
    let mut cfg = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
    cfg.target_hidden = vec![64, 64];
    cfg.hyper_hidden = vec![16, 16];
    cfg.schedule.s = 400;
    cfg.cem_population = 120;
    let envs = make_task_sequence(EnvKind::Slide);
    let env = envs[0].as_ref();

    for seed in [0u64, 1, 2] {
        let ss = SeedStream::new(seed);
        let mut rng = ss.stream("init", &[]);
        let mut learner =
            Learner::new(&cfg, env.state_dim(), env.action_dim(), &mut rng).unwrap();
        learner.start_task(0, &mut ss.stream("embed", &[0])).unwrap();
        let mut buffer = ReplayBuffer::new(0, cfg.buffer_capacity);
        for ep in 0..cfg.schedule.p {
            let tr = random_episode(env, cfg.schedule.k, &mut ss.stream("env", &[0, ep as u64]));
            for t in tr.transitions {
                buffer.add(t);
            }
        }
        let cem = CemConfig {
            iterations: cfg.cem_iterations,
            elite_frac: cfg.cem_elite_frac,
            ..CemConfig::for_env(env, cfg.cem_horizon, cfg.cem_population)
        };
        println!("--- seed {seed} ---");
        for session in 0..cfg.schedule.m {
            learner.set_normalizer(Normalizer::fit(&buffer).unwrap()).unwrap();
            let mut train_rng = ss.stream("train", &[0, session as u64]);
            let mut last_loss = f64::NAN;
            for _ in 0..cfg.schedule.s {
                last_loss = learner.train_step(&buffer, &mut train_rng).unwrap();
            }
            let model = learner.model_for_task(0).unwrap();
            // error on contact transitions currently in the buffer
            let (mut se, mut n, mut contacts) = (0.0, 0usize, 0usize);
            for t in buffer.transitions() {
                let moved = t.s[2..]
                    .iter()
                    .zip(&t.s_next[2..])
                    .any(|(a, b)| (a - b).abs() > 1e-9);
                if moved {
                    contacts += 1;
                    let p = model.predict(&t.s, &t.a).unwrap();
                    se += p
                        .iter()
                        .zip(&t.s_next)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>();
                    n += 1;
                }
            }
            let tr = mpc_episode(env, &model, &cem, cfg.schedule.k, &mut ss.stream("cem", &[0, session as u64])).unwrap();
            let ep_contacts = tr
                .transitions
                .iter()
                .filter(|t| {
                    t.s[2..].iter().zip(&t.s_next[2..]).any(|(a, b)| (a - b).abs() > 1e-9)
                })
                .count();
            println!(
                "s{session:2}: loss {last_loss:.4}  buf contacts {contacts:4}  contact rms {:.4}  ep reward {:7.2}  ep contacts {ep_contacts:2}",
                (se / n.max(1) as f64).sqrt(),
                tr.total_reward,
            );
            for t in tr.transitions {
                buffer.add(t);
            }
        }
    }
}
