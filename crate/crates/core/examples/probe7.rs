//! Scratch probe: model-quality comparison on a fixed exploration buffer.
//! Trains each method on identical data, then evaluates MPC reward and
//! one-step prediction error on contact vs free transitions.
use crl_core::config::{Method, Profile, RunConfig};
use crl_core::dynamics::{Normalizer, ReplayBuffer, Transition};
use crl_core::envs::{make_task_sequence, EnvKind};
use crl_core::learner::Learner;
use crl_core::planner::{mpc_episode, random_episode, CemConfig, DynModel};
use crl_core::rng::SeedStream;

fn main() {
    let mut cfg = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
    cfg.target_hidden = vec![64, 64];
    cfg.hyper_hidden = vec![16, 16];
    let envs = make_task_sequence(EnvKind::Slide);
    let env = envs[0].as_ref();
    let ss = SeedStream::new(0);
    let mut buffer = ReplayBuffer::new(0, cfg.buffer_capacity);
    for ep in 0..40 {
        let trace = random_episode(env, env.episode_len(), &mut ss.stream("env", &[0, ep]));
        for tr in trace.transitions {
            buffer.add(tr);
        }
    }
    // held-out episodes for error measurement
    let mut held = Vec::new();
    for ep in 100..120 {
        let trace = random_episode(env, env.episode_len(), &mut ss.stream("env", &[0, ep]));
        held.extend(trace.transitions);
    }

    for method in [Method::Hypercrl, Method::Finetune] {
        cfg.method = method;
        let mut rng = ss.stream("init", &[]);
        let mut learner = Learner::new(&cfg, env.state_dim(), env.action_dim(), &mut rng).unwrap();
        learner.start_task(0, &mut ss.stream("embed", &[0])).unwrap();
        learner.set_normalizer(Normalizer::fit(&buffer).unwrap()).unwrap();
        let mut train_rng = ss.stream("train", &[0, 0]);
        for _ in 0..6000 {
            learner.train_step(&buffer, &mut train_rng).unwrap();
        }
        let model = learner.model_for_task(0).unwrap();

        // split one-step error by contact vs free
        let (mut se_c, mut n_c, mut se_f, mut n_f) = (0.0, 0usize, 0.0, 0usize);
        for tr in &held {
            let pred = model.predict(&tr.s, &tr.a).unwrap();
            let se: f64 =
                pred.iter().zip(&tr.s_next).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
            let contact = tr.s[2..]
                .iter()
                .zip(&tr.s_next[2..])
                .any(|(a, b)| (a - b).abs() > 1e-9);
            if contact {
                se_c += se;
                n_c += 1;
            } else {
                se_f += se;
                n_f += 1;
            }
        }
        let cem = CemConfig::for_env(env, cfg.cem_horizon, cfg.cem_population);
        let mut rewards = Vec::new();
        for ep in 0..3u64 {
            let tr = mpc_episode(env, &model, &cem, env.episode_len(), &mut ss.stream("eval", &[0, ep]))
                .unwrap();
            rewards.push(tr.total_reward);
        }
        println!(
            "{:9}: rms contact {:.4} ({} samples)  rms free {:.5} ({})  mpc rewards {:?}",
            method.as_str(),
            (se_c / n_c as f64).sqrt(),
            n_c,
            (se_f / n_f as f64).sqrt(),
            n_f,
            rewards.iter().map(|r| (r * 10.0).round() / 10.0).collect::<Vec<_>>()
        );
    }
}
