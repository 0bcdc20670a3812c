//! Hot-path benchmarks: network forward/backward passes, hypernetwork weight
//! generation, one full CEM planning call, and raw environment stepping.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use crl_core::dynamics::{dyn_loss_grad, target_spec, Normalizer, Transition};
use crl_core::envs::{make_task_sequence, EnvKind};
use crl_core::hypernet::HypernetState;
use crl_core::nn::{mlp_forward, xavier_init, Activation};
use crl_core::planner::{cem_plan, CemConfig, EnvModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = target_spec(20, 2, vec![200, 200]).unwrap();
    let theta = xavier_init(&spec, &mut rng);
    let x: Vec<f64> = (0..22).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("mlp_forward_200x200", |b| {
        b.iter(|| mlp_forward(black_box(&theta), &spec, black_box(&x)).unwrap())
    });

    let norm = Normalizer::identity(22);
    let batch_owned: Vec<Transition> = (0..32)
        .map(|_| Transition {
            s: (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            a: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            s_next: (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let batch: Vec<&Transition> = batch_owned.iter().collect();
    c.bench_function("dyn_loss_grad_b32_200x200", |b| {
        b.iter(|| {
            let mut grad = vec![0.0; theta.flat.len()];
            dyn_loss_grad(black_box(&theta), &spec, &norm, &batch, false, &mut grad).unwrap()
        })
    });
}

fn bench_hypernet_generate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tspec = target_spec(20, 2, vec![32, 32]).unwrap();
    let mut st = HypernetState::new(vec![50, 50], Activation::Relu, tspec, 0.5, &mut rng).unwrap();
    st.push_task_embedding(&mut rng);
    let e = st.current_embedding().unwrap().clone();
    c.bench_function("hypernet_generate_50x50_to_32x32", |b| {
        b.iter(|| st.generate(black_box(&e)).unwrap())
    });
}

fn bench_cem(c: &mut Criterion) {
    let envs = make_task_sequence(EnvKind::Slide);
    let env = envs[0].as_ref();
    let model = EnvModel(env);
    let cfg = CemConfig::for_env(env, 8, 60);
    let s0 = env.reset();
    c.bench_function("cem_plan_slide_pop60_h8", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            cem_plan(&model, &|s, a| env.reward(s, a), black_box(&s0), &cfg, None, &mut rng)
                .unwrap()
        })
    });
}

fn bench_env_step(c: &mut Criterion) {
    for kind in [EnvKind::Slide, EnvKind::Push, EnvKind::Latch] {
        let envs = make_task_sequence(kind);
        let env = envs[1].as_ref();
        let s = env.reset();
        let a: Vec<f64> = env
            .action_low()
            .iter()
            .zip(env.action_high())
            .map(|(l, h)| 0.3 * l + 0.7 * h)
            .collect();
        c.bench_function(&format!("env_step_{}", kind.as_str()), |b| {
            b.iter(|| env.step(black_box(&s), black_box(&a)))
        });
    }
}

criterion_group!(benches, bench_mlp, bench_hypernet_generate, bench_cem, bench_env_step);
criterion_main!(benches);
