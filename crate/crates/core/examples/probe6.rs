//! Scratch probe: hypernet-path single-task learning quality (task 0 only).
use crl_core::config::{Profile, RunConfig};
use crl_core::envs::{make_task_sequence, EnvKind};
use crl_core::runner::{advance_task, init_run};
use std::time::Instant;

fn main() {
    let base = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
    let grid: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = vec![
        ("sq h16 S400 pop120", Box::new(|c: &mut RunConfig| {
            c.target_hidden = vec![64, 64];
            c.hyper_hidden = vec![16, 16];
            c.schedule.s = 400;
            c.cem_population = 120;
            c.squared_loss = true;
        })),
        ("sq h16 S400 pop60", Box::new(|c| {
            c.target_hidden = vec![64, 64];
            c.hyper_hidden = vec![16, 16];
            c.schedule.s = 400;
            c.squared_loss = true;
        })),
        ("sq h24 S400 pop120", Box::new(|c| {
            c.target_hidden = vec![64, 64];
            c.schedule.s = 400;
            c.cem_population = 120;
            c.squared_loss = true;
        })),
        ("sq h16 S600 pop120", Box::new(|c| {
            c.target_hidden = vec![64, 64];
            c.hyper_hidden = vec![16, 16];
            c.schedule.s = 600;
            c.cem_population = 120;
            c.squared_loss = true;
        })),
    ];
    let envs = make_task_sequence(EnvKind::Slide);
    for (name, tweak) in grid {
        let mut cfg = base.clone();
        cfg.eval_episodes = 3;
        tweak(&mut cfg);
        let t0 = Instant::now();
        let mut vals = Vec::new();
        for seed in 0..3u64 {
            let mut st = init_run(&cfg, seed).unwrap();
            advance_task(&cfg, &envs, &mut st).unwrap();
            vals.push(st.record.eval[0][0].unwrap());
        }
        println!(
            "{name:30} -> evals {:7.2} {:7.2} {:7.2}   ({:.1}s/run)",
            vals[0],
            vals[1],
            vals[2],
            t0.elapsed().as_secs_f64() / 3.0
        );
    }
}
