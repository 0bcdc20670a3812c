//! Scratch probe: net size / training length grid for the desk schedule.
use crl_core::config::{Method, Profile, RunConfig};
use crl_core::envs::EnvKind;
use crl_core::runner::run_single_task;
use std::time::Instant;

fn main() {
    let base = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
    let grid: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = vec![
        ("P10 M20 S600 64x64", Box::new(|c: &mut RunConfig| {
            c.target_hidden = vec![64, 64];
            c.schedule.p = 10;
            c.schedule.m = 20;
            c.schedule.s = 600;
        })),
        ("P10 M20 S600 64x64 pop120", Box::new(|c| {
            c.target_hidden = vec![64, 64];
            c.schedule.p = 10;
            c.schedule.m = 20;
            c.schedule.s = 600;
            c.cem_population = 120;
        })),
        ("P10 M20 S800 64x64", Box::new(|c| {
            c.target_hidden = vec![64, 64];
            c.schedule.p = 10;
            c.schedule.m = 20;
            c.schedule.s = 800;
        })),
        ("P10 M20 S600 96x96", Box::new(|c| {
            c.target_hidden = vec![96, 96];
            c.schedule.p = 10;
            c.schedule.m = 20;
            c.schedule.s = 600;
        })),
        ("P10 M20 S600 64x64 B=64", Box::new(|c| {
            c.target_hidden = vec![64, 64];
            c.schedule.p = 10;
            c.schedule.m = 20;
            c.schedule.s = 600;
            c.schedule.b = 64;
        })),
    ];
    for (name, tweak) in grid {
        let mut cfg = base.clone();
        cfg.method = Method::Single;
        cfg.eval_episodes = 3;
        tweak(&mut cfg);
        let t0 = Instant::now();
        let mut vals = Vec::new();
        for seed in 0..3u64 {
            vals.push(run_single_task(&cfg, seed, 0).unwrap());
        }
        println!(
            "{name:28} -> evals {:7.2} {:7.2} {:7.2}   ({:.1}s/run)",
            vals[0],
            vals[1],
            vals[2],
            t0.elapsed().as_secs_f64() / 3.0
        );
    }
}
