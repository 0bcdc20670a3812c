//! Scratch probe: single-task eval reward as a function of the desk schedule.
use crl_core::config::{Method, Profile, RunConfig};
use crl_core::envs::EnvKind;
use crl_core::runner::run_single_task;

fn main() {
    let base = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
    let variants: Vec<(&str, RunConfig)> = vec![
        ("desk default", base.clone()),
        ("S=600", {
            let mut c = base.clone();
            c.schedule.s = 600;
            c
        }),
        ("M=30,S=400", {
            let mut c = base.clone();
            c.schedule.m = 30;
            c.schedule.s = 400;
            c
        }),
        ("P=10,M=20,S=400,B=64", {
            let mut c = base.clone();
            c.schedule.p = 10;
            c.schedule.m = 20;
            c.schedule.s = 400;
            c.schedule.b = 64;
            c
        }),
        ("bigger net 64x64, S=400", {
            let mut c = base.clone();
            c.target_hidden = vec![64, 64];
            c.schedule.s = 400;
            c
        }),
        ("squared loss, S=400", {
            let mut c = base.clone();
            c.squared_loss = true;
            c.schedule.s = 400;
            c
        }),
    ];
    for (name, mut cfg) in variants {
        cfg.method = Method::Single;
        cfg.eval_episodes = 3;
        let r = run_single_task(&cfg, 0, 0).unwrap();
        println!("{name:28} -> eval {r:8.2}");
    }
}
