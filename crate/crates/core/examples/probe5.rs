//! Scratch probe: full 5-task retention comparison at desk defaults.
use crl_core::config::{Method, Profile, RunConfig};
use crl_core::envs::EnvKind;
use crl_core::metrics::retention;
use crl_core::runner::run_sequence;
use std::time::Instant;

fn main() {
    let base = RunConfig::defaults(EnvKind::Slide, Profile::Desk);
    for method in [Method::Hypercrl, Method::Finetune] {
        for seed in 0..3u64 {
            let mut cfg = base.clone();
            cfg.method = method;
            let t0 = Instant::now();
            let rec = run_sequence(&cfg, seed).unwrap();
            let diag: Vec<f64> = (0..5).map(|i| rec.eval[i][i].unwrap()).collect();
            let last: Vec<f64> = (0..5).map(|i| rec.eval[i][4].unwrap()).collect();
            let ret = retention(&rec).unwrap();
            println!(
                "{:9} seed {seed}: diag {:?} last {:?} retention {:?} drift {:?}  ({:.0}s)",
                method.as_str(),
                diag.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>(),
                last.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>(),
                ret,
                rec.hyper_drift,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
