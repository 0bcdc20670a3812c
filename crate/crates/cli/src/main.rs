//! `crl` — continual model-based RL runs from the command line.
//!
//! Subcommands: `train` one (env, method, seed) sequence with task-boundary
//! checkpoints, `eval` a saved checkpoint, `compare` a method set across
//! seeds, `baseline` the from-scratch single-task references, and `report`
//! to render a summary CSV as a plain-text table.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use crl_core::checkpoint::{self, Checkpoint};
use crl_core::config::{ConfigPatch, RunConfig, SchedulePatch};
use crl_core::envs::{make_task_sequence, EnvKind};
use crl_core::report::{
    fmt_sig, metrics_table, render_summary_csv, render_text_report, render_trace_csv,
    MetricsTable, SummaryRow,
};
use crl_core::runner::{advance_task, init_run, run_single_task, RunState};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "crl", version, about = "continual model-based RL toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config overrides shared by the run-producing subcommands. Precedence:
/// built-in defaults, then --config file, then these flags.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML config file applied on top of the built-in defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Schedule profile: desk (default) or paper
    #[arg(long)]
    profile: Option<String>,
    /// Random-policy episodes per task
    #[arg(long)]
    p: Option<usize>,
    /// Planned episodes per task
    #[arg(long)]
    m: Option<usize>,
    /// Steps per episode
    #[arg(long)]
    k: Option<usize>,
    /// Gradient steps per planned episode
    #[arg(long)]
    s: Option<usize>,
    /// Batch size
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    alpha_theta: Option<f64>,
    #[arg(long)]
    alpha_e: Option<f64>,
    #[arg(long)]
    beta_reg: Option<f64>,
    #[arg(long)]
    cem_population: Option<usize>,
    #[arg(long)]
    cem_horizon: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Output directory (run directories are created inside it)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method on one environment's task sequence
    Train {
        #[arg(long)]
        env: String,
        /// hypercrl | finetune | ewc | si | coreset | multitask | hypercrl-mt | single
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resume from a task-boundary checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on every task trained so far
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run several methods across seeds and emit the summary table
    Compare {
        #[arg(long)]
        env: String,
        /// Comma-separated method list
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Comma-separated seed list
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// From-scratch single-task reference returns r*
    Baseline {
        #[arg(long)]
        env: String,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a summary CSV produced by `compare` as a plain-text table
    Report {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn patch_from(overrides: &Overrides, method: Option<&str>) -> ConfigPatch {
    let schedule = SchedulePatch {
        p: overrides.p,
        m: overrides.m,
        k: overrides.k,
        s: overrides.s,
        b: overrides.b,
        alpha_theta: overrides.alpha_theta,
        alpha_e: overrides.alpha_e,
    };
    let has_schedule = schedule != SchedulePatch::default();
    ConfigPatch {
        env: None,
        method: method.map(str::to_owned),
        seeds: None,
        profile: overrides.profile.clone(),
        schedule: has_schedule.then_some(schedule),
        cem_population: overrides.cem_population,
        cem_horizon: overrides.cem_horizon,
        cem_iterations: None,
        cem_elite_frac: None,
        explore_std: None,
        beta_reg: overrides.beta_reg,
        target_hidden: None,
        hyper_hidden: None,
        eval_episodes: overrides.eval_episodes,
        squared_loss: None,
        ewc_lambda: None,
        si_c: None,
        si_xi: None,
        buffer_capacity: None,
        output_dir: overrides.out.as_ref().map(|p| p.display().to_string()),
    }
}

fn resolve(env: &str, overrides: &Overrides, method: Option<&str>) -> Result<RunConfig> {
    let env = EnvKind::parse(env)?;
    let file_body = match &overrides.config {
        Some(path) => Some(
            fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?,
        ),
        None => None,
    };
    let patch = patch_from(overrides, method);
    Ok(RunConfig::resolve(env, file_body.as_deref(), &patch)?)
}

fn run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    PathBuf::from(&cfg.output_dir).join(format!(
        "{}-{}-seed{}",
        cfg.env.as_str(),
        cfg.method.as_str(),
        seed
    ))
}

fn prepare_run_dir(cfg: &RunConfig, seed: u64) -> Result<PathBuf> {
    let dir = run_dir(cfg, seed);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

fn train_one(cfg: &RunConfig, seed: u64, resume: Option<&Path>) -> Result<RunState> {
    let dir = prepare_run_dir(cfg, seed)?;
    let envs = make_task_sequence(cfg.env);
    let mut state = match resume {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            if &ckpt.config != cfg {
                bail!(
                    "checkpoint {} was written with a different config; \
                     rerun with the same flags or config file",
                    path.display()
                );
            }
            if ckpt.state.record.seed != seed {
                bail!("checkpoint seed {} does not match --seed {seed}", ckpt.state.record.seed);
            }
            ckpt.state
        }
        None => init_run(cfg, seed)?,
    };
    while state.next_task < envs.len() {
        advance_task(cfg, &envs, &mut state)?;
        let ckpt = Checkpoint { config: cfg.clone(), state: state.clone() };
        checkpoint::save(&dir.join(format!("task{}.ckpt", state.next_task)), &ckpt)?;
    }
    fs::write(dir.join("trace.csv"), render_trace_csv(&state.record))?;
    checkpoint::save(&dir.join("final.ckpt"), &Checkpoint {
        config: cfg.clone(),
        state: state.clone(),
    })?;
    Ok(state)
}

fn cmd_train(env: &str, method: &str, seed: u64, resume: Option<&Path>, ov: &Overrides) -> Result<()> {
    let cfg = resolve(env, ov, Some(method))?;
    let state = train_one(&cfg, seed, resume)?;
    let dir = run_dir(&cfg, seed);
    println!(
        "trained {} on {} (seed {seed}): {} episodes, {} env steps, outputs in {}",
        cfg.method.as_str(),
        cfg.env.as_str(),
        state.record.episodes.len(),
        state.record.train_env_steps,
        dir.display()
    );
    if state.record.hygiene_violations > 0 {
        bail!("data-hygiene violations detected: {}", state.record.hygiene_violations);
    }
    Ok(())
}

fn cmd_eval(path: &Path) -> Result<()> {
    let ckpt = checkpoint::load(path)?;
    let rec = &ckpt.state.record;
    println!(
        "{} on {} (seed {}), {} task(s) finished",
        rec.method.as_str(),
        rec.env.as_str(),
        rec.seed,
        ckpt.state.next_task
    );
    println!("eval matrix r[i][j] (mean return on task i after task j):");
    for (i, row) in rec.eval.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map_or_else(|| "-".into(), |v| fmt_sig(v, 6)))
            .collect();
        println!("  task {}: {}", i + 1, cells.join("  "));
    }
    if let Some(d) = rec.hyper_drift {
        println!("hypernetwork output drift on task 1 embedding: {}", fmt_sig(d, 6));
    }
    Ok(())
}

fn reference_returns(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<f64>> {
    let t = cfg.env.num_tasks();
    let mut rstar = Vec::with_capacity(t);
    for i in 0..t {
        let mut total = 0.0;
        for &seed in seeds {
            total += run_single_task(cfg, seed, i)?;
        }
        rstar.push(total / seeds.len() as f64);
    }
    Ok(rstar)
}

fn cmd_compare(env: &str, methods: &[String], seeds: &[u64], ov: &Overrides) -> Result<()> {
    if methods.is_empty() || seeds.is_empty() {
        bail!("compare needs at least one method and one seed");
    }
    let mut entries = Vec::new();
    let mut base_cfg = None;
    for name in methods {
        let cfg = resolve(env, ov, Some(name))?;
        let mut records = Vec::new();
        for &seed in seeds {
            let state = train_one(&cfg, seed, None)?;
            records.push(state.record);
        }
        entries.push((cfg.method, records));
        base_cfg.get_or_insert(cfg);
    }
    let cfg = base_cfg.unwrap();
    let rstar = reference_returns(&cfg, seeds)?;
    let table = metrics_table(cfg.env, &entries, &rstar)?;
    let out_dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("summary.csv"), render_summary_csv(&table))?;
    let text = render_text_report(&table);
    fs::write(out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_baseline(env: &str, seeds: &[u64], ov: &Overrides) -> Result<()> {
    let cfg = resolve(env, ov, Some("single"))?;
    let out_dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out_dir)?;
    let mut csv = String::from("task,seed,reward\n");
    for i in 0..cfg.env.num_tasks() {
        for &seed in seeds {
            let r = run_single_task(&cfg, seed, i)?;
            csv.push_str(&format!("{},{},{}\n", i + 1, seed, fmt_sig(r, 6)));
        }
    }
    let path = out_dir.join(format!("{}-single-task.csv", cfg.env.as_str()));
    fs::write(&path, &csv)?;
    print!("{csv}");
    println!("written to {}", path.display());
    Ok(())
}

/// Parse a summary CSV (the `compare` output schema) back into a table.
fn parse_summary_csv(body: &str, env: EnvKind, seeds: usize) -> Result<MetricsTable> {
    let mut lines = body.lines();
    match lines.next() {
        Some("method,metric,task,mean,std") => {}
        other => bail!("unexpected summary header: {other:?}"),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            bail!("summary line {}: expected 5 fields, found {}", n + 2, parts.len());
        }
        rows.push(SummaryRow {
            method: parts[0].into(),
            metric: parts[1].into(),
            task: parts[2].into(),
            mean: parts[3].into(),
            std: parts[4].into(),
        });
    }
    Ok(MetricsTable { env, seeds, rows })
}

fn cmd_report(summary: &Path, env: &str, seeds: usize, out: Option<&Path>) -> Result<()> {
    let body = fs::read_to_string(summary)
        .with_context(|| format!("reading {}", summary.display()))?;
    let table = parse_summary_csv(&body, EnvKind::parse(env)?, seeds)?;
    let text = render_text_report(&table);
    match out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { env, method, seed, resume, overrides } => {
            cmd_train(&env, &method, seed, resume.as_deref(), &overrides)
        }
        Command::Eval { checkpoint } => cmd_eval(&checkpoint),
        Command::Compare { env, methods, seeds, overrides } => {
            cmd_compare(&env, &methods, &seeds, &overrides)
        }
        Command::Baseline { env, seeds, overrides } => cmd_baseline(&env, &seeds, &overrides),
        Command::Report { summary, env, seeds, out } => {
            cmd_report(&summary, &env, seeds, out.as_deref())
        }
    }
}
