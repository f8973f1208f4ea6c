//! `edgecache` command-line driver.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use edgecache::config::{RawConfig, ScheduleSource, TABLE1_CONFIG};
use edgecache::metrics::{
    eval_seed, scenario_table, summarize, summary_markdown, write_report, ReportFormat, TABLE1,
};
use edgecache::policies::baseline;
use edgecache::rng::STREAM_POLICY;
use edgecache::sac::{load_agent, save_agent, train, write_curve, AgentPolicy, TrainWorld};
use edgecache::shift_demo::{replay_pair, shift_demo, write_series, write_stats, ShiftDemoConfig};
use edgecache::workload::{calibrate_zipf, effective_contents, generate_trace};
use edgecache::{evaluate, Error, ExperimentConfig, PolicyKind, PopularityModel, SimRng};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "edgecache", version, about = "Edge-cache simulator with a discrete soft actor-critic agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds, comma separated; overrides `seeds`.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy name; overrides `policy`.
    #[arg(long)]
    policy: Option<String>,
    /// Agent checkpoint to load.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per seed; writes checkpoints and training curves.
    Train(Common),
    /// Evaluate a baseline or a checkpoint over every seed.
    Evaluate(Common),
    /// Reproduce the four storage/effective-contents scenarios.
    Table1(Common),
    /// RL vs window-LFU around a popularity shift.
    ShiftDemo(Common),
    /// Find the Zipf exponent for an effective-contents target.
    Calibrate {
        #[arg(long, default_value_t = 1000)]
        catalog_size: usize,
        #[arg(long, default_value_t = 0.05)]
        target: f64,
        #[arg(long, default_value_t = 0.8)]
        traffic_share: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Parse { .. } | Error::InvalidParameter(_) => {
                    ExitCode::from(EXIT_CONFIG)
                }
                _ => ExitCode::from(EXIT_RUNTIME),
            }
        }
    }
}

fn run(command: Command) -> edgecache::Result<()> {
    match command {
        Command::Train(c) => cmd_train(&c),
        Command::Evaluate(c) => cmd_evaluate(&c),
        Command::Table1(c) => cmd_table1(&c),
        Command::ShiftDemo(c) => cmd_shift_demo(&c),
        Command::Calibrate {
            catalog_size,
            target,
            traffic_share,
        } => cmd_calibrate(catalog_size, target, traffic_share),
    }
}

/// Resolved config plus the directory relative schedule paths resolve from.
struct Loaded {
    config: ExperimentConfig,
    base: Option<PathBuf>,
}

fn load(common: &Common, fallback: Option<&str>) -> edgecache::Result<Loaded> {
    let (text, base) = match (&common.config, fallback) {
        (Some(path), _) => (
            fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?,
            path.parent().map(Path::to_path_buf),
        ),
        (None, Some(text)) => (text.to_string(), None),
        (None, None) => return Err(Error::config("config", "--config is required")),
    };
    let mut raw = RawConfig::parse(&text)?;
    if let Some(seeds) = &common.seed {
        raw.set("seeds", seeds)?;
    }
    if let Some(out) = &common.out {
        raw.set("out", &out.display().to_string())?;
    }
    if let Some(policy) = &common.policy {
        raw.set("policy", policy)?;
    }
    for o in &common.overrides {
        raw.set_assignment(o)?;
    }
    let config = ExperimentConfig::from_raw(&raw)?;
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("resolved_config.txt"), config.to_text())?;
    Ok(Loaded { config, base })
}

fn train_world(config: &ExperimentConfig, model: PopularityModel, base: Option<&Path>, seed: u64) -> edgecache::Result<TrainWorld> {
    Ok(TrainWorld {
        model,
        schedule: config.load_schedule(base)?,
        cache: config.cache_config(),
        train_steps: config.train_steps,
        episode_length: config.episode_length,
        eval_steps: config.curve_eval_steps,
        eval_seed: eval_seed(seed).wrapping_add(1),
    })
}

fn cmd_train(common: &Common) -> edgecache::Result<()> {
    let Loaded { config, base } = load(common, None)?;
    let model = config.model()?;
    info!("zipf exponent {:.6}", model.exponent());
    for &seed in &config.seeds {
        let world = train_world(&config, model.clone(), base.as_deref(), seed)?;
        let train_config = config.train_config(seed);
        let outcome = train(&world, &train_config)?;
        let ckpt = config.out.join(format!("checkpoint_seed{seed}.json"));
        save_agent(&outcome.agent.params, &train_config.hash(config.cache_capacity), &ckpt)?;
        let curve = config.out.join(format!("curve_seed{seed}.csv"));
        write_curve(&outcome.curve, BufWriter::new(fs::File::create(&curve)?))?;
        let last = outcome.curve.last().map_or(f64::NAN, |p| p.greedy_hit_ratio);
        println!("seed {seed}: final greedy hit ratio {last:.4} ({})", ckpt.display());
    }
    Ok(())
}

fn cmd_evaluate(common: &Common) -> edgecache::Result<()> {
    let Loaded { config, base } = load(common, None)?;
    let model = config.model()?;
    let schedule = config.load_schedule(base.as_deref())?;
    let cache = config.cache_config();
    let checkpoint = match config.policy {
        PolicyKind::RlAgent => {
            let path = common
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("checkpoint", "RL_AGENT evaluation needs --checkpoint"))?;
            let ckpt = load_agent(path)?;
            ckpt.check_compatible(config.cache_capacity, Some(&config.train.hash(config.cache_capacity)))?;
            Some(ckpt)
        }
        _ => None,
    };
    let mut reports = Vec::new();
    for &seed in &config.seeds {
        let trace = generate_trace(&model, &schedule, config.trace_length, eval_seed(seed))?;
        let report = match &checkpoint {
            Some(ckpt) => {
                let mut policy = AgentPolicy::greedy(&ckpt.params);
                evaluate(&mut policy, &trace.requests, &model, &cache, config.traffic_share, seed)?
            }
            None => {
                let mut policy = baseline(config.policy, &model, SimRng::with_stream(seed, STREAM_POLICY))?;
                evaluate(policy.as_mut(), &trace.requests, &model, &cache, config.traffic_share, seed)?
            }
        };
        println!("seed {seed}: {} hit ratio {:.4}", report.policy, report.hit_ratio);
        reports.push(report);
    }
    write_report(&reports, &config.out.join("kpi.csv"), ReportFormat::Csv)?;
    write_report(&reports, &config.out.join("kpi.md"), ReportFormat::Markdown)?;
    Ok(())
}

fn cmd_table1(common: &Common) -> edgecache::Result<()> {
    let Loaded { config, .. } = load(common, Some(TABLE1_CONFIG))?;
    if config.schedule != ScheduleSource::None {
        warn!("table1 scenarios are stationary; the shift schedule is ignored");
    }
    let runner = config.table1_runner();
    let rows = scenario_table(&TABLE1, config.catalog_size, config.traffic_share, &runner)?;
    let reports: Vec<_> = rows.iter().flat_map(|r| r.reports.iter().cloned()).collect();
    write_report(&reports, &config.out.join("table1.csv"), ReportFormat::Csv)?;
    write_report(&reports, &config.out.join("table1_runs.md"), ReportFormat::Markdown)?;
    let summary = summary_markdown(&summarize(&rows));
    fs::write(config.out.join("table1.md"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_shift_demo(common: &Common) -> edgecache::Result<()> {
    let Loaded { config, base } = load(common, None)?;
    let model = config.model()?;
    let schedule = config.load_schedule(base.as_deref())?;
    let cache = config.cache_config();
    let demos = match &common.checkpoint {
        Some(path) => {
            let ckpt = load_agent(path)?;
            ckpt.check_compatible(config.cache_capacity, Some(&config.train.hash(config.cache_capacity)))?;
            config
                .seeds
                .iter()
                .map(|&seed| {
                    let trace = generate_trace(&model, &schedule, config.trace_length, eval_seed(seed))?;
                    replay_pair(&ckpt.params, &trace, &schedule, &cache, seed)
                })
                .collect::<edgecache::Result<Vec<_>>>()?
        }
        None => shift_demo(&ShiftDemoConfig::from_experiment(&config, schedule)?)?,
    };
    write_series(&demos, 1, BufWriter::new(fs::File::create(config.out.join("shift_demo.csv"))?))?;
    write_stats(&demos, BufWriter::new(fs::File::create(config.out.join("shift_recovery.csv"))?))?;
    for d in &demos {
        for (kind, s) in d.stats() {
            let rec = s.recovery_steps.map_or("never".to_string(), |r| r.to_string());
            println!(
                "seed {} {kind}: pre-shift {:.4}, recovery {rec} steps, post-shift mean {:.4}",
                d.seed, s.pre_shift, s.post_mean
            );
        }
    }
    Ok(())
}

fn cmd_calibrate(catalog_size: usize, target: f64, traffic_share: f64) -> edgecache::Result<()> {
    let s = calibrate_zipf(catalog_size, target, traffic_share)?;
    let achieved = effective_contents(&PopularityModel::new(catalog_size, s)?, traffic_share)?;
    println!("s = {s:.6}");
    println!("effective contents = {achieved:.4} (target {target}, traffic share {traffic_share}, M = {catalog_size})");
    Ok(())
}
