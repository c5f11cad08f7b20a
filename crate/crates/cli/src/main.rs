use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wiclosure::candidates::EvalReport;
use wiclosure::pcm::Gamma;
use wiclosure::pipeline::{self, parse_stages, RunOptions, Stage};
use wiclosure::sim::ScenarioConfig;
use wiclosure::Error;

#[derive(Parser)]
#[command(name = "wiclosure", version, about = "Prune inter-robot loop closure candidates with range and AOA links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages on a scenario config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of simulate,solve,pcm,prune,gate,evaluate.
        #[arg(long)]
        stages: Option<String>,
        /// Gate all pairs instead of the clustered ones.
        #[arg(long)]
        brute_force: bool,
        #[arg(long)]
        d_threshold: Option<f64>,
        /// Fixed PCM threshold, or `chi2:<confidence>`.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Time repeated full runs and count pair evaluations.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Write the timing CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pretty-print a persisted artifact.
    Inspect { path: PathBuf },
}

fn parse_gamma(s: &str) -> Result<Gamma, Error> {
    let bad = || Error::Config(format!("gamma must be a positive number or chi2:<confidence>, got {s:?}"));
    match s.strip_prefix("chi2:") {
        Some(c) => {
            let confidence: f64 = c.parse().map_err(|_| bad())?;
            if confidence > 0.0 && confidence < 1.0 {
                Ok(Gamma::Chi2 { confidence })
            } else {
                Err(bad())
            }
        }
        None => match s.parse::<f64>() {
            Ok(g) if g > 0.0 => Ok(Gamma::Fixed(g)),
            _ => Err(bad()),
        },
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Error> {
    let mut c = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn print_summary(r: &EvalReport) {
    let rows = [
        ("seed", r.seed.to_string()),
        ("total pairs", r.total_pairs.to_string()),
        ("evaluated pairs", r.evaluated_pairs.to_string()),
        ("gated pairs", r.gated_pairs.to_string()),
        ("true pairs", r.true_pairs.to_string()),
        ("true positives", r.true_positives.to_string()),
        ("false positives", r.false_positives.to_string()),
        ("missed true", r.missed_true.to_string()),
        ("rejection rate", format!("{:.4}", r.rejection_rate)),
        ("miss rate", format!("{:.4}", r.miss_rate)),
        ("missed places", format!("{}/{}", r.missed_places, r.true_places)),
        ("ATE (m)", format!("{:.4}", r.ate)),
        ("links used", r.realization.len().to_string()),
    ];
    for (k, v) in rows {
        println!("{k:<16} {v:>14}");
    }
    for (stage, secs) in &r.timings {
        println!("{:<16} {:>12.3} s", format!("t_{stage}"), secs);
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>().map(Error::root) {
        Some(Error::Config(_) | Error::Json { .. } | Error::Parse { .. }) => 2,
        Some(Error::NoConvergence { .. }) => 3,
        _ => 1,
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    pipeline::init_thread_pool()?;
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            stages,
            brute_force,
            d_threshold,
            gamma,
        } => {
            let mut c = load_config(&config, seed)?;
            if let Some(d) = d_threshold {
                c.pipeline.d_threshold = d;
            }
            if let Some(g) = gamma {
                c.pipeline.gamma = parse_gamma(&g)?;
            }
            c.validate()?;
            let stages = match stages {
                Some(s) => parse_stages(&s)?,
                None => Stage::ALL.to_vec(),
            };
            let opts = RunOptions {
                stages,
                out: Some(out.clone()),
                brute_force,
            };
            let a = pipeline::run(&c, &opts)?;
            match &a.report {
                Some(r) => print_summary(r),
                None => println!("stages done; artifacts in {}", out.display()),
            }
        }
        Command::Bench {
            config,
            repeats,
            out,
            seed,
        } => {
            let c = load_config(&config, seed)?;
            let b = pipeline::bench(&c, repeats)?;
            let csv = pipeline::bench_csv(&b);
            match out {
                Some(p) => wiclosure::io::write_text(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Inspect { path } => {
            let text = pipeline::inspect(&path).with_context(|| format!("inspecting {}", path.display()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
