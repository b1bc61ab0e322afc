use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use slsim::benchmark::{export_report_with_overlays, run_flat_wall_with};
use slsim::config::Config;
use slsim::dataset::{generate_dataset_from, inspect_frame};
use slsim::depth::write_intensity_png;
use slsim::sensor::generate_dot_pattern_with_window;
use slsim::viewpoints::ViewpointMode;

/// Structured-light depth sensor simulator.
#[derive(Parser)]
#[command(name = "slsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (or file for `pattern` and `default-config`).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset of depth scans over the configured viewpoints.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Sample this many random viewpoints instead of the configured set.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Flat-wall error benchmark; writes CSV and SVG plots.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated wall distances in meters.
        #[arg(long, value_delimiter = ',')]
        distances: Option<Vec<f64>>,
        /// Comma-separated wall tilts in degrees.
        #[arg(long, value_delimiter = ',')]
        tilts: Option<Vec<f64>>,
        /// Seeds per (distance, tilt) cell.
        #[arg(long)]
        seeds: Option<u32>,
    },
    /// Write the configured dot pattern as an 8-bit PNG.
    Pattern {
        #[command(flatten)]
        common: Common,
    },
    /// Dump every pipeline stage of one frame.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Viewpoint index.
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Print the default config (or write it with --out).
    DefaultConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(Config, PathBuf)> {
    let (mut cfg, base) = match &common.config {
        Some(path) => (
            Config::load(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (Config::default(), PathBuf::from(".")),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    Ok((cfg, base))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, count } => {
            let (mut cfg, base) = load(&common)?;
            if let Some(n) = count {
                if n == 0 {
                    bail!(slsim::Error::Invalid {
                        what: "--count",
                        message: "must be > 0".into(),
                    });
                }
                cfg.viewpoints.mode = ViewpointMode::Random;
                cfg.viewpoints.count = n;
            }
            let summary = generate_dataset_from(cfg, &base, &common.out, None)?;
            println!(
                "{} frames written, {} skipped, {:.2} frames/s",
                summary.frames_written, summary.frames_skipped, summary.frames_per_second
            );
        }
        Command::Benchmark {
            common,
            distances,
            tilts,
            seeds,
        } => {
            let (mut cfg, base) = load(&common)?;
            if let Some(d) = distances {
                cfg.benchmark.distances_m = d;
            }
            if let Some(t) = tilts {
                cfg.benchmark.tilts_deg = t;
            }
            if let Some(s) = seeds {
                cfg.benchmark.seeds = s;
            }
            let sensor = cfg.build_sensor(&base)?;
            let settings = cfg.benchmark_settings();
            settings.validate(&sensor)?;
            info!(
                "benchmark: {} distances x {} tilts x {} seeds",
                settings.distances.len(),
                settings.tilts.len(),
                settings.seeds
            );
            let report = run_flat_wall_with(&sensor, &settings)?;
            let files = export_report_with_overlays(&report, &common.out, &cfg.benchmark.overlays)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Pattern { common } => {
            let (cfg, base) = load(&common)?;
            let p = &cfg.pattern;
            let pattern = match common.seed {
                // --seed picks a fresh generated pattern
                Some(seed) => generate_dot_pattern_with_window(p.side_px, p.dot_density, seed, p.uniqueness_window_px)?,
                None => cfg.build_pattern(&base)?,
            };
            write_intensity_png(pattern.image(), &common.out, false)
                .with_context(|| format!("writing {}", common.out.display()))?;
            info!("lit fraction {:.4}", pattern.lit_fraction());
            println!("{}", common.out.display());
        }
        Command::Inspect { common, frame } => {
            let (cfg, base) = load(&common)?;
            for f in inspect_frame(cfg, &base, frame, &common.out)? {
                println!("{}", f.display());
            }
        }
        Command::DefaultConfig { out } => {
            let text = Config::default().to_toml_string()?;
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

/// Exit status per error category; 1 for anything uncategorized.
fn exit_code(err: &anyhow::Error) -> u8 {
    let category = err
        .chain()
        .find_map(|e| e.downcast_ref::<slsim::Error>())
        .map(slsim::Error::category);
    match category {
        Some("config") => 3,
        Some("io") => 4,
        Some("format") => 5,
        Some("validation") => 6,
        _ if err.chain().any(|e| e.is::<std::io::Error>()) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("slsim: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
