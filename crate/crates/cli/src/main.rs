use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use reality_core::cloud::{read_labels, read_sweep, write_sweep};
use reality_core::layout::{enumerate_frames_with, LayoutOptions};
use reality_core::pipeline::{self, compare_trees, JobConfig, WeatherBlock};
use reality_core::projection::{compute_incidence, project};
use reality_core::{DatasetKind, PointFormat, SensorProfile, WeatherKind};

#[derive(Parser)]
#[command(name = "realitygen", version, about = "Sensor- and weather-adapted LiDAR dataset generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Kitti4,
    Nuscenes5,
}

impl From<FormatArg> for PointFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Kitti4 => PointFormat::Kitti4,
            FormatArg::Nuscenes5 => PointFormat::Nuscenes5,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Semantickitti,
    Nuscenes,
    Voxelscape,
}

impl From<DatasetArg> for DatasetKind {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Semantickitti => DatasetKind::SemanticKitti,
            DatasetArg::Nuscenes => DatasetKind::Nuscenes,
            DatasetArg::Voxelscape => DatasetKind::Voxelscape,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeatherArg {
    Rain,
    Snow,
}

impl From<WeatherArg> for WeatherKind {
    fn from(w: WeatherArg) -> Self {
        match w {
            WeatherArg::Rain => WeatherKind::Rain,
            WeatherArg::Snow => WeatherKind::Snow,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a dataset job described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the worker count from the config.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Check a derived tree (or job output root) against its source.
    Validate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        derived: PathBuf,
        #[arg(long, value_enum, default_value = "semantickitti")]
        dataset: DatasetArg,
    },
    /// Compare intensity statistics of two trees with the same layout.
    Stats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "kitti4")]
        format: FormatArg,
        #[arg(long, default_value = "hdl64")]
        profile: String,
        #[arg(long, default_value_t = 256)]
        bins: usize,
        /// Also write per-frame statistics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Apply one weather draw to a single sweep.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        weather: WeatherArg,
        /// Precipitation rate in mm/h; defaults to 10 for rain, 5 for snow.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "kitti4")]
        format: FormatArg,
        #[arg(long, default_value = "hdl64")]
        profile: String,
        /// Per-point `.label` file; enables material reflectance.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Write the range image of a sweep as a raw debug dump.
    Dump {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "kitti4")]
        format: FormatArg,
        #[arg(long, default_value = "hdl64")]
        profile: String,
    },
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, parallelism } => {
            let mut job = JobConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(n) = parallelism {
                job.parallelism = n;
            }
            let manifest = pipeline::run_job(&job)?;
            let failed = manifest.failed();
            println!("frames={} failed={}", manifest.records.len(), failed);
            println!("manifest={}", job.output_root.join(pipeline::MANIFEST_FILE).display());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Validate {
            source,
            derived,
            dataset,
        } => {
            let layout = enumerate_frames_with(&source, dataset.into(), &LayoutOptions::default())?;
            let report = pipeline::validate_correspondence(&layout, &derived)?;
            print!("{report}");
            if report.is_empty() {
                println!("ok frames={}", layout.len());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Stats {
            a,
            b,
            format,
            profile,
            bins,
            csv,
        } => {
            let profile = SensorProfile::by_name(&profile)?;
            let stats = compare_trees(&a, &b, format.into(), &profile, bins)?;
            for (k, v) in stats.key_values() {
                println!("{k}={v}");
            }
            if let Some(path) = csv {
                fs::write(&path, stats.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Augment {
            input,
            out,
            weather,
            rate,
            seed,
            format,
            profile,
            labels,
        } => {
            if input == out {
                bail!("--out must differ from --in");
            }
            let profile = SensorProfile::by_name(&profile)?;
            let mut cloud = read_sweep(&input, format.into())?;
            if let Some(path) = labels {
                cloud = cloud.with_labels(&read_labels(path)?)?;
            }
            let kind: WeatherKind = weather.into();
            let params = WeatherBlock {
                rate_mm_h: rate,
                ..Default::default()
            }
            .resolve(kind, seed);
            let (augmented, outcome) = pipeline::augment_frame(&cloud, &profile, &params)?;
            write_sweep(&augmented, &out)?;
            let s = outcome.summary();
            info!("wrote {}", out.display());
            println!(
                "weather={} rate={} alpha={:.6e} kept={} relocated={} dropped={}",
                kind.name(),
                params.rate_mm_h,
                outcome.alpha_used(),
                s.kept,
                s.relocated,
                s.dropped
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Dump {
            input,
            out,
            format,
            profile,
        } => {
            let profile = SensorProfile::by_name(&profile)?;
            let cloud = read_sweep(&input, format.into())?;
            let image = compute_incidence(&cloud, &project(&cloud, &profile)?)?;
            fs::write(&out, image.to_debug_bytes()).with_context(|| format!("writing {}", out.display()))?;
            println!("height={} width={} occupied={}", image.height(), image.width(), image.occupied_count());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
