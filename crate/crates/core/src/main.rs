use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sarnav::analysis::{image_metrics, DistortionReport, ShiftPrediction};
use sarnav::backprojection::backproject_with;
use sarnav::container::{load_data, load_image, save_data, save_image, write_atomic};
use sarnav::pipeline::{
    predict, render_image, run_pipeline, scenario_gate, trajectories, write_artifacts,
    CompareReport, PredictedShift,
};
use sarnav::scenario::{load_scenario, parse_error_arg, DataPath, Scenario};
use sarnav::signal::{range_compress, simulate_raw, synthesize_range_compressed};
use sarnav::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sarnav",
    version,
    about = "SAR point-target simulation and navigation-error analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML); the canonical scenario is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial error override: `preset:<name>` or `dp=x,y,z dv=x,y,z dth=x,y,z`.
    #[arg(long)]
    error: Option<String>,
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for interface stability; every command is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Truth,
    Corrupted,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate raw echoes along the true track.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize range-compressed data from the closed form.
    SynthRc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Matched-filter a raw data file.
    Rangecompress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Form an image from range-compressed data.
    Backproject {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "corrupted")]
        trajectory: Which,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the shift of the first target and classify the error's effects.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a test image against a reference image.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline; writes all artifacts into the output directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an image file as an 8-bit PGM.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        db_floor: f64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn scenario(common: &Common) -> Result<Scenario> {
    let mut s = match &common.config {
        Some(path) => load_scenario(path)?,
        None => Scenario::canonical(),
    };
    if let Some(arg) = &common.error {
        let (e, source) = parse_error_arg(arg)?;
        s = s.with_error(e, source)?;
    }
    if common.seed.is_some() {
        log::info!("--seed has no effect; the pipeline is deterministic");
    }
    Ok(s)
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PredictOutput {
    prediction: ShiftPrediction,
    image_shift: PredictedShift,
    distortion: DistortionReport,
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { common, out } => {
            configure_threads(common.threads)?;
            let s = scenario(&common)?;
            let (truth, corrupted) = trajectories(&s)?;
            let gate = scenario_gate(&s, &truth, &corrupted)?;
            save_data(
                &out,
                &simulate_raw(&s.targets, &truth, &s.chirp, &gate, s.slow_time.prf),
            )
        }
        Command::SynthRc { common, out } => {
            configure_threads(common.threads)?;
            let s = scenario(&common)?;
            let (truth, corrupted) = trajectories(&s)?;
            let gate = scenario_gate(&s, &truth, &corrupted)?;
            let rc =
                synthesize_range_compressed(&s.targets, &truth, &s.chirp, &gate, s.slow_time.prf);
            save_data(&out, &rc)
        }
        Command::Rangecompress { common, input, out } => {
            configure_threads(common.threads)?;
            let s = scenario(&common)?;
            save_data(&out, &range_compress(&load_data(&input)?, &s.chirp)?)
        }
        Command::Backproject {
            common,
            input,
            trajectory,
            out,
        } => {
            configure_threads(common.threads)?;
            let s = scenario(&common)?;
            let (truth, corrupted) = trajectories(&s)?;
            let traj = match trajectory {
                Which::Truth => &truth,
                Which::Corrupted => &corrupted,
            };
            let img = backproject_with(
                &load_data(&input)?,
                traj,
                &s.image,
                &s.chirp,
                s.interpolation,
            )?;
            save_image(&out, &img)
        }
        Command::Predict { common, out } => {
            let s = scenario(&common)?;
            let (prediction, image_shift, distortion) = predict(&s)?;
            let output = PredictOutput {
                prediction,
                image_shift,
                distortion,
            };
            let text = serde_json::to_string_pretty(&output).expect("prediction serializes") + "\n";
            emit(&text, out.as_deref())
        }
        Command::Compare {
            common,
            reference,
            test,
            out,
        } => {
            let s = scenario(&common)?;
            let reference = load_image(&reference)?;
            let test = load_image(&test)?;
            if reference.grid != test.grid {
                return Err(Error::ShapeMismatch(
                    "reference and test images use different grids".into(),
                ));
            }
            let (_, predicted, _) = predict(&s)?;
            let report = CompareReport::new(
                s.error_source.to_string(),
                s.error,
                predicted,
                image_metrics(&reference)?,
                image_metrics(&test)?,
                &reference.grid,
                s.tolerances,
            )?;
            emit(&report.to_json(), out.as_deref())
        }
        Command::Run { common, out } => {
            configure_threads(common.threads)?;
            let s = scenario(&common)?;
            let dir = out
                .or_else(|| s.output_dir.clone())
                .ok_or_else(|| Error::validation("run needs --out or [output] dir"))?;
            if s.data_path == DataPath::Simulate {
                log::info!("simulating raw echoes and range compressing");
            }
            let run = run_pipeline(&s)?;
            write_artifacts(&run, &dir)?;
            print!("{}", run.report.to_json());
            Ok(())
        }
        Command::Render {
            input,
            out,
            db_floor,
            threads,
        } => {
            configure_threads(threads)?;
            render_image(&input, &out, db_floor)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
