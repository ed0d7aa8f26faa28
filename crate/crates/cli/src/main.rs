use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use blendanim::blend::{blend_with_mode, BlendSchedule};
use blendanim::bvh::save_bvh;
use blendanim::checkpoint::{load_checkpoint, read_meta, save_checkpoint};
use blendanim::experiment::ExperimentConfig;
use blendanim::metrics::{emit_report, evaluate};
use blendanim::pyramid::GenerationMode;
use blendanim::synth::{synthetic_clip, synthetic_skeleton, SynthStyle};
use blendanim::train::{TelemetryWriter, Trainer};

#[derive(Parser)]
#[command(name = "blendanim", version, about = "Train, blend and evaluate single-shot motion blending models")]
struct Cli {
    /// Compute device; only `cpu` is available.
    #[arg(long, global = true, env = "BLENDANIM_DEVICE", default_value = "cpu")]
    device: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from an experiment file.
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set train.iterations_per_level=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Generate a blended clip from a schedule of `identity=frames` lines.
    Blend {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Use the fixed reconstruction noise of this identity instead of random noise.
        #[arg(long, value_name = "IDENTITY")]
        reconstruct: Option<String>,
    },
    /// Score random generations against the experiment's real clips.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Schedule for every sample; defaults to an even split over all identities.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Output directory; defaults to `<output_dir>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a checkpoint's metadata.
    InspectCheckpoint { checkpoint: PathBuf },
    /// Write a procedural clip as BVH.
    Synth {
        #[arg(long)]
        style: SynthStyle,
        #[arg(long, default_value_t = 120)]
        frames: usize,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if !cli.device.eq_ignore_ascii_case("cpu") {
        bail!("device `{}` is not available; this build runs on `cpu` only", cli.device);
    }
    match cli.command {
        Command::Train { config, overrides } => train(&config, &overrides),
        Command::Blend {
            checkpoint,
            schedule,
            seed,
            out,
            reconstruct,
        } => blend(&checkpoint, &schedule, seed, &out, reconstruct.as_deref()),
        Command::Eval {
            checkpoint,
            config,
            overrides,
            schedule,
            out,
        } => eval(&checkpoint, &config, &overrides, schedule.as_deref(), out.as_deref()),
        Command::InspectCheckpoint { checkpoint } => inspect(&checkpoint),
        Command::Synth {
            style,
            frames,
            fps,
            seed,
            out,
        } => {
            let clip = synthetic_clip(style, frames, fps, seed)?;
            save_bvh(&out, &synthetic_skeleton(), &clip)?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn train(config_path: &Path, overrides: &[String]) -> Result<()> {
    let config = ExperimentConfig::load(config_path, overrides)?;
    let (skeleton, motions) = config.load_motions()?;
    let train_config = config.train_config();
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;

    let mut trainer = Trainer::new(train_config, skeleton, motions)?;
    let telemetry_path = dir.join("telemetry.csv");
    let mut telemetry = TelemetryWriter::new(BufWriter::new(File::create(&telemetry_path)?));
    trainer.train_all(|row| {
        if row.iteration % 100 == 0 {
            log::info!(
                "level {} stage {} iteration {}: critic {:.4} generator {:.4} reconstruction {:.4}",
                row.level,
                row.stage,
                row.iteration,
                row.critic_loss,
                row.generator_loss,
                row.reconstruction_full
            );
        }
        telemetry.write(row)
    })?;
    drop(telemetry);

    let checkpoint = dir.join("model.ckpt");
    let partial = dir.join("model.ckpt.partial");
    save_checkpoint(&trainer.into_model(), &partial)?;
    std::fs::rename(&partial, &checkpoint)?;
    println!("{}", checkpoint.display());
    Ok(())
}

fn blend(checkpoint: &Path, schedule_path: &Path, seed: u64, out: &Path, reconstruct: Option<&str>) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let schedule = BlendSchedule::load(schedule_path)?;
    let mode = match reconstruct {
        Some(name) => GenerationMode::Reconstruction(model.identity_index(name)?),
        None => GenerationMode::Random,
    };
    let result = blend_with_mode(&model, &schedule, seed, mode)?;
    save_bvh(out, &model.skeleton, &result.motion)?;
    println!("schedule: {} segments, {} frames, seed {seed}", schedule.segments.len(), schedule.frames());
    let mut start = 0;
    for (identity, frames) in &schedule.segments {
        println!("  frames {start:>5}..{:<5} {identity}", start + frames);
        start += frames;
    }
    println!("{}", out.display());
    Ok(())
}

fn eval(
    checkpoint: &Path,
    config_path: &Path,
    overrides: &[String],
    schedule_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let config = ExperimentConfig::load(config_path, overrides)?;
    let model = load_checkpoint(checkpoint)?;
    let (_, motions) = config.load_motions()?;
    let real: Vec<_> = motions.into_iter().map(|m| m.tensor).collect();
    let schedule = match schedule_path {
        Some(p) => BlendSchedule::load(p)?,
        None => BlendSchedule::even(&model.identities, model.frames())?,
    };
    let evaluation = evaluate(&model, &real, &schedule, &config.eval_options())?;
    let dir = out.map_or_else(|| config.output_dir.join("eval"), Path::to_path_buf);
    let files = emit_report(&dir, &evaluation.report, Some(&evaluation.smoothness))?;
    print!("{}", evaluation.report.to_text());
    println!("{}", files.report.display());
    Ok(())
}

fn inspect(checkpoint: &Path) -> Result<()> {
    let file = File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?;
    let meta = read_meta(std::io::BufReader::new(file))?;
    println!("format version: {}", meta.format_version);
    println!("identities: {}", meta.identities.join(", "));
    println!("level lengths: {:?}", meta.levels.level_lengths);
    println!("joints: {}, contacts: {}, fps: {}", meta.skeleton.joint_count(), meta.contacts, meta.fps);
    println!("trained stages: {}", meta.trained_stages);
    println!("config hash: {}", meta.config_hash);
    println!("model: {}", serde_json::to_string(&meta.model)?);
    Ok(())
}
