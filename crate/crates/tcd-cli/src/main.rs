//! `tcd`: run batch decoding experiments, profile the dual-branch engine,
//! synthesize event audio, and inspect trace files.
//!
//! Exit codes: 0 success, 2 invocation/configuration error, 3 finished but
//! at least one case run failed.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tcd_cli::config_file::load_config;
use tcd_cli::manifest::ExperimentManifest;
use tcd_cli::runner::{run_experiment, write_outputs};
use tcd_core::config::Strategy;
use tcd_core::engine::{profile, profile_phase, PhaseProfile, ProfileReport};
use tcd_core::error::Result as TcdResult;
use tcd_core::model::toy::ToyModel;
use tcd_core::signal::{synth_event_audio, Event, EventClass, EventScript, Waveform};
use tcd_core::trace::parse_trace;
use tcd_core::vocab;
use tcd_core::wav::{read_wav, write_wav};

#[derive(Parser)]
#[command(
    name = "tcd",
    version,
    about = "Temporal contrastive decoding experiments on toy audio-language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode every case in a manifest under each strategy and write reports
    Run(RunArgs),
    /// Compare pass counts and timings of baseline vs contrastive decoding
    Profile(ProfileArgs),
    /// Render an event-script file to a WAV file
    Synth(SynthArgs),
    /// Pretty-print a trace file written by `run`
    TraceDump(TraceDumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Manifest file (see crate docs for the line format)
    manifest: PathBuf,
    /// Base decode-config file, flat key=value lines [default: built-in values]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: the manifest's out= entry, else tcd-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decoding seed, overrides the manifest and config file
    #[arg(long)]
    seed: Option<u64>,
    /// Strategy to run (repeatable), overrides the manifest list
    #[arg(long = "strategy", value_name = "NAME")]
    strategies: Vec<String>,
    /// Toy-model weight seed, overrides the manifest
    #[arg(long)]
    model_seed: Option<u64>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Number of decode steps to sample
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Base decode-config file, flat key=value lines [default: built-in values]
    #[arg(long)]
    config: Option<PathBuf>,
    /// WAV input [default: a built-in three-ring synthetic clip]
    #[arg(long)]
    audio: Option<PathBuf>,
    /// Prompt as whitespace-separated vocabulary names
    #[arg(long, default_value = "how many times ring ?")]
    prompt: String,
    /// Toy-model weight seed
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// `both` for the side-by-side table, or a single strategy name
    #[arg(long, default_value = "both")]
    strategy: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Event-script text file
    script: PathBuf,
    /// Output WAV path
    out: PathBuf,
}

#[derive(Args)]
struct TraceDumpArgs {
    /// Trace file written by `run`
    trace: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Anything that escapes here is a bad invocation, bad file, or
            // bad configuration; per-case failures exit 3 inside cmd_run.
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Synth(args) => cmd_synth(args),
        Command::TraceDump(args) => cmd_trace_dump(args),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut manifest = ExperimentManifest::from_file(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    if let Some(out) = args.out {
        manifest.out_dir = out;
    }
    if let Some(seed) = args.seed {
        manifest.seed = Some(seed);
    }
    if let Some(model_seed) = args.model_seed {
        manifest.model_seed = model_seed;
    }
    if !args.strategies.is_empty() {
        let parsed: TcdResult<Vec<Strategy>> =
            args.strategies.iter().map(|s| Strategy::parse(s)).collect();
        manifest.strategies = parsed?;
        manifest.validate()?;
    }
    let base = load_config(args.config.as_deref(), &[]).with_context(|| "loading config")?;
    let report = run_experiment(&manifest, &base)?;
    write_outputs(&report, &manifest.out_dir)
        .with_context(|| format!("writing {}", manifest.out_dir.display()))?;
    print!("{}", report.text_table());
    println!("wrote {}", manifest.out_dir.display());
    let failures = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        eprintln!("{failures} case run(s) failed; see cases.csv");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn default_profile_audio() -> TcdResult<Waveform> {
    let events = (0..3)
        .map(|i| Event {
            onset_ms: 120.0 + 320.0 * i as f64,
            length_ms: 90.0,
            class: EventClass::Ring,
        })
        .collect();
    synth_event_audio(&EventScript::new(1_200.0, events, 0.02, 1)?)
}

fn per_step(phase: &PhaseProfile) -> f64 {
    phase.step_decoder_passes as f64 / phase.steps as f64
}

fn print_profile_pair(report: &ProfileReport) {
    println!(
        "{:<24} {:>12} {:>12} {:>8}",
        "", "baseline", "tcd", "ratio"
    );
    println!(
        "{:<24} {:>12} {:>12} {:>8.2}",
        "prefill encoder passes",
        report.baseline.prefill_encoder_passes,
        report.tcd.prefill_encoder_passes,
        report.prefill_encoder_ratio
    );
    println!(
        "{:<24} {:>12} {:>12} {:>8.2}",
        "prefill decoder passes",
        report.baseline.prefill_decoder_passes,
        report.tcd.prefill_decoder_passes,
        report.prefill_decoder_ratio
    );
    println!(
        "{:<24} {:>12.2} {:>12.2} {:>8.2}",
        "decoder passes per step",
        per_step(&report.baseline),
        per_step(&report.tcd),
        report.decode_ratio
    );
    println!(
        "{:<24} {:>12.6} {:>12.6} {:>8.2}",
        "prefill seconds",
        report.baseline.prefill_seconds,
        report.tcd.prefill_seconds,
        report.prefill_wall_ratio
    );
    println!(
        "{:<24} {:>12.6} {:>12.6} {:>8.2}",
        "mean step seconds",
        report.baseline.mean_step_seconds,
        report.tcd.mean_step_seconds,
        report.step_wall_ratio
    );
    if let Some(kb) = report.peak_rss_kb {
        println!("{:<24} {kb:>12} kb", "peak resident set");
    }
    println!("pass ratios are structural; wall-clock ratios vary with hardware");
}

fn print_profile_single(phase: &PhaseProfile) {
    println!("strategy {}", phase.strategy.name());
    println!(
        "{:<24} {:>12}",
        "prefill encoder passes", phase.prefill_encoder_passes
    );
    println!(
        "{:<24} {:>12}",
        "prefill decoder passes", phase.prefill_decoder_passes
    );
    println!("{:<24} {:>12.2}", "decoder passes per step", per_step(phase));
    println!("{:<24} {:>12.6}", "prefill seconds", phase.prefill_seconds);
    println!(
        "{:<24} {:>12.6}",
        "mean step seconds", phase.mean_step_seconds
    );
}

fn cmd_profile(args: ProfileArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(args.config.as_deref(), &[]).with_context(|| "loading config")?;
    let audio = match &args.audio {
        Some(path) => read_wav(path).with_context(|| format!("reading {}", path.display()))?,
        None => default_profile_audio()?,
    };
    let prompt = vocab::tokenize(&args.prompt).with_context(|| "parsing prompt")?;
    let model = ToyModel::seeded(args.model_seed);
    println!(
        "profiling {} decode steps on {:.0} ms of audio, prompt {:?}",
        args.steps,
        audio.duration_ms(),
        args.prompt
    );
    if args.strategy == "both" {
        let report = profile(&model, &audio, &prompt, &config, args.steps)?;
        print_profile_pair(&report);
    } else {
        let mut single = config.clone();
        single.strategy = Strategy::parse(&args.strategy)?;
        let phase = profile_phase(&model, &audio, &prompt, single, args.steps)?;
        print_profile_single(&phase);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.script)
        .with_context(|| format!("reading {}", args.script.display()))?;
    let script = EventScript::from_text(&text)?;
    let audio = synth_event_audio(&script)?;
    write_wav(&args.out, &audio).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {}: {} samples at {} Hz ({:.1} ms, {} events)",
        args.out.display(),
        audio.len(),
        audio.sample_rate(),
        audio.duration_ms(),
        script.events.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_trace_dump(args: TraceDumpArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let parsed = parse_trace(&text)?;
    println!("config:");
    for (key, value) in &parsed.config {
        println!("  {key}={value}");
    }
    match &parsed.stability {
        None => println!("stability: none (single-branch run)"),
        Some(report) => {
            println!(
                "stability: pooled={:.4} window={:.2} ms lambda={:.4}",
                report.pooled, report.window_ms, report.lambda
            );
            for (i, layer) in report.per_layer.iter().enumerate() {
                println!(
                    "  layer {i}: magnitude={:.4} flux={:.4} score={:.4} weight={:.4}",
                    layer.magnitude, layer.flux, layer.stability, layer.weight
                );
            }
        }
    }
    for step in &parsed.steps {
        let bias = if step.applied_bias.is_empty() {
            "-".to_string()
        } else {
            step.applied_bias
                .iter()
                .map(|(id, v)| format!("{}:{v:+.4}", vocab::token_name(*id)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "step {:>3}: token {:>2} {:<6} gate={:.4} reliance={:.4} entropy={:.4} candidates={} bias={bias}",
            step.step_index,
            step.chosen_token,
            vocab::token_name(step.chosen_token),
            step.gate,
            step.r_t,
            step.entropy_hat,
            step.candidate_ids.len()
        );
    }
    println!("text: {}", parsed.text);
    Ok(ExitCode::SUCCESS)
}
