//! Operator-facing command line: encode programs onto ultrasonic carriers,
//! simulate the acoustic path, decode, analyze against configured gates, and
//! self-test. Stages communicate only through files in the output directory,
//! so every intermediate is inspectable and reruns are reproducible.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use usphere::analysis::{render_report, render_spectrum_csv, Metric, ReportHeader};
use usphere::config::RunConfig;
use usphere::error::{Error, Result};
use usphere::io::{self, WavFormat};
use usphere::modulator::ComposeInfo;
use usphere::pipeline::{
    self, EncodeOutput, COMPOSITE_WAV, DECODED_WAV, EARS_WAV, REPORT_JSONL,
};
use usphere::selftest;

#[derive(Parser)]
#[command(
    name = "usphere",
    version,
    about = "Ultrasonic AM audio transport: encode, simulate, decode, analyze, selftest"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline stage.
#[derive(Args)]
struct StageArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory artifacts are written to and read from.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Modulate the configured programs into one inaudible composite WAV.
    Encode(StageArgs),
    /// Propagate the composite through the configured scene to two ears.
    Simulate(StageArgs),
    /// Demodulate the ear recording back to audible audio.
    Decode {
        #[command(flatten)]
        stage: StageArgs,
        /// Decode this channel into both ears instead of the config's pair.
        #[arg(long)]
        channel: Option<usize>,
    },
    /// Measure the run's artifacts and gate them on the config's thresholds.
    Analyze(StageArgs),
    /// Run the built-in acceptance gates on generated fixtures.
    Selftest {
        /// Also write the report file here (the table prints either way).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the generated fixtures.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("USPHERE_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Encode(args) => cmd_encode(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Decode { stage, channel } => cmd_decode(stage, *channel),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Selftest { out, seed } => cmd_selftest(out.as_deref(), *seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 3 for problems with files and their contents, 2 for everything the
/// operator can fix in the config or on the command line.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_)
        | Error::MalformedWav(_)
        | Error::UnsupportedWav(_)
        | Error::TruncatedWav(_)
        | Error::WouldClip { .. } => 3,
        _ => 2,
    }
}

fn load_config(args: &StageArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn allow_clipping(format: WavFormat) -> bool {
    matches!(format, WavFormat::Float32)
}

fn cmd_encode(args: &StageArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let dir = pipeline::ensure_out_dir(&args.out)?;
    log::info!("encoding {} programs", cfg.plan.channels.len());
    let enc = pipeline::encode(&cfg)?;
    pipeline::write_composite(&dir, &cfg, &enc)?;
    println!(
        "encoded {} channels into {} ({} Hz, {:.3} s, normalization {:.6})",
        cfg.plan.channels.len(),
        dir.join(COMPOSITE_WAV).display(),
        enc.composite.sample_rate_hz(),
        enc.composite.duration_s(),
        enc.info.normalization_factor,
    );
    Ok(true)
}

fn cmd_simulate(args: &StageArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let dir = pipeline::ensure_out_dir(&args.out)?;
    let composite = pipeline::read_stage_wav(&dir, COMPOSITE_WAV, "encode")?;
    log::info!("propagating composite through the scene");
    let ears = pipeline::simulate(&cfg, composite)?;
    pipeline::write_ears(&dir, &cfg, &ears)?;
    println!(
        "simulated scene into {} ({} Hz, {:.3} s)",
        dir.join(EARS_WAV).display(),
        ears.left.sample_rate_hz(),
        ears.left.duration_s(),
    );
    Ok(true)
}

fn cmd_decode(args: &StageArgs, channel: Option<usize>) -> Result<bool> {
    let cfg = load_config(args)?;
    let dir = pipeline::ensure_out_dir(&args.out)?;
    let ears = pipeline::ears_from_wav(pipeline::read_stage_wav(&dir, EARS_WAV, "simulate")?)?;
    let (left, right) = match channel {
        Some(c) => (c, c),
        None => (cfg.decode.left_channel, cfg.decode.right_channel),
    };
    log::info!("decoding channel {left} into the left ear, {right} into the right");
    let decoded = pipeline::decode(&cfg, &ears, left, right)?;
    io::write_wav(
        &dir.join(DECODED_WAV),
        &decoded,
        cfg.out_format,
        allow_clipping(cfg.out_format),
    )?;
    pipeline::write_decoded_sidecar(&dir, left, right)?;
    println!(
        "decoded channels ({left}, {right}) into {} ({} Hz, {:.3} s)",
        dir.join(DECODED_WAV).display(),
        decoded.sample_rate_hz(),
        decoded.duration_s(),
    );
    Ok(true)
}

fn cmd_analyze(args: &StageArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let dir = pipeline::ensure_out_dir(&args.out)?;

    let sidecar = pipeline::read_sidecar(&dir)?;
    if sidecar.plan != cfg.plan {
        return Err(Error::Config(format!(
            "composite in {} was encoded under a different channel plan; \
             re-run `usphere encode` with this config",
            dir.display()
        )));
    }
    let composite = pipeline::read_stage_wav(&dir, COMPOSITE_WAV, "encode")?;
    let ears = pipeline::ears_from_wav(pipeline::read_stage_wav(&dir, EARS_WAV, "simulate")?)?;
    let decoded = pipeline::read_stage_wav(&dir, DECODED_WAV, "decode")?;
    if decoded.num_channels() != 2 {
        return Err(Error::Config(format!(
            "{} must be stereo (one channel per ear), found {} channels",
            dir.join(DECODED_WAV).display(),
            decoded.num_channels()
        )));
    }
    // programs are regenerated from the config; the composite itself is taken
    // from disk so analysis judges the artifact actually produced
    let programs = (0..cfg.plan.channels.len())
        .map(|i| cfg.program(i))
        .collect::<Result<Vec<_>>>()?;
    let enc = EncodeOutput {
        programs,
        composite,
        info: ComposeInfo {
            normalization_factor: sidecar.normalization_factor,
            raw_peak: sidecar.raw_peak,
        },
    };
    let (left, right) = pipeline::read_decoded_sidecar(&dir)?
        .unwrap_or((cfg.decode.left_channel, cfg.decode.right_channel));

    log::info!("analyzing artifacts in {}", dir.display());
    let out = pipeline::analyze(&cfg, &enc, &ears, &decoded, left, right)?;

    let mut header = ReportHeader::new(cfg.seed);
    header.normalization_factor = Some(sidecar.normalization_factor);
    header.config_echo =
        Some(serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?);
    let report = render_report(&header, &out.metrics)?;
    std::fs::write(dir.join(REPORT_JSONL), &report)?;
    for (name, spectrum) in &out.spectra {
        std::fs::write(dir.join(name), render_spectrum_csv(spectrum))?;
    }

    for m in &out.metrics {
        println!("{}", format_metric(m));
    }
    println!(
        "report written to {} ({})",
        dir.join(REPORT_JSONL).display(),
        if out.all_pass { "all gates pass" } else { "GATE FAILURE" },
    );
    Ok(out.all_pass)
}

fn format_metric(m: &Metric) -> String {
    let value = match m.value {
        Some(v) => format!("{v:.6} {}", m.unit).trim_end().to_string(),
        None => "null".to_string(),
    };
    let verdict = if m.pass { "PASS" } else { "FAIL" };
    format!("{:<24} {:>18}  [{}]  {}", m.name, value, m.requirement, verdict)
}

fn cmd_selftest(out: Option<&std::path::Path>, seed: u64) -> Result<bool> {
    let result = selftest::run_selftest(seed)?;
    print!("{}", selftest::format_table(&result));
    if let Some(dir) = out {
        let dir = pipeline::ensure_out_dir(dir)?;
        std::fs::write(dir.join(REPORT_JSONL), &result.report)?;
        println!("report written to {}", dir.join(REPORT_JSONL).display());
    }
    println!(
        "selftest {} in {:.2} s",
        if result.all_pass { "passed" } else { "FAILED" },
        result.total_runtime_s,
    );
    Ok(result.all_pass)
}
