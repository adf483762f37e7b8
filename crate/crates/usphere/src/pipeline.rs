//! The four pipeline stages behind the CLI. Stages hand data to each other
//! only through files in the output directory, so every intermediate is
//! inspectable; each stage is a deterministic function of (config, input
//! files, seed).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, aligned_similarity, aligned_snr_db, band_energy_dbfs, measure_itd, welch_spectrum,
    Metric, Spectrum,
};
use crate::buffer::AudioBuffer;
use crate::config::RunConfig;
use crate::demodulator::{self, demodulate_envelope, select_channel};
use crate::error::{Error, Result};
use crate::io::{self, WavFormat};
use crate::modulator::{compose, ComposeInfo};
use crate::scene::{self, itd_delays, propagate, EarSignals, SceneModel, SourceSpec};

pub const COMPOSITE_WAV: &str = "composite.wav";
pub const COMPOSITE_SIDECAR: &str = "composite.json";
pub const EARS_WAV: &str = "ears.wav";
pub const DECODED_WAV: &str = "decoded.wav";
pub const REPORT_JSONL: &str = "report.jsonl";
pub const COMPOSITE_SPECTRUM_CSV: &str = "composite_spectrum.csv";
pub const DECODED_LEFT_SPECTRUM_CSV: &str = "decoded_left_spectrum.csv";
pub const DECODED_RIGHT_SPECTRUM_CSV: &str = "decoded_right_spectrum.csv";

/// What `encode` records next to the composite so later stages can undo or
/// reason about its scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSidecar {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub plan: crate::modulator::ChannelPlan,
    pub normalization_factor: f64,
    pub raw_peak: f64,
}

pub const SIDECAR_FORMAT: &str = "usphere-composite";
pub const SIDECAR_VERSION: u32 = 1;

pub struct EncodeOutput {
    pub programs: Vec<AudioBuffer>,
    pub composite: AudioBuffer,
    pub info: ComposeInfo,
}

/// Load every program and modulate the composite.
pub fn encode(cfg: &RunConfig) -> Result<EncodeOutput> {
    let programs: Vec<AudioBuffer> =
        (0..cfg.plan.channels.len()).map(|i| cfg.program(i)).collect::<Result<_>>()?;
    let (composite, info) = compose(&programs, &cfg.plan, true)?;
    Ok(EncodeOutput { programs, composite, info })
}

/// Build the scene the config describes around a given composite.
pub fn scene_model(cfg: &RunConfig, composite: AudioBuffer) -> Result<SceneModel> {
    Ok(SceneModel {
        sources: vec![SourceSpec {
            position_m: cfg.scene.emitter_position_m,
            waveform: composite,
            directivity_exponent: cfg.scene.emitter_directivity_exponent,
            facing_azimuth_rad: cfg.scene.emitter_facing_rad,
        }],
        listener_position_m: cfg.scene.listener_position_m,
        listener_facing_rad: cfg.scene.listener_facing_rad,
        head_radius_m: cfg.scene.head_radius_m,
        speed_of_sound_mps: cfg.scene.speed_of_sound_mps,
        ambient: cfg.ambient()?,
        noise_snr_db: cfg.scene.noise_snr_db,
        rng_seed: cfg.seed,
    })
}

/// Propagate the composite through the configured scene.
pub fn simulate(cfg: &RunConfig, composite: AudioBuffer) -> Result<EarSignals> {
    propagate(&scene_model(cfg, composite)?)
}

/// Decode both ears per the config (or an override pair).
pub fn decode(cfg: &RunConfig, ears: &EarSignals, left: usize, right: usize) -> Result<AudioBuffer> {
    demodulator::decode_stereo(ears, &cfg.plan, left, right, &cfg.rx)
}

/// Emitter amplitude at the listener: directivity over distance, the gain
/// `analyze` expects the decoded program to come back with.
pub fn emitter_gain(cfg: &RunConfig) -> Result<f64> {
    let dx = cfg.scene.emitter_position_m[0] - cfg.scene.listener_position_m[0];
    let dy = cfg.scene.emitter_position_m[1] - cfg.scene.listener_position_m[1];
    let dist = (dx * dx + dy * dy).sqrt();
    if dist < scene::MIN_SOURCE_DISTANCE_M {
        return Err(Error::contract(format!("emitter {dist:.3} m from listener")));
    }
    let to_listener = scene::wrap_angle(dy.atan2(dx) + std::f64::consts::PI);
    let facing = cfg.scene.emitter_facing_rad.unwrap_or(to_listener);
    let k = cfg.scene.emitter_directivity_exponent;
    Ok((facing - to_listener).cos().max(0.0).powf(k) / dist)
}

/// Match a program to the decoded rate so alignment can compare them.
fn at_rate(program: &AudioBuffer, rate: u32) -> Result<AudioBuffer> {
    match program.sample_rate_hz() {
        r if r == rate => Ok(program.clone()),
        r if r * 2 == rate => crate::dsp::upsample_2x(program),
        r => Err(Error::contract(format!("cannot compare a {r} Hz program at {rate} Hz"))),
    }
}

pub struct AnalyzeOutput {
    pub metrics: Vec<Metric>,
    /// (file name, spectrum) pairs for CSV sidecars.
    pub spectra: Vec<(String, Spectrum)>,
    pub all_pass: bool,
}

fn gate_min(value: f64, unit: &str, threshold: Option<f64>) -> (String, bool) {
    match threshold {
        Some(t) => (format!(">= {t} {unit}"), value >= t),
        None => ("report only".into(), true),
    }
}

fn gate_max(value: f64, unit: &str, threshold: Option<f64>) -> (String, bool) {
    match threshold {
        Some(t) => (format!("<= {t} {unit}"), value <= t),
        None => ("report only".into(), true),
    }
}

/// Measure everything the config gates on: per-ear fidelity, composite
/// inaudibility, channel crosstalk and interaural delay.
pub fn analyze(
    cfg: &RunConfig,
    encode_out: &EncodeOutput,
    ears: &EarSignals,
    decoded: &AudioBuffer,
    left_ch: usize,
    right_ch: usize,
) -> Result<AnalyzeOutput> {
    let th = &cfg.thresholds;
    let mut metrics = Vec::new();
    let rate = decoded.sample_rate_hz();
    let expected_gain = encode_out.info.normalization_factor * emitter_gain(cfg)?;

    // per-ear round trip against the original program
    for (ear_name, ch, idx) in [("left", left_ch, 0usize), ("right", right_ch, 1usize)] {
        let spec = select_channel(&cfg.plan, ch)?;
        let reference = at_rate(&encode_out.programs[ch], rate)?;
        let out = AudioBuffer::mono(rate, decoded.channel(idx).to_vec())?;
        let al = aligned_similarity(&reference, &out, 0.05)?;
        let (req, pass) = gate_min(al.correlation, "", th.min_correlation);
        metrics.push(Metric::new(format!("{ear_name}_correlation"), al.correlation, "", req, pass));
        metrics.push(Metric::new(
            format!("{ear_name}_lag"),
            al.lag_samples as f64,
            "samples",
            "report only",
            true,
        ));
        let predicted = expected_gain * spec.gain;
        let gain_error_db = (20.0 * (al.gain / predicted).log10()).abs();
        let (req, pass) = gate_max(gain_error_db, "dB", th.max_gain_error_db);
        metrics.push(Metric::new(
            format!("{ear_name}_gain_error"),
            gain_error_db,
            "dB",
            req,
            pass,
        ));
        let snr = aligned_snr_db(&reference, &out, &al)?;
        let (req, pass) = gate_min(snr, "dB", th.min_snr_db);
        metrics.push(Metric::new(format!("{ear_name}_snr"), snr, "dB", req, pass));
    }

    // composite inaudibility
    let nyquist = encode_out.composite.sample_rate_hz() as f64 / 2.0;
    let audible = band_energy_dbfs(&encode_out.composite, 20.0, 20_000.0)?;
    let ultrasonic = band_energy_dbfs(&encode_out.composite, 22_000.0, nyquist)?;
    let leakage = audible - ultrasonic;
    let (req, pass) = gate_max(leakage, "dB", th.max_leakage_db);
    metrics.push(Metric::new("leakage_audible", leakage, "dB", req, pass));

    // crosstalk via controlled solo re-encodes (loopback, geometry-free)
    if left_ch != right_ch {
        let mut worst: Option<f64> = None;
        for (own, other) in [(left_ch, right_ch), (right_ch, left_ch)] {
            let mut solo_programs = Vec::new();
            for i in 0..cfg.plan.channels.len() {
                let p = &encode_out.programs[i];
                if i == own {
                    solo_programs.push(p.clone());
                } else {
                    solo_programs.push(AudioBuffer::silence(
                        p.sample_rate_hz(),
                        1,
                        p.len(),
                    )?);
                }
            }
            let (solo_composite, _) = compose(&solo_programs, &cfg.plan, true)?;
            let own_spec = select_channel(&cfg.plan, own)?;
            let other_spec = select_channel(&cfg.plan, other)?;
            let own_decode = demodulate_envelope(&solo_composite, own_spec, &cfg.rx)?;
            let other_decode = demodulate_envelope(&solo_composite, other_spec, &cfg.rx)?;
            let band = (300.0, own_spec.audio_bw_hz.max(other_spec.audio_bw_hz));
            let xt = analysis::crosstalk_db(&other_decode, &own_decode, band.0, band.1)?;
            worst = Some(worst.map_or(xt, |w: f64| w.max(xt)));
        }
        let xt = worst.expect("two directions measured");
        let (req, pass) = gate_max(xt, "dB", th.max_crosstalk_db);
        metrics.push(Metric::new("crosstalk", xt, "dB", req, pass));
    } else {
        metrics.push(Metric::null("crosstalk", "dB", "single channel decoded", true));
    }

    // interaural delay of the decoded pair vs the scene's model value
    let left_out = AudioBuffer::mono(rate, decoded.channel(0).to_vec())?;
    let right_out = AudioBuffer::mono(rate, decoded.channel(1).to_vec())?;
    match measure_itd(&left_out, &right_out, 0.002) {
        Ok(itd_s) => {
            let dx = cfg.scene.emitter_position_m[0] - cfg.scene.listener_position_m[0];
            let dy = cfg.scene.emitter_position_m[1] - cfg.scene.listener_position_m[1];
            let azimuth = scene::wrap_angle(cfg.scene.listener_facing_rad - dy.atan2(dx));
            let (dl, dr) =
                itd_delays(azimuth, cfg.scene.head_radius_m, cfg.scene.speed_of_sound_mps)?;
            let err_samples = ((itd_s - (dl - dr)) * rate as f64).abs();
            let (req, pass) = gate_max(err_samples, "samples", th.max_itd_error_samples);
            metrics.push(Metric::new("itd_error", err_samples, "samples", req, pass));
        }
        Err(Error::UndefinedItd) => {
            // uncorrelated ear programs have no single delay; gate fails
            // only if the config insists on one
            let pass = th.max_itd_error_samples.is_none();
            metrics.push(Metric::null("itd_error", "samples", "itd undefined", pass));
        }
        Err(e) => return Err(e),
    }

    let spectra = vec![
        (
            COMPOSITE_SPECTRUM_CSV.to_string(),
            welch_spectrum(&encode_out.composite, analysis::DEFAULT_FFT_SIZE)?,
        ),
        (DECODED_LEFT_SPECTRUM_CSV.to_string(), welch_spectrum(&left_out, analysis::DEFAULT_FFT_SIZE)?),
        (
            DECODED_RIGHT_SPECTRUM_CSV.to_string(),
            welch_spectrum(&right_out, analysis::DEFAULT_FFT_SIZE)?,
        ),
    ];
    let _ = ears; // ears participate via decoded; kept for future ear-level metrics
    let all_pass = metrics.iter().all(|m| m.pass);
    Ok(AnalyzeOutput { metrics, spectra, all_pass })
}

// --- file plumbing shared by the CLI ---

pub fn write_composite(dir: &Path, cfg: &RunConfig, out: &EncodeOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    // composites legitimately peak above 1.0 before normalization kicks in
    // only at > full scale; float carries them exactly
    let allow = matches!(cfg.out_format, WavFormat::Float32);
    io::write_wav(&dir.join(COMPOSITE_WAV), &out.composite, cfg.out_format, allow)?;
    let sidecar = CompositeSidecar {
        format: SIDECAR_FORMAT.into(),
        version: SIDECAR_VERSION,
        seed: cfg.seed,
        plan: cfg.plan.clone(),
        normalization_factor: out.info.normalization_factor,
        raw_peak: out.info.raw_peak,
    };
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(COMPOSITE_SIDECAR), json + "\n")?;
    Ok(())
}

pub fn read_sidecar(dir: &Path) -> Result<CompositeSidecar> {
    let path = dir.join(COMPOSITE_SIDECAR);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read {}: {e}; run `usphere encode` first", path.display()),
        ))
    })?;
    let sidecar: CompositeSidecar =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if sidecar.format != SIDECAR_FORMAT {
        return Err(Error::Config(format!("{} is not a composite sidecar", path.display())));
    }
    Ok(sidecar)
}

/// Read an artifact WAV a previous stage should have written.
pub fn read_stage_wav(dir: &Path, name: &str, producer: &str) -> Result<AudioBuffer> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found; run `usphere {producer}` first", path.display()),
        )));
    }
    let (buf, _) = io::read_wav(&path)?;
    Ok(buf)
}

/// What `decode` records next to the decoded audio: which channel each ear
/// carried, so `analyze` compares against the right programs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSidecar {
    pub format: String,
    pub version: u32,
    pub left_channel: usize,
    pub right_channel: usize,
}

pub const DECODED_SIDECAR: &str = "decoded.json";
pub const DECODED_SIDECAR_FORMAT: &str = "usphere-decoded";

pub fn write_decoded_sidecar(dir: &Path, left: usize, right: usize) -> Result<()> {
    let sidecar = DecodedSidecar {
        format: DECODED_SIDECAR_FORMAT.into(),
        version: SIDECAR_VERSION,
        left_channel: left,
        right_channel: right,
    };
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(DECODED_SIDECAR), json + "\n")?;
    Ok(())
}

/// The channel pair `decode` recorded, or `None` when no sidecar exists
/// (for ear recordings decoded elsewhere).
pub fn read_decoded_sidecar(dir: &Path) -> Result<Option<(usize, usize)>> {
    let path = dir.join(DECODED_SIDECAR);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let sidecar: DecodedSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if sidecar.format != DECODED_SIDECAR_FORMAT {
        return Err(Error::Config(format!("{} is not a decode sidecar", path.display())));
    }
    Ok(Some((sidecar.left_channel, sidecar.right_channel)))
}

pub const EARS_SIDECAR: &str = "ears.json";
pub const EARS_SIDECAR_FORMAT: &str = "usphere-ears";

pub fn write_ears(dir: &Path, cfg: &RunConfig, ears: &EarSignals) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stereo = AudioBuffer::stereo(
        ears.left.sample_rate_hz(),
        ears.left.channel(0).to_vec(),
        ears.right.channel(0).to_vec(),
    )?;
    let allow = matches!(cfg.out_format, WavFormat::Float32);
    io::write_wav(&dir.join(EARS_WAV), &stereo, cfg.out_format, allow)?;
    // echo the scene so a recording's provenance travels with it
    let sidecar = serde_json::json!({
        "format": EARS_SIDECAR_FORMAT,
        "version": SIDECAR_VERSION,
        "seed": cfg.seed,
        "scene": cfg.scene,
    });
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(EARS_SIDECAR), json + "\n")?;
    Ok(())
}

pub fn ears_from_wav(buf: AudioBuffer) -> Result<EarSignals> {
    if buf.num_channels() != 2 {
        return Err(Error::Config(format!(
            "ear recording must be stereo, found {} channels",
            buf.num_channels()
        )));
    }
    let rate = buf.sample_rate_hz();
    let mut chans = buf.into_channels();
    let right = chans.pop().expect("two channels");
    let left = chans.pop().expect("two channels");
    Ok(EarSignals {
        left: AudioBuffer::mono(rate, left)?,
        right: AudioBuffer::mono(rate, right)?,
    })
}

/// Where artifacts for a run live; creates the directory.
pub fn ensure_out_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_config(extra: &str) -> RunConfig {
        let text = format!(
            r#"
seed = 5
[[programs]]
fixture = {{ kind = "speech_like_noise", duration_s = 1.5, seed_offset = 1 }}
[[programs]]
fixture = {{ kind = "tone", freq_hz = 2000.0, duration_s = 1.5, peak = 0.8 }}
{extra}
"#
        );
        let cfg: RunConfig = toml::from_str(&text).unwrap();
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn stages_chain_end_to_end() {
        let cfg = test_config(
            r#"
[thresholds]
min_correlation = 0.99
max_gain_error_db = 1.0
max_leakage_db = -60.0
max_crosstalk_db = -40.0
"#,
        );
        let enc = encode(&cfg).unwrap();
        assert_eq!(enc.programs.len(), 2);
        let ears = simulate(&cfg, enc.composite.clone()).unwrap();
        assert_eq!(ears.left.sample_rate_hz(), scene::RECEIVE_RATE_HZ);
        let decoded = decode(&cfg, &ears, 0, 1).unwrap();
        assert_eq!(decoded.num_channels(), 2);
        let out = analyze(&cfg, &enc, &ears, &decoded, 0, 1).unwrap();
        for m in &out.metrics {
            assert!(m.pass, "metric {} failed: {:?} ({})", m.name, m.value, m.requirement);
        }
        assert!(out.all_pass);
        assert_eq!(out.spectra.len(), 3);
        // itd for uncorrelated ear programs reports null without failing
        let itd = out.metrics.iter().find(|m| m.name == "itd_error").unwrap();
        assert_eq!(itd.value, None);
    }

    #[test]
    fn analyze_flags_tampered_composite() {
        let cfg = test_config("[thresholds]\nmax_leakage_db = -60.0\n");
        let mut enc = encode(&cfg).unwrap();
        // inject an audible 1 kHz tone into the transmit signal
        let w = 2.0 * std::f64::consts::PI * 1_000.0 / 96_000.0;
        for (n, s) in enc.composite.channel_mut(0).iter_mut().enumerate() {
            *s += 0.05 * (w * n as f64).sin();
        }
        let ears = simulate(&cfg, enc.composite.clone()).unwrap();
        let decoded = decode(&cfg, &ears, 0, 1).unwrap();
        let out = analyze(&cfg, &enc, &ears, &decoded, 0, 1).unwrap();
        let leak = out.metrics.iter().find(|m| m.name == "leakage_audible").unwrap();
        assert!(!leak.pass, "tampering must trip the leakage gate");
        assert!(!out.all_pass);
    }

    #[test]
    fn artifacts_round_trip_through_files() {
        let cfg = test_config("");
        let dir = tempfile::tempdir().unwrap();
        let enc = encode(&cfg).unwrap();
        write_composite(dir.path(), &cfg, &enc).unwrap();
        let sidecar = read_sidecar(dir.path()).unwrap();
        assert_eq!(sidecar.plan, cfg.plan);
        assert_eq!(sidecar.normalization_factor, enc.info.normalization_factor);
        let composite = read_stage_wav(dir.path(), COMPOSITE_WAV, "encode").unwrap();
        assert_eq!(composite.len(), enc.composite.len());

        let ears = simulate(&cfg, composite).unwrap();
        write_ears(dir.path(), &cfg, &ears).unwrap();
        let back = ears_from_wav(read_stage_wav(dir.path(), EARS_WAV, "simulate").unwrap()).unwrap();
        assert_eq!(back.left.len(), ears.left.len());

        // missing upstream artifacts surface as I/O problems with a hint
        let missing = read_stage_wav(dir.path(), DECODED_WAV, "decode");
        match missing {
            Err(Error::Io(e)) => assert!(e.to_string().contains("usphere decode")),
            other => panic!("expected io error, got {other:?}"),
        }

        write_decoded_sidecar(dir.path(), 0, 1).unwrap();
        assert_eq!(read_decoded_sidecar(dir.path()).unwrap(), Some((0, 1)));
        let empty = tempfile::tempdir().unwrap();
        assert_eq!(read_decoded_sidecar(empty.path()).unwrap(), None);
    }
}
