//! Run configuration: one TOML file describes an entire experiment —
//! channel plan, program material, acoustic scene, receiver settings and
//! the thresholds `analyze` gates on. Commands are deterministic functions
//! of (config, input files, seed).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::demodulator::RxConfig;
use crate::error::{Error, Result};
use crate::io::{self, FixtureKind, WavFormat};
use crate::modulator::ChannelPlan;
use crate::scene::AmbientKind;

/// A generated program: what to synthesize and how loud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    #[serde(flatten)]
    pub kind: FixtureKind,
    pub duration_s: f64,
    #[serde(default = "default_peak")]
    pub peak: f64,
    /// Added to the run seed so fixtures can differ while staying
    /// reproducible.
    #[serde(default)]
    pub seed_offset: u64,
}

fn default_peak() -> f64 {
    1.0
}

/// Where one channel's program comes from: a WAV on disk or a generated
/// fixture. Exactly one must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProgramConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wav: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureSpec>,
}

/// The ambient bed, if the scene has one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientConfig {
    #[serde(flatten)]
    pub kind: AmbientKind,
    pub duration_s: f64,
    pub level_dbfs: f64,
    #[serde(default)]
    pub seed_offset: u64,
}

/// Geometry of the one emitter and the listener.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub emitter_position_m: [f64; 2],
    pub emitter_directivity_exponent: f64,
    /// World-frame aim of the emitter; omitted = aimed at the listener.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitter_facing_rad: Option<f64>,
    pub listener_position_m: [f64; 2],
    pub listener_facing_rad: f64,
    pub head_radius_m: f64,
    pub speed_of_sound_mps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambient: Option<AmbientConfig>,
}

impl Default for SceneConfig {
    /// Emitter 1 m dead ahead of a listener at the origin.
    fn default() -> Self {
        SceneConfig {
            emitter_position_m: [1.0, 0.0],
            emitter_directivity_exponent: 0.0,
            emitter_facing_rad: None,
            listener_position_m: [0.0, 0.0],
            listener_facing_rad: 0.0,
            head_radius_m: crate::scene::DEFAULT_HEAD_RADIUS_M,
            speed_of_sound_mps: crate::scene::DEFAULT_SPEED_OF_SOUND_MPS,
            noise_snr_db: None,
            ambient: None,
        }
    }
}

/// Which channel each ear decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub left_channel: usize,
    pub right_channel: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { left_channel: 0, right_channel: 1 }
    }
}

/// Gates `analyze` applies; absent fields are not checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_correlation: Option<f64>,
    pub max_gain_error_db: Option<f64>,
    pub min_snr_db: Option<f64>,
    pub max_leakage_db: Option<f64>,
    pub max_crosstalk_db: Option<f64>,
    pub max_itd_error_samples: Option<f64>,
}

/// Everything a run needs. See the repository's example configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Encoding for written WAV artifacts. Float carries composite peaks
    /// above full scale losslessly; PCM formats refuse them.
    #[serde(default = "default_format")]
    pub out_format: WavFormat,
    #[serde(default)]
    pub plan: ChannelPlan,
    pub programs: Vec<ProgramConfig>,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub rx: RxConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_format() -> WavFormat {
    WavFormat::Float32
}

impl RunConfig {
    /// Parse and cross-validate a TOML config.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Parse and cross-validate TOML text; `origin` labels parse errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.programs.len() != self.plan.channels.len() {
            return Err(Error::Config(format!(
                "{} programs for {} channels; give one program per channel",
                self.programs.len(),
                self.plan.channels.len()
            )));
        }
        for (i, p) in self.programs.iter().enumerate() {
            match (&p.wav, &p.fixture) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config(format!(
                        "program {i} sets both `wav` and `fixture`; pick one"
                    )))
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "program {i} needs either `wav` or `fixture`"
                    )))
                }
                _ => {}
            }
        }
        let violations = crate::modulator::validate_plan(&self.plan);
        if !violations.is_empty() {
            return Err(Error::PlanViolations(violations));
        }
        let n = self.plan.channels.len();
        for (ear, ch) in [("left", self.decode.left_channel), ("right", self.decode.right_channel)]
        {
            if ch >= n {
                return Err(Error::Config(format!(
                    "decode.{ear}_channel = {ch} but the plan has {n} channels"
                )));
            }
        }
        self.rx.limiter.validate()?;
        Ok(())
    }

    /// Load or synthesize the program for channel `index`, at the plan's
    /// transmit rate.
    pub fn program(&self, index: usize) -> Result<AudioBuffer> {
        let p = self.programs.get(index).ok_or_else(|| {
            Error::Config(format!("no program configured for channel {index}"))
        })?;
        if let Some(path) = &p.wav {
            let (buf, _) = io::read_wav(path)?;
            if buf.sample_rate_hz() != self.plan.transmit_rate_hz {
                return Err(Error::Config(format!(
                    "{}: rate {} Hz but the plan transmits at {} Hz",
                    path.display(),
                    buf.sample_rate_hz(),
                    self.plan.transmit_rate_hz
                )));
            }
            if buf.num_channels() != 1 {
                return Err(Error::Config(format!(
                    "{}: programs must be mono, this file has {} channels",
                    path.display(),
                    buf.num_channels()
                )));
            }
            return Ok(buf);
        }
        let f = p.fixture.expect("validated: wav or fixture");
        io::generate_fixture(
            f.kind,
            f.duration_s,
            f.peak,
            self.seed.wrapping_add(f.seed_offset),
            self.plan.transmit_rate_hz,
        )
    }

    /// Synthesize the ambient bed, if configured.
    pub fn ambient(&self) -> Result<Option<AudioBuffer>> {
        match &self.scene.ambient {
            None => Ok(None),
            Some(a) => crate::scene::make_ambient(
                a.kind,
                a.duration_s,
                a.level_dbfs,
                self.seed.wrapping_add(a.seed_offset),
                self.plan.transmit_rate_hz,
            )
            .map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7
out_format = "float32"

[plan]
transmit_rate_hz = 96000

[[plan.channels]]
carrier_hz = 30000.0

[[plan.channels]]
carrier_hz = 40000.0
mod_index = 0.8

[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 2.0, seed_offset = 1 }

[[programs]]
fixture = { kind = "tone", freq_hz = 2000.0, duration_s = 2.0, peak = 0.5 }

[scene]
emitter_position_m = [0.7071, -0.7071]
noise_snr_db = 60.0

[scene.ambient]
kind = "tone"
freq_hz = 440.0
duration_s = 2.0
level_dbfs = -20.0

[rx]
transparency_gain = 0.5

[decode]
left_channel = 0
right_channel = 1

[thresholds]
min_correlation = 0.99
max_leakage_db = -60.0
"#;

    #[test]
    fn full_config_parses_and_validates() {
        let cfg: RunConfig = toml::from_str(FULL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.plan.channels.len(), 2);
        assert_eq!(cfg.plan.channels[1].mod_index, 0.8);
        assert_eq!(cfg.rx.transparency_gain, 0.5);
        assert_eq!(cfg.thresholds.min_correlation, Some(0.99));
        assert_eq!(cfg.thresholds.max_crosstalk_db, None);
        let amb = cfg.scene.ambient.unwrap();
        assert_eq!(amb.kind, AmbientKind::Tone { freq_hz: 440.0 });
        let program = cfg.program(1).unwrap();
        assert_eq!(program.sample_rate_hz(), 96_000);
        assert!((program.peak() - 0.5).abs() < 1e-9);
        let bed = cfg.ambient().unwrap().unwrap();
        assert!((bed.peak() - 0.1).abs() < 1e-6);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let text = r#"
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0, seed_offset = 9 }
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.plan.channels.len(), 2); // default 30/40 kHz plan
        assert_eq!(cfg.out_format, WavFormat::Float32);
        assert_eq!(cfg.decode, DecodeConfig { left_channel: 0, right_channel: 1 });
        assert_eq!(cfg.scene.emitter_position_m, [1.0, 0.0]);
        // same fixture kind, different seed offsets: different programs
        assert_ne!(cfg.program(0).unwrap(), cfg.program(1).unwrap());
    }

    #[test]
    fn mismatched_program_count_is_rejected() {
        let text = r#"
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn program_must_pick_one_source() {
        let both = r#"
[[programs]]
wav = "x.wav"
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
"#;
        let cfg: RunConfig = toml::from_str(both).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let neither = r#"
[[programs]]
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
"#;
        let cfg: RunConfig = toml::from_str(neither).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn illegal_plan_is_rejected_with_violations() {
        let text = r#"
[plan]
transmit_rate_hz = 96000
[[plan.channels]]
carrier_hz = 46000.0
[[programs]]
fixture = { kind = "tone", freq_hz = 1000.0, duration_s = 1.0 }
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::PlanViolations(_))));
    }

    #[test]
    fn decode_channel_bounds_checked() {
        let text = r#"
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
[[programs]]
fixture = { kind = "speech_like_noise", duration_s = 1.0 }
[decode]
left_channel = 0
right_channel = 5
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg: RunConfig = toml::from_str(FULL).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
