//! WAV files in and out, and deterministic test-signal generation.
//!
//! Samples are floats in [-1, 1] internally. Integer WAVs are scaled by
//! 2^(bits-1): reading divides, writing multiplies and saturates the one
//! representable extreme (+1.0 maps to the largest positive code).

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::dsp::{self, design};
use crate::error::{Error, Result};
use crate::scene::pinken;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Encodings [`write_wav`] can produce and [`read_wav`] accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

/// What a WAV file declared about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavMeta {
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub format: WavFormat,
    pub frames: usize,
}

/// A read that came up short: the file ended before the parser was done.
fn is_short_read(io: &std::io::Error) -> bool {
    matches!(io.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other)
}

fn open_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if is_short_read(&io) => {
            Error::MalformedWav("file ends inside the header".into())
        }
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::FormatError(msg) => Error::MalformedWav(msg.into()),
        hound::Error::TooWide | hound::Error::UnfinishedSample => {
            Error::MalformedWav(e.to_string())
        }
        hound::Error::Unsupported => Error::UnsupportedWav("encoding not recognized".into()),
        other => Error::MalformedWav(other.to_string()),
    }
}

fn read_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if is_short_read(&io) => {
            Error::TruncatedWav("file ends inside the sample data".into())
        }
        other => open_error(other),
    }
}

/// Read a WAV file into float samples plus the header facts.
pub fn read_wav(path: &Path) -> Result<(AudioBuffer, WavMeta)> {
    let mut reader = hound::WavReader::open(path).map_err(open_error)?;
    let spec = reader.spec();
    let format = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => WavFormat::Pcm16,
        (hound::SampleFormat::Int, 24) => WavFormat::Pcm24,
        (hound::SampleFormat::Float, 32) => WavFormat::Float32,
        (f, b) => {
            return Err(Error::UnsupportedWav(format!(
                "{b}-bit {} samples; use 16/24-bit PCM or 32-bit float",
                match f {
                    hound::SampleFormat::Int => "integer",
                    hound::SampleFormat::Float => "float",
                }
            )))
        }
    };
    if spec.channels == 0 {
        return Err(Error::MalformedWav("zero channels".into()));
    }

    let interleaved: Vec<f64> = match format {
        WavFormat::Pcm16 => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32_768.0).map_err(read_error))
            .collect::<Result<_>>()?,
        WavFormat::Pcm24 => reader
            .samples::<i32>()
            .map(|s| s.map(|v| v as f64 / 8_388_608.0).map_err(read_error))
            .collect::<Result<_>>()?,
        WavFormat::Float32 => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64).map_err(read_error))
            .collect::<Result<_>>()?,
    };
    let declared = reader.len() as usize;
    if interleaved.len() < declared {
        return Err(Error::TruncatedWav(format!(
            "header declares {declared} samples, file holds {}",
            interleaved.len()
        )));
    }

    let ch = spec.channels as usize;
    let frames = interleaved.len() / ch;
    let mut channels = vec![Vec::with_capacity(frames); ch];
    for (i, &v) in interleaved.iter().enumerate() {
        channels[i % ch].push(v);
    }
    let buffer = AudioBuffer::new(spec.sample_rate as u32, channels)?;
    Ok((
        buffer,
        WavMeta { sample_rate_hz: spec.sample_rate, channels: spec.channels, format, frames },
    ))
}

/// Write a buffer as WAV. Samples beyond full scale are refused unless
/// `allow_clipping`, in which case they saturate.
pub fn write_wav(
    path: &Path,
    buffer: &AudioBuffer,
    format: WavFormat,
    allow_clipping: bool,
) -> Result<()> {
    buffer.check_finite()?;
    let peak = buffer.peak();
    if peak > 1.0 && !allow_clipping {
        return Err(Error::WouldClip { peak });
    }
    let spec = hound::WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate_hz(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Pcm24 => 24,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Float32 => hound::SampleFormat::Float,
            _ => hound::SampleFormat::Int,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(open_error)?;
    let frames = buffer.len();
    for i in 0..frames {
        for c in 0..buffer.num_channels() {
            let v = buffer.channel(c)[i];
            match format {
                WavFormat::Pcm16 => writer
                    .write_sample((v * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16),
                WavFormat::Pcm24 => writer.write_sample(
                    (v * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32,
                ),
                WavFormat::Float32 => writer.write_sample(v as f32),
            }
            .map_err(read_error)?;
        }
    }
    writer.finalize().map_err(read_error)?;
    Ok(())
}

/// Program material [`generate_fixture`] can synthesize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureKind {
    Tone { freq_hz: f64 },
    /// Exponential sweep from `start_hz` to `end_hz`.
    Sweep { start_hz: f64, end_hz: f64 },
    /// Noise with speech's rough shape: pink, band-passed 300..4000 Hz,
    /// amplitude-modulated at a syllabic 4 Hz.
    SpeechLikeNoise,
}

const MAX_FIXTURE_SECONDS: f64 = 600.0;
const SPEECH_BAND_LO_HZ: f64 = 300.0;
const SPEECH_BAND_HI_HZ: f64 = 4_000.0;
const SYLLABLE_RATE_HZ: f64 = 4.0;

/// Deterministic program material, peak-normalized to `peak`.
pub fn generate_fixture(
    kind: FixtureKind,
    duration_s: f64,
    peak: f64,
    seed: u64,
    sample_rate_hz: u32,
) -> Result<AudioBuffer> {
    if !(duration_s > 0.0 && duration_s <= MAX_FIXTURE_SECONDS) {
        return Err(Error::contract(format!(
            "fixture duration {duration_s} s outside (0, {MAX_FIXTURE_SECONDS}]"
        )));
    }
    if !(peak > 0.0 && peak <= 1.0) {
        return Err(Error::contract(format!("fixture peak {peak} outside (0, 1]")));
    }
    let rate = sample_rate_hz as f64;
    let nyquist = rate / 2.0;
    let n = (duration_s * rate).round() as usize;
    let samples: Vec<f64> = match kind {
        FixtureKind::Tone { freq_hz } => {
            if !(freq_hz > 0.0 && freq_hz < nyquist) {
                return Err(Error::contract(format!("tone at {freq_hz} Hz unrepresentable")));
            }
            let w = 2.0 * std::f64::consts::PI * freq_hz / rate;
            (0..n).map(|i| peak * (w * i as f64).sin()).collect()
        }
        FixtureKind::Sweep { start_hz, end_hz } => {
            if !(start_hz > 0.0 && start_hz < end_hz && end_hz < nyquist) {
                return Err(Error::contract(format!(
                    "sweep {start_hz}..{end_hz} Hz must rise and stay below {nyquist} Hz"
                )));
            }
            let k = (end_hz / start_hz).ln() / duration_s;
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    let phase = 2.0 * std::f64::consts::PI * start_hz / k * ((k * t).exp() - 1.0);
                    peak * phase.sin()
                })
                .collect()
        }
        FixtureKind::SpeechLikeNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let pink = AudioBuffer::mono(sample_rate_hz, pinken(&white))?;
            let hp = design::design_highpass(SPEECH_BAND_LO_HZ, 4, sample_rate_hz)?;
            let lp = design::design_lowpass(SPEECH_BAND_HI_HZ, 8, sample_rate_hz)?;
            // zero-phase keeps the skirts steep: the fixture should carry
            // as little energy outside its stated band as possible
            let shaped = dsp::filtfilt(&lp, &dsp::filtfilt(&hp, &pink)?)?;
            let w = 2.0 * std::f64::consts::PI * SYLLABLE_RATE_HZ / rate;
            let modulated: Vec<f64> = shaped
                .channel(0)
                .iter()
                .enumerate()
                // envelope swings 0.1..1.0 so it pulses without ever gating
                .map(|(i, &s)| s * (0.55 + 0.45 * (w * i as f64 - std::f64::consts::FRAC_PI_2).sin()))
                .collect();
            let max = modulated.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
            modulated.into_iter().map(|s| s * peak / max).collect()
        }
    };
    AudioBuffer::mono(sample_rate_hz, samples)
}

/// Read the data chunk only, for byte-level artifact comparisons.
pub fn file_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::band_energy_dbfs;
    use crate::testutil::sine;
    use std::io::Write;

    fn round_trip(format: WavFormat, tolerance: f64) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let buf = AudioBuffer::stereo(
            48_000,
            sine(48_000, 440.0, 0.8, 0.05),
            sine(48_000, 880.0, 0.5, 0.05),
        )
        .unwrap();
        write_wav(&path, &buf, format, false).unwrap();
        let (back, meta) = read_wav(&path).unwrap();
        assert_eq!(meta.format, format);
        assert_eq!(meta.channels, 2);
        assert_eq!(meta.sample_rate_hz, 48_000);
        assert_eq!(back.len(), buf.len());
        for c in 0..2 {
            for (a, b) in buf.channel(c).iter().zip(back.channel(c)) {
                assert!((a - b).abs() <= tolerance, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn wav_round_trips_preserve_samples() {
        round_trip(WavFormat::Pcm16, 1.0 / 32_768.0);
        round_trip(WavFormat::Pcm24, 1.0 / 8_388_608.0);
        round_trip(WavFormat::Float32, 1e-7);
    }

    #[test]
    fn write_refuses_clipping_unless_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hot.wav");
        let buf = AudioBuffer::mono(48_000, vec![0.0, 1.3, -0.2]).unwrap();
        match write_wav(&path, &buf, WavFormat::Pcm16, false) {
            Err(Error::WouldClip { peak }) => assert!((peak - 1.3).abs() < 1e-12),
            other => panic!("expected clip refusal, got {other:?}"),
        }
        write_wav(&path, &buf, WavFormat::Pcm16, true).unwrap();
        let (back, _) = read_wav(&path).unwrap();
        assert!((back.channel(0)[1] - 32_767.0 / 32_768.0).abs() < 1e-9, "saturated high sample");
    }

    #[test]
    fn malformed_header_is_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFFxxxxWAVEjunkjunkjunkjunkjunk").unwrap();
        match read_wav(&path) {
            Err(Error::MalformedWav(_)) | Err(Error::TruncatedWav(_)) => {}
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_data_is_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.wav");
        let buf = AudioBuffer::mono(48_000, sine(48_000, 440.0, 0.5, 0.1)).unwrap();
        write_wav(&path, &buf, WavFormat::Pcm16, false).unwrap();
        let bytes = file_bytes(&path).unwrap();
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(&bytes[..bytes.len() - 100]).unwrap();
        drop(f);
        match read_wav(&path) {
            Err(Error::TruncatedWav(_)) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_depth_is_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 48_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(12_345_i32).unwrap();
        }
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(Error::UnsupportedWav(_)) => {}
            other => panic!("expected unsupported error, got {other:?}"),
        }
    }

    #[test]
    fn speech_fixture_concentrates_energy_in_band() {
        let rate = 96_000;
        let s = generate_fixture(FixtureKind::SpeechLikeNoise, 2.0, 1.0, 7, rate).unwrap();
        assert!((s.peak() - 1.0).abs() < 1e-12, "peak normalized");
        let in_band = band_energy_dbfs(&s, SPEECH_BAND_LO_HZ, SPEECH_BAND_HI_HZ).unwrap();
        let total = band_energy_dbfs(&s, 0.0, 48_000.0).unwrap();
        // >= 90% of the energy inside the speech band
        assert!(in_band - total >= -0.458, "in-band {in_band} vs total {total}");
    }

    #[test]
    fn fixtures_are_deterministic() {
        let a = generate_fixture(FixtureKind::SpeechLikeNoise, 0.5, 1.0, 9, 96_000).unwrap();
        let b = generate_fixture(FixtureKind::SpeechLikeNoise, 0.5, 1.0, 9, 96_000).unwrap();
        let c = generate_fixture(FixtureKind::SpeechLikeNoise, 0.5, 1.0, 10, 96_000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sweep_touches_its_endpoints_only() {
        let rate = 96_000;
        let s =
            generate_fixture(FixtureKind::Sweep { start_hz: 500.0, end_hz: 3_000.0 }, 2.0, 0.9, 0, rate)
                .unwrap();
        let below = band_energy_dbfs(&s, 0.0, 400.0).unwrap();
        let inside = band_energy_dbfs(&s, 500.0, 3_000.0).unwrap();
        let above = band_energy_dbfs(&s, 4_000.0, 48_000.0).unwrap();
        assert!(inside > below + 30.0, "inside {inside} vs below {below}");
        assert!(inside > above + 30.0, "inside {inside} vs above {above}");
        assert!(generate_fixture(
            FixtureKind::Sweep { start_hz: 3_000.0, end_hz: 500.0 },
            1.0,
            0.9,
            0,
            rate
        )
        .is_err());
    }

    #[test]
    fn fixture_validation() {
        assert!(generate_fixture(FixtureKind::SpeechLikeNoise, 0.0, 1.0, 0, 96_000).is_err());
        assert!(generate_fixture(FixtureKind::SpeechLikeNoise, 1.0, 1.5, 0, 96_000).is_err());
        assert!(generate_fixture(FixtureKind::Tone { freq_hz: 50_000.0 }, 1.0, 1.0, 0, 96_000)
            .is_err());
    }
}
