//! Place audible programs onto ultrasonic AM carriers.
//!
//! Each channel band-limits its program, modulates it as
//! `(1 + k_a * x) * cos(2 pi f_c t)` and the composite is the gain-weighted
//! sum of all channels, peak-normalized only if it would clip.

use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::dsp::{self, design};
use crate::error::{Error, PlanViolation, Result};

/// Lowest frequency any channel may touch: keeps every sideband ultrasonic
/// with margin above the nominal 20 kHz hearing limit.
pub const MIN_ULTRASONIC_HZ: f64 = 22_000.0;
/// Minimum spacing between the occupied bands of adjacent channels.
pub const CHANNEL_GUARD_HZ: f64 = 2_000.0;
/// Prefilter order used when band-limiting programs before modulation.
pub const PREFILTER_ORDER: usize = 8;

pub const DEFAULT_TRANSMIT_RATE_HZ: u32 = 96_000;
pub const DEFAULT_AUDIO_BW_HZ: f64 = 4_000.0;
pub const DEFAULT_MOD_INDEX: f64 = 0.9;
pub const DEFAULT_CARRIERS_HZ: [f64; 2] = [30_000.0, 40_000.0];

/// One ultrasonic channel: carrier placement and modulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub carrier_hz: f64,
    #[serde(default = "default_audio_bw")]
    pub audio_bw_hz: f64,
    #[serde(default = "default_mod_index")]
    pub mod_index: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_audio_bw() -> f64 {
    DEFAULT_AUDIO_BW_HZ
}
fn default_mod_index() -> f64 {
    DEFAULT_MOD_INDEX
}
fn default_gain() -> f64 {
    1.0
}

impl ChannelSpec {
    pub fn new(carrier_hz: f64) -> ChannelSpec {
        ChannelSpec {
            carrier_hz,
            audio_bw_hz: DEFAULT_AUDIO_BW_HZ,
            mod_index: DEFAULT_MOD_INDEX,
            gain: 1.0,
        }
    }

    /// Frequency band the modulated channel occupies.
    pub fn band(&self) -> (f64, f64) {
        (self.carrier_hz - self.audio_bw_hz, self.carrier_hz + self.audio_bw_hz)
    }
}

/// The full frequency plan for one composite signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub channels: Vec<ChannelSpec>,
    #[serde(default = "default_transmit_rate")]
    pub transmit_rate_hz: u32,
}

fn default_transmit_rate() -> u32 {
    DEFAULT_TRANSMIT_RATE_HZ
}

impl Default for ChannelPlan {
    /// Two channels at 30 kHz and 40 kHz, 4 kHz audio each, at 96 kHz.
    fn default() -> Self {
        ChannelPlan {
            channels: DEFAULT_CARRIERS_HZ.iter().map(|&c| ChannelSpec::new(c)).collect(),
            transmit_rate_hz: DEFAULT_TRANSMIT_RATE_HZ,
        }
    }
}

/// Check every plan rule, returning all violations instead of the first.
pub fn validate_plan(plan: &ChannelPlan) -> Vec<PlanViolation> {
    let mut violations = Vec::new();
    let nyquist = plan.transmit_rate_hz as f64 / 2.0;
    let mut push = |channel: Option<usize>, rule: String| {
        violations.push(PlanViolation { channel, rule });
    };

    if plan.channels.is_empty() {
        push(None, "plan has no channels".into());
    }
    for (i, ch) in plan.channels.iter().enumerate() {
        if !(ch.audio_bw_hz > 0.0) {
            push(Some(i), format!("audio bandwidth {} Hz must be positive", ch.audio_bw_hz));
            continue;
        }
        let (lo, hi) = ch.band();
        if lo < MIN_ULTRASONIC_HZ {
            push(
                Some(i),
                format!("lower sideband edge {lo} Hz below the {MIN_ULTRASONIC_HZ} Hz floor"),
            );
        }
        if hi >= nyquist {
            push(Some(i), format!("upper sideband edge {hi} Hz reaches Nyquist ({nyquist} Hz)"));
        }
        if !(ch.mod_index > 0.0 && ch.mod_index <= 1.0) {
            push(Some(i), format!("modulation index {} outside (0, 1]", ch.mod_index));
        }
        if !(ch.gain > 0.0 && ch.gain <= 1.0) {
            push(Some(i), format!("gain {} outside (0, 1]", ch.gain));
        }
    }
    for i in 0..plan.channels.len() {
        for j in i + 1..plan.channels.len() {
            let (alo, ahi) = plan.channels[i].band();
            let (blo, bhi) = plan.channels[j].band();
            let gap = if ahi <= blo { blo - ahi } else if bhi <= alo { alo - bhi } else { -1.0 };
            if gap < CHANNEL_GUARD_HZ {
                push(
                    None,
                    format!(
                        "channels {i} and {j} bands closer than the {CHANNEL_GUARD_HZ} Hz guard"
                    ),
                );
            }
        }
    }
    violations
}

/// Band-limit a program before modulation (Butterworth low-pass, order 8).
pub fn prefilter(audio: &AudioBuffer, bw_hz: f64) -> Result<AudioBuffer> {
    let lp = design::design_lowpass(bw_hz, PREFILTER_ORDER, audio.sample_rate_hz())?;
    // zero-phase: band confinement without smearing the program against
    // its own timeline, so round-trip comparisons stay sample-aligned
    dsp::filtfilt(&lp, audio)
}

/// Amplitude-modulate a mono program onto one carrier. The carrier phase is
/// zero at sample zero; modulation that would fold the envelope below zero
/// (mod_index * peak > 1) is rejected with the measured peak.
pub fn am_modulate(audio: &AudioBuffer, spec: &ChannelSpec, transmit_rate_hz: u32) -> Result<AudioBuffer> {
    let samples = audio.mono_samples()?;
    if audio.sample_rate_hz() != transmit_rate_hz {
        return Err(Error::contract(format!(
            "program rate {} Hz != transmit rate {} Hz",
            audio.sample_rate_hz(),
            transmit_rate_hz
        )));
    }
    audio.check_finite()?;
    let peak = audio.peak();
    if spec.mod_index * peak > 1.0 {
        return Err(Error::Overmodulation { mod_index: spec.mod_index, measured_peak: peak });
    }
    let w = 2.0 * std::f64::consts::PI * spec.carrier_hz / transmit_rate_hz as f64;
    let out = samples
        .iter()
        .enumerate()
        .map(|(n, &x)| (1.0 + spec.mod_index * x) * (w * n as f64).cos())
        .collect();
    AudioBuffer::mono(transmit_rate_hz, out)
}

/// What `compose` did to keep the sum inside full scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComposeInfo {
    /// Factor applied to the summed signal; 1.0 when no normalization ran.
    pub normalization_factor: f64,
    /// Peak of the raw gain-weighted sum before normalization.
    pub raw_peak: f64,
}

/// Composite target after normalization: -1 dBFS.
const COMPOSITE_CEILING: f64 = 0.891250938133746; // 10^(-1/20)

/// Prefilter, modulate and sum every channel. Programs must be mono at the
/// plan's transmit rate and all the same length unless `pad` allows shorter
/// programs to be zero-extended. If the raw sum exceeds full scale it is
/// scaled down to -1 dBFS and the factor recorded.
pub fn compose(
    programs: &[AudioBuffer],
    plan: &ChannelPlan,
    pad: bool,
) -> Result<(AudioBuffer, ComposeInfo)> {
    let violations = validate_plan(plan);
    if !violations.is_empty() {
        return Err(Error::PlanViolations(violations));
    }
    if programs.len() != plan.channels.len() {
        return Err(Error::contract(format!(
            "{} programs for {} channels",
            programs.len(),
            plan.channels.len()
        )));
    }
    let max_len = programs.iter().map(|p| p.len()).max().unwrap_or(0);
    if !pad && programs.iter().any(|p| p.len() != max_len) {
        return Err(Error::contract(
            "programs differ in length and padding was not requested",
        ));
    }

    let mut sum = vec![0.0_f64; max_len];
    for (program, spec) in programs.iter().zip(&plan.channels) {
        let mut padded = program.clone();
        if padded.len() < max_len {
            let mut samples = padded.mono_samples()?.to_vec();
            samples.resize(max_len, 0.0);
            padded = AudioBuffer::mono(padded.sample_rate_hz(), samples)?;
        }
        let filtered = prefilter(&padded, spec.audio_bw_hz)?;
        let modulated = am_modulate(&filtered, spec, plan.transmit_rate_hz)?;
        for (acc, s) in sum.iter_mut().zip(modulated.channel(0)) {
            *acc += spec.gain * s;
        }
    }

    let raw_peak = sum.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
    let normalization_factor =
        if raw_peak > 1.0 { COMPOSITE_CEILING / raw_peak } else { 1.0 };
    if normalization_factor != 1.0 {
        for s in &mut sum {
            *s *= normalization_factor;
        }
    }
    let composite = AudioBuffer::mono(plan.transmit_rate_hz, sum)?;
    composite.check_finite()?;
    Ok((composite, ComposeInfo { normalization_factor, raw_peak }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{measure_tone_amplitude, sine};

    fn tone_program(rate: u32, freq: f64, amp: f64, secs: f64) -> AudioBuffer {
        AudioBuffer::mono(rate, sine(rate, freq, amp, secs)).unwrap()
    }

    #[test]
    fn default_plan_is_legal() {
        assert!(validate_plan(&ChannelPlan::default()).is_empty());
    }

    #[test]
    fn plan_rules_each_fire() {
        let mut plan = ChannelPlan::default();
        plan.channels[0].carrier_hz = 25_000.0; // lower edge 21 kHz, audible margin gone
        assert!(validate_plan(&plan).iter().any(|v| v.channel == Some(0)));

        let mut plan = ChannelPlan::default();
        plan.channels[1].carrier_hz = 45_000.0; // upper edge 49 kHz >= 48 kHz Nyquist
        assert!(validate_plan(&plan).iter().any(|v| v.channel == Some(1)));

        let mut plan = ChannelPlan::default();
        plan.channels[1].carrier_hz = 39_000.0; // 1 kHz gap < 2 kHz guard
        assert!(validate_plan(&plan).iter().any(|v| v.channel.is_none()));

        let mut plan = ChannelPlan::default();
        plan.channels[0].mod_index = 1.2;
        assert!(!validate_plan(&plan).is_empty());

        let mut plan = ChannelPlan::default();
        plan.channels[0].gain = 0.0;
        assert!(!validate_plan(&plan).is_empty());
    }

    #[test]
    fn exactly_guard_spacing_is_legal() {
        // bands 26..34 and 36..44: gap exactly 2 kHz
        let plan = ChannelPlan::default();
        assert_eq!(plan.channels[1].band().0 - plan.channels[0].band().1, 2_000.0);
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn modulated_tone_has_carrier_and_sidebands() {
        let rate = 96_000;
        let spec = ChannelSpec::new(30_000.0);
        let audio = tone_program(rate, 1_000.0, 1.0, 1.0);
        let y = am_modulate(&audio, &spec, rate).unwrap();
        let carrier = measure_tone_amplitude(y.channel(0), rate, 30_000.0, 0);
        let lsb = measure_tone_amplitude(y.channel(0), rate, 29_000.0, 0);
        let usb = measure_tone_amplitude(y.channel(0), rate, 31_000.0, 0);
        assert!((carrier - 1.0).abs() < 0.01, "carrier {carrier}");
        let expect = spec.mod_index / 2.0;
        assert!((lsb / carrier - expect).abs() / expect < 0.05, "lsb ratio {}", lsb / carrier);
        assert!((usb / carrier - expect).abs() / expect < 0.05, "usb ratio {}", usb / carrier);
    }

    #[test]
    fn envelope_never_negative_for_accepted_input() {
        let rate = 96_000;
        let spec = ChannelSpec::new(30_000.0);
        let audio = tone_program(rate, 1_000.0, 1.0, 0.5);
        let y = am_modulate(&audio, &spec, rate).unwrap();
        // |y| <= envelope and envelope = 1 + k x >= 1 - k >= 0
        for (n, &s) in y.channel(0).iter().enumerate() {
            let x = audio.channel(0)[n];
            let env = 1.0 + spec.mod_index * x;
            assert!(env >= 0.0);
            assert!(s.abs() <= env + 1e-12);
        }
    }

    #[test]
    fn overmodulation_is_rejected_with_measured_peak() {
        let rate = 96_000;
        let mut spec = ChannelSpec::new(30_000.0);
        spec.mod_index = 1.2;
        let audio = tone_program(rate, 1_000.0, 1.0, 0.1);
        match am_modulate(&audio, &spec, rate) {
            Err(Error::Overmodulation { mod_index, measured_peak }) => {
                assert_eq!(mod_index, 1.2);
                assert!((measured_peak - 1.0).abs() < 1e-6);
            }
            other => panic!("expected overmodulation, got {other:?}"),
        }
    }

    #[test]
    fn carrier_phase_starts_at_zero() {
        let rate = 96_000;
        let spec = ChannelSpec::new(30_000.0);
        let audio = AudioBuffer::mono(rate, vec![0.0; 8]).unwrap();
        let y = am_modulate(&audio, &spec, rate).unwrap();
        assert!((y.channel(0)[0] - 1.0).abs() < 1e-12); // cos(0) = 1
    }

    #[test]
    fn compose_equals_weighted_sum_of_channels() {
        let rate = 96_000;
        let mut plan = ChannelPlan::default();
        // worst-case peak is sum of gain * (1 + mod_index * program peak),
        // so 0.3 + 0.2 leaves headroom and normalization must stay off
        plan.channels[0].gain = 0.3;
        plan.channels[1].gain = 0.2;
        let a = tone_program(rate, 1_000.0, 0.9, 0.25);
        let b = tone_program(rate, 2_000.0, 0.9, 0.25);
        let (composite, info) = compose(&[a.clone(), b.clone()], &plan, false).unwrap();
        assert_eq!(info.normalization_factor, 1.0, "sum stays below full scale");

        let fa = prefilter(&a, plan.channels[0].audio_bw_hz).unwrap();
        let fb = prefilter(&b, plan.channels[1].audio_bw_hz).unwrap();
        let ma = am_modulate(&fa, &plan.channels[0], rate).unwrap();
        let mb = am_modulate(&fb, &plan.channels[1], rate).unwrap();
        for i in 0..composite.len() {
            let manual = 0.3 * ma.channel(0)[i] + 0.2 * mb.channel(0)[i];
            assert!((composite.channel(0)[i] - manual).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_normalizes_hot_sum_to_minus_one_dbfs() {
        let rate = 96_000;
        let plan = ChannelPlan::default(); // both gains 1.0: carriers alone sum near 2.0
        let a = tone_program(rate, 1_000.0, 1.0, 0.25);
        let b = tone_program(rate, 2_000.0, 1.0, 0.25);
        let (composite, info) = compose(&[a, b], &plan, false).unwrap();
        assert!(info.raw_peak > 1.0);
        assert!(info.normalization_factor < 1.0);
        let peak_db = 20.0 * composite.peak().log10();
        assert!((peak_db + 1.0).abs() < 0.01, "peak {peak_db} dBFS");
    }

    #[test]
    fn compose_length_rules() {
        let rate = 96_000;
        let plan = ChannelPlan::default();
        let a = tone_program(rate, 1_000.0, 0.5, 0.25);
        let b = tone_program(rate, 2_000.0, 0.5, 0.125);
        assert!(compose(&[a.clone(), b.clone()], &plan, false).is_err());
        let (composite, _) = compose(&[a.clone(), b], &plan, true).unwrap();
        assert_eq!(composite.len(), a.len());
    }

    #[test]
    fn compose_rejects_illegal_plan() {
        let mut plan = ChannelPlan::default();
        plan.channels[0].carrier_hz = 25_000.0;
        let a = tone_program(96_000, 1_000.0, 0.5, 0.1);
        let b = tone_program(96_000, 2_000.0, 0.5, 0.1);
        match compose(&[a, b], &plan, false) {
            Err(Error::PlanViolations(v)) => assert!(!v.is_empty()),
            other => panic!("expected plan violations, got {other:?}"),
        }
    }
}
