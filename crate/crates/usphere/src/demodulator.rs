//! Recover audible programs from a received ultrasonic composite.
//!
//! The envelope path isolates one channel's band, full-wave rectifies it and
//! low-passes the result; a rectified carrier has mean 2/pi, so scaling by
//! 2A makes the end-to-end audio gain 4*A*k/pi for modulation index k, and
//! the default A = pi/(4k) brings that to unity. The coherent path instead
//! multiplies by a synchronized carrier replica and maps 2*LPF{y*cos} - 1
//! back through 1/k; it needs the carrier phase, which the envelope path
//! does not.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::dsp::{self, design, LimiterParams};
use crate::error::{Error, Result};
use crate::modulator::{ChannelPlan, ChannelSpec};
use crate::scene::EarSignals;

pub const DEFAULT_BPF_HALF_BW_HZ: f64 = 4_200.0;
pub const DEFAULT_BPF_STOP_ATTEN_DB: f64 = 60.0;
pub const DEFAULT_BPF_ORDER: usize = 8;
pub const DEFAULT_POST_LPF_ORDER: usize = 8;
pub const DEFAULT_DC_BLOCK_HZ: f64 = 20.0;
pub const DEFAULT_AMBIENT_LPF_HZ: f64 = 20_000.0;

/// Receiver-side tuning. Defaults demodulate the default channel plan at
/// unity audio gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RxConfig {
    /// Peaking EQ at the carrier, for compensating a non-flat receiver;
    /// 0 dB leaves the signal untouched.
    pub eq_gain_db: f64,
    pub eq_q: f64,
    /// Channel-isolation band-pass around the carrier.
    pub bpf_half_bw_hz: f64,
    pub bpf_stop_atten_db: f64,
    pub bpf_order: usize,
    /// Post-detection low-pass; `None` follows the channel's audio bandwidth.
    pub post_lpf_hz: Option<f64>,
    pub post_lpf_order: usize,
    pub dc_block_hz: f64,
    /// Envelope amplification A; `None` picks pi/(4k) for unity gain.
    pub amplification: Option<f64>,
    /// How much of the ambient path [`decode_stereo`] mixes back in.
    pub transparency_gain: f64,
    /// Cutoff of the audible ambient path.
    pub ambient_lpf_hz: f64,
    pub limiter: LimiterParams,
}

impl Default for RxConfig {
    fn default() -> Self {
        RxConfig {
            eq_gain_db: 0.0,
            eq_q: 1.0,
            bpf_half_bw_hz: DEFAULT_BPF_HALF_BW_HZ,
            bpf_stop_atten_db: DEFAULT_BPF_STOP_ATTEN_DB,
            bpf_order: DEFAULT_BPF_ORDER,
            post_lpf_hz: None,
            post_lpf_order: DEFAULT_POST_LPF_ORDER,
            dc_block_hz: DEFAULT_DC_BLOCK_HZ,
            amplification: None,
            transparency_gain: 1.0,
            ambient_lpf_hz: DEFAULT_AMBIENT_LPF_HZ,
            // decoded audio is already the program; keep the safety ceiling
            // close to full scale so unity round trips stay within 1 dB
            limiter: LimiterParams { threshold_dbfs: -0.2, ..LimiterParams::default() },
        }
    }
}

impl RxConfig {
    pub fn effective_amplification(&self, spec: &ChannelSpec) -> f64 {
        self.amplification.unwrap_or(PI / (4.0 * spec.mod_index))
    }

    pub fn effective_post_lpf_hz(&self, spec: &ChannelSpec) -> f64 {
        self.post_lpf_hz.unwrap_or(spec.audio_bw_hz)
    }
}

fn check_rx(rx: &AudioBuffer, spec: &ChannelSpec) -> Result<()> {
    rx.mono_samples()?;
    rx.check_finite()?;
    let nyquist = rx.sample_rate_hz() as f64 / 2.0;
    let (_, hi) = spec.band();
    if hi >= nyquist {
        return Err(Error::contract(format!(
            "channel band reaches {hi} Hz but receive rate {} Hz only covers {nyquist} Hz",
            rx.sample_rate_hz()
        )));
    }
    if !(spec.mod_index > 0.0 && spec.mod_index <= 1.0) {
        return Err(Error::contract(format!(
            "modulation index {} outside (0, 1]",
            spec.mod_index
        )));
    }
    Ok(())
}

/// Reflection margin giving every filter's boundary artifacts a place to
/// die outside the decoded samples (50 ms, capped for short buffers).
fn chain_pad(rate: u32, len: usize) -> usize {
    (rate as usize / 20).min(len.saturating_sub(1))
}

/// Activity detection granularity and levels: 1 ms blocks of band-passed
/// peak level, active above 2% of the loudest block. The deepest legal
/// modulation leaves the envelope at (1 - k) >= 5% of its own peak, so a
/// present carrier always clears the threshold; a -60 dB noise floor never
/// does.
const ACTIVITY_BLOCK_SECS: f64 = 1e-3;
const ACTIVITY_THRESHOLD: f64 = 0.02;
const ACTIVITY_MARGIN_BLOCKS: usize = 2;

/// The half-open sample range of the band-passed signal that carries the
/// channel, or `None` when the channel is absent.
///
/// A source switching on partway through the capture (sound takes time to
/// arrive) would otherwise hit the detector with an envelope step, and the
/// DC blocker's slow recovery from that step lands on real audio. The span
/// is pulled [`ACTIVITY_MARGIN_BLOCKS`] inside the active region on any
/// side that borders silence, so the detector only ever sees steady
/// carrier; callers keep the decoded output silent outside the span.
fn active_span(isolated: &AudioBuffer) -> Option<(usize, usize)> {
    let samples = isolated.channel(0);
    let n = samples.len();
    let block = ((isolated.sample_rate_hz() as f64 * ACTIVITY_BLOCK_SECS) as usize).max(1);
    let peaks: Vec<f64> = samples
        .chunks(block)
        .map(|c| c.iter().fold(0.0_f64, |m, &v| m.max(v.abs())))
        .collect();
    let top = peaks.iter().fold(0.0_f64, |m, &p| m.max(p));
    if top <= 0.0 {
        return None;
    }
    let threshold = ACTIVITY_THRESHOLD * top;
    let first = peaks.iter().position(|&p| p > threshold)?;
    let last = peaks.iter().rposition(|&p| p > threshold)?;
    let start = if first == 0 { 0 } else { (first + ACTIVITY_MARGIN_BLOCKS) * block };
    let end = if last == peaks.len() - 1 {
        n
    } else {
        ((last + 1).saturating_sub(ACTIVITY_MARGIN_BLOCKS) * block).min(n)
    };
    if start < end {
        Some((start, end))
    } else {
        None
    }
}

/// Band-pass the whole capture once to find where this channel's carrier
/// is present.
fn carrier_span(
    rx: &AudioBuffer,
    spec: &ChannelSpec,
    cfg: &RxConfig,
) -> Result<Option<(usize, usize)>> {
    Ok(active_span(&front_end(rx, spec, cfg)?))
}

/// EQ (optional) then channel-isolation band-pass: shared front end of both
/// detectors.
fn front_end(rx: &AudioBuffer, spec: &ChannelSpec, cfg: &RxConfig) -> Result<AudioBuffer> {
    let rate = rx.sample_rate_hz();
    let mut signal = if cfg.eq_gain_db != 0.0 {
        let eq = design::design_peaking_eq(spec.carrier_hz, cfg.eq_gain_db, cfg.eq_q, rate)?;
        dsp::filter(&eq, rx)?
    } else {
        rx.clone()
    };
    let bpf = design::design_chebyshev2_bandpass(
        spec.carrier_hz,
        cfg.bpf_half_bw_hz,
        cfg.bpf_stop_atten_db,
        cfg.bpf_order,
        rate,
    )?;
    signal = dsp::filtfilt(&bpf, &signal)?;
    Ok(signal)
}

/// Envelope detection: band-pass, rectify, strip the carrier's DC pedestal,
/// low-pass to the audio band, scale by 2A and limit. Decodes only the
/// span where the carrier is actually present and stays silent elsewhere.
pub fn demodulate_envelope(
    rx: &AudioBuffer,
    spec: &ChannelSpec,
    cfg: &RxConfig,
) -> Result<AudioBuffer> {
    check_rx(rx, spec)?;
    let rate = rx.sample_rate_hz();
    let Some((start, end)) = carrier_span(rx, spec, cfg)? else {
        return dsp::limit(&cfg.limiter, &AudioBuffer::mono(rate, vec![0.0; rx.len()])?);
    };
    // pad the raw signal, not the band-passed one: reflection shifts the
    // padding by 2*rx[start], an offset the band-pass removes; padding
    // after the band-pass would hand the rectifier an offset carrier whose
    // envelope level is wrong, stepping the DC blocker at the boundary
    let span = AudioBuffer::mono(rate, rx.channel(0)[start..end].to_vec())?;
    let pad = chain_pad(rate, span.len());
    let padded = dsp::reflect_pad(&span, pad)?;
    let isolated = front_end(&padded, spec, cfg)?;
    let rectified = dsp::rectify_abs(&isolated);
    let centered = dsp::dc_block(&rectified, cfg.dc_block_hz)?;
    let lp = design::design_lowpass(cfg.effective_post_lpf_hz(spec), cfg.post_lpf_order, rate)?;
    let smoothed = dsp::filtfilt(&lp, &centered)?;
    let amplified = dsp::scale(
        &dsp::trim_pad(&smoothed, pad)?,
        2.0 * cfg.effective_amplification(spec),
    );
    let mut out = vec![0.0; rx.len()];
    out[start..end].copy_from_slice(amplified.channel(0));
    dsp::limit(&cfg.limiter, &AudioBuffer::mono(rate, out)?)
}

/// Coherent detection: multiply by a phase-aligned carrier replica and
/// low-pass, so LPF{y*cos} = a*(1 + k*x)/2 for received carrier amplitude a.
/// The amplitude is read off the DC term, then x = (2*LPF/a - 1)/k.
pub fn demodulate_coherent(
    rx: &AudioBuffer,
    spec: &ChannelSpec,
    cfg: &RxConfig,
    carrier_phase_rad: f64,
) -> Result<AudioBuffer> {
    check_rx(rx, spec)?;
    let rate = rx.sample_rate_hz();
    let Some((start, end)) = carrier_span(rx, spec, cfg)? else {
        return Err(Error::contract(format!(
            "no carrier found at {} Hz (channel is silent)",
            spec.carrier_hz
        )));
    };
    let span = AudioBuffer::mono(rate, rx.channel(0)[start..end].to_vec())?;
    let pad = chain_pad(rate, span.len());
    let padded = dsp::reflect_pad(&span, pad)?;
    let isolated = front_end(&padded, spec, cfg)?;
    // the replica phase is referenced to the received signal's own
    // timeline: padded sample i sits at absolute sample start + i - pad
    let w = 2.0 * PI * spec.carrier_hz / rate as f64;
    let product = AudioBuffer::mono(
        rate,
        isolated
            .channel(0)
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                s * (w * ((start + i) as f64 - pad as f64) + carrier_phase_rad).cos()
            })
            .collect(),
    )?;
    let lp = design::design_lowpass(cfg.effective_post_lpf_hz(spec), cfg.post_lpf_order, rate)?;
    let smoothed = dsp::trim_pad(&dsp::filtfilt(&lp, &product)?, pad)?;
    let n = smoothed.len() as f64;
    let carrier_amplitude = 2.0 * smoothed.channel(0).iter().sum::<f64>() / n;
    if carrier_amplitude < 1e-9 {
        return Err(Error::contract(format!(
            "no carrier found at {} Hz (detected amplitude {carrier_amplitude:.3e})",
            spec.carrier_hz
        )));
    }
    let demapped: Vec<f64> = smoothed
        .channel(0)
        .iter()
        .map(|&v| (2.0 * v / carrier_amplitude - 1.0) / spec.mod_index)
        .collect();
    let mut out = vec![0.0; rx.len()];
    out[start..end].copy_from_slice(&demapped);
    dsp::limit(&cfg.limiter, &AudioBuffer::mono(rate, out)?)
}

/// The audible part of the received signal, for mixing real room sound back
/// into the decoded program.
pub fn ambient_path(rx: &AudioBuffer, cfg: &RxConfig) -> Result<AudioBuffer> {
    let lp = design::design_lowpass(cfg.ambient_lpf_hz, DEFAULT_POST_LPF_ORDER, rx.sample_rate_hz())?;
    let pad = chain_pad(rx.sample_rate_hz(), rx.len());
    dsp::trim_pad(&dsp::filtfilt(&lp, &dsp::reflect_pad(rx, pad)?)?, pad)
}

/// decoded + gain * ambient, limited to the configured ceiling.
pub fn transparency_mix(
    decoded: &AudioBuffer,
    ambient: &AudioBuffer,
    gain: f64,
    limiter: &LimiterParams,
) -> Result<AudioBuffer> {
    if decoded.sample_rate_hz() != ambient.sample_rate_hz() {
        return Err(Error::contract(format!(
            "decoded rate {} Hz != ambient rate {} Hz",
            decoded.sample_rate_hz(),
            ambient.sample_rate_hz()
        )));
    }
    if !(0.0..=4.0).contains(&gain) {
        return Err(Error::contract(format!("transparency gain {gain} outside [0, 4]")));
    }
    let d = decoded.mono_samples()?;
    let a = ambient.mono_samples()?;
    let mixed: Vec<f64> = (0..d.len().max(a.len()))
        .map(|i| {
            d.get(i).copied().unwrap_or(0.0) + gain * a.get(i).copied().unwrap_or(0.0)
        })
        .collect();
    dsp::limit(limiter, &AudioBuffer::mono(decoded.sample_rate_hz(), mixed)?)
}

/// Pick a channel out of a plan, revalidating it against the plan's
/// transmit rate so an impossible selection fails here rather than
/// downstream.
pub fn select_channel(plan: &ChannelPlan, index: usize) -> Result<&ChannelSpec> {
    let spec = plan.channels.get(index).ok_or_else(|| {
        Error::contract(format!(
            "channel {index} out of range: plan has {}",
            plan.channels.len()
        ))
    })?;
    let nyquist = plan.transmit_rate_hz as f64 / 2.0;
    let (lo, hi) = spec.band();
    if hi >= nyquist {
        return Err(Error::contract(format!(
            "channel {index} occupies {lo}..{hi} Hz, beyond the {nyquist} Hz the plan's \
             {} Hz transmit rate can carry",
            plan.transmit_rate_hz
        )));
    }
    Ok(spec)
}

/// Decode one channel per ear and mix each ear's ambient path back in,
/// returning stereo audio (left = channel `left_index`).
pub fn decode_stereo(
    ears: &EarSignals,
    plan: &ChannelPlan,
    left_index: usize,
    right_index: usize,
    cfg: &RxConfig,
) -> Result<AudioBuffer> {
    let mut outs = Vec::with_capacity(2);
    for (ear, index) in [(&ears.left, left_index), (&ears.right, right_index)] {
        let spec = select_channel(plan, index)?;
        let decoded = demodulate_envelope(ear, spec, cfg)?;
        let mixed = if cfg.transparency_gain > 0.0 {
            let amb = ambient_path(ear, cfg)?;
            transparency_mix(&decoded, &amb, cfg.transparency_gain, &cfg.limiter)?
        } else {
            decoded
        };
        outs.push(mixed.into_channels().remove(0));
    }
    let right = outs.pop().expect("two ears");
    let left = outs.pop().expect("two ears");
    AudioBuffer::stereo(ears.left.sample_rate_hz(), left, right)
}
