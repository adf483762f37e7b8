//! Filter primitives shared by the whole pipeline: biquad cascades in
//! Direct Form II transposed, rectification, DC blocking, gain, a lookahead
//! limiter and the factor-two upsampler.

pub mod design;
pub mod limiter;
pub mod resample;

pub use limiter::{limit, Limiter, LimiterParams};
pub use resample::upsample_2x;

use crate::buffer::AudioBuffer;
use crate::error::{Error, Result};

/// One second-order section, a0 normalized to 1:
/// y[n] = b0*x[n] + b1*x[n-1] + b2*x[n-2] - a1*y[n-1] - a2*y[n-2]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    /// Build from unnormalized coefficients, dividing through by a0.
    pub fn normalized(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Biquad {
        Biquad { b0: b0 / a0, b1: b1 / a0, b2: b2 / a0, a1: a1 / a0, a2: a2 / a0 }
    }

    /// Larger magnitude of the two poles of z^2 + a1 z + a2.
    pub fn pole_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc >= 0.0 {
            let r = disc.sqrt();
            let p1 = (-self.a1 + r) / 2.0;
            let p2 = (-self.a1 - r) / 2.0;
            p1.abs().max(p2.abs())
        } else {
            // complex pair: |p|^2 = a2
            self.a2.abs().sqrt()
        }
    }

    /// Complex frequency response at normalized angular frequency w = 2*pi*f/fs.
    pub fn response_at(&self, w: f64) -> num_complex::Complex64 {
        use num_complex::Complex64;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = Complex64::from_polar(1.0, -2.0 * w);
        let num = Complex64::new(self.b0, 0.0) + z1 * self.b1 + z2 * self.b2;
        let den = Complex64::new(1.0, 0.0) + z1 * self.a1 + z2 * self.a2;
        num / den
    }
}

/// Per-section filter memory for Direct Form II transposed.
#[derive(Debug, Clone, Default)]
pub struct CascadeState {
    z: Vec<[f64; 2]>,
}

/// A chain of second-order sections applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
    sample_rate_hz: u32,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Biquad>, sample_rate_hz: u32) -> Result<BiquadCascade> {
        if sections.is_empty() {
            return Err(Error::invalid_design("cascade needs at least one section"));
        }
        let c = BiquadCascade { sections, sample_rate_hz };
        if !c.is_stable() {
            return Err(Error::invalid_design(format!(
                "unstable cascade: max pole radius {:.9} >= 1",
                c.max_pole_radius()
            )));
        }
        Ok(c)
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections.iter().map(|s| s.pole_radius()).fold(0.0, f64::max)
    }

    /// All poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0 - 1e-12
    }

    pub fn new_state(&self) -> CascadeState {
        CascadeState { z: vec![[0.0; 2]; self.sections.len()] }
    }

    /// Filter a block in place, carrying state across calls; feeding one large
    /// block or many small ones produces bit-identical output.
    pub fn process_block(&self, state: &mut CascadeState, samples: &mut [f64]) {
        assert_eq!(state.z.len(), self.sections.len(), "state belongs to another cascade");
        for (sec, z) in self.sections.iter().zip(state.z.iter_mut()) {
            let (b0, b1, b2, a1, a2) = (sec.b0, sec.b1, sec.b2, sec.a1, sec.a2);
            let (mut z1, mut z2) = (z[0], z[1]);
            for s in samples.iter_mut() {
                let x = *s;
                let y = b0 * x + z1;
                z1 = b1 * x - a1 * y + z2;
                z2 = b2 * x - a2 * y;
                *s = y;
            }
            *z = [z1, z2];
        }
    }

    /// Magnitude response at a frequency in Hz.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.sample_rate_hz as f64;
        self.sections.iter().map(|s| s.response_at(w).norm()).product()
    }

    pub fn magnitude_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude_at(freq_hz).max(1e-300).log10()
    }
}

/// Run every channel of a buffer through the cascade from zero initial state.
pub fn filter(cascade: &BiquadCascade, input: &AudioBuffer) -> Result<AudioBuffer> {
    if cascade.sample_rate_hz() != input.sample_rate_hz() {
        return Err(Error::contract(format!(
            "cascade designed at {} Hz, buffer is {} Hz",
            cascade.sample_rate_hz(),
            input.sample_rate_hz()
        )));
    }
    input.map_channels(|ch| {
        let mut out = ch.to_vec();
        let mut state = cascade.new_state();
        cascade.process_block(&mut state, &mut out);
        out
    })
}

/// Samples for the cascade's slowest mode to decay below ~1e-12.
fn settle_len(cascade: &BiquadCascade) -> usize {
    let r = cascade.max_pole_radius();
    let by_poles =
        if r > 1e-6 { (-27.631_021 / r.ln()).ceil() as usize } else { 0 };
    by_poles.max(8 * cascade.sections().len())
}

/// Apply the cascade forward and then backward over each channel: the
/// magnitude response acts twice and the phase cancels exactly, so nothing
/// in the passband is delayed or dispersed. Both ends are extended by odd
/// reflection long enough for the filter transient to die before it can
/// reach the real samples. Offline-only by construction.
pub fn filtfilt(cascade: &BiquadCascade, input: &AudioBuffer) -> Result<AudioBuffer> {
    if cascade.sample_rate_hz() != input.sample_rate_hz() {
        return Err(Error::contract(format!(
            "cascade designed at {} Hz, buffer is {} Hz",
            cascade.sample_rate_hz(),
            input.sample_rate_hz()
        )));
    }
    input.map_channels(|ch| {
        if ch.is_empty() {
            return Vec::new();
        }
        let n = ch.len();
        let pad = settle_len(cascade).min(n - 1);
        let (first, last) = (ch[0], ch[n - 1]);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - ch[i]));
        ext.extend_from_slice(ch);
        ext.extend((n - 1 - pad..n - 1).rev().map(|i| 2.0 * last - ch[i]));

        let mut state = cascade.new_state();
        cascade.process_block(&mut state, &mut ext);
        ext.reverse();
        let mut state = cascade.new_state();
        cascade.process_block(&mut state, &mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    })
}

/// Full-wave rectification: |x| per sample.
pub fn rectify_abs(input: &AudioBuffer) -> AudioBuffer {
    input
        .map_channels(|ch| ch.iter().map(|s| s.abs()).collect())
        .expect("shape preserved")
}

/// Single-pole DC blocker: y[n] = x[n] - x[n-1] + r*y[n-1] with
/// r chosen so the -3 dB point sits at cutoff_hz.
pub fn dc_block(input: &AudioBuffer, cutoff_hz: f64) -> Result<AudioBuffer> {
    let fs = input.sample_rate_hz() as f64;
    if cutoff_hz <= 0.0 || cutoff_hz >= fs / 2.0 {
        return Err(Error::invalid_design(format!(
            "dc block cutoff {cutoff_hz} Hz outside (0, {})",
            fs / 2.0
        )));
    }
    let r = 1.0 - 2.0 * std::f64::consts::PI * cutoff_hz / fs;
    let section = Biquad { b0: 1.0, b1: -1.0, b2: 0.0, a1: -r, a2: 0.0 };
    let cascade = BiquadCascade::new(vec![section], input.sample_rate_hz())?;
    filter(&cascade, input)
}

/// Extend both ends by odd reflection so a whole filter chain can run with
/// its boundary artifacts outside the samples that matter; undo with
/// [`trim_pad`]. `pad` must leave at least one sample to reflect around.
pub fn reflect_pad(input: &AudioBuffer, pad: usize) -> Result<AudioBuffer> {
    let n = input.len();
    if n == 0 || pad > n - 1 {
        return Err(Error::contract(format!(
            "cannot reflect-pad {pad} samples onto a {n}-sample buffer"
        )));
    }
    input.map_channels(|ch| {
        let (first, last) = (ch[0], ch[n - 1]);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - ch[i]));
        ext.extend_from_slice(ch);
        ext.extend((n - 1 - pad..n - 1).rev().map(|i| 2.0 * last - ch[i]));
        ext
    })
}

/// Drop `pad` samples from each end, inverting [`reflect_pad`].
pub fn trim_pad(input: &AudioBuffer, pad: usize) -> Result<AudioBuffer> {
    let n = input.len();
    if 2 * pad >= n {
        return Err(Error::contract(format!(
            "cannot trim {pad} samples from each end of a {n}-sample buffer"
        )));
    }
    input.map_channels(|ch| ch[pad..n - pad].to_vec())
}

/// Multiply every sample by a constant.
pub fn scale(input: &AudioBuffer, gain: f64) -> AudioBuffer {
    input
        .map_channels(|ch| ch.iter().map(|s| s * gain).collect())
        .expect("shape preserved")
}
