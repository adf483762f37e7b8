//! Lookahead peak limiter. The gain for each output sample is bounded by the
//! sliding maximum of the next `lookahead` input samples, so no output ever
//! exceeds the threshold; attack and release coefficients shape how the gain
//! moves between those bounds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimiterParams {
    pub threshold_dbfs: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub lookahead_ms: f64,
}

impl Default for LimiterParams {
    fn default() -> Self {
        LimiterParams { threshold_dbfs: -1.0, attack_ms: 1.0, release_ms: 50.0, lookahead_ms: 1.0 }
    }
}

impl LimiterParams {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold_dbfs.is_finite() {
            return Err(Error::invalid_design("limiter threshold must be finite"));
        }
        if self.attack_ms < 0.0 || self.release_ms < 0.0 || self.lookahead_ms < 0.0 {
            return Err(Error::invalid_design("limiter times must be non-negative"));
        }
        Ok(())
    }
}

/// Streaming limiter; output samples stay aligned with input sample indices.
/// Feeding blocks of any size and then calling [`Limiter::finish`] yields the
/// same samples as one big block.
#[derive(Debug, Clone)]
pub struct Limiter {
    threshold: f64,
    attack_coef: f64,
    release_coef: f64,
    lookahead: usize,
    pending: VecDeque<f64>,
    // (input index, |sample|) monotonic deque for the sliding window max
    window: VecDeque<(u64, f64)>,
    next_in: u64,
    next_out: u64,
    gain: f64,
}

fn smoothing_coef(time_ms: f64, rate: u32) -> f64 {
    if time_ms <= 0.0 {
        0.0
    } else {
        (-1.0 / (rate as f64 * time_ms / 1000.0)).exp()
    }
}

impl Limiter {
    pub fn new(params: &LimiterParams, sample_rate_hz: u32) -> Result<Limiter> {
        params.validate()?;
        Ok(Limiter {
            threshold: 10f64.powf(params.threshold_dbfs / 20.0),
            attack_coef: smoothing_coef(params.attack_ms, sample_rate_hz),
            release_coef: smoothing_coef(params.release_ms, sample_rate_hz),
            lookahead: (params.lookahead_ms / 1000.0 * sample_rate_hz as f64).round() as usize,
            pending: VecDeque::new(),
            window: VecDeque::new(),
            next_in: 0,
            next_out: 0,
            gain: 1.0,
        })
    }

    fn push_sample(&mut self, x: f64, out: &mut Vec<f64>) {
        let mag = x.abs();
        while matches!(self.window.back(), Some(&(_, m)) if m <= mag) {
            self.window.pop_back();
        }
        self.window.push_back((self.next_in, mag));
        self.pending.push_back(x);
        self.next_in += 1;
        while self.pending.len() > self.lookahead {
            self.emit(out);
        }
    }

    fn emit(&mut self, out: &mut Vec<f64>) {
        let x = self.pending.pop_front().expect("pending sample");
        while matches!(self.window.front(), Some(&(i, _)) if i < self.next_out) {
            self.window.pop_front();
        }
        let peak = self.window.front().map_or(0.0, |&(_, m)| m);
        let required = if peak > self.threshold { self.threshold / peak } else { 1.0 };
        let coef = if required < self.gain { self.attack_coef } else { self.release_coef };
        self.gain = coef * self.gain + (1.0 - coef) * required;
        // hard bound: the window contains this sample, so gain * |x| <= threshold
        self.gain = self.gain.min(required);
        out.push(x * self.gain);
        self.next_out += 1;
    }

    /// Feed a block, returning every output sample that is now determined.
    pub fn process(&mut self, input: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(input.len());
        for &x in input {
            self.push_sample(x, &mut out);
        }
        out
    }

    /// Drain the pipeline as if followed by silence.
    pub fn finish(&mut self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pending.len());
        for _ in 0..self.lookahead {
            self.push_sample(0.0, &mut out);
        }
        while !self.pending.is_empty() {
            self.emit(&mut out);
        }
        out
    }
}

/// One-shot limiting of every channel; output length equals input length and
/// samples stay index-aligned with the input.
pub fn limit(params: &LimiterParams, input: &AudioBuffer) -> Result<AudioBuffer> {
    params.validate()?;
    input.map_channels(|ch| {
        let mut lim = Limiter::new(params, input.sample_rate_hz()).expect("params validated");
        let mut out = lim.process(ch);
        out.extend(lim.finish());
        out.truncate(ch.len());
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sine;

    fn db(v: f64) -> f64 {
        20.0 * v.max(1e-300).log10()
    }

    #[test]
    fn hot_sine_peaks_land_on_threshold() {
        let params = LimiterParams { threshold_dbfs: -1.0, ..Default::default() };
        let x = AudioBuffer::mono(192_000, sine(192_000, 1_000.0, 2.0, 0.5)).unwrap();
        let y = limit(&params, &x).unwrap();
        let peak = y.peak();
        assert!((db(peak) + 1.0).abs() <= 0.1, "peak {} dBFS", db(peak));
    }

    #[test]
    fn quiet_sine_passes_untouched() {
        let params = LimiterParams { threshold_dbfs: -1.0, ..Default::default() };
        let x = AudioBuffer::mono(192_000, sine(192_000, 1_000.0, 0.1, 0.25)).unwrap();
        let y = limit(&params, &x).unwrap();
        for (a, b) in x.channel(0).iter().zip(y.channel(0)) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_sample_click_is_caught() {
        let params = LimiterParams { threshold_dbfs: -6.0, ..Default::default() };
        let rate = 192_000;
        let mut samples = sine(rate, 3_000.0, 0.0316, 0.2); // about -30 dBFS
        let mid = samples.len() / 2;
        samples[mid] = 1.0;
        let x = AudioBuffer::mono(rate, samples).unwrap();
        let y = limit(&params, &x).unwrap();
        let peak = y.peak();
        assert!(db(peak) <= -5.9, "peak {} dBFS", db(peak));
    }

    #[test]
    fn streaming_matches_one_shot() {
        let params = LimiterParams::default();
        let rate = 96_000;
        let mut samples = sine(rate, 440.0, 1.4, 0.3);
        samples[1000] = 1.9;
        let mut lim = Limiter::new(&params, rate).unwrap();
        let mut streamed = Vec::new();
        for chunk in samples.chunks(313) {
            streamed.extend(lim.process(chunk));
        }
        streamed.extend(lim.finish());
        streamed.truncate(samples.len());

        let one_shot = limit(&params, &AudioBuffer::mono(rate, samples).unwrap()).unwrap();
        assert_eq!(one_shot.channel(0), &streamed[..]);
    }

    #[test]
    fn zero_lookahead_still_bounds_output() {
        let params = LimiterParams { lookahead_ms: 0.0, threshold_dbfs: -3.0, ..Default::default() };
        let mut samples = vec![0.0; 64];
        samples[10] = 1.0;
        samples[11] = -1.0;
        let y = limit(&params, &AudioBuffer::mono(48_000, samples).unwrap()).unwrap();
        let t = 10f64.powf(-3.0 / 20.0);
        assert!(y.peak() <= t + 1e-12);
    }
}
