use crate::error::{Error, Result};

pub const MIN_SAMPLE_RATE_HZ: u32 = 8_000;
pub const MAX_SAMPLE_RATE_HZ: u32 = 384_000;

/// Multi-channel audio held as planar f64 samples, all channels equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate_hz: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioBuffer {
    /// Build a buffer, enforcing rate range, at least one channel and equal lengths.
    pub fn new(sample_rate_hz: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(MIN_SAMPLE_RATE_HZ..=MAX_SAMPLE_RATE_HZ).contains(&sample_rate_hz) {
            return Err(Error::contract(format!(
                "sample rate {sample_rate_hz} Hz outside {MIN_SAMPLE_RATE_HZ}..={MAX_SAMPLE_RATE_HZ}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::contract("buffer needs at least one channel"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::contract("all channels must have equal length"));
        }
        Ok(AudioBuffer { sample_rate_hz, channels })
    }

    pub fn mono(sample_rate_hz: u32, samples: Vec<f64>) -> Result<Self> {
        AudioBuffer::new(sample_rate_hz, vec![samples])
    }

    pub fn stereo(sample_rate_hz: u32, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        AudioBuffer::new(sample_rate_hz, vec![left, right])
    }

    pub fn silence(sample_rate_hz: u32, channels: usize, len: usize) -> Result<Self> {
        AudioBuffer::new(sample_rate_hz, vec![vec![0.0; len]; channels.max(1)])
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// The single channel of a mono buffer; contract error otherwise.
    pub fn mono_samples(&self) -> Result<&[f64]> {
        if self.num_channels() != 1 {
            return Err(Error::contract(format!(
                "expected mono buffer, got {} channels",
                self.num_channels()
            )));
        }
        Ok(&self.channels[0])
    }

    /// Largest absolute sample across all channels.
    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |acc, &s| acc.max(s.abs()))
    }

    /// Mean square across all samples of all channels.
    pub fn mean_power(&self) -> f64 {
        let total: usize = self.channels.iter().map(|c| c.len()).sum();
        if total == 0 {
            return 0.0;
        }
        let sum: f64 = self.channels.iter().flat_map(|c| c.iter()).map(|s| s * s).sum();
        sum / total as f64
    }

    /// Error if any sample is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for (ci, ch) in self.channels.iter().enumerate() {
            if let Some(pos) = ch.iter().position(|s| !s.is_finite()) {
                return Err(Error::contract(format!(
                    "non-finite sample at channel {ci}, index {pos}"
                )));
            }
        }
        Ok(())
    }

    /// Apply a per-channel sample transform, keeping rate and shape.
    pub fn map_channels<F>(&self, mut f: F) -> Result<AudioBuffer>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let channels: Vec<Vec<f64>> = self.channels.iter().map(|c| f(c)).collect();
        AudioBuffer::new(self.sample_rate_hz, channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_rate() {
        assert!(AudioBuffer::mono(4_000, vec![0.0]).is_err());
        assert!(AudioBuffer::mono(400_000, vec![0.0]).is_err());
        assert!(AudioBuffer::mono(96_000, vec![0.0]).is_ok());
    }

    #[test]
    fn rejects_ragged_channels() {
        let r = AudioBuffer::new(96_000, vec![vec![0.0; 10], vec![0.0; 9]]);
        assert!(r.is_err());
    }

    #[test]
    fn peak_and_power() {
        let b = AudioBuffer::stereo(48_000, vec![0.5, -0.25], vec![0.1, -0.8]).unwrap();
        assert_eq!(b.peak(), 0.8);
        let expect = (0.25 + 0.0625 + 0.01 + 0.64) / 4.0;
        assert!((b.mean_power() - expect).abs() < 1e-15);
    }

    #[test]
    fn finite_check_catches_nan() {
        let b = AudioBuffer::mono(48_000, vec![0.0, f64::NAN]).unwrap();
        assert!(b.check_finite().is_err());
    }
}
