//! Helpers shared by unit tests: tone synthesis and quadrature amplitude
//! measurement, independent of the library's analysis pipeline.

/// A sine at `freq_hz`, amplitude `amp`, phase zero at sample zero.
pub fn sine(rate: u32, freq_hz: f64, amp: f64, secs: f64) -> Vec<f64> {
    let n = (secs * rate as f64).round() as usize;
    (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / rate as f64).sin())
        .collect()
}

/// Amplitude of the `freq_hz` component measured by correlating against
/// quadrature references over an integer number of cycles, skipping the
/// first `skip` samples so filter transients settle.
pub fn measure_tone_amplitude(samples: &[f64], rate: u32, freq_hz: f64, skip: usize) -> f64 {
    let avail = samples.len().saturating_sub(skip);
    assert!(avail > 0, "nothing left after skip");
    let cycles = (avail as f64 * freq_hz / rate as f64).floor().max(1.0);
    let n = ((cycles * rate as f64 / freq_hz).round() as usize).min(avail);
    let w = 2.0 * std::f64::consts::PI * freq_hz / rate as f64;
    let (mut sc, mut ss) = (0.0_f64, 0.0_f64);
    for (i, &x) in samples[skip..skip + n].iter().enumerate() {
        let phase = w * i as f64;
        sc += x * phase.cos();
        ss += x * phase.sin();
    }
    2.0 * (sc * sc + ss * ss).sqrt() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_measurement_recovers_amplitude() {
        let x = sine(96_000, 1_234.0, 0.35, 1.0);
        let a = measure_tone_amplitude(&x, 96_000, 1_234.0, 1_000);
        assert!((a - 0.35).abs() < 1e-3, "got {a}");
    }

    #[test]
    fn quadrature_measurement_rejects_other_tones() {
        let x = sine(96_000, 2_000.0, 1.0, 1.0);
        let a = measure_tone_amplitude(&x, 96_000, 5_000.0, 0);
        assert!(a < 1e-3, "got {a}");
    }
}
