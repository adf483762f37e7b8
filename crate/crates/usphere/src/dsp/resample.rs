//! Exact factor-of-two upsampling: zero insertion followed by a half-band
//! windowed-sinc low-pass. Odd output samples ride the pure-delay branch of
//! the half-band kernel; even samples come from the interpolation branch.

use std::f64::consts::PI;

use crate::buffer::{AudioBuffer, MAX_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// Kernel length; odd, with the center tap at an odd index so the zero-valued
/// taps of the half-band design land on one output phase.
const TAPS: usize = 255;
const CENTER: usize = (TAPS - 1) / 2;
/// Kaiser beta giving ~100 dB stopband, comfortably past the 80 dB image spec.
const KAISER_BETA: f64 = 10.0;

pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind, by power series.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = x * x / 4.0;
    for k in 1..64 {
        term *= half_sq / (k * k) as f64;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

/// Half-band kernel with gain two in the passband to undo zero insertion.
fn half_band_kernel() -> Vec<f64> {
    let denom = bessel_i0(KAISER_BETA);
    (0..TAPS)
        .map(|j| {
            let t = j as f64 - CENTER as f64;
            if j != CENTER && (j as isize - CENTER as isize) % 2 == 0 {
                return 0.0; // sin(k*pi) taps, zero by construction
            }
            let w = bessel_i0(KAISER_BETA * (1.0 - (t / CENTER as f64).powi(2)).max(0.0).sqrt())
                / denom;
            sinc(0.5 * t) * w
        })
        .collect()
}

/// Double the sample rate of every channel; output length is exactly twice
/// the input length. The kernel is applied centered (zero delay): even
/// output samples reproduce the input exactly and odd samples interpolate
/// between them, with odd reflection supplying the samples past either end.
pub fn upsample_2x(input: &AudioBuffer) -> Result<AudioBuffer> {
    let new_rate = input
        .sample_rate_hz()
        .checked_mul(2)
        .filter(|&r| r <= MAX_SAMPLE_RATE_HZ)
        .ok_or_else(|| {
            Error::contract(format!(
                "cannot double {} Hz beyond the {MAX_SAMPLE_RATE_HZ} Hz ceiling",
                input.sample_rate_hz()
            ))
        })?;
    let kernel = half_band_kernel();
    let channels: Vec<Vec<f64>> = input
        .channels()
        .iter()
        .map(|x| {
            let n = x.len() as isize;
            let fetch = |i: isize| -> f64 {
                if i >= 0 && i < n {
                    x[i as usize]
                } else if i < 0 && -i < n {
                    2.0 * x[0] - x[(-i) as usize]
                } else if i >= n && 2 * (n - 1) - i >= 0 {
                    2.0 * x[(n - 1) as usize] - x[(2 * (n - 1) - i) as usize]
                } else if n > 0 {
                    // buffer shorter than the kernel: hold the edge value
                    x[if i < 0 { 0 } else { (n - 1) as usize }]
                } else {
                    0.0
                }
            };
            let out_len = x.len() * 2;
            let mut out = vec![0.0; out_len];
            for (m, o) in out.iter_mut().enumerate() {
                if m % 2 == 0 {
                    // the center tap is the only even-offset contribution
                    *o = x[m / 2];
                } else {
                    // odd outputs draw on the odd-offset taps (even j)
                    let mut acc = 0.0;
                    let mut j = 0;
                    while j < TAPS {
                        let iu = m as isize + CENTER as isize - j as isize;
                        debug_assert_eq!(iu % 2, 0);
                        acc += kernel[j] * fetch(iu / 2);
                        j += 2;
                    }
                    *o = acc;
                }
            }
            out
        })
        .collect();
    AudioBuffer::new(new_rate, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{measure_tone_amplitude, sine};

    #[test]
    fn length_doubles_and_rate_doubles() {
        let x = AudioBuffer::mono(96_000, vec![0.0; 1000]).unwrap();
        let y = upsample_2x(&x).unwrap();
        assert_eq!(y.len(), 2000);
        assert_eq!(y.sample_rate_hz(), 192_000);
    }

    #[test]
    fn upsample_keeps_input_samples_in_place() {
        // zero delay: even outputs are the input verbatim, and a mid-band
        // tone's interpolated odd samples land on the same sinusoid
        let fs = 96_000;
        let x = crate::testutil::sine(fs, 5_000.0, 0.5, 0.1);
        let buf = AudioBuffer::mono(fs, x.clone()).unwrap();
        let y = upsample_2x(&buf).unwrap();
        for (k, &v) in x.iter().enumerate() {
            assert_eq!(y.channel(0)[2 * k], v, "even sample {k} moved");
        }
        let w = 2.0 * PI * 5_000.0 / 192_000.0;
        for m in (1..y.len() - 1).step_by(2).skip(100).take(4_000) {
            let want = 0.5 * (w * m as f64).sin();
            assert!(
                (y.channel(0)[m] - want).abs() < 1e-4,
                "odd sample {m}: {} vs {want}",
                y.channel(0)[m]
            );
        }
    }

    #[test]
    fn kernel_is_half_band() {
        let k = half_band_kernel();
        assert!((k[CENTER] - 1.0).abs() < 1e-12);
        for (j, &v) in k.iter().enumerate() {
            if j != CENTER && (j as isize - CENTER as isize) % 2 == 0 {
                assert_eq!(v, 0.0, "tap {j} should be zero");
            }
        }
        // passband gain two at DC: sum of taps
        let dc: f64 = k.iter().sum();
        assert!((dc - 2.0).abs() < 1e-3, "dc gain {dc}");
    }

    #[test]
    fn ultrasonic_tone_amplitude_preserved() {
        let x = AudioBuffer::mono(96_000, sine(96_000, 30_000.0, 0.8, 0.5)).unwrap();
        let y = upsample_2x(&x).unwrap();
        let amp = measure_tone_amplitude(y.channel(0), 192_000, 30_000.0, 4_096);
        let err_db = 20.0 * (amp / 0.8).log10();
        assert!(err_db.abs() <= 0.2, "30 kHz error {err_db} dB");
        // the image at 66 kHz must be gone
        let image = measure_tone_amplitude(y.channel(0), 192_000, 66_000.0, 4_096);
        assert!(
            20.0 * (image / 0.8).log10() <= -80.0,
            "image level {}",
            20.0 * (image / 0.8).log10()
        );
    }

    #[test]
    fn audio_band_tones_flat_within_tenth_db() {
        for f in [500.0, 4_000.0, 12_000.0, 21_000.0] {
            let x = AudioBuffer::mono(96_000, sine(96_000, f, 0.5, 0.5)).unwrap();
            let y = upsample_2x(&x).unwrap();
            let amp = measure_tone_amplitude(y.channel(0), 192_000, f, 4_096);
            let err_db = 20.0 * (amp / 0.5).log10();
            assert!(err_db.abs() <= 0.1, "{f} Hz error {err_db} dB");
            let image = measure_tone_amplitude(y.channel(0), 192_000, 96_000.0 - f, 4_096);
            assert!(image / 0.5 <= 1e-4, "{f} Hz image {}", image / 0.5);
        }
    }

    #[test]
    fn rate_ceiling_enforced() {
        let x = AudioBuffer::mono(192_001.min(MAX_SAMPLE_RATE_HZ), vec![0.0; 16]).unwrap();
        assert!(upsample_2x(&x).is_err());
    }
}
