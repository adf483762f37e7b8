//! Filter design: Butterworth low/high-pass, Chebyshev Type II band-pass and
//! a peaking (bell) equalizer, all returned as stable biquad cascades.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{Biquad, BiquadCascade};
use crate::error::{Error, Result};

/// Stopband edges of the band-pass sit at center +/- this multiple of the
/// half bandwidth, so the stated attenuation is guaranteed beyond that line.
pub const BANDPASS_STOP_EDGE_RATIO: f64 = 1.5;

const MIN_ORDER: usize = 2;
const MAX_ORDER: usize = 16;

fn check_order(order: usize) -> Result<()> {
    if order % 2 != 0 || !(MIN_ORDER..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid_design(format!(
            "order {order} must be even and within {MIN_ORDER}..={MAX_ORDER}"
        )));
    }
    Ok(())
}

fn check_corner(freq_hz: f64, sample_rate_hz: u32, what: &str) -> Result<()> {
    let nyq = sample_rate_hz as f64 / 2.0;
    if !(freq_hz > 0.0 && freq_hz < nyq) {
        return Err(Error::invalid_design(format!(
            "{what} {freq_hz} Hz outside (0, {nyq}) at {sample_rate_hz} Hz"
        )));
    }
    Ok(())
}

/// Butterworth low-pass: `order` poles (even, 2..=16), -3.01 dB at the cutoff.
pub fn design_lowpass(cutoff_hz: f64, order: usize, sample_rate_hz: u32) -> Result<BiquadCascade> {
    check_order(order)?;
    check_corner(cutoff_hz, sample_rate_hz, "low-pass cutoff")?;
    let w0 = 2.0 * PI * cutoff_hz / sample_rate_hz as f64;
    let (sin_w0, cos_w0) = w0.sin_cos();
    let sections = butterworth_qs(order)
        .map(|q| {
            let alpha = sin_w0 / (2.0 * q);
            Biquad::normalized(
                (1.0 - cos_w0) / 2.0,
                1.0 - cos_w0,
                (1.0 - cos_w0) / 2.0,
                1.0 + alpha,
                -2.0 * cos_w0,
                1.0 - alpha,
            )
        })
        .collect();
    BiquadCascade::new(sections, sample_rate_hz)
}

/// Butterworth high-pass mirror of [`design_lowpass`].
pub fn design_highpass(cutoff_hz: f64, order: usize, sample_rate_hz: u32) -> Result<BiquadCascade> {
    check_order(order)?;
    check_corner(cutoff_hz, sample_rate_hz, "high-pass cutoff")?;
    let w0 = 2.0 * PI * cutoff_hz / sample_rate_hz as f64;
    let (sin_w0, cos_w0) = w0.sin_cos();
    let sections = butterworth_qs(order)
        .map(|q| {
            let alpha = sin_w0 / (2.0 * q);
            Biquad::normalized(
                (1.0 + cos_w0) / 2.0,
                -(1.0 + cos_w0),
                (1.0 + cos_w0) / 2.0,
                1.0 + alpha,
                -2.0 * cos_w0,
                1.0 - alpha,
            )
        })
        .collect();
    BiquadCascade::new(sections, sample_rate_hz)
}

/// Section Q values that make a cascade of identical-corner biquads an exact
/// Butterworth response: Q_k = 1 / (2 cos(pi (2k+1) / (2 n))).
fn butterworth_qs(order: usize) -> impl Iterator<Item = f64> {
    let n = order as f64;
    (0..order / 2).map(move |k| {
        let theta = PI * (2.0 * k as f64 + 1.0) / (2.0 * n);
        1.0 / (2.0 * theta.cos())
    })
}

/// Peaking (bell) equalizer with exact `gain_db` at the center frequency.
/// `gain_db = 0` reduces to the identity.
pub fn design_peaking_eq(
    center_hz: f64,
    gain_db: f64,
    q: f64,
    sample_rate_hz: u32,
) -> Result<BiquadCascade> {
    check_corner(center_hz, sample_rate_hz, "eq center")?;
    if q <= 0.0 {
        return Err(Error::invalid_design(format!("eq q {q} must be positive")));
    }
    let a = 10f64.powf(gain_db / 40.0);
    let w0 = 2.0 * PI * center_hz / sample_rate_hz as f64;
    let (sin_w0, cos_w0) = w0.sin_cos();
    let alpha = sin_w0 / (2.0 * q);
    let section = Biquad::normalized(
        1.0 + alpha * a,
        -2.0 * cos_w0,
        1.0 - alpha * a,
        1.0 + alpha / a,
        -2.0 * cos_w0,
        1.0 - alpha / a,
    );
    BiquadCascade::new(vec![section], sample_rate_hz)
}

/// Chebyshev Type II band-pass. `order` is the analog prototype order (even,
/// 2..=16); the digital filter has `order` sections (2*order poles). Stopband
/// attenuation of at least `stop_atten_db` holds beyond
/// center +/- [`BANDPASS_STOP_EDGE_RATIO`] * half_bw; the passband between the
/// edges is monotonic with ripple bounded well under 1 dB for the default
/// order.
pub fn design_chebyshev2_bandpass(
    center_hz: f64,
    half_bw_hz: f64,
    stop_atten_db: f64,
    order: usize,
    sample_rate_hz: u32,
) -> Result<BiquadCascade> {
    check_order(order)?;
    if half_bw_hz <= 0.0 {
        return Err(Error::invalid_design(format!("half bandwidth {half_bw_hz} must be positive")));
    }
    if stop_atten_db < 40.0 {
        return Err(Error::invalid_design(format!(
            "stopband attenuation {stop_atten_db} dB below the 40 dB minimum"
        )));
    }
    let f_lo = center_hz - BANDPASS_STOP_EDGE_RATIO * half_bw_hz;
    let f_hi = center_hz + BANDPASS_STOP_EDGE_RATIO * half_bw_hz;
    check_corner(f_lo, sample_rate_hz, "band-pass lower stop edge")?;
    check_corner(f_hi, sample_rate_hz, "band-pass upper stop edge")?;

    let fs = sample_rate_hz as f64;
    let fs2 = 2.0 * fs;
    // Bilinear prewarp of the stopband edges, then the analog band parameters.
    let w_lo = fs2 * (PI * f_lo / fs).tan();
    let w_hi = fs2 * (PI * f_hi / fs).tan();
    let bw = w_hi - w_lo;
    let w0 = (w_lo * w_hi).sqrt();

    // Analog prototype normalized to stopband edge 1 rad/s. Upper-half-plane
    // representatives only; every transform below commutes with conjugation.
    let eps = 1.0 / (10f64.powf(stop_atten_db / 10.0) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / order as f64;
    let mut zeros: Vec<Complex64> = Vec::with_capacity(order);
    let mut poles: Vec<Complex64> = Vec::with_capacity(order);
    let mut k = 1.0_f64;
    for m in (1..order).step_by(2) {
        let theta = PI * m as f64 / (2.0 * order as f64);
        let z = Complex64::new(0.0, 1.0 / theta.sin());
        let p = 1.0
            / Complex64::new(-mu.sinh() * theta.cos(), -mu.cosh() * theta.sin());
        // gain contribution of the conjugate pair: |p|^2 / |z|^2
        k *= p.norm_sqr() / z.norm_sqr();
        zeros.push(z);
        poles.push(upper_half(p));
    }

    // Low-pass -> band-pass: each root r maps to the two roots of
    // s^2 - (bw r) s + w0^2 = 0. Keep upper-half representatives.
    let to_bandpass = |roots: &[Complex64]| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(roots.len() * 2);
        for &r in roots {
            let rl = r * (bw / 2.0);
            let d = (rl * rl - Complex64::new(w0 * w0, 0.0)).sqrt();
            out.push(upper_half(rl + d));
            out.push(upper_half(rl - d));
        }
        out
    };
    let zeros_bp = to_bandpass(&zeros);
    let poles_bp = to_bandpass(&poles);

    // Bilinear transform to the z plane; k picks up the pair-wise products
    // |fs2 - root|^2 for zeros over poles.
    let mut kd = k;
    let bilinear = |roots: &[Complex64], kd: &mut f64, numerator: bool| -> Vec<Complex64> {
        roots
            .iter()
            .map(|&s| {
                let m = (Complex64::new(fs2, 0.0) - s).norm_sqr();
                if numerator {
                    *kd *= m;
                } else {
                    *kd /= m;
                }
                upper_half((Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s))
            })
            .collect()
    };
    let zeros_d = bilinear(&zeros_bp, &mut kd, true);
    let poles_d = bilinear(&poles_bp, &mut kd, false);

    let sections = pair_into_sections(zeros_d, poles_d, kd);
    BiquadCascade::new(sections, sample_rate_hz)
}

fn upper_half(c: Complex64) -> Complex64 {
    if c.im < 0.0 {
        c.conj()
    } else {
        c
    }
}

/// Turn conjugate-pair representatives into second-order sections. Poles
/// nearest the unit circle get the nearest remaining zero pair and run last;
/// the overall gain spreads evenly across sections.
fn pair_into_sections(zeros: Vec<Complex64>, poles: Vec<Complex64>, k: f64) -> Vec<Biquad> {
    assert_eq!(zeros.len(), poles.len());
    let n = poles.len();
    let mut poles = poles;
    // closest to the unit circle first while pairing
    poles.sort_by(|a, b| {
        let da = (1.0 - a.norm()).abs();
        let db = (1.0 - b.norm()).abs();
        da.partial_cmp(&db).unwrap()
    });
    let mut remaining = zeros;
    let per_section_gain = k.powf(1.0 / n as f64);
    let mut sections: Vec<Biquad> = poles
        .iter()
        .map(|&p| {
            let (idx, _) = remaining
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - p).norm().partial_cmp(&(*b - p).norm()).unwrap()
                })
                .expect("one zero pair per pole pair");
            let z = remaining.swap_remove(idx);
            Biquad {
                b0: per_section_gain,
                b1: per_section_gain * (-2.0 * z.re),
                b2: per_section_gain * z.norm_sqr(),
                a1: -2.0 * p.re,
                a2: p.norm_sqr(),
            }
        })
        .collect();
    // run the high-Q sections last
    sections.reverse();
    sections
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::AudioBuffer;
    use crate::dsp::filter;
    use crate::testutil::{measure_tone_amplitude, sine};

    /// Steady-state gain in dB measured by filtering a tone and reading the
    /// tail amplitude, independent of the analytic response formula.
    fn measured_gain_db(cascade: &BiquadCascade, freq_hz: f64, rate: u32) -> f64 {
        let secs = 1.0_f64.max(200.0 / freq_hz);
        let x = sine(rate, freq_hz, 1.0, secs);
        let n = x.len();
        let buf = AudioBuffer::mono(rate, x).unwrap();
        let y = filter(cascade, &buf).unwrap();
        let amp = measure_tone_amplitude(y.channel(0), rate, freq_hz, n / 2);
        20.0 * amp.max(1e-300).log10()
    }

    #[test]
    fn lowpass_hits_minus_3db_at_cutoff() {
        let c = design_lowpass(4_000.0, 8, 96_000).unwrap();
        let g = measured_gain_db(&c, 4_000.0, 96_000);
        assert!((g + 3.01).abs() <= 0.5, "cutoff gain {g} dB");
    }

    #[test]
    fn lowpass_passband_flat_and_stopband_steep() {
        let c = design_lowpass(4_000.0, 8, 96_000).unwrap();
        let g1k = measured_gain_db(&c, 1_000.0, 96_000);
        assert!(g1k.abs() <= 0.05, "1 kHz gain {g1k} dB");
        let g8k = measured_gain_db(&c, 8_000.0, 96_000);
        assert!(g8k <= -45.0, "8 kHz gain {g8k} dB");
        // analytic response agrees with the measured one
        assert!((c.magnitude_db_at(8_000.0) - g8k).abs() < 0.5);
    }

    #[test]
    fn lowpass_order_and_corner_validation() {
        assert!(design_lowpass(4_000.0, 7, 96_000).is_err());
        assert!(design_lowpass(4_000.0, 0, 96_000).is_err());
        assert!(design_lowpass(4_000.0, 18, 96_000).is_err());
        assert!(design_lowpass(0.0, 8, 96_000).is_err());
        assert!(design_lowpass(48_000.0, 8, 96_000).is_err());
    }

    #[test]
    fn highpass_mirrors_lowpass() {
        let c = design_highpass(300.0, 4, 96_000).unwrap();
        let g = measured_gain_db(&c, 300.0, 96_000);
        assert!((g + 3.01).abs() <= 0.5, "corner gain {g} dB");
        assert!(measured_gain_db(&c, 2_000.0, 96_000).abs() <= 0.05);
        assert!(measured_gain_db(&c, 60.0, 96_000) <= -25.0);
    }

    #[test]
    fn peaking_eq_gain_exact_at_center() {
        let c = design_peaking_eq(30_000.0, 4.0, 2.0, 192_000).unwrap();
        let g = measured_gain_db(&c, 30_000.0, 192_000);
        assert!((g - 4.0).abs() <= 0.5, "center gain {g} dB");
        // far away it returns to unity
        assert!(measured_gain_db(&c, 2_000.0, 192_000).abs() <= 0.2);
    }

    #[test]
    fn peaking_eq_zero_gain_is_identity() {
        let c = design_peaking_eq(30_000.0, 0.0, 1.0, 192_000).unwrap();
        for s in c.sections() {
            assert!((s.b0 - 1.0).abs() < 1e-12);
            assert!((s.b1 - s.a1).abs() < 1e-12);
            assert!((s.b2 - s.a2).abs() < 1e-12);
        }
    }

    #[test]
    fn bandpass_passes_carrier_and_near_sidebands() {
        let c = design_chebyshev2_bandpass(30_000.0, 4_200.0, 60.0, 8, 192_000).unwrap();
        let g_c = measured_gain_db(&c, 30_000.0, 192_000);
        assert!(g_c.abs() <= 1.0, "carrier gain {g_c} dB");
        for f in [29_000.0, 31_000.0] {
            let g = measured_gain_db(&c, f, 192_000);
            assert!(g.abs() <= 1.0, "sideband {f} Hz gain {g} dB");
        }
    }

    #[test]
    fn bandpass_rejects_adjacent_carrier_and_stop_edges() {
        let c = design_chebyshev2_bandpass(30_000.0, 4_200.0, 60.0, 8, 192_000).unwrap();
        for f in [40_000.0, 23_000.0, 37_000.0, 20_000.0, 1_000.0] {
            let g = measured_gain_db(&c, f, 192_000);
            assert!(g <= -59.5, "{f} Hz gain {g} dB");
        }
    }

    #[test]
    fn bandpass_is_stable_and_validates_inputs() {
        let c = design_chebyshev2_bandpass(40_000.0, 4_200.0, 60.0, 8, 192_000).unwrap();
        assert!(c.is_stable());
        // edges must stay inside (0, nyquist)
        assert!(design_chebyshev2_bandpass(3_000.0, 4_200.0, 60.0, 8, 192_000).is_err());
        assert!(design_chebyshev2_bandpass(92_000.0, 4_200.0, 60.0, 8, 192_000).is_err());
        assert!(design_chebyshev2_bandpass(30_000.0, 4_200.0, 30.0, 8, 192_000).is_err());
        assert!(design_chebyshev2_bandpass(30_000.0, 4_200.0, 60.0, 7, 192_000).is_err());
    }

    #[test]
    fn corrupted_coefficients_fail_the_stability_check() {
        let c = design_chebyshev2_bandpass(30_000.0, 4_200.0, 60.0, 8, 192_000).unwrap();
        let mut sections = c.sections().to_vec();
        sections[3].a2 = 1.02; // push a pole pair outside the unit circle
        let corrupt = BiquadCascade::new(sections, 192_000);
        assert!(corrupt.is_err());
    }
}