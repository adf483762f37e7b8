//! Acoustic propagation from ultrasonic sources to a two-eared listener.
//!
//! Geometry is 2D. World angles are measured counterclockwise from +x;
//! a source azimuth relative to the listener is positive to the listener's
//! right. Ear signals are rendered at 192 kHz: per-ear delays follow the
//! spherical-head (Woodworth) model, amplitude falls off as 1/distance and
//! a cos^k directivity lobe, and an optional ambient bed plus seeded noise
//! floor complete the mix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::dsp::resample::{bessel_i0, sinc, upsample_2x};
use crate::error::{Error, Result};

/// Ear signals are always rendered at this rate.
pub const RECEIVE_RATE_HZ: u32 = 192_000;

pub const DEFAULT_HEAD_RADIUS_M: f64 = 0.0875;
pub const DEFAULT_SPEED_OF_SOUND_MPS: f64 = 343.0;
pub const MIN_SOURCE_DISTANCE_M: f64 = 0.1;

const HEAD_RADIUS_RANGE_M: (f64, f64) = (0.06, 0.12);

/// Fractional-delay interpolation kernel width.
const DELAY_TAPS: isize = 64;
const DELAY_KAISER_BETA: f64 = 8.0;

/// One emitter: where it sits, what it plays and how directional it is.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub position_m: [f64; 2],
    /// Mono composite at the transmit rate (upsampled here) or already at
    /// [`RECEIVE_RATE_HZ`].
    pub waveform: AudioBuffer,
    /// Exponent k of the cos^k radiation lobe; 0 is omnidirectional.
    pub directivity_exponent: f64,
    /// World-frame aim of the lobe; `None` points the source at the listener.
    pub facing_azimuth_rad: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SceneModel {
    pub sources: Vec<SourceSpec>,
    pub listener_position_m: [f64; 2],
    pub listener_facing_rad: f64,
    pub head_radius_m: f64,
    pub speed_of_sound_mps: f64,
    /// Audible bed mixed equally into both ears, at the transmit rate or
    /// [`RECEIVE_RATE_HZ`].
    pub ambient: Option<AudioBuffer>,
    /// White noise floor per ear at this SNR relative to the summed
    /// ultrasonic signal power; `None` disables the floor.
    pub noise_snr_db: Option<f64>,
    pub rng_seed: u64,
}

impl Default for SceneModel {
    /// One-meter frontal listener, no sources yet, no ambient or noise.
    fn default() -> Self {
        SceneModel {
            sources: Vec::new(),
            listener_position_m: [0.0, 0.0],
            listener_facing_rad: 0.0,
            head_radius_m: DEFAULT_HEAD_RADIUS_M,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND_MPS,
            ambient: None,
            noise_snr_db: None,
            rng_seed: 0,
        }
    }
}

/// What each ear hears, mono at [`RECEIVE_RATE_HZ`].
#[derive(Debug, Clone, PartialEq)]
pub struct EarSignals {
    pub left: AudioBuffer,
    pub right: AudioBuffer,
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(rad: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = rad.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

/// Per-ear arrival delays for a source at `azimuth_rad` (positive right).
/// The near ear gets zero extra delay; the far ear lags by the
/// spherical-head difference (|a| + sin|a|) * r / c in the frontal
/// hemisphere, continued as (pi - |a| + sin|a|) * r / c behind.
pub fn itd_delays(
    azimuth_rad: f64,
    head_radius_m: f64,
    speed_of_sound_mps: f64,
) -> Result<(f64, f64)> {
    if !(HEAD_RADIUS_RANGE_M.0..=HEAD_RADIUS_RANGE_M.1).contains(&head_radius_m) {
        return Err(Error::contract(format!(
            "head radius {head_radius_m} m outside {:?}",
            HEAD_RADIUS_RANGE_M
        )));
    }
    if !(speed_of_sound_mps > 0.0) {
        return Err(Error::contract("speed of sound must be positive"));
    }
    let az = wrap_angle(azimuth_rad);
    let a = az.abs();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let arc = if a <= half_pi { a + a.sin() } else { std::f64::consts::PI - a + a.sin() };
    let itd = head_radius_m / speed_of_sound_mps * arc;
    if az > 0.0 {
        Ok((itd, 0.0)) // source right: left ear is far
    } else {
        Ok((0.0, itd))
    }
}

/// Kernel for a pure fractional delay of `mu` samples (0 <= mu < 1),
/// windowed sinc over [`DELAY_TAPS`] taps.
fn fractional_kernel(mu: f64) -> Vec<f64> {
    let half = DELAY_TAPS / 2; // taps run j = -half+1 ..= half
    let edge = half as f64 + 0.5;
    let denom = bessel_i0(DELAY_KAISER_BETA);
    (1 - half..=half)
        .map(|j| {
            let t = j as f64 - mu;
            let x = (t / edge).clamp(-1.0, 1.0);
            let w = bessel_i0(DELAY_KAISER_BETA * (1.0 - x * x).sqrt()) / denom;
            sinc(t) * w
        })
        .collect()
}

/// Accumulate `gain * delay(src, delay_samples)` into `acc`.
pub(crate) fn add_delayed(acc: &mut [f64], src: &[f64], delay_samples: f64, gain: f64) {
    assert!(delay_samples >= 0.0, "negative delay");
    let q = delay_samples.floor() as isize;
    let mu = delay_samples - q as f64;
    let kernel = fractional_kernel(mu);
    let half = DELAY_TAPS / 2;
    // acc[n] += gain * sum_j kernel[j] * src[n - q - j]
    for (n, a) in acc.iter_mut().enumerate() {
        let base = n as isize - q;
        let mut sum = 0.0;
        for (ki, k) in kernel.iter().enumerate() {
            let j = ki as isize + 1 - half;
            let i = base - j;
            if i >= 0 && (i as usize) < src.len() {
                sum += k * src[i as usize];
            }
        }
        *a += gain * sum;
    }
}

fn to_receive_rate(buf: &AudioBuffer, what: &str) -> Result<AudioBuffer> {
    match buf.sample_rate_hz() {
        RECEIVE_RATE_HZ => Ok(buf.clone()),
        r if r * 2 == RECEIVE_RATE_HZ => upsample_2x(buf),
        r => Err(Error::contract(format!(
            "{what} rate {r} Hz is neither {RECEIVE_RATE_HZ} nor {}",
            RECEIVE_RATE_HZ / 2
        ))),
    }
}

/// Render the scene into the two ears.
pub fn propagate(scene: &SceneModel) -> Result<EarSignals> {
    if scene.sources.is_empty() && scene.ambient.is_none() {
        return Err(Error::contract("scene has neither sources nor ambient"));
    }
    let ups: Vec<AudioBuffer> = scene
        .sources
        .iter()
        .map(|s| {
            s.waveform.mono_samples()?;
            to_receive_rate(&s.waveform, "source waveform")
        })
        .collect::<Result<_>>()?;
    let ambient = scene
        .ambient
        .as_ref()
        .map(|a| {
            a.mono_samples()?;
            to_receive_rate(a, "ambient")
        })
        .transpose()?;

    let out_len = ups
        .iter()
        .map(|b| b.len())
        .chain(ambient.iter().map(|b| b.len()))
        .max()
        .unwrap_or(0);
    let mut left = vec![0.0_f64; out_len];
    let mut right = vec![0.0_f64; out_len];

    for (src, up) in scene.sources.iter().zip(&ups) {
        let dx = src.position_m[0] - scene.listener_position_m[0];
        let dy = src.position_m[1] - scene.listener_position_m[1];
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < MIN_SOURCE_DISTANCE_M {
            return Err(Error::contract(format!(
                "source {dist:.3} m from listener, minimum is {MIN_SOURCE_DISTANCE_M} m"
            )));
        }
        let world_to_source = dy.atan2(dx);
        let azimuth = wrap_angle(scene.listener_facing_rad - world_to_source);
        let (dl, dr) = itd_delays(azimuth, scene.head_radius_m, scene.speed_of_sound_mps)?;
        let base_delay = dist / scene.speed_of_sound_mps;

        let facing = src
            .facing_azimuth_rad
            .unwrap_or_else(|| wrap_angle(world_to_source + std::f64::consts::PI));
        let to_listener = wrap_angle(world_to_source + std::f64::consts::PI);
        let cos_off = (facing - to_listener).cos();
        if src.directivity_exponent < 0.0 {
            return Err(Error::contract("directivity exponent must be >= 0"));
        }
        let directivity = cos_off.max(0.0).powf(src.directivity_exponent);
        let gain = directivity / dist;
        if gain == 0.0 {
            continue;
        }

        let fs = RECEIVE_RATE_HZ as f64;
        add_delayed(&mut left, up.channel(0), (base_delay + dl) * fs, gain);
        add_delayed(&mut right, up.channel(0), (base_delay + dr) * fs, gain);
    }

    if let Some(snr_db) = scene.noise_snr_db {
        let sig_power = (power(&left) + power(&right)) / 2.0;
        if sig_power > 0.0 {
            let sigma = (sig_power / 10f64.powf(snr_db / 10.0)).sqrt();
            for (ear, stream) in [(&mut left, 0u64), (&mut right, 1u64)] {
                let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
                rng.set_stream(stream);
                for s in ear.iter_mut() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *s += sigma * n;
                }
            }
        }
    }

    if let Some(amb) = &ambient {
        for (a, s) in left.iter_mut().zip(amb.channel(0)) {
            *a += s;
        }
        for (a, s) in right.iter_mut().zip(amb.channel(0)) {
            *a += s;
        }
    }

    Ok(EarSignals {
        left: AudioBuffer::mono(RECEIVE_RATE_HZ, left)?,
        right: AudioBuffer::mono(RECEIVE_RATE_HZ, right)?,
    })
}

fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

/// Kinds of ambient beds [`make_ambient`] can generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmbientKind {
    Silence,
    PinkNoise,
    Tone { freq_hz: f64 },
}

const MAX_AMBIENT_SECONDS: f64 = 600.0;

/// Deterministic ambient bed at `sample_rate_hz`, peak-scaled to
/// `level_dbfs`. Pink noise is band-limited below 20 kHz so it cannot leak
/// into the ultrasonic region.
pub fn make_ambient(
    kind: AmbientKind,
    duration_s: f64,
    level_dbfs: f64,
    seed: u64,
    sample_rate_hz: u32,
) -> Result<AudioBuffer> {
    if !(duration_s > 0.0 && duration_s <= MAX_AMBIENT_SECONDS) {
        return Err(Error::contract(format!(
            "ambient duration {duration_s} s outside (0, {MAX_AMBIENT_SECONDS}]"
        )));
    }
    if level_dbfs > 0.0 {
        return Err(Error::contract(format!("ambient level {level_dbfs} dBFS above full scale")));
    }
    let n = (duration_s * sample_rate_hz as f64).round() as usize;
    let target = 10f64.powf(level_dbfs / 20.0);
    let samples = match kind {
        AmbientKind::Silence => vec![0.0; n],
        AmbientKind::Tone { freq_hz } => {
            let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz as f64;
            (0..n).map(|i| target * (w * i as f64).sin()).collect()
        }
        AmbientKind::PinkNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let white: Vec<f64> =
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let pink = pinken(&white);
            let kernel = audible_band_kernel(sample_rate_hz);
            let limited = convolve_same(&pink, &kernel);
            let peak = limited.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
            let scale = if peak > 0.0 { target / peak } else { 0.0 };
            limited.into_iter().map(|s| s * scale).collect()
        }
    };
    AudioBuffer::mono(sample_rate_hz, samples)
}

/// Paul Kellet's pink filter: white in, -3 dB/octave out.
pub(crate) fn pinken(white: &[f64]) -> Vec<f64> {
    let mut b = [0.0_f64; 7];
    white
        .iter()
        .map(|&w| {
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let pink = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            pink * 0.11
        })
        .collect()
}

/// Linear-phase low-pass keeping energy below ~17 kHz, >= 90 dB down by
/// 20 kHz (or scaled down proportionally at low sample rates).
fn audible_band_kernel(sample_rate_hz: u32) -> Vec<f64> {
    let nyq = sample_rate_hz as f64 / 2.0;
    let cutoff = (17_000.0_f64).min(0.8 * nyq);
    let transition = (3_000.0_f64).min(0.15 * nyq);
    let beta = 9.0_f64;
    let taps = {
        let dw = 2.0 * std::f64::consts::PI * transition / sample_rate_hz as f64;
        let m = ((90.0 - 8.0) / (2.285 * dw)).ceil() as usize;
        (m | 1).max(31) // odd
    };
    let center = (taps - 1) as f64 / 2.0;
    let fc = cutoff / sample_rate_hz as f64; // cycles per sample
    let denom = bessel_i0(beta);
    let mut k: Vec<f64> = (0..taps)
        .map(|j| {
            let t = j as f64 - center;
            let x = t / (center + 0.5);
            let w = bessel_i0(beta * (1.0 - x * x).max(0.0).sqrt()) / denom;
            2.0 * fc * sinc(2.0 * fc * t) * w
        })
        .collect();
    let dc: f64 = k.iter().sum();
    for v in &mut k {
        *v /= dc;
    }
    k
}

fn convolve_same(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = kernel.len() / 2;
    (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let i = n as isize + half as isize - ki as isize;
                if i >= 0 && (i as usize) < x.len() {
                    acc += k * x[i as usize];
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sine;

    const SPEC_ITD_SIDE: f64 = 6.557e-4; // (r/c)(pi/2 + 1), r = 0.0875, c = 343
    const SPEC_ITD_45: f64 = 3.805e-4; // (r/c)(pi/4 + sin(pi/4))

    #[test]
    fn woodworth_side_and_diagonal() {
        let (l, r) = itd_delays(std::f64::consts::FRAC_PI_2, 0.0875, 343.0).unwrap();
        assert_eq!(r, 0.0);
        assert!((l - SPEC_ITD_SIDE).abs() <= 1e-6, "side itd {l}");
        let closed_form = 0.0875 / 343.0 * (std::f64::consts::FRAC_PI_2 + 1.0);
        assert!((l - closed_form).abs() < 1e-15);

        let (l, r) = itd_delays(std::f64::consts::FRAC_PI_4, 0.0875, 343.0).unwrap();
        assert_eq!(r, 0.0);
        // spec quotes a rounded value; +/-2 samples at 192 kHz covers it
        assert!((l - SPEC_ITD_45).abs() <= 2.0 / 192_000.0, "diagonal itd {l}");
    }

    #[test]
    fn woodworth_edge_cases() {
        let (l, r) = itd_delays(0.0, 0.0875, 343.0).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let (l, r) = itd_delays(std::f64::consts::PI, 0.0875, 343.0).unwrap();
        assert!(l.abs() < 1e-12 && r.abs() < 1e-12, "directly behind: {l} {r}");
        // symmetric in sign, ears swapped
        let (l1, r1) = itd_delays(0.5, 0.0875, 343.0).unwrap();
        let (l2, r2) = itd_delays(-0.5, 0.0875, 343.0).unwrap();
        assert_eq!((l1, r1), (r2, l2));
        // continuous across the side
        let eps = 1e-6;
        let (a, _) = itd_delays(std::f64::consts::FRAC_PI_2 - eps, 0.0875, 343.0).unwrap();
        let (b, _) = itd_delays(std::f64::consts::FRAC_PI_2 + eps, 0.0875, 343.0).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn head_radius_validated() {
        assert!(itd_delays(0.1, 0.05, 343.0).is_err());
        assert!(itd_delays(0.1, 0.2, 343.0).is_err());
    }

    /// Delay estimate by parabolic interpolation around the cross-correlation
    /// peak, an oracle independent of the kernel under test.
    fn estimate_delay(reference: &[f64], delayed: &[f64], max_lag: usize) -> f64 {
        let mut best = (0usize, f64::MIN);
        let mut corr = vec![0.0; max_lag + 1];
        for (lag, c) in corr.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..reference.len() - lag {
                acc += reference[i] * delayed[i + lag];
            }
            *c = acc;
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        let l = best.0;
        if l == 0 || l == max_lag {
            return l as f64;
        }
        let (a, b, c) = (corr[l - 1], corr[l], corr[l + 1]);
        l as f64 + 0.5 * (a - c) / (a - 2.0 * b + c)
    }

    fn bandlimited_noise(rate: u32, n: usize, seed: u64) -> Vec<f64> {
        // sum of incommensurate tones below 0.2 * rate: exactly band-limited
        let freqs = [0.013, 0.037, 0.071, 0.113, 0.157, 0.191];
        (0..n)
            .map(|i| {
                freqs
                    .iter()
                    .enumerate()
                    .map(|(k, f)| {
                        (2.0 * std::f64::consts::PI
                            * (f * rate as f64 * i as f64 / rate as f64
                                + (seed as f64 + k as f64) * 0.37))
                            .sin()
                    })
                    .sum::<f64>()
                    / 6.0
            })
            .collect()
    }

    /// Exact oracle for a pure delay: over an integer number of cycles the
    /// quadrature phase of a test tone shifts by exactly w * delay.
    #[test]
    fn fractional_delay_accurate_to_hundredth_sample() {
        let rate = 192_000u32;
        let n = 8_192;
        let (start, win) = (700, 4_800); // window clear of both edges
        for want in [10.0, 10.45, 73.1, 559.75] {
            for freq in [1_000.0, 5_000.0, 19_000.0, 38_000.0] {
                let w = 2.0 * std::f64::consts::PI * freq / rate as f64;
                assert!((freq * win as f64 / rate as f64).fract() == 0.0);
                let src: Vec<f64> = (0..n).map(|i| (w * i as f64).sin()).collect();
                let mut out = vec![0.0; n];
                add_delayed(&mut out, &src, want, 1.0);
                let phase = |x: &[f64]| {
                    let (mut c, mut s) = (0.0, 0.0);
                    for (i, &v) in x.iter().enumerate().skip(start).take(win) {
                        c += v * (w * i as f64).cos();
                        s += v * (w * i as f64).sin();
                    }
                    c.atan2(s)
                };
                let err = wrap_angle(phase(&src) - phase(&out) - w * want) / w;
                assert!(err.abs() <= 0.01, "delay {want} at {freq} Hz: err {err} samples");
            }
        }
    }

    fn tone_source(rate: u32, freq: f64, secs: f64, pos: [f64; 2]) -> SourceSpec {
        SourceSpec {
            position_m: pos,
            waveform: AudioBuffer::mono(rate, sine(rate, freq, 0.5, secs)).unwrap(),
            directivity_exponent: 0.0,
            facing_azimuth_rad: None,
        }
    }

    #[test]
    fn ear_delay_difference_matches_model() {
        let mut scene = SceneModel::default();
        let n = 8_192;
        let wave = AudioBuffer::mono(192_000, bandlimited_noise(192_000, n, 3)).unwrap();
        // 45 degrees to the right: x = y in listener frame (facing +x)
        let d = 1.0 / 2f64.sqrt();
        scene.sources.push(SourceSpec {
            position_m: [d, -d],
            waveform: wave,
            directivity_exponent: 0.0,
            facing_azimuth_rad: None,
        });
        let ears = propagate(&scene).unwrap();
        let lag = estimate_delay(ears.right.channel(0), ears.left.channel(0), 700);
        let (want, _) = itd_delays(std::f64::consts::FRAC_PI_4, 0.0875, 343.0).unwrap();
        // 0.05 samples absorbs the parabolic-interpolation bias of the oracle
        assert!(
            (lag - want * 192_000.0).abs() <= 0.05,
            "lag {lag} vs {}",
            want * 192_000.0
        );
    }

    #[test]
    fn distance_halves_amplitude_at_double_range() {
        let mk = |dist: f64| {
            let mut scene = SceneModel::default();
            scene.sources.push(tone_source(96_000, 30_000.0, 0.2, [dist, 0.0]));
            propagate(&scene).unwrap()
        };
        let near = mk(1.0);
        let far = mk(2.0);
        let ratio_db = 10.0
            * (far.left.mean_power() / near.left.mean_power()).log10();
        assert!((ratio_db + 6.02).abs() <= 0.2, "ratio {ratio_db} dB");
    }

    #[test]
    fn directivity_attenuates_off_axis() {
        let mk = |facing: Option<f64>| {
            let mut scene = SceneModel::default();
            let mut src = tone_source(96_000, 30_000.0, 0.2, [1.0, 0.0]);
            src.directivity_exponent = 8.0;
            src.facing_azimuth_rad = facing;
            scene.sources.push(src);
            propagate(&scene).unwrap()
        };
        let on_axis = mk(None); // aimed at listener
        let off = mk(Some(std::f64::consts::PI + std::f64::consts::FRAC_PI_3));
        let ratio_db = 10.0 * (off.left.mean_power() / on_axis.left.mean_power()).log10();
        // cos(60 deg)^8 = 2^-8 = -48.2 dB
        assert!((ratio_db + 48.16).abs() <= 0.5, "ratio {ratio_db} dB");

        let behind = mk(Some(0.0)); // facing directly away
        assert_eq!(behind.left.mean_power(), 0.0);
    }

    #[test]
    fn propagation_is_linear_in_sources() {
        let a = tone_source(96_000, 30_000.0, 0.1, [1.0, 0.3]);
        let b = tone_source(96_000, 40_000.0, 0.1, [1.5, -0.7]);
        let run = |sources: Vec<SourceSpec>| {
            let scene = SceneModel { sources, ..SceneModel::default() };
            propagate(&scene).unwrap()
        };
        let both = run(vec![a.clone(), b.clone()]);
        let only_a = run(vec![a]);
        let only_b = run(vec![b]);
        let peak = both.left.peak();
        for i in 0..both.left.len() {
            let manual = only_a.left.channel(0)[i] + only_b.left.channel(0)[i];
            assert!((both.left.channel(0)[i] - manual).abs() <= 1e-12 * peak.max(1.0));
        }
    }

    #[test]
    fn propagation_is_deterministic_with_noise() {
        let mut scene = SceneModel::default();
        scene.sources.push(tone_source(96_000, 30_000.0, 0.1, [1.0, 0.0]));
        scene.noise_snr_db = Some(50.0);
        scene.rng_seed = 1234;
        let a = propagate(&scene).unwrap();
        let b = propagate(&scene).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_floor_sits_at_requested_snr() {
        let mut scene = SceneModel::default();
        scene.sources.push(tone_source(96_000, 30_000.0, 0.5, [1.0, 0.0]));
        let clean = propagate(&scene).unwrap();
        scene.noise_snr_db = Some(40.0);
        scene.rng_seed = 7;
        let noisy = propagate(&scene).unwrap();
        let noise: Vec<f64> = noisy
            .left
            .channel(0)
            .iter()
            .zip(clean.left.channel(0))
            .map(|(a, b)| a - b)
            .collect();
        let snr = 10.0 * (power(clean.left.channel(0)) / power(&noise)).log10();
        assert!((snr - 40.0).abs() <= 0.5, "snr {snr} dB");
    }

    #[test]
    fn too_close_source_rejected() {
        let mut scene = SceneModel::default();
        scene.sources.push(tone_source(96_000, 30_000.0, 0.1, [0.05, 0.0]));
        assert!(propagate(&scene).is_err());
    }

    #[test]
    fn ambient_tone_peak_matches_level() {
        let amb =
            make_ambient(AmbientKind::Tone { freq_hz: 440.0 }, 1.0, -20.0, 0, 96_000).unwrap();
        let peak_db = 20.0 * amb.peak().log10();
        assert!((peak_db + 20.0).abs() <= 0.1, "peak {peak_db} dBFS");
    }

    #[test]
    fn ambient_pink_is_deterministic_per_seed() {
        let a = make_ambient(AmbientKind::PinkNoise, 0.5, -20.0, 42, 96_000).unwrap();
        let b = make_ambient(AmbientKind::PinkNoise, 0.5, -20.0, 42, 96_000).unwrap();
        let c = make_ambient(AmbientKind::PinkNoise, 0.5, -20.0, 43, 96_000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ambient_duration_validated() {
        assert!(make_ambient(AmbientKind::Silence, 0.0, -20.0, 0, 96_000).is_err());
        assert!(make_ambient(AmbientKind::Silence, 601.0, -20.0, 0, 96_000).is_err());
    }
}
