//! Offline measurements: averaged spectra, band energies, waveform
//! alignment and interaural-delay estimation, plus the serialized metric
//! report the CLI and self test emit.
//!
//! Conventions: amplitudes are dBFS of a sine (a full-scale sine peaks at
//! 0 dBFS); band energies are dBFS of mean power referenced to 1.0 (a
//! full-scale sine carries -3.01 dBFS of power). Everything is floored at
//! -120 dBFS so silence stays representable.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::buffer::AudioBuffer;
use crate::error::{Error, Result};

/// Nothing reported below this level; keeps logs and reports finite.
pub const FLOOR_DBFS: f64 = -120.0;
pub const DEFAULT_FFT_SIZE: usize = 4_096;
pub const MIN_FFT_SIZE: usize = 1_024;
/// Alignment needs at least this much signal in common to mean anything.
pub const MIN_OVERLAP_S: f64 = 0.5;
/// Normalized correlation below this gives no usable delay estimate.
pub const ITD_CONFIDENCE_FLOOR: f64 = 0.2;

fn floor_db(db: f64) -> f64 {
    if db.is_finite() {
        db.max(FLOOR_DBFS)
    } else {
        FLOOR_DBFS
    }
}

/// Averaged magnitude spectrum (Welch: Hann window, half-overlapped
/// segments).
#[derive(Debug, Clone)]
pub struct Spectrum {
    sample_rate_hz: u32,
    fft_size: usize,
    segments: usize,
    /// Mean |X[k]|^2 over segments, k = 0..=fft_size/2.
    mean_sq: Vec<f64>,
    window_sum: f64,
    window_sq_sum: f64,
}

impl Spectrum {
    pub fn num_bins(&self) -> usize {
        self.mean_sq.len()
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.fft_size as f64
    }

    pub fn freq_of(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz()
    }

    /// Calibrated so a full-scale sine centered on a bin reads 0 dBFS.
    pub fn amplitude_dbfs(&self, bin: usize) -> f64 {
        let amp = 2.0 * self.mean_sq[bin].sqrt() / self.window_sum;
        floor_db(20.0 * amp.log10())
    }

    /// Mean power inside [lo_hz, hi_hz), in dBFS referenced to 1.0.
    pub fn band_power_dbfs(&self, lo_hz: f64, hi_hz: f64) -> Result<f64> {
        if !(lo_hz >= 0.0 && hi_hz > lo_hz) {
            return Err(Error::InvertedBand { lo_hz, hi_hz });
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if hi_hz > nyquist + self.bin_hz() / 2.0 {
            return Err(Error::contract(format!(
                "band edge {hi_hz} Hz beyond Nyquist {nyquist} Hz"
            )));
        }
        // one-sided PSD integrated over the band: sum of 2|X|^2 / (W2 * N)
        // per bin (psd * bin width), DC and Nyquist not doubled
        let last = self.mean_sq.len() - 1;
        let mut power = 0.0;
        for (k, &ms) in self.mean_sq.iter().enumerate() {
            let f = self.freq_of(k);
            if f >= lo_hz && f < hi_hz {
                let sides = if k == 0 || k == last { 1.0 } else { 2.0 };
                power += sides * ms / (self.window_sq_sum * self.fft_size as f64);
            }
        }
        Ok(floor_db(10.0 * power.log10()))
    }

    /// Loudest bin inside [lo_hz, hi_hz): (frequency, amplitude dBFS).
    pub fn peak_in_band(&self, lo_hz: f64, hi_hz: f64) -> Result<(f64, f64)> {
        if !(lo_hz >= 0.0 && hi_hz > lo_hz) {
            return Err(Error::InvertedBand { lo_hz, hi_hz });
        }
        let mut best: Option<(f64, f64)> = None;
        for k in 0..self.mean_sq.len() {
            let f = self.freq_of(k);
            if f >= lo_hz && f < hi_hz {
                let a = self.amplitude_dbfs(k);
                if best.map_or(true, |(_, b)| a > b) {
                    best = Some((f, a));
                }
            }
        }
        best.ok_or_else(|| Error::contract(format!("no bins inside {lo_hz}..{hi_hz} Hz")))
    }

    /// All bins as (freq_hz, amplitude_dbfs) rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.num_bins()).map(|k| (self.freq_of(k), self.amplitude_dbfs(k)))
    }
}

/// Welch-averaged spectrum of a mono buffer. `fft_size` must be a power of
/// two of at least [`MIN_FFT_SIZE`]; the signal must fill one segment.
pub fn welch_spectrum(signal: &AudioBuffer, fft_size: usize) -> Result<Spectrum> {
    let x = signal.mono_samples()?;
    if fft_size < MIN_FFT_SIZE || !fft_size.is_power_of_two() {
        return Err(Error::contract(format!(
            "fft size {fft_size} must be a power of two >= {MIN_FFT_SIZE}"
        )));
    }
    if x.len() < fft_size {
        return Err(Error::contract(format!(
            "signal of {} samples shorter than one {fft_size}-sample segment",
            x.len()
        )));
    }
    let window: Vec<f64> = (0..fft_size)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / fft_size as f64).cos()))
        .collect();
    let window_sum: f64 = window.iter().sum();
    let window_sq_sum: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let hop = fft_size / 2;
    let mut mean_sq = vec![0.0; fft_size / 2 + 1];
    let mut segments = 0usize;
    let mut start = 0;
    while start + fft_size <= x.len() {
        let mut buf: Vec<Complex<f64>> = x[start..start + fft_size]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex::new(s * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, acc) in mean_sq.iter_mut().enumerate() {
            *acc += buf[k].norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    for acc in &mut mean_sq {
        *acc /= segments as f64;
    }
    Ok(Spectrum {
        sample_rate_hz: signal.sample_rate_hz(),
        fft_size,
        segments,
        mean_sq,
        window_sum,
        window_sq_sum,
    })
}

/// Mean power of `signal` inside [lo_hz, hi_hz), in dBFS. Convenience over
/// [`welch_spectrum`] + [`Spectrum::band_power_dbfs`].
pub fn band_energy_dbfs(signal: &AudioBuffer, lo_hz: f64, hi_hz: f64) -> Result<f64> {
    let n = signal.len();
    let fft_size = if n >= DEFAULT_FFT_SIZE { DEFAULT_FFT_SIZE } else { MIN_FFT_SIZE };
    welch_spectrum(signal, fft_size)?.band_power_dbfs(lo_hz, hi_hz)
}

/// How one waveform lines up against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Normalized cross-correlation at the best lag, in [-1, 1].
    pub correlation: f64,
    /// Samples the candidate lags the reference (positive = later).
    pub lag_samples: i64,
    /// Least-squares amplitude of the candidate relative to the reference.
    pub gain: f64,
}

/// Raw linear cross-correlation c[l] = sum_n a[n] * b[n + l] for
/// l in [-max_lag, max_lag], computed in one FFT pass. Returned indexed by
/// lag + max_lag.
fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    let size = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex<f64>> =
        a.iter().map(|&v| Complex::new(v, 0.0)).chain(std::iter::repeat(Complex::new(0.0, 0.0))).take(size).collect();
    let mut fb: Vec<Complex<f64>> =
        b.iter().map(|&v| Complex::new(v, 0.0)).chain(std::iter::repeat(Complex::new(0.0, 0.0))).take(size).collect();
    fft.process(&mut fa);
    fft.process(&mut fb);
    let mut prod: Vec<Complex<f64>> =
        fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    ifft.process(&mut prod);
    let scale = 1.0 / size as f64;
    (-(max_lag as i64)..=max_lag as i64)
        .map(|l| {
            let idx = if l >= 0 { l as usize } else { size - (-l) as usize };
            prod[idx].re * scale
        })
        .collect()
}

fn prefix_energy(x: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(x.len() + 1);
    let mut acc = 0.0;
    p.push(0.0);
    for &v in x {
        acc += v * v;
        p.push(acc);
    }
    p
}

/// Energies of the overlapping stretches of `a` and `b` at lag `l`
/// (b shifted later by l), plus the overlap length in samples.
fn overlap_energies(
    pa: &[f64],
    pb: &[f64],
    la: usize,
    lb: usize,
    l: i64,
) -> (f64, f64, usize) {
    // pairs a[n] * b[n + l]: n in [max(0, -l), min(la, lb - l))
    let n0 = (-l).max(0) as usize;
    let n1 = (la as i64).min(lb as i64 - l).max(n0 as i64) as usize;
    if n1 <= n0 {
        return (0.0, 0.0, 0);
    }
    let ea = pa[n1] - pa[n0];
    let b0 = (n0 as i64 + l) as usize;
    let b1 = (n1 as i64 + l) as usize;
    let eb = pb[b1] - pb[b0];
    (ea, eb, n1 - n0)
}

/// Best gain-invariant match of `candidate` against `reference` over lags up
/// to `max_lag_s`. Errors with [`Error::InsufficientOverlap`] when fewer
/// than [`MIN_OVERLAP_S`] seconds remain in common at every candidate lag.
pub fn aligned_similarity(
    reference: &AudioBuffer,
    candidate: &AudioBuffer,
    max_lag_s: f64,
) -> Result<Alignment> {
    if reference.sample_rate_hz() != candidate.sample_rate_hz() {
        return Err(Error::contract(format!(
            "rates differ: {} vs {} Hz",
            reference.sample_rate_hz(),
            candidate.sample_rate_hz()
        )));
    }
    let rate = reference.sample_rate_hz() as f64;
    let a = reference.mono_samples()?;
    let b = candidate.mono_samples()?;
    if !(max_lag_s >= 0.0) {
        return Err(Error::contract("max lag must be non-negative"));
    }
    let max_lag = (max_lag_s * rate).round() as usize;
    let need = (MIN_OVERLAP_S * rate).ceil() as usize;

    let corr = cross_correlation(a, b, max_lag);
    let (pa, pb) = (prefix_energy(a), prefix_energy(b));
    let mut best: Option<(f64, i64, f64)> = None;
    let mut longest_overlap = 0usize;
    for (i, &c) in corr.iter().enumerate() {
        let l = i as i64 - max_lag as i64;
        let (ea, eb, overlap) = overlap_energies(&pa, &pb, a.len(), b.len(), l);
        longest_overlap = longest_overlap.max(overlap);
        if overlap < need || ea <= 0.0 || eb <= 0.0 {
            continue;
        }
        let r = c / (ea * eb).sqrt();
        if best.map_or(true, |(br, _, _)| r > br) {
            best = Some((r, l, c / ea));
        }
    }
    match best {
        Some((correlation, lag_samples, gain)) => Ok(Alignment { correlation, lag_samples, gain }),
        None => Err(Error::InsufficientOverlap {
            got_s: longest_overlap as f64 / rate,
            need_s: MIN_OVERLAP_S,
        }),
    }
}

/// Signal-to-residual ratio after the candidate is aligned to the
/// reference: what is left once `gain * reference(shifted)` is subtracted,
/// relative to the fitted signal itself. Perfect copies give a large value,
/// floored at the negative of [`FLOOR_DBFS`]'s magnitude counterpart.
pub fn aligned_snr_db(
    reference: &AudioBuffer,
    candidate: &AudioBuffer,
    alignment: &Alignment,
) -> Result<f64> {
    let a = reference.mono_samples()?;
    let b = candidate.mono_samples()?;
    let l = alignment.lag_samples;
    let n0 = (-l).max(0) as usize;
    let n1 = (a.len() as i64).min(b.len() as i64 - l).max(n0 as i64) as usize;
    if n1 <= n0 {
        return Err(Error::InsufficientOverlap { got_s: 0.0, need_s: MIN_OVERLAP_S });
    }
    let mut signal = 0.0;
    let mut residual = 0.0;
    for n in n0..n1 {
        let fitted = alignment.gain * a[n];
        let r = b[(n as i64 + l) as usize] - fitted;
        signal += fitted * fitted;
        residual += r * r;
    }
    if residual <= 0.0 {
        return Ok(-FLOOR_DBFS); // bit-exact match: report the ceiling
    }
    Ok((10.0 * (signal / residual).log10()).min(-FLOOR_DBFS))
}

/// Interaural time difference, in seconds, positive when the left signal
/// lags the right (a source on the listener's right). The integer-lag
/// correlation peak is refined with its two neighbors, so the estimate is
/// good to a fraction of a sample. Fails with [`Error::UndefinedItd`] when
/// the ears don't correlate.
pub fn measure_itd(left: &AudioBuffer, right: &AudioBuffer, max_lag_s: f64) -> Result<f64> {
    if left.sample_rate_hz() != right.sample_rate_hz() {
        return Err(Error::contract("ear sample rates differ"));
    }
    let rate = left.sample_rate_hz() as f64;
    let r = right.mono_samples()?;
    let l = left.mono_samples()?;
    let max_lag = (max_lag_s * rate).round() as usize;
    if max_lag == 0 {
        return Err(Error::contract("max lag must cover at least one sample"));
    }

    // c[i] = sum_n right[n] * left[n + lag]: peak at lag = left's delay
    let corr = cross_correlation(r, l, max_lag);
    let (pr, pl) = (prefix_energy(r), prefix_energy(l));
    let mut best: Option<(f64, usize)> = None;
    for (i, &c) in corr.iter().enumerate() {
        let lag = i as i64 - max_lag as i64;
        let (er, el, overlap) = overlap_energies(&pr, &pl, r.len(), l.len(), lag);
        if overlap == 0 || er <= 0.0 || el <= 0.0 {
            continue;
        }
        let norm = c / (er * el).sqrt();
        if best.map_or(true, |(b, _)| norm > b) {
            best = Some((norm, i));
        }
    }
    let (peak, i) = best.ok_or(Error::UndefinedItd)?;
    if peak < ITD_CONFIDENCE_FLOOR {
        return Err(Error::UndefinedItd);
    }
    let mut lag = i as f64 - max_lag as f64;
    if i > 0 && i + 1 < corr.len() {
        let (ya, yb, yc) = (corr[i - 1], corr[i], corr[i + 1]);
        let denom = ya - 2.0 * yb + yc;
        if denom < 0.0 {
            lag += 0.5 * (ya - yc) / denom;
        }
    }
    Ok(lag / rate)
}

/// How much of another channel's program bleeds into a decode: energy of
/// the other program's band in `target` minus its energy in the decode
/// that actually carries it. Zero when comparing a decode against itself.
pub fn crosstalk_db(
    target: &AudioBuffer,
    other_solo: &AudioBuffer,
    band_lo_hz: f64,
    band_hi_hz: f64,
) -> Result<f64> {
    let in_target = band_energy_dbfs(target, band_lo_hz, band_hi_hz)?;
    let direct = band_energy_dbfs(other_solo, band_lo_hz, band_hi_hz)?;
    Ok(in_target - direct)
}

/// One measured quantity with its verdict. A `value` of `None` means the
/// quantity was undefined for this run (e.g. no measurable interaural
/// delay); it serializes as JSON null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: Option<f64>,
    pub unit: String,
    /// Human-readable requirement, e.g. "<= -60 dB".
    pub requirement: String,
    pub pass: bool,
}

impl Metric {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        unit: impl Into<String>,
        requirement: impl Into<String>,
        pass: bool,
    ) -> Metric {
        Metric {
            name: name.into(),
            value: Some(value),
            unit: unit.into(),
            requirement: requirement.into(),
            pass,
        }
    }

    pub fn null(
        name: impl Into<String>,
        unit: impl Into<String>,
        requirement: impl Into<String>,
        pass: bool,
    ) -> Metric {
        Metric {
            name: name.into(),
            value: None,
            unit: unit.into(),
            requirement: requirement.into(),
            pass,
        }
    }
}

/// Header line of a serialized report. `normalization_factor` and
/// `config_echo` are populated by `analyze`, which has a config to echo;
/// the self test has neither and omits them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<serde_json::Value>,
}

impl ReportHeader {
    pub fn new(seed: u64) -> ReportHeader {
        ReportHeader {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            seed,
            normalization_factor: None,
            config_echo: None,
        }
    }
}

pub const REPORT_FORMAT: &str = "usphere-report";
pub const REPORT_VERSION: u32 = 1;

/// Serialize a report as JSON lines: one header object, then one object per
/// metric. Contains no clocks or timers, so identical runs produce
/// identical bytes.
pub fn render_report(header: &ReportHeader, metrics: &[Metric]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(header).map_err(|e| Error::Config(e.to_string()))?);
    out.push('\n');
    for m in metrics {
        out.push_str(&serde_json::to_string(m).map_err(|e| Error::Config(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse a report produced by [`render_report`].
pub fn parse_report(text: &str) -> Result<(ReportHeader, Vec<Metric>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: ReportHeader = lines
        .next()
        .ok_or_else(|| Error::Config("empty report".into()))
        .and_then(|l| serde_json::from_str(l).map_err(|e| Error::Config(e.to_string())))?;
    if header.format != REPORT_FORMAT {
        return Err(Error::Config(format!("not a report: format {:?}", header.format)));
    }
    let metrics = lines
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<Metric>>>()?;
    Ok((header, metrics))
}

/// Spectrum as a two-column CSV ("freq_hz,amplitude_dbfs").
pub fn render_spectrum_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("freq_hz,amplitude_dbfs\n");
    for (f, a) in spectrum.rows() {
        out.push_str(&format!("{f:.3},{a:.3}\n"));
    }
    out
}
