//! C ABI over the pipeline. A run handle owns a config plus whatever stages
//! have produced so far; callers advance it with `encode`, `simulate`,
//! `decode` and `analyze`, then read samples and the report back out.
//!
//! Conventions:
//! - every fallible call returns a [`UsphereStatus`]; `USPHERE_STATUS_OK` is 0
//! - on any failure, `usphere_last_error()` describes it; the pointer is
//!   valid on the calling thread until its next failing call
//! - pointers returned for samples and reports are owned by the run handle
//!   and stay valid until the next stage call on that handle or
//!   `usphere_run_free`
//! - handles are not thread-safe; share them only with external locking

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use usphere::analysis::{render_report, ReportHeader};
use usphere::config::RunConfig;
use usphere::error::Error;
use usphere::pipeline::{self, EncodeOutput};
use usphere::scene::EarSignals;
use usphere::AudioBuffer;

/// Result of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsphereStatus {
    /// The call succeeded.
    Ok = 0,
    /// The call ran to completion but a configured quality gate failed.
    GateFailure = 1,
    /// Configuration or argument problem the caller can fix.
    ConfigError = 2,
    /// File or data-format problem.
    IoError = 3,
    /// A required pointer argument was null.
    NullArgument = 4,
    /// Stages called out of order (for example `simulate` before `encode`).
    StateError = 5,
    /// An internal invariant failed; the handle is still safe to free.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(clean).expect("nul bytes stripped");
    });
}

fn status_for(err: &Error) -> UsphereStatus {
    match err {
        Error::Io(_)
        | Error::MalformedWav(_)
        | Error::UnsupportedWav(_)
        | Error::TruncatedWav(_)
        | Error::WouldClip { .. } => UsphereStatus::IoError,
        _ => UsphereStatus::ConfigError,
    }
}

fn fail(err: &Error) -> UsphereStatus {
    let status = status_for(err);
    set_error(err.to_string());
    status
}

fn fail_with(status: UsphereStatus, msg: &str) -> UsphereStatus {
    set_error(msg.to_string());
    status
}

/// Wrap an entry point so a panic can never unwind across the boundary.
fn guarded(f: impl FnOnce() -> UsphereStatus) -> UsphereStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            fail_with(UsphereStatus::Panic, &format!("internal panic: {msg}"))
        }
    }
}

/// One experiment in flight: the config plus every artifact produced so far.
pub struct UsphereRun {
    cfg: RunConfig,
    enc: Option<EncodeOutput>,
    ears: Option<EarSignals>,
    decoded: Option<AudioBuffer>,
    decoded_pair: (usize, usize),
    report: Option<CString>,
    all_pass: bool,
}

impl UsphereRun {
    fn new(cfg: RunConfig) -> Box<UsphereRun> {
        let decoded_pair = (cfg.decode.left_channel, cfg.decode.right_channel);
        Box::new(UsphereRun {
            cfg,
            enc: None,
            ears: None,
            decoded: None,
            decoded_pair,
            report: None,
            all_pass: false,
        })
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, UsphereStatus> {
    if ptr.is_null() {
        return Err(fail_with(UsphereStatus::NullArgument, &format!("{name} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail_with(UsphereStatus::ConfigError, &format!("{name} is not valid UTF-8"))
    })
}

fn open_run(
    cfg: Result<RunConfig, Error>,
    out: *mut *mut UsphereRun,
) -> UsphereStatus {
    if out.is_null() {
        return fail_with(UsphereStatus::NullArgument, "out handle pointer is null");
    }
    match cfg {
        Ok(cfg) => {
            unsafe { *out = Box::into_raw(UsphereRun::new(cfg)) };
            UsphereStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn usphere_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last failure on this thread; empty string if none yet.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn usphere_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a TOML config file and hand back a fresh run handle.
///
/// # Safety
/// `config_path` must be a nul-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_open(
    config_path: *const c_char,
    out: *mut *mut UsphereRun,
) -> UsphereStatus {
    guarded(|| {
        let path = match cstr_arg(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        open_run(RunConfig::load(Path::new(path)), out)
    })
}

/// Parse a TOML config from memory and hand back a fresh run handle.
///
/// # Safety
/// `config_toml` must be a nul-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_open_str(
    config_toml: *const c_char,
    out: *mut *mut UsphereRun,
) -> UsphereStatus {
    guarded(|| {
        let text = match cstr_arg(config_toml, "config_toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        open_run(RunConfig::from_toml_str(text, "inline config"), out)
    })
}

unsafe fn run_arg<'a>(run: *mut UsphereRun) -> Result<&'a mut UsphereRun, UsphereStatus> {
    if run.is_null() {
        return Err(fail_with(UsphereStatus::NullArgument, "run handle is null"));
    }
    Ok(&mut *run)
}

/// Override the config's RNG seed. Only legal before `encode`.
///
/// # Safety
/// `run` must be a live handle from one of the open calls.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_set_seed(
    run: *mut UsphereRun,
    seed: u64,
) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if run.enc.is_some() {
            return fail_with(
                UsphereStatus::StateError,
                "seed can only change before encode has run",
            );
        }
        run.cfg.seed = seed;
        UsphereStatus::Ok
    })
}

/// Synthesize the programs and modulate the composite.
///
/// # Safety
/// `run` must be a live handle from one of the open calls.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_encode(run: *mut UsphereRun) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        match pipeline::encode(&run.cfg) {
            Ok(enc) => {
                run.enc = Some(enc);
                // downstream artifacts are stale now
                run.ears = None;
                run.decoded = None;
                run.report = None;
                UsphereStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Propagate the composite through the configured scene.
///
/// # Safety
/// `run` must be a live handle from one of the open calls.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_simulate(run: *mut UsphereRun) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let Some(enc) = &run.enc else {
            return fail_with(UsphereStatus::StateError, "simulate needs encode first");
        };
        match pipeline::simulate(&run.cfg, enc.composite.clone()) {
            Ok(ears) => {
                run.ears = Some(ears);
                run.decoded = None;
                run.report = None;
                UsphereStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Demodulate the simulated ears. Pass a negative channel to use the
/// config's pair; a non-negative value decodes that channel into both ears.
///
/// # Safety
/// `run` must be a live handle from one of the open calls.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_decode(
    run: *mut UsphereRun,
    channel: i32,
) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let Some(ears) = &run.ears else {
            return fail_with(UsphereStatus::StateError, "decode needs simulate first");
        };
        let pair = if channel < 0 {
            (run.cfg.decode.left_channel, run.cfg.decode.right_channel)
        } else {
            (channel as usize, channel as usize)
        };
        match pipeline::decode(&run.cfg, ears, pair.0, pair.1) {
            Ok(decoded) => {
                run.decoded = Some(decoded);
                run.decoded_pair = pair;
                run.report = None;
                UsphereStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Measure the run against the config's thresholds and build the report.
/// Returns `USPHERE_STATUS_GATE_FAILURE` when any configured gate fails;
/// the report is available either way.
///
/// # Safety
/// `run` must be a live handle from one of the open calls.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_analyze(run: *mut UsphereRun) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let (Some(enc), Some(ears), Some(decoded)) = (&run.enc, &run.ears, &run.decoded)
        else {
            return fail_with(
                UsphereStatus::StateError,
                "analyze needs encode, simulate and decode first",
            );
        };
        let (left, right) = run.decoded_pair;
        let out = match pipeline::analyze(&run.cfg, enc, ears, decoded, left, right) {
            Ok(out) => out,
            Err(e) => return fail(&e),
        };
        let mut header = ReportHeader::new(run.cfg.seed);
        header.normalization_factor = Some(enc.info.normalization_factor);
        let text = match render_report(&header, &out.metrics) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        run.report = Some(CString::new(text.replace('\0', " ")).expect("nul bytes stripped"));
        run.all_pass = out.all_pass;
        if out.all_pass {
            UsphereStatus::Ok
        } else {
            fail_with(UsphereStatus::GateFailure, "one or more configured gates failed")
        }
    })
}

/// The analysis report as JSON lines. Owned by the handle; valid until the
/// next stage call on it or `usphere_run_free`.
///
/// # Safety
/// `run` must be a live handle; `out_report` must point to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_report(
    run: *mut UsphereRun,
    out_report: *mut *const c_char,
) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out_report.is_null() {
            return fail_with(UsphereStatus::NullArgument, "out_report is null");
        }
        let Some(report) = &run.report else {
            return fail_with(UsphereStatus::StateError, "no report; run analyze first");
        };
        *out_report = report.as_ptr();
        UsphereStatus::Ok
    })
}

unsafe fn export_samples(
    buffer: Option<&AudioBuffer>,
    missing: &str,
    channel: u32,
    out_samples: *mut *const f64,
    out_len: *mut usize,
    out_rate: *mut u32,
) -> UsphereStatus {
    if out_samples.is_null() || out_len.is_null() || out_rate.is_null() {
        return fail_with(UsphereStatus::NullArgument, "an output pointer is null");
    }
    let Some(buffer) = buffer else {
        return fail_with(UsphereStatus::StateError, missing);
    };
    if channel as usize >= buffer.num_channels() {
        return fail_with(
            UsphereStatus::ConfigError,
            &format!("channel {channel} out of range: buffer has {}", buffer.num_channels()),
        );
    }
    let samples = buffer.channel(channel as usize);
    *out_samples = samples.as_ptr();
    *out_len = samples.len();
    *out_rate = buffer.sample_rate_hz();
    UsphereStatus::Ok
}

/// Borrow the composite's samples (channel 0 is the only channel).
///
/// # Safety
/// `run` must be a live handle; the three output pointers must be writable.
/// The borrowed samples die with the next stage call or `usphere_run_free`.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_composite(
    run: *mut UsphereRun,
    out_samples: *mut *const f64,
    out_len: *mut usize,
    out_rate: *mut u32,
) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        export_samples(
            run.enc.as_ref().map(|e| &e.composite),
            "no composite; run encode first",
            0,
            out_samples,
            out_len,
            out_rate,
        )
    })
}

/// Borrow one decoded ear's samples: channel 0 is left, 1 is right.
///
/// # Safety
/// `run` must be a live handle; the three output pointers must be writable.
/// The borrowed samples die with the next stage call or `usphere_run_free`.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_decoded(
    run: *mut UsphereRun,
    channel: u32,
    out_samples: *mut *const f64,
    out_len: *mut usize,
    out_rate: *mut u32,
) -> UsphereStatus {
    guarded(|| {
        let run = match run_arg(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        export_samples(
            run.decoded.as_ref(),
            "no decoded audio; run decode first",
            channel,
            out_samples,
            out_len,
            out_rate,
        )
    })
}

/// Release a run handle and everything it owns. Null is a no-op.
///
/// # Safety
/// `run` must be null or a live handle; it is dead after this call.
#[no_mangle]
pub unsafe extern "C" fn usphere_run_free(run: *mut UsphereRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Run the built-in acceptance gates on generated fixtures. Writes the
/// report to `report_path` when non-null. Returns `USPHERE_STATUS_OK` when
/// every gate passes, `USPHERE_STATUS_GATE_FAILURE` otherwise.
///
/// # Safety
/// `report_path`, when non-null, must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn usphere_selftest(
    seed: u64,
    report_path: *const c_char,
) -> UsphereStatus {
    guarded(|| {
        let path = if report_path.is_null() {
            None
        } else {
            match cstr_arg(report_path, "report_path") {
                Ok(p) => Some(p.to_string()),
                Err(s) => return s,
            }
        };
        let out = match usphere::selftest::run_selftest(seed) {
            Ok(out) => out,
            Err(e) => return fail(&e),
        };
        if let Some(path) = path {
            if let Err(e) = std::fs::write(&path, &out.report) {
                return fail(&Error::Io(e));
            }
        }
        if out.all_pass {
            UsphereStatus::Ok
        } else {
            fail_with(UsphereStatus::GateFailure, "selftest gates failed")
        }
    })
}
