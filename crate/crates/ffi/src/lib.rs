//! C ABI for the fogtbma simulator.
//!
//! Every fallible call returns a [`FogStatus`]; on failure the message is
//! available from [`fogtbma_last_error`] on the same thread. Simulators are
//! opaque handles created by [`fogtbma_simulator_new`] and released with
//! [`fogtbma_simulator_free`]. Arrays are caller-allocated; LLR matrices are
//! row-major `num_events x num_values`, column `r - 1` holding value `r`.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;
use serde::Deserialize;

use fogtbma::config::{DeviceAssignment, DtfAllocation, FronthaulConfig, ObservationModel, SystemConfig};
use fogtbma::denoiser::LlrMatrix;
use fogtbma::detection::{decide, ThresholdPolicy};
use fogtbma::experiment::{Scheme, Simulator};
use fogtbma::fronthaul::{test_channel_variance, DtfCodec};
use fogtbma::gamp::GampOptions;
use fogtbma::rng::Phase;
use fogtbma::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FogStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Dimension = 3,
    BudgetTooSmall = 4,
    NonFinite = 5,
    Payload = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FogScheme {
    QfTestChannel = 0,
    QfUniform = 1,
    Dtf = 2,
    QfUnquantized = 3,
}

impl From<FogScheme> for Scheme {
    fn from(s: FogScheme) -> Self {
        match s {
            FogScheme::QfTestChannel => Scheme::QfTestChannel,
            FogScheme::QfUniform => Scheme::QfUniform,
            FogScheme::Dtf => Scheme::Dtf,
            FogScheme::QfUnquantized => Scheme::QfUnquantized,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FogDtfAllocation {
    PerEvent = 0,
    Pooled = 1,
}

/// Problem dimensions of a simulator.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FogDims {
    pub num_events: usize,
    pub num_values: usize,
    pub num_devices: usize,
    pub num_edge_nodes: usize,
    pub codeword_len: usize,
}

/// Opaque simulator handle.
pub struct FogSimulator {
    inner: Simulator,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulatorSpec {
    system: SystemConfig,
    #[serde(default)]
    assignment: Option<DeviceAssignment>,
    #[serde(default)]
    observation: ObservationModel,
    fronthaul: FronthaulConfig,
    #[serde(default)]
    gamp: GampOptions,
    #[serde(default)]
    master_seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> FogStatus {
    match err {
        Error::Config(_) | Error::Json(_) | Error::EmptyCalibration | Error::EmptyAccumulator => {
            FogStatus::InvalidConfig
        }
        Error::Dimension(_) => FogStatus::Dimension,
        Error::BudgetTooSmall(_) => FogStatus::BudgetTooSmall,
        Error::NonFinite { .. } => FogStatus::NonFinite,
        Error::Payload(_) => FogStatus::Payload,
        Error::Io(_) => FogStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (FogStatus, String)>) -> FogStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FogStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FogStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (FogStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FogStatus, String) {
    (FogStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fogtbma_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fogtbma_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulator from a JSON document with keys `system`,
/// `fronthaul` and optionally `assignment`, `observation`, `gamp`,
/// `master_seed` (same schema as the CLI config).
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_simulator_new(json: *const c_char, out: *mut *mut FogSimulator) -> FogStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (FogStatus::InvalidConfig, format!("config is not UTF-8: {e}")))?;
        let spec: SimulatorSpec =
            serde_json::from_str(text).map_err(|e| (FogStatus::InvalidConfig, e.to_string()))?;
        let assign = spec
            .assignment
            .unwrap_or_else(|| DeviceAssignment::disjoint(spec.system.num_devices, spec.system.num_events));
        let inner = Simulator::new(spec.system, assign, spec.observation, spec.fronthaul, spec.gamp, spec.master_seed)
            .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FogSimulator { inner }));
        Ok(())
    })
}

/// Releases a simulator. Null is ignored.
///
/// # Safety
/// `sim` must come from [`fogtbma_simulator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_simulator_free(sim: *mut FogSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_simulator_dims(sim: *const FogSimulator, out: *mut FogDims) -> FogStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = &sim.inner.cfg;
        *out = FogDims {
            num_events: c.num_events,
            num_values: c.num_values,
            num_devices: c.num_devices,
            num_edge_nodes: c.num_edge_nodes,
            codeword_len: c.codeword_len,
        };
        Ok(())
    })
}

/// Draws evaluation trial `index` at `snr_db` and runs it through `scheme`
/// with `budget_bits` per edge node. Writes the true event states to `xi`
/// (`num_events` entries) and the final LLRs to `llrs`
/// (`num_events * num_values` entries).
///
/// # Safety
/// `sim` must be valid; `xi` and `llrs` must point to arrays of the stated
/// lengths.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_run_trial(
    sim: *const FogSimulator,
    scheme: FogScheme,
    budget_bits: u32,
    snr_db: f64,
    index: u64,
    xi: *mut usize,
    llrs: *mut f64,
) -> FogStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        if xi.is_null() || llrs.is_null() {
            return Err(null("output array"));
        }
        let at = sim.inner.at_snr(snr_db);
        let scheme = Scheme::from(scheme);
        at.check_budget(scheme, budget_bits).map_err(lib_err)?;
        let trial = at.trial(Phase::Evaluation, index);
        let out = at.run_scheme(&trial, scheme, budget_bits).map_err(lib_err)?;
        let m = at.cfg.num_events;
        std::slice::from_raw_parts_mut(xi, m).copy_from_slice(&trial.xi.0);
        std::slice::from_raw_parts_mut(llrs, out.llrs.values.len()).copy_from_slice(&out.llrs.values);
        Ok(())
    })
}

/// Applies the threshold rule to a row-major LLR matrix; writes one
/// decided state per event to `out`.
///
/// # Safety
/// `llrs` must hold `num_events * num_values` values and `out` `num_events`.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_decide(
    llrs: *const f64,
    num_events: usize,
    num_values: usize,
    threshold: f64,
    out: *mut usize,
) -> FogStatus {
    guard(|| {
        if llrs.is_null() || out.is_null() {
            return Err(null("array"));
        }
        if num_values == 0 || !threshold.is_finite() {
            return Err((FogStatus::InvalidConfig, "num_values must be positive and threshold finite".into()));
        }
        let values = std::slice::from_raw_parts(llrs, num_events * num_values);
        let rows: Vec<Vec<f64>> = values.chunks(num_values).map(<[f64]>::to_vec).collect();
        let matrix = if rows.is_empty() { LlrMatrix::zeros(0, num_values) } else { LlrMatrix::from_rows(&rows) };
        let d = decide(&matrix, &ThresholdPolicy { threshold });
        std::slice::from_raw_parts_mut(out, num_events).copy_from_slice(&d.0);
        Ok(())
    })
}

/// Quantization noise variance of the Gaussian test channel at `rate` bits
/// per complex sample and input power `power`. NaN for invalid input.
#[no_mangle]
pub extern "C" fn fogtbma_test_channel_variance(power: f64, rate: f64) -> f64 {
    if !(power >= 0.0 && rate > 0.0) {
        return f64::NAN;
    }
    test_channel_variance(power, rate)
}

fn codec(
    num_events: usize,
    num_values: usize,
    budget_bits: u32,
    clip: f64,
    allocation: FogDtfAllocation,
) -> Result<DtfCodec, (FogStatus, String)> {
    if num_events == 0 || num_values == 0 || !(clip > 0.0) {
        return Err((FogStatus::InvalidConfig, "DtF codec needs positive sizes and clip".into()));
    }
    let allocation = match allocation {
        FogDtfAllocation::PerEvent => DtfAllocation::PerEvent,
        FogDtfAllocation::Pooled => DtfAllocation::Pooled,
    };
    DtfCodec::new(num_events, num_values, budget_bits, clip, allocation).map_err(lib_err)
}

/// Quantizes and packs one edge node's LLRs. `active` holds one byte per
/// event (non-zero = flagged). On success `*written` is the payload length;
/// with `BUFFER_TOO_SMALL` it is the length required.
///
/// # Safety
/// `llrs` must hold `num_events * num_values` values, `active` `num_events`
/// bytes and `buf` `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_dtf_encode(
    num_events: usize,
    num_values: usize,
    budget_bits: u32,
    clip: f64,
    allocation: FogDtfAllocation,
    llrs: *const f64,
    active: *const u8,
    buf: *mut u8,
    buf_len: usize,
    written: *mut usize,
) -> FogStatus {
    guard(|| {
        if llrs.is_null() || active.is_null() || buf.is_null() || written.is_null() {
            return Err(null("argument"));
        }
        let codec = codec(num_events, num_values, budget_bits, clip, allocation)?;
        let values = std::slice::from_raw_parts(llrs, num_events * num_values);
        let rows: Vec<Vec<f64>> = values.chunks(num_values).map(<[f64]>::to_vec).collect();
        let flags: Vec<bool> = std::slice::from_raw_parts(active, num_events).iter().map(|&b| b != 0).collect();
        let payload = codec.quantize(&LlrMatrix::from_rows(&rows), &flags).map_err(lib_err)?;
        let bytes = codec.serialize(&payload);
        *written = bytes.len();
        if bytes.len() > buf_len {
            return Err((FogStatus::BufferTooSmall, format!("payload needs {} bytes", bytes.len())));
        }
        std::slice::from_raw_parts_mut(buf, bytes.len()).copy_from_slice(&bytes);
        Ok(())
    })
}

/// Unpacks a payload produced by [`fogtbma_dtf_encode`] with the same codec
/// parameters into dequantized LLRs; unflagged events read back as zeros.
///
/// # Safety
/// `buf` must hold `buf_len` bytes and `llrs` `num_events * num_values`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn fogtbma_dtf_decode(
    num_events: usize,
    num_values: usize,
    budget_bits: u32,
    clip: f64,
    allocation: FogDtfAllocation,
    buf: *const u8,
    buf_len: usize,
    llrs: *mut f64,
) -> FogStatus {
    guard(|| {
        if buf.is_null() || llrs.is_null() {
            return Err(null("argument"));
        }
        let codec = codec(num_events, num_values, budget_bits, clip, allocation)?;
        let payload = codec.deserialize(std::slice::from_raw_parts(buf, buf_len)).map_err(lib_err)?;
        let out = codec.dequantize(&payload);
        std::slice::from_raw_parts_mut(llrs, out.values.len()).copy_from_slice(&out.values);
        Ok(())
    })
}
