//! C interface to `nrstream`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an [`NrsStatus`];
//! `nrs_last_error` describes the most recent failure on the calling thread.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nrstream::bits::Bits;
use nrstream::channel::{make_pattern, ChannelError, ChannelKind, CorruptionPattern, PatternDescriptor, PatternExtras};
use nrstream::enc::{encode_source, EncError, Mode, StreamParams};
use nrstream::harness::decode;
use nrstream::rm_ldc::LdcOverrides;
use nrstream::stream_model::{build_algorithm, AlgorithmId, AlgorithmInputs, BitStream, CorruptedSource, RepeatedSource};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Config = 3,
    OverBudget = 4,
    Decode = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsMode {
    Linear = 0,
    General = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsAlgorithm {
    Parity = 0,
    Dot = 1,
    Index = 2,
    Dfa = 3,
    Sum = 4,
    Count = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsChannel {
    Random = 0,
    PrefixBurst = 1,
    Periodic = 2,
    CopyTargeted = 3,
    SymbolTargeted = 4,
}

/// Outcome of [`nrs_decode`]. The confidence is `conf_num / conf_den`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NrsDecodeResult {
    pub value: u64,
    pub conf_num: i64,
    pub conf_den: i64,
    pub bits_read: u64,
    pub peak_registers: u64,
    pub peak_collected_bits: u64,
}

/// Stream and LDC parameters.
pub struct NrsParams {
    sp: StreamParams,
}

/// An encoded stream, optionally behind a corruption pattern. Neither is
/// materialized.
pub struct NrsStream {
    sp: StreamParams,
    clean: RepeatedSource,
    pattern: Option<Arc<CorruptionPattern>>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: NrsStatus, msg: impl Into<String>) -> NrsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> NrsStatus) -> NrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(NrsStatus::Panic, "internal panic"),
    }
}

fn enc_status(e: EncError) -> NrsStatus {
    fail(NrsStatus::Config, e.to_string())
}

fn mode_of(m: NrsMode) -> Mode {
    match m {
        NrsMode::Linear => Mode::Linear,
        NrsMode::General => Mode::General,
    }
}

fn algorithm_id(a: NrsAlgorithm) -> AlgorithmId {
    match a {
        NrsAlgorithm::Parity => AlgorithmId::Parity,
        NrsAlgorithm::Dot => AlgorithmId::Dot,
        NrsAlgorithm::Index => AlgorithmId::Index,
        NrsAlgorithm::Dfa => AlgorithmId::Dfa,
        NrsAlgorithm::Sum => AlgorithmId::Sum,
        NrsAlgorithm::Count => AlgorithmId::Count,
    }
}

fn bits_from(ptr: *const u8, len: usize) -> Option<Bits> {
    if ptr.is_null() {
        return None;
    }
    // SAFETY: checked non-null; the caller promises `len` readable bytes.
    let raw = unsafe { std::slice::from_raw_parts(ptr, len) };
    Some(Bits::from_bools(&raw.iter().map(|&b| b != 0).collect::<Vec<_>>()))
}

/// Version string, static.
#[no_mangle]
pub extern "C" fn nrs_version() -> *const c_char {
    static V: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    V.as_ptr().cast()
}

/// Copies the last error message (NUL-terminated) into `buf`. Returns the
/// message length without the terminator; nothing is written when `len` is
/// too small.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nrs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > e.len() {
            // SAFETY: `buf` has room for the message and the terminator.
            unsafe {
                ptr::copy_nonoverlapping(e.as_ptr(), buf.cast(), e.len());
                *buf.add(e.len()) = 0;
            }
        }
        e.len()
    })
}

/// Builds parameters for `n = r^D` with the fixed desk LDC and `eps_ldc = 1/2`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn nrs_params_new(
    n: u64,
    r: u64,
    ell: u64,
    t: u64,
    mode: NrsMode,
    out: *mut *mut NrsParams,
) -> NrsStatus {
    guard(|| {
        if out.is_null() {
            return fail(NrsStatus::NullArgument, "out is null");
        }
        match StreamParams::build(n as usize, r, ell, t, mode_of(mode), Ratio::new(1, 2), &LdcOverrides::desk()) {
            Ok(sp) => {
                // SAFETY: `out` checked non-null above.
                unsafe { *out = Box::into_raw(Box::new(NrsParams { sp })) };
                NrsStatus::Ok
            }
            Err(e) => enc_status(e),
        }
    })
}

/// The desk configuration: n = 16, r = 4, T = 4, ell 16 (linear) or 64.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn nrs_params_desk(mode: NrsMode, out: *mut *mut NrsParams) -> NrsStatus {
    let m = mode_of(mode);
    // SAFETY: forwarded caller contract.
    unsafe { nrs_params_new(16, 4, m.default_ell(), 4, mode, out) }
}

/// # Safety
/// `p` must be null or a handle from `nrs_params_new`/`nrs_params_desk`
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nrs_params_free(p: *mut NrsParams) {
    if !p.is_null() {
        // SAFETY: caller contract.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Stream length in bits, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live params handle.
#[no_mangle]
pub unsafe extern "C" fn nrs_params_m_len(p: *const NrsParams) -> u64 {
    // SAFETY: caller contract.
    unsafe { p.as_ref() }.map_or(0, |p| p.sp.m_len())
}

/// Bits per codeword copy, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live params handle.
#[no_mangle]
pub unsafe extern "C" fn nrs_params_copy_bits(p: *const NrsParams) -> u64 {
    // SAFETY: caller contract.
    unsafe { p.as_ref() }.map_or(0, |p| p.sp.copy_bits())
}

/// Encodes `x` (one byte per bit, nonzero = 1, `x_len` must equal n).
///
/// # Safety
/// `p` must be a live params handle, `x` must point to `x_len` bytes and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nrs_encode(
    p: *const NrsParams,
    x: *const u8,
    x_len: usize,
    out: *mut *mut NrsStream,
) -> NrsStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(p) = (unsafe { p.as_ref() }) else {
            return fail(NrsStatus::NullArgument, "params is null");
        };
        if out.is_null() {
            return fail(NrsStatus::NullArgument, "out is null");
        }
        let Some(x) = bits_from(x, x_len) else {
            return fail(NrsStatus::NullArgument, "x is null");
        };
        match encode_source(&x, &p.sp) {
            Ok(clean) => {
                let s = NrsStream { sp: p.sp.clone(), clean, pattern: None };
                // SAFETY: `out` checked non-null.
                unsafe { *out = Box::into_raw(Box::new(s)) };
                NrsStatus::Ok
            }
            Err(e) => enc_status(e),
        }
    })
}

/// # Safety
/// `s` must be null or a stream handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nrs_stream_free(s: *mut NrsStream) {
    if !s.is_null() {
        // SAFETY: caller contract.
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Replaces the stream's corruption with a fresh pattern of `kind` at rate
/// `rho_num / rho_den`, enforcing at most `(1/4 - eps_num / eps_den)` of
/// the stream. Writes the number of flipped bits to `flips` when non-null.
///
/// # Safety
/// `s` must be a live stream handle; `flips` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nrs_stream_corrupt(
    s: *mut NrsStream,
    kind: NrsChannel,
    rho_num: u64,
    rho_den: u64,
    eps_num: u64,
    eps_den: u64,
    seed: u64,
    flips: *mut u64,
) -> NrsStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(s) = (unsafe { s.as_mut() }) else {
            return fail(NrsStatus::NullArgument, "stream is null");
        };
        if rho_den == 0 || eps_den == 0 {
            return fail(NrsStatus::InvalidArgument, "zero denominator");
        }
        let kind = match kind {
            NrsChannel::Random => ChannelKind::Random,
            NrsChannel::PrefixBurst => ChannelKind::PrefixBurst,
            NrsChannel::Periodic => ChannelKind::Periodic,
            NrsChannel::CopyTargeted => ChannelKind::CopyTargeted,
            NrsChannel::SymbolTargeted => ChannelKind::SymbolTargeted,
        };
        let desc = PatternDescriptor {
            kind,
            seed,
            rho: Ratio::new(rho_num, rho_den),
            m_len: s.sp.m_len(),
            eps_budget: Some(Ratio::new(eps_num, eps_den)),
            extras: PatternExtras::layout(s.sp.copy_bits(), s.sp.ldc().n_inner()),
        };
        match make_pattern(desc) {
            Ok(p) => {
                if !flips.is_null() {
                    // SAFETY: checked non-null.
                    unsafe { *flips = p.count() };
                }
                s.pattern = Some(Arc::new(p));
                NrsStatus::Ok
            }
            Err(e @ (ChannelError::Budget { .. } | ChannelError::WeightOverBudget { .. })) => {
                fail(NrsStatus::OverBudget, e.to_string())
            }
            Err(e) => fail(NrsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Decodes the stream once with a decoder seeded by `seed`.
///
/// `y`/`y_len` feed `dot` (one byte per bit), `target` feeds `index`; both
/// are ignored otherwise.
///
/// # Safety
/// `s` must be a live stream handle, `y` null or `y_len` readable bytes,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrs_decode(
    s: *const NrsStream,
    algorithm: NrsAlgorithm,
    y: *const u8,
    y_len: usize,
    target: u64,
    seed: u64,
    out: *mut NrsDecodeResult,
) -> NrsStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(s) = (unsafe { s.as_ref() }) else {
            return fail(NrsStatus::NullArgument, "stream is null");
        };
        if out.is_null() {
            return fail(NrsStatus::NullArgument, "out is null");
        }
        let id = algorithm_id(algorithm);
        let inputs = AlgorithmInputs { y: bits_from(y, y_len), target: Some(target), modulus: None };
        let alg = match build_algorithm(id, s.sp.n(), &inputs) {
            Ok(a) => a,
            Err(e) => return fail(NrsStatus::InvalidArgument, e.to_string()),
        };
        let mut bs = match &s.pattern {
            Some(p) => match CorruptedSource::new(s.clean.clone(), Arc::clone(p)) {
                Ok(src) => BitStream::new(src),
                Err(e) => return fail(NrsStatus::Decode, e.to_string()),
            },
            None => BitStream::new(s.clean.clone()),
        };
        match decode(&alg, &mut bs, &s.sp, &mut ChaCha8Rng::seed_from_u64(seed)) {
            Ok(rep) => {
                let r = NrsDecodeResult {
                    value: rep.value,
                    conf_num: *rep.conf.numer(),
                    conf_den: *rep.conf.denom(),
                    bits_read: rep.bits_read,
                    peak_registers: rep.peak_registers,
                    peak_collected_bits: rep.peak_collected_bits,
                };
                // SAFETY: checked non-null.
                unsafe { *out = r };
                NrsStatus::Ok
            }
            Err(e) => fail(NrsStatus::Decode, e.to_string()),
        }
    })
}

/// Noiseless reference output for `x` (same input conventions).
///
/// # Safety
/// `x` must point to `x_len` bytes, `y` null or `y_len` bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrs_reference(
    algorithm: NrsAlgorithm,
    x: *const u8,
    x_len: usize,
    y: *const u8,
    y_len: usize,
    target: u64,
    out: *mut u64,
) -> NrsStatus {
    guard(|| {
        let Some(x) = bits_from(x, x_len) else {
            return fail(NrsStatus::NullArgument, "x is null");
        };
        if out.is_null() {
            return fail(NrsStatus::NullArgument, "out is null");
        }
        let id = algorithm_id(algorithm);
        let inputs = AlgorithmInputs { y: bits_from(y, y_len), target: Some(target), modulus: None };
        match build_algorithm(id, x_len, &inputs) {
            Ok(a) => {
                // SAFETY: checked non-null.
                unsafe { *out = a.run_noiseless(&x) };
                NrsStatus::Ok
            }
            Err(e) => fail(NrsStatus::InvalidArgument, e.to_string()),
        }
    })
}
