//! C ABI used by instrumented binaries.
//!
//! Handles passed across the boundary are opaque tokens; the runtime never
//! dereferences them, so a stale or forged handle is reported and ignored.

use std::os::raw::c_char;
use std::sync::OnceLock;

use super::{LoopHandle, Runtime, RuntimeConfig};

/// Loop identity as emitted by the compiler pass. Strings are not required
/// to be NUL terminated.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MperfLoopInfo {
    pub line: u32,
    pub filename: *const c_char,
    pub filename_len: usize,
    pub func_name: *const c_char,
    pub func_name_len: usize,
}

/// Never constructed; only pointers to it cross the ABI.
#[repr(C)]
pub struct MperfLoopHandle {
    _opaque: [u8; 0],
}

static GLOBAL: OnceLock<Runtime> = OnceLock::new();

extern "C" fn finalize_at_exit() {
    if let Some(rt) = GLOBAL.get() {
        let _ = rt.finalize_report();
    }
}

/// Process-wide runtime configured from the environment on first use.
/// The report is written from an `atexit` hook.
pub fn global() -> &'static Runtime {
    GLOBAL.get_or_init(|| {
        #[cfg(unix)]
        // SAFETY: registering a plain extern "C" fn with no captured state.
        unsafe {
            libc::atexit(finalize_at_exit);
        }
        Runtime::new(RuntimeConfig::from_env())
    })
}

unsafe fn lossy(ptr: *const c_char, len: usize) -> String {
    if ptr.is_null() || len == 0 {
        return String::new();
    }
    let bytes = std::slice::from_raw_parts(ptr.cast::<u8>(), len);
    String::from_utf8_lossy(bytes).into_owned()
}

fn to_ptr(h: LoopHandle) -> *mut MperfLoopHandle {
    h.to_raw() as usize as *mut MperfLoopHandle
}

fn from_ptr(p: *mut MperfLoopHandle) -> LoopHandle {
    LoopHandle::from_raw(p as usize as u64)
}

/// # Safety
/// `info.filename` and `info.func_name` must each be null or point to at
/// least the given number of readable bytes.
#[no_mangle]
pub unsafe extern "C" fn mperf_roofline_internal_notify_loop_begin(info: MperfLoopInfo) -> *mut MperfLoopHandle {
    let filename = lossy(info.filename, info.filename_len);
    let func = lossy(info.func_name, info.func_name_len);
    to_ptr(global().notify_loop_begin(info.line, &filename, &func))
}

#[no_mangle]
pub extern "C" fn mperf_roofline_internal_is_instrumented_profiling() -> bool {
    global().is_instrumented_profiling()
}

#[no_mangle]
pub extern "C" fn mperf_roofline_internal_add_counts(
    handle: *mut MperfLoopHandle,
    load_bytes: u64,
    store_bytes: u64,
    int_ops: u64,
    fp_ops: u64,
) {
    global().add_counts(from_ptr(handle), load_bytes, store_bytes, int_ops, fp_ops);
}

#[no_mangle]
pub extern "C" fn mperf_roofline_internal_notify_loop_end(handle: *mut MperfLoopHandle) {
    global().notify_loop_end(from_ptr(handle));
}

/// Writes the report now instead of at exit. Later calls do nothing.
#[no_mangle]
pub extern "C" fn mperf_roofline_internal_finalize_report() {
    let _ = global().finalize_report();
}
