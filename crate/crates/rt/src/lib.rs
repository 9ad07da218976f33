//! Link this library (static or shared) into a program whose loops were
//! instrumented by the compiler plugin. It exports the five
//! `mperf_roofline_internal_*` symbols declared in `include/mperf_roofline.h`
//! and writes the run report when the process exits.

pub use mperf::roofline_runtime::ffi::{
    mperf_roofline_internal_add_counts, mperf_roofline_internal_finalize_report,
    mperf_roofline_internal_is_instrumented_profiling, mperf_roofline_internal_notify_loop_begin,
    mperf_roofline_internal_notify_loop_end, MperfLoopHandle, MperfLoopInfo,
};
