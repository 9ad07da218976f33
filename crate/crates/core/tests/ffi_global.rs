//! Drives the exported C entry points in a process of their own, so the
//! environment is set before the global runtime first reads it.

use std::ffi::c_char;

use mperf::roofline_runtime::ffi::{
    mperf_roofline_internal_add_counts, mperf_roofline_internal_finalize_report,
    mperf_roofline_internal_is_instrumented_profiling, mperf_roofline_internal_notify_loop_begin,
    mperf_roofline_internal_notify_loop_end, MperfLoopInfo,
};
use mperf::{LoopCounters, Phase, RunReport};

fn info(line: u32, file: &'static str, func: &'static str) -> MperfLoopInfo {
    MperfLoopInfo {
        line,
        filename: file.as_ptr().cast::<c_char>(),
        filename_len: file.len(),
        func_name: func.as_ptr().cast::<c_char>(),
        func_name_len: func.len(),
    }
}

#[test]
fn abi_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    std::env::set_var("MPERF_ROOFLINE_MODE", "instrumented");
    std::env::set_var("MPERF_ROOFLINE_FILTER", "foo.c:42");
    std::env::set_var("MPERF_ROOFLINE_OUT", &out);

    unsafe {
        let h = mperf_roofline_internal_notify_loop_begin(info(42, "foo.c", "bar"));
        assert!(mperf_roofline_internal_is_instrumented_profiling());
        for _ in 0..64 {
            mperf_roofline_internal_add_counts(h, 8, 0, 0, 2);
        }
        let inner = mperf_roofline_internal_notify_loop_begin(info(99, "foo.c", "bar"));
        assert!(!mperf_roofline_internal_is_instrumented_profiling());
        mperf_roofline_internal_notify_loop_end(inner);
        mperf_roofline_internal_notify_loop_end(h);
        // stale handle: diagnosed, not fatal
        mperf_roofline_internal_notify_loop_end(h);
        mperf_roofline_internal_add_counts(std::ptr::null_mut(), 1, 1, 1, 1);

        let odd = mperf_roofline_internal_notify_loop_begin(MperfLoopInfo {
            line: 0,
            filename: std::ptr::null(),
            filename_len: 0,
            func_name: b"\xffx".as_ptr().cast(),
            func_name_len: 2,
        });
        mperf_roofline_internal_notify_loop_end(odd);
    }
    mperf_roofline_internal_finalize_report();
    // second finalize is a no-op and must not overwrite
    let before = std::fs::read(&out).unwrap();
    mperf_roofline_internal_finalize_report();
    assert_eq!(std::fs::read(&out).unwrap(), before);

    let report = RunReport::read(&out).unwrap();
    assert_eq!(report.phase, Phase::Instrumented);
    let by_line = |l: u32| {
        report
            .records
            .iter()
            .find(|r| r.info.line == l && r.info.filename == "foo.c")
            .unwrap()
    };
    assert_eq!(by_line(42).counters, LoopCounters::new(512, 0, 0, 128));
    assert!(by_line(99).counters.is_zero());
    let odd = report.records.iter().find(|r| r.info.line == 0).unwrap();
    assert_eq!(odd.info.filename, "");
    assert_eq!(odd.info.func_name, "\u{fffd}x");
    assert_eq!(mperf::roofline_runtime::ffi::global().misuse_count(), 2);
}
