//! Tiled single-precision matmul instrumented by hand the way the compiler
//! plugin rewrites a loop nest: the nest is outlined into a plain and an
//! instrumented version, and the call site dispatches between them.
//!
//! Usage: mperf-matmul-fixture [n] [tile] [repeats]

use std::ffi::c_char;

// Keeps the runtime (and its exported symbols) in the link.
use mperf as _;

#[repr(C)]
struct LoopInfo {
    line: u32,
    filename: *const c_char,
    filename_len: usize,
    func_name: *const c_char,
    func_name_len: usize,
}

#[repr(C)]
struct LoopHandle {
    _opaque: [u8; 0],
}

extern "C" {
    fn mperf_roofline_internal_notify_loop_begin(info: LoopInfo) -> *mut LoopHandle;
    fn mperf_roofline_internal_is_instrumented_profiling() -> bool;
    fn mperf_roofline_internal_add_counts(h: *mut LoopHandle, load: u64, store: u64, int_ops: u64, fp_ops: u64);
    fn mperf_roofline_internal_notify_loop_end(h: *mut LoopHandle);
}

const FILE: &str = "matmul.c";
const FUNC: &str = "matmul";
const LINE: u32 = 12;

fn matmul_loop0_outlined(a: &[f32], b: &[f32], c: &mut [f32], n: usize, tile: usize) {
    for ii in (0..n).step_by(tile) {
        for jj in (0..n).step_by(tile) {
            for kk in (0..n).step_by(tile) {
                for i in ii..(ii + tile).min(n) {
                    for j in jj..(jj + tile).min(n) {
                        let mut sum = c[i * n + j];
                        for k in kk..(kk + tile).min(n) {
                            sum += a[i * n + k] * b[k * n + j];
                        }
                        c[i * n + j] = sum;
                    }
                }
            }
        }
    }
}

fn matmul_loop0_outlined_instrumented(a: &[f32], b: &[f32], c: &mut [f32], n: usize, tile: usize, h: *mut LoopHandle) {
    for ii in (0..n).step_by(tile) {
        for jj in (0..n).step_by(tile) {
            for kk in (0..n).step_by(tile) {
                for i in ii..(ii + tile).min(n) {
                    for j in jj..(jj + tile).min(n) {
                        unsafe { mperf_roofline_internal_add_counts(h, 4, 0, 0, 0) };
                        let mut sum = c[i * n + j];
                        for k in kk..(kk + tile).min(n) {
                            unsafe { mperf_roofline_internal_add_counts(h, 8, 0, 0, 2) };
                            sum += a[i * n + k] * b[k * n + j];
                        }
                        unsafe { mperf_roofline_internal_add_counts(h, 0, 4, 0, 0) };
                        c[i * n + j] = sum;
                    }
                }
            }
        }
    }
}

fn matmul(a: &[f32], b: &[f32], c: &mut [f32], n: usize, tile: usize) {
    let info = LoopInfo {
        line: LINE,
        filename: FILE.as_ptr().cast(),
        filename_len: FILE.len(),
        func_name: FUNC.as_ptr().cast(),
        func_name_len: FUNC.len(),
    };
    unsafe {
        let h = mperf_roofline_internal_notify_loop_begin(info);
        if mperf_roofline_internal_is_instrumented_profiling() {
            matmul_loop0_outlined_instrumented(a, b, c, n, tile, h);
        } else {
            matmul_loop0_outlined(a, b, c, n, tile);
        }
        mperf_roofline_internal_notify_loop_end(h);
    }
}

fn arg(args: &[String], i: usize, default: usize) -> usize {
    match args.get(i) {
        None => default,
        Some(s) => s.parse().unwrap_or_else(|_| {
            eprintln!("usage: mperf-matmul-fixture [n] [tile] [repeats]");
            std::process::exit(1)
        }),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n = arg(&args, 1, 64);
    let tile = arg(&args, 2, 8);
    let repeats = arg(&args, 3, 1);
    if n == 0 || tile == 0 {
        eprintln!("n and tile must be positive");
        std::process::exit(1);
    }
    let a: Vec<f32> = (0..n * n).map(|i| (i % 7) as f32 + 1.0).collect();
    let b: Vec<f32> = (0..n * n).map(|i| (i % 5) as f32 - 2.0).collect();
    let mut c = vec![0f32; n * n];
    for _ in 0..repeats {
        matmul(&a, &b, &mut c, n, tile);
    }
    let checksum: f64 = c.iter().map(|&v| f64::from(v)).sum();
    println!("checksum {checksum}");
}
