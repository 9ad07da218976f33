use std::sync::{Arc, Barrier};

use mperf::roofline_runtime::{LoopFilter, Runtime, RuntimeConfig};
use mperf::{LoopCounters, Phase};
use proptest::prelude::*;

fn instrumented() -> Runtime {
    Runtime::new(RuntimeConfig {
        phase: Phase::Instrumented,
        filter: None,
        out_path: "/dev/null".into(),
    })
}

/// One thread's script: a sequence of loop invocations, each a list of
/// (loop index, deltas) adds issued between begin and end.
type Script = Vec<(u32, Vec<(u64, u64, u64, u64)>)>;

fn script() -> impl Strategy<Value = Script> {
    proptest::collection::vec(
        (
            0u32..3,
            proptest::collection::vec((0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000), 0..6),
        ),
        0..20,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn totals_equal_sum_of_deltas(scripts in proptest::collection::vec(script(), 1..5)) {
        let rt = Arc::new(instrumented());
        let barrier = Arc::new(Barrier::new(scripts.len()));
        let mut expected = [LoopCounters::default(); 3];
        let mut invocations = [0u64; 3];
        for s in &scripts {
            for (l, adds) in s {
                invocations[*l as usize] += 1;
                for &(a, b, c, d) in adds {
                    expected[*l as usize].add(&LoopCounters::new(a, b, c, d));
                }
            }
        }
        let handles: Vec<_> = scripts
            .into_iter()
            .map(|s| {
                let rt = Arc::clone(&rt);
                let barrier = Arc::clone(&barrier);
                std::thread::spawn(move || {
                    barrier.wait();
                    for (l, adds) in s {
                        let h = rt.notify_loop_begin(10 + l, "k.c", "kernel");
                        for (a, b, c, d) in adds {
                            rt.add_counts(h, a, b, c, d);
                            std::thread::yield_now();
                        }
                        rt.notify_loop_end(h);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let report = rt.snapshot();
        prop_assert_eq!(rt.misuse_count(), 0);
        for r in &report.records {
            let l = (r.info.line - 10) as usize;
            prop_assert_eq!(r.counters, expected[l]);
            prop_assert_eq!(r.invocations, invocations[l]);
        }
        prop_assert_eq!(report.records.len(), invocations.iter().filter(|&&n| n > 0).count());
    }

    #[test]
    fn unbalanced_sequences_never_panic(ops in proptest::collection::vec((0u8..3, 0usize..8), 0..60)) {
        let rt = instrumented();
        let mut open = Vec::new();
        let mut closed = Vec::new();
        for (op, pick) in ops {
            match op {
                0 => open.push(rt.notify_loop_begin(pick as u32 + 1, "u.c", "u")),
                1 if !open.is_empty() => {
                    let h = open.remove(pick % open.len());
                    rt.notify_loop_end(h);
                    closed.push(h);
                }
                _ if !closed.is_empty() => {
                    let h = closed[pick % closed.len()];
                    rt.notify_loop_end(h);
                    rt.add_counts(h, 1, 1, 1, 1);
                }
                _ => {}
            }
        }
        let report = rt.snapshot();
        for r in &report.records {
            prop_assert!(r.invocations >= 1);
            prop_assert!(r.counters.is_zero());
        }
    }
}

#[test]
fn report_roundtrip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let rt = Runtime::new(RuntimeConfig {
        phase: Phase::Instrumented,
        filter: Some(LoopFilter::parse("a.c:1")),
        out_path: out.clone(),
    });
    for (line, file) in [(1, "a.c"), (2, "b.c")] {
        let h = rt.notify_loop_begin(line, file, "f");
        rt.add_counts(h, 8, 4, 2, 1);
        rt.notify_loop_end(h);
    }
    rt.finalize_report().unwrap();
    let report = mperf::RunReport::read(&out).unwrap();
    assert_eq!(report, rt.snapshot());
    assert_eq!(report.records.len(), 2);
    // Filtered-out loop still times but does not count.
    assert_eq!(report.records[0].counters, LoopCounters::new(8, 4, 2, 1));
    assert!(report.records[1].counters.is_zero());
}
