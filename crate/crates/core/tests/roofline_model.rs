use mperf::roofline_analysis::{analyze, render_roofline, AnalysisReport, Bound, MachineModel};
use mperf::{LoopCounters, LoopInfo, LoopRecord, Phase, RunReport};
use proptest::prelude::*;

fn report(phase: Phase, rows: &[(u32, LoopCounters, u64)]) -> RunReport {
    RunReport {
        phase,
        records: rows
            .iter()
            .map(|&(line, counters, ns)| LoopRecord {
                info: LoopInfo::new(line, "k.c", "k"),
                counters: if phase == Phase::Baseline {
                    LoopCounters::default()
                } else {
                    counters
                },
                invocations: 1,
                wall_time_ns: ns,
                phase,
            })
            .collect(),
    }
}

fn x60() -> MachineModel {
    MachineModel::new("x60", 1.6, 25.6, 4.7)
}

proptest! {
    #[test]
    fn classification_matches_direct_formulas(
        rows in proptest::collection::vec((1u64..1 << 30, 0u64..1 << 30, 1u64..1 << 30, 1u64..1 << 40), 1..30)
    ) {
        let rows: Vec<_> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (ld, st, fp, ns))| (i as u32 + 1, LoopCounters::new(ld, st, 0, fp), ns))
            .collect();
        let model = x60();
        let out = analyze(&report(Phase::Baseline, &rows), &report(Phase::Instrumented, &rows), &model);
        prop_assert_eq!(out.points.len(), rows.len());
        prop_assert!(out.excluded.is_empty());
        for (p, (_, c, ns)) in out.points.iter().zip(&rows) {
            let ai = c.fp_ops as f64 / (c.load_bytes + c.store_bytes) as f64;
            let attainable = f64::min(25.6, ai * 4.7);
            prop_assert_eq!(p.point.arithmetic_intensity_fp, ai);
            prop_assert_eq!(p.point.gflops, c.fp_ops as f64 / *ns as f64);
            prop_assert!((p.bound.attainable_gflops - attainable).abs() <= 1e-12 * attainable);
            let expected = if ai < 25.6 / 4.7 { Bound::MemoryBound } else { Bound::ComputeBound };
            prop_assert_eq!(p.bound.class, expected);
        }
        let back: AnalysisReport = serde_json::from_str(&out.to_json()).unwrap();
        prop_assert_eq!(back, out);
    }
}

#[test]
fn zero_work_loops_are_excluded_not_dropped() {
    let rows = [
        (1, LoopCounters::new(64, 0, 0, 16), 100),
        (2, LoopCounters::new(0, 0, 5, 0), 100),
        (3, LoopCounters::new(64, 0, 0, 16), 0),
    ];
    let mut base = report(Phase::Baseline, &rows);
    base.records[2].wall_time_ns = 0;
    let mut inst = report(Phase::Instrumented, &rows);
    inst.records[2].wall_time_ns = 0;
    let out = analyze(&base, &inst, &x60());
    assert_eq!(out.points.len(), 1);
    let lines: Vec<u32> = out.excluded.iter().map(|e| e.loop_info.line).collect();
    assert_eq!(lines, [2, 3]);
}

#[test]
fn plot_is_deterministic_and_f32_agrees() {
    let rows = [
        (1, LoopCounters::new(48, 8, 0, 8), 1000),
        (2, LoopCounters::new(8, 0, 0, 80), 10),
    ];
    let model = x60();
    let a = analyze(
        &report(Phase::Baseline, &rows),
        &report(Phase::Instrumented, &rows),
        &model,
    );
    let svg = render_roofline(&model, &a.points).unwrap();
    assert_eq!(svg, render_roofline(&model, &a.points).unwrap());
    assert!(svg.contains("k@k.c:1") && svg.contains("k@k.c:2"));

    let model32: MachineModel<f32> = MachineModel::new("x60", 1.6, 25.6, 4.7);
    let b = analyze(
        &report(Phase::Baseline, &rows),
        &report(Phase::Instrumented, &rows),
        &model32,
    );
    for (p64, p32) in a.points.iter().zip(&b.points) {
        assert_eq!(p64.bound.class, p32.bound.class);
        assert!((p64.point.arithmetic_intensity_fp - p32.point.arithmetic_intensity_fp as f64).abs() < 1e-6);
    }
}
