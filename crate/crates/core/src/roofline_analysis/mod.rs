//! Baseline/instrumented correlation, roofline metrics and plots.
//!
//! Throughput and traffic are computed from the baseline run's wall time,
//! since instrumentation inflates the instrumented run. The ratio of the
//! two times is kept on every point as `overhead_ratio`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roofline_runtime::{LoopCounters, LoopInfo, Phase, RunReport};
use crate::Scalar;

mod model;
mod render;
mod run;

pub use model::{
    bandwidth_from_bytes_per_cycle, classify, theoretical_compute_peak, Bound, BoundClass, Ceiling, MachineModel,
    MACHINE_MODEL_SCHEMA,
};
pub use render::render_roofline;
pub use run::{two_phase_run, two_phase_run_with_env};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{phase} run exited with {}", code.map_or("a signal".to_string(), |c| format!("status {c}")))]
    ChildFailed { phase: Phase, code: Option<i32> },
    #[error("{phase} run could not be started: {source}")]
    Launch { phase: Phase, source: std::io::Error },
    #[error("{phase} run produced no report at {path} (is the roofline runtime linked?)")]
    ReportMissing { phase: Phase, path: String },
    #[error("{phase} report is malformed: {reason}")]
    ReportInvalid { phase: Phase, reason: String },
    #[error("invalid machine model: {0}")]
    InvalidModel(String),
    #[error("{0}: zero wall time")]
    ZeroTime(String),
    #[error("{0}: zero memory traffic")]
    ZeroTraffic(String),
    #[error("no plottable roofline points")]
    EmptyInput,
    #[error("empty command line")]
    EmptyCommand,
}

/// One loop after joining the two phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinedRow {
    pub info: LoopInfo,
    /// From the instrumented record.
    pub counters: LoopCounters,
    /// `None` when the loop only appears in the instrumented report.
    pub baseline_wall_ns: Option<u64>,
    pub instrumented_wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Correlation {
    pub rows: Vec<JoinedRow>,
    pub warnings: Vec<String>,
}

fn merged(report: &RunReport) -> BTreeMap<LoopInfo, (LoopCounters, u64)> {
    let mut out: BTreeMap<LoopInfo, (LoopCounters, u64)> = BTreeMap::new();
    for r in &report.records {
        let slot = out.entry(r.info.clone()).or_default();
        slot.0.add(&r.counters);
        slot.1 += r.wall_time_ns;
    }
    out
}

/// Joins the reports on `(filename, line, func_name)`. Duplicate keys within
/// one report are summed first. Rows come out sorted by key, so the result
/// does not depend on record order.
pub fn correlate(baseline: &RunReport, instrumented: &RunReport) -> Correlation {
    let base = merged(baseline);
    let inst = merged(instrumented);
    let mut c = Correlation::default();
    if inst.is_empty() {
        c.warnings.push("instrumented report contains no loops".to_string());
    }
    for (info, (counters, ns)) in &inst {
        let baseline_wall_ns = base.get(info).map(|(_, t)| *t);
        if baseline_wall_ns.is_none() {
            c.warnings.push(format!(
                "{} missing from the baseline report; using instrumented time",
                info.label()
            ));
        }
        c.rows.push(JoinedRow {
            info: info.clone(),
            counters: *counters,
            baseline_wall_ns,
            instrumented_wall_ns: *ns,
        });
    }
    for info in base.keys().filter(|k| !inst.contains_key(*k)) {
        c.warnings.push(format!(
            "{} missing from the instrumented report; skipped",
            info.label()
        ));
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RooflinePoint<T = f64> {
    #[serde(rename = "loop")]
    pub loop_info: LoopInfo,
    pub counters: LoopCounters,
    pub arithmetic_intensity_fp: T,
    pub arithmetic_intensity_total: T,
    pub gflops: T,
    pub gbs: T,
    pub baseline_time_s: T,
    pub instrumented_time_s: T,
    pub overhead_ratio: T,
    /// Phase whose wall time drives `gflops` and `gbs`.
    pub timed_by: Phase,
}

pub fn derive_point<T: Scalar>(row: &JoinedRow) -> Result<RooflinePoint<T>, AnalysisError> {
    let (ns, timed_by) = match row.baseline_wall_ns {
        Some(ns) => (ns, Phase::Baseline),
        None => (row.instrumented_wall_ns, Phase::Instrumented),
    };
    if ns == 0 {
        return Err(AnalysisError::ZeroTime(row.info.label()));
    }
    let traffic = row.counters.traffic_bytes();
    if traffic == 0 {
        return Err(AnalysisError::ZeroTraffic(row.info.label()));
    }
    let c = &row.counters;
    let ns_t = T::from_count(ns);
    let bytes = T::from_count(traffic);
    let giga = T::lit(1e9);
    // x / (ns * 1e-9) / 1e9 == x / ns
    Ok(RooflinePoint {
        loop_info: row.info.clone(),
        counters: *c,
        arithmetic_intensity_fp: T::from_count(c.fp_ops) / bytes,
        arithmetic_intensity_total: (T::from_count(c.fp_ops) + T::from_count(c.int_ops)) / bytes,
        gflops: T::from_count(c.fp_ops) / ns_t,
        gbs: bytes / ns_t,
        baseline_time_s: ns_t / giga,
        instrumented_time_s: T::from_count(row.instrumented_wall_ns) / giga,
        overhead_ratio: T::from_count(row.instrumented_wall_ns) / ns_t,
        timed_by,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AnalyzedPoint<T = f64> {
    pub point: RooflinePoint<T>,
    pub bound: BoundClass<T>,
    /// Measured throughput above the model's roof.
    pub out_of_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedLoop {
    #[serde(rename = "loop")]
    pub loop_info: LoopInfo,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AnalysisReport<T = f64> {
    pub machine: MachineModel<T>,
    pub knee_ai: T,
    pub points: Vec<AnalyzedPoint<T>>,
    pub excluded: Vec<ExcludedLoop>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> AnalysisReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis reports always serialize")
    }
}

/// Relative slack before a point counts as above its roof.
const ROOF_SLACK: f64 = 1e-9;

pub fn analyze_point<T: Scalar>(point: RooflinePoint<T>, model: &MachineModel<T>) -> AnalyzedPoint<T> {
    let bound = classify(&point, model);
    let out_of_model = point.gflops > bound.attainable_gflops * (T::one() + T::lit(ROOF_SLACK));
    AnalyzedPoint {
        point,
        bound,
        out_of_model,
    }
}

/// Correlates, derives and classifies every loop in the two reports.
pub fn analyze<T: Scalar>(
    baseline: &RunReport,
    instrumented: &RunReport,
    model: &MachineModel<T>,
) -> AnalysisReport<T> {
    let c = correlate(baseline, instrumented);
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for row in &c.rows {
        match derive_point::<T>(row) {
            Ok(p) => points.push(analyze_point(p, model)),
            Err(e) => excluded.push(ExcludedLoop {
                loop_info: row.info.clone(),
                reason: e.to_string(),
            }),
        }
    }
    AnalysisReport {
        machine: model.clone(),
        knee_ai: model.knee(),
        points,
        excluded,
        warnings: c.warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roofline_runtime::LoopRecord;

    fn rec(phase: Phase, line: u32, counters: LoopCounters, ns: u64) -> LoopRecord {
        LoopRecord {
            info: LoopInfo::new(line, "foo.c", "bar"),
            counters,
            invocations: 1,
            wall_time_ns: ns,
            phase,
        }
    }

    fn report(phase: Phase, records: Vec<LoopRecord>) -> RunReport {
        RunReport { phase, records }
    }

    fn x60() -> MachineModel {
        MachineModel::new("x60", 1.6, 25.6, 4.7)
    }

    #[test]
    fn joins_on_key() {
        let c = LoopCounters::new(640, 128, 0, 128);
        let base = report(
            Phase::Baseline,
            vec![rec(Phase::Baseline, 42, LoopCounters::default(), 100)],
        );
        let inst = report(Phase::Instrumented, vec![rec(Phase::Instrumented, 42, c, 300)]);
        let j = correlate(&base, &inst);
        assert!(j.warnings.is_empty());
        assert_eq!(
            j.rows,
            [JoinedRow {
                info: LoopInfo::new(42, "foo.c", "bar"),
                counters: c,
                baseline_wall_ns: Some(100),
                instrumented_wall_ns: 300
            }]
        );
    }

    #[test]
    fn empty_instrumented_report_warns() {
        let base = report(
            Phase::Baseline,
            vec![rec(Phase::Baseline, 1, LoopCounters::default(), 5)],
        );
        let j = correlate(&base, &report(Phase::Instrumented, vec![]));
        assert!(j.rows.is_empty());
        assert_eq!(j.warnings.len(), 2);
    }

    #[test]
    fn duplicates_are_summed_before_join() {
        let base = report(
            Phase::Baseline,
            vec![
                rec(Phase::Baseline, 1, LoopCounters::default(), 5),
                rec(Phase::Baseline, 1, LoopCounters::default(), 7),
            ],
        );
        let inst = report(
            Phase::Instrumented,
            vec![
                rec(Phase::Instrumented, 1, LoopCounters::new(1, 2, 3, 4), 10),
                rec(Phase::Instrumented, 1, LoopCounters::new(10, 20, 30, 40), 10),
            ],
        );
        let j = correlate(&base, &inst);
        assert_eq!(j.rows.len(), 1);
        assert_eq!(j.rows[0].counters, LoopCounters::new(11, 22, 33, 44));
        assert_eq!(j.rows[0].baseline_wall_ns, Some(12));
        assert_eq!(j.rows[0].instrumented_wall_ns, 20);
    }

    #[test]
    fn instrumented_only_loop_uses_instrumented_time() {
        let inst = report(
            Phase::Instrumented,
            vec![rec(Phase::Instrumented, 9, LoopCounters::new(8, 0, 0, 8), 4)],
        );
        let j = correlate(&report(Phase::Baseline, vec![]), &inst);
        assert_eq!(j.warnings.len(), 1);
        let p: RooflinePoint = derive_point(&j.rows[0]).unwrap();
        assert_eq!(p.timed_by, Phase::Instrumented);
        assert_eq!(p.gflops, 2.0);
    }

    #[test]
    fn derive_matmul_point() {
        let row = JoinedRow {
            info: LoopInfo::new(1, "mm.c", "mm"),
            counters: LoopCounters::new(640, 128, 0, 128),
            baseline_wall_ns: Some(1000),
            instrumented_wall_ns: 3000,
        };
        let p: RooflinePoint = derive_point(&row).unwrap();
        assert!((p.arithmetic_intensity_fp - 128.0 / 768.0).abs() < 1e-15);
        assert_eq!(p.overhead_ratio, 3.0);
        assert_eq!(p.gbs, 0.768);
        assert_eq!(p.gflops, 0.128);
    }

    #[test]
    fn gflops_consistency() {
        for t_ns in [1_000_000_000u64, 2_000_000_000, 250_000_000] {
            let fp = 33 * t_ns;
            let row = JoinedRow {
                info: LoopInfo::new(1, "a.c", "a"),
                counters: LoopCounters::new(fp, 0, 0, fp),
                baseline_wall_ns: Some(t_ns),
                instrumented_wall_ns: t_ns,
            };
            let p: RooflinePoint = derive_point(&row).unwrap();
            assert_eq!(p.gflops, 33.0);
        }
    }

    #[test]
    fn derive_errors() {
        let mut row = JoinedRow {
            info: LoopInfo::new(1, "a.c", "a"),
            counters: LoopCounters::new(0, 0, 5, 5),
            baseline_wall_ns: Some(10),
            instrumented_wall_ns: 10,
        };
        assert!(matches!(derive_point::<f64>(&row), Err(AnalysisError::ZeroTraffic(_))));
        row.counters.load_bytes = 4;
        row.baseline_wall_ns = Some(0);
        assert!(matches!(derive_point::<f64>(&row), Err(AnalysisError::ZeroTime(_))));
    }

    #[test]
    fn ceilings() {
        assert_eq!(theoretical_compute_peak(2.0, 8.0, 1.6), 25.6);
        assert_eq!(theoretical_compute_peak(1.0, 1.0, 1.0), 1.0);
        assert!((theoretical_compute_peak(3.38f64, 1.0, 4.2) - 14.196).abs() < 1e-12);
        assert!((bandwidth_from_bytes_per_cycle(3.16f64, 1.6) - 5.056).abs() <= 1e-12 * 5.056);
        assert_eq!(bandwidth_from_bytes_per_cycle(1.0, 1.0), 1.0);
        assert_eq!(bandwidth_from_bytes_per_cycle(0.5, 2.0), 1.0);
        assert_eq!(theoretical_compute_peak(2.0f32, 8.0, 1.6), 25.6f32);
    }

    fn point(ai: f64, gflops: f64) -> RooflinePoint {
        RooflinePoint {
            loop_info: LoopInfo::new(1, "a.c", "a"),
            counters: LoopCounters::default(),
            arithmetic_intensity_fp: ai,
            arithmetic_intensity_total: ai,
            gflops,
            gbs: 1.0,
            baseline_time_s: 1.0,
            instrumented_time_s: 1.0,
            overhead_ratio: 1.0,
            timed_by: Phase::Baseline,
        }
    }

    #[test]
    fn classification() {
        let m = x60();
        let b = classify(&point(1.0 / 6.0, 0.5), &m);
        assert_eq!(b.class, Bound::MemoryBound);
        assert!((b.attainable_gflops - 4.7 / 6.0).abs() < 1e-12);

        let b = classify(&point(10.0, 1.58), &m);
        assert_eq!(b.class, Bound::ComputeBound);
        assert_eq!(b.attainable_gflops, 25.6);
        assert!(b.efficiency < 1.0);

        let b = classify(&point(m.knee(), 1.0), &m);
        assert_eq!(b.class, Bound::ComputeBound);
        assert_eq!(b.attainable_gflops, 25.6);
        assert!((m.knee() - 25.6 / 4.7).abs() < 1e-15);
    }

    #[test]
    fn above_roof_is_flagged() {
        let m = x60();
        assert!(analyze_point(point(0.1, 5.0), &m).out_of_model);
        assert!(!analyze_point(point(0.1, 0.47), &m).out_of_model);
    }

    #[test]
    fn model_validation() {
        assert!(MachineModel::<f64>::from_json(
            r#"{"name":"x","frequency_ghz":1.6,"peak_gflops":25.6,"mem_bandwidth_gbs":4.7}"#
        )
        .is_ok());
        let with_ceilings = r#"{"name":"x","frequency_ghz":1.6,"peak_gflops":25.6,"mem_bandwidth_gbs":4.7,
            "extra_ceilings":[{"label":"scalar","gflops":3.2},{"label":"L1","gbs":20.0}]}"#;
        let m = MachineModel::<f64>::from_json(with_ceilings).unwrap();
        assert_eq!(m.extra_ceilings.len(), 2);
        assert!(matches!(m.extra_ceilings[1], Ceiling::Bandwidth { .. }));
        for bad in [
            r#"{"name":"x","frequency_ghz":0,"peak_gflops":25.6,"mem_bandwidth_gbs":4.7}"#,
            r#"{"name":"x","frequency_ghz":1,"peak_gflops":25.6}"#,
            r#"{"name":"x","frequency_ghz":1,"peak_gflops":2,"mem_bandwidth_gbs":4.7,"extra_ceilings":[{"label":"v","gflops":3}]}"#,
        ] {
            assert!(
                matches!(MachineModel::<f64>::from_json(bad), Err(AnalysisError::InvalidModel(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn analyze_is_order_independent() {
        let recs = |phase| {
            vec![
                rec(phase, 1, LoopCounters::new(4, 4, 0, 2), 10),
                rec(phase, 2, LoopCounters::new(8, 0, 0, 64), 20),
                rec(phase, 3, LoopCounters::new(0, 0, 0, 0), 20),
            ]
        };
        let b = report(Phase::Baseline, recs(Phase::Baseline));
        let i = report(Phase::Instrumented, recs(Phase::Instrumented));
        let mut b_rev = b.clone();
        b_rev.records.reverse();
        let mut i_rev = i.clone();
        i_rev.records.reverse();
        let a1 = analyze(&b, &i, &x60());
        let a2 = analyze(&b_rev, &i_rev, &x60());
        assert_eq!(a1, a2);
        assert_eq!(a1.points.len(), 2);
        assert_eq!(a1.excluded.len(), 1);
        assert_eq!(a1.points[1].bound.class, Bound::ComputeBound);
    }
}
