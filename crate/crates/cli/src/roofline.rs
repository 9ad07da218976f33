use mperf::roofline_analysis::{
    analyze, bandwidth_from_bytes_per_cycle, render_roofline, theoretical_compute_peak, two_phase_run, AnalysisError,
    Bound, MachineModel, MACHINE_MODEL_SCHEMA,
};

use crate::error::{self, CliError};
use crate::tables::table;
use crate::{RooflineArgs, RoofsArgs};

fn schema_error(reason: String) -> CliError {
    CliError::usage(format!(
        "{reason}\nexpected a machine model file like:\n{MACHINE_MODEL_SCHEMA}"
    ))
}

pub fn run(args: RooflineArgs) -> Result<(), CliError> {
    let Some(machine) = &args.machine else {
        return Err(schema_error("--machine is required".to_string()));
    };
    let text = std::fs::read_to_string(machine)
        .map_err(|e| schema_error(format!("cannot read {}: {e}", machine.display())))?;
    let model = MachineModel::<f64>::from_json(&text).map_err(|e| schema_error(e.to_string()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| error::io("cannot create", &args.out, e))?;
    let (baseline, instrumented) = two_phase_run(&args.command, &args.out)?;
    let report = analyze(&baseline, &instrumented, &model);
    for w in &report.warnings {
        eprintln!("mperf: warning: {w}");
    }
    for x in &report.excluded {
        eprintln!("mperf: excluded {}: {}", x.loop_info.label(), x.reason);
    }

    let json_path = args.out.join("roofline.json");
    std::fs::write(&json_path, report.to_json() + "\n").map_err(|e| error::io("cannot write", &json_path, e))?;
    match render_roofline(&model, &report.points) {
        Ok(svg) => {
            let svg_path = args.out.join("roofline.svg");
            std::fs::write(&svg_path, svg).map_err(|e| error::io("cannot write", &svg_path, e))?;
        }
        Err(AnalysisError::EmptyInput) => eprintln!("mperf: warning: no plottable loops; no SVG written"),
        Err(e) => return Err(e.into()),
    }

    if args.json {
        println!("{}", report.to_json());
        return Ok(());
    }
    let rows = report
        .points
        .iter()
        .map(|p| {
            vec![
                p.point.loop_info.label(),
                format!("{:.4}", p.point.arithmetic_intensity_fp),
                format!("{:.4}", p.point.gflops),
                format!("{:.4}", p.point.gbs),
                match p.bound.class {
                    Bound::MemoryBound => "memory",
                    Bound::ComputeBound => "compute",
                }
                .to_string()
                    + if p.out_of_model { " (above roof!)" } else { "" },
                format!("{:.4}", p.bound.attainable_gflops),
                format!("{:.2}", p.point.overhead_ratio),
            ]
        })
        .collect();
    println!(
        "{}",
        table(
            &[
                "Loop",
                "AI (FLOP/B)",
                "GFLOP/s",
                "GB/s",
                "Bound",
                "Attainable GFLOP/s",
                "Overhead"
            ],
            rows
        )
    );
    println!(
        "knee at AI {:.4} FLOP/B; results in {}",
        report.knee_ai,
        args.out.display()
    );
    Ok(())
}

pub fn roofs(args: RoofsArgs) -> Result<(), CliError> {
    for (flag, v) in [
        ("--ipc", args.ipc),
        ("--flops-per-insn", args.flops_per_insn),
        ("--freq-ghz", args.freq_ghz),
        ("--bytes-per-cycle", args.bytes_per_cycle),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::usage(format!("{flag} must be positive, got {v}")));
        }
    }
    let model = MachineModel::new(
        args.name,
        args.freq_ghz,
        theoretical_compute_peak(args.ipc, args.flops_per_insn, args.freq_ghz),
        bandwidth_from_bytes_per_cycle(args.bytes_per_cycle, args.freq_ghz),
    );
    let json = serde_json::to_string_pretty(&model).expect("serializable") + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, json).map_err(|e| error::io("cannot write", path, e))?,
        None => print!("{json}"),
    }
    Ok(())
}
