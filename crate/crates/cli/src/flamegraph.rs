use std::path::PathBuf;

use mperf::hotspots::{
    fold_stacks_parallel, hotspot_table, render_flamegraph, to_collapsed, HotspotEntry, Symbolizer, CYCLES,
    INSTRUCTIONS,
};
use mperf::sampling::ReplaySession;

use crate::error::{self, CliError};
use crate::tables::{count, table};
use crate::FlamegraphArgs;

pub fn run(args: FlamegraphArgs) -> Result<(), CliError> {
    let metric = args.metric.event();
    if !args.trace.is_file() {
        return Err(CliError::usage(format!("no such trace: {}", args.trace.display())));
    }
    let mut session = ReplaySession::open(&args.trace, Some(vec![metric.to_string()]))?;
    let mut samples = Vec::new();
    loop {
        match session.next_sample() {
            Ok(Some(s)) => samples.push(s),
            Ok(None) => break,
            Err(e) if e.is_recoverable() => eprintln!("mperf: skipped: {e}"),
            Err(e) => return Err(e.into()),
        }
    }

    let symbolizer = match &args.symbols {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| error::io("cannot read", path, e))?;
            Symbolizer::from_map_text(&text).map_err(|e| CliError::usage(e.to_string()))?
        }
        None => Symbolizer::default(),
    }
    .with_trace_hints(&samples);

    let folded = fold_stacks_parallel(&samples, metric, &symbolizer).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = &args.folded {
        std::fs::write(path, to_collapsed(&folded)).map_err(|e| error::io("cannot write", path, e))?;
    }
    let svg_path = match (&args.out, &args.folded) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => None,
        (None, None) => Some(PathBuf::from("flamegraph.svg")),
    };
    if let Some(path) = &svg_path {
        let svg = render_flamegraph(&folded, metric).map_err(|e| CliError::usage(e.to_string()))?;
        std::fs::write(path, svg).map_err(|e| error::io("cannot write", path, e))?;
    }

    let has_both = samples
        .iter()
        .all(|s| s.counter_values.contains_key(CYCLES) && s.counter_values.contains_key(INSTRUCTIONS));
    if !has_both {
        eprintln!("mperf: trace lacks cycles or instructions; no hotspot table");
        return Ok(());
    }
    let entries: Vec<HotspotEntry<f64>> =
        hotspot_table(&samples, &symbolizer, args.top).map_err(|e| CliError::usage(e.to_string()))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&entries).expect("serializable"));
    } else {
        let rows = entries
            .iter()
            .map(|e| {
                vec![
                    e.function.clone(),
                    format!("{:.2}%", e.total_share * 100.0),
                    count(e.instructions),
                    count(e.cycles),
                    format!("{:.2}", e.ipc),
                ]
            })
            .collect();
        println!(
            "{}",
            table(&["Function", "Total, %", "Instructions", "Cycles", "IPC"], rows)
        );
    }
    Ok(())
}
