use indexmap::IndexMap;
use mperf::hotspots::{ipc, CYCLES, INSTRUCTIONS};
use mperf::sampling::{run_totals, ReplaySession};
use serde::Serialize;

use crate::error::CliError;
use crate::tables::{count, table};
use crate::StatArgs;

#[derive(Serialize)]
struct StatJson<'a> {
    events: &'a IndexMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ipc: Option<f64>,
}

pub fn run(args: StatArgs) -> Result<(), CliError> {
    let profile = crate::host_profile()?;
    let mut events: Vec<String> = Vec::new();
    for e in args.events.iter().map(|e| e.trim()).filter(|e| !e.is_empty()) {
        if profile.event(e).is_none() {
            return Err(CliError::usage(format!(
                "unknown event `{e}` for {}; valid events: {}",
                profile.name,
                profile.event_names().join(", ")
            )));
        }
        if !events.iter().any(|x| x == e) {
            events.push(e.to_string());
        }
    }
    if events.is_empty() {
        return Err(CliError::usage("no events requested"));
    }

    let (totals, child_status) = match &args.replay {
        Some(path) => {
            let mut session = ReplaySession::open(path, Some(events.clone()))?;
            let mut samples = Vec::new();
            loop {
                match session.next_sample() {
                    Ok(Some(s)) => samples.push(s),
                    Ok(None) => break,
                    Err(e) if e.is_recoverable() => eprintln!("mperf: skipped: {e}"),
                    Err(e) => return Err(e.into()),
                }
            }
            let all = run_totals(&samples);
            let totals: IndexMap<String, u64> = events
                .iter()
                .map(|e| (e.clone(), all.get(e).copied().unwrap_or(0)))
                .collect();
            (totals, None)
        }
        None => live(&profile, &events, &args.command)?,
    };

    let ipc_value = match (totals.get(INSTRUCTIONS), totals.get(CYCLES)) {
        (Some(&i), Some(&c)) => Some(ipc::<f64>(i, c)),
        _ => None,
    };
    if args.json {
        let json = StatJson {
            events: &totals,
            ipc: ipc_value,
        };
        println!("{}", serde_json::to_string_pretty(&json).expect("serializable"));
    } else {
        let mut rows: Vec<Vec<String>> = totals.iter().map(|(k, v)| vec![k.clone(), count(*v)]).collect();
        if let Some(v) = ipc_value {
            rows.push(vec!["IPC".to_string(), format!("{v:.2}")]);
        }
        println!("{}", table(&["Event", "Count"], rows));
    }
    match child_status {
        Some(code) if code != 0 => Err(CliError::child(format!("program exited with status {code}"))),
        _ => Ok(()),
    }
}

#[cfg(target_os = "linux")]
fn live(
    profile: &mperf::PlatformProfile,
    events: &[String],
    command: &[String],
) -> Result<(IndexMap<String, u64>, Option<i32>), CliError> {
    use mperf::sampling::{live, plan_groups, EventRequest, Target};

    if command.is_empty() {
        return Err(CliError::usage(
            "nothing to run: pass a command after `--` or use --replay",
        ));
    }
    let requests: Vec<EventRequest> = events
        .iter()
        .map(|e| EventRequest::counting(profile.event(e).expect("validated").clone()))
        .collect();
    let plan = plan_groups(profile, &requests)?;
    let result = live::count(&plan, &Target::Command(command.to_vec()))?;
    let totals = events
        .iter()
        .map(|e| (e.clone(), result.totals.get(e).copied().unwrap_or(0)))
        .collect();
    Ok((totals, result.exit_code))
}

#[cfg(not(target_os = "linux"))]
fn live(
    _: &mperf::PlatformProfile,
    _: &[String],
    _: &[String],
) -> Result<(IndexMap<String, u64>, Option<i32>), CliError> {
    Err(CliError::platform(
        "live counting needs Linux perf events; use --replay",
    ))
}
