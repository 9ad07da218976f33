use std::fs::File;
use std::io::{BufWriter, Write};

use mperf::hotspots::{CYCLES, INSTRUCTIONS};
use mperf::sampling::{open_session, plan_groups, write_trace, Backend, EventRequest, Target};

use crate::error::{self, CliError};
use crate::RecordArgs;

pub fn run(args: RecordArgs) -> Result<(), CliError> {
    let profile = crate::host_profile()?;
    let mut requests = Vec::new();
    for name in [CYCLES, INSTRUCTIONS] {
        let ev = profile
            .event(name)
            .ok_or_else(|| CliError::platform(format!("{} does not expose `{name}`", profile.name)))?;
        requests.push(EventRequest::sampled(ev.clone(), args.freq));
    }
    // The unsupported-sampling error already carries the capability summary.
    let plan = plan_groups(&profile, &requests)?;
    println!("{}", plan.describe());

    let backend = match &args.replay {
        Some(path) => Backend::Replay(path.clone()),
        None if args.command.is_empty() => {
            return Err(CliError::usage(
                "nothing to run: pass a command after `--` or use --replay",
            ))
        }
        None => Backend::Live,
    };
    let mut session = open_session(&plan, &Target::Command(args.command.clone()), &backend)?;
    let mut samples = Vec::new();
    loop {
        match session.next_sample() {
            Ok(Some(s)) => samples.push(s),
            Ok(None) => break,
            Err(e) if e.is_recoverable() => eprintln!("mperf: skipped: {e}"),
            Err(e) => return Err(e.into()),
        }
    }

    let file = File::create(&args.output).map_err(|e| error::io("cannot create", &args.output, e))?;
    let mut w = BufWriter::new(file);
    write_trace(&mut w, &samples)
        .and_then(|_| w.flush())
        .map_err(|e| error::io("cannot write", &args.output, e))?;
    let stats = session.stats();
    println!("wrote {} samples to {}", samples.len(), args.output.display());
    if stats.corrupt + stats.lost > 0 {
        println!("skipped {} corrupt records, {} lost", stats.corrupt, stats.lost);
    }

    #[cfg(target_os = "linux")]
    if let mperf::sampling::Session::Live(live) = &session {
        if let Some(code) = live.exit_code().filter(|c| *c != 0) {
            return Err(CliError::child(format!("program exited with status {code}")));
        }
    }
    Ok(())
}
