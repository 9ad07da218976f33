use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{SampleRecord, SamplingError, SessionStats};

/// Reads a JSON-lines trace, one [`SampleRecord`] per line.
pub struct ReplaySession {
    lines: Box<dyn BufRead + Send>,
    line_no: usize,
    required: Option<Vec<String>>,
    last_ts: HashMap<i32, u64>,
    stats: SessionStats,
    finished: bool,
}

impl ReplaySession {
    /// `required` lists the counters every record must carry; when `None`
    /// the counter set of the first well-formed record is used.
    pub fn open(path: &Path, required: Option<Vec<String>>) -> Result<Self, SamplingError> {
        let file = File::open(path).map_err(|source| SamplingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_reader(BufReader::new(file), required))
    }

    pub fn from_reader(reader: impl BufRead + Send + 'static, required: Option<Vec<String>>) -> Self {
        Self {
            lines: Box::new(reader),
            line_no: 0,
            required,
            last_ts: HashMap::new(),
            stats: SessionStats::default(),
            finished: false,
        }
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn next_sample(&mut self) -> Result<Option<SampleRecord>, SamplingError> {
        let mut buf = String::new();
        loop {
            if self.finished {
                return Ok(None);
            }
            buf.clear();
            let n = self.lines.read_line(&mut buf).map_err(|e| {
                self.finished = true;
                SamplingError::TraceFormatError {
                    line: self.line_no + 1,
                    reason: e.to_string(),
                }
            })?;
            if n == 0 {
                self.finished = true;
                return Ok(None);
            }
            self.line_no += 1;
            let text = buf.trim_end_matches(['\n', '\r']);
            if text.trim().is_empty() {
                continue;
            }
            let record: SampleRecord = serde_json::from_str(text).map_err(|e| {
                self.finished = true;
                SamplingError::TraceFormatError {
                    line: self.line_no,
                    reason: e.to_string(),
                }
            })?;
            return match self.check(&record) {
                Ok(()) => {
                    self.stats.emitted += 1;
                    Ok(Some(record))
                }
                Err(reason) => {
                    self.stats.corrupt += 1;
                    Err(SamplingError::RecordCorrupt {
                        line: self.line_no,
                        reason,
                    })
                }
            };
        }
    }

    fn check(&mut self, r: &SampleRecord) -> Result<(), String> {
        if r.callchain.is_empty() {
            return Err("empty call chain".into());
        }
        let required = self
            .required
            .get_or_insert_with(|| r.counter_values.keys().cloned().collect());
        if let Some(missing) = required.iter().find(|n| !r.counter_values.contains_key(*n)) {
            return Err(format!("missing counter `{missing}`"));
        }
        match self.last_ts.get(&r.tid) {
            Some(&prev) if r.timestamp_ns < prev => {
                return Err(format!(
                    "timestamp {} precedes {} on tid {}",
                    r.timestamp_ns, prev, r.tid
                ))
            }
            Some(&prev) if r.timestamp_ns == prev => self.stats.equal_timestamp_warnings += 1,
            _ => {}
        }
        self.last_ts.insert(r.tid, r.timestamp_ns);
        Ok(())
    }
}

/// Canonical single-line encoding of a record (no trailing newline).
pub fn write_trace_line(record: &SampleRecord) -> String {
    serde_json::to_string(record).expect("sample records always serialize")
}

pub fn write_trace<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a SampleRecord>,
) -> std::io::Result<()> {
    for r in records {
        out.write_all(write_trace_line(r).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn session(text: &str) -> ReplaySession {
        ReplaySession::from_reader(Cursor::new(text.to_string().into_bytes()), None)
    }

    const THREE: &str = r#"{"ts":1,"pid":7,"tid":7,"pc":4096,"stack":[4096,8192],"counters":{"cycles":10,"instructions":5}}
{"ts":2,"pid":7,"tid":7,"pc":4100,"stack":[4100,8192],"counters":{"cycles":20,"instructions":9}}
{"ts":3,"pid":7,"tid":7,"pc":4104,"stack":[4104,8192],"counters":{"cycles":35,"instructions":20}}
"#;

    #[test]
    fn three_records_then_end() {
        let mut s = session(THREE);
        for ts in 1..=3 {
            assert_eq!(s.next_sample().unwrap().unwrap().timestamp_ns, ts);
        }
        assert!(s.next_sample().unwrap().is_none());
        assert!(s.next_sample().unwrap().is_none());
        assert_eq!(s.stats().emitted, 3);
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let text = r#"{"ts":5,"pid":1,"tid":1,"pc":1,"stack":[1],"counters":{"cycles":1}}
{"ts":5,"pid":1,"tid":1,"pc":2,"stack":[2],"counters":{"cycles":2}}
"#;
        let mut s = session(text);
        assert_eq!(s.next_sample().unwrap().unwrap().pc, 1);
        assert_eq!(s.next_sample().unwrap().unwrap().pc, 2);
        assert_eq!(s.stats().equal_timestamp_warnings, 1);
    }

    #[test]
    fn missing_member_counter_is_skipped() {
        let text = r#"{"ts":1,"pid":1,"tid":1,"pc":1,"stack":[1],"counters":{"cycles":1,"instructions":1}}
{"ts":2,"pid":1,"tid":1,"pc":1,"stack":[1],"counters":{"cycles":2}}
{"ts":3,"pid":1,"tid":1,"pc":1,"stack":[1],"counters":{"cycles":3,"instructions":3}}
"#;
        let mut s = ReplaySession::from_reader(
            Cursor::new(text.as_bytes().to_vec()),
            Some(vec!["cycles".into(), "instructions".into()]),
        );
        assert!(s.next_sample().unwrap().is_some());
        let err = s.next_sample().unwrap_err();
        assert!(matches!(err, SamplingError::RecordCorrupt { line: 2, .. }));
        assert!(err.is_recoverable());
        assert_eq!(s.next_sample().unwrap().unwrap().timestamp_ns, 3);
        assert_eq!(s.stats().corrupt, 1);
    }

    #[test]
    fn time_going_backwards_is_corrupt() {
        let text = r#"{"ts":9,"pid":1,"tid":1,"pc":1,"stack":[1],"counters":{"cycles":1}}
{"ts":3,"pid":1,"tid":1,"pc":1,"stack":[1],"counters":{"cycles":2}}
{"ts":3,"pid":1,"tid":2,"pc":1,"stack":[1],"counters":{"cycles":2}}
"#;
        let mut s = session(text);
        assert!(s.next_sample().unwrap().is_some());
        assert!(matches!(s.next_sample(), Err(SamplingError::RecordCorrupt { .. })));
        assert_eq!(s.next_sample().unwrap().unwrap().tid, 2);
    }

    #[test]
    fn empty_stack_is_corrupt() {
        let mut s = session(r#"{"ts":1,"pid":1,"tid":1,"pc":1,"stack":[],"counters":{"cycles":1}}"#);
        assert!(matches!(
            s.next_sample(),
            Err(SamplingError::RecordCorrupt { line: 1, .. })
        ));
    }

    #[test]
    fn truncated_line_names_line_number() {
        let text = format!("{THREE}{{\"ts\":4,\"pid\":7,\"ti");
        let mut s = session(&text);
        for _ in 0..3 {
            s.next_sample().unwrap();
        }
        match s.next_sample() {
            Err(SamplingError::TraceFormatError { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(s.next_sample().unwrap().is_none());
    }

    #[test]
    fn canonical_lines_reproduce_input() {
        let mut s = session(THREE);
        let mut out = Vec::new();
        while let Some(r) = s.next_sample().unwrap() {
            out.push(r);
        }
        let mut buf = Vec::new();
        write_trace(&mut buf, &out).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), THREE);
    }
}
