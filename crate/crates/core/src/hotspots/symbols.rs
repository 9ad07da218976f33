use std::collections::HashMap;

use indexmap::IndexMap;

use super::HotspotError;
use crate::sampling::SampleRecord;

/// Half-open `[start, end)` address range owned by one symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolRange {
    pub start: u64,
    pub end: u64,
    pub name: String,
}

impl SymbolRange {
    pub fn new(start: u64, end: u64, name: impl Into<String>) -> Self {
        Self {
            start,
            end,
            name: name.into(),
        }
    }
}

pub fn unknown_symbol(addr: u64) -> String {
    format!("[unknown:{addr:#x}]")
}

/// Name of the range containing `addr` in a sorted, non-overlapping map.
pub fn symbolize(addr: u64, symbol_map: &[SymbolRange]) -> String {
    lookup(addr, symbol_map)
        .map(str::to_string)
        .unwrap_or_else(|| unknown_symbol(addr))
}

fn lookup(addr: u64, map: &[SymbolRange]) -> Option<&str> {
    let idx = map.partition_point(|r| r.start <= addr);
    let r = map.get(idx.checked_sub(1)?)?;
    (addr < r.end).then_some(r.name.as_str())
}

/// Address-to-name resolution from a symbol map plus exact-address hints
/// carried in traces. Exact hints win over ranges.
#[derive(Debug, Clone, Default)]
pub struct Symbolizer {
    ranges: Vec<SymbolRange>,
    exact: HashMap<u64, String>,
}

impl Symbolizer {
    pub fn new(mut ranges: Vec<SymbolRange>) -> Result<Self, HotspotError> {
        ranges.sort_by_key(|r| (r.start, r.end));
        for r in &ranges {
            if r.end <= r.start {
                return Err(HotspotError::SymbolMap(format!("empty range for `{}`", r.name)));
            }
        }
        for w in ranges.windows(2) {
            if w[1].start < w[0].end {
                return Err(HotspotError::SymbolMap(format!(
                    "`{}` overlaps `{}`",
                    w[1].name, w[0].name
                )));
            }
        }
        Ok(Self {
            ranges,
            exact: HashMap::new(),
        })
    }

    /// Parses `<hex start> <hex end> <name>` lines. Blank lines and `#`
    /// comments are ignored; the name is the rest of the line.
    pub fn from_map_text(text: &str) -> Result<Self, HotspotError> {
        let mut ranges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, char::is_whitespace);
            let (Some(start), Some(end), Some(name)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(HotspotError::SymbolMap(format!(
                    "line {}: expected `<start> <end> <name>`",
                    i + 1
                )));
            };
            let hex = |s: &str| {
                u64::from_str_radix(s.trim_start_matches("0x").trim_start_matches("0X"), 16)
                    .map_err(|_| HotspotError::SymbolMap(format!("line {}: bad address {s:?}", i + 1)))
            };
            ranges.push(SymbolRange::new(hex(start)?, hex(end)?, name.trim()));
        }
        Self::new(ranges)
    }

    pub fn add_hints(&mut self, syms: &IndexMap<String, String>) {
        for (addr, name) in syms {
            let digits = addr.trim_start_matches("0x").trim_start_matches("0X");
            if let Ok(a) = u64::from_str_radix(digits, 16) {
                self.exact.entry(a).or_insert_with(|| name.clone());
            }
        }
    }

    /// Adds the `syms` hints of every sample.
    pub fn with_trace_hints(mut self, samples: &[SampleRecord]) -> Self {
        for s in samples {
            if let Some(syms) = &s.syms {
                self.add_hints(syms);
            }
        }
        self
    }

    pub fn ranges(&self) -> &[SymbolRange] {
        &self.ranges
    }

    pub fn resolve(&self, addr: u64) -> String {
        if let Some(name) = self.exact.get(&addr) {
            return name.clone();
        }
        symbolize(addr, &self.ranges)
    }
}
