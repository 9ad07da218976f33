use std::collections::HashMap;

use rayon::prelude::*;

use super::{HotspotError, Symbolizer};
use crate::sampling::{with_deltas, SampleRecord};

/// Aggregated weight of one root-first frame sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FoldedStack {
    pub frames: Vec<String>,
    pub weight: u64,
}

impl FoldedStack {
    pub fn joined(&self) -> String {
        self.frames.join(";")
    }
}

struct Resolver<'a> {
    symbolizer: &'a Symbolizer,
    cache: HashMap<u64, String>,
}

impl Resolver<'_> {
    fn frames(&mut self, callchain: &[u64]) -> Vec<String> {
        callchain
            .iter()
            .rev()
            .map(|&a| {
                self.cache
                    .entry(a)
                    .or_insert_with(|| self.symbolizer.resolve(a))
                    .clone()
            })
            .collect()
    }
}

/// Symbolized root-first stacks paired with the metric delta of each sample.
fn weighted_stacks(
    samples: &[SampleRecord],
    metric: &str,
    symbolizer: &Symbolizer,
) -> Result<Vec<(Vec<String>, u64)>, HotspotError> {
    if let Some(s) = samples.iter().find(|s| !s.counter_values.contains_key(metric)) {
        return Err(HotspotError::MetricMissing {
            metric: metric.to_string(),
            timestamp_ns: s.timestamp_ns,
        });
    }
    let mut resolver = Resolver {
        symbolizer,
        cache: HashMap::new(),
    };
    Ok(with_deltas(samples)
        .into_iter()
        .map(|(s, d)| (resolver.frames(&s.callchain), d.get(metric).unwrap_or(0)))
        .collect())
}

type Counts = HashMap<Vec<String>, u64>;

fn finish(counts: Counts) -> Vec<FoldedStack> {
    let mut out: Vec<(String, FoldedStack)> = counts
        .into_iter()
        .filter(|(_, w)| *w > 0)
        .map(|(frames, weight)| {
            let f = FoldedStack { frames, weight };
            (f.joined(), f)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, f)| f).collect()
}

/// Folds samples into one entry per distinct stack, weighted by the
/// per-thread delta of `metric`, sorted by the joined frame string.
pub fn fold_stacks(
    samples: &[SampleRecord],
    metric: &str,
    symbolizer: &Symbolizer,
) -> Result<Vec<FoldedStack>, HotspotError> {
    let mut counts = Counts::new();
    for (frames, w) in weighted_stacks(samples, metric, symbolizer)? {
        *counts.entry(frames).or_default() += w;
    }
    Ok(finish(counts))
}

/// Same result as [`fold_stacks`]; the counting is sharded across threads.
pub fn fold_stacks_parallel(
    samples: &[SampleRecord],
    metric: &str,
    symbolizer: &Symbolizer,
) -> Result<Vec<FoldedStack>, HotspotError> {
    let weighted = weighted_stacks(samples, metric, symbolizer)?;
    let counts = weighted
        .par_chunks(4096)
        .map(|chunk| {
            let mut c = Counts::new();
            for (frames, w) in chunk {
                *c.entry(frames.clone()).or_default() += w;
            }
            c
        })
        .reduce(Counts::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    Ok(finish(counts))
}

/// Collapsed-stack text: `frame;frame;frame <weight>` per line.
pub fn to_collapsed(folded: &[FoldedStack]) -> String {
    let mut out = String::new();
    for f in folded {
        out.push_str(&f.joined());
        out.push(' ');
        out.push_str(&f.weight.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_collapsed(text: &str) -> Result<Vec<FoldedStack>, HotspotError> {
    let mut counts = Counts::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (stack, weight) = line.rsplit_once(' ').ok_or_else(|| HotspotError::Collapsed(i + 1))?;
        let weight: u64 = weight.trim().parse().map_err(|_| HotspotError::Collapsed(i + 1))?;
        if stack.is_empty() {
            return Err(HotspotError::Collapsed(i + 1));
        }
        let frames = stack.split(';').map(str::to_string).collect();
        *counts.entry(frames).or_default() += weight;
    }
    Ok(finish(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hotspots::SymbolRange;
    use indexmap::IndexMap;

    fn symbolizer() -> Symbolizer {
        Symbolizer::new(vec![
            SymbolRange::new(0x100, 0x200, "main"),
            SymbolRange::new(0x200, 0x300, "foo"),
            SymbolRange::new(0x300, 0x400, "bar"),
            SymbolRange::new(0x400, 0x500, "baz"),
        ])
        .unwrap()
    }

    fn sample(ts: u64, stack: &[u64], cycles: u64) -> SampleRecord {
        SampleRecord {
            timestamp_ns: ts,
            pid: 1,
            tid: 1,
            pc: stack[0],
            callchain: stack.to_vec(),
            counter_values: IndexMap::from([("cycles".to_string(), cycles)]),
            syms: None,
        }
    }

    #[test]
    fn folds_and_sorts() {
        // cumulative cycles: +5, +5, +3
        let samples = vec![
            sample(1, &[0x310, 0x210, 0x110], 5),
            sample(2, &[0x310, 0x210, 0x110], 10),
            sample(3, &[0x410, 0x110], 13),
        ];
        let folded = fold_stacks(&samples, "cycles", &symbolizer()).unwrap();
        let flat: Vec<_> = folded.iter().map(|f| (f.joined(), f.weight)).collect();
        assert_eq!(flat, [("main;baz".to_string(), 3), ("main;foo;bar".to_string(), 10)]);
        assert_eq!(to_collapsed(&folded), "main;baz 3\nmain;foo;bar 10\n");
        assert_eq!(parse_collapsed(&to_collapsed(&folded)).unwrap(), folded);
    }

    #[test]
    fn empty_and_single() {
        assert!(fold_stacks(&[], "cycles", &symbolizer()).unwrap().is_empty());
        let one = fold_stacks(&[sample(1, &[0x210, 0x110], 42)], "cycles", &symbolizer()).unwrap();
        assert_eq!(
            one,
            [FoldedStack {
                frames: vec!["main".into(), "foo".into()],
                weight: 42
            }]
        );
    }

    #[test]
    fn missing_metric() {
        let err = fold_stacks(&[sample(1, &[0x110], 1)], "instructions", &symbolizer()).unwrap_err();
        assert!(matches!(err, HotspotError::MetricMissing { .. }));
    }

    #[test]
    fn unknown_addresses_fold_separately() {
        let folded = fold_stacks(&[sample(1, &[0x9999, 0x110], 7)], "cycles", &symbolizer()).unwrap();
        assert_eq!(folded[0].joined(), "main;[unknown:0x9999]");
    }

    #[test]
    fn malformed_collapsed_lines() {
        assert!(parse_collapsed("a;b").is_err());
        assert!(parse_collapsed("a;b x").is_err());
        assert!(parse_collapsed(" 5").is_err());
    }
}
