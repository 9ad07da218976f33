use std::collections::BTreeMap;
use std::fmt::Write;

use super::{FoldedStack, HotspotError};

pub const CANVAS_WIDTH: u64 = 1200;
pub const ROW_HEIGHT: u64 = 16;
const HEADER: u64 = 32;
const FOOTER: u64 = 8;
const CHAR_WIDTH: f64 = 7.0;

#[derive(Default)]
struct Node {
    weight: u64,
    children: BTreeMap<String, Node>,
}

impl Node {
    fn insert(&mut self, frames: &[String], weight: u64) {
        self.weight += weight;
        if let Some((first, rest)) = frames.split_first() {
            self.children.entry(first.clone()).or_default().insert(rest, weight);
        }
    }

    fn depth(&self) -> u64 {
        self.children.values().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }
}

struct Layout<'a> {
    out: &'a mut String,
    total: u64,
    height: u64,
}

impl Layout<'_> {
    /// Pixel column of a cumulative weight offset, rounded half up.
    fn px(&self, offset: u64) -> u64 {
        let num = offset as u128 * CANVAS_WIDTH as u128 * 2 + self.total as u128;
        (num / (2 * self.total as u128)) as u64
    }

    fn frame(&mut self, name: &str, node: &Node, start: u64, depth: u64) {
        let x0 = self.px(start);
        let x1 = self.px(start + node.weight);
        let width = x1 - x0;
        let y = self.height - FOOTER - (depth + 1) * ROW_HEIGHT;
        let pct = node.weight as f64 * 100.0 / self.total as f64;
        let escaped = escape(name);
        let _ = write!(
            self.out,
            "<g><title>{escaped} ({}, {pct:.2}%)</title><rect x=\"{x0}\" y=\"{y}\" width=\"{width}\" height=\"{}\" fill=\"{}\" rx=\"2\"/>",
            node.weight,
            ROW_HEIGHT - 1,
            color(name),
        );
        let fit = ((width as f64 - 6.0) / CHAR_WIDTH).floor();
        if fit >= 3.0 {
            let fit = fit as usize;
            let label: String = if name.chars().count() <= fit {
                name.to_string()
            } else {
                name.chars().take(fit - 2).chain("..".chars()).collect()
            };
            let _ = write!(
                self.out,
                "<text x=\"{}\" y=\"{}\">{}</text>",
                x0 + 3,
                y + ROW_HEIGHT - 4,
                escape(&label)
            );
        }
        self.out.push_str("</g>\n");

        let mut child_start = start;
        for (child_name, child) in &node.children {
            self.frame(child_name, child, child_start, depth + 1);
            child_start += child.weight;
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Warm palette keyed by an FNV-1a hash of the name, so a function keeps
/// its colour across renders.
fn color(name: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let r = 205 + (h % 50);
    let g = (h >> 8) % 230;
    let b = (h >> 16) % 55;
    format!("rgb({r},{g},{b})")
}

/// Renders a self-contained SVG flame graph. Frame width is proportional to
/// inclusive weight, roots sit at the bottom and siblings are laid out in
/// alphabetical order.
pub fn render_flamegraph(folded: &[FoldedStack], metric_label: &str) -> Result<String, HotspotError> {
    let mut root = Node::default();
    for f in folded {
        if f.weight > 0 && !f.frames.is_empty() {
            root.insert(&f.frames, f.weight);
        }
    }
    if root.weight == 0 {
        return Err(HotspotError::EmptyInput);
    }
    let height = HEADER + root.depth() * ROW_HEIGHT + FOOTER;

    let mut out = String::new();
    let _ = write!(
        out,
        "<?xml version=\"1.0\" standalone=\"no\"?>\n\
         <svg version=\"1.1\" width=\"{CANVAS_WIDTH}\" height=\"{height}\" viewBox=\"0 0 {CANVAS_WIDTH} {height}\" xmlns=\"http://www.w3.org/2000/svg\">\n\
         <style>text{{font-family:Verdana,sans-serif;font-size:11px;fill:#000}}</style>\n\
         <rect x=\"0\" y=\"0\" width=\"{CANVAS_WIDTH}\" height=\"{height}\" fill=\"#f8f8f8\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" style=\"font-size:15px\">Flame Graph ({}, total {})</text>\n",
        CANVAS_WIDTH / 2,
        escape(metric_label),
        root.weight,
    );
    let mut layout = Layout {
        out: &mut out,
        total: root.weight,
        height,
    };
    let mut start = 0;
    for (name, node) in &root.children {
        layout.frame(name, node, start, 0);
        start += node.weight;
    }
    out.push_str("</svg>\n");
    Ok(out)
}
