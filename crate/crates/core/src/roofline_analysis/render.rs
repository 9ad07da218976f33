use std::fmt::Write;

use super::{AnalysisError, AnalyzedPoint, Ceiling, MachineModel};
use crate::Scalar;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

struct Axes {
    lx0: f64,
    lx1: f64,
    ly0: f64,
    ly1: f64,
}

impl Axes {
    fn x(&self, ai: f64) -> f64 {
        LEFT + (ai.log10() - self.lx0) / (self.lx1 - self.lx0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, gflops: f64) -> f64 {
        HEIGHT - BOTTOM - (gflops.log10() - self.ly0) / (self.ly1 - self.ly0) * (HEIGHT - TOP - BOTTOM)
    }

    #[cfg(test)]
    fn ai_at(&self, px: f64) -> f64 {
        10f64.powf(self.lx0 + (px - LEFT) / (WIDTH - LEFT - RIGHT) * (self.lx1 - self.lx0))
    }

    #[cfg(test)]
    fn gflops_at(&self, py: f64) -> f64 {
        10f64.powf(self.ly0 + (HEIGHT - BOTTOM - py) / (HEIGHT - TOP - BOTTOM) * (self.ly1 - self.ly0))
    }
}

/// Decade bounds `(floor, ceil)` of `log10` over positive values, at least
/// one decade wide.
fn decades(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let lo = lo.log10().floor();
    let hi = hi.log10().ceil().max(lo + 1.0);
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn decade_label(exp: i32) -> String {
    let v = 10f64.powi(exp);
    if exp >= 0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn axes_for<T: Scalar>(model: &MachineModel<T>, plotted: &[&AnalyzedPoint<T>]) -> Axes {
    let f = |v: T| v.to_f64_lossy();
    let peak = f(model.peak_gflops);
    let knee = f(model.knee());
    let (lx0, lx1) = decades(
        plotted
            .iter()
            .map(|p| f(p.point.arithmetic_intensity_fp))
            .chain([knee, knee * 4.0]),
    );
    let x_min = 10f64.powf(lx0);
    let mut ys: Vec<f64> = plotted.iter().map(|p| f(p.point.gflops)).collect();
    ys.extend([peak * 2.0, (f(model.mem_bandwidth_gbs) * x_min).min(peak)]);
    for c in &model.extra_ceilings {
        if let Ceiling::Compute { gflops, .. } = c {
            ys.push(f(*gflops));
        }
    }
    let (ly0, ly1) = decades(ys.into_iter());
    Axes { lx0, lx1, ly0, ly1 }
}

/// Log-log roofline plot. X is FLOP/byte, Y is GFLOP/s. Points that cannot
/// sit on log axes (zero intensity or throughput) are listed below the plot.
pub fn render_roofline<T: Scalar>(
    model: &MachineModel<T>,
    points: &[AnalyzedPoint<T>],
) -> Result<String, AnalysisError> {
    let f = |v: T| v.to_f64_lossy();
    let peak = f(model.peak_gflops);
    let bw = f(model.mem_bandwidth_gbs);
    let knee = f(model.knee());

    let (plotted, unplotted): (Vec<_>, Vec<_>) = points
        .iter()
        .partition(|p| f(p.point.arithmetic_intensity_fp) > 0.0 && f(p.point.gflops) > 0.0);
    if plotted.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }

    let axes = axes_for(model, &plotted);
    let (lx0, lx1, ly0, ly1) = (axes.lx0, axes.lx1, axes.ly0, axes.ly1);
    let x_min = 10f64.powf(lx0);
    let y_min = 10f64.powf(ly0);
    let x_max = 10f64.powf(lx1);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" standalone="no"?>
<svg version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" xmlns="http://www.w3.org/2000/svg">
<style>text{{font-family:Verdana,sans-serif;font-size:11px}} .grid{{stroke:#ddd;stroke-width:1}} .roof{{stroke:#1f4e9c;stroke-width:2.5;fill:none}} .extra{{stroke:#888;stroke-width:1.5;stroke-dasharray:6 4;fill:none}}</style>
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" style="font-size:15px">Roofline: {}</text>"#,
        WIDTH / 2.0,
        escape(&model.name)
    );

    for e in lx0 as i32..=lx1 as i32 {
        let x = axes.x(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line class="grid" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 16.0,
            decade_label(e)
        );
    }
    for e in ly0 as i32..=ly1 as i32 {
        let y = axes.y(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line class="grid" x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            decade_label(e)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Arithmetic intensity (FLOP/byte)</text>
<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Performance (GFLOP/s)</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 18.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
    );

    // Bandwidth roof starts where it enters the plot, either at the left
    // edge or at the bottom edge.
    let bw_start = (y_min / bw).max(x_min);
    let _ = writeln!(
        s,
        r#"<path class="roof" d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2}"/>
<text x="{:.2}" y="{:.2}">{} GB/s</text>
<text x="{:.2}" y="{:.2}" text-anchor="end">{} GFLOP/s</text>"#,
        axes.x(bw_start),
        axes.y(bw * bw_start),
        axes.x(knee),
        axes.y(peak),
        axes.x(x_max),
        axes.y(peak),
        axes.x(bw_start) + 6.0,
        axes.y(bw * bw_start) - 8.0,
        model.mem_bandwidth_gbs,
        axes.x(x_max) - 4.0,
        axes.y(peak) - 6.0,
        model.peak_gflops,
    );
    let _ = writeln!(
        s,
        r#"<line class="extra" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><text x="{:.2}" y="{:.2}">knee ai={knee:.3}</text>"#,
        axes.x(knee),
        axes.y(peak),
        axes.x(knee),
        HEIGHT - BOTTOM,
        axes.x(knee) + 4.0,
        HEIGHT - BOTTOM - 6.0,
    );

    for c in &model.extra_ceilings {
        match c {
            Ceiling::Compute { label, gflops } => {
                let g = f(*gflops);
                let from = (g / bw).max(x_min);
                let _ = writeln!(
                    s,
                    r#"<line class="extra" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><text x="{:.2}" y="{:.2}" text-anchor="end">{} ({} GFLOP/s)</text>"#,
                    axes.x(from),
                    axes.y(g),
                    axes.x(x_max),
                    axes.y(g),
                    axes.x(x_max) - 4.0,
                    axes.y(g) - 4.0,
                    escape(label),
                    gflops
                );
            }
            Ceiling::Bandwidth { label, gbs } => {
                let b = f(*gbs);
                let from = (y_min / b).max(x_min);
                let to = peak / b;
                let _ = writeln!(
                    s,
                    r#"<line class="extra" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><text x="{:.2}" y="{:.2}">{} ({} GB/s)</text>"#,
                    axes.x(from),
                    axes.y(b * from),
                    axes.x(to),
                    axes.y(peak),
                    axes.x(from) + 6.0,
                    axes.y(b * from) - 8.0,
                    escape(label),
                    gbs
                );
            }
        }
    }

    for p in &plotted {
        let cx = axes.x(f(p.point.arithmetic_intensity_fp));
        let cy = axes.y(f(p.point.gflops));
        let label = escape(&p.point.loop_info.label());
        if p.out_of_model {
            let _ = writeln!(
                s,
                r##"<g class="point out-of-model"><title>{label}: above the model roof</title><circle cx="{cx:.2}" cy="{cy:.2}" r="5" fill="#d62728"/><text x="{:.2}" y="{:.2}" fill="#d62728">! {label}</text></g>"##,
                cx + 8.0,
                cy + 4.0
            );
        } else {
            let _ = writeln!(
                s,
                r##"<g class="point"><title>{label}</title><circle cx="{cx:.2}" cy="{cy:.2}" r="5" fill="#2ca02c"/><text x="{:.2}" y="{:.2}">{label}</text></g>"##,
                cx + 8.0,
                cy + 4.0
            );
        }
    }
    for (i, p) in unplotted.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="{:.2}" class="unplotted">not plotted (zero FLOPs): {}</text>"#,
            TOP + 14.0 * (i as f64 + 1.0),
            escape(&p.point.loop_info.label())
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roofline_analysis::{analyze_point, RooflinePoint};
    use crate::roofline_runtime::{LoopCounters, LoopInfo, Phase};

    fn pt(model: &MachineModel, line: u32, ai: f64, gflops: f64) -> AnalyzedPoint {
        analyze_point(
            RooflinePoint {
                loop_info: LoopInfo::new(line, "mm.c", "matmul"),
                counters: LoopCounters::default(),
                arithmetic_intensity_fp: ai,
                arithmetic_intensity_total: ai,
                gflops,
                gbs: 1.0,
                baseline_time_s: 1.0,
                instrumented_time_s: 1.0,
                overhead_ratio: 1.0,
                timed_by: Phase::Baseline,
            },
            model,
        )
    }

    #[test]
    fn renders_deterministically_with_labels() {
        let m = MachineModel::new("x60", 1.6, 25.6, 4.7);
        let pts = [pt(&m, 12, 1.0 / 6.0, 0.5), pt(&m, 30, 8.0, 1.58)];
        let a = render_roofline(&m, &pts).unwrap();
        assert_eq!(a, render_roofline(&m, &pts).unwrap());
        assert!(a.contains("matmul@mm.c:12"));
        assert!(a.contains("matmul@mm.c:30"));
        assert!(a.contains("knee ai=5.447"));
        assert!(!a.contains("out-of-model"));
    }

    #[test]
    fn bandwidth_roof_has_unit_slope() {
        let m = MachineModel::new("m", 1.0, 25.6, 4.7);
        let pts = [pt(&m, 1, 0.1, 0.2)];
        let svg = render_roofline(&m, &pts).unwrap();
        let d = svg.split("class=\"roof\" d=\"M").nth(1).unwrap();
        let nums: Vec<f64> = d[..d.find('"').unwrap()]
            .split([',', ' ', 'L'])
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().unwrap())
            .collect();
        let axes = axes_for(&m, &pts.iter().collect::<Vec<_>>());
        let (a0, g0) = (axes.ai_at(nums[0]), axes.gflops_at(nums[1]));
        let (a1, g1) = (axes.ai_at(nums[2]), axes.gflops_at(nums[3]));
        let slope = (g1.log10() - g0.log10()) / (a1.log10() - a0.log10());
        assert!((slope - 1.0).abs() < 1e-3, "{slope}");
        // on the line through (1, bw)
        assert!((g0 / a0 - 4.7).abs() / 4.7 < 1e-3);
        assert!((a1 - 25.6 / 4.7).abs() / a1 < 1e-3);
        assert!((g1 - 25.6).abs() / 25.6 < 1e-3);
        // compute roof is horizontal
        assert_eq!(nums[3], nums[5]);
    }

    #[test]
    fn out_of_model_marker() {
        let m = MachineModel::new("m", 1.0, 25.6, 4.7);
        let svg = render_roofline(&m, &[pt(&m, 1, 0.1, 5.0)]).unwrap();
        assert!(svg.contains("out-of-model"));
    }

    #[test]
    fn nothing_to_plot() {
        let m = MachineModel::new("m", 1.0, 25.6, 4.7);
        assert!(matches!(
            render_roofline::<f64>(&m, &[]),
            Err(AnalysisError::EmptyInput)
        ));
        assert!(matches!(
            render_roofline(&m, &[pt(&m, 1, 0.0, 0.0)]),
            Err(AnalysisError::EmptyInput)
        ));
    }
}
