//! SVG line chart of a gold trace against prediction tracks.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use emocont_core::ccc;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 50.0;
const GOLD_COLOR: &str = "#d62728";
const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTrack {
    pub label: String,
    pub values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `gold` (red) and each prediction track. The title lists every
/// track's CCC against `gold`.
pub fn render_svg(title: &str, gold: &[f64], tracks: &[PlotTrack], segment_ms: u64) -> Result<String> {
    if gold.len() < 2 {
        bail!("gold trace needs at least two segments");
    }
    let mut scores = Vec::with_capacity(tracks.len());
    for t in tracks {
        if t.values.len() != gold.len() {
            bail!(
                "track '{}' has {} segments, gold has {}",
                t.label,
                t.values.len(),
                gold.len()
            );
        }
        scores.push(ccc(&t.values, gold)?);
    }

    let all = gold.iter().chain(tracks.iter().flat_map(|t| &t.values));
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (lo, hi) = (lo - 0.05 * span, hi + 0.05 * span);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let n = gold.len();
    let x_of = |i: usize| LEFT + plot_w * i as f64 / (n - 1) as f64;
    let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let points = |values: &[f64]| {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut heading = escape(title);
    for (t, c) in tracks.iter().zip(&scores) {
        write!(heading, "  ccc({}) = {c:.3}", escape(&t.label)).unwrap();
    }

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{LEFT}" y="28" font-family="sans-serif" font-size="15">{heading}</text>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="gray"/>"#
    )
    .unwrap();

    // Axis labels: value range on the left, time on the bottom.
    for (v, anchor_y) in [(hi, TOP + 4.0), (lo, TOP + plot_h)] {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{anchor_y:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0
        )
        .unwrap();
    }
    let end_s = (n as u64 * segment_ms) as f64 / 1000.0;
    writeln!(
        s,
        r#"<text x="{LEFT}" y="{:.1}" font-family="sans-serif" font-size="11">0 s</text>"#,
        HEIGHT - BOTTOM + 16.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{end_s:.1} s</text>"#,
        LEFT + plot_w,
        HEIGHT - BOTTOM + 16.0
    )
    .unwrap();

    let mut legend = vec![("gold".to_string(), GOLD_COLOR)];
    writeln!(
        s,
        r#"<polyline fill="none" stroke="{GOLD_COLOR}" stroke-width="2" points="{}"/>"#,
        points(gold)
    )
    .unwrap();
    for (k, (t, c)) in tracks.iter().zip(&scores).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points(&t.values)
        )
        .unwrap();
        legend.push((format!("{} (ccc={c:.3})", t.label), color));
    }

    let lx = WIDTH - RIGHT + 15.0;
    writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#).unwrap();
    for (k, (label, color)) in legend.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(label)).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_track_scores_one() {
        let gold = vec![0.1, 0.4, -0.2, 0.0];
        let svg = render_svg(
            "c",
            &gold,
            &[PlotTrack {
                label: "same".into(),
                values: gold.clone(),
            }],
            250,
        )
        .unwrap();
        assert!(svg.contains("ccc(same) = 1.000"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render_svg(
            "a<b",
            &[0.0, 1.0],
            &[PlotTrack {
                label: "x&y".into(),
                values: vec![1.0, 0.0],
            }],
            100,
        )
        .unwrap();
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("x&amp;y"));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = render_svg(
            "t",
            &[0.0, 1.0, 2.0],
            &[PlotTrack {
                label: "p".into(),
                values: vec![0.0, 1.0],
            }],
            250,
        )
        .unwrap_err();
        assert!(err.to_string().contains("'p'"));
    }
}
