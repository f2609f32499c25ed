//! Hand-rolled SVG rendering for the benchmark's log-log MSE chart.
//!
//! The chart is deliberately dependency-free and deterministic: coordinates
//! are formatted with fixed precision, series colors are keyed by method
//! (not insertion order), and nothing time- or locale-dependent is written,
//! so identical tables render to identical bytes.

use std::fmt::Write as _;

use crate::bench::{MseSummary, MseTable};
use crate::estimators::Method;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 168.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Fixed per-method series color, stable across configurations.
fn color(method: Method) -> &'static str {
    match method {
        Method::PostStrat => "#1f77b4",
        Method::PostStratReg => "#ff7f0e",
        Method::Nmc => "#2ca02c",
    }
}

/// Renders the summary of `table` as a log-log MSE-versus-N chart with one
/// polyline per method and a legend. Cells dropped from the summary (or
/// with an exactly-zero MSE, which has no logarithm) do not appear.
pub(crate) fn render_mse_chart(table: &MseTable) -> String {
    let series: Vec<(Method, Vec<&MseSummary>)> = Method::ALL
        .iter()
        .map(|&method| {
            let points: Vec<&MseSummary> = table
                .summary
                .iter()
                .filter(|s| s.method == method && s.mse > 0.0)
                .collect();
            (method, points)
        })
        .filter(|(_, points)| !points.is_empty())
        .collect();

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="monospace" font-size="15" fill="black">{} — mean squared error vs total samples</text>"#,
        MARGIN_LEFT,
        table.problem
    );

    if series.is_empty() {
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="13" fill="#666666">no valid cells to plot</text>"##,
            MARGIN_LEFT,
            HEIGHT / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }

    let xs: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|s| (s.n_total as f64).log10()))
        .collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|s| s.mse.log10()))
        .collect();
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |lx: f64, ly: f64| -> (f64, f64) {
        (
            MARGIN_LEFT + (lx - x_min) / (x_max - x_min) * plot_w,
            MARGIN_TOP + (y_max - ly) / (y_max - y_min) * plot_h,
        )
    };

    // Frame and decade gridlines with 10^k labels.
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        MARGIN_LEFT, MARGIN_TOP, plot_w, plot_h
    );
    for k in decade_ticks(x_min, x_max) {
        let (px, _) = to_px(f64::from(k), y_min);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="black" text-anchor="middle">1e{k}</text>"#,
            MARGIN_TOP + plot_h + 18.0
        );
    }
    for k in decade_ticks(y_min, y_max) {
        let (_, py) = to_px(x_min, f64::from(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="black" text-anchor="end">1e{k}</text>"#,
            MARGIN_LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="13" fill="black" text-anchor="middle">total samples N</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-family="monospace" font-size="13" fill="black" text-anchor="middle" transform="rotate(-90 18 {:.2})">MSE</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // Series: one polyline plus point markers per method.
    for (method, points) in &series {
        let stroke = color(*method);
        let mut coords = String::new();
        for s in points {
            let (px, py) = to_px((s.n_total as f64).log10(), s.mse.log10());
            if !coords.is_empty() {
                coords.push(' ');
            }
            let _ = write!(coords, "{px:.2},{py:.2}");
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="2"/>"#
        );
        for s in points {
            let (px, py) = to_px((s.n_total as f64).log10(), s.mse.log10());
            let _ = writeln!(
                svg,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{stroke}"/>"#
            );
        }
    }

    // Legend in the right margin.
    let legend_x = MARGIN_LEFT + plot_w + 16.0;
    for (i, (method, _)) in series.iter().enumerate() {
        let y = MARGIN_TOP + 12.0 + 22.0 * i as f64;
        let stroke = color(*method);
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}" stroke-width="2"/>"#,
            legend_x + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="black">{method}</text>"#,
            legend_x + 30.0,
            y + 4.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}

/// Integer decades covered by `[lo, hi]` in log10 space.
fn decade_ticks(lo: f64, hi: f64) -> std::ops::RangeInclusive<i32> {
    (lo.ceil() as i32)..=(hi.floor() as i32)
}

/// Range of `values` padded by 5% of its span (or by a fixed half-decade
/// when all values coincide), so points never sit on the frame.
fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

#[cfg(test)]
mod tests {
    use crate::bench::{MseSummary, MseTable};
    use crate::problems::NestedProblem;

    use super::*;

    /// Minimal well-formedness check tailored to what the renderer can
    /// emit: after the declaration, every `<` opens a tag that closes with
    /// `>`, attribute quotes are balanced, open/close tags nest properly,
    /// and text content carries no unescaped markup characters.
    fn assert_well_formed_xml(doc: &str) {
        let mut rest = doc.trim_start();
        if let Some(decl) = rest.strip_prefix("<?xml") {
            let end = decl.find("?>").expect("declaration closes");
            rest = &decl[end + 2..];
        }
        let mut stack: Vec<&str> = Vec::new();
        for (i, segment) in rest.split('<').enumerate() {
            if i == 0 {
                assert!(!segment.contains('>'), "stray '>' before first tag");
                continue;
            }
            let close = segment.find('>').expect("tag closes");
            let (tag, text) = segment.split_at(close);
            assert_eq!(tag.matches('"').count() % 2, 0, "unbalanced quotes in <{tag}>");
            assert!(
                !text[1..].contains(['>', '&']),
                "unescaped markup in text after <{tag}>"
            );
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop(), Some(name), "mismatched </{name}>");
            } else if !tag.ends_with('/') {
                let name = tag.split_whitespace().next().expect("tag has a name");
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    fn table_with(mses: &[(Method, usize, f64)]) -> MseTable {
        MseTable {
            problem: NestedProblem::EigToy,
            reference: 0.0,
            rows: Vec::new(),
            summary: mses
                .iter()
                .map(|&(method, n_total, mse)| MseSummary {
                    method,
                    m: 2,
                    n_total,
                    mse,
                    stderr: 0.0,
                    count: 2,
                })
                .collect(),
        }
    }

    #[test]
    fn chart_has_one_series_per_method_and_a_legend() {
        let table = table_with(&[
            (Method::PostStrat, 64, 1e-2),
            (Method::PostStrat, 256, 1e-3),
            (Method::Nmc, 64, 5e-2),
            (Method::Nmc, 256, 1e-2),
        ]);
        let svg = render_mse_chart(&table);
        assert_well_formed_xml(&svg);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("#1f77b4"));
        assert!(svg.contains("#2ca02c"));
        assert!(!svg.contains("#ff7f0e"), "absent method must not be drawn");
        assert!(svg.contains(">post-strat</text>"));
        assert!(svg.contains(">nmc</text>"));
        assert!(svg.contains("eig-toy"));
    }

    #[test]
    fn chart_is_deterministic() {
        let table = table_with(&[
            (Method::PostStratReg, 16, 1e-1),
            (Method::PostStratReg, 81, 2e-2),
        ]);
        assert_eq!(render_mse_chart(&table), render_mse_chart(&table));
    }

    #[test]
    fn empty_summary_renders_a_placeholder() {
        let table = table_with(&[]);
        let svg = render_mse_chart(&table);
        assert_well_formed_xml(&svg);
        assert!(svg.contains("no valid cells"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn single_point_series_does_not_divide_by_zero() {
        let table = table_with(&[(Method::PostStrat, 64, 1e-2)]);
        let svg = render_mse_chart(&table);
        assert_well_formed_xml(&svg);
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }
}
