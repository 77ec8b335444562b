//! Static SVG line charts for experiment reports.
//!
//! One chart per target rank plots success rate against sample fraction
//! with a line per user group; a final chart plots the per-rank mean
//! l0 change fraction against sample fraction. Output is plain SVG text,
//! deterministic for a given report.

use super::ExperimentReport;
use crate::error::Result;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Series {
    label: String,
    points: Vec<(usize, f64)>,
}

fn fmt_fraction(f: f64) -> String {
    format!("{f}")
}

fn render_line_chart(title: &str, y_label: &str, fractions: &[f64], series: &[Series]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |idx: usize| {
        if fractions.len() <= 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + plot_w * idx as f64 / (fractions.len() - 1) as f64
        }
    };
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{title}</text>"#,
        MARGIN_LEFT + plot_w / 2.0
    );

    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    for (idx, f) in fractions.iter().enumerate() {
        let x = x_of(idx);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{MARGIN_TOP:.1}" x2="{x:.1}" y2="{:.1}" stroke="#eeeeee"/>"##,
            MARGIN_TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h + 18.0,
            fmt_fraction(*f)
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT:.1}" y1="{MARGIN_TOP:.1}" x2="{MARGIN_LEFT:.1}" y2="{:.1}" stroke="black"/>"#,
        MARGIN_TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">sample fraction</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{y_label}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if !s.points.is_empty() {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(idx, v)| format!("{:.1},{:.1}", x_of(idx), y_of(v)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for &(idx, v) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    x_of(idx),
                    y_of(v)
                );
            }
        }
        let ly = MARGIN_TOP + 16.0 * si as f64;
        let lx = MARGIN_LEFT + plot_w + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            ly + 4.0,
            lx + 20.0,
            ly + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 26.0,
            ly + 8.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes one `success_rank_<rank>.svg` per target rank plus
/// `l0_fraction.svg`; returns the paths written.
pub fn render_charts(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut fractions: Vec<f64> = Vec::new();
    for cell in &report.cells {
        if !fractions.contains(&cell.sample_fraction) {
            fractions.push(cell.sample_fraction);
        }
    }
    fractions.sort_by(f64::total_cmp);
    let idx_of = |f: f64| fractions.iter().position(|&x| x == f).unwrap();
    let ranks: BTreeSet<usize> = report.cells.iter().map(|c| c.target_rank).collect();
    let groups: BTreeSet<usize> = report.cells.iter().map(|c| c.group).collect();

    let mut written = Vec::new();
    for &rank in &ranks {
        let series: Vec<Series> = groups
            .iter()
            .map(|&g| {
                let mut points: Vec<(usize, f64)> = report
                    .cells
                    .iter()
                    .filter(|c| c.target_rank == rank && c.group == g)
                    .filter_map(|c| {
                        c.metrics
                            .as_ref()
                            .map(|m| (idx_of(c.sample_fraction), m.success_rate))
                    })
                    .collect();
                points.sort_by_key(|&(idx, _)| idx);
                Series {
                    label: format!("group {g}"),
                    points,
                }
            })
            .collect();
        let svg = render_line_chart(
            &format!("Success rate, target rank {rank}"),
            "success rate",
            &fractions,
            &series,
        );
        let path = dir.join(format!("success_rank_{rank}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }

    let series: Vec<Series> = ranks
        .iter()
        .map(|&rank| {
            let points: Vec<(usize, f64)> = fractions
                .iter()
                .enumerate()
                .filter_map(|(idx, &f)| {
                    let values: Vec<f64> = report
                        .cells
                        .iter()
                        .filter(|c| c.target_rank == rank && c.sample_fraction == f)
                        .filter_map(|c| c.metrics.as_ref().map(|m| m.l0_fraction))
                        .collect();
                    (!values.is_empty())
                        .then(|| (idx, values.iter().sum::<f64>() / values.len() as f64))
                })
                .collect();
            Series {
                label: format!("rank {rank}"),
                points,
            }
        })
        .collect();
    let svg = render_line_chart(
        "Changed feature fraction (mean over groups)",
        "l0 fraction",
        &fractions,
        &series,
    );
    let path = dir.join("l0_fraction.svg");
    std::fs::write(&path, svg)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ExperimentCell, ExperimentReport};
    use crate::metrics::MetricsReport;

    fn cell(group: usize, rank: usize, fraction: f64, success: f64) -> ExperimentCell {
        ExperimentCell {
            group,
            target_rank: rank,
            sample_fraction: fraction,
            item: Some(1),
            metrics: Some(MetricsReport {
                success_rate: success,
                l0_changes: 3,
                l0_fraction: 0.06,
                l1_change: 1.0,
                rbo_mean: 0.99,
                rbo_min: 0.98,
            }),
            iterations: 7,
            wall_ms: 0,
            error: None,
        }
    }

    fn report(cells: Vec<ExperimentCell>) -> ExperimentReport {
        let aggregates = ExperimentReport::compute_aggregates(&cells);
        ExperimentReport { cells, aggregates }
    }

    #[test]
    fn renders_one_file_per_rank_plus_sparsity() {
        let r = report(vec![
            cell(0, 11, 0.05, 0.5),
            cell(0, 11, 0.2, 1.0),
            cell(0, 21, 0.05, 0.4),
            cell(0, 21, 0.2, 0.9),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let written = render_charts(&r, dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec!["success_rank_11.svg", "success_rank_21.svg", "l0_fraction.svg"]
        );
        for path in &written {
            let text = std::fs::read_to_string(path).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.ends_with("</svg>\n"));
        }
    }

    #[test]
    fn constant_success_keeps_curves_on_the_top_gridline() {
        let r = report(vec![cell(0, 11, 0.05, 1.0), cell(0, 11, 0.2, 1.0)]);
        let dir = tempfile::tempdir().unwrap();
        render_charts(&r, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("success_rank_11.svg")).unwrap();
        // y of success 1.0 equals the top margin at both ends of the x range
        let expected = format!(
            r#"points="{:.1},{MARGIN_TOP:.1} {:.1},{MARGIN_TOP:.1}""#,
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT
        );
        assert!(text.contains(&expected), "{text}");
    }

    #[test]
    fn chart_output_is_deterministic() {
        let r = report(vec![
            cell(0, 11, 0.05, 0.25),
            cell(1, 11, 0.05, 0.75),
            cell(0, 11, 0.2, 0.5),
            cell(1, 11, 0.2, 1.0),
        ]);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        render_charts(&r, d1.path()).unwrap();
        render_charts(&r, d2.path()).unwrap();
        let a = std::fs::read_to_string(d1.path().join("success_rank_11.svg")).unwrap();
        let b = std::fs::read_to_string(d2.path().join("success_rank_11.svg")).unwrap();
        assert_eq!(a, b);
        let empty = report(Vec::new());
        let d3 = tempfile::tempdir().unwrap();
        let written = render_charts(&empty, d3.path()).unwrap();
        assert_eq!(written.len(), 1);
    }
}
