//! Minimal SVG line plots from metric CSV files. One polyline per input
//! file, labeled by file stem, with linear axes covering the data.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One named series of (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads a metrics CSV: skips the header row, takes the first column as x
/// and the second as y.
pub fn read_series(path: &Path) -> Result<Series> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    lines
        .next()
        .ok_or_else(|| Error::InvalidArgument(format!("{}: empty file", path.display())))?;
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let x: f64 = parse_col(path, i, cols.next())?;
        let y: f64 = parse_col(path, i, cols.next())?;
        points.push((x, y));
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Series { name, points })
}

fn parse_col(path: &Path, row: usize, col: Option<&str>) -> Result<f64> {
    col.and_then(|c| c.trim().parse().ok()).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{}: row {} is not numeric x,y data",
            path.display(),
            row + 2
        ))
    })
}

/// Renders the series to a self-contained SVG document.
pub fn render_svg(series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("no input series".into()));
    }
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(0.0_f64, f64::max);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for p in series.iter().flat_map(|s| s.points.iter()) {
        y_min = y_min.min(p.1);
        y_max = y_max.max(p.1);
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        return Err(Error::InvalidArgument("non-finite data values".into()));
    }
    let x_max = if x_max <= 0.0 { 1.0 } else { x_max };
    if y_max <= y_min {
        // degenerate vertical range: pad to a unit band around the value
        y_min -= 0.5;
        y_max += 0.5;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + x / x_max * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>",
        x0 + plot_w
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{MARGIN_TOP}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    // ticks
    for i in 0..=5 {
        let fx = i as f64 / 5.0;
        let x = x0 + fx * plot_w;
        let label = format_tick(fx * x_max);
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{label}</text>",
            y0 + 20.0
        );
        let y = MARGIN_TOP + (1.0 - fx) * plot_h;
        let label = format_tick(y_min + fx * (y_max - y_min));
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{x0}\" y2=\"{y}\" stroke=\"black\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{label}</text>",
            x0 - 8.0,
            y + 4.0
        );
    }
    // series
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in &s.points {
            let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.trim_end()
        );
        let ly = MARGIN_TOP + 16.0 * (i as f64 + 1.0);
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads each CSV and writes the combined plot to `output`.
pub fn emit_plot(inputs: &[std::path::PathBuf], output: &Path) -> Result<()> {
    let series: Vec<Series> = inputs
        .iter()
        .map(|p| read_series(p))
        .collect::<Result<_>>()?;
    let svg = render_svg(&series)?;
    std::fs::write(output, svg)?;
    Ok(())
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn plot_contains_polyline_per_series_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("run_a.csv");
        let b = dir.path().join("run_b.csv");
        std::fs::write(&a, "step,reward_mean,reward_std\n0,10,0\n100,20,0\n").unwrap();
        std::fs::write(&b, "step,reward_mean,reward_std\n0,5,0\n100,30,0\n").unwrap();
        let out = dir.path().join("plot.svg");
        emit_plot(&[a, b], &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("run_a"));
        assert!(svg.contains("run_b"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_csv_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("empty.csv");
        std::fs::write(&a, "step,total_loss\n").unwrap();
        let out = dir.path().join("plot.svg");
        assert!(emit_plot(&[a], &out).is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let out = PathBuf::from("/tmp/nonexistent-plot-out.svg");
        assert!(emit_plot(&[PathBuf::from("/tmp/does-not-exist-12345.csv")], &out).is_err());
    }

    #[test]
    fn single_point_constant_series_renders() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("flat.csv");
        std::fs::write(&a, "step,total_loss\n0,1\n10,1\n").unwrap();
        let out = dir.path().join("plot.svg");
        emit_plot(&[a], &out).unwrap();
    }
}
