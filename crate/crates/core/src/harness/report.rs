//! Result serialization: a fixed-column CSV format that round-trips
//! exactly, and a self-contained SVG plot of error-rate curves.

use std::fmt::Write as _;
use std::path::Path;

use super::{SerCurve, SerPoint};
use crate::{Error, Result};

/// Column order is part of the interface; downstream tooling indexes by it.
pub const CSV_HEADER: &str = "algorithm,noise_db,trials,errors,total,ser,ci_low,ci_high,diverged";

/// Plot position for an exact-zero rate; zero has no logarithm.
pub const DEFAULT_SER_FLOOR: f64 = 1e-6;

/// Renders the curve as CSV text. Floats print in shortest round-trip form,
/// so equal curves always serialize to identical bytes.
pub fn to_csv_string(curve: &SerCurve) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.algorithm, p.noise_db, p.trials, p.errors, p.total, p.ser, p.ci_low, p.ci_high,
            p.diverged
        );
    }
    out
}

pub fn emit_csv(curve: &SerCurve, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(curve)).map_err(|e| Error::io(path, e))
}

/// Parses CSV produced by [`to_csv_string`]. The excluded-trial count is not
/// serialized, so parsed points carry `failures = 0`.
pub fn from_csv_str(text: &str) -> Result<SerCurve> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        _ => return Err(Error::Config { line: 1, message: "bad or missing CSV header".into() }),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Config {
                line: line_no,
                message: format!("expected 9 columns, found {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::Config {
            line: line_no,
            message: format!("invalid {what}"),
        };
        points.push(SerPoint {
            algorithm: fields[0].to_string(),
            noise_db: fields[1].parse().map_err(|_| bad("noise_db"))?,
            trials: fields[2].parse().map_err(|_| bad("trials"))?,
            errors: fields[3].parse().map_err(|_| bad("errors"))?,
            total: fields[4].parse().map_err(|_| bad("total"))?,
            ser: fields[5].parse().map_err(|_| bad("ser"))?,
            ci_low: fields[6].parse().map_err(|_| bad("ci_low"))?,
            ci_high: fields[7].parse().map_err(|_| bad("ci_high"))?,
            diverged: fields[8].parse().map_err(|_| bad("diverged"))?,
            failures: 0,
        });
    }
    Ok(SerCurve { points })
}

pub fn read_csv(path: &Path) -> Result<SerCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv_str(&text)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = WIDTH - 168.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = HEIGHT - 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn x_position(db: f64, min_db: f64, max_db: f64) -> f64 {
    let span = (max_db - min_db).max(1e-12);
    LEFT + (db - min_db) / span * (RIGHT - LEFT)
}

/// Log-scale vertical position; rates at or below the floor sit on the
/// bottom edge.
pub(crate) fn y_position(ser: f64, floor: f64) -> f64 {
    let lo = floor.log10();
    let t = ((ser.max(floor).log10() - lo) / (0.0 - lo)).clamp(0.0, 1.0);
    BOTTOM - t * (BOTTOM - TOP)
}

/// Renders one polyline per algorithm on a log-rate axis, with a legend.
/// `floor` is where exact zeros are drawn (see [`DEFAULT_SER_FLOOR`]).
pub fn to_svg_string(curve: &SerCurve, floor: f64) -> Result<String> {
    if !(floor.is_finite() && floor > 0.0 && floor < 1.0) {
        return Err(Error::invalid("plot floor must lie in (0, 1)"));
    }
    let mut levels: Vec<f64> = curve.points.iter().map(|p| p.noise_db).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let (min_db, max_db) = match (levels.first(), levels.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        (Some(&lo), _) => (lo - 0.5, lo + 0.5),
        _ => (0.0, 1.0),
    };
    let mut algorithms: Vec<&str> = Vec::new();
    for p in &curve.points {
        if !algorithms.contains(&p.algorithm.as_str()) {
            algorithms.push(&p.algorithm);
        }
    }

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = write!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );

    // Decade gridlines and y labels.
    let decades = (-floor.log10()).ceil() as i32;
    for d in 0..=decades {
        let v = 10f64.powi(-d);
        let y = y_position(v, floor);
        let _ = write!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{RIGHT}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\"/>\n"
        );
        let label = if d == 0 { "1".to_string() } else { format!("1e-{d}") };
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>\n",
            LEFT - 6.0,
            y + 4.0
        );
    }

    // x ticks at each grid level.
    for &db in &levels {
        let x = x_position(db, min_db, max_db);
        let _ = write!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{BOTTOM}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#999999\"/>\n",
            BOTTOM + 5.0
        );
        let _ = write!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{db}</text>\n",
            BOTTOM + 18.0
        );
    }

    // Frame and axis titles.
    let _ = write!(
        svg,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"#333333\"/>\n",
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">noise level (dB)</text>\n",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 10.0
    );
    let _ = write!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">symbol error rate</text>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    );

    for (ai, algorithm) in algorithms.iter().enumerate() {
        let color = PALETTE[ai % PALETTE.len()];
        let mut pts: Vec<&SerPoint> = curve
            .points
            .iter()
            .filter(|p| p.algorithm == *algorithm)
            .collect();
        pts.sort_by(|a, b| a.noise_db.total_cmp(&b.noise_db));
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    x_position(p.noise_db, min_db, max_db),
                    y_position(p.ser, floor)
                )
            })
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        );
        for c in &coords {
            let (x, y) = c.split_once(',').expect("coordinate pair");
            let _ = write!(
                svg,
                "<circle cx=\"{x}\" cy=\"{y}\" r=\"2.5\" fill=\"{color}\"/>\n"
            );
        }
        // Legend row.
        let ly = TOP + 14.0 + 18.0 * ai as f64;
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            RIGHT + 10.0,
            RIGHT + 34.0
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            RIGHT + 40.0,
            ly + 4.0,
            escape_text(algorithm)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_svg(curve: &SerCurve, path: &Path, floor: f64) -> Result<()> {
    std::fs::write(path, to_svg_string(curve, floor)?).map_err(|e| Error::io(path, e))
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
