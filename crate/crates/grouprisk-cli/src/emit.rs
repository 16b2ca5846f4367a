//! CSV and SVG emission. The CSV column order is the field order of
//! [`RunRecord`] (wall time excluded so equal seeds yield equal bytes); the
//! SVG is hand-emitted: theory as solid polylines, empirical aggregates as
//! markers with ±2·stderr bars.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::sweep::{RunRecord, AGGREGATE_ROW};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("no records to emit")]
    Empty,
    #[error("unknown axis key {0:?} (expected gamma, theta_deg or pi)")]
    UnknownKey(String),
}

fn io_err(path: &Path, source: std::io::Error) -> EmitError {
    EmitError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes records in field order with a header row and RFC 4180 quoting.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<(), EmitError> {
    if records.is_empty() {
        return Err(EmitError::Empty);
    }
    let mut writer = csv::Writer::from_path(path).map_err(|source| EmitError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    for r in records {
        writer.serialize(r).map_err(|source| EmitError::Csv {
            path: path.display().to_string(),
            source,
        })?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads back a CSV produced by [`emit_csv`].
pub fn parse_csv(path: &Path) -> Result<Vec<RunRecord>, EmitError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| EmitError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<RunRecord>() {
        out.push(row.map_err(|source| EmitError::Csv {
            path: path.display().to_string(),
            source,
        })?);
    }
    Ok(out)
}

/// Axis selectors for the chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKey {
    Gamma,
    ThetaDeg,
    Pi,
}

impl AxisKey {
    pub fn parse(s: &str) -> Result<Self, EmitError> {
        match s {
            "gamma" => Ok(AxisKey::Gamma),
            "theta_deg" => Ok(AxisKey::ThetaDeg),
            "pi" => Ok(AxisKey::Pi),
            other => Err(EmitError::UnknownKey(other.to_string())),
        }
    }

    fn get(&self, r: &RunRecord) -> f64 {
        match self {
            AxisKey::Gamma => r.gamma,
            AxisKey::ThetaDeg => r.theta_deg,
            AxisKey::Pi => r.pi,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            AxisKey::Gamma => "gamma",
            AxisKey::ThetaDeg => "theta (deg)",
            AxisKey::Pi => "pi",
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 540.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 200.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

/// (x, empirical, stderr, theory)
type SeriesPoint = (f64, Option<f64>, Option<f64>, Option<f64>);

struct Series {
    name: String,
    color: &'static str,
    points: Vec<SeriesPoint>,
}

fn collect_series(records: &[RunRecord], x_key: AxisKey, series_key: AxisKey) -> Vec<Series> {
    let mut rows: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.replicate == AGGREGATE_ROW)
        .collect();
    rows.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(series_key.get(a).total_cmp(&series_key.get(b)))
            .then(x_key.get(a).total_cmp(&x_key.get(b)))
    });
    let mut series: Vec<Series> = Vec::new();
    for r in rows {
        let name = format!(
            "{} {}={}",
            r.estimator,
            series_key.label(),
            series_key.get(r)
        );
        if series.last().map(|s| s.name != name).unwrap_or(true) {
            let color = PALETTE[series.len() % PALETTE.len()];
            series.push(Series {
                name,
                color,
                points: Vec::new(),
            });
        }
        series.last_mut().unwrap().points.push((
            x_key.get(r),
            r.risk_empirical,
            r.stderr,
            r.risk_theory,
        ));
    }
    series
}

/// Writes a line chart of the aggregate rows: one series per
/// (estimator, series-key value).
pub fn emit_svg(
    records: &[RunRecord],
    path: &Path,
    x_key: AxisKey,
    series_key: AxisKey,
) -> Result<(), EmitError> {
    if records.is_empty() {
        return Err(EmitError::Empty);
    }
    let series = collect_series(records, x_key, series_key);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in &series {
        for &(x, emp, se, theory) in &s.points {
            xs.push(x);
            if let Some(v) = emp {
                let band = 2.0 * se.unwrap_or(0.0);
                ys.push(v - band);
                ys.push(v + band);
            }
            if let Some(v) = theory {
                ys.push(v);
            }
        }
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(EmitError::Empty);
    }
    let (x_min, x_max) = span(&xs);
    let (y_min, y_max) = span(&ys);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);
        (px, py)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // Axes.
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    let (x1, y1) = (WIDTH - MARGIN_R, MARGIN_T);
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        x1
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = x_min + t * (x_max - x_min);
        let yv = y_min + t * (y_max - y_min);
        let (px, _) = to_px(xv, y_min);
        let (_, py) = to_px(x_min, yv);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{y0:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xv:.3}</text>\n",
            y0 + 20.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0:.2}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{yv:.3}</text>\n",
            x0 - 8.0,
            py + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        x_key.label()
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" transform=\"rotate(-90 18 {:.2})\" text-anchor=\"middle\">minority risk</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));

    for (idx, s) in series.iter().enumerate() {
        // Theory: solid polyline.
        let theory_pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter_map(|&(x, _, _, th)| th.map(|v| to_px(x, v)))
            .collect();
        if theory_pts.len() >= 2 {
            let path_d: Vec<String> = theory_pts
                .iter()
                .map(|(px, py)| format!("{px:.2},{py:.2}"))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
                s.color,
                path_d.join(" ")
            ));
        }
        // Empirical: markers with error bars.
        for &(x, emp, se, _) in &s.points {
            if let Some(v) = emp {
                let (px, py) = to_px(x, v);
                if let Some(sev) = se {
                    let (_, lo) = to_px(x, v - 2.0 * sev);
                    let (_, hi) = to_px(x, v + 2.0 * sev);
                    svg.push_str(&format!(
                        "<line x1=\"{px:.2}\" y1=\"{lo:.2}\" x2=\"{px:.2}\" y2=\"{hi:.2}\" \
                         stroke=\"{}\" stroke-width=\"1\"/>\n",
                        s.color
                    ));
                }
                svg.push_str(&format!(
                    "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.2\" fill=\"{}\"/>\n",
                    s.color
                ));
            }
        }
        // Legend entry.
        let ly = MARGIN_T + 18.0 * idx as f64;
        let lx = WIDTH - MARGIN_R + 14.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            lx + 22.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            lx + 28.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(svg.as_bytes())
        .map_err(|e| io_err(path, e))?;
    Ok(())
}

fn span(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(theta: f64, gamma: f64, replicate: i64) -> RunRecord {
        RunRecord {
            experiment: "rf_regression".into(),
            estimator: "erm".into(),
            gamma,
            pi: 0.8,
            theta_deg: theta,
            psi1: Some(2.0 * gamma),
            psi2: Some(2.0),
            n: 400,
            d: 200,
            n_features: (400.0 * gamma) as usize,
            seed: 1,
            replicate,
            risk_empirical: Some(1.0 + theta / 100.0 - 0.1 * gamma),
            risk_theory: Some(1.0 + theta / 100.0 - 0.11 * gamma),
            stderr: Some(0.05),
            theory_bias: Some(0.3),
            theory_misspec_quad: Some(0.4),
            theory_misspec_cross: Some(-0.1),
            theory_variance: Some(0.2),
            majority_risk_empirical: None,
            majority_stderr: None,
            wall_time_ms: 3,
            error: None,
        }
    }

    #[test]
    fn single_record_gives_header_plus_one_row() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("one.csv");
        emit_csv(&[record(0.0, 2.0, 0)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with("experiment,estimator,gamma"));
        assert!(!text.contains("wall_time"));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("rt.csv");
        let records: Vec<RunRecord> = (0..4)
            .map(|i| {
                record(
                    45.0 * i as f64,
                    1.5 + i as f64,
                    if i == 3 { AGGREGATE_ROW } else { i as i64 },
                )
            })
            .collect();
        emit_csv(&records, &path).unwrap();
        let back = parse_csv(&path).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.risk_empirical, b.risk_empirical);
            assert_eq!(a.risk_theory, b.risk_theory);
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(a.replicate, b.replicate);
        }
    }

    #[test]
    fn theta_grid_yields_one_series_per_angle() {
        let mut records = Vec::new();
        for theta in [0.0, 45.0, 90.0, 135.0, 180.0] {
            for gamma in [2.0, 4.0, 6.0] {
                records.push(record(theta, gamma, AGGREGATE_ROW));
                records.push(record(theta, gamma, 0)); // replicate rows are ignored
            }
        }
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("plot.svg");
        emit_svg(&records, &path, AxisKey::Gamma, AxisKey::ThetaDeg).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 5);
        assert_eq!(svg.matches("<circle").count(), 15);
        assert!(svg.contains("minority risk"));
    }

    #[test]
    fn empty_records_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_csv(&[], &tmp.path().join("x.csv")),
            Err(EmitError::Empty)
        ));
    }
}
