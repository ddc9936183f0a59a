//! CSV and SVG writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rsoc_core::report::IterationRecord;
use rsoc_core::Trajectory;

use crate::BenchError;

fn csv_err(path: &Path, e: csv::Error) -> BenchError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BenchError::Io(path.to_path_buf(), io),
        other => BenchError::Csv(path.to_path_buf(), format!("{other:?}")),
    }
}

pub fn write_report(
    path: &Path,
    records: &[IterationRecord],
    wall_clock: bool,
) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in records {
        let row = if wall_clock {
            r.clone()
        } else {
            r.without_wall_time()
        };
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    if records.is_empty() {
        w.write_record(rsoc_core::report::REPORT_HEADER)
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| BenchError::Io(path.to_path_buf(), e))
}

pub fn read_report(path: &Path) -> Result<Vec<IterationRecord>, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

/// Columns `t, x0.., u0..`; the last row has no control.
pub fn write_trajectory(path: &Path, traj: &Trajectory, dt: f64) -> Result<(), BenchError> {
    let nx = traj.states[0].len();
    let nu = traj.controls.first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..nx).map(|i| format!("x{i}")));
    header.extend((0..nu).map(|i| format!("u{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, x) in traj.states.iter().enumerate() {
        let mut row = vec![(k as f64 * dt).to_string()];
        row.extend(x.iter().map(f64::to_string));
        match traj.controls.get(k) {
            Some(u) => row.extend(u.iter().map(f64::to_string)),
            None => row.extend((0..nu).map(|_| String::new())),
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| BenchError::Io(path.to_path_buf(), e))
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 260.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// One log-y panel. Nonpositive values are dropped.
fn panel(out: &mut String, top: f64, title: &str, series: &[Series], rules: &[f64]) {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|p| p.1 > 0.0 && p.1.is_finite())
        .collect();
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}" font-size="13">{title}</text>"#,
        top - 6.0
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - 16.0, top, top + HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    if pts.is_empty() {
        return;
    }
    let xmax = pts.iter().map(|p| p.0).fold(1.0f64, f64::max);
    let lmin = pts
        .iter()
        .map(|p| p.1.log10())
        .fold(f64::INFINITY, f64::min)
        .floor();
    let mut lmax = pts
        .iter()
        .map(|p| p.1.log10())
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    if lmax <= lmin {
        lmax = lmin + 1.0;
    }
    let sx = |x: f64| x0 + (x1 - x0) * x / xmax;
    let sy = |y: f64| y1 - (y1 - y0) * (y.log10() - lmin) / (lmax - lmin);
    let mut decade = lmin;
    while decade <= lmax {
        let y = sy(10f64.powf(decade));
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/><text x="4" y="{:.1}" font-size="10">1e{decade}</text>"##,
            y + 3.0
        );
        decade += 1.0;
    }
    for &r in rules {
        let x = sx(r);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{y1}" stroke="green" stroke-dasharray="4 3"/>"#
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1 > 0.0 && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            x1 - 120.0,
            y0 + 14.0 * (i as f64 + 1.0),
            s.label
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10">{xmax}</text>"#,
        x1 - 20.0,
        y1 + 14.0
    );
}

/// Cost and `‖Q_u‖_∞` against the x value of each series, with vertical
/// rules at `rules`.
pub fn plot_svg(
    path: &Path,
    cost: &[Series],
    qu: &[Series],
    rules: &[f64],
    x_label: &str,
) -> Result<(), BenchError> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{}" font-family="sans-serif">"#,
        2.0 * HEIGHT
    );
    panel(&mut out, MARGIN, "cost", cost, rules);
    panel(&mut out, HEIGHT + MARGIN, "qu_inf", qu, rules);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11">{x_label}</text>"#,
        WIDTH / 2.0,
        2.0 * HEIGHT - 8.0
    );
    out.push_str("</svg>\n");
    fs::write(path, out).map_err(|e| BenchError::Io(path.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn record(iter: usize, cost: f64) -> IterationRecord {
        IterationRecord {
            iter,
            stage: 0,
            cost,
            qu_inf: 1.0,
            qu_w: 0.5,
            eps: 0.1,
            alpha_tol: 1e-2,
            ls_alpha: 1.0,
            reg: 1e-9,
            dyn_evals: 40,
            wall_ms: 3.25,
        }
    }

    #[test]
    fn report_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let rows = vec![record(0, 2.0), record(1, 0.1 + 0.2)];
        write_report(&path, &rows, true).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "iter,stage,cost,qu_inf,qu_w,eps,alpha_tol,ls_alpha,reg,dyn_evals,wall_ms"
        );
        assert_eq!(read_report(&path).unwrap(), rows);

        write_report(&path, &rows, false).unwrap();
        assert!(read_report(&path).unwrap().iter().all(|r| r.wall_ms == 0.0));
    }

    #[test]
    fn empty_report_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&path, &[], false).unwrap();
        assert!(fs::read_to_string(&path)
            .unwrap()
            .starts_with("iter,stage,"));
    }

    #[test]
    fn trajectory_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        let traj = Trajectory {
            states: vec![DVector::from_vec(vec![0.0, 1.0]); 3],
            controls: vec![DVector::from_vec(vec![2.0]); 2],
        };
        write_trajectory(&path, &traj, 0.5).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines, ["t,x0,x1,u0", "0,0,1,2", "0.5,0,1,2", "1,0,1,"]);
    }

    #[test]
    fn svg_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let s = [Series {
            label: "run",
            points: vec![(0.0, 10.0), (1.0, 1.0), (2.0, 0.0)],
        }];
        plot_svg(&path, &s, &s, &[1.0], "iteration").unwrap();
        let svg = fs::read_to_string(&path).unwrap();
        assert!(
            svg.starts_with("<svg") && svg.contains("polyline") && svg.contains("stroke-dasharray")
        );
    }
}
