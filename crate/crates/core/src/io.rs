//! CSV emission and ingestion.
//!
//! Numbers are written with six significant digits in the shortest of fixed
//! or scientific notation, so output is stable across platforms.

use std::io::{Read, Write};

use crate::frenet::Point2;
use crate::trajectory::Trajectory;

pub const TRAJECTORY_HEADER: [&str; 9] = ["t", "s", "d", "x", "y", "heading", "curvature", "v", "a"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: cannot parse `{value}` in column `{column}`")]
    Parse { line: u64, column: &'static str, value: String },
}

/// `%.6g`-style formatting.
pub fn fmt_g6(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".to_string()
        } else if value > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    // Round first so the exponent reflects the printed mantissa.
    let sci = format!("{:.5e}", value);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, value))
    } else {
        format!("{}e{:+03}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for p in traj.points() {
        w.write_record(
            [p.t, p.s, p.d, p.x, p.y, p.heading, p.curvature, p.v, p.a].map(fmt_g6),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_polyline_csv<W: Write>(points: &[Point2], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for p in points {
        w.write_record([fmt_g6(p.x), fmt_g6(p.y)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `x` and `y` columns of any CSV with a header row; other columns
/// are ignored, so trajectory files are accepted too.
pub fn read_polyline_csv<R: Read>(input: R) -> Result<Vec<Point2>, IoError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    let find = |name: &'static str| {
        headers.iter().position(|h| h == name).ok_or(IoError::MissingColumn(name))
    };
    let (ix, iy) = (find("x")?, find("y")?);
    let mut points = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |idx: usize, column: &'static str| -> Result<f64, IoError> {
            let value = record.get(idx).unwrap_or("");
            value.parse().map_err(|_| IoError::Parse { line, column, value: value.to_string() })
        };
        points.push(Point2::new(parse(ix, "x")?, parse(iy, "y")?));
    }
    Ok(points)
}
