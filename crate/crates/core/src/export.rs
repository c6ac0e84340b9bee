//! CSV export of curves, grids, and samples.
//!
//! Every file starts with `#`-prefixed header comments carrying the artifact
//! version, the seed, and a config echo, followed by a plain CSV header and
//! rows. Floats are written in shortest round-trip form, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::geodesics::DiscreteCurve;
use crate::geometry::{ChartPoint, ImmersedManifold};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Standard header block: version line plus caller-provided `key: value`
/// echo lines.
pub fn header(echo: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# geodesic-atlas {ARTIFACT_VERSION}");
    for (k, v) in echo {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

fn push_row(s: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s.push('\n');
}

/// Curve CSV: `t, q1..qD, x1..xN` with ambient coordinates from the
/// immersion.
pub fn curve_csv(
    m: &ImmersedManifold,
    c: &DiscreteCurve,
    echo: &[(&str, String)],
) -> Result<String> {
    let d = m.intrinsic_dim();
    let n = m.ambient_dim();
    let mut s = header(echo);
    s.push('t');
    for k in 0..d {
        let _ = write!(s, ",q{}", k + 1);
    }
    for a in 0..n {
        let _ = write!(s, ",x{}", a + 1);
    }
    s.push('\n');
    for (point, t) in c.points.iter().zip(&c.times) {
        let amb = m.immerse(point)?;
        let mut row = Vec::with_capacity(1 + d + n);
        row.push(*t);
        row.extend_from_slice(&point.coords);
        row.extend_from_slice(&amb);
        push_row(&mut s, &row);
    }
    Ok(s)
}

/// Generic grid CSV with caller-provided column names and row values.
pub fn table_csv(columns: &[&str], rows: &[Vec<f64>], echo: &[(&str, String)]) -> String {
    let mut s = header(echo);
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        push_row(&mut s, row);
    }
    s
}

/// Sample CSV: `chain, index, q1..qD`.
pub fn samples_csv(
    samples_per_chain: &[Vec<ChartPoint>],
    dim: usize,
    echo: &[(&str, String)],
) -> String {
    let mut s = header(echo);
    s.push_str("chain,index");
    for k in 0..dim {
        let _ = write!(s, ",q{}", k + 1);
    }
    s.push('\n');
    for (chain, samples) in samples_per_chain.iter().enumerate() {
        for (index, q) in samples.iter().enumerate() {
            let _ = write!(s, "{chain},{index}");
            for c in &q.coords {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Inclusive uniform grid over a 2-D domain, row-major over (x, y).
pub fn grid_points(domain: &[(f64, f64)], res: usize) -> Vec<ChartPoint> {
    let (x_lo, x_hi) = domain[0];
    let (y_lo, y_hi) = domain[1];
    let mut out = Vec::with_capacity(res * res);
    for iy in 0..res {
        for ix in 0..res {
            out.push(ChartPoint {
                coords: vec![
                    x_lo + (x_hi - x_lo) * ix as f64 / (res - 1) as f64,
                    y_lo + (y_hi - y_lo) * iy as f64 / (res - 1) as f64,
                ],
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::plane;

    #[test]
    fn curve_csv_shape() {
        let m = plane();
        let c = DiscreteCurve::new(
            vec![ChartPoint::of(&[0.0, 0.0]), ChartPoint::of(&[1.0, 1.0])],
            vec![0.0, 1.0],
        )
        .unwrap();
        let csv = curve_csv(&m, &c, &[("seed", "7".into())]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# geodesic-atlas"));
        assert_eq!(lines[1], "# seed: 7");
        assert_eq!(lines[2], "t,q1,q2,x1,x2,x3");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "0,0,0,0,0,0");
    }

    #[test]
    fn grid_points_count_and_corners() {
        let pts = grid_points(&[(-3.0, 3.0), (-3.0, 3.0)], 64);
        assert_eq!(pts.len(), 4096);
        assert_eq!(pts[0].coords, vec![-3.0, -3.0]);
        assert_eq!(pts[4095].coords, vec![3.0, 3.0]);
    }

    #[test]
    fn float_formatting_round_trips() {
        let rows = vec![vec![0.1 + 0.2, 1.0 / 3.0]];
        let csv = table_csv(&["a", "b"], &rows, &[]);
        let data_line = csv.lines().last().unwrap();
        let parts: Vec<f64> = data_line.split(',').map(|p| p.parse().unwrap()).collect();
        assert_eq!(parts[0].to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(parts[1].to_bits(), (1.0f64 / 3.0).to_bits());
    }
}
