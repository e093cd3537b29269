//! Point and coverage files.
//!
//! Points: CSV with either `theta,phi` (radians) or `x,y,z` per row, detected
//! from the column count; an optional non-numeric header line is skipped.
//! Coverage: CSV rows `theta,phi,weight` on a regular grid.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sht::CoverageGrid;
use crate::sphere::{from_spherical, hammer_project, SphericalCoord, UnitVector};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Numeric rows of a CSV source, with 1-based line numbers and the header skipped.
fn numeric_rows<R: Read>(reader: R) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(k + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => {
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite value {bad}"),
                    });
                }
                rows.push((line, v));
            }
            // a header is allowed only before any data
            Err(_) if rows.is_empty() && k == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected numbers, got {:?}: {e}", rec.iter().collect::<Vec<_>>()),
                })
            }
        }
    }
    Ok(rows)
}

/// Parses points from CSV text.
pub fn parse_points<R: Read>(reader: R) -> Result<Vec<UnitVector>> {
    let rows = numeric_rows(reader)?;
    let Some((_, first)) = rows.first() else {
        return Ok(Vec::new());
    };
    let width = first.len();
    if width != 2 && width != 3 {
        return Err(Error::Parse {
            line: rows[0].0,
            message: format!("expected 2 (theta,phi) or 3 (x,y,z) columns, got {width}"),
        });
    }
    rows.into_iter()
        .map(|(line, v)| {
            if v.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} columns, got {}", v.len()),
                });
            }
            let p = if width == 2 {
                SphericalCoord::new(v[0], v[1]).map(from_spherical)
            } else {
                UnitVector::new(v[0], v[1], v[2])
            };
            p.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_points(path: &Path) -> Result<Vec<UnitVector>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_points(f)
}

/// Writes `x,y,z` rows, plus Hammer `u,v` columns when `project` is set.
pub fn write_points<W: Write>(out: W, points: &[UnitVector], project: bool) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if project {
        w.write_record(["x", "y", "z", "u", "v"])?;
    } else {
        w.write_record(["x", "y", "z"])?;
    }
    for p in points {
        let mut rec = vec![p.x().to_string(), p.y().to_string(), p.z().to_string()];
        if project {
            let (u, v) = hammer_project(p.to_spherical());
            rec.push(u.to_string());
            rec.push(v.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn parse_coverage<R: Read>(reader: R) -> Result<CoverageGrid> {
    let rows = numeric_rows(reader)?;
    let mut map: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut thetas = Vec::new();
    let mut phis = Vec::new();
    for (line, v) in &rows {
        let [t, p, w] = v[..] else {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected theta,phi,weight, got {} columns", v.len()),
            });
        };
        if map.insert((t.to_bits(), p.to_bits()), w).is_some() {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate grid node ({t}, {p})"),
            });
        }
        thetas.push(t);
        phis.push(p);
    }
    for axis in [&mut thetas, &mut phis] {
        axis.sort_by(f64::total_cmp);
        axis.dedup();
    }
    if map.len() != thetas.len() * phis.len() {
        return Err(Error::Config(format!(
            "coverage nodes do not form a regular grid: {} nodes for {} x {} axes",
            map.len(),
            thetas.len(),
            phis.len()
        )));
    }
    let mut weights = Vec::with_capacity(map.len());
    for t in &thetas {
        for p in &phis {
            weights.push(map[&(t.to_bits(), p.to_bits())]);
        }
    }
    CoverageGrid::new(thetas, phis, weights)
}

pub fn read_coverage(path: &Path) -> Result<CoverageGrid> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_coverage(f)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn points_two_and_three_columns() {
        let a = parse_points("theta,phi\n0,0\n1.5707963267948966,0\n".as_bytes()).unwrap();
        assert_eq!(a.len(), 2);
        assert!((a[0].z() - 1.0).abs() < 1e-15);
        assert!((a[1].x() - 1.0).abs() < 1e-15);
        let b = parse_points("0,0,2\n1, 0, 0\n".as_bytes()).unwrap();
        assert_eq!(b[0], UnitVector::NORTH);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn malformed_points_report_lines() {
        let err = parse_points("x,y,z\n0,0,1\n0,abc,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_points("0,0,1\n0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_points("1,2,3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_points("0,0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_points("4.0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn points_round_trip() {
        let pts = vec![UnitVector::new(0.2, -0.4, 0.9).unwrap(), UnitVector::NORTH.neg()];
        let mut buf = Vec::new();
        write_points(&mut buf, &pts, false).unwrap();
        assert_eq!(parse_points(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn projected_output_has_finite_columns() {
        let pts = vec![UnitVector::NORTH, UnitVector::new(1.0, 0.0, 0.0).unwrap()];
        let mut buf = Vec::new();
        write_points(&mut buf, &pts, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<_> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        for r in rows {
            let v: Vec<f64> = r.split(',').map(|s| s.parse().unwrap()).collect();
            assert_eq!(v.len(), 5);
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn coverage_grid_file() {
        let mut s = String::from("theta,phi,weight\n");
        for t in [0.0, PI / 2.0, PI] {
            for p in [0.0, PI] {
                s.push_str(&format!("{t},{p},1\n"));
            }
        }
        let g = parse_coverage(s.as_bytes()).unwrap();
        assert_eq!(g.normalization(), 1.0);
        assert!(parse_coverage("0,0,1\n1,1,1\n".as_bytes()).is_err());
        assert!(parse_coverage("0,0\n".as_bytes()).is_err());
    }
}
