//! Text formats: ASCII point clouds and the CSV tables the pipeline emits.

use std::io::{BufRead, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluate::{CrownClass, MatchReport, StemRecord};
use crate::geometry::{Point2, Point3, PointClass};
use crate::preprocess::LspSet;
use crate::segment::CrownSegment;

pub const TREES_HEADER: [&str; 9] = [
    "tree_id",
    "apex_x",
    "apex_y",
    "apex_height",
    "crown_diameter",
    "crown_area",
    "n_points",
    "is_noise",
    "hull_wkt",
];
pub const POINTS_HEADER: [&str; 6] = ["lsp_id", "x", "y", "elevation", "height", "tree_id"];
pub const STEMS_HEADER: [&str; 6] = ["stem_id", "x", "y", "ground_z", "height", "crown_class"];

/// Reads `x y z [class]` lines; commas may stand in for whitespace and `#`
/// starts a comment line.
pub fn read_points<R: BufRead>(reader: R) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::parse(
                n + 1,
                format!("expected 3 or 4 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(n + 1, format!("bad number {:?}", fields[i])))
        };
        let class = match fields.get(3) {
            None => PointClass::Unknown,
            Some(c) => PointClass::from_las_code(
                c.parse::<i64>()
                    .map_err(|_| Error::parse(n + 1, format!("bad class {c:?}")))?,
            ),
        };
        points.push(Point3::with_class(num(0)?, num(1)?, num(2)?, class));
    }
    Ok(points)
}

/// Writes one `x y z [class]` line per point; ground is written as 2,
/// other classified points as 1.
pub fn write_points<W: Write>(mut w: W, points: &[Point3]) -> Result<()> {
    for p in points {
        match p.class {
            PointClass::Ground => writeln!(w, "{:.3} {:.3} {:.3} 2", p.x, p.y, p.z)?,
            PointClass::NonGround => writeln!(w, "{:.3} {:.3} {:.3} 1", p.x, p.y, p.z)?,
            PointClass::Unknown => writeln!(w, "{:.3} {:.3} {:.3}", p.x, p.y, p.z)?,
        }
    }
    w.flush()?;
    Ok(())
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

pub fn write_trees_csv<W: Write>(w: W, crowns: &[CrownSegment]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TREES_HEADER)?;
    for c in crowns {
        out.write_record([
            c.tree_id.to_string(),
            f3(c.apex.x),
            f3(c.apex.y),
            f3(c.apex.height),
            f3(c.crown_diameter),
            f3(c.hull.area()),
            c.member_ids.len().to_string(),
            c.is_noise.to_string(),
            c.hull.to_wkt(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `labels[i]` is the tree of surface point `i`; unlabelled points get an
/// empty `tree_id`.
pub fn write_points_csv<W: Write>(w: W, lsps: &LspSet, labels: &[Option<u32>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POINTS_HEADER)?;
    for (id, p) in lsps.iter().enumerate() {
        out.write_record([
            id.to_string(),
            f3(p.x),
            f3(p.y),
            f3(p.elevation),
            f3(p.height),
            labels
                .get(id)
                .copied()
                .flatten()
                .map_or(String::new(), |t| t.to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Tree id per surface point, from the crowns' member lists.
pub fn labels_from_crowns(n: usize, crowns: &[CrownSegment]) -> Vec<Option<u32>> {
    let mut labels = vec![None; n];
    for c in crowns {
        for &id in &c.member_ids {
            labels[id] = Some(c.tree_id);
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TreeRow {
    pub tree_id: u32,
    pub apex_x: f64,
    pub apex_y: f64,
    pub apex_height: f64,
    pub crown_diameter: f64,
    pub crown_area: f64,
    pub n_points: usize,
    pub is_noise: bool,
    pub hull_wkt: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PointRow {
    pub lsp_id: usize,
    pub x: f64,
    pub y: f64,
    pub elevation: f64,
    pub height: f64,
    pub tree_id: Option<u32>,
}

fn read_table<T: for<'de> Deserialize<'de>, R: std::io::Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn read_trees_csv<R: std::io::Read>(r: R) -> Result<Vec<TreeRow>> {
    read_table(r)
}

pub fn read_points_csv<R: std::io::Read>(r: R) -> Result<Vec<PointRow>> {
    read_table(r)
}

#[derive(Deserialize)]
struct StemLine {
    stem_id: String,
    x: f64,
    y: f64,
    ground_z: f64,
    height: f64,
    crown_class: String,
}

pub fn read_stems_csv<R: std::io::Read>(r: R) -> Result<Vec<StemRecord>> {
    let lines: Vec<StemLine> = read_table(r)?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if !(s.height > 0.0) {
                return Err(Error::parse(
                    i + 2,
                    format!("stem {} has non-positive height", s.stem_id),
                ));
            }
            let crown_class: CrownClass = s
                .crown_class
                .parse()
                .map_err(|e: Error| Error::parse(i + 2, e.to_string()))?;
            Ok(StemRecord {
                stem_id: s.stem_id,
                x: s.x,
                y: s.y,
                ground_z: s.ground_z,
                height: s.height,
                crown_class,
            })
        })
        .collect()
}

pub fn write_stems_csv<W: Write>(w: W, stems: &[StemRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STEMS_HEADER)?;
    for s in stems {
        out.write_record([
            s.stem_id.clone(),
            f3(s.x),
            f3(s.y),
            f3(s.ground_z),
            f3(s.height),
            s.crown_class.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `point_index,tree_id` with 0 for ground returns.
pub fn write_labels_csv<W: Write>(w: W, labels: &[u32]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["point_index", "tree_id"])?;
    for (i, l) in labels.iter().enumerate() {
        out.write_record([i.to_string(), l.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pairs_csv<W: Write>(w: W, report: &MatchReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stem_id", "tree_id", "score", "lean_deg", "height_diff_pct"])?;
    for p in &report.pairs {
        out.write_record([
            p.stem_id.clone(),
            p.tree_id.to_string(),
            p.score.to_string(),
            f3(p.lean_deg),
            f3(p.height_diff * 100.0),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Outer ring of a `POLYGON((x y, ...))` literal, closing vertex dropped.
pub fn parse_wkt_polygon(wkt: &str) -> Result<Vec<Point2>> {
    let bad = || Error::parse(0, format!("malformed polygon {wkt:?}"));
    let body = wkt.trim();
    let body = body
        .strip_prefix("POLYGON")
        .map(str::trim_start)
        .and_then(|s| s.strip_prefix("(("))
        .and_then(|s| s.strip_suffix("))"))
        .ok_or_else(bad)?;
    let mut ring = Vec::new();
    for pair in body.split(',') {
        let mut it = pair.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) => ring.push(Point2::new(x, y)),
            _ => return Err(bad()),
        }
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    Ok(ring)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_lines() {
        let text = "# header\n1 2 3\n4,5,6,2\n\n7\t8  9 1\n";
        let pts = read_points(text.as_bytes()).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].class, PointClass::Unknown);
        assert_eq!(pts[1].class, PointClass::Ground);
        assert_eq!(pts[2].class, PointClass::NonGround);
        assert_eq!((pts[2].x, pts[2].y, pts[2].z), (7.0, 8.0, 9.0));

        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        assert_eq!(read_points(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn point_errors_carry_line() {
        match read_points("1 2 3\n1 2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(read_points("1 2 x\n".as_bytes()).is_err());
        assert!(read_points("1 2 NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn stems_round_trip() {
        let stems = vec![
            StemRecord {
                stem_id: "a".into(),
                x: 1.0,
                y: 2.0,
                ground_z: 3.0,
                height: 20.0,
                crown_class: CrownClass::Dead,
            },
            StemRecord {
                stem_id: "b".into(),
                x: 4.0,
                y: 5.0,
                ground_z: 6.0,
                height: 15.5,
                crown_class: CrownClass::Codominant,
            },
        ];
        let mut buf = Vec::new();
        write_stems_csv(&mut buf, &stems).unwrap();
        assert_eq!(read_stems_csv(buf.as_slice()).unwrap(), stems);
        let bad = "stem_id,x,y,ground_z,height,crown_class\na,1,2,3,0,D\n";
        assert!(read_stems_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn wkt_parses_back() {
        let ring =
            parse_wkt_polygon("POLYGON((0.000 0.000, 2.000 0.000, 2.000 1.500, 0.000 0.000))")
                .unwrap();
        assert_eq!(
            ring,
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(2.0, 0.0),
                Point2::new(2.0, 1.5)
            ]
        );
        assert!(parse_wkt_polygon("LINESTRING(0 0, 1 1)").is_err());
        assert!(parse_wkt_polygon("POLYGON((0 0, 1))").is_err());
    }
}
