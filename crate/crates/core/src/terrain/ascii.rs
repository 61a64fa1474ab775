//! ESRI ASCII grid reader and writer.

use std::io::{BufRead, Write};

use super::DemRaster;
use crate::error::{Error, Result};

const NODATA: f64 = -9999.0;

pub fn write_ascii_grid<W: Write>(dem: &DemRaster, mut out: W) -> Result<()> {
    let (x0, y0) = dem.origin();
    writeln!(out, "ncols {}", dem.ncols())?;
    writeln!(out, "nrows {}", dem.nrows())?;
    writeln!(out, "xllcorner {}", x0)?;
    writeln!(out, "yllcorner {}", y0)?;
    writeln!(out, "cellsize {}", dem.cell_size())?;
    writeln!(out, "NODATA_value {}", NODATA)?;
    let mut line = String::new();
    for row in (0..dem.nrows()).rev() {
        line.clear();
        for col in 0..dem.ncols() {
            if col > 0 {
                line.push(' ');
            }
            match dem.get(col, row) {
                Some(z) => line.push_str(&format!("{z:.4}")),
                None => line.push_str(&format!("{NODATA}")),
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    xll: Option<f64>,
    yll: Option<f64>,
    center: bool,
    cellsize: Option<f64>,
    nodata: Option<f64>,
}

fn field<T: std::str::FromStr>(line_no: usize, key: &str, tok: Option<&str>) -> Result<T> {
    tok.ok_or_else(|| Error::parse(line_no, format!("missing value for {key}")))?
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad value for {key}")))
}

pub fn read_ascii_grid<R: BufRead>(input: R) -> Result<DemRaster> {
    let mut header = Header::default();
    let mut values: Vec<f64> = Vec::new();
    let mut in_body = false;

    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let mut toks = line.split_whitespace().peekable();
        let Some(first) = toks.peek().copied() else {
            continue;
        };
        if !in_body && first.starts_with(|c: char| c.is_ascii_alphabetic()) {
            toks.next();
            match first.to_ascii_lowercase().as_str() {
                "ncols" => header.ncols = Some(field(line_no, first, toks.next())?),
                "nrows" => header.nrows = Some(field(line_no, first, toks.next())?),
                "xllcorner" => header.xll = Some(field(line_no, first, toks.next())?),
                "yllcorner" => header.yll = Some(field(line_no, first, toks.next())?),
                "xllcenter" => {
                    header.xll = Some(field(line_no, first, toks.next())?);
                    header.center = true;
                }
                "yllcenter" => {
                    header.yll = Some(field(line_no, first, toks.next())?);
                    header.center = true;
                }
                "cellsize" => header.cellsize = Some(field(line_no, first, toks.next())?),
                "nodata_value" => header.nodata = Some(field(line_no, first, toks.next())?),
                other => return Err(Error::parse(line_no, format!("unknown header key {other}"))),
            }
            continue;
        }
        in_body = true;
        for tok in toks {
            values.push(
                tok.parse()
                    .map_err(|_| Error::parse(line_no, format!("bad cell value {tok}")))?,
            );
        }
    }

    let missing = |k: &str| Error::parse(0, format!("header lacks {k}"));
    let ncols = header.ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = header.nrows.ok_or_else(|| missing("nrows"))?;
    let cell = header.cellsize.ok_or_else(|| missing("cellsize"))?;
    let mut xll = header.xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = header.yll.ok_or_else(|| missing("yllcorner"))?;
    if header.center {
        xll -= cell / 2.0;
        yll -= cell / 2.0;
    }
    let nodata = header.nodata.unwrap_or(NODATA);
    if values.len() != ncols * nrows {
        return Err(Error::parse(
            0,
            format!(
                "expected {} cell values, found {}",
                ncols * nrows,
                values.len()
            ),
        ));
    }

    let mut dem = DemRaster::new((xll, yll), cell, ncols, nrows)?;
    for (k, z) in values.into_iter().enumerate() {
        let file_row = k / ncols;
        let col = k % ncols;
        let value = if z == nodata || !z.is_finite() {
            None
        } else {
            Some(z)
        };
        dem.set(col, nrows - 1 - file_row, value);
    }
    Ok(dem)
}
