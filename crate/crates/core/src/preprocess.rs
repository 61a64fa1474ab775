//! Point cloud homogenisation: one surface point per grid cell, heights
//! above ground, minimum-height filtering and Gaussian smoothing.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{median, Point2, Point3};
use crate::terrain::{ground_elevation_at, DemRaster};

/// Default minimum vegetation height, meters.
pub const DEFAULT_MIN_HEIGHT: f64 = 5.0;

const NPS_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Nominal post spacing; also the grid resolution.
    pub nps: f64,
    pub min_height: f64,
    pub smooth_sigma: f64,
    pub smooth_radius: f64,
}

impl PreprocessConfig {
    /// Defaults derived from the post spacing: sigma = nps, radius = 3 nps.
    pub fn new(nps: f64) -> Self {
        PreprocessConfig {
            nps,
            min_height: DEFAULT_MIN_HEIGHT,
            smooth_sigma: nps,
            smooth_radius: 3.0 * nps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nps > 0.0 && self.nps.is_finite()) {
            return Err(Error::config(format!(
                "nps must be positive, got {}",
                self.nps
            )));
        }
        if !(self.min_height >= 0.0 && self.min_height.is_finite()) {
            return Err(Error::config(format!(
                "min height must be >= 0, got {}",
                self.min_height
            )));
        }
        if !(self.smooth_sigma > 0.0 && self.smooth_sigma.is_finite()) {
            return Err(Error::config("smoothing sigma must be positive"));
        }
        if !(self.smooth_radius >= self.smooth_sigma && self.smooth_radius.is_finite()) {
            return Err(Error::config("smoothing radius must be >= sigma"));
        }
        Ok(())
    }
}

/// A LiDAR surface point: the highest return of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lsp {
    pub x: f64,
    pub y: f64,
    pub elevation: f64,
    /// Height above ground; NaN until [`normalize_heights`] runs.
    pub height: f64,
    /// Smoothed height above ground; NaN until [`gaussian_smooth`] runs.
    pub smoothed_height: f64,
    /// `(col, row)` of the homogenisation grid.
    pub cell: (u32, u32),
}

impl Lsp {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Surface points in row-major cell order. An LSP's id is its index.
#[derive(Debug, Clone, PartialEq)]
pub struct LspSet {
    pub nps: f64,
    /// Lower-left corner of the homogenisation grid.
    pub origin: (f64, f64),
    pub points: Vec<Lsp>,
}

impl LspSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, id: usize) -> &Lsp {
        &self.points[id]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Lsp> {
        self.points.iter()
    }
}

/// Median planar distance to the nearest distinct neighbour over a strided
/// sample of at most 10,000 points.
pub fn estimate_nps(points: &[Point3]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::EmptyInput(
            "need at least two points to estimate post spacing",
        ));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let n = points.len() as f64;
    // about four points per bucket; collinear clouds fall back to 1-D spacing
    let mut bucket = if w > 0.0 && h > 0.0 {
        (w * h / n).sqrt() * 2.0
    } else {
        (w + h) / n * 2.0
    };
    if !(bucket > 0.0) || !bucket.is_finite() {
        bucket = 1.0;
    }
    let ncols = ((x1 - x0) / bucket).floor() as i64 + 1;
    let nrows = ((y1 - y0) / bucket).floor() as i64 + 1;
    let key = |x: f64, y: f64| -> (i64, i64) {
        (
            ((x - x0) / bucket).floor() as i64,
            ((y - y0) / bucket).floor() as i64,
        )
    };
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p.x, p.y)).or_default().push(i);
    }

    let step = points.len().div_ceil(NPS_SAMPLE).max(1);
    let sample: Vec<usize> = (0..points.len()).step_by(step).collect();
    let dists: Vec<f64> = sample
        .par_iter()
        .filter_map(|&i| {
            let p = points[i];
            let (c, r) = key(p.x, p.y);
            let mut best = f64::INFINITY;
            let mut ring = 0_i64;
            loop {
                for dr in -ring..=ring {
                    for dc in -ring..=ring {
                        if dr.abs() != ring && dc.abs() != ring {
                            continue;
                        }
                        if let Some(ids) = buckets.get(&(c + dc, r + dr)) {
                            for &j in ids {
                                let d = (points[j].x - p.x).hypot(points[j].y - p.y);
                                if d > 0.0 && d < best {
                                    best = d;
                                }
                            }
                        }
                    }
                }
                // everything inside `ring * bucket` has been seen
                if best <= ring as f64 * bucket || ring > ncols.max(nrows) {
                    break;
                }
                ring += 1;
            }
            best.is_finite().then_some(best)
        })
        .collect();
    if dists.is_empty() {
        return Err(Error::Degenerate("all points share one planar position"));
    }
    median(&dists)
}

/// Keeps the highest return of every occupied `nps` cell, grid anchored at
/// the lower-left corner of the input bounding box.
pub fn extract_lsp(points: &[Point3], cfg: &PreprocessConfig) -> Result<LspSet> {
    if points.is_empty() {
        return Err(Error::EmptyInput(
            "no points to extract surface points from",
        ));
    }
    cfg.validate()?;
    let x0 = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let y0 = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);

    let mut best: HashMap<(u32, u32), usize> = HashMap::with_capacity(points.len() / 2);
    for (i, p) in points.iter().enumerate() {
        let cell = (
            ((p.x - x0) / cfg.nps).floor() as u32,
            ((p.y - y0) / cfg.nps).floor() as u32,
        );
        best.entry(cell)
            .and_modify(|cur| {
                let q = &points[*cur];
                let wins = p.z > q.z
                    || (p.z == q.z
                        && (p.x, p.y).partial_cmp(&(q.x, q.y)) == Some(std::cmp::Ordering::Less));
                if wins {
                    *cur = i;
                }
            })
            .or_insert(i);
    }

    let mut cells: Vec<((u32, u32), usize)> = best.into_iter().collect();
    cells.sort_unstable_by_key(|&((c, r), _)| (r, c));
    let points = cells
        .into_iter()
        .map(|(cell, i)| {
            let p = points[i];
            Lsp {
                x: p.x,
                y: p.y,
                elevation: p.z,
                height: f64::NAN,
                smoothed_height: f64::NAN,
                cell,
            }
        })
        .collect();
    Ok(LspSet {
        nps: cfg.nps,
        origin: (x0, y0),
        points,
    })
}

/// Populates heights above ground and drops points below `min_height`
/// (points at exactly `min_height` are kept).
pub fn normalize_heights(lsps: &LspSet, dem: &DemRaster, cfg: &PreprocessConfig) -> Result<LspSet> {
    let mut kept = Vec::with_capacity(lsps.len());
    for p in lsps.iter() {
        let ground = ground_elevation_at(dem, p.x, p.y)?;
        let height = p.elevation - ground;
        if height >= cfg.min_height {
            kept.push(Lsp { height, ..*p });
        }
    }
    Ok(LspSet {
        nps: lsps.nps,
        origin: lsps.origin,
        points: kept,
    })
}

/// Normalised Gaussian kernel over the surface points within
/// `smooth_radius`, the point itself included. Gaps contribute nothing.
pub fn gaussian_smooth(lsps: &LspSet, cfg: &PreprocessConfig) -> LspSet {
    let index = CellIndex::new(lsps);
    let reach = (cfg.smooth_radius / lsps.nps).ceil() as i64 + 1;
    let r2 = cfg.smooth_radius * cfg.smooth_radius;
    let two_s2 = 2.0 * cfg.smooth_sigma * cfg.smooth_sigma;

    let smoothed: Vec<f64> = lsps
        .points
        .par_iter()
        .map(|p| {
            let (c, r) = (p.cell.0 as i64, p.cell.1 as i64);
            let mut num = 0.0;
            let mut den = 0.0;
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let Some(j) = index.get(c + dc, r + dr) else {
                        continue;
                    };
                    let q = &lsps.points[j];
                    let d2 = (q.x - p.x).powi(2) + (q.y - p.y).powi(2);
                    if d2 <= r2 {
                        let w = (-d2 / two_s2).exp();
                        num += w * q.height;
                        den += w;
                    }
                }
            }
            num / den
        })
        .collect();

    let points = lsps
        .points
        .iter()
        .zip(smoothed)
        .map(|(p, s)| Lsp {
            smoothed_height: s,
            ..*p
        })
        .collect();
    LspSet {
        nps: lsps.nps,
        origin: lsps.origin,
        points,
    }
}

/// Full chain: extraction, height normalisation, smoothing.
pub fn preprocess(points: &[Point3], dem: &DemRaster, cfg: &PreprocessConfig) -> Result<LspSet> {
    let raw = extract_lsp(points, cfg)?;
    let normalized = normalize_heights(&raw, dem, cfg)?;
    Ok(gaussian_smooth(&normalized, cfg))
}

/// Dense cell -> LSP id lookup over the occupied cell range.
struct CellIndex {
    c0: i64,
    r0: i64,
    ncols: i64,
    nrows: i64,
    slots: Vec<u32>,
}

impl CellIndex {
    const EMPTY: u32 = u32::MAX;

    fn new(lsps: &LspSet) -> Self {
        if lsps.is_empty() {
            return CellIndex {
                c0: 0,
                r0: 0,
                ncols: 0,
                nrows: 0,
                slots: Vec::new(),
            };
        }
        let (mut c0, mut r0, mut c1, mut r1) = (u32::MAX, u32::MAX, 0, 0);
        for p in lsps.iter() {
            c0 = c0.min(p.cell.0);
            r0 = r0.min(p.cell.1);
            c1 = c1.max(p.cell.0);
            r1 = r1.max(p.cell.1);
        }
        let ncols = (c1 - c0) as i64 + 1;
        let nrows = (r1 - r0) as i64 + 1;
        let mut slots = vec![Self::EMPTY; (ncols * nrows) as usize];
        for (i, p) in lsps.iter().enumerate() {
            let k = (p.cell.1 - r0) as i64 * ncols + (p.cell.0 - c0) as i64;
            slots[k as usize] = i as u32;
        }
        CellIndex {
            c0: c0 as i64,
            r0: r0 as i64,
            ncols,
            nrows,
            slots,
        }
    }

    fn get(&self, col: i64, row: i64) -> Option<usize> {
        let (c, r) = (col - self.c0, row - self.r0);
        if c < 0 || r < 0 || c >= self.ncols || r >= self.nrows {
            return None;
        }
        let v = self.slots[(r * self.ncols + c) as usize];
        (v != Self::EMPTY).then_some(v as usize)
    }
}
