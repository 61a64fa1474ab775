//! Bare-earth elevation raster: built from ground returns, void-filled, and
//! queried to turn point elevations into heights above ground.

mod ascii;

pub use ascii::{read_ascii_grid, write_ascii_grid};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointClass};

/// Default raster resolution, meters.
pub const DEFAULT_CELL_SIZE: f64 = 1.0;

/// Elevation raster with a lower-left origin.
///
/// Row 0 is the southernmost row; the ASCII grid format stores the northern
/// row first and the reader/writer flip accordingly.
#[derive(Debug, Clone, PartialEq)]
pub struct DemRaster {
    origin: (f64, f64),
    cell_size: f64,
    ncols: usize,
    nrows: usize,
    cells: Vec<Option<f64>>,
}

impl DemRaster {
    pub fn new(origin: (f64, f64), cell_size: f64, ncols: usize, nrows: usize) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::domain(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if ncols == 0 || nrows == 0 {
            return Err(Error::domain(
                "raster needs at least one row and one column",
            ));
        }
        Ok(DemRaster {
            origin,
            cell_size,
            ncols,
            nrows,
            cells: vec![None; ncols * nrows],
        })
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn void_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (x0, y0) = self.origin;
        (
            x0,
            y0,
            x0 + self.ncols as f64 * self.cell_size,
            y0 + self.nrows as f64 * self.cell_size,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.extent();
        let tol = 1e-9 * self.cell_size;
        x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol
    }

    /// Cell value; `row` counts from the south edge.
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.cells[row * self.ncols + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: Option<f64>) {
        self.cells[row * self.ncols + col] = value;
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.cell_size,
            self.origin.1 + (row as f64 + 0.5) * self.cell_size,
        )
    }

    fn known_range(&self) -> Option<(f64, f64)> {
        self.cells.iter().flatten().fold(None, |acc, &z| match acc {
            None => Some((z, z)),
            Some((lo, hi)) => Some((lo.min(z), hi.max(z))),
        })
    }
}

/// Averages ground returns into cells of the bounding box of the inputs,
/// snapped outward to whole multiples of `cell_size`.
pub fn rasterize_ground(points: &[Point3], cell_size: f64) -> Result<DemRaster> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::domain(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    let mut it = points.iter().filter(|p| p.class == PointClass::Ground);
    let first = it
        .next()
        .ok_or(Error::EmptyInput("no ground points to rasterize"))?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
    for p in it {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let c0 = (x0 / cell_size).floor();
    let r0 = (y0 / cell_size).floor();
    let ncols = ((x1 / cell_size).floor() - c0) as usize + 1;
    let nrows = ((y1 / cell_size).floor() - r0) as usize + 1;
    rasterize_ground_within(
        points,
        (c0 * cell_size, r0 * cell_size),
        cell_size,
        ncols,
        nrows,
    )
}

/// Averages ground returns into a caller-specified grid. Ground points
/// outside the grid are an error.
pub fn rasterize_ground_within(
    points: &[Point3],
    origin: (f64, f64),
    cell_size: f64,
    ncols: usize,
    nrows: usize,
) -> Result<DemRaster> {
    let mut dem = DemRaster::new(origin, cell_size, ncols, nrows)?;
    let mut sums = vec![(0.0_f64, 0_u32); ncols * nrows];
    let mut any = false;
    for p in points.iter().filter(|p| p.class == PointClass::Ground) {
        if !dem.contains(p.x, p.y) {
            return Err(Error::OutOfExtent { x: p.x, y: p.y });
        }
        let col = (((p.x - origin.0) / cell_size).floor() as usize).min(ncols - 1);
        let row = (((p.y - origin.1) / cell_size).floor() as usize).min(nrows - 1);
        let slot = &mut sums[row * ncols + col];
        slot.0 += p.z;
        slot.1 += 1;
        any = true;
    }
    if !any {
        return Err(Error::EmptyInput("no ground points to rasterize"));
    }
    for (cell, (sum, n)) in dem.cells.iter_mut().zip(sums) {
        if n > 0 {
            *cell = Some(sum / n as f64);
        }
    }
    Ok(dem)
}

/// Fills voids by repeated 8-neighbour averaging.
///
/// Each pass reads the previous pass's state, so a cell filled in pass `k`
/// only seeds its neighbours in pass `k + 1`. Returns the filled raster and
/// the number of passes taken.
pub fn fill_voids(dem: &DemRaster) -> Result<(DemRaster, usize)> {
    if dem.known_range().is_none() {
        return Err(Error::EmptyInput("raster has no data cells to fill from"));
    }
    let mut current = dem.clone();
    let mut passes = 0;
    let (nc, nr) = (dem.ncols as isize, dem.nrows as isize);
    while current.cells.iter().any(Option::is_none) {
        let mut next = current.cells.clone();
        for row in 0..nr {
            for col in 0..nc {
                let idx = (row * nc + col) as usize;
                if current.cells[idx].is_some() {
                    continue;
                }
                let mut sum = 0.0;
                let mut n = 0;
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (r, c) = (row + dr, col + dc);
                        if r < 0 || c < 0 || r >= nr || c >= nc {
                            continue;
                        }
                        if let Some(z) = current.cells[(r * nc + c) as usize] {
                            sum += z;
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    next[idx] = Some(sum / n as f64);
                }
            }
        }
        current.cells = next;
        passes += 1;
    }
    Ok((current, passes))
}

/// Rasterises the ground returns and fills every void. Returns the raster
/// and the number of fill passes.
pub fn build_dem(points: &[Point3], cell_size: f64) -> Result<(DemRaster, usize)> {
    fill_voids(&rasterize_ground(points, cell_size)?)
}

/// Bilinear interpolation between cell centres, clamped to the outermost
/// centres inside the extent margins.
pub fn ground_elevation_at(dem: &DemRaster, x: f64, y: f64) -> Result<f64> {
    if !dem.contains(x, y) {
        return Err(Error::OutOfExtent { x, y });
    }
    let u = ((x - dem.origin.0) / dem.cell_size - 0.5).clamp(0.0, (dem.ncols - 1) as f64);
    let v = ((y - dem.origin.1) / dem.cell_size - 0.5).clamp(0.0, (dem.nrows - 1) as f64);
    let c0 = (u.floor() as usize).min(dem.ncols.saturating_sub(2));
    let r0 = (v.floor() as usize).min(dem.nrows.saturating_sub(2));
    let c1 = (c0 + 1).min(dem.ncols - 1);
    let r1 = (r0 + 1).min(dem.nrows - 1);
    let fu = u - c0 as f64;
    let fv = v - r0 as f64;

    let corners = [
        (dem.get(c0, r0), (1.0 - fu) * (1.0 - fv)),
        (dem.get(c1, r0), fu * (1.0 - fv)),
        (dem.get(c0, r1), (1.0 - fu) * fv),
        (dem.get(c1, r1), fu * fv),
    ];
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (z, w) in corners {
        if let Some(z) = z {
            acc += w * z;
            wsum += w;
        }
    }
    if wsum > 0.0 {
        return Ok(acc / wsum);
    }
    // query sits exactly on a corner whose weight-carrying cells are voids
    let known: Vec<f64> = corners.iter().filter_map(|c| c.0).collect();
    if known.is_empty() {
        Err(Error::Degenerate("elevation lookup over an unfilled void"))
    } else {
        Ok(known.iter().sum::<f64>() / known.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ground(x: f64, y: f64, z: f64) -> Point3 {
        Point3::with_class(x, y, z, PointClass::Ground)
    }

    fn grid(values: &[&[Option<f64>]]) -> DemRaster {
        // rows given south to north
        let nrows = values.len();
        let ncols = values[0].len();
        let mut dem = DemRaster::new((0.0, 0.0), 1.0, ncols, nrows).unwrap();
        for (r, row) in values.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                dem.set(c, r, *v);
            }
        }
        dem
    }

    #[test]
    fn single_point_single_cell() {
        let dem = rasterize_ground(&[ground(0.5, 0.5, 100.0)], 1.0).unwrap();
        assert_eq!((dem.ncols(), dem.nrows()), (1, 1));
        assert_eq!(dem.get(0, 0), Some(100.0));
    }

    #[test]
    fn cell_mean() {
        let dem =
            rasterize_ground(&[ground(0.2, 0.2, 100.0), ground(0.7, 0.6, 102.0)], 1.0).unwrap();
        assert_eq!(dem.get(0, 0), Some(101.0));
    }

    #[test]
    fn empty_cells_are_voids() {
        let dem = rasterize_ground_within(&[ground(0.5, 0.5, 9.0)], (0.0, 0.0), 1.0, 2, 2).unwrap();
        assert_eq!(dem.get(0, 0), Some(9.0));
        assert_eq!(dem.void_count(), 3);
    }

    #[test]
    fn rejects_empty_and_bad_cell_size() {
        assert!(rasterize_ground(&[], 1.0).is_err());
        assert!(rasterize_ground(&[Point3::new(0.0, 0.0, 1.0)], 1.0).is_err());
        assert!(rasterize_ground(&[ground(0.0, 0.0, 1.0)], 0.0).is_err());
        assert!(rasterize_ground(&[ground(0.0, 0.0, 1.0)], -1.0).is_err());
    }

    #[test]
    fn fill_surrounded_void() {
        let k = Some(100.0);
        let dem = grid(&[&[k, k, k], &[k, None, k], &[k, k, k]]);
        let (filled, passes) = fill_voids(&dem).unwrap();
        assert_eq!(filled.get(1, 1), Some(100.0));
        assert_eq!(passes, 1);
    }

    #[test]
    fn fill_two_neighbour_mean() {
        let dem = grid(&[&[Some(100.0), None, Some(104.0)]]);
        let (filled, passes) = fill_voids(&dem).unwrap();
        assert_eq!(filled.get(1, 0), Some(102.0));
        assert_eq!(passes, 1);
    }

    #[test]
    fn fill_from_corners_converges_to_constant() {
        let mut dem = DemRaster::new((0.0, 0.0), 1.0, 5, 5).unwrap();
        for (c, r) in [(0, 0), (4, 0), (0, 4), (4, 4)] {
            dem.set(c, r, Some(50.0));
        }
        let (filled, _) = fill_voids(&dem).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                assert_abs_diff_eq!(filled.get(c, r).unwrap(), 50.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fill_all_void_is_error() {
        let dem = DemRaster::new((0.0, 0.0), 1.0, 3, 3).unwrap();
        assert!(fill_voids(&dem).is_err());
    }

    #[test]
    fn bilinear_lookup() {
        let dem = grid(&[&[Some(100.0), Some(104.0)]]);
        assert_eq!(ground_elevation_at(&dem, 0.5, 0.5).unwrap(), 100.0);
        assert_abs_diff_eq!(
            ground_elevation_at(&dem, 1.0, 0.5).unwrap(),
            102.0,
            epsilon = 1e-12
        );
        // margins clamp to the nearest centre
        assert_abs_diff_eq!(
            ground_elevation_at(&dem, 0.0, 0.0).unwrap(),
            100.0,
            epsilon = 1e-12
        );

        // cell square spanned by four centres: south pair 0, north pair 4
        let dem = grid(&[&[Some(0.0), Some(0.0)], &[Some(4.0), Some(4.0)]]);
        let z = ground_elevation_at(&dem, 0.5 + 0.25, 0.5 + 0.75).unwrap();
        assert_abs_diff_eq!(z, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lookup_outside_extent_errors() {
        let dem = grid(&[&[Some(1.0)]]);
        assert!(matches!(
            ground_elevation_at(&dem, 1.5, 0.5),
            Err(Error::OutOfExtent { .. })
        ));
    }

    proptest! {
        #[test]
        fn fill_is_bounded_and_idempotent(
            seeds in prop::collection::vec((0usize..6, 0usize..5, 0.0f64..100.0), 1..8)
        ) {
            let mut dem = DemRaster::new((10.0, 20.0), 2.0, 6, 5).unwrap();
            for (c, r, z) in &seeds {
                dem.set(*c, *r, Some(*z));
            }
            let (lo, hi) = dem.known_range().unwrap();
            let (filled, _) = fill_voids(&dem).unwrap();
            for r in 0..5 {
                for c in 0..6 {
                    let z = filled.get(c, r).unwrap();
                    prop_assert!(z >= lo - 1e-9 && z <= hi + 1e-9);
                    if let Some(orig) = dem.get(c, r) {
                        prop_assert_eq!(orig, z);
                    }
                }
            }
            let (again, passes) = fill_voids(&filled).unwrap();
            prop_assert_eq!(passes, 0);
            prop_assert_eq!(again, filled);
        }

        #[test]
        fn cell_centre_reproduces_mean(
            pts in prop::collection::vec((0.0f64..8.0, 0.0f64..8.0, 90.0f64..110.0), 1..40)
        ) {
            let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| ground(x, y, z)).collect();
            let dem = rasterize_ground(&pts, 1.0).unwrap();
            let (filled, _) = fill_voids(&dem).unwrap();
            for r in 0..filled.nrows() {
                for c in 0..filled.ncols() {
                    let (x, y) = filled.cell_center(c, r);
                    let z = ground_elevation_at(&filled, x, y).unwrap();
                    prop_assert!((z - filled.get(c, r).unwrap()).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn bilinear_is_continuous(x in 0.5f64..3.5, y in 0.5f64..2.5, zs in prop::collection::vec(0.0f64..50.0, 12)) {
            let mut dem = DemRaster::new((0.0, 0.0), 1.0, 4, 3).unwrap();
            for (i, z) in zs.iter().enumerate() {
                dem.set(i % 4, i / 4, Some(*z));
            }
            let a = ground_elevation_at(&dem, x, y).unwrap();
            let b = ground_elevation_at(&dem, (x + 1e-7).min(3.5), y).unwrap();
            prop_assert!((a - b).abs() < 1e-4);
        }
    }
}
