//! Geometric and statistical primitives shared by the pipeline stages.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Expected slope, in degrees, of a hemispherical crown surface sampled
/// uniformly along the horizontal: the mean of `asin(x)` over `[0, 1]`,
/// which is `pi/2 - 1` radians.
pub const SPHERE_SLOPE_DEG: f64 = (FRAC_PI_2 - 1.0) * (180.0 / std::f64::consts::PI);

/// Ground classification of a LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PointClass {
    Ground,
    NonGround,
    #[default]
    Unknown,
}

impl PointClass {
    /// LAS convention: class 2 is ground, any other code is non-ground.
    pub fn from_las_code(code: i64) -> Self {
        if code == 2 {
            PointClass::Ground
        } else {
            PointClass::NonGround
        }
    }
}

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub class: PointClass,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 {
            x,
            y,
            z,
            class: PointClass::Unknown,
        }
    }

    pub fn with_class(x: f64, y: f64, z: f64, class: PointClass) -> Self {
        Point3 { x, y, z, class }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Planar point, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2 { x, y }
    }
}

/// Counter-clockwise polygon, closed implicitly.
///
/// Hulls with fewer than three distinct, non-collinear vertices are kept as
/// degenerate polygons (a point or a segment) rather than rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2 {
    vertices: Vec<Point2>,
}

impl Polygon2 {
    /// Wraps vertices that are already in counter-clockwise order.
    pub fn from_ccw(vertices: Vec<Point2>) -> Self {
        Polygon2 { vertices }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3 || self.area() <= 0.0
    }

    /// Shoelace area; zero for degenerate polygons.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            twice += a.x * b.y - b.x * a.y;
        }
        twice / 2.0
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> Option<(Point2, Point2)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices[1..] {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        Some((lo, hi))
    }

    /// Well-known-text literal, ring closed by repeating the first vertex.
    pub fn to_wkt(&self) -> String {
        let mut ring: Vec<String> = self
            .vertices
            .iter()
            .map(|v| format!("{:.3} {:.3}", v.x, v.y))
            .collect();
        if let Some(first) = ring.first().cloned() {
            ring.push(first);
        }
        format!("POLYGON(({}))", ring.join(", "))
    }
}

/// Horizontal and vertical increments between two consecutive profile samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeSample {
    pub horizontal_delta: f64,
    pub vertical_delta: f64,
}

impl SlopeSample {
    pub fn new(horizontal_delta: f64, vertical_delta: f64) -> Self {
        debug_assert!(horizontal_delta > 0.0);
        SlopeSample {
            horizontal_delta,
            vertical_delta,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.vertical_delta / self.horizontal_delta
    }
}

/// Sagitta between two rays of length `r` separated by `phi_deg`.
pub fn chord_height(r: f64, phi_deg: f64) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::domain(format!(
            "chord radius must be finite and >= 0, got {r}"
        )));
    }
    if !(phi_deg > 0.0 && phi_deg < 360.0) {
        return Err(Error::domain(format!(
            "angular spacing must lie in (0, 360), got {phi_deg}"
        )));
    }
    Ok(r * (1.0 - (phi_deg.to_radians() / 2.0).cos()))
}

fn total_cmp_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Median; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median of an empty list"));
    }
    let v = total_cmp_sorted(values);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Quantile of an ascending list by linear interpolation between order
/// statistics at zero-based rank `q * (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty list"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!(
            "quantile fraction must lie in [0, 1], got {q}"
        )));
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// `atan(median |dz/dh|)` in degrees.
pub fn median_abs_slope_deg(samples: &[SlopeSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput(
            "slope statistics need at least one sample",
        ));
    }
    let abs: Vec<f64> = samples.iter().map(|s| s.ratio().abs()).collect();
    Ok(median(&abs)?.atan().to_degrees())
}

/// Median of signed `dz/dh`; positive means rising away from the apex.
pub fn median_signed_slope(samples: &[SlopeSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput(
            "slope statistics need at least one sample",
        ));
    }
    let ratios: Vec<f64> = samples.iter().map(SlopeSample::ratio).collect();
    median(&ratios)
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn lexicographic(a: &Point2, b: &Point2) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Convex hull by Andrew's monotone chain.
///
/// Collinear boundary points are dropped. Inputs with one distinct point or
/// only collinear points come back as a degenerate polygon of one or two
/// vertices.
pub fn convex_hull_2d(points: &[Point2]) -> Polygon2 {
    let mut pts = points.to_vec();
    pts.sort_by(lexicographic);
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return Polygon2 { vertices: pts };
    }

    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        // all collinear: keep the two extremes
        let first = pts[0];
        let last = pts[pts.len() - 1];
        return Polygon2 {
            vertices: vec![first, last],
        };
    }
    Polygon2 { vertices: hull }
}

/// Boundary-inclusive containment test for a convex counter-clockwise polygon.
pub fn point_in_polygon(p: Point2, poly: &Polygon2) -> Result<bool> {
    if poly.is_degenerate() {
        return Err(Error::Degenerate(
            "point-in-polygon against a degenerate polygon",
        ));
    }
    Ok(contains_convex(p, poly.vertices()))
}

/// Unchecked variant of [`point_in_polygon`] for hot loops.
pub(crate) fn contains_convex(p: Point2, ring: &[Point2]) -> bool {
    let n = ring.len();
    // relative tolerance so that hull vertices themselves test inside
    let scale = ring
        .iter()
        .map(|v| v.x.abs().max(v.y.abs()))
        .fold(p.x.abs().max(p.y.abs()), f64::max)
        .max(1.0);
    let tol = 1e-9 * scale;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let edge = a.distance(&b);
        if cross(a, b, p) < -tol * edge.max(1.0) {
            return false;
        }
    }
    true
}

/// Largest vertex-to-vertex distance; zero for a single point.
pub fn polygon_diameter(poly: &Polygon2) -> f64 {
    let v = poly.vertices();
    let mut best = 0.0_f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            best = best.max(v[i].distance(&v[j]));
        }
    }
    best
}

/// The expected hemispherical crown slope, degrees.
pub fn expected_sphere_slope() -> f64 {
    SPHERE_SLOPE_DEG
}

/// Composite Simpson integration of `asin` over `[0, 1]` with `panels`
/// (rounded up to even) subintervals, returned in degrees.
///
/// The integrand has an infinite derivative at 1, so the substitution
/// `x = sin(t)` is avoided on purpose: the check must integrate the raw
/// function to stay independent of the closed form.
pub fn integrate_sphere_slope_deg(panels: usize) -> f64 {
    let n = (panels.max(2) + 1) & !1;
    let h = 1.0 / n as f64;
    let mut sum = 0.0_f64.asin() + 1.0_f64.asin();
    for i in 1..n {
        let x = i as f64 * h;
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * x.asin();
    }
    (sum * h / 3.0).to_degrees()
}

/// Confirms the closed-form constant against numeric quadrature.
pub fn verify_sphere_slope(panels: usize, tol_deg: f64) -> Result<f64> {
    let numeric = integrate_sphere_slope_deg(panels);
    let err = (numeric - expected_sphere_slope()).abs();
    if err <= tol_deg {
        Ok(err)
    } else {
        Err(Error::domain(format!(
            "sphere slope quadrature {numeric:.6} deg differs from closed form by {err:.2e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_square() -> Polygon2 {
        convex_hull_2d(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
    }

    #[test]
    fn chord_height_fixtures() {
        assert_abs_diff_eq!(chord_height(7.0, 1e-9).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chord_height(1.0, 180.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chord_height(5.0, 45.0).unwrap(), 0.380602, epsilon = 1e-6);
    }

    #[test]
    fn chord_height_rejects_bad_domain() {
        assert!(chord_height(-1.0, 45.0).is_err());
        assert!(chord_height(1.0, 0.0).is_err());
        assert!(chord_height(1.0, 360.0).is_err());
        assert!(chord_height(f64::NAN, 45.0).is_err());
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0]).unwrap(), 3.0);
        assert_eq!(median(&[1.0, 2.0, 10.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn quantile_linear_interpolation() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_abs_diff_eq!(
            quantile(&[1.0, 2.0, 3.0, 4.0], 0.75).unwrap(),
            3.25,
            epsilon = 1e-12
        );
        for q in [0.0, 0.3, 1.0] {
            assert_eq!(quantile(&[7.0, 7.0, 7.0], q).unwrap(), 7.0);
        }
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    fn samples(ratios: &[f64]) -> Vec<SlopeSample> {
        ratios.iter().map(|&r| SlopeSample::new(1.0, r)).collect()
    }

    #[test]
    fn slope_medians() {
        let deg = median_abs_slope_deg(&samples(&[0.3, -0.5, 0.2])).unwrap();
        assert_abs_diff_eq!(deg, 0.3_f64.atan().to_degrees(), epsilon = 1e-12);
        assert_abs_diff_eq!(deg, 16.699, epsilon = 1e-3);
        assert_eq!(
            median_abs_slope_deg(&samples(&[0.0, 0.0, 0.0])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            median_abs_slope_deg(&samples(&[1.0])).unwrap(),
            45.0,
            epsilon = 1e-12
        );

        assert_abs_diff_eq!(
            median_signed_slope(&samples(&[-0.2, -0.4, -0.1])).unwrap(),
            -0.2
        );
        assert_eq!(median_signed_slope(&samples(&[0.5, -0.5])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            median_signed_slope(&samples(&[-0.3, 0.1, 0.2, 0.4])).unwrap(),
            0.15,
            epsilon = 1e-12
        );
        assert!(median_signed_slope(&[]).is_err());
        assert!(median_abs_slope_deg(&[]).is_err());
    }

    #[test]
    fn hull_drops_interior_point() {
        let hull = convex_hull_2d(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.5, 0.5),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]);
        assert_eq!(hull.len(), 4);
        assert!(!hull.vertices().contains(&Point2::new(0.5, 0.5)));
        assert!(hull.area() > 0.0);
    }

    #[test]
    fn hull_of_triangle_is_itself() {
        let tri = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 3.0),
        ];
        let hull = convex_hull_2d(&tri);
        assert_eq!(hull.len(), 3);
        for p in tri {
            assert!(hull.vertices().contains(&p));
        }
    }

    #[test]
    fn hull_degenerate_inputs_are_flagged() {
        let single = convex_hull_2d(&[Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)]);
        assert_eq!(single.len(), 1);
        assert!(single.is_degenerate());
        let line = convex_hull_2d(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
        ]);
        assert_eq!(line.len(), 2);
        assert!(line.is_degenerate());
        assert!(point_in_polygon(Point2::new(0.5, 0.5), &line).is_err());
    }

    #[test]
    fn hull_of_random_disc_contains_everything() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point2> = (0..100)
            .map(|_| {
                let r = rng.gen::<f64>().sqrt() * 3.0;
                let t = rng.gen::<f64>() * std::f64::consts::TAU;
                Point2::new(r * t.cos(), r * t.sin())
            })
            .collect();
        let hull = convex_hull_2d(&pts);
        assert!(hull.area() <= std::f64::consts::PI * 9.0);
        for p in &pts {
            assert!(point_in_polygon(*p, &hull).unwrap());
        }
    }

    #[test]
    fn point_in_polygon_is_boundary_inclusive() {
        let sq = unit_square();
        assert!(point_in_polygon(Point2::new(0.5, 0.5), &sq).unwrap());
        assert!(!point_in_polygon(Point2::new(2.0, 2.0), &sq).unwrap());
        assert!(point_in_polygon(Point2::new(1.0, 1.0), &sq).unwrap());
        assert!(point_in_polygon(Point2::new(0.5, 0.0), &sq).unwrap());
    }

    #[test]
    fn diameter_fixtures() {
        assert_eq!(
            polygon_diameter(&Polygon2::from_ccw(vec![Point2::new(3.0, 4.0)])),
            0.0
        );
        assert_abs_diff_eq!(
            polygon_diameter(&unit_square()),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        let hex: Vec<Point2> = (0..6)
            .map(|k| {
                let t = (k as f64 * 60.0).to_radians();
                Point2::new(2.0 * t.cos(), 2.0 * t.sin())
            })
            .collect();
        assert_abs_diff_eq!(
            polygon_diameter(&Polygon2::from_ccw(hex)),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sphere_slope_constant() {
        assert_abs_diff_eq!(expected_sphere_slope(), 32.7042, epsilon = 1e-3);
        let rad = integrate_sphere_slope_deg(10_000).to_radians();
        assert_abs_diff_eq!(rad, 0.570796, epsilon = 1e-5);
        assert_abs_diff_eq!(0.570796_f64.to_degrees(), 32.7042, epsilon = 1e-4);
        assert!(verify_sphere_slope(10_000, 1e-3).is_ok());
    }

    #[test]
    fn wkt_closes_ring() {
        let wkt = unit_square().to_wkt();
        assert!(wkt.starts_with("POLYGON(("));
        assert!(wkt.ends_with("0.000 0.000))"));
    }

    proptest! {
        #[test]
        fn chord_height_monotone_and_linear(r in 0.1f64..50.0, a in 1.0f64..179.0, b in 1.0f64..179.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(chord_height(r, lo).unwrap() <= chord_height(r, hi).unwrap());
            let one = chord_height(1.0, a).unwrap();
            prop_assert!((chord_height(r, a).unwrap() - r * one).abs() < 1e-9 * r.max(1.0));
        }

        #[test]
        fn slope_sign_flip(ratios in prop::collection::vec(-3.0f64..3.0, 1..20)) {
            let up = samples(&ratios);
            let down: Vec<f64> = ratios.iter().map(|r| -r).collect();
            let down = samples(&down);
            let a = median_signed_slope(&up).unwrap();
            let b = median_signed_slope(&down).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
            let deg = median_abs_slope_deg(&up).unwrap();
            prop_assert!((0.0..90.0).contains(&deg));
        }

        #[test]
        fn hull_contains_inputs(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..60)) {
            let pts: Vec<Point2> = pts.into_iter().map(Point2::from).collect();
            let hull = convex_hull_2d(&pts);
            if !hull.is_degenerate() {
                for p in &pts {
                    prop_assert!(point_in_polygon(*p, &hull).unwrap());
                }
            }
        }

        #[test]
        fn diameter_matches_brute_force(pts in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..64)) {
            let pts: Vec<Point2> = pts.into_iter().map(Point2::from).collect();
            let poly = Polygon2::from_ccw(pts.clone());
            let mut brute = 0.0f64;
            for a in &pts {
                for b in &pts {
                    brute = brute.max(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt());
                }
            }
            prop_assert!((polygon_diameter(&poly) - brute).abs() < 1e-12);
        }

        #[test]
        fn iqr_non_negative(mut v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            v.sort_by(f64::total_cmp);
            prop_assert!(quantile(&v, 0.75).unwrap() - quantile(&v, 0.25).unwrap() >= 0.0);
        }
    }
}
