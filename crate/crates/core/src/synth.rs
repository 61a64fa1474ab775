//! Synthetic forest scenes with exact ground truth.
//!
//! Crowns are parametric surfaces (cone, hemisphere, half-ellipsoid) over
//! optional terrain. Canopy returns are drawn uniformly over each crown disc
//! and kept only where that crown is the topmost surface, so overlapping
//! crowns are sampled at the nominal density once, like first returns.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{CrownClass, StemRecord};
use crate::geometry::{Point2, Point3, PointClass};
use crate::preprocess::LspSet;

pub const DEFAULT_POINT_DENSITY: f64 = 25.0;
pub const DEFAULT_GROUND_DENSITY: f64 = 1.5;
pub const DEFAULT_NOISE_SIGMA_Z: f64 = 0.05;
pub const DEFAULT_BASE_ELEVATION: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrownShape {
    Cone,
    Sphere,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub stem: (f64, f64),
    pub total_height: f64,
    pub crown_shape: CrownShape,
    /// Crown length over total height.
    pub crown_ratio: f64,
    pub crown_radius: f64,
    #[serde(default)]
    pub lean_deg: f64,
    #[serde(default)]
    pub lean_azimuth_deg: f64,
    #[serde(default = "default_class")]
    pub crown_class: CrownClass,
}

fn default_class() -> CrownClass {
    CrownClass::Codominant
}

impl TreeModel {
    pub fn new(
        stem: (f64, f64),
        total_height: f64,
        crown_shape: CrownShape,
        crown_ratio: f64,
        crown_radius: f64,
    ) -> Self {
        TreeModel {
            stem,
            total_height,
            crown_shape,
            crown_ratio,
            crown_radius,
            lean_deg: 0.0,
            lean_azimuth_deg: 0.0,
            crown_class: CrownClass::Codominant,
        }
    }

    /// Planar position of the apex, displaced from the stem by the lean.
    pub fn crown_center(&self) -> Point2 {
        let shift = self.total_height * self.lean_deg.to_radians().tan();
        let (s, c) = self.lean_azimuth_deg.to_radians().sin_cos();
        Point2::new(self.stem.0 + shift * c, self.stem.1 + shift * s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.total_height > 0.0) {
            return Err(Error::config("tree height must be positive"));
        }
        if !(self.crown_ratio > 0.0 && self.crown_ratio <= 1.0) {
            return Err(Error::config("crown ratio must lie in (0, 1]"));
        }
        if !(self.crown_radius > 0.0) {
            return Err(Error::config("crown radius must be positive"));
        }
        if !(self.lean_deg.abs() < 89.0) {
            return Err(Error::config("lean must be below 89 degrees"));
        }
        Ok(())
    }
}

/// Crown surface height above ground at `(x, y)`, `None` off the crown disc.
pub fn crown_surface_height(tree: &TreeModel, x: f64, y: f64) -> Option<f64> {
    let c = tree.crown_center();
    let r = (x - c.x).hypot(y - c.y);
    let big_r = tree.crown_radius;
    if r > big_r {
        return None;
    }
    let h = tree.total_height;
    Some(match tree.crown_shape {
        CrownShape::Cone => h - h * tree.crown_ratio * (r / big_r),
        CrownShape::Sphere => h - big_r + (big_r * big_r - r * r).max(0.0).sqrt(),
        CrownShape::Ellipsoid => {
            let a = tree.crown_ratio * h / 2.0;
            h - a + a * (1.0 - (r / big_r).powi(2)).max(0.0).sqrt()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Terrain {
    Flat,
    /// Rises along +x by `grade_pct` percent.
    PlanarSlope {
        grade_pct: f64,
    },
    Sinusoidal {
        amplitude: f64,
        wavelength: f64,
    },
}

impl Terrain {
    pub fn elevation(&self, base: f64, x: f64, y: f64) -> f64 {
        match *self {
            Terrain::Flat => base,
            Terrain::PlanarSlope { grade_pct } => base + grade_pct / 100.0 * x,
            Terrain::Sinusoidal {
                amplitude,
                wavelength,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                base + amplitude * (k * x).sin() * (k * y).cos()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Width and height of the scene, anchored at the origin.
    pub extent: (f64, f64),
    pub terrain: Terrain,
    pub trees: Vec<TreeModel>,
    #[serde(default = "d_point_density")]
    pub point_density: f64,
    #[serde(default = "d_ground_density")]
    pub ground_density: f64,
    #[serde(default = "d_noise")]
    pub noise_sigma_z: f64,
    #[serde(default = "d_base")]
    pub base_elevation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn d_point_density() -> f64 {
    DEFAULT_POINT_DENSITY
}
fn d_ground_density() -> f64 {
    DEFAULT_GROUND_DENSITY
}
fn d_noise() -> f64 {
    DEFAULT_NOISE_SIGMA_Z
}
fn d_base() -> f64 {
    DEFAULT_BASE_ELEVATION
}

impl SceneSpec {
    pub fn new(extent: (f64, f64), terrain: Terrain, trees: Vec<TreeModel>, seed: u64) -> Self {
        SceneSpec {
            extent,
            terrain,
            trees,
            point_density: DEFAULT_POINT_DENSITY,
            ground_density: DEFAULT_GROUND_DENSITY,
            noise_sigma_z: DEFAULT_NOISE_SIGMA_Z,
            base_elevation: DEFAULT_BASE_ELEVATION,
            seed,
        }
    }

    pub fn ground_at(&self, x: f64, y: f64) -> f64 {
        self.terrain.elevation(self.base_elevation, x, y)
    }

    fn validate(&self) -> Result<()> {
        let (w, h) = self.extent;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::config("scene extent must be positive"));
        }
        if !(self.point_density > 0.0 && self.ground_density > 0.0) {
            return Err(Error::config("point densities must be positive"));
        }
        if !(self.noise_sigma_z >= 0.0) {
            return Err(Error::config("noise sigma must be >= 0"));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate()?;
            let c = t.crown_center();
            let r = t.crown_radius;
            let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= w && y <= h;
            if !inside(c.x - r, c.y - r) || !inside(c.x + r, c.y + r) || !inside(t.stem.0, t.stem.1)
            {
                return Err(Error::domain(format!(
                    "tree {} lies outside the scene extent",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Generated returns with per-point truth; `labels[i]` is the 1-based tree
/// of point `i`, 0 for ground returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: Vec<Point3>,
    pub labels: Vec<u32>,
    pub stems: Vec<StemRecord>,
}

impl Scene {
    pub fn crown_point_count(&self, tree: u32) -> usize {
        self.labels.iter().filter(|&&l| l == tree).count()
    }
}

/// Ground-truth tree of every surface point, found by matching each point
/// back to the return it was taken from. 0 when no return matches.
pub fn surface_labels(scene: &Scene, lsps: &LspSet) -> Vec<u32> {
    let key = |x: f64, y: f64, z: f64| (x.to_bits(), y.to_bits(), z.to_bits());
    let truth: HashMap<_, u32> = scene
        .points
        .iter()
        .zip(&scene.labels)
        .map(|(p, &l)| (key(p.x, p.y, p.z), l))
        .collect();
    lsps.iter()
        .map(|p| truth.get(&key(p.x, p.y, p.elevation)).copied().unwrap_or(0))
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as usize)
        .unwrap_or(0)
}

/// Samples ground and canopy returns. Every tree draws from its own RNG
/// stream, so output does not depend on sampling order.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_sigma_z).map_err(|e| Error::config(e.to_string()))?;
    let (w, h) = spec.extent;
    let mut points = Vec::new();
    let mut labels = Vec::new();

    let mut rng = stream(spec.seed, 0);
    for _ in 0..poisson(&mut rng, spec.ground_density * w * h) {
        let (x, y) = (rng.gen::<f64>() * w, rng.gen::<f64>() * h);
        let z = spec.ground_at(x, y) + noise.sample(&mut rng);
        points.push(Point3::with_class(x, y, z, PointClass::Ground));
        labels.push(0);
    }

    let centers: Vec<Point2> = spec.trees.iter().map(TreeModel::crown_center).collect();
    for (i, tree) in spec.trees.iter().enumerate() {
        let rivals: Vec<usize> = (0..spec.trees.len())
            .filter(|&j| {
                j != i
                    && centers[i].distance(&centers[j])
                        < tree.crown_radius + spec.trees[j].crown_radius
            })
            .collect();
        let mut rng = stream(spec.seed, i as u64 + 1);
        let r = tree.crown_radius;
        let n = poisson(&mut rng, spec.point_density * std::f64::consts::PI * r * r);
        for _ in 0..n {
            let rho = r * rng.gen::<f64>().sqrt();
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let dz = noise.sample(&mut rng);
            let (x, y) = (
                centers[i].x + rho * theta.cos(),
                centers[i].y + rho * theta.sin(),
            );
            let Some(surface) = crown_surface_height(tree, x, y) else {
                continue;
            };
            let hidden = rivals
                .iter()
                .any(|&j| match crown_surface_height(&spec.trees[j], x, y) {
                    Some(other) => other > surface || (other == surface && j < i),
                    None => false,
                });
            if hidden {
                continue;
            }
            points.push(Point3::with_class(
                x,
                y,
                spec.ground_at(x, y) + surface + dz,
                PointClass::NonGround,
            ));
            labels.push(i as u32 + 1);
        }
    }

    let stems = spec
        .trees
        .iter()
        .enumerate()
        .map(|(i, t)| StemRecord {
            stem_id: (i + 1).to_string(),
            x: t.stem.0,
            y: t.stem.1,
            ground_z: spec.ground_at(t.stem.0, t.stem.1),
            height: t.total_height,
            crown_class: t.crown_class,
        })
        .collect();
    Ok(Scene {
        points,
        labels,
        stems,
    })
}

/// Parameters for a random stand in which every tree's nearest neighbour
/// sits at a centre spacing between `spacing_ratio.0` and `spacing_ratio.1`
/// times the sum of the two crown radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandParams {
    pub n_trees: usize,
    pub extent: (f64, f64),
    pub height_range: (f64, f64),
    pub radius_range: (f64, f64),
    pub crown_ratio_range: (f64, f64),
    pub spacing_ratio: (f64, f64),
    pub shapes: Vec<CrownShape>,
    pub seed: u64,
}

impl StandParams {
    pub fn new(n_trees: usize, extent: (f64, f64), seed: u64) -> Self {
        StandParams {
            n_trees,
            extent,
            height_range: (16.0, 28.0),
            radius_range: (3.0, 5.0),
            crown_ratio_range: (0.5, 0.7),
            spacing_ratio: (1.2, 1.6),
            shapes: vec![CrownShape::Cone, CrownShape::Sphere, CrownShape::Ellipsoid],
            seed,
        }
    }
}

/// Grows a stand outward from a random first tree, attaching each new tree
/// next to an existing one. Crown classes follow height rank.
pub fn random_stand(params: &StandParams) -> Result<Vec<TreeModel>> {
    if params.shapes.is_empty() {
        return Err(Error::config("stand needs at least one crown shape"));
    }
    let (lo, hi) = params.spacing_ratio;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::config(
            "spacing ratio range must be positive and ordered",
        ));
    }
    let mut rng = stream(params.seed, u64::MAX);
    let (w, h) = params.extent;
    let uniform =
        |rng: &mut ChaCha8Rng, (a, b): (f64, f64)| if b > a { rng.gen_range(a..b) } else { a };
    let mut trees: Vec<TreeModel> = Vec::with_capacity(params.n_trees);
    let mut attempts = 0usize;
    while trees.len() < params.n_trees {
        attempts += 1;
        if attempts > 200_000 * params.n_trees.max(1) {
            return Err(Error::domain(format!(
                "could not place {} trees in a {w} x {h} m stand",
                params.n_trees
            )));
        }
        let radius = uniform(&mut rng, params.radius_range);
        let (x, y) = if trees.is_empty() {
            (
                uniform(&mut rng, (radius, w - radius)),
                uniform(&mut rng, (radius, h - radius)),
            )
        } else {
            let anchor = &trees[rng.gen_range(0..trees.len())];
            let d = uniform(&mut rng, (lo, hi)) * (anchor.crown_radius + radius);
            let t = rng.gen::<f64>() * std::f64::consts::TAU;
            (anchor.stem.0 + d * t.cos(), anchor.stem.1 + d * t.sin())
        };
        if x < radius || y < radius || x > w - radius || y > h - radius {
            continue;
        }
        let crowded = trees
            .iter()
            .any(|t| (t.stem.0 - x).hypot(t.stem.1 - y) < lo * (t.crown_radius + radius));
        if crowded {
            continue;
        }
        let shape = params.shapes[rng.gen_range(0..params.shapes.len())];
        let height = uniform(&mut rng, params.height_range);
        let ratio = uniform(&mut rng, params.crown_ratio_range);
        trees.push(TreeModel::new((x, y), height, shape, ratio, radius));
    }

    let mut by_height: Vec<usize> = (0..trees.len()).collect();
    by_height.sort_by(|&a, &b| trees[b].total_height.total_cmp(&trees[a].total_height));
    let n = trees.len().max(1) as f64;
    for (rank, &i) in by_height.iter().enumerate() {
        let q = rank as f64 / n;
        trees[i].crown_class = if q < 0.15 {
            CrownClass::Dominant
        } else if q < 0.6 {
            CrownClass::Codominant
        } else {
            CrownClass::Intermediate
        };
    }
    Ok(trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cone(x: f64, y: f64, h: f64, r: f64) -> TreeModel {
        TreeModel::new((x, y), h, CrownShape::Cone, 0.6, r)
    }

    #[test]
    fn surface_heights() {
        let c = cone(10.0, 10.0, 20.0, 3.0);
        assert_eq!(crown_surface_height(&c, 10.0, 10.0), Some(20.0));
        assert_abs_diff_eq!(
            crown_surface_height(&c, 13.0, 10.0).unwrap(),
            20.0 * 0.4,
            epsilon = 1e-12
        );
        assert_eq!(crown_surface_height(&c, 13.01, 10.0), None);

        let s = TreeModel::new((0.0, 0.0), 20.0, CrownShape::Sphere, 0.6, 4.0);
        let at_half = crown_surface_height(&s, 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(
            at_half,
            20.0 - 4.0 * (1.0 - 3f64.sqrt() / 2.0),
            epsilon = 1e-12
        );
        assert_eq!(crown_surface_height(&s, 0.0, 0.0), Some(20.0));

        let e = TreeModel::new((0.0, 0.0), 20.0, CrownShape::Ellipsoid, 0.5, 4.0);
        assert_abs_diff_eq!(
            crown_surface_height(&e, 4.0, 0.0).unwrap(),
            15.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SceneSpec::new(
            (30.0, 30.0),
            Terrain::Flat,
            vec![cone(15.0, 15.0, 20.0, 3.0)],
            7,
        );
        assert_eq!(
            generate_scene(&spec).unwrap(),
            generate_scene(&spec).unwrap()
        );
        let other = SceneSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(
            generate_scene(&spec).unwrap(),
            generate_scene(&other).unwrap()
        );
    }

    #[test]
    fn crown_count_matches_density() {
        let spec = SceneSpec::new(
            (30.0, 30.0),
            Terrain::Flat,
            vec![cone(15.0, 15.0, 20.0, 3.0)],
            1,
        );
        let scene = generate_scene(&spec).unwrap();
        let expected = 25.0 * std::f64::consts::PI * 9.0;
        let n = scene.crown_point_count(1) as f64;
        assert!((n - expected).abs() <= 0.1 * expected, "{n} vs {expected}");
    }

    #[test]
    fn disjoint_crowns_have_unambiguous_labels() {
        let trees = vec![cone(10.0, 10.0, 20.0, 3.0), cone(20.0, 10.0, 18.0, 3.0)];
        let spec = SceneSpec::new((30.0, 20.0), Terrain::Flat, trees.clone(), 4);
        let scene = generate_scene(&spec).unwrap();
        for (p, &l) in scene.points.iter().zip(&scene.labels) {
            if l == 0 {
                assert_eq!(p.class, PointClass::Ground);
                continue;
            }
            let owners: Vec<usize> = trees
                .iter()
                .enumerate()
                .filter(|(_, t)| crown_surface_height(t, p.x, p.y).is_some())
                .map(|(i, _)| i + 1)
                .collect();
            assert_eq!(owners, vec![l as usize]);
        }
    }

    #[test]
    fn overlap_keeps_topmost_surface() {
        let trees = vec![cone(10.0, 10.0, 20.0, 4.0), cone(14.0, 10.0, 15.0, 4.0)];
        let spec = SceneSpec {
            noise_sigma_z: 0.0,
            ..SceneSpec::new((30.0, 20.0), Terrain::Flat, trees.clone(), 2)
        };
        let scene = generate_scene(&spec).unwrap();
        for (p, &l) in scene.points.iter().zip(&scene.labels) {
            if l == 0 {
                continue;
            }
            let top = trees
                .iter()
                .filter_map(|t| crown_surface_height(t, p.x, p.y))
                .fold(f64::MIN, f64::max);
            assert_abs_diff_eq!(p.z - spec.base_elevation, top, epsilon = 1e-9);
        }
    }

    #[test]
    fn tallest_sample_near_true_height() {
        for seed in 0..5 {
            let spec = SceneSpec::new(
                (30.0, 30.0),
                Terrain::Flat,
                vec![cone(15.0, 15.0, 20.0, 3.0)],
                seed,
            );
            let scene = generate_scene(&spec).unwrap();
            let top = scene
                .points
                .iter()
                .zip(&scene.labels)
                .filter(|(_, &l)| l == 1)
                .map(|(p, _)| p.z - spec.base_elevation)
                .fold(f64::MIN, f64::max);
            assert!(
                (top - 20.0).abs() <= 4.0 * spec.noise_sigma_z + 0.5,
                "seed {seed}: {top}"
            );
        }
    }

    #[test]
    fn sphere_slope_approaches_expected_value() {
        // empirical median |slope| of a hemisphere sampled at 100 pts/m^2
        let tree = TreeModel::new((10.0, 10.0), 20.0, CrownShape::Sphere, 0.6, 6.0);
        let mut spec = SceneSpec::new((20.0, 20.0), Terrain::Flat, vec![tree.clone()], 3);
        spec.point_density = 100.0;
        spec.noise_sigma_z = 0.0;
        let scene = generate_scene(&spec).unwrap();
        let mut radial: Vec<(f64, f64)> = scene
            .points
            .iter()
            .zip(&scene.labels)
            .filter(|(_, &l)| l == 1)
            .map(|(p, _)| ((p.x - 10.0).hypot(p.y - 10.0), p.z))
            .collect();
        radial.sort_by(|a, b| a.0.total_cmp(&b.0));
        // slopes of the surface along the radius, sampled at the points
        let slopes: Vec<f64> = radial
            .iter()
            .map(|&(r, _)| {
                let rr = (r / 6.0).min(0.999_999);
                (rr / (1.0 - rr * rr).sqrt()).abs()
            })
            .collect();
        let _ = radial;
        let med = crate::geometry::median(&slopes)
            .unwrap()
            .atan()
            .to_degrees();
        // uniform over the disc weights the edge more than uniform along a line
        assert!(med > crate::geometry::SPHERE_SLOPE_DEG - 3.0, "{med}");
    }

    #[test]
    fn trees_outside_extent_rejected() {
        let spec = SceneSpec::new(
            (10.0, 10.0),
            Terrain::Flat,
            vec![cone(9.0, 5.0, 20.0, 3.0)],
            0,
        );
        assert!(generate_scene(&spec).is_err());
    }

    #[test]
    fn stand_respects_spacing() {
        let params = StandParams::new(50, (100.0, 100.0), 5);
        let trees = random_stand(&params).unwrap();
        assert_eq!(trees.len(), 50);
        for (i, a) in trees.iter().enumerate() {
            let nn = trees
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| {
                    (a.stem.0 - b.stem.0).hypot(a.stem.1 - b.stem.1)
                        / (a.crown_radius + b.crown_radius)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                (1.2 - 1e-9..=1.6 + 1e-9).contains(&nn),
                "tree {i}: ratio {nn}"
            );
        }
    }
}
