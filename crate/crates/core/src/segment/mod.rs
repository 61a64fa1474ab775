//! Iterative crown segmentation.
//!
//! Each round takes the tallest unlabelled surface point as a tree apex,
//! casts a fan of vertical profiles from it, finds a crown boundary on each
//! profile, and labels every surface point inside the convex hull of those
//! boundaries as the current tree. Rounds repeat until every surface point
//! carries a label; crowns narrower than the minimum detectable crown width
//! are kept but flagged as noise.

mod boundary;
mod fan;
mod profile;

pub use boundary::{
    adjacent_window_size, classify_local_minimum, detect_first_gap, find_boundary, truncate_at_gap,
    BoundaryCause, BoundaryDecision,
};
pub use fan::{generate_fan, generate_fan_with};
pub use profile::{build_profile, Profile, ProfileSample};

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{
    contains_convex, convex_hull_2d, polygon_diameter, Point2, Polygon2, SPHERE_SLOPE_DEG,
};
use crate::preprocess::LspSet;
use profile::{profile_from_candidates, BucketIndex};

/// Tree label per surface point; `None` while unassigned.
pub type LabelMap = Vec<Option<u32>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterConfig {
    /// Nominal post spacing the surface points were gridded at.
    pub nps: f64,
    pub max_profile_dist: f64,
    pub initial_profiles: usize,
    pub max_profiles: usize,
    pub profile_width: f64,
    pub gap_fence_k: f64,
    pub min_gap_points: usize,
    /// Spacing along a profile that counts as a gap whatever the fence
    /// says; infinity turns the rule off.
    pub void_width: f64,
    /// Minimum detectable crown width.
    pub mdcw: f64,
    pub epsilon_deg: f64,
    pub cl_cone: f64,
    pub cl_sphere: f64,
    pub overlap_cone: f64,
    pub overlap_sphere: f64,
    pub sphere_slope_deg: f64,
    /// Outward push of hull vertices on clear crown edges, meters.
    pub edge_margin: f64,
    /// Reject a local minimum when the profile stops short of its right
    /// window instead of judging it on the few samples present.
    pub full_right_window: bool,
}

impl SegmenterConfig {
    pub fn new(nps: f64) -> Self {
        SegmenterConfig {
            nps,
            max_profile_dist: 15.24,
            initial_profiles: 8,
            max_profiles: 512,
            profile_width: 2.0 * nps,
            gap_fence_k: 6.0,
            min_gap_points: 8,
            void_width: 1.5,
            mdcw: 1.5,
            epsilon_deg: 5.0,
            cl_cone: 0.8,
            cl_sphere: 0.7,
            overlap_cone: 2.0 / 3.0,
            overlap_sphere: 1.0 / 3.0,
            sphere_slope_deg: SPHERE_SLOPE_DEG,
            edge_margin: 5.0 * nps,
            full_right_window: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        let fraction = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        positive("nps", self.nps)?;
        positive("max profile distance", self.max_profile_dist)?;
        positive("profile width", self.profile_width)?;
        positive("mdcw", self.mdcw)?;
        if !(self.void_width > 0.0) {
            return Err(Error::config(format!(
                "void width must be positive, got {}",
                self.void_width
            )));
        }
        if !(self.edge_margin >= 0.0 && self.edge_margin.is_finite()) {
            return Err(Error::config(format!(
                "edge margin must be >= 0, got {}",
                self.edge_margin
            )));
        }
        if !(self.gap_fence_k >= 0.0 && self.gap_fence_k.is_finite()) {
            return Err(Error::config("gap fence multiplier must be >= 0"));
        }
        if self.initial_profiles < 3 || !self.initial_profiles.is_power_of_two() {
            return Err(Error::config(format!(
                "initial profile count must be a power of two >= 4, got {}",
                self.initial_profiles
            )));
        }
        if self.max_profiles < self.initial_profiles || !self.max_profiles.is_power_of_two() {
            return Err(Error::config(format!(
                "max profile count must be a power of two >= the initial count, got {}",
                self.max_profiles
            )));
        }
        if !(self.epsilon_deg > 0.0 && self.epsilon_deg < 45.0) {
            return Err(Error::config(format!(
                "epsilon must lie in (0, 45) degrees, got {}",
                self.epsilon_deg
            )));
        }
        fraction("cone crown ratio", self.cl_cone)?;
        fraction("sphere crown ratio", self.cl_sphere)?;
        fraction("cone overlap factor", self.overlap_cone)?;
        fraction("sphere overlap factor", self.overlap_sphere)?;
        if !(self.sphere_slope_deg > 0.0 && self.sphere_slope_deg < 90.0 - self.epsilon_deg) {
            return Err(Error::config("sphere slope must lie below the cone slope"));
        }
        Ok(())
    }
}

/// Tallest unassigned surface point of a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Apex {
    pub lsp_id: usize,
    pub x: f64,
    pub y: f64,
    /// Smoothed height above ground.
    pub height: f64,
}

impl Apex {
    pub fn of(lsps: &LspSet, id: usize) -> Self {
        let p = lsps.get(id);
        Apex {
            lsp_id: id,
            x: p.x,
            y: p.y,
            height: p.smoothed_height,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// One delineated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct CrownSegment {
    /// 1-based, in extraction order.
    pub tree_id: u32,
    pub apex: Apex,
    pub hull: Polygon2,
    /// Sorted ascending.
    pub member_ids: Vec<usize>,
    pub is_noise: bool,
    pub crown_diameter: f64,
    /// One per profile of the final fan, ordered by azimuth.
    pub boundaries: Vec<BoundaryDecision>,
}

/// Height-descending, then lexicographic `(x, y)`.
fn apex_order(lsps: &LspSet, a: usize, b: usize) -> Ordering {
    let (p, q) = (lsps.get(a), lsps.get(b));
    q.smoothed_height
        .total_cmp(&p.smoothed_height)
        .then(p.x.total_cmp(&q.x))
        .then(p.y.total_cmp(&q.y))
        .then(a.cmp(&b))
}

/// Unassigned surface point with the largest smoothed height.
pub fn find_gmx(lsps: &LspSet, assigned: &LabelMap) -> Option<Apex> {
    (0..lsps.len())
        .filter(|&i| assigned[i].is_none())
        .min_by(|&a, &b| apex_order(lsps, a, b))
        .map(|i| Apex::of(lsps, i))
}

/// Hull vertex of one boundary. Gap and profile-end boundaries are the last
/// surface point seen on a clear edge, so they move outward along the ray
/// by `edge_margin`, never past half the empty run that follows.
fn outline_point(lsps: &LspSet, b: &BoundaryDecision, cfg: &SegmenterConfig) -> Point2 {
    let p = lsps.get(b.lsp_id).position();
    match b.cause {
        BoundaryCause::Gap | BoundaryCause::ProfileEnd => {
            let push = cfg.edge_margin.min(b.clearance / 2.0).max(0.0);
            let (s, c) = b.azimuth.to_radians().sin_cos();
            Point2::new(p.x + push * c, p.y + push * s)
        }
        BoundaryCause::LocalMinimum | BoundaryCause::ApexOnly => p,
    }
}

fn hull_of(
    lsps: &LspSet,
    apex: &Apex,
    boundaries: &[BoundaryDecision],
    cfg: &SegmenterConfig,
) -> Polygon2 {
    let mut pts = Vec::with_capacity(boundaries.len() + 1);
    // the apex starts every profile, so it belongs to the outline set
    pts.push(apex.position());
    pts.extend(boundaries.iter().map(|b| outline_point(lsps, b, cfg)));
    convex_hull_2d(&pts)
}

fn crown_from(
    tree_id: u32,
    apex: Apex,
    hull: Polygon2,
    members: Vec<usize>,
    boundaries: Vec<BoundaryDecision>,
    cfg: &SegmenterConfig,
) -> CrownSegment {
    let crown_diameter = polygon_diameter(&hull);
    CrownSegment {
        tree_id,
        apex,
        hull,
        member_ids: members,
        is_noise: crown_diameter < cfg.mdcw,
        crown_diameter,
        boundaries,
    }
}

/// Hulls the boundary points and collects every unassigned surface point
/// inside (boundary inclusive), plus the apex.
pub fn delineate_crown(
    lsps: &LspSet,
    apex: &Apex,
    boundaries: &[BoundaryDecision],
    cfg: &SegmenterConfig,
    assigned: &LabelMap,
    tree_id: u32,
) -> CrownSegment {
    let hull = hull_of(lsps, apex, boundaries, cfg);
    let members = members_within(&hull, apex, (0..lsps.len()).collect(), lsps, assigned);
    crown_from(tree_id, *apex, hull, members, boundaries.to_vec(), cfg)
}

fn members_within(
    hull: &Polygon2,
    apex: &Apex,
    candidates: Vec<usize>,
    lsps: &LspSet,
    assigned: &LabelMap,
) -> Vec<usize> {
    let mut members = vec![apex.lsp_id];
    if !hull.is_degenerate() {
        let ring = hull.vertices();
        members.extend(candidates.into_iter().filter(|&id| {
            id != apex.lsp_id
                && assigned[id].is_none()
                && contains_convex(lsps.get(id).position(), ring)
        }));
    }
    members.sort_unstable();
    members.dedup();
    members
}

/// Segments every surface point into crowns, tallest tree first.
pub fn segment_all(lsps: &LspSet, cfg: &SegmenterConfig) -> Result<Vec<CrownSegment>> {
    cfg.validate()?;
    Ok(Segmenter::new(lsps, cfg).run())
}

/// Incremental segmentation state: labels, a height-ordered apex queue and
/// a bucket index that drops points as they are assigned.
pub struct Segmenter<'a> {
    lsps: &'a LspSet,
    cfg: &'a SegmenterConfig,
    labels: LabelMap,
    order: Vec<usize>,
    cursor: usize,
    index: BucketIndex,
    next_id: u32,
}

impl<'a> Segmenter<'a> {
    pub fn new(lsps: &'a LspSet, cfg: &'a SegmenterConfig) -> Self {
        let mut order: Vec<usize> = (0..lsps.len()).collect();
        order.sort_by(|&a, &b| apex_order(lsps, a, b));
        let bucket = (4.0 * cfg.nps).max(cfg.profile_width).max(0.25);
        Segmenter {
            lsps,
            cfg,
            labels: vec![None; lsps.len()],
            order,
            cursor: 0,
            index: BucketIndex::new(lsps, bucket),
            next_id: 1,
        }
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    fn next_apex(&mut self) -> Option<Apex> {
        while self.cursor < self.order.len() {
            let id = self.order[self.cursor];
            if self.labels[id].is_none() {
                return Some(Apex::of(self.lsps, id));
            }
            self.cursor += 1;
        }
        None
    }

    /// Runs one round; `None` once every point is labelled.
    pub fn step(&mut self) -> Option<CrownSegment> {
        let apex = self.next_apex()?;
        let (lsps, cfg) = (self.lsps, self.cfg);
        let labels = &self.labels;
        let index = &self.index;
        let boundaries = fan::generate_fan_with(cfg, |az| {
            let candidates = index.along_ray(
                apex.position(),
                az,
                cfg.max_profile_dist,
                cfg.profile_width / 2.0,
            );
            profile_from_candidates(lsps, &apex, az, cfg, labels, candidates.into_iter())
        });

        let hull = hull_of(lsps, &apex, &boundaries, cfg);
        let candidates = match hull.bounds() {
            Some((lo, hi)) if !hull.is_degenerate() => self.index.in_box(lo, hi),
            _ => Vec::new(),
        };
        let members = members_within(&hull, &apex, candidates, lsps, labels);
        let tree_id = self.next_id;
        self.next_id += 1;
        for &id in &members {
            self.labels[id] = Some(tree_id);
            self.index.remove(id);
        }
        Some(crown_from(tree_id, apex, hull, members, boundaries, cfg))
    }

    pub fn run(mut self) -> Vec<CrownSegment> {
        let mut crowns = Vec::new();
        while let Some(c) = self.step() {
            crowns.push(c);
        }
        crowns
    }
}
