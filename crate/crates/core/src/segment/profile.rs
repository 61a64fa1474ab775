use super::{Apex, LabelMap, SegmenterConfig};
use crate::geometry::Point2;
use crate::preprocess::LspSet;

/// One surface point projected onto a profile ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    /// Along-ray distance from the apex, meters.
    pub distance: f64,
    /// Absolute perpendicular offset from the ray, meters.
    pub offset: f64,
    /// Smoothed height above ground, meters.
    pub height: f64,
    pub lsp_id: usize,
}

/// Vertical transect from an apex along one azimuth.
///
/// Sample 0 is the apex; distances strictly increase.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Degrees counter-clockwise from +x.
    pub azimuth: f64,
    pub samples: Vec<ProfileSample>,
    pub truncated_at_gap: bool,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.distance)
    }
}

/// Builds a profile from an explicit candidate set; candidates that are
/// assigned, the apex itself, or outside the band are skipped.
pub(crate) fn profile_from_candidates(
    lsps: &LspSet,
    apex: &Apex,
    azimuth: f64,
    cfg: &SegmenterConfig,
    assigned: &LabelMap,
    candidates: impl Iterator<Item = usize>,
) -> Profile {
    let (sin, cos) = azimuth.to_radians().sin_cos();
    let half = cfg.profile_width / 2.0;
    let mut samples: Vec<ProfileSample> = candidates
        .filter(|&id| id != apex.lsp_id && assigned[id].is_none())
        .filter_map(|id| {
            let p = lsps.get(id);
            let (dx, dy) = (p.x - apex.x, p.y - apex.y);
            let along = dx * cos + dy * sin;
            let offset = (dy * cos - dx * sin).abs();
            (along > 0.0 && along <= cfg.max_profile_dist && offset <= half).then_some(
                ProfileSample {
                    distance: along,
                    offset,
                    height: p.smoothed_height,
                    lsp_id: id,
                },
            )
        })
        .collect();

    // equal projections: nearer the ray first, then higher, then lower id
    samples.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.offset.total_cmp(&b.offset))
            .then(b.height.total_cmp(&a.height))
            .then(a.lsp_id.cmp(&b.lsp_id))
    });
    samples.dedup_by(|later, kept| later.distance == kept.distance);

    let mut all = Vec::with_capacity(samples.len() + 1);
    all.push(ProfileSample {
        distance: 0.0,
        offset: 0.0,
        height: apex.height,
        lsp_id: apex.lsp_id,
    });
    all.extend(samples);
    Profile {
        azimuth,
        samples: all,
        truncated_at_gap: false,
    }
}

/// Collects the unassigned surface points inside the band of half-width
/// `profile_width / 2` along the ray, out to `max_profile_dist`.
pub fn build_profile(
    lsps: &LspSet,
    apex: &Apex,
    azimuth: f64,
    cfg: &SegmenterConfig,
    assigned: &LabelMap,
) -> Profile {
    profile_from_candidates(lsps, apex, azimuth, cfg, assigned, 0..lsps.len())
}

/// Bucket grid over surface ids; assigned ids are removed as crowns are cut.
pub(crate) struct BucketIndex {
    x0: f64,
    y0: f64,
    size: f64,
    ncols: i64,
    nrows: i64,
    buckets: Vec<Vec<u32>>,
    home: Vec<u32>,
}

impl BucketIndex {
    pub(crate) fn new(lsps: &LspSet, size: f64) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in lsps.iter() {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        if lsps.is_empty() {
            (x0, y0, x1, y1) = (0.0, 0.0, 0.0, 0.0);
        }
        let ncols = ((x1 - x0) / size).floor() as i64 + 1;
        let nrows = ((y1 - y0) / size).floor() as i64 + 1;
        let mut index = BucketIndex {
            x0,
            y0,
            size,
            ncols,
            nrows,
            buckets: vec![Vec::new(); (ncols * nrows) as usize],
            home: Vec::with_capacity(lsps.len()),
        };
        for (i, p) in lsps.iter().enumerate() {
            let b = index.bucket_of(p.x, p.y);
            index.buckets[b].push(i as u32);
            index.home.push(b as u32);
        }
        index
    }

    fn coords(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.x0) / self.size).floor() as i64,
            ((y - self.y0) / self.size).floor() as i64,
        )
    }

    fn bucket_of(&self, x: f64, y: f64) -> usize {
        let (c, r) = self.coords(x, y);
        (r.clamp(0, self.nrows - 1) * self.ncols + c.clamp(0, self.ncols - 1)) as usize
    }

    pub(crate) fn remove(&mut self, id: usize) {
        let bucket = &mut self.buckets[self.home[id] as usize];
        if let Some(pos) = bucket.iter().position(|&v| v as usize == id) {
            bucket.swap_remove(pos);
        }
    }

    /// Ids in buckets overlapping the axis-aligned box, in bucket order.
    pub(crate) fn in_box(&self, lo: Point2, hi: Point2) -> Vec<usize> {
        let (c0, r0) = self.coords(lo.x, lo.y);
        let (c1, r1) = self.coords(hi.x, hi.y);
        let mut out = Vec::new();
        for r in r0.max(0)..=r1.min(self.nrows - 1) {
            for c in c0.max(0)..=c1.min(self.ncols - 1) {
                out.extend(
                    self.buckets[(r * self.ncols + c) as usize]
                        .iter()
                        .map(|&v| v as usize),
                );
            }
        }
        out
    }

    /// Ids in buckets that may intersect the profile band.
    pub(crate) fn along_ray(
        &self,
        origin: Point2,
        azimuth: f64,
        length: f64,
        half_width: f64,
    ) -> Vec<usize> {
        let (sin, cos) = azimuth.to_radians().sin_cos();
        let step = self.size / 2.0;
        let pad = half_width + step;
        let mut seen: Vec<usize> = Vec::new();
        let mut t: f64 = 0.0;
        loop {
            let t_eff = t.min(length);
            let (px, py) = (origin.x + t_eff * cos, origin.y + t_eff * sin);
            let (c0, r0) = self.coords(px - pad, py - pad);
            let (c1, r1) = self.coords(px + pad, py + pad);
            for r in r0.max(0)..=r1.min(self.nrows - 1) {
                for c in c0.max(0)..=c1.min(self.ncols - 1) {
                    seen.push((r * self.ncols + c) as usize);
                }
            }
            if t >= length {
                break;
            }
            t += step;
        }
        seen.sort_unstable();
        seen.dedup();
        seen.into_iter()
            .flat_map(|b| self.buckets[b].iter().map(|&v| v as usize))
            .collect()
    }
}
