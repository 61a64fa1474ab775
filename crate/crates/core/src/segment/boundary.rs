//! Per-profile crown boundary search: inter-tree gaps first, then local
//! minima tested by the slope signs of the windows on either side.

use super::profile::{Profile, ProfileSample};
use super::SegmenterConfig;
use crate::error::{Error, Result};
use crate::geometry::{median_abs_slope_deg, median_signed_slope, quantile, SlopeSample};

/// Absolute slack on the gap fence. Perfectly regular spacing computed in
/// floating point differs by a few ulps and must not count as a gap.
pub(crate) const GAP_FENCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCause {
    Gap,
    LocalMinimum,
    ProfileEnd,
    ApexOnly,
}

impl BoundaryCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryCause::Gap => "gap",
            BoundaryCause::LocalMinimum => "local_minimum",
            BoundaryCause::ProfileEnd => "profile_end",
            BoundaryCause::ApexOnly => "apex_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDecision {
    pub azimuth: f64,
    pub boundary_distance: f64,
    pub cause: BoundaryCause,
    /// Surface point marking the boundary; the apex for `ApexOnly`.
    pub lsp_id: usize,
    pub sample_index: usize,
    /// Empty distance along the band beyond the boundary: to the next
    /// sample, or to the profile's far end when there is none.
    pub clearance: f64,
}

/// Tukey fence on square-rooted spacings. Returns the index `i` of the
/// first sample followed by a gap, i.e. the last sample to keep.
pub fn detect_first_gap(profile: &Profile, cfg: &SegmenterConfig) -> Option<usize> {
    first_gap(&profile.samples, cfg)
}

fn first_gap(samples: &[ProfileSample], cfg: &SegmenterConfig) -> Option<usize> {
    if samples.len() < 2 || samples.len() < cfg.min_gap_points {
        return None;
    }
    let roots: Vec<f64> = samples
        .windows(2)
        .map(|w| (w[1].distance - w[0].distance).sqrt())
        .collect();
    let mut sorted = roots.clone();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25).ok()?;
    let q3 = quantile(&sorted, 0.75).ok()?;
    let fence = q3 + cfg.gap_fence_k * (q3 - q1);
    roots.iter().position(|&g| g > fence + GAP_FENCE_SLACK)
}

/// First sample followed by a spacing of at least `void_width`.
fn first_void(samples: &[ProfileSample], cfg: &SegmenterConfig) -> Option<usize> {
    samples
        .windows(2)
        .position(|w| w[1].distance - w[0].distance >= cfg.void_width)
}

/// Right-hand window length: linear blend between the crown radius of a
/// narrow cone and of a sphere of the adjacent tree, keyed on the observed
/// steepness `s_right` (clamped to the sphere..cone slope range).
pub fn adjacent_window_size(
    s_right: f64,
    h_gmx: f64,
    h_lm: f64,
    cfg: &SegmenterConfig,
) -> Result<f64> {
    if !(h_gmx > 0.0 && h_lm > 0.0) {
        return Err(Error::domain(format!(
            "window sizing needs positive heights, got apex {h_gmx} and minimum {h_lm}"
        )));
    }
    let h_ad = (h_gmx + h_lm) / 2.0;
    let steep = 90.0 - cfg.epsilon_deg;
    let cone = h_ad * cfg.cl_cone / steep.to_radians().tan() * cfg.overlap_cone;
    let sphere = h_ad * cfg.cl_sphere / 2.0 * cfg.overlap_sphere;
    let s = s_right.clamp(cfg.sphere_slope_deg, steep);
    let t = (steep - s) / (steep - cfg.sphere_slope_deg);
    Ok(cone * (1.0 - t) + sphere * t)
}

fn slopes(window: &[ProfileSample]) -> Vec<SlopeSample> {
    window
        .windows(2)
        .map(|w| SlopeSample::new(w[1].distance - w[0].distance, w[1].height - w[0].height))
        .collect()
}

fn window_until(samples: &[ProfileSample], from: usize, reach: f64) -> &[ProfileSample] {
    let start = samples[from].distance;
    let end = samples[from..]
        .iter()
        .position(|s| s.distance - start > reach)
        .map_or(samples.len(), |k| from + k);
    &samples[from..end]
}

fn is_local_minimum(samples: &[ProfileSample], i: usize) -> bool {
    i > 0
        && i + 1 < samples.len()
        && samples[i].height < samples[i - 1].height
        && samples[i].height < samples[i + 1].height
}

/// Decides whether the strict local minimum at `lm_index` separates the
/// current crown from an adjacent, shorter one.
pub fn classify_local_minimum(profile: &Profile, lm_index: usize, cfg: &SegmenterConfig) -> bool {
    classify(&profile.samples, lm_index, cfg)
}

fn classify(samples: &[ProfileSample], lm: usize, cfg: &SegmenterConfig) -> bool {
    if lm == 0 || lm >= samples.len() {
        return false;
    }
    let steepness = slopes(window_until(samples, lm, cfg.mdcw));
    let Ok(s_right) = median_abs_slope_deg(&steepness) else {
        return false;
    };
    let Ok(w_rd) = adjacent_window_size(s_right, samples[0].height, samples[lm].height, cfg) else {
        return false;
    };
    if cfg.full_right_window && samples[samples.len() - 1].distance - samples[lm].distance < w_rd {
        return false;
    }
    let right = slopes(window_until(samples, lm, w_rd));
    let left = slopes(&samples[..=lm]);
    match (median_signed_slope(&left), median_signed_slope(&right)) {
        (Ok(l), Ok(r)) => l < 0.0 && r > 0.0,
        _ => false,
    }
}

/// Gap truncation, then the first qualifying local minimum outward from the
/// apex, else the last remaining sample.
pub fn find_boundary(profile: &Profile, cfg: &SegmenterConfig) -> BoundaryDecision {
    let samples = &profile.samples;
    let decision = |i: usize, cause| BoundaryDecision {
        azimuth: profile.azimuth,
        boundary_distance: samples[i].distance,
        cause,
        lsp_id: samples[i].lsp_id,
        sample_index: i,
        clearance: samples
            .get(i + 1)
            .map_or(cfg.max_profile_dist, |s| s.distance)
            - samples[i].distance,
    };
    if samples.len() <= 1 {
        return decision(0, BoundaryCause::ApexOnly);
    }
    let gap = match (first_gap(samples, cfg), first_void(samples, cfg)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let kept = match gap {
        Some(i) => &samples[..=i],
        None => &samples[..],
    };
    if let Some(lm) = (1..kept.len()).find(|&i| is_local_minimum(kept, i) && classify(kept, i, cfg))
    {
        return decision(lm, BoundaryCause::LocalMinimum);
    }
    let last = kept.len() - 1;
    if last == 0 {
        decision(0, BoundaryCause::ApexOnly)
    } else if gap.is_some() {
        decision(last, BoundaryCause::Gap)
    } else {
        decision(last, BoundaryCause::ProfileEnd)
    }
}

/// Profile cut after the first gap, flagged when a cut happened.
pub fn truncate_at_gap(profile: &Profile, cfg: &SegmenterConfig) -> Profile {
    match detect_first_gap(profile, cfg) {
        Some(i) => Profile {
            azimuth: profile.azimuth,
            samples: profile.samples[..=i].to_vec(),
            truncated_at_gap: true,
        },
        None => profile.clone(),
    }
}
