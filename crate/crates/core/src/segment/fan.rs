use rayon::prelude::*;

use super::boundary::{find_boundary, BoundaryDecision};
use super::profile::{build_profile, Profile};
use super::{Apex, LabelMap, SegmenterConfig};
use crate::geometry::chord_height;
use crate::preprocess::LspSet;

fn max_radius(boundaries: &[BoundaryDecision]) -> f64 {
    boundaries
        .iter()
        .map(|b| b.boundary_distance)
        .fold(0.0, f64::max)
}

/// Doubles the profile count until the chord between neighbouring rays at
/// the largest boundary radius drops to `nps` or the cap is reached.
///
/// `profile_at` builds the profile for one azimuth; the boundaries come back
/// ordered by azimuth whatever the worker count.
pub fn generate_fan_with<F>(cfg: &SegmenterConfig, profile_at: F) -> Vec<BoundaryDecision>
where
    F: Fn(f64) -> Profile + Sync,
{
    let analyze = |az: f64| find_boundary(&profile_at(az), cfg);
    let mut count = cfg.initial_profiles;
    let mut boundaries: Vec<BoundaryDecision> = (0..count)
        .into_par_iter()
        .map(|k| analyze(360.0 * k as f64 / count as f64))
        .collect();

    loop {
        let spacing = 360.0 / count as f64;
        let chord = chord_height(max_radius(&boundaries), spacing).unwrap_or(0.0);
        if chord <= cfg.nps || count >= cfg.max_profiles {
            break;
        }
        let next = count * 2;
        let fresh: Vec<BoundaryDecision> = (0..count)
            .into_par_iter()
            .map(|k| analyze(360.0 * (2 * k + 1) as f64 / next as f64))
            .collect();
        // interleave: even slots keep the old rays, odd slots the new ones
        boundaries = boundaries
            .into_iter()
            .zip(fresh)
            .flat_map(|(a, b)| [a, b])
            .collect();
        count = next;
    }
    boundaries
}

/// Casts the adaptive fan of profiles around `apex` and returns the
/// boundary found on each, ordered by azimuth from 0 degrees.
pub fn generate_fan(
    lsps: &LspSet,
    apex: &Apex,
    cfg: &SegmenterConfig,
    assigned: &LabelMap,
) -> Vec<BoundaryDecision> {
    generate_fan_with(cfg, |az| build_profile(lsps, apex, az, cfg, assigned))
}
