//! Detection accuracy against a field stem map.
//!
//! Every detection is scored against every stem by lean angle and relative
//! height difference, the score matrix is solved for the maximum-total
//! one-to-one assignment, and the counts of matched, omitted and committed
//! trees give recall, precision and F-score.

mod hungarian;
mod metrics;

pub use hungarian::{hungarian_max, total_score};
pub use metrics::{compute_metrics, Metrics};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::CrownSegment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrownClass {
    #[serde(rename = "D")]
    Dominant,
    #[serde(rename = "C")]
    Codominant,
    #[serde(rename = "I")]
    Intermediate,
    #[serde(rename = "O")]
    Overtopped,
    #[serde(rename = "DEAD")]
    Dead,
}

/// Canopy position groups reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassGroup {
    /// Dominant and codominant.
    Upper,
    /// Intermediate, overtopped and dead.
    Lower,
}

impl CrownClass {
    pub fn code(self) -> &'static str {
        match self {
            CrownClass::Dominant => "D",
            CrownClass::Codominant => "C",
            CrownClass::Intermediate => "I",
            CrownClass::Overtopped => "O",
            CrownClass::Dead => "DEAD",
        }
    }

    pub fn group(self) -> ClassGroup {
        match self {
            CrownClass::Dominant | CrownClass::Codominant => ClassGroup::Upper,
            _ => ClassGroup::Lower,
        }
    }
}

impl FromStr for CrownClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D" => Ok(CrownClass::Dominant),
            "C" => Ok(CrownClass::Codominant),
            "I" => Ok(CrownClass::Intermediate),
            "O" => Ok(CrownClass::Overtopped),
            "DEAD" => Ok(CrownClass::Dead),
            other => Err(Error::domain(format!("unknown crown class {other:?}"))),
        }
    }
}

impl fmt::Display for CrownClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One surveyed tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemRecord {
    pub stem_id: String,
    pub x: f64,
    pub y: f64,
    pub ground_z: f64,
    pub height: f64,
    pub crown_class: CrownClass,
}

/// A detected apex as seen by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub tree_id: u32,
    pub x: f64,
    pub y: f64,
    /// Apex height above ground.
    pub height: f64,
    /// Absolute apex elevation when known; otherwise taken as the stem's
    /// ground elevation plus `height`.
    pub elevation: Option<f64>,
    pub is_noise: bool,
}

impl Detection {
    /// Absolute elevation comes from the surface point under the apex.
    pub fn from_crown(crown: &CrownSegment, elevation: Option<f64>) -> Self {
        Detection {
            tree_id: crown.tree_id,
            x: crown.apex.x,
            y: crown.apex.y,
            height: crown.apex.height,
            elevation,
            is_noise: crown.is_noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchTier {
    pub lean_deg: f64,
    pub height_frac: f64,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchThresholds {
    /// Strictest first.
    pub tiers: Vec<MatchTier>,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        let tier = |lean_deg, height_frac, score| MatchTier {
            lean_deg,
            height_frac,
            score,
        };
        MatchThresholds {
            tiers: vec![
                tier(5.0, 0.10, 100),
                tier(10.0, 0.20, 70),
                tier(15.0, 0.30, 40),
            ],
        }
    }
}

impl MatchThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(Error::config("at least one match tier is required"));
        }
        if self
            .tiers
            .iter()
            .any(|t| t.score == 0 || !(t.lean_deg > 0.0) || !(t.height_frac > 0.0))
        {
            return Err(Error::config(
                "match tiers need positive thresholds and scores",
            ));
        }
        for w in self.tiers.windows(2) {
            if !(w[1].lean_deg > w[0].lean_deg
                && w[1].height_frac > w[0].height_frac
                && w[1].score < w[0].score)
            {
                return Err(Error::config(
                    "match tiers must loosen thresholds and lower scores from one tier to the next",
                ));
            }
        }
        Ok(())
    }

    /// Score of the strictest tier meeting both thresholds, 0 if none.
    pub fn score_for(&self, lean_deg: f64, height_diff: f64) -> u32 {
        self.tiers
            .iter()
            .find(|t| lean_deg <= t.lean_deg && height_diff <= t.height_frac)
            .map_or(0, |t| t.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub score: u32,
    pub lean_deg: f64,
    /// Relative to the stem height.
    pub height_diff: f64,
}

pub fn match_score(
    stem: &StemRecord,
    det: &Detection,
    thresholds: &MatchThresholds,
) -> Result<PairScore> {
    if !(stem.height > 0.0) {
        return Err(Error::domain(format!(
            "stem {} has non-positive height",
            stem.stem_id
        )));
    }
    let elevation = det.elevation.unwrap_or(stem.ground_z + det.height);
    let rise = elevation - stem.ground_z;
    if !(rise > 0.0) {
        return Err(Error::domain(format!(
            "apex of tree {} is not above the ground of stem {}",
            det.tree_id, stem.stem_id
        )));
    }
    let lean_deg = (det.x - stem.x)
        .hypot(det.y - stem.y)
        .atan2(rise)
        .to_degrees();
    let height_diff = (stem.height - det.height).abs() / stem.height;
    Ok(PairScore {
        score: thresholds.score_for(lean_deg, height_diff),
        lean_deg,
        height_diff,
    })
}

/// Rows are the non-noise detections in input order, columns the stems.
/// Pairs that cannot be scored count as 0.
pub fn build_score_matrix(
    detections: &[Detection],
    stems: &[StemRecord],
    thresholds: &MatchThresholds,
) -> Vec<Vec<f64>> {
    detections
        .iter()
        .filter(|d| !d.is_noise)
        .map(|d| {
            stems
                .iter()
                .map(|s| match_score(s, d, thresholds).map_or(0.0, |p| p.score as f64))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub stem_id: String,
    pub tree_id: u32,
    pub score: u32,
    pub lean_deg: f64,
    pub height_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub pairs: Vec<MatchPair>,
    pub omissions: Vec<String>,
    pub commissions: Vec<u32>,
    pub overall: Metrics,
    pub upper: Metrics,
    pub lower: Metrics,
}

impl MatchReport {
    pub fn total_score(&self) -> u64 {
        self.pairs.iter().map(|p| p.score as u64).sum()
    }

    /// `key=value` lines, rates as percentages with one decimal.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (prefix, m) in [
            ("", &self.overall),
            ("dc_", &self.upper),
            ("iod_", &self.lower),
        ] {
            let (re, pr, f) = (m.recall * 100.0, m.precision * 100.0, m.f_score * 100.0);
            out.push_str(&format!(
                "{prefix}mt={}\n{prefix}oe={}\n{prefix}ce={}\n{prefix}recall={re:.1}\n{prefix}precision={pr:.1}\n{prefix}f_score={f:.1}\n",
                m.mt, m.oe, m.ce
            ));
        }
        out.push_str(&format!("total_score={}\n", self.total_score()));
        out
    }
}

/// Scores, assigns and counts. Noise detections take no part.
pub fn evaluate(
    detections: &[Detection],
    stems: &[StemRecord],
    thresholds: &MatchThresholds,
) -> Result<MatchReport> {
    thresholds.validate()?;
    let rows: Vec<&Detection> = detections.iter().filter(|d| !d.is_noise).collect();
    let matrix = build_score_matrix(detections, stems, thresholds);
    let assignment = hungarian_max(&matrix);

    let mut stem_taken = vec![false; stems.len()];
    let mut row_taken = vec![false; rows.len()];
    let mut pairs = Vec::with_capacity(assignment.len());
    for &(i, j) in &assignment {
        let p = match_score(&stems[j], rows[i], thresholds)?;
        stem_taken[j] = true;
        row_taken[i] = true;
        pairs.push(MatchPair {
            stem_id: stems[j].stem_id.clone(),
            tree_id: rows[i].tree_id,
            score: p.score,
            lean_deg: p.lean_deg,
            height_diff: p.height_diff,
        });
    }
    pairs.sort_by_key(|p| p.tree_id);

    let omissions: Vec<String> = stems
        .iter()
        .zip(&stem_taken)
        .filter(|(_, &t)| !t)
        .map(|(s, _)| s.stem_id.clone())
        .collect();
    let commission_rows: Vec<usize> = (0..rows.len()).filter(|&i| !row_taken[i]).collect();

    let group_of_stem = |j: usize| stems[j].crown_class.group();
    let group_of_commission = |i: usize| {
        let mut best: Option<(f64, usize)> = None;
        for (j, &s) in matrix[i].iter().enumerate() {
            if s > 0.0 && best.is_none_or(|(b, _)| s > b) {
                best = Some((s, j));
            }
        }
        best.map_or(ClassGroup::Lower, |(_, j)| group_of_stem(j))
    };
    let group_metrics = |g: ClassGroup| {
        let mt = assignment
            .iter()
            .filter(|&&(_, j)| group_of_stem(j) == g)
            .count();
        let n = (0..stems.len()).filter(|&j| group_of_stem(j) == g).count();
        let ce = commission_rows
            .iter()
            .filter(|&&i| group_of_commission(i) == g)
            .count();
        Metrics::from_counts(mt, n - mt, ce)
    };

    Ok(MatchReport {
        overall: compute_metrics(assignment.len(), rows.len(), stems.len()),
        upper: group_metrics(ClassGroup::Upper),
        lower: group_metrics(ClassGroup::Lower),
        commissions: commission_rows.iter().map(|&i| rows[i].tree_id).collect(),
        pairs,
        omissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn stem(id: &str, x: f64, y: f64, h: f64, class: CrownClass) -> StemRecord {
        StemRecord {
            stem_id: id.into(),
            x,
            y,
            ground_z: 100.0,
            height: h,
            crown_class: class,
        }
    }

    fn det(tree_id: u32, x: f64, y: f64, h: f64) -> Detection {
        Detection {
            tree_id,
            x,
            y,
            height: h,
            elevation: Some(100.0 + h),
            is_noise: false,
        }
    }

    #[test]
    fn tier_examples() {
        let t = MatchThresholds::default();
        assert_eq!(t.score_for(4.0, 0.08), 100);
        assert_eq!(t.score_for(12.0, 0.08), 40);
        assert_eq!(t.score_for(20.0, 0.0), 0);
        assert_eq!(t.score_for(5.0, 0.10), 100);
        assert_eq!(t.score_for(4.0, 0.25), 40);
        assert_eq!(t.score_for(4.0, 0.31), 0);
        t.validate().unwrap();
    }

    #[test]
    fn lean_geometry() {
        let t = MatchThresholds::default();
        let s = stem("a", 0.0, 0.0, 20.0, CrownClass::Dominant);
        // 20 m tall, 20 * tan(4 deg) off the stump
        let d = det(1, 20.0 * 4f64.to_radians().tan(), 0.0, 20.0);
        let p = match_score(&s, &d, &t).unwrap();
        assert_abs_diff_eq!(p.lean_deg, 4.0, epsilon = 1e-9);
        assert_eq!(p.score, 100);

        let below = Detection {
            elevation: Some(99.0),
            ..d
        };
        assert!(match_score(&s, &below, &t).is_err());
        let unknown = Detection {
            elevation: None,
            ..d
        };
        assert_abs_diff_eq!(
            match_score(&s, &unknown, &t).unwrap().lean_deg,
            4.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn score_matrix_shapes() {
        let t = MatchThresholds::default();
        let stems = vec![
            stem("a", 0.0, 0.0, 20.0, CrownClass::Dominant),
            stem("b", 10.0, 0.0, 18.0, CrownClass::Codominant),
            stem("c", 20.0, 0.0, 15.0, CrownClass::Intermediate),
        ];
        assert!(build_score_matrix(&[], &stems, &t).is_empty());
        let m = build_score_matrix(&[det(1, 0.0, 0.0, 20.0)], &stems[..1], &t);
        assert_eq!(m, vec![vec![100.0]]);
        let dets = vec![det(1, 0.5, 0.0, 19.0), det(2, 10.0, 1.0, 17.0)];
        let m = build_score_matrix(&dets, &stems, &t);
        assert_eq!((m.len(), m[0].len()), (2, 3));
        assert!(m
            .iter()
            .flatten()
            .all(|s| [0.0, 40.0, 70.0, 100.0].contains(s)));
        let mut noisy = dets.clone();
        noisy[0].is_noise = true;
        assert_eq!(build_score_matrix(&noisy, &stems, &t).len(), 1);
    }

    #[test]
    fn identical_detections_score_perfectly() {
        let stems: Vec<StemRecord> = (0..5)
            .map(|i| {
                stem(
                    &i.to_string(),
                    10.0 * i as f64,
                    0.0,
                    20.0,
                    CrownClass::Dominant,
                )
            })
            .collect();
        let dets: Vec<Detection> = stems
            .iter()
            .enumerate()
            .map(|(i, s)| det(i as u32 + 1, s.x, s.y, s.height))
            .collect();
        let r = evaluate(&dets, &stems, &MatchThresholds::default()).unwrap();
        assert_eq!(r.overall.percentages(), (100.0, 100.0, 100.0));
        assert!(r.omissions.is_empty() && r.commissions.is_empty());
        let r = evaluate(&[], &stems, &MatchThresholds::default()).unwrap();
        assert_eq!((r.overall.mt, r.overall.oe, r.overall.recall), (0, 5, 0.0));
    }

    #[test]
    fn groups_and_commission_attribution() {
        let t = MatchThresholds::default();
        let stems = vec![
            stem("big", 0.0, 0.0, 25.0, CrownClass::Dominant),
            stem("small", 30.0, 0.0, 12.0, CrownClass::Overtopped),
        ];
        let dets = vec![
            det(1, 0.0, 0.0, 25.0),
            // second candidate for the big stem
            det(2, 0.5, 0.0, 22.0),
            // scores 0 against everything
            det(3, 60.0, 0.0, 20.0),
        ];
        let r = evaluate(&dets, &stems, &t).unwrap();
        assert_eq!(r.overall.mt, 1);
        assert_eq!(r.omissions, vec!["small".to_string()]);
        assert_eq!(r.commissions, vec![2, 3]);
        assert_eq!((r.upper.mt, r.upper.oe, r.upper.ce), (1, 0, 1));
        assert_eq!((r.lower.mt, r.lower.oe, r.lower.ce), (0, 1, 1));
        assert!(r.summary().contains("dc_precision=50.0\n"));
    }

    #[test]
    fn crown_class_codes_round_trip() {
        for c in [
            CrownClass::Dominant,
            CrownClass::Codominant,
            CrownClass::Intermediate,
            CrownClass::Overtopped,
            CrownClass::Dead,
        ] {
            assert_eq!(c.code().parse::<CrownClass>().unwrap(), c);
        }
        assert!("X".parse::<CrownClass>().is_err());
    }

    proptest! {
        #[test]
        fn score_is_monotone(lean in 0.0..30.0f64, dh in 0.0..0.5f64, dl in 0.0..10.0f64, ddh in 0.0..0.2f64) {
            let t = MatchThresholds::default();
            prop_assert!(t.score_for((lean - dl).max(0.0), (dh - ddh).max(0.0)) >= t.score_for(lean, dh));
        }
    }
}
