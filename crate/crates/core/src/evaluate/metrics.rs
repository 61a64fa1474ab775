use std::fmt;

/// Detection counts and the rates derived from them. Rates are fractions;
/// every rate is 0 when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    /// Matched trees.
    pub mt: usize,
    /// Omission errors: stems with no detection.
    pub oe: usize,
    /// Commission errors: detections with no stem.
    pub ce: usize,
    pub recall: f64,
    pub precision: f64,
    pub f_score: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl Metrics {
    pub fn from_counts(mt: usize, oe: usize, ce: usize) -> Self {
        let recall = ratio(mt as f64, (mt + oe) as f64);
        let precision = ratio(mt as f64, (mt + ce) as f64);
        let f_score = ratio(2.0 * recall * precision, recall + precision);
        Metrics {
            mt,
            oe,
            ce,
            recall,
            precision,
            f_score,
        }
    }

    /// Percentages rounded to one decimal.
    pub fn percentages(&self) -> (f64, f64, f64) {
        let pct = |v: f64| (v * 1000.0).round() / 10.0;
        (pct(self.recall), pct(self.precision), pct(self.f_score))
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MT={} OE={} CE={} Re={:.1} Pr={:.1} F={:.1}",
            self.mt,
            self.oe,
            self.ce,
            self.recall * 100.0,
            self.precision * 100.0,
            self.f_score * 100.0
        )
    }
}

/// Metrics from an assignment: `MT` is the number of pairs, the rest of the
/// stems are omissions and the rest of the detections commissions.
pub fn compute_metrics(n_pairs: usize, n_detections: usize, n_stems: usize) -> Metrics {
    let mt = n_pairs.min(n_detections).min(n_stems);
    Metrics::from_counts(mt, n_stems - mt, n_detections - mt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn plot_rows() {
        let m = Metrics::from_counts(10, 6, 3);
        assert_eq!(m.percentages(), (62.5, 76.9, 69.0));
        let m = Metrics::from_counts(6, 0, 0);
        assert_eq!(m.percentages(), (100.0, 100.0, 100.0));
        assert_eq!(format!("{m}"), "MT=6 OE=0 CE=0 Re=100.0 Pr=100.0 F=100.0");
    }

    #[test]
    fn empty_plot_is_zero() {
        let m = Metrics::from_counts(0, 0, 0);
        assert_eq!((m.recall, m.precision, m.f_score), (0.0, 0.0, 0.0));
        let m = compute_metrics(0, 0, 5);
        assert_eq!((m.mt, m.oe, m.ce, m.recall), (0, 5, 0, 0.0));
    }

    proptest! {
        #[test]
        fn f_is_harmonic_mean(mt in 0usize..50, oe in 0usize..50, ce in 0usize..50) {
            let m = Metrics::from_counts(mt, oe, ce);
            prop_assert!(m.f_score <= m.recall.max(m.precision) + 1e-12);
            prop_assert!(m.f_score >= m.recall.min(m.precision) - 1e-12);
            prop_assert!(m.f_score <= (m.recall + m.precision) / 2.0 + 1e-12);
            if oe == ce {
                assert_abs_diff_eq!(m.f_score, m.recall, epsilon = 1e-12);
            }
        }
    }
}
