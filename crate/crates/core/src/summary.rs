//! Learning-curve aggregation across repetitions.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::accumulate::AccumulatorKind;
use crate::scoring::ScorerKind;

/// One line of the per-cycle report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub seed: u64,
    pub cycle: usize,
    pub n_labeled: usize,
    pub scorer: ScorerKind,
    pub accumulator: AccumulatorKind,
    pub map: f64,
}

/// Mean and spread of mAP over seeds at one point of one learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSummary {
    pub scorer: ScorerKind,
    pub accumulator: AccumulatorKind,
    pub n_labeled: usize,
    pub n_seeds: usize,
    pub mean_map: f64,
    /// Sample standard deviation (divisor n - 1); `None` for a single seed.
    pub std_map: Option<f64>,
}

/// Groups rows by `(scorer, accumulator, n_labeled)`, in that order.
pub fn summarize(rows: &[ReportRow]) -> Vec<CurveSummary> {
    let mut groups: BTreeMap<(ScorerKind, AccumulatorKind, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.scorer, r.accumulator, r.n_labeled)).or_default().push(r.map);
    }
    groups
        .into_iter()
        .map(|((scorer, accumulator, n_labeled), maps)| {
            let n = maps.len();
            let mean = maps.iter().sum::<f64>() / n as f64;
            let std_map = (n >= 2).then(|| {
                let ss: f64 = maps.iter().map(|m| (m - mean) * (m - mean)).sum();
                libm::sqrt(ss / (n - 1) as f64)
            });
            CurveSummary { scorer, accumulator, n_labeled, n_seeds: n, mean_map: mean, std_map }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn row(seed: u64, map: f64) -> ReportRow {
        ReportRow { seed, cycle: 1, n_labeled: 30, scorer: ScorerKind::Margin, accumulator: AccumulatorKind::Max, map }
    }

    #[test]
    fn two_seeds() {
        let s = summarize(&[row(0, 0.4), row(1, 0.6)]);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean_map - 0.5).abs() < 1e-12);
        assert!((s[0].std_map.unwrap() - 0.141421356).abs() < 1e-6);
    }

    #[test]
    fn single_seed_has_no_std() {
        let s = summarize(&[row(0, 0.37)]);
        assert_eq!((s[0].mean_map, s[0].std_map, s[0].n_seeds), (0.37, None, 1));
    }

    #[test]
    fn identical_values_have_zero_std() {
        let s = summarize(&[row(0, 0.25), row(1, 0.25), row(2, 0.25)]);
        assert_eq!(s[0].std_map, Some(0.0));
    }

    #[test]
    fn groups_are_separated() {
        let mut other = row(0, 0.1);
        other.accumulator = AccumulatorKind::Sum;
        let mut later = row(0, 0.2);
        later.n_labeled = 60;
        let s = summarize(&[row(0, 0.3), other, later]);
        let keys: Vec<_> = s.iter().map(|c| (c.accumulator, c.n_labeled)).collect();
        assert_eq!(keys, vec![(AccumulatorKind::Sum, 30), (AccumulatorKind::Max, 30), (AccumulatorKind::Max, 60)]);
    }
}
