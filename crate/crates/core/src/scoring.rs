//! Per-box uncertainty scores computed from a detector's class distribution.
//!
//! All deterministic scores are oriented so that larger means "more worth
//! annotating" and reach 1 at maximal uncertainty.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::types::{ClassDistribution, ImagePrediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScorerKind {
    /// One minus the gap between the two most probable classes (1-vs-2).
    Margin,
    /// One minus the normalized variance of the class probabilities.
    Variance,
    /// Shannon entropy normalized by `log2(D)`.
    Entropy,
    /// Uniform draw; the passive-learning baseline.
    Random,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 4] = [ScorerKind::Margin, ScorerKind::Variance, ScorerKind::Entropy, ScorerKind::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScorerKind::Margin => "margin",
            ScorerKind::Variance => "variance",
            ScorerKind::Entropy => "entropy",
            ScorerKind::Random => "random",
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, ScorerKind::Random)
    }

    /// Scores one box. `rng` is only drawn from by [`ScorerKind::Random`].
    pub fn score<R: RngCore + ?Sized>(&self, p: &ClassDistribution, rng: &mut R) -> Result<f64> {
        match self {
            ScorerKind::Margin => margin_score(p),
            ScorerKind::Variance => variance_score(p),
            ScorerKind::Entropy => entropy_score(p),
            ScorerKind::Random => Ok(random_score(rng)),
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scorer {s:?}; expected margin, variance, entropy or random")))
    }
}

fn require_two_classes(p: &ClassDistribution, what: &str) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::Domain(format!("{what} score needs at least two classes, got D = {}", p.len())));
    }
    Ok(())
}

/// `1 - (p_d1 - p_d2)` for the largest and second-largest probabilities.
/// Ties at the top give both slots the same value and a score of 1.
pub fn margin_score(p: &ClassDistribution) -> Result<f64> {
    require_two_classes(p, "margin")?;
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p.probs() {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    Ok(1.0 - (first - second))
}

/// `1 - 1/(D-1) * sum_d (p_d - mean(p))^2`. Lies in `[1 - 1/D, 1]`.
pub fn variance_score(p: &ClassDistribution) -> Result<f64> {
    require_two_classes(p, "variance")?;
    let d = p.len() as f64;
    let mean = p.probs().iter().sum::<f64>() / d;
    let spread: f64 = p.probs().iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(1.0 - spread / (d - 1.0))
}

/// `-sum_d p_d log2 p_d / log2(D)` with `0 log 0 = 0`.
pub fn entropy_score(p: &ClassDistribution) -> Result<f64> {
    require_two_classes(p, "entropy")?;
    let bits: f64 = p.probs().iter().filter(|&&v| v > 0.0).map(|&v| -v * libm::log2(v)).sum();
    Ok(bits / libm::log2(p.len() as f64))
}

/// Uniform draw from `[0, 1)`.
pub fn random_score<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Scores every detection of `pred`, in order.
pub fn score_boxes<R: RngCore + ?Sized>(pred: &ImagePrediction, kind: ScorerKind, rng: &mut R) -> Result<Vec<f64>> {
    pred.detections.iter().map(|det| kind.score(&det.distribution, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use crate::types::{BoxGeometry, Detection};
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> ClassDistribution {
        ClassDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_score(&dist(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(margin_score(&dist(&[0.5, 0.5])).unwrap(), 1.0);
        assert!((margin_score(&dist(&[0.7, 0.2, 0.1])).unwrap() - 0.5).abs() < 1e-9);
        // top-two tie below a third entry does not count as a tie at the top
        assert!((margin_score(&dist(&[0.2, 0.4, 0.4])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        assert!((variance_score(&dist(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])).unwrap() - 1.0).abs() < 1e-9);
        assert!((variance_score(&dist(&[1.0, 0.0])).unwrap() - 0.5).abs() < 1e-9);
        assert!((variance_score(&dist(&[0.5, 0.25, 0.25])).unwrap() - 0.979167).abs() < 1e-6);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_score(&dist(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        assert!((entropy_score(&dist(&[0.25; 4])).unwrap() - 1.0).abs() < 1e-9);
        assert!((entropy_score(&dist(&[0.5, 0.25, 0.25])).unwrap() - 0.946395).abs() < 1e-6);
    }

    #[test]
    fn single_class_is_a_domain_error() {
        let p = dist(&[1.0]);
        for f in [margin_score, variance_score, entropy_score] {
            assert!(matches!(f(&p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn random_is_reproducible() {
        let s = SeedStream::new(3);
        let a = random_score(&mut s.rng_for(&"x".into()));
        let b = random_score(&mut s.rng_for(&"x".into()));
        assert_eq!(a, b);
        assert!((0.0..1.0).contains(&a));
    }

    #[test]
    fn random_mean_is_one_half() {
        let mut rng = SeedStream::new(11).rng();
        let n = 100_000;
        let mean = (0..n).map(|_| random_score(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn score_boxes_is_pointwise() {
        let b = BoxGeometry::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let dists = [dist(&[0.7, 0.2, 0.1]), dist(&[0.4, 0.4, 0.2]), dist(&[1.0, 0.0, 0.0])];
        let pred = ImagePrediction::new("i".into(), dists.iter().cloned().map(|d| Detection::new(b, d)).collect());
        let mut rng = SeedStream::new(0).rng();
        let got = score_boxes(&pred, ScorerKind::Margin, &mut rng).unwrap();
        let want: Vec<f64> = dists.iter().map(|d| margin_score(d).unwrap()).collect();
        assert_eq!(got, want);
        assert!(score_boxes(&ImagePrediction::empty("e".into()), ScorerKind::Entropy, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn parse_scorer_names() {
        assert_eq!("margin".parse::<ScorerKind>().unwrap(), ScorerKind::Margin);
        assert!("bogus".parse::<ScorerKind>().is_err());
        for k in ScorerKind::ALL {
            assert_eq!(k.as_str().parse::<ScorerKind>().unwrap(), k);
        }
    }

    fn simplex(max_d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..=max_d).prop_filter_map("non-zero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-9).then(|| raw.iter().map(|v| v / s).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn ranges_hold_on_the_simplex(p in simplex(20)) {
            let d = p.len() as f64;
            let p = ClassDistribution::new(p).unwrap();
            let m = margin_score(&p).unwrap();
            let v = variance_score(&p).unwrap();
            let e = entropy_score(&p).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
            prop_assert!(v >= 1.0 - 1.0 / d - 1e-12 && v <= 1.0 + 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
        }
    }

    proptest! {
        #[test]
        fn permutation_does_not_change_scores(p in simplex(8), rot in 0usize..8) {
            let mut q = p.clone();
            q.rotate_left(rot % p.len());
            q.reverse();
            let (p, q) = (ClassDistribution::new(p).unwrap(), ClassDistribution::new(q).unwrap());
            prop_assert!((margin_score(&p).unwrap() - margin_score(&q).unwrap()).abs() < 1e-12);
            prop_assert!((variance_score(&p).unwrap() - variance_score(&q).unwrap()).abs() < 1e-12);
            prop_assert!((entropy_score(&p).unwrap() - entropy_score(&q).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_and_uniform_boundaries() {
        for d in 2..=20 {
            for c in [0, d - 1] {
                let p = ClassDistribution::one_hot(c, d).unwrap();
                assert_eq!(margin_score(&p).unwrap(), 0.0);
                assert_eq!(entropy_score(&p).unwrap(), 0.0);
                assert!((variance_score(&p).unwrap() - (1.0 - 1.0 / d as f64)).abs() < 1e-9);
            }
            let u = ClassDistribution::uniform(d).unwrap();
            assert!((margin_score(&u).unwrap() - 1.0).abs() < 1e-9);
            assert!((entropy_score(&u).unwrap() - 1.0).abs() < 1e-9);
            assert!((variance_score(&u).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
