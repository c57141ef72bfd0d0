//! Chebyshev and linear scalarization, simplex weight sampling and
//! Chebyshev parent selection.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricVector;

/// Scores closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "weights",
                "components must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", format!("sum is {sum}, expected 1")));
        }
        Ok(WeightVector(weights))
    }

    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    /// Normalizes unit-rate exponential draws onto the simplex.
    pub fn from_exponentials(draws: &[f64]) -> Result<Self> {
        let sum: f64 = draws.iter().sum();
        if sum.is_nan() || sum <= 0.0 || draws.iter().any(|d| *d < 0.0) {
            return Err(Error::invalid(
                "weights",
                "exponential draws must be nonnegative with positive sum",
            ));
        }
        Ok(WeightVector(draws.iter().map(|d| d / sum).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Worst-case weighted gap to the ideal point `(1, ..., 1)`. Lower is better.
pub fn chebyshev(m: &MetricVector, w: &WeightVector) -> Result<f64> {
    m.check_dim(w.dim())?;
    Ok(m.values()
        .iter()
        .zip(w.values())
        .map(|(v, w)| w * (v - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Weighted sum. Higher is better.
pub fn linear(m: &MetricVector, w: &WeightVector) -> Result<f64> {
    m.check_dim(w.dim())?;
    Ok(m.values().iter().zip(w.values()).map(|(v, w)| v * w).sum())
}

/// Draws a weight vector uniformly from the `(m-1)`-simplex, i.e. from
/// Dirichlet(1, ..., 1).
///
/// # Panics
///
/// Panics if `m < 2`.
pub fn sample_weight<R: Rng + ?Sized>(rng: &mut R, m: usize) -> WeightVector {
    assert!(m >= 2, "weight sampling needs at least two objectives");
    loop {
        let draws: Vec<f64> = (0..m).map(|_| rng.sample(Exp1)).collect();
        if let Ok(w) = WeightVector::from_exponentials(&draws) {
            return w;
        }
    }
}

/// Indices attaining the minimum Chebyshev score (within [`TIE_TOLERANCE`]).
pub fn chebyshev_argmin(points: &[&MetricVector], w: &WeightVector) -> Result<Vec<usize>> {
    let scores = points
        .iter()
        .map(|m| chebyshev(m, w))
        .collect::<Result<Vec<_>>>()?;
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= best + TIE_TOLERANCE)
        .map(|(i, _)| i)
        .collect())
}

/// Picks the pool member minimizing the Chebyshev score; ties are broken
/// uniformly at random.
pub fn select_parent<Id: Copy, R: Rng + ?Sized>(
    pool: &[(Id, &MetricVector)],
    w: &WeightVector,
    rng: &mut R,
) -> Result<Id> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let points: Vec<&MetricVector> = pool.iter().map(|(_, m)| *m).collect();
    let ties = chebyshev_argmin(&points, w)?;
    let pick = if ties.len() == 1 {
        ties[0]
    } else {
        *ties.choose(rng).expect("ties is non-empty")
    };
    Ok(pool[pick].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::metrics::dominates;

    fn mv(v: &[f64]) -> MetricVector {
        MetricVector::new(v.to_vec())
    }

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn chebyshev_examples() {
        assert_eq!(
            chebyshev(&mv(&[1.0, 1.0, 1.0]), &WeightVector::uniform(3)).unwrap(),
            0.0
        );
        assert_eq!(
            chebyshev(&mv(&[0.5, 1.0, 1.0]), &w(&[1.0, 0.0, 0.0])).unwrap(),
            0.5
        );
        // Oracle: max(0.3/3, 0.1/3, 0.62/3).
        let oracle = [0.3_f64 / 3.0, 0.1 / 3.0, 0.62 / 3.0]
            .into_iter()
            .fold(0.0, f64::max);
        let got = chebyshev(&mv(&[0.7, 0.9, 0.38]), &WeightVector::uniform(3)).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.2067).abs() < 1e-4);
    }

    #[test]
    fn linear_examples() {
        let u = WeightVector::uniform(3);
        assert!((linear(&mv(&[1.0, 1.0, 1.0]), &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(linear(&mv(&[0.0, 0.0, 0.0]), &u).unwrap(), 0.0);
        let fig = linear(&mv(&[0.63, 0.96, 0.99]), &u).unwrap();
        assert!((fig - 0.86).abs() < 1e-12);
        // The annotated composite of 0.88 is within rounding slack of the
        // uniform mean of the printed values.
        assert!((fig - 0.88).abs() <= 0.02 + 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(chebyshev(&mv(&[1.0, 1.0]), &WeightVector::uniform(3)).is_err());
        assert!(linear(&mv(&[1.0, 1.0]), &WeightVector::uniform(3)).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::new(vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn equal_exponentials_give_center() {
        assert_eq!(
            WeightVector::from_exponentials(&[0.7, 0.7]).unwrap().values(),
            &[0.5, 0.5]
        );
    }

    #[test]
    fn sampled_weights_are_deterministic() {
        let a = sample_weight(&mut ChaCha8Rng::seed_from_u64(11), 3);
        let b = sample_weight(&mut ChaCha8Rng::seed_from_u64(11), 3);
        assert_eq!(a, b);
        assert!((a.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_weights_have_uniform_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut mean = [0.0; 3];
        let n = 10_000;
        for _ in 0..n {
            let w = sample_weight(&mut rng, 3);
            for (m, v) in mean.iter_mut().zip(w.values()) {
                *m += v / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.02, "mean {m}");
        }
    }

    #[test]
    fn select_parent_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = mv(&[1.0, 0.0, 0.0]);
        let b = mv(&[0.0, 1.0, 1.0]);
        assert_eq!(
            select_parent(&[("a", &a)], &WeightVector::uniform(3), &mut rng).unwrap(),
            "a"
        );
        assert_eq!(
            select_parent(&[("a", &a), ("b", &b)], &w(&[1.0, 0.0, 0.0]), &mut rng).unwrap(),
            "a"
        );
        let empty: [(u32, &MetricVector); 0] = [];
        assert!(matches!(
            select_parent(&empty, &WeightVector::uniform(3), &mut rng),
            Err(Error::EmptyPool)
        ));
    }

    #[test]
    fn ties_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let v = mv(&[0.4, 0.7, 0.2]);
        let pool = [(0usize, &v), (1usize, &v)];
        let trials = 1000;
        let firsts = (0..trials)
            .filter(|_| select_parent(&pool, &WeightVector::uniform(3), &mut rng).unwrap() == 0)
            .count();
        // Binomial(1000, 0.5) has sd ~15.8; allow four sigma.
        assert!((firsts as i64 - 500).abs() < 64, "first chosen {firsts} times");
    }

    fn vec3() -> impl Strategy<Value = MetricVector> {
        prop::collection::vec(0.0..=1.0f64, 3).prop_map(MetricVector::new)
    }

    fn weight3() -> impl Strategy<Value = WeightVector> {
        prop::collection::vec(0.0..5.0f64, 3)
            .prop_filter("positive sum", |d| d.iter().sum::<f64>() > 1e-6)
            .prop_map(|d| WeightVector::from_exponentials(&d).unwrap())
    }

    proptest! {
        #[test]
        fn chebyshev_nonnegative_and_zero_at_ideal(m in vec3(), w in weight3()) {
            let s = chebyshev(&m, &w).unwrap();
            prop_assert!(s >= 0.0);
            let active_at_one = m.values().iter().zip(w.values()).all(|(v, w)| *w == 0.0 || *v == 1.0);
            prop_assert_eq!(s == 0.0, active_at_one);
        }

        #[test]
        fn dominated_point_never_strictly_wins(a in vec3(), b in vec3(), w in weight3()) {
            if dominates(&a, &b).unwrap() {
                prop_assert!(chebyshev(&b, &w).unwrap() >= chebyshev(&a, &w).unwrap());
            }
        }

        #[test]
        fn argmin_survives_dominated_additions(
            pool in prop::collection::vec(vec3(), 1..8),
            shrink in prop::collection::vec(0.0..=1.0f64, 3),
            w in weight3(),
        ) {
            let refs: Vec<&MetricVector> = pool.iter().collect();
            let best = chebyshev_argmin(&refs, &w).unwrap();
            let best_score = chebyshev(&pool[best[0]], &w).unwrap();
            // A point dominated by (or equal to) a pool member.
            let base = &pool[0];
            let dominated = MetricVector::new(
                base.values().iter().zip(&shrink).map(|(v, s)| v * s).collect::<Vec<_>>(),
            );
            let mut refs2 = refs.clone();
            refs2.push(&dominated);
            let best2 = chebyshev_argmin(&refs2, &w).unwrap();
            let best2_score = chebyshev(refs2[best2[0]], &w).unwrap();
            prop_assert!((best2_score - best_score).abs() <= TIE_TOLERANCE);
            for i in &best {
                prop_assert!(best2.contains(i));
            }
        }
    }
}
