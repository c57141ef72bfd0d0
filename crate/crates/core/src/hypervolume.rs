//! Exact hypervolume (up to three objectives) and hypervolume contribution,
//! both measured from the origin, plus a Monte-Carlo estimator.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::{weakly_dominates, MetricVector};

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

fn common_dim(points: &[&MetricVector]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Ok(0);
    };
    let m = first.dim();
    for p in points {
        p.check_dim(m)?;
    }
    Ok(m)
}

/// Dominated volume of `points` with respect to the origin.
pub fn hv_exact(points: &[MetricVector]) -> Result<f64> {
    let refs: Vec<&MetricVector> = points.iter().collect();
    hv_refs(&refs)
}

fn hv_refs(points: &[&MetricVector]) -> Result<f64> {
    let m = common_dim(points)?;
    let raw: Vec<&[f64]> = points.iter().map(|p| p.values()).collect();
    match m {
        0 => Ok(0.0),
        1 => Ok(raw.iter().map(|p| p[0]).fold(0.0, f64::max)),
        2 => Ok(area_2d(raw.iter().map(|p| (p[0], p[1])).collect())),
        3 => Ok(volume_3d(&raw)),
        other => Err(Error::UnsupportedDimension(other)),
    }
}

/// Staircase area of 2D points against the origin.
fn area_2d(mut pts: Vec<(f64, f64)>) -> f64 {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut reach = 0.0;
    for (x, y) in pts {
        if y > reach {
            area += x * (y - reach);
            reach = y;
        }
    }
    area
}

/// Sweeps the third coordinate from the top down; each slab between
/// consecutive distinct heights contributes the staircase area of every
/// point at least that tall.
fn volume_3d(points: &[&[f64]]) -> f64 {
    let mut sorted: Vec<&[f64]> = points.iter().copied().filter(|p| p[2] > 0.0).collect();
    sorted.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut volume = 0.0;
    let mut active: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let top = sorted[i][2];
        while i < sorted.len() && sorted[i][2] == top {
            active.push((sorted[i][0], sorted[i][1]));
            i += 1;
        }
        let bottom = if i < sorted.len() { sorted[i][2] } else { 0.0 };
        volume += area_2d(active.clone()) * (top - bottom);
    }
    volume
}

/// Exclusive volume `candidate` adds to `points`. Exactly zero whenever some
/// member weakly dominates the candidate (including exact duplicates).
pub fn hvc(candidate: &MetricVector, points: &[MetricVector]) -> Result<f64> {
    let refs: Vec<&MetricVector> = points.iter().collect();
    hvc_refs(candidate, &refs)
}

pub(crate) fn hvc_refs(candidate: &MetricVector, points: &[&MetricVector]) -> Result<f64> {
    let m = candidate.dim();
    if m > 3 {
        return Err(Error::UnsupportedDimension(m));
    }
    for p in points {
        if weakly_dominates(p, candidate)? {
            return Ok(0.0);
        }
    }
    // vol(box(c)) - vol(box(c) ∩ union of boxes): the intersection is the
    // hypervolume of the members clipped to the candidate.
    let own: f64 = candidate.values().iter().product();
    let clipped: Vec<MetricVector> = points
        .iter()
        .map(|p| {
            MetricVector::new(
                p.values()
                    .iter()
                    .zip(candidate.values())
                    .map(|(a, b)| a.min(*b))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    Ok((own - hv_exact(&clipped)?).max(0.0))
}

/// Fraction of uniform samples in `[0,1]^M` dominated by some point, with a
/// 99% normal-approximation half-width.
pub fn hv_monte_carlo<R: Rng + ?Sized>(
    points: &[MetricVector],
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let refs: Vec<&MetricVector> = points.iter().collect();
    let m = common_dim(&refs)?;
    if m == 0 {
        return Ok((0.0, 0.0));
    }
    let mut q = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..samples {
        for x in q.iter_mut() {
            *x = rng.random::<f64>();
        }
        if points
            .iter()
            .any(|p| p.values().iter().zip(&q).all(|(a, b)| b <= a))
        {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let half = Z_99 * (p * (1.0 - p) / samples as f64).sqrt();
    Ok((p, half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::metrics::{dominates, pareto_front};

    fn mv(v: &[f64]) -> MetricVector {
        MetricVector::new(v.to_vec())
    }

    /// Inclusion-exclusion over all non-empty subsets: independent of the
    /// sweep implementation.
    fn inclusion_exclusion(points: &[MetricVector]) -> f64 {
        let n = points.len();
        let m = points.first().map_or(0, |p| p.dim());
        let mut total = 0.0;
        for mask in 1u32..(1 << n) {
            let mut corner = vec![f64::INFINITY; m];
            for (i, p) in points.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    for (c, v) in corner.iter_mut().zip(p.values()) {
                        *c = c.min(*v);
                    }
                }
            }
            let vol: f64 = corner.iter().product();
            if mask.count_ones() % 2 == 1 {
                total += vol;
            } else {
                total -= vol;
            }
        }
        total
    }

    #[test]
    fn exact_examples() {
        assert_eq!(hv_exact(&[mv(&[1.0, 1.0, 1.0])]).unwrap(), 1.0);
        assert_eq!(hv_exact(&[]).unwrap(), 0.0);
        let pair = [mv(&[1.0, 1.0, 0.5]), mv(&[0.5, 0.5, 1.0])];
        assert!((inclusion_exclusion(&pair) - 0.625).abs() < 1e-15);
        assert!((hv_exact(&pair).unwrap() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn low_dimensions() {
        assert_eq!(hv_exact(&[mv(&[0.3]), mv(&[0.7])]).unwrap(), 0.7);
        let pts = [mv(&[1.0, 0.2]), mv(&[0.5, 0.5]), mv(&[0.2, 1.0])];
        assert!((hv_exact(&pts).unwrap() - inclusion_exclusion(&pts)).abs() < 1e-12);
    }

    #[test]
    fn four_objectives_unsupported() {
        let p = [mv(&[0.5, 0.5, 0.5, 0.5])];
        assert!(matches!(hv_exact(&p), Err(Error::UnsupportedDimension(4))));
        assert!(matches!(hvc(&p[0], &[]), Err(Error::UnsupportedDimension(4))));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, _) = hv_monte_carlo(&p, 10_000, &mut rng).unwrap();
        assert!((est - 0.0625).abs() < 0.02);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        assert!(hv_exact(&[mv(&[0.5, 0.5]), mv(&[0.5, 0.5, 0.5])]).is_err());
    }

    #[test]
    fn hvc_examples() {
        assert_eq!(hvc(&mv(&[0.5, 0.5, 0.5]), &[mv(&[1.0, 1.0, 1.0])]).unwrap(), 0.0);
        assert_eq!(hvc(&mv(&[1.0, 1.0, 1.0]), &[]).unwrap(), 1.0);
        let oracle = inclusion_exclusion(&[mv(&[1.0, 1.0, 0.5]), mv(&[0.5, 0.5, 1.0])])
            - inclusion_exclusion(&[mv(&[1.0, 1.0, 0.5])]);
        assert!((oracle - 0.125).abs() < 1e-15);
        let got = hvc(&mv(&[0.5, 0.5, 1.0]), &[mv(&[1.0, 1.0, 0.5])]).unwrap();
        assert!((got - 0.125).abs() < 1e-12);
        assert_eq!(hvc(&mv(&[0.3, 0.6, 0.9]), &[mv(&[0.3, 0.6, 0.9])]).unwrap(), 0.0);
    }

    #[test]
    fn monte_carlo_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            hv_monte_carlo(&[mv(&[1.0, 1.0, 1.0])], 1000, &mut rng).unwrap(),
            (1.0, 0.0)
        );
        assert_eq!(hv_monte_carlo(&[], 1000, &mut rng).unwrap(), (0.0, 0.0));
        assert!(hv_monte_carlo(&[], 0, &mut rng).is_err());
        let pair = [mv(&[1.0, 1.0, 0.5]), mv(&[0.5, 0.5, 1.0])];
        let (est, half) = hv_monte_carlo(&pair, 1_000_000, &mut rng).unwrap();
        assert!((est - 0.625).abs() < 0.002, "estimate {est}");
        assert!(half < 0.002);
    }

    fn vec3() -> impl Strategy<Value = MetricVector> {
        prop::collection::vec(0.0..=1.0f64, 3).prop_map(MetricVector::new)
    }

    fn grid3() -> impl Strategy<Value = MetricVector> {
        prop::collection::vec(0u8..=5, 3)
            .prop_map(|v| MetricVector::new(v.into_iter().map(|x| x as f64 / 5.0).collect::<Vec<_>>()))
    }

    proptest! {
        #[test]
        fn matches_inclusion_exclusion(points in prop::collection::vec(vec3(), 0..9)) {
            let exact = hv_exact(&points).unwrap();
            prop_assert!((exact - inclusion_exclusion(&points)).abs() < 1e-9);
        }

        #[test]
        fn dominated_points_are_irrelevant(points in prop::collection::vec(grid3(), 0..10)) {
            let front = pareto_front(&points).unwrap();
            prop_assert!((hv_exact(&points).unwrap() - hv_exact(&front).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariant(points in prop::collection::vec(vec3(), 0..8), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = hv_exact(&points).unwrap();
            let mut shuffled = points.clone();
            shuffled.shuffle(&mut rng);
            prop_assert!((hv_exact(&shuffled).unwrap() - base).abs() < 1e-12);
            let mut axes = [0usize, 1, 2];
            axes.shuffle(&mut rng);
            let permuted: Vec<MetricVector> = points
                .iter()
                .map(|p| MetricVector::new(axes.iter().map(|&a| p.get(a)).collect::<Vec<_>>()))
                .collect();
            prop_assert!((hv_exact(&permuted).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn hvc_matches_difference(c in vec3(), points in prop::collection::vec(vec3(), 0..7)) {
            let direct = hvc(&c, &points).unwrap();
            let mut with = points.clone();
            with.push(c.clone());
            let diff = hv_exact(&with).unwrap() - hv_exact(&points).unwrap();
            prop_assert!(direct >= 0.0);
            prop_assert!((direct - diff).abs() < 1e-12);
        }

        #[test]
        fn hvc_positive_iff_nondominated(c in grid3(), points in prop::collection::vec(grid3(), 0..7)) {
            let covered = points.iter().any(|p| dominates(p, &c).unwrap() || p == &c);
            let positive_volume = c.values().iter().all(|v| *v > 0.0);
            let h = hvc(&c, &points).unwrap();
            prop_assert_eq!(h > 0.0, !covered && positive_volume);
        }
    }
}
