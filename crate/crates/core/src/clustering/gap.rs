use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::kmeans::{kmeans, kmeans_best_of, Clustering};
use crate::error::{Error, Result};
use crate::seeding;

pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Number of reference data sets.
    pub references: usize,
    /// Points per reference data set.
    pub ref_samples: usize,
    /// Seeded k-means++ restarts for the data clustering (the lowest dispersion is kept).
    pub restarts: usize,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            k_min: 5,
            k_max: 10,
            references: 10,
            ref_samples: 1000,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub k_star: usize,
    /// Candidate cluster counts, ascending.
    pub ks: Vec<usize>,
    pub gap: Vec<f64>,
    pub sk: Vec<f64>,
    pub log_wk: Vec<f64>,
    /// `log W_k` of every reference data set, indexed `[reference][k]`.
    pub ref_log_wk: Vec<Vec<f64>>,
}

/// Points drawn uniformly from the per-dimension bounding box of `points`.
pub fn reference_sample(points: ArrayView2<f64>, samples: usize, rng: &mut impl Rng) -> Array2<f64> {
    let lo = points.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
    let hi = points.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    Array2::from_shape_fn((samples, points.ncols()), |(_, d)| lo[d] + rng.random::<f64>() * (hi[d] - lo[d]))
}

/// Chooses the cluster count by the gap statistic over `k_min..=k_max` (clamped to the
/// number of points): the smallest `k` with `Gap(k) >= Gap(k+1) - s(k+1)`, or the
/// largest gap when no `k` qualifies.
pub fn gap_statistic(points: ArrayView2<f64>, config: &GapConfig, seed: u64) -> Result<GapResult> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let k_max = config.k_max.min(n);
    if k_max < config.k_max {
        log::warn!("gap statistic: k_max {} clamped to {n} points", config.k_max);
    }
    let k_min = config.k_min.clamp(1, k_max);
    // constant columns add the same amount to every distance, in the data and in every
    // reference set alike, so they are dropped
    let varying: Vec<usize> = (0..points.ncols())
        .filter(|&d| {
            let col = points.column(d);
            col.iter().any(|&v| v != col[0])
        })
        .collect();
    let reduced;
    let points = if varying.len() < points.ncols() {
        reduced = points.select(Axis(1), &varying);
        reduced.view()
    } else {
        points
    };
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let b = config.references.max(1);

    let log_wk: Vec<f64> = ks
        .par_iter()
        .map(|&k| kmeans_best_of(points, k, seeding::derive(seed, k as u64), config.restarts).map(|c| (c.inertia + LOG_EPS).ln()))
        .collect::<Result<_>>()?;

    let references: Vec<Array2<f64>> = (0..b)
        .map(|r| reference_sample(points, config.ref_samples.max(k_max), &mut seeding::rng(seeding::derive(seed, 1000 + r as u64))))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..b).flat_map(|r| ks.iter().map(move |&k| (r, k))).collect();
    let ref_logs: Vec<f64> = jobs
        .par_iter()
        .map(|&(r, k)| {
            let s = seeding::derive(seeding::derive(seed, 2000 + r as u64), k as u64);
            kmeans(references[r].view(), k, s).map(|c| (c.inertia + LOG_EPS).ln())
        })
        .collect::<Result<_>>()?;

    let ref_log_wk: Vec<Vec<f64>> = ref_logs.chunks(ks.len()).map(<[f64]>::to_vec).collect();

    let mut gap = Vec::with_capacity(ks.len());
    let mut sk = Vec::with_capacity(ks.len());
    for j in 0..ks.len() {
        let logs: Vec<f64> = ref_log_wk.iter().map(|r| r[j]).collect();
        let mean = logs.iter().sum::<f64>() / b as f64;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / b as f64).sqrt();
        gap.push(mean - log_wk[j]);
        sk.push(sd * (1.0 + 1.0 / b as f64).sqrt());
    }
    let k_star = (0..ks.len().saturating_sub(1))
        .find(|&j| gap[j] >= gap[j + 1] - sk[j + 1])
        .map(|j| ks[j])
        .unwrap_or_else(|| {
            let best = (0..ks.len()).fold(0, |best, j| if gap[j] > gap[best] { j } else { best });
            ks[best]
        });
    Ok(GapResult {
        k_star,
        ks,
        gap,
        sk,
        log_wk,
        ref_log_wk,
    })
}

/// Runs the gap statistic and returns it with the chosen clustering, re-run with the
/// same seeds the statistic used for `k*`.
pub fn cluster_with_gap(points: ArrayView2<f64>, config: &GapConfig, seed: u64) -> Result<(GapResult, Clustering)> {
    let gap = gap_statistic(points, config, seed)?;
    let k = gap.k_star;
    let clustering = kmeans_best_of(points, k, seeding::derive(seed, k as u64), config.restarts)?;
    Ok((gap, clustering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans::sq_dist;
    use crate::fixtures;

    /// Direct transcription of the gap formula from per-k log dispersions, used to
    /// cross-check the selection rule.
    fn tibshirani(log_w: &[f64], ref_logs: &[Vec<f64>], ks: &[usize]) -> usize {
        let b = ref_logs.len() as f64;
        let gaps: Vec<(f64, f64)> = (0..ks.len())
            .map(|j| {
                let l: Vec<f64> = ref_logs.iter().map(|r| r[j]).collect();
                let lbar = l.iter().sum::<f64>() / b;
                let sd = (l.iter().map(|x| (x - lbar) * (x - lbar)).sum::<f64>() / b).sqrt();
                (lbar - log_w[j], sd * (1.0 + 1.0 / b).sqrt())
            })
            .collect();
        for j in 0..ks.len() - 1 {
            if gaps[j].0 >= gaps[j + 1].0 - gaps[j + 1].1 {
                return ks[j];
            }
        }
        let mut best = 0;
        for j in 1..ks.len() {
            if gaps[j].0 > gaps[best].0 {
                best = j;
            }
        }
        ks[best]
    }

    #[test]
    fn matches_direct_formula() {
        let config = GapConfig {
            ref_samples: 150,
            ..GapConfig::default()
        };
        for seed in 0..4 {
            let (pts, _) = fixtures::gaussian_blobs(6, 8, 25, 0.6, 2.0, seed);
            let r = gap_statistic(pts.view(), &config, seed).unwrap();
            assert_eq!(r.ref_log_wk.len(), config.references);
            assert_eq!(tibshirani(&r.log_wk, &r.ref_log_wk, &r.ks), r.k_star);
            for (j, &k) in r.ks.iter().enumerate() {
                let c = kmeans_best_of(pts.view(), k, seeding::derive(seed, k as u64), config.restarts).unwrap();
                let w: f64 = pts.outer_iter().zip(&c.assignment).map(|(p, &a)| sq_dist(p, c.centroids.row(a))).sum();
                assert!(((w + LOG_EPS).ln() - r.log_wk[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seven_blobs_give_seven() {
        let config = GapConfig::default();
        let hits = (0..4)
            .filter(|&seed| {
                let (pts, _) = fixtures::gaussian_blobs(7, 10, 30, 0.25, 4.0, seed);
                let r = gap_statistic(pts.view(), &config, seed).unwrap();
                r.k_star == 7
            })
            .count();
        assert_eq!(hits, 4);
    }

    #[test]
    fn small_and_degenerate_inputs() {
        let (pts, _) = fixtures::gaussian_blobs(2, 3, 3, 0.5, 3.0, 1);
        let r = gap_statistic(pts.view(), &GapConfig::default(), 0).unwrap();
        assert!((5..=6).contains(&r.k_star));
        assert_eq!(r.ks, vec![5, 6]);

        let same = Array2::from_elem((20, 4), 0.25);
        let r = gap_statistic(same.view(), &GapConfig::default(), 0).unwrap();
        assert_eq!(r.k_star, 5);
        assert!(r.gap.iter().all(|g| g.is_finite()));
        assert!(matches!(
            gap_statistic(Array2::<f64>::zeros((0, 3)).view(), &GapConfig::default(), 0),
            Err(Error::EmptyInput)
        ));
    }
}
