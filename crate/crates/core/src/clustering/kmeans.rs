use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeding;

pub const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances to the centroids.
    pub inertia: f64,
    /// Inertia after each centroid update.
    pub trace: Vec<f64>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == cluster).collect()
    }
}

pub fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => sq_dist_slice(a, b),
        _ => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

// four independent accumulators so the loop vectorizes
fn sq_dist_slice(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Nearest centroid of every point through `|x|^2 + |c|^2 - 2 x.c`, one matrix product
/// per pass.
fn assign(points: ArrayView2<f64>, point_norms: &[f64], centroids: &Array2<f64>) -> Vec<usize> {
    let centroid_norms: Vec<f64> = centroids.outer_iter().map(|c| c.dot(&c)).collect();
    let cross = points.dot(&centroids.t());
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for (c, (&x, &cn)) in cross.row(i).iter().zip(&centroid_norms).enumerate() {
                let d = point_norms[i] + cn - 2.0 * x;
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

pub fn inertia(points: ArrayView2<f64>, assignment: &[usize], centroids: &Array2<f64>) -> f64 {
    points
        .outer_iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, centroids.row(a)))
        .sum()
}

fn kmeans_plus_plus(points: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.outer_iter().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, p) in points.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

fn update_centroids(points: ArrayView2<f64>, assignment: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut centroids = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &a) in points.outer_iter().zip(assignment) {
        let mut row = centroids.row_mut(a);
        row += &p;
        counts[a] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centroids.row_mut(c).mapv_inplace(|v| v / count as f64);
        }
    }
    (centroids, counts)
}

/// Gives each empty cluster the point farthest from its own centroid, taken from a
/// cluster that has more than one member.
fn repair_empty(points: ArrayView2<f64>, assignment: &mut [usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    loop {
        let (centroids, counts) = update_centroids(points, assignment, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return (centroids, counts);
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.outer_iter().enumerate() {
            if counts[assignment[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, centroids.row(assignment[i]));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => assignment[i] = empty,
            None => return (centroids, counts),
        }
    }
}

/// Lloyd's algorithm from a k-means++ start. Stops when the assignment no longer changes
/// or after `MAX_ITER` iterations.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<Clustering> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = seeding::rng(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let point_norms: Vec<f64> = points.outer_iter().map(|p| p.dot(&p)).collect();
    for _ in 0..MAX_ITER {
        let next = assign(points, &point_norms, &centroids);
        if next == assignment {
            break;
        }
        assignment = next;
        centroids = repair_empty(points, &mut assignment, k).0;
        trace.push(inertia(points, &assignment, &centroids));
    }
    let inertia = inertia(points, &assignment, &centroids);
    Ok(Clustering {
        k,
        assignment,
        centroids,
        inertia,
        trace,
    })
}

/// Lowest-inertia result of `restarts` independently seeded runs (first wins ties).
pub fn kmeans_best_of(points: ArrayView2<f64>, k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    let mut best = kmeans(points, k, seed)?;
    for r in 1..restarts {
        let c = kmeans(points, k, seeding::derive(seed, r as u64))?;
        if c.inertia < best.inertia {
            best = c;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]];
        let c = kmeans(pts.view(), 1, 3).unwrap();
        assert_eq!(c.centroids, array![[2.0, 1.0]]);
        let total: f64 = pts.outer_iter().map(|p| sq_dist(p, c.centroids.row(0))).sum();
        assert!((c.inertia - total).abs() < 1e-12);
        assert_eq!(c.sizes(), vec![3]);
    }

    #[test]
    fn k_equal_to_n_has_zero_inertia() {
        let mut rng = fixtures::rng(2);
        let pts = Array2::from_shape_fn((7, 3), |_| rng.random::<f64>());
        let c = kmeans(pts.view(), 7, 1).unwrap();
        assert_eq!(c.inertia, 0.0);
        assert_eq!(c.sizes(), vec![1; 7]);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        for seed in 0..10 {
            let (pts, labels) = fixtures::gaussian_blobs(2, 5, 40, 0.1, 5.0, seed);
            let c = kmeans(pts.view(), 2, seed).unwrap();
            let map = c.assignment[0];
            for (a, l) in c.assignment.iter().zip(&labels) {
                assert_eq!(*a == map, *l == labels[0]);
            }
        }
    }

    #[test]
    fn errors_and_determinism() {
        let pts = Array2::<f64>::zeros((3, 2));
        assert!(matches!(kmeans(pts.view(), 4, 0), Err(Error::KTooLarge { k: 4, n: 3 })));
        assert!(matches!(kmeans(Array2::<f64>::zeros((0, 2)).view(), 1, 0), Err(Error::EmptyInput)));
        let c = kmeans(pts.view(), 2, 0).unwrap();
        assert_eq!(c.sizes().iter().sum::<usize>(), 3);
        assert!(c.sizes().iter().all(|&s| s > 0));
        let (blobs, _) = fixtures::gaussian_blobs(4, 6, 30, 0.5, 2.0, 9);
        assert_eq!(kmeans(blobs.view(), 4, 5).unwrap(), kmeans(blobs.view(), 4, 5).unwrap());
    }

    #[test]
    fn inertia_trace_is_non_increasing_and_consistent() {
        for seed in 0..10 {
            let (pts, _) = fixtures::gaussian_blobs(5, 8, 30, 0.8, 1.5, seed);
            let c = kmeans(pts.view(), 6, seed).unwrap();
            for w in c.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", c.trace);
            }
            let recomputed = inertia(pts.view(), &c.assignment, &c.centroids);
            assert!((c.inertia - recomputed).abs() <= 1e-9 * recomputed.max(1.0));
            assert!(c.assignment.iter().all(|&a| a < 6));
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let (pts, _) = fixtures::gaussian_blobs(5, 10, 60, 0.7, 1.5, 4);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| kmeans(pts.view(), 5, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
