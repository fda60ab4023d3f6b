//! Seeded k-means (k-means++ initialisation, Lloyd iterations).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<const D: usize> {
    pub centroids: Vec<[f64; D]>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn d2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, lowest index on ties.
fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, q) in centroids.iter().enumerate() {
        let d = d2(p, q);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<const D: usize>(points: &[[f64; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut dist: Vec<f64> = points.iter().map(|p| d2(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.push(points[pick]);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(d2(p, &points[pick]));
        }
    }
    centroids
}

/// Partitions `points` into `k` clusters. Deterministic for a fixed seed;
/// an emptied cluster is re-seeded at the point farthest from its centroid.
pub fn kmeans<const D: usize>(points: &[[f64; D]], k: usize, seed: u64) -> Result<Clustering<D>> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter(format!("k = {k} for {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let nearest_all = par::map_slice(points, |p| nearest(p, &centroids));
        let mut next: Vec<usize> = nearest_all.iter().map(|&(c, _)| c).collect();

        let mut counts = vec![0usize; k];
        for &c in &next {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // farthest point from its own centroid, among clusters that can spare one
            let mut far = None;
            for (i, p) in points.iter().enumerate() {
                let own = next[i];
                if counts[own] < 2 {
                    continue;
                }
                let d = d2(p, &centroids[own]);
                if far.is_none_or(|(_, best)| d > best) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                counts[next[i]] -= 1;
                next[i] = c;
                counts[c] = 1;
                centroids[c] = points[i];
            }
        }

        let mut sums = vec![[0.0; D]; k];
        for (p, &c) in points.iter().zip(&next) {
            for d in 0..D {
                sums[c][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..D {
                    centroids[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }
        let stable = next == assignment;
        assignment = next;
        if stable {
            break;
        }
    }
    Ok(Clustering {
        centroids,
        assignment,
        iterations,
    })
}

/// For each cluster, the member nearest its centroid (lowest index on ties).
pub fn medoid_indices<const D: usize>(points: &[[f64; D]], clustering: &Clustering<D>) -> Vec<usize> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; clustering.centroids.len()];
    for (i, (p, &c)) in points.iter().zip(&clustering.assignment).enumerate() {
        let d = d2(p, &clustering.centroids[c]);
        if best[c].is_none_or(|(_, b)| d < b) {
            best[c] = Some((i, d));
        }
    }
    best.into_iter().flatten().map(|(i, _)| i).collect()
}
