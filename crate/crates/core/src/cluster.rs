//! Seeded spherical k-means over unit vectors.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vecmath;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Cluster per point; clusters are numbered by their first point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (c, cen) in centroids.iter().enumerate() {
        let s = vecmath::dot(p, cen);
        if s > best_s {
            best_s = s;
            best = c;
        }
    }
    best
}

/// Clusters unit vectors into at most `k` groups by cosine similarity with
/// k-means++ seeding. Empty clusters are dropped.
pub fn spherical_kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Clustering {
    let n = points.len();
    if n == 0 {
        return Clustering { assignment: Vec::new(), centroids: Vec::new() };
    }
    let dim = points[0].len();
    let k = k.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dmin: Vec<f64> = points.iter().map(|p| vecmath::cosine_distance(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(dmin.iter().map(|d| d * d)) {
            Ok(w) => w.sample(&mut rng),
            // All remaining points coincide with a center.
            Err(_) => match (0..n).find(|i| !chosen.contains(i)) {
                Some(i) => i,
                None => break,
            },
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            dmin[i] = dmin[i].min(vecmath::cosine_distance(p, &points[next]));
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        for (i, p) in points.iter().enumerate() {
            sums[assignment[i]].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for (c, mut s) in sums.into_iter().enumerate() {
            if s.iter().any(|&x| x != 0.0) {
                vecmath::normalize(&mut s);
                centroids[c] = s;
            }
        }
        if !changed {
            break;
        }
    }

    // Renumber by first point and drop empty clusters.
    let mut remap = vec![usize::MAX; centroids.len()];
    let mut ordered = Vec::new();
    for a in assignment.iter_mut() {
        if remap[*a] == usize::MAX {
            remap[*a] = ordered.len();
            ordered.push(centroids[*a].clone());
        }
        *a = remap[*a];
    }
    Clustering { assignment, centroids: ordered }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_orthogonal_groups() {
        let pts = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.99, 0.141, 0.0],
            vec![0.0, 0.141, 0.99],
        ];
        let pts: Vec<Vec<f64>> = pts
            .into_iter()
            .map(|mut p| {
                vecmath::normalize(&mut p);
                p
            })
            .collect();
        for seed in 0..5 {
            let c = spherical_kmeans(&pts, 2, seed, 20);
            assert_eq!(c.assignment, vec![0, 1, 0, 1]);
        }
    }

    #[test]
    fn single_cluster_and_duplicates() {
        let pts = vec![vec![1.0, 0.0]; 4];
        let c = spherical_kmeans(&pts, 3, 0, 10);
        assert_eq!(c.assignment, vec![0; 4]);
        assert_eq!(c.k(), 1);
    }
}
