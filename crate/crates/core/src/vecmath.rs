//! Small dense/sparse vector helpers shared across modules.

use crate::model::TermCounts;

/// Dot product over four interleaved partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit L2 norm in place. Zero vectors are left untouched.
pub fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Cosine similarity of two arbitrary (not necessarily unit) vectors, 0 when
/// either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

pub fn add_counts(dense: &mut [f64], counts: &TermCounts) {
    for (j, c) in counts.iter() {
        dense[j as usize] += c as f64;
    }
}

pub fn dense_unit(counts: &TermCounts, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    add_counts(&mut v, counts);
    normalize(&mut v);
    v
}

/// Cosine distance `1 - cos` between unit vectors, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    (1.0 - dot(a, b)).clamp(0.0, 2.0)
}

/// Mean of the given unit vectors, renormalized.
pub fn unit_mean<'a, I>(vectors: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = vec![0.0; dim];
    for v in vectors {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    normalize(&mut acc);
    acc
}
