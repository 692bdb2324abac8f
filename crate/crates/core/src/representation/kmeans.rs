//! Lloyd's k-means with k-means++ seeding, used to initialize prototypes
//! from photo features.

use rand::Rng;

use crate::correspondence::PrototypeBank;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| (c, sq_dist(point, centroid)))
        .fold((0, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Raw (unnormalized) centroids after Lloyd iterations.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    if k == 0 || points.len() < k {
        return Err(Error::invalid(format!("k-means needs at least k = {k} points, got {}", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("k-means points have differing dimensions".into()));
    }

    // k-means++ seeding
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dists.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in dists.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignment = vec![0usize; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut updated: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n.max(1) as f64).collect())
            .collect();
        // empty clusters take the point farthest from its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .zip(&assignment)
                    .enumerate()
                    .map(|(i, (p, &a))| (i, sq_dist(p, &updated[a])))
                    .fold((0, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
                    .0;
                updated[c] = points[far].clone();
                assignment[far] = c;
            }
        }
        let shift = centroids.iter().zip(&updated).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centroids = updated;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    Ok(centroids)
}

/// k-means centroids of `features`, L2-normalized into a prototype bank.
pub fn kmeans_init(features: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Result<PrototypeBank> {
    let centroids = kmeans(features, k, rng)?;
    PrototypeBank::from_rows(&centroids)
}
