//! Deterministic k-means over flattened weight matrices.
//!
//! Snapshots taken along a run cluster into a small set of controller
//! prototypes; each center reshapes back into a weight matrix that can be
//! loaded directly. Seeding is k-means++ from a fixed ChaCha8 stream, so the
//! same snapshots always produce the same centers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const SEED: u64 = 0x5eed_cafe;
const MAX_ITERS: usize = 200;
const TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Clustering {
    pub centers: Vec<DMatrix<f64>>,
    pub assignment: Vec<usize>,
}

fn nearest(point: &DVector<f64>, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = (point - c).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest weighted by squared
/// distance to the nearest chosen center.
fn seed_centers(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    while centers.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| nearest(p, &centers).1)
            .collect();
        let total: f64 = weights.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // All points coincide with existing centers; any index works.
            rng.gen_range(0..points.len())
        };
        centers.push(points[idx].clone());
    }
    centers
}

/// Clusters weight snapshots into `k` centers.
///
/// All snapshots must share one shape; `k` must be between 1 and the number
/// of snapshots.
pub fn cluster_weights(snapshots: &[DMatrix<f64>], k: usize) -> Result<Clustering> {
    if snapshots.is_empty() {
        return Err(Error::invalid("cluster_weights: no snapshots"));
    }
    if k == 0 || k > snapshots.len() {
        return Err(Error::invalid(format!(
            "cluster_weights: k={k} outside 1..={}",
            snapshots.len()
        )));
    }
    let (rows, cols) = snapshots[0].shape();
    if snapshots.iter().any(|s| s.shape() != (rows, cols)) {
        return Err(Error::invalid("cluster_weights: snapshot shapes differ"));
    }
    let points: Vec<DVector<f64>> = snapshots
        .iter()
        .map(|s| DVector::from_column_slice(s.as_slice()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut centers = seed_centers(&points, k, &mut rng);
    let mut assignment = vec![0usize; points.len()];
    for _ in 0..MAX_ITERS {
        for (i, p) in points.iter().enumerate() {
            assignment[i] = nearest(p, &centers).0;
        }
        let mut movement = 0.0f64;
        for (ci, center) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == ci)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                // Re-seat on the point farthest from its own center.
                let (far_idx, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, nearest(p, std::slice::from_ref(center)).1))
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap();
                movement = movement.max((points[far_idx].clone() - &*center).norm());
                *center = points[far_idx].clone();
                continue;
            }
            let mut mean = DVector::zeros(rows * cols);
            for p in &members {
                mean += *p;
            }
            mean /= members.len() as f64;
            movement = movement.max((&mean - &*center).norm());
            *center = mean;
        }
        if movement < TOL {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignment[i] = nearest(p, &centers).0;
    }
    let centers = centers
        .into_iter()
        .map(|c| DMatrix::from_column_slice(rows, cols, c.as_slice()))
        .collect();
    Ok(Clustering {
        centers,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(fill: f64) -> DMatrix<f64> {
        DMatrix::from_fn(2, 3, |i, j| fill + 0.01 * (i * 3 + j) as f64)
    }

    #[test]
    fn k1_center_is_the_mean() {
        let snaps = vec![matrix(0.0), matrix(1.0), matrix(5.0)];
        let c = cluster_weights(&snaps, 1).unwrap();
        let mean = (&snaps[0] + &snaps[1] + &snaps[2]) / 3.0;
        assert!((&c.centers[0] - mean).norm() < 1e-12);
        assert_eq!(c.assignment, vec![0, 0, 0]);
    }

    #[test]
    fn two_blobs_recovered() {
        let mut snaps = Vec::new();
        for i in 0..8 {
            snaps.push(matrix(0.001 * i as f64));
        }
        for i in 0..8 {
            snaps.push(matrix(10.0 + 0.001 * i as f64));
        }
        let c = cluster_weights(&snaps, 2).unwrap();
        let blob_a = snaps[..8].iter().fold(DMatrix::zeros(2, 3), |acc, m| acc + m) / 8.0;
        let blob_b = snaps[8..].iter().fold(DMatrix::zeros(2, 3), |acc, m| acc + m) / 8.0;
        let mut dists: Vec<f64> = c
            .centers
            .iter()
            .map(|ctr| (ctr - &blob_a).norm().min((ctr - &blob_b).norm()))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(dists[1] < 1e-6, "centers missed blob means: {dists:?}");
        // Members of one blob share an assignment.
        assert!(c.assignment[..8].iter().all(|&a| a == c.assignment[0]));
        assert!(c.assignment[8..].iter().all(|&a| a == c.assignment[8]));
        assert_ne!(c.assignment[0], c.assignment[8]);
    }

    #[test]
    fn fixed_seed_makes_clustering_deterministic() {
        let snaps: Vec<DMatrix<f64>> = (0..20)
            .map(|i| matrix((i as f64 * 1.37).sin() * 3.0))
            .collect();
        let a = cluster_weights(&snaps, 4).unwrap();
        let b = cluster_weights(&snaps, 4).unwrap();
        assert_eq!(a.assignment, b.assignment);
        for (ca, cb) in a.centers.iter().zip(&b.centers) {
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn k_bounds_enforced() {
        let snaps = vec![matrix(0.0), matrix(1.0)];
        assert!(cluster_weights(&snaps, 0).is_err());
        assert!(cluster_weights(&snaps, 3).is_err());
        assert!(cluster_weights(&[], 1).is_err());
    }

    #[test]
    fn duplicate_points_do_not_crash_seeding() {
        let snaps = vec![matrix(2.0); 5];
        let c = cluster_weights(&snaps, 2).unwrap();
        assert_eq!(c.centers.len(), 2);
    }

    #[test]
    fn centers_reshape_to_snapshot_shape() {
        let snaps = vec![matrix(0.0), matrix(3.0), matrix(9.0)];
        let c = cluster_weights(&snaps, 2).unwrap();
        for ctr in &c.centers {
            assert_eq!(ctr.shape(), (2, 3));
        }
    }
}
