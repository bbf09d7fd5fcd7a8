//! Small nearest-neighbor helpers over point slices. A uniform voxel hash
//! keeps ICP correspondence search out of the O(n·m) regime without pulling
//! in a spatial-index dependency.

use nalgebra::Vector3;
use std::collections::HashMap;

/// Voxel-bucketed index for nearest-within-cutoff queries. The cell size
/// should be on the order of the query cutoff; queries scan the 3x3x3
/// neighborhood around the query cell and fall back to a full scan when
/// nothing is found there.
pub(crate) struct VoxelIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl<'a> VoxelIndex<'a> {
    pub fn build(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let cell = if cell.is_finite() && cell > 1e-9 { cell } else { 1e-3 };
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self {
            points,
            cell,
            buckets,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Index and squared distance of the nearest point within `cutoff`
    /// of `q`, or `None`. Ties break toward the lowest index.
    pub fn nearest_within(&self, q: &Vector3<f64>, cutoff: f64) -> Option<(usize, f64)> {
        let cutoff_sq = cutoff * cutoff;
        let reach = (cutoff / self.cell).ceil() as i64;
        // Limit the neighborhood scan; beyond 2 cells a brute-force pass
        // over the buckets in range is cheaper than hashing thousands of keys.
        if reach <= 2 {
            let (kx, ky, kz) = Self::key(q, self.cell);
            let mut best: Option<(usize, f64)> = None;
            for dx in -reach..=reach {
                for dy in -reach..=reach {
                    for dz in -reach..=reach {
                        if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &i in ids {
                                let d = (self.points[i as usize] - q).norm_squared();
                                if d <= cutoff_sq && best.map_or(true, |(bi, bd)| d < bd || (d == bd && (i as usize) < bi)) {
                                    best = Some((i as usize, d));
                                }
                            }
                        }
                    }
                }
            }
            best
        } else {
            nearest_brute(self.points, q).filter(|(_, d)| *d <= cutoff_sq)
        }
    }
}

/// Index and squared distance of the globally nearest point.
pub(crate) fn nearest_brute(points: &[Vector3<f64>], q: &Vector3<f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = (p - q).norm_squared();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Indices of the k nearest neighbors of `points[query]`, excluding the
/// query point itself. Brute force; intended for clouds of a few thousand
/// points.
pub(crate) fn k_nearest(points: &[Vector3<f64>], query: usize, k: usize) -> Vec<usize> {
    let q = points[query];
    let mut dists: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != query)
        .map(|(i, p)| ((p - q).norm_squared(), i))
        .collect();
    let k = k.min(dists.len());
    if k == 0 {
        return Vec::new();
    }
    dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    dists.truncate(k);
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists.into_iter().map(|(_, i)| i).collect()
}
