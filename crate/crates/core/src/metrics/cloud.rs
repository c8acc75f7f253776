//! Point-cloud metrics: Chamfer distance, MMD/COV and JSD.

use rayon::prelude::*;

use super::MetricsError;
use crate::geometry::Vec3;

pub const DEFAULT_JSD_GRID: usize = 28;
/// Clouds at least this large are searched through a kd-tree.
pub const KDTREE_THRESHOLD: usize = 1000;

fn sq_dist(a: Vec3, b: Vec3) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

/// Static 3-d tree over a borrowed cloud, for exact nearest squared distance.
struct KdTree<'a> {
    points: &'a [Vec3],
    /// Permutation of point indices laid out as an implicit balanced tree.
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        Self::build(points, &mut order, 0);
        Self { points, order }
    }

    fn build(points: &[Vec3], idx: &mut [usize], depth: usize) {
        if idx.len() <= 1 {
            return;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let (left, right) = idx.split_at_mut(mid);
        Self::build(points, left, depth + 1);
        Self::build(points, &mut right[1..], depth + 1);
    }

    fn nearest_sq(&self, q: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.order, 0, q, &mut best);
        best
    }

    fn search(&self, idx: &[usize], depth: usize, q: Vec3, best: &mut f64) {
        if idx.is_empty() {
            return;
        }
        let mid = idx.len() / 2;
        let p = self.points[idx[mid]];
        let d = sq_dist(q, p);
        if d < *best {
            *best = d;
        }
        let axis = depth % 3;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (&idx[..mid], &idx[mid + 1..])
        } else {
            (&idx[mid + 1..], &idx[..mid])
        };
        self.search(near, depth + 1, q, best);
        if delta * delta <= *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

/// Nearest squared distance from every point of `from` to `to`.
fn nearest_all(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    if to.len() >= KDTREE_THRESHOLD {
        let tree = KdTree::new(to);
        from.par_iter().map(|&p| tree.nearest_sq(p)).collect()
    } else {
        from.par_iter()
            .map(|&p| to.iter().map(|&q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean nearest squared distance from P to Q plus the same from Q to P.
pub fn chamfer(p: &[Vec3], q: &[Vec3]) -> Result<f64, MetricsError> {
    if p.is_empty() || q.is_empty() {
        return Err(MetricsError::Empty("point cloud"));
    }
    Ok(mean(&nearest_all(p, q)) + mean(&nearest_all(q, p)))
}

/// `matrix[g][r]` = CD(generated g, reference r).
pub fn chamfer_matrix(generated: &[Vec<Vec3>], reference: &[Vec<Vec3>]) -> Result<Vec<Vec<f64>>, MetricsError> {
    if generated.iter().chain(reference).any(Vec::is_empty) {
        return Err(MetricsError::Empty("point cloud"));
    }
    let cells: Vec<f64> = (0..generated.len() * reference.len())
        .into_par_iter()
        .map(|n| {
            let (g, r) = (n / reference.len(), n % reference.len());
            chamfer(&generated[g], &reference[r]).expect("non-empty clouds")
        })
        .collect();
    Ok(cells.chunks(reference.len().max(1)).map(<[f64]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdCov {
    pub mmd: f64,
    pub cov: f64,
}

/// MMD: mean over references of the closest generated cloud's CD.
/// COV: share of references that are the nearest reference of some
/// generated cloud (first index wins ties).
pub fn mmd_cov(generated: &[Vec<Vec3>], reference: &[Vec<Vec3>]) -> Result<MmdCov, MetricsError> {
    if generated.is_empty() || reference.is_empty() {
        return Err(MetricsError::Empty("cloud set"));
    }
    let m = chamfer_matrix(generated, reference)?;
    let mins: Vec<f64> = (0..reference.len())
        .map(|r| m.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut covered = vec![false; reference.len()];
    for row in &m {
        let mut best = 0;
        for (r, &d) in row.iter().enumerate() {
            if d < row[best] {
                best = r;
            }
        }
        covered[best] = true;
    }
    Ok(MmdCov {
        mmd: mean(&mins),
        cov: covered.iter().filter(|&&c| c).count() as f64 / reference.len() as f64,
    })
}

fn histogram(clouds: &[Vec<Vec3>], lo: Vec3, hi: Vec3, grid: usize) -> Vec<f64> {
    let mut counts = vec![0u64; grid * grid * grid];
    let bin = |v: f64, a: usize| {
        let span = hi[a] - lo[a];
        if span <= 0.0 {
            0
        } else {
            (((v - lo[a]) / span * grid as f64) as usize).min(grid - 1)
        }
    };
    for p in clouds.iter().flatten() {
        counts[(bin(p[2], 2) * grid + bin(p[1], 1)) * grid + bin(p[0], 0)] += 1;
    }
    let total = counts.iter().sum::<u64>() as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// Jensen-Shannon divergence (base 2) between the occupancy histograms of
/// the two sets on a `grid`³ lattice over their joint bounding box.
pub fn jsd(generated: &[Vec<Vec3>], reference: &[Vec<Vec3>], grid: usize) -> Result<f64, MetricsError> {
    let all = || generated.iter().chain(reference).flatten();
    if grid == 0 || generated.iter().all(Vec::is_empty) || reference.iter().all(Vec::is_empty) {
        return Err(MetricsError::Empty("cloud set"));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in all() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let p = histogram(generated, lo, hi, grid);
    let q = histogram(reference, lo, hi, grid);
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&a, &b) in p.iter().zip(&q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            kl_p += a * (a / m).log2();
        }
        if b > 0.0 {
            kl_q += b * (b / m).log2();
        }
    }
    Ok((0.5 * (kl_p + kl_q)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
    }

    #[test]
    fn chamfer_examples() {
        let p = vec![[0.0, 0.0, 0.0]];
        let q = vec![[1.0, 0.0, 0.0]];
        assert_eq!(chamfer(&p, &q).unwrap(), 2.0);
        assert_eq!(chamfer(&p, &p).unwrap(), 0.0);
        assert!(matches!(chamfer(&p, &[]), Err(MetricsError::Empty(_))));
    }

    #[test]
    fn kdtree_matches_linear_scan_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let to = cloud(&mut rng, 2500);
        let from = cloud(&mut rng, 300);
        let tree = KdTree::new(&to);
        for &p in &from {
            let linear = to.iter().map(|&q| sq_dist(p, q)).fold(f64::INFINITY, f64::min);
            assert_eq!(tree.nearest_sq(p).to_bits(), linear.to_bits());
        }
    }

    #[test]
    fn mmd_cov_two_references_one_generated() {
        let g = vec![vec![[0.0, 0.0, 0.0]]];
        let r = vec![vec![[1.0, 0.0, 0.0]], vec![[0.0, 2.0, 0.0]]];
        let out = mmd_cov(&g, &r).unwrap();
        assert_eq!(out.cov, 0.5);
        assert_eq!(out.mmd, (2.0 + 8.0) / 2.0);
    }

    #[test]
    fn jsd_examples() {
        let a = vec![vec![[0.0, 0.0, 0.0]]];
        let b = vec![vec![[1.0, 1.0, 1.0]]];
        assert_eq!(jsd(&a, &b, 28).unwrap(), 1.0);
        assert_eq!(jsd(&a, &a, 28).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = vec![cloud(&mut rng, 100)];
        let y = vec![cloud(&mut rng, 50)];
        let v = jsd(&x, &y, 28).unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert!((v - jsd(&y, &x, 28).unwrap()).abs() < 1e-12);
    }
}
