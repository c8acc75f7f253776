use std::io::{self, BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::frame::Vec3;
use super::voxel::VoxelSolid;
use super::GeometryError;

pub const DEFAULT_SAMPLE_COUNT: usize = 2000;

pub type PointCloud = Vec<Vec3>;

/// `n` points drawn uniformly (with replacement) from the boundary voxels,
/// each jittered uniformly inside its voxel.
pub fn sample_surface_points(
    solid: &VoxelSolid,
    n: usize,
    seed: u64,
) -> Result<PointCloud, GeometryError> {
    let boundary = solid.boundary_indices();
    if boundary.is_empty() {
        return Err(GeometryError::EmptySolid);
    }
    let h = solid.voxel_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let idx = boundary[rng.random_range(0..boundary.len())];
            let [i, j, k] = solid.coords(idx);
            let c = solid.center(i, j, k);
            c.map(|x| x + (rng.random::<f64>() - 0.5) * h)
        })
        .collect())
}

/// Point cloud file encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// One `x y z` line per point.
    Xyz,
    /// Little-endian f32 triples.
    Binary,
}

pub fn write_cloud<W: Write>(mut out: W, cloud: &[Vec3], format: CloudFormat) -> io::Result<()> {
    match format {
        CloudFormat::Xyz => {
            for p in cloud {
                writeln!(out, "{:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
            }
        }
        CloudFormat::Binary => {
            for p in cloud {
                for c in p {
                    out.write_all(&(*c as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_cloud<R: Read>(input: R, format: CloudFormat) -> io::Result<PointCloud> {
    let invalid = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    match format {
        CloudFormat::Xyz => {
            let mut cloud = Vec::new();
            for (n, line) in io::BufReader::new(input).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
                match vals[..] {
                    [x, y, z] => cloud.push([x, y, z]),
                    _ => return Err(invalid(format!("line {}: expected 3 values", n + 1))),
                }
            }
            Ok(cloud)
        }
        CloudFormat::Binary => {
            let mut bytes = Vec::new();
            let mut input = input;
            input.read_to_end(&mut bytes)?;
            if bytes.len() % 12 != 0 {
                return Err(invalid(format!("{} bytes is not a multiple of 12", bytes.len())));
            }
            Ok(bytes
                .chunks_exact(12)
                .map(|c| {
                    std::array::from_fn(|a| {
                        f64::from(f32::from_le_bytes(c[4 * a..4 * a + 4].try_into().unwrap()))
                    })
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::{evaluate_model, Prism};

    #[test]
    fn exact_count_within_bounds_and_deterministic() {
        let solid = evaluate_model(&fixtures::plate_with_cut_hole("p"), 32);
        let a = sample_surface_points(&solid, 500, 7).unwrap();
        let b = sample_surface_points(&solid, 500, 7).unwrap();
        let c = sample_surface_points(&solid, 500, 8).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|p| solid.bounds.contains(*p)));
    }

    #[test]
    fn cube_samples_hug_the_faces() {
        let model = fixtures::unit_cube("c");
        let solid = evaluate_model(&model, 40);
        // Faces need not align with the grid: a boundary voxel centre sits
        // up to one voxel inside, plus half a voxel of jitter.
        let h = 1.5 * solid.voxel_size();
        let corners = Prism::new(&model.pairs[0]).corners().unwrap();
        let lo: [f64; 3] = std::array::from_fn(|a| corners.iter().map(|c| c[a]).fold(f64::INFINITY, f64::min));
        let hi: [f64; 3] = std::array::from_fn(|a| corners.iter().map(|c| c[a]).fold(f64::NEG_INFINITY, f64::max));
        for p in sample_surface_points(&solid, 2000, 1).unwrap() {
            let near_face = (0..3).any(|a| (p[a] - lo[a]).abs() <= h || (p[a] - hi[a]).abs() <= h);
            let inside_slab = (0..3).all(|a| p[a] >= lo[a] - h && p[a] <= hi[a] + h);
            assert!(near_face && inside_slab, "{p:?}");
        }
    }

    #[test]
    fn empty_solid_is_an_error() {
        let solid = evaluate_model(&fixtures::cube_intersect_disjoint("d"), 16);
        assert_eq!(sample_surface_points(&solid, 10, 0), Err(GeometryError::EmptySolid));
    }

    #[test]
    fn cloud_io_round_trip() {
        let cloud = vec![[0.5, -1.25, 2.0], [0.0, 0.0, 1.0]];
        for format in [CloudFormat::Xyz, CloudFormat::Binary] {
            let mut buf = Vec::new();
            write_cloud(&mut buf, &cloud, format).unwrap();
            assert_eq!(read_cloud(&buf[..], format).unwrap(), cloud);
        }
        assert_eq!(
            {
                let mut b = Vec::new();
                write_cloud(&mut b, &cloud[..1], CloudFormat::Binary).unwrap();
                b
            },
            [0.5f32, -1.25, 2.0]
                .iter()
                .flat_map(|f| f.to_le_bytes())
                .collect::<Vec<_>>()
        );
        assert!(read_cloud(&[0u8; 5][..], CloudFormat::Binary).is_err());
    }
}
