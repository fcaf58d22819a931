use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{shoelace, MeshError, PolyMesh};
use crate::Vec2;

fn grid_vertices(n: usize) -> Vec<Vec2> {
    let h = 1.0 / n as f64;
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push(Vec2::new(i as f64 * h, j as f64 * h));
        }
    }
    v
}

/// `n x n` axis-aligned squares tiling the unit square.
pub fn build_structured_quad(n: usize) -> PolyMesh {
    assert!(n >= 1, "n must be positive");
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    PolyMesh::new(grid_vertices(n), cells).expect("structured grid is valid")
}

/// Each square of the `n x n` grid split along its lower-left to upper-right diagonal.
pub fn build_triangular(n: usize) -> PolyMesh {
    assert!(n >= 1, "n must be positive");
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            cells.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    PolyMesh::new(grid_vertices(n), cells).expect("structured grid is valid")
}

/// Moves every interior vertex by a uniform random offset in
/// `[-amplitude, amplitude]^2`, deterministically from `seed`. Boundary
/// vertices are left in place. Tags are preserved.
pub fn distort_quad(mesh: &PolyMesh, amplitude: f64, seed: u64) -> Result<PolyMesh, MeshError> {
    let mut on_boundary = vec![false; mesh.num_vertices()];
    for e in mesh.boundary_edges() {
        on_boundary[mesh.edges[e].a] = true;
        on_boundary[mesh.edges[e].b] = true;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = mesh.clone();
    if amplitude != 0.0 {
        for (v, p) in out.vertices.iter_mut().enumerate() {
            // draw for every vertex so the sequence does not depend on the boundary layout
            let dx: f64 = rng.gen_range(-1.0..=1.0);
            let dy: f64 = rng.gen_range(-1.0..=1.0);
            if !on_boundary[v] {
                *p += Vec2::new(dx, dy) * amplitude;
            }
        }
    }
    let limit = 0.5 * mesh.h() / 2f64.sqrt();
    for c in 0..out.num_cells() {
        let area = shoelace(&out.cell_points(c));
        if area <= 0.0 {
            return Err(MeshError::Inverted { amplitude, limit });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn total_area(m: &PolyMesh) -> f64 {
        (0..m.num_cells()).map(|c| shoelace(&m.cell_points(c))).sum()
    }

    #[test]
    fn single_square() {
        let m = build_structured_quad(1);
        assert_eq!(m.num_cells(), 1);
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.boundary_edges().count(), 4);
    }

    #[test]
    fn two_by_two() {
        let m = build_structured_quad(2);
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.num_vertices(), 9);
        assert_relative_eq!(total_area(&m), 1.0, epsilon = 1e-15);
        m.validate().unwrap();
    }

    #[test]
    fn mesh_size_of_ten_by_ten() {
        assert_relative_eq!(build_structured_quad(10).h(), 2f64.sqrt() / 10.0, epsilon = 1e-15);
    }

    #[test]
    fn triangular_single() {
        let m = build_triangular(1);
        assert_eq!(m.num_cells(), 2);
        assert_relative_eq!(total_area(&m), 1.0, epsilon = 1e-15);
        m.validate().unwrap();
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let m = build_structured_quad(4);
        assert_eq!(distort_quad(&m, 0.0, 11).unwrap(), m);
    }

    #[test]
    fn distortion_seed_seven() {
        let m = distort_quad(&build_structured_quad(4), 0.1, 7).unwrap();
        m.validate().unwrap();
        assert!((total_area(&m) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn distortion_is_deterministic() {
        let m = build_structured_quad(6);
        assert_eq!(distort_quad(&m, 0.05, 42).unwrap(), distort_quad(&m, 0.05, 42).unwrap());
        assert_ne!(distort_quad(&m, 0.05, 42).unwrap(), distort_quad(&m, 0.05, 43).unwrap());
    }

    #[test]
    fn excessive_amplitude_rejected() {
        let m = build_structured_quad(4);
        let any_fail = (0..20).any(|s| distort_quad(&m, 0.6, s).is_err());
        assert!(any_fail);
    }

    proptest! {
        #[test]
        fn random_distortions_stay_valid(n in 2usize..8, frac in 0.0f64..0.49, seed in 0u64..1000) {
            let amplitude = frac * 0.5 / n as f64;
            let m = distort_quad(&build_structured_quad(n), amplitude, seed).unwrap();
            prop_assert!(m.validate().is_ok());
            prop_assert!((total_area(&m) - 1.0).abs() < 1e-12);
        }
    }
}
