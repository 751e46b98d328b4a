//! Icosphere viewpoint lattice.
//!
//! The base icosahedron is pole-aligned: one vertex at +z, one at -z, and
//! two five-vertex rings at z = ±1/sqrt(5). This orientation is part of the
//! dataset contract — it decides which subdivided vertices land exactly on
//! the equator and therefore how many poses the hemisphere keeps.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::scene::Pose;

/// Deduplicated unit vertices of the `level`-times subdivided icosahedron.
/// Count is 10 * 4^level + 2.
pub fn icosphere_vertices(level: u32) -> Vec<Vector3<f64>> {
    let (vertices, _) = icosphere_mesh(level);
    vertices
}

/// Vertices plus triangle indices, for callers that need the mesh itself
/// (e.g. the sphere used by the renderer oracle).
pub fn icosphere_mesh(level: u32) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    assert!(level <= 5, "subdivision level {} beyond practical bound", level);
    let z = 1.0 / 5.0f64.sqrt();
    let r = 2.0 / 5.0f64.sqrt();
    let mut vertices: Vec<Vector3<f64>> = Vec::with_capacity(12);
    vertices.push(Vector3::new(0.0, 0.0, 1.0));
    for i in 0..5 {
        let az = (72.0 * i as f64).to_radians();
        vertices.push(Vector3::new(r * az.cos(), r * az.sin(), z));
    }
    for i in 0..5 {
        let az = (72.0 * i as f64 + 36.0).to_radians();
        vertices.push(Vector3::new(r * az.cos(), r * az.sin(), -z));
    }
    vertices.push(Vector3::new(0.0, 0.0, -1.0));

    let upper = |i: usize| 1 + i % 5;
    let lower = |i: usize| 6 + i % 5;
    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(20);
    for i in 0..5 {
        triangles.push([0, upper(i), upper(i + 1)]);
        triangles.push([upper(i), lower(i), upper(i + 1)]);
        triangles.push([upper(i + 1), lower(i), lower(i + 1)]);
        triangles.push([11, lower(i + 1), lower(i)]);
    }

    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(&mut vertices, &mut midpoints, a, b);
            let bc = midpoint(&mut vertices, &mut midpoints, b, c);
            let ca = midpoint(&mut vertices, &mut midpoints, c, a);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    (vertices, triangles)
}

fn midpoint(
    vertices: &mut Vec<Vector3<f64>>,
    cache: &mut HashMap<(usize, usize), usize>,
    a: usize,
    b: usize,
) -> usize {
    let key = (a.min(b), a.max(b));
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let m = (vertices[a] + vertices[b]).normalize();
    vertices.push(m);
    let idx = vertices.len() - 1;
    cache.insert(key, idx);
    idx
}

/// Icosphere vertices on the upper half-sphere (z >= -1e-9, so the equator
/// ring is kept), as poses sorted by elevation then azimuth.
pub fn hemisphere_poses(level: u32, distance_m: f64) -> Vec<Pose> {
    let mut poses: Vec<Pose> = icosphere_vertices(level)
        .into_iter()
        .filter(|v| v.z >= -1e-9)
        .map(|v| vertex_to_pose(&v, distance_m))
        .collect();
    poses.sort_by(|a, b| {
        a.elevation_deg
            .total_cmp(&b.elevation_deg)
            .then(a.azimuth_deg.total_cmp(&b.azimuth_deg))
    });
    poses
}

fn vertex_to_pose(v: &Vector3<f64>, distance_m: f64) -> Pose {
    if v.z >= 1.0 - 1e-12 {
        // Zenith convention: azimuth 0, elevation exactly 90.
        return Pose {
            azimuth_deg: 0.0,
            elevation_deg: 90.0,
            distance_m,
        };
    }
    let mut azimuth = v.y.atan2(v.x) / std::f64::consts::PI * 180.0;
    if azimuth < 0.0 {
        azimuth += 360.0;
    }
    if azimuth >= 360.0 {
        azimuth = 0.0;
    }
    let elevation = (v.z.clamp(-1.0, 1.0).asin() / std::f64::consts::PI * 180.0).max(0.0);
    Pose {
        azimuth_deg: azimuth,
        elevation_deg: elevation,
        distance_m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_counts_follow_subdivision_law() {
        for (level, expected) in [(0u32, 12usize), (1, 42), (2, 162), (3, 642)] {
            assert_eq!(icosphere_vertices(level).len(), expected, "level {}", level);
        }
    }

    #[test]
    fn vertices_are_unit_length() {
        for v in icosphere_vertices(3) {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vertices_are_distinct() {
        let vs = icosphere_vertices(2);
        for (i, a) in vs.iter().enumerate() {
            for b in vs.iter().skip(i + 1) {
                assert!((a - b).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn mesh_is_closed() {
        // Every edge is shared by exactly two triangles.
        let (_, triangles) = icosphere_mesh(1);
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }

    #[test]
    fn hemisphere_counts_are_frozen() {
        // Pole-aligned orientation: strictly-below vertices mirror
        // strictly-above ones, equator rings stay. Counts enumerated once
        // and frozen.
        for (level, expected) in [(0u32, 6usize), (1, 26), (2, 91), (3, 341)] {
            assert_eq!(
                hemisphere_poses(level, 0.6).len(),
                expected,
                "level {}",
                level
            );
        }
    }

    #[test]
    fn hemisphere_poses_stay_in_range_and_sorted() {
        let poses = hemisphere_poses(2, 0.6);
        for w in poses.windows(2) {
            let key = |p: &Pose| (p.elevation_deg, p.azimuth_deg);
            assert!(key(&w[0]) <= key(&w[1]));
        }
        for p in &poses {
            assert!((0.0..360.0).contains(&p.azimuth_deg));
            assert!((0.0..=90.0).contains(&p.elevation_deg));
            assert_eq!(p.distance_m, 0.6);
        }
    }

    #[test]
    fn zenith_pose_uses_convention() {
        let poses = hemisphere_poses(0, 0.6);
        let top = poses.last().unwrap();
        assert_eq!(top.elevation_deg, 90.0);
        assert_eq!(top.azimuth_deg, 0.0);
    }

    #[test]
    fn poses_round_trip_through_view_vectors() {
        for pose in hemisphere_poses(2, 1.0) {
            let v = pose.view_vector();
            let back = vertex_to_pose(&v, 1.0);
            let angle = crate::scene::pose_angle(&pose, &back, crate::scene::SymmetryClass::None);
            assert!(angle < 1e-6, "pose {:?} round-tripped to {:?}", pose, back);
        }
    }
}
