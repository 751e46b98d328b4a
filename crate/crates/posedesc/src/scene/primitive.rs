//! Procedural convex primitives standing in for scanned object meshes.
//!
//! Every generator emits a watertight triangle mesh centered at the origin
//! with its largest extent equal to the requested size (tabletop scale,
//! capped at 0.15 m). The seed jitters aspect ratios so two objects of the
//! same kind are not copies of each other.

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_EXTENT_M: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Cone,
    Wedge,
    Capsule,
    /// Box with an off-center pyramid roof (a little house).
    Composite,
}

impl PrimitiveKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "box" => Some(PrimitiveKind::Box),
            "cylinder" => Some(PrimitiveKind::Cylinder),
            "cone" => Some(PrimitiveKind::Cone),
            "wedge" => Some(PrimitiveKind::Wedge),
            "capsule" => Some(PrimitiveKind::Capsule),
            "composite" => Some(PrimitiveKind::Composite),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PrimitiveKind::Box => "box",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Cone => "cone",
            PrimitiveKind::Wedge => "wedge",
            PrimitiveKind::Capsule => "capsule",
            PrimitiveKind::Composite => "composite",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    /// Unit outward vertex normals (area-weighted average of face normals).
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn bounding_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Builds the mesh for `kind` with the given largest extent in meters.
/// Identical (kind, extent, seed) triples produce identical meshes.
pub fn make_primitive(kind: PrimitiveKind, extent_m: f64, seed: u64) -> Result<Mesh> {
    if !extent_m.is_finite() || extent_m <= 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "primitive extent must be positive, got {}",
            extent_m
        )));
    }
    if extent_m > MAX_EXTENT_M {
        return Err(Error::DegenerateGeometry(format!(
            "primitive extent {} exceeds tabletop cap {}",
            extent_m, MAX_EXTENT_M
        )));
    }
    let mut rng = crate::rng::from_mixed(seed);
    let mut jitter = || rng.random_range(0.88..1.12);
    let h = extent_m / 2.0;
    let builder = match kind {
        PrimitiveKind::Box => box_mesh(h, h * 0.72 * jitter(), h * 0.5 * jitter()),
        PrimitiveKind::Cylinder => cylinder_mesh(h * 0.38 * jitter(), h, 24),
        PrimitiveKind::Cone => cone_mesh(h * 0.45 * jitter(), h, 24),
        PrimitiveKind::Wedge => wedge_mesh(h, h * 0.6 * jitter(), h * 0.55 * jitter()),
        PrimitiveKind::Capsule => {
            let r = h * 0.32 * jitter();
            capsule_mesh(r, h - r, 20, 4)
        }
        PrimitiveKind::Composite => {
            house_mesh(h, h * 0.55 * jitter(), h * 0.75 * jitter())
        }
    };
    builder.finish()
}

struct MeshBuilder {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl MeshBuilder {
    fn new() -> Self {
        MeshBuilder {
            vertices: Vec::new(),
            triangles: Vec::new(),
        }
    }

    fn vertex(&mut self, x: f64, y: f64, z: f64) -> usize {
        self.vertices.push(Vector3::new(x, y, z));
        self.vertices.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        self.triangles.push([a, b, c]);
    }

    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.tri(a, b, c);
        self.tri(a, c, d);
    }

    /// Orients every face outward (meshes here are convex and centered),
    /// then computes area-weighted unit vertex normals.
    fn finish(mut self) -> Result<Mesh> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::DegenerateGeometry("empty mesh".into()));
        }
        let centroid: Vector3<f64> =
            self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64;
        for t in &mut self.triangles {
            let [a, b, c] = *t;
            let n = (self.vertices[b] - self.vertices[a])
                .cross(&(self.vertices[c] - self.vertices[a]));
            if n.norm() < 1e-15 {
                return Err(Error::DegenerateGeometry(
                    "zero-area triangle in primitive".into(),
                ));
            }
            let face_center =
                (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0;
            if n.dot(&(face_center - centroid)) < 0.0 {
                t.swap(1, 2);
            }
        }
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for &[a, b, c] in &self.triangles {
            let n = (self.vertices[b] - self.vertices[a])
                .cross(&(self.vertices[c] - self.vertices[a]));
            normals[a] += n;
            normals[b] += n;
            normals[c] += n;
        }
        for n in &mut normals {
            let len = n.norm();
            if len < 1e-15 {
                return Err(Error::DegenerateGeometry(
                    "vertex with degenerate normal".into(),
                ));
            }
            *n /= len;
        }
        Ok(Mesh {
            vertices: self.vertices,
            normals,
            triangles: self.triangles,
        })
    }
}

fn box_corners(b: &mut MeshBuilder, hx: f64, hy: f64, z_lo: f64, z_hi: f64) -> [usize; 8] {
    let mut idx = [0usize; 8];
    for (i, slot) in idx.iter_mut().enumerate() {
        let x = if i & 1 == 0 { -hx } else { hx };
        let y = if i & 2 == 0 { -hy } else { hy };
        let z = if i & 4 == 0 { z_lo } else { z_hi };
        *slot = b.vertex(x, y, z);
    }
    idx
}

fn box_mesh(hx: f64, hy: f64, hz: f64) -> MeshBuilder {
    let mut b = MeshBuilder::new();
    let v = box_corners(&mut b, hx, hy, -hz, hz);
    b.quad(v[0], v[1], v[3], v[2]);
    b.quad(v[4], v[6], v[7], v[5]);
    b.quad(v[0], v[4], v[5], v[1]);
    b.quad(v[2], v[3], v[7], v[6]);
    b.quad(v[0], v[2], v[6], v[4]);
    b.quad(v[1], v[5], v[7], v[3]);
    b
}

fn ring(b: &mut MeshBuilder, radius: f64, z: f64, segments: usize) -> Vec<usize> {
    (0..segments)
        .map(|i| {
            let az = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            b.vertex(radius * az.cos(), radius * az.sin(), z)
        })
        .collect()
}

fn band(b: &mut MeshBuilder, lower: &[usize], upper: &[usize]) {
    let n = lower.len();
    for i in 0..n {
        let j = (i + 1) % n;
        b.quad(lower[i], lower[j], upper[j], upper[i]);
    }
}

fn fan(b: &mut MeshBuilder, center: usize, ring: &[usize]) {
    let n = ring.len();
    for i in 0..n {
        b.tri(center, ring[i], ring[(i + 1) % n]);
    }
}

fn cylinder_mesh(radius: f64, half_h: f64, segments: usize) -> MeshBuilder {
    let mut b = MeshBuilder::new();
    let bottom = ring(&mut b, radius, -half_h, segments);
    let top = ring(&mut b, radius, half_h, segments);
    let bc = b.vertex(0.0, 0.0, -half_h);
    let tc = b.vertex(0.0, 0.0, half_h);
    band(&mut b, &bottom, &top);
    fan(&mut b, bc, &bottom);
    fan(&mut b, tc, &top);
    b
}

fn cone_mesh(radius: f64, half_h: f64, segments: usize) -> MeshBuilder {
    let mut b = MeshBuilder::new();
    let base = ring(&mut b, radius, -half_h, segments);
    let bc = b.vertex(0.0, 0.0, -half_h);
    let apex = b.vertex(0.0, 0.0, half_h);
    fan(&mut b, bc, &base);
    fan(&mut b, apex, &base);
    b
}

fn wedge_mesh(hx: f64, hy: f64, hz: f64) -> MeshBuilder {
    let mut b = MeshBuilder::new();
    let v0 = b.vertex(-hx, -hy, -hz);
    let v1 = b.vertex(hx, -hy, -hz);
    let v2 = b.vertex(-hx, -hy, hz);
    let v3 = b.vertex(-hx, hy, -hz);
    let v4 = b.vertex(hx, hy, -hz);
    let v5 = b.vertex(-hx, hy, hz);
    b.tri(v0, v1, v2);
    b.tri(v3, v5, v4);
    b.quad(v0, v3, v4, v1);
    b.quad(v0, v2, v5, v3);
    b.quad(v1, v4, v5, v2);
    b
}

fn capsule_mesh(radius: f64, half_cyl: f64, segments: usize, cap_rings: usize) -> MeshBuilder {
    let mut b = MeshBuilder::new();
    let bottom_pole = b.vertex(0.0, 0.0, -half_cyl - radius);
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for j in 1..=cap_rings {
        let phi = -std::f64::consts::FRAC_PI_2 * (1.0 - j as f64 / cap_rings as f64);
        rings.push(ring(
            &mut b,
            radius * phi.cos(),
            -half_cyl + radius * phi.sin(),
            segments,
        ));
    }
    for j in 0..cap_rings {
        let phi = std::f64::consts::FRAC_PI_2 * (j as f64 / cap_rings as f64);
        rings.push(ring(
            &mut b,
            radius * phi.cos(),
            half_cyl + radius * phi.sin(),
            segments,
        ));
    }
    let top_pole = b.vertex(0.0, 0.0, half_cyl + radius);
    fan(&mut b, bottom_pole, &rings[0]);
    for pair in rings.windows(2) {
        band(&mut b, &pair[0], &pair[1]);
    }
    fan(&mut b, top_pole, rings.last().unwrap());
    b
}

fn house_mesh(hx: f64, hy: f64, hz: f64) -> MeshBuilder {
    let mut b = MeshBuilder::new();
    let z_top = hz * 0.3;
    let v = box_corners(&mut b, hx, hy, -hz, z_top);
    // Off-center apex keeps the silhouette asymmetric under half turns.
    let apex = b.vertex(0.3 * hx, 0.0, hz);
    b.quad(v[0], v[1], v[3], v[2]);
    b.quad(v[0], v[4], v[5], v[1]);
    b.quad(v[2], v[3], v[7], v[6]);
    b.quad(v[0], v[2], v[6], v[4]);
    b.quad(v[1], v[5], v[7], v[3]);
    b.tri(v[4], v[5], apex);
    b.tri(v[5], v[7], apex);
    b.tri(v[7], v[6], apex);
    b.tri(v[6], v[4], apex);
    b
}

pub const ALL_KINDS: [PrimitiveKind; 6] = [
    PrimitiveKind::Box,
    PrimitiveKind::Cylinder,
    PrimitiveKind::Cone,
    PrimitiveKind::Wedge,
    PrimitiveKind::Capsule,
    PrimitiveKind::Composite,
];
