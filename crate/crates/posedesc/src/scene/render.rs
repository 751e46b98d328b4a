//! Software z-buffer rasterizer with a pinhole camera.
//!
//! The camera sits at `distance * view_vector(pose)` and looks at the
//! origin; depth is the camera-space z coordinate in meters (not ray
//! length), interpolated perspective-correctly (1/z). Each pixel carries
//! the winning triangle's face normal: the primitives are genuinely
//! polyhedral, so flat shading is the exact Lambertian response of the
//! geometry.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::primitive::Mesh;
use crate::scene::{Image, Mask, Pose};

#[derive(Clone, Copy, Debug)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Frames a `window_m`-wide plane at the object center distance onto the
    /// full patch, with the object center projecting to the patch center.
    pub fn framing(resolution: usize, distance_m: f64, window_m: f64) -> Self {
        let f = resolution as f64 * distance_m / window_m;
        Intrinsics {
            fx: f,
            fy: f,
            cx: resolution as f64 / 2.0,
            cy: resolution as f64 / 2.0,
        }
    }
}

pub struct Camera {
    pub position: Vector3<f64>,
    pub right: Vector3<f64>,
    pub up: Vector3<f64>,
    pub forward: Vector3<f64>,
}

impl Camera {
    /// Look-at-origin camera; world +z is the up hint, falling back to +x
    /// for the straight-down zenith view.
    pub fn from_pose(pose: &Pose) -> Camera {
        let view = pose.view_vector();
        let position = view * pose.distance_m;
        let forward = -view;
        let up_hint = if forward.z.abs() > 0.999_999 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let right = forward.cross(&up_hint).normalize();
        let up = right.cross(&forward);
        Camera {
            position,
            right,
            up,
            forward,
        }
    }

    /// World direction of the ray through pixel coordinates (u, v).
    pub fn ray_direction(&self, intr: &Intrinsics, u: f64, v: f64) -> Vector3<f64> {
        (self.right * ((u - intr.cx) / intr.fx) + self.up * ((intr.cy - v) / intr.fy)
            + self.forward)
            .normalize()
    }
}

struct Raster {
    depth: Vec<f64>,
    valid: Vec<bool>,
    normals: Vec<Vector3<f64>>,
}

fn rasterize(
    mesh: &Mesh,
    pose: &Pose,
    resolution: usize,
    intr: &Intrinsics,
) -> Result<Raster> {
    if mesh.triangles.is_empty() {
        return Err(Error::DegenerateGeometry("mesh has no triangles".into()));
    }
    if pose.distance_m <= mesh.bounding_radius() {
        return Err(Error::InvalidArgument(format!(
            "camera distance {} is inside the mesh bounding sphere (radius {})",
            pose.distance_m,
            mesh.bounding_radius()
        )));
    }
    let cam = Camera::from_pose(pose);
    let res = resolution;
    let mut out = Raster {
        depth: vec![f64::INFINITY; res * res],
        valid: vec![false; res * res],
        normals: vec![Vector3::zeros(); res * res],
    };

    // Per-vertex screen coordinates and camera-space depth.
    let mut screen = Vec::with_capacity(mesh.vertices.len());
    for v in &mesh.vertices {
        let rel = v - cam.position;
        let z = rel.dot(&cam.forward);
        let u = intr.fx * rel.dot(&cam.right) / z + intr.cx;
        let sv = intr.cy - intr.fy * rel.dot(&cam.up) / z;
        screen.push((u, sv, z));
    }

    for &[ia, ib, ic] in &mesh.triangles {
        let (ax, ay, az) = screen[ia];
        let (bx, by, bz) = screen[ib];
        let (cx_, cy_, cz) = screen[ic];
        if az <= 1e-9 || bz <= 1e-9 || cz <= 1e-9 {
            continue;
        }
        let mut area = (bx - ax) * (cy_ - ay) - (by - ay) * (cx_ - ax);
        if area.abs() < 1e-12 {
            continue;
        }
        let sign = if area < 0.0 {
            area = -area;
            -1.0
        } else {
            1.0
        };
        let min_x = ax.min(bx).min(cx_);
        let max_x = ax.max(bx).max(cx_);
        let min_y = ay.min(by).min(cy_);
        let max_y = ay.max(by).max(cy_);
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let x1 = ((max_x - 0.5).floor()).min(res as f64 - 1.0);
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
        let y1 = ((max_y - 0.5).floor()).min(res as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 || min_x > res as f64 || min_y > res as f64 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let (inv_az, inv_bz, inv_cz) = (1.0 / az, 1.0 / bz, 1.0 / cz);
        let face_normal = (mesh.vertices[ib] - mesh.vertices[ia])
            .cross(&(mesh.vertices[ic] - mesh.vertices[ia]))
            .normalize();
        for py in y0..=y1 {
            let y = py as f64 + 0.5;
            for px in x0..=x1 {
                let x = px as f64 + 0.5;
                let wa = sign * ((cx_ - bx) * (y - by) - (cy_ - by) * (x - bx));
                let wb = sign * ((ax - cx_) * (y - cy_) - (ay - cy_) * (x - cx_));
                let wc = sign * ((bx - ax) * (y - ay) - (by - ay) * (x - ax));
                if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                    continue;
                }
                let (ba, bb, bc) = (wa / area, wb / area, wc / area);
                let inv_z = ba * inv_az + bb * inv_bz + bc * inv_cz;
                let z = 1.0 / inv_z;
                let idx = py * res + px;
                if z < out.depth[idx] {
                    out.depth[idx] = z;
                    out.valid[idx] = true;
                    out.normals[idx] = face_normal;
                }
            }
        }
    }
    Ok(out)
}

/// Depth in meters plus the coverage mask; background pixels are invalid and
/// hold 0.
pub fn render_depth(
    mesh: &Mesh,
    pose: &Pose,
    resolution: usize,
    intr: &Intrinsics,
) -> Result<(Image, Mask)> {
    let raster = rasterize(mesh, pose, resolution, intr)?;
    let mut depth = Image::new(resolution, resolution);
    let mut mask = Mask::new_invalid(resolution, resolution);
    for (i, (&z, &v)) in raster.depth.iter().zip(&raster.valid).enumerate() {
        if v {
            depth.pixels[i] = z as f32;
            mask.valid[i] = true;
        }
    }
    Ok((depth, mask))
}

/// Lambertian intensity max(0, n·l) per covered pixel, 0 on background.
/// `light_dir` points from the surface toward the light.
pub fn render_shaded(
    mesh: &Mesh,
    pose: &Pose,
    resolution: usize,
    intr: &Intrinsics,
    light_dir: &Vector3<f64>,
) -> Result<(Image, Mask)> {
    if light_dir.norm() < 1e-12 {
        return Err(Error::InvalidArgument("zero light direction".into()));
    }
    let light = light_dir.normalize();
    let raster = rasterize(mesh, pose, resolution, intr)?;
    let mut shade = Image::new(resolution, resolution);
    let mut mask = Mask::new_invalid(resolution, resolution);
    for (i, &v) in raster.valid.iter().enumerate() {
        if v {
            shade.pixels[i] = raster.normals[i].dot(&light).max(0.0) as f32;
            mask.valid[i] = true;
        }
    }
    Ok((shade, mask))
}

/// Per-pixel cosine between the surface normal and the direction back to the
/// camera, for covered pixels; used to simulate sensor dropout at grazing
/// incidence.
pub fn render_incidence(
    mesh: &Mesh,
    pose: &Pose,
    resolution: usize,
    intr: &Intrinsics,
) -> Result<(Vec<f64>, Mask)> {
    let cam = Camera::from_pose(pose);
    let raster = rasterize(mesh, pose, resolution, intr)?;
    let mut cosines = vec![0.0f64; resolution * resolution];
    let mut mask = Mask::new_invalid(resolution, resolution);
    for i in 0..raster.valid.len() {
        if raster.valid[i] {
            let (px, py) = (i % resolution, i / resolution);
            let ray = cam.ray_direction(intr, px as f64 + 0.5, py as f64 + 0.5);
            cosines[i] = raster.normals[i].dot(&-ray);
            mask.valid[i] = true;
        }
    }
    Ok((cosines, mask))
}
