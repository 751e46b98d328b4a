//! Viewpoints, procedural objects, rendering and dataset construction.

pub mod dataset;
pub mod filters;
pub mod icosphere;
pub mod noise;
pub mod primitive;
pub mod render;

use nalgebra::Vector3;

/// Single-channel image, row-major with the origin at the top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }
}

/// Per-pixel validity; `true` marks pixels covered by the object (or, after
/// inpainting decisions, pixels holding trustworthy depth).
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub valid: Vec<bool>,
}

impl Mask {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            valid: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.valid[y * self.width + x] = v;
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Camera viewpoint on the upper half-sphere, looking at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    /// Degrees in [0, 360).
    pub azimuth_deg: f64,
    /// Degrees in [0, 90].
    pub elevation_deg: f64,
    /// Camera distance from the object center, meters.
    pub distance_m: f64,
}

impl Pose {
    /// Unit vector from the object center toward the camera.
    pub fn view_vector(&self) -> Vector3<f64> {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// How an object's appearance repeats under rotation about the z-axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetryClass {
    None,
    /// A 180 degree turn shows the same pose again.
    Symmetric180,
    /// Appearance depends on elevation only.
    RotationInvariant,
}

impl SymmetryClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(SymmetryClass::None),
            "symmetric180" => Some(SymmetryClass::Symmetric180),
            "rotationInvariant" => Some(SymmetryClass::RotationInvariant),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SymmetryClass::None => "none",
            SymmetryClass::Symmetric180 => "symmetric180",
            SymmetryClass::RotationInvariant => "rotationInvariant",
        }
    }
}

/// Angle in degrees between two viewpoints, collapsing whatever the symmetry
/// class makes indistinguishable.
pub fn pose_angle(p1: &Pose, p2: &Pose, sym: SymmetryClass) -> f64 {
    match sym {
        SymmetryClass::None => view_angle(p1, p2),
        SymmetryClass::RotationInvariant => (p1.elevation_deg - p2.elevation_deg).abs(),
        SymmetryClass::Symmetric180 => {
            let mut az = p2.azimuth_deg + 180.0;
            if az >= 360.0 {
                az -= 360.0;
            }
            let turned = Pose {
                azimuth_deg: az,
                ..*p2
            };
            view_angle(p1, p2).min(view_angle(p1, &turned))
        }
    }
}

fn view_angle(p1: &Pose, p2: &Pose) -> f64 {
    if p1.azimuth_deg == p2.azimuth_deg && p1.elevation_deg == p2.elevation_deg {
        return 0.0;
    }
    let dot = p1.view_vector().dot(&p2.view_vector()).clamp(-1.0, 1.0);
    // acos(-1) is exactly pi, so antipodal poses give exactly 180.
    dot.acos() / std::f64::consts::PI * 180.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(az: f64, el: f64) -> Pose {
        Pose {
            azimuth_deg: az,
            elevation_deg: el,
            distance_m: 0.6,
        }
    }

    #[test]
    fn identical_poses_have_zero_angle() {
        let p = pose(123.456, 33.3);
        for sym in [
            SymmetryClass::None,
            SymmetryClass::Symmetric180,
            SymmetryClass::RotationInvariant,
        ] {
            assert_eq!(pose_angle(&p, &p, sym), 0.0);
        }
    }

    #[test]
    fn antipodal_equator_poses_are_180_apart() {
        let a = pose(0.0, 0.0);
        let b = pose(180.0, 0.0);
        assert_eq!(pose_angle(&a, &b, SymmetryClass::None), 180.0);
    }

    #[test]
    fn symmetric180_collapses_half_turns() {
        let a = pose(10.0, 40.0);
        let b = pose(190.0, 40.0);
        assert_eq!(pose_angle(&a, &b, SymmetryClass::Symmetric180), 0.0);
        // Still positive for other offsets.
        let c = pose(100.0, 40.0);
        assert!(pose_angle(&a, &c, SymmetryClass::Symmetric180) > 1.0);
    }

    #[test]
    fn rotation_invariant_ignores_azimuth() {
        let a = pose(0.0, 10.0);
        let b = pose(271.0, 35.0);
        assert_eq!(pose_angle(&a, &b, SymmetryClass::RotationInvariant), 25.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn view_angle_is_a_pseudometric(
            az in prop::collection::vec(0.0f64..360.0, 3),
            el in prop::collection::vec(0.0f64..90.0, 3),
        ) {
            let p: Vec<Pose> = az.iter().zip(&el).map(|(&a, &e)| pose(a, e)).collect();
            let d = |i: usize, j: usize| pose_angle(&p[i], &p[j], SymmetryClass::None);
            prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-9);
            prop_assert_eq!(d(0, 0), 0.0);
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
        }
    }
}
