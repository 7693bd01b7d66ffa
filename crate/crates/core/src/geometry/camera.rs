use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::error::{Error, Result};

/// World units from the origin to the depth-zero plane.
pub const DEFAULT_REFERENCE_DISTANCE: f64 = 2.0;
/// Image half-width in world units; leaves a 10% margin around a normalized mesh.
pub const DEFAULT_HALF_EXTENT: f64 = 1.1;

/// Orthographic camera on a turntable around the origin.
///
/// Camera space is right-handed: x to the right, y up, z pointing back
/// towards the camera. Depth is measured along the view axis from the plane
/// `z = reference_distance` and grows away from the camera, so points near
/// the origin have depth close to `reference_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthoCamera {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub half_extent: f64,
    pub reference_distance: f64,
    pub resolution: usize,
}

impl OrthoCamera {
    pub fn new(
        azimuth_deg: f64,
        elevation_deg: f64,
        half_extent: f64,
        reference_distance: f64,
        resolution: usize,
    ) -> Result<Self> {
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::invalid(format!("half extent must be positive, got {half_extent}")));
        }
        if !(reference_distance > 0.0 && reference_distance.is_finite()) {
            return Err(Error::invalid(format!(
                "reference distance must be positive, got {reference_distance}"
            )));
        }
        if resolution < 8 {
            return Err(Error::invalid(format!("resolution must be at least 8, got {resolution}")));
        }
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(Error::invalid(format!("elevation {elevation_deg} outside [-90, 90]")));
        }
        if !azimuth_deg.is_finite() {
            return Err(Error::invalid("azimuth must be finite"));
        }
        Ok(OrthoCamera {
            azimuth_deg: azimuth_deg.rem_euclid(360.0),
            elevation_deg,
            half_extent,
            reference_distance,
            resolution,
        })
    }

    /// Azimuth 0, elevation 0 with the default extent and reference plane.
    pub fn frontal(resolution: usize) -> Result<Self> {
        Self::new(0.0, 0.0, DEFAULT_HALF_EXTENT, DEFAULT_REFERENCE_DISTANCE, resolution)
    }

    /// Unit vector from the origin towards the camera.
    pub fn back_direction(&self) -> Vec3 {
        let (sa, ca) = self.azimuth_deg.to_radians().sin_cos();
        let (se, ce) = self.elevation_deg.to_radians().sin_cos();
        Vec3::new(sa * ce, se, ca * ce)
    }

    /// Unit vector from the camera towards the origin.
    pub fn view_direction(&self) -> Vec3 {
        -self.back_direction()
    }

    /// World-to-camera rotation; its rows are the camera axes in world space.
    pub fn rotation(&self) -> Mat3 {
        let back = self.back_direction();
        let up_hint = if self.elevation_deg.abs() >= 90.0 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let right = up_hint.cross(&back).normalize();
        let up = back.cross(&right);
        Mat3::from_rows(&[right.transpose(), up.transpose(), back.transpose()])
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * p
    }

    /// World units covered by one pixel.
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half_extent / self.resolution as f64
    }

    /// Camera-space (x, y) of the centre of pixel column `u`, row `v`.
    pub fn pixel_center(&self, u: usize, v: usize) -> (f64, f64) {
        let n = self.resolution as f64;
        let x = ((u as f64 + 0.5) / n * 2.0 - 1.0) * self.half_extent;
        let y = (1.0 - (v as f64 + 0.5) / n * 2.0) * self.half_extent;
        (x, y)
    }

    /// Continuous pixel coordinates of a camera-space point; pixel centres
    /// sit at integer values.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let n = self.resolution as f64;
        let u = (x / self.half_extent + 1.0) * 0.5 * n - 0.5;
        let v = (1.0 - y / self.half_extent) * 0.5 * n - 0.5;
        (u, v)
    }

    pub fn depth_of(&self, camera_z: f64) -> f64 {
        self.reference_distance - camera_z
    }

    /// World position of pixel (`u`, `v`) at the given depth.
    pub fn unproject(&self, u: usize, v: usize, depth: f64) -> Vec3 {
        let (x, y) = self.pixel_center(u, v);
        self.camera_to_world(&Vec3::new(x, y, self.reference_distance - depth))
    }

    pub fn with_azimuth(&self, azimuth_deg: f64) -> Self {
        OrthoCamera {
            azimuth_deg: azimuth_deg.rem_euclid(360.0),
            ..*self
        }
    }
}

/// `count` cameras evenly spaced in azimuth starting at 0, all sharing the
/// remaining parameters.
pub fn make_turntable_cameras(
    count: usize,
    elevation_deg: f64,
    half_extent: f64,
    resolution: usize,
) -> Result<Vec<OrthoCamera>> {
    turntable_with_reference(count, elevation_deg, half_extent, DEFAULT_REFERENCE_DISTANCE, resolution)
}

pub(crate) fn turntable_with_reference(
    count: usize,
    elevation_deg: f64,
    half_extent: f64,
    reference_distance: f64,
    resolution: usize,
) -> Result<Vec<OrthoCamera>> {
    if count == 0 {
        return Err(Error::invalid("turntable needs at least one view"));
    }
    let step = 360.0 / count as f64;
    (0..count)
        .map(|k| OrthoCamera::new(k as f64 * step, elevation_deg, half_extent, reference_distance, resolution))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turntable_azimuths() {
        let cams = make_turntable_cameras(360, 0.0, 1.1, 64).unwrap();
        assert_eq!(cams.len(), 360);
        for (k, c) in cams.iter().enumerate() {
            assert!((c.azimuth_deg - k as f64).abs() < 1e-9);
        }
        let four: Vec<f64> = make_turntable_cameras(4, 10.0, 1.1, 64)
            .unwrap()
            .iter()
            .map(|c| c.azimuth_deg)
            .collect();
        assert_eq!(four, [0.0, 90.0, 180.0, 270.0]);
        let one = make_turntable_cameras(1, 0.0, 1.1, 64).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].azimuth_deg, 0.0);
        assert!(make_turntable_cameras(0, 0.0, 1.1, 64).is_err());
    }

    #[test]
    fn rotation_is_orthonormal_and_looks_at_origin() {
        for &(az, el) in &[(0.0, 0.0), (37.0, 20.0), (200.0, -45.0), (10.0, 90.0), (0.0, -90.0)] {
            let c = OrthoCamera::new(az, el, 1.1, 2.0, 32).unwrap();
            let r = c.rotation();
            assert!((r * r.transpose() - Mat3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            // camera-space -z is the view direction
            let fwd = c.camera_to_world(&Vec3::new(0.0, 0.0, -1.0));
            assert!((fwd - c.view_direction()).norm() < 1e-12);
        }
        let front = OrthoCamera::frontal(32).unwrap();
        assert!((front.rotation() - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn pixel_mapping_inverts() {
        let c = OrthoCamera::new(0.0, 0.0, 1.1, 2.0, 64).unwrap();
        let (x, y) = c.pixel_center(10, 50);
        let (u, v) = c.to_pixel(x, y);
        assert!((u - 10.0).abs() < 1e-12 && (v - 50.0).abs() < 1e-12);
        assert!(y < 0.0, "rows grow downwards");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(OrthoCamera::new(0.0, 0.0, 0.0, 2.0, 64).is_err());
        assert!(OrthoCamera::new(0.0, 0.0, 1.0, 2.0, 4).is_err());
        assert!(OrthoCamera::new(0.0, 91.0, 1.0, 2.0, 64).is_err());
        assert_eq!(OrthoCamera::new(-90.0, 0.0, 1.0, 2.0, 64).unwrap().azimuth_deg, 270.0);
    }
}
