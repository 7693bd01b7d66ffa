use super::{OrthoCamera, TriangleMesh, Vec3};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::Raster;

const AMBIENT: f64 = 0.3;
const DIFFUSE: f64 = 0.7;
/// Slack on barycentric coordinates so pixels on shared edges are not lost
/// to rounding on both sides.
const EDGE_EPS: f64 = 1e-12;

/// The four ground-truth modalities of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSample {
    /// 3 channels in [0, 1]; black background.
    pub rgb: Raster,
    /// View-axis distance from the depth-zero plane; 0 where `mask` is 0.
    pub depth: Raster,
    /// Camera-space unit normals facing the camera; zero where `mask` is 0.
    pub normals: Raster,
    /// 1 on the statue, 0 elsewhere.
    pub mask: Raster,
    pub camera: OrthoCamera,
    pub statue_id: u32,
}

impl RenderSample {
    /// Gray version of the RGB render, the input of the sketch filters.
    pub fn gray(&self) -> Raster {
        self.rgb.to_gray()
    }

    /// Checks the mask/depth/normal coupling.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.camera.resolution;
        for r in [&self.depth, &self.mask] {
            r.check_dims(n, n, 1)?;
        }
        for r in [&self.rgb, &self.normals] {
            r.check_dims(n, n, 3)?;
        }
        let far = 2.0 * self.camera.reference_distance;
        for v in 0..n {
            for u in 0..n {
                let m = self.mask.get(u, v, 0);
                let d = self.depth.get(u, v, 0);
                let nrm = Vec3::from_column_slice(self.normals.pixel(u, v));
                let bad = if m == 0.0 {
                    d != 0.0 || nrm != Vec3::zeros()
                } else {
                    m != 1.0 || !(d > 0.0 && d < far) || (nrm.norm() - 1.0).abs() > 1e-4 || nrm.z <= 0.0
                };
                if bad {
                    return Err(Error::invalid(format!(
                        "pixel ({u}, {v}) violates render invariants: mask {m}, depth {d}, normal {nrm:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Z-buffered orthographic rasterization with flat (per-face) normals.
///
/// Triangles are drawn two-sided: a face seen from behind contributes its
/// flipped normal, so every covered pixel's normal faces the camera. Only
/// surface between the depth-zero plane and twice the reference distance
/// is drawn. Shading is Lambertian with the light along the view axis,
/// modulating vertex colors when present and a neutral gray otherwise.
pub fn rasterize(mesh: &TriangleMesh, camera: &OrthoCamera) -> RenderSample {
    let n = camera.resolution;
    let rot = camera.rotation();
    let far = 2.0 * camera.reference_distance;
    // (u, v, depth) per vertex
    let projected: Vec<(f64, f64, f64)> = mesh
        .vertices
        .iter()
        .map(|p| {
            let c = rot * p;
            let (u, v) = camera.to_pixel(c.x, c.y);
            (u, v, camera.depth_of(c.z))
        })
        .collect();

    let mut zbuf = vec![f64::INFINITY; n * n];
    // winning face and its barycentric weights for vertices 1 and 2
    let mut owner: Vec<Option<(u32, f64, f64)>> = vec![None; n * n];

    for (fi, face) in mesh.faces.iter().enumerate() {
        let [a, b, c] = face.map(|i| projected[i as usize]);
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area.abs() < 1e-18 {
            continue;
        }
        let umin = a.0.min(b.0).min(c.0).ceil().max(0.0);
        let umax = a.0.max(b.0).max(c.0).floor().min((n - 1) as f64);
        let vmin = a.1.min(b.1).min(c.1).ceil().max(0.0);
        let vmax = a.1.max(b.1).max(c.1).floor().min((n - 1) as f64);
        if umin > umax || vmin > vmax {
            continue;
        }
        for v in vmin as usize..=vmax as usize {
            let pv = v as f64;
            for u in umin as usize..=umax as usize {
                let pu = u as f64;
                let w1 = ((pu - a.0) * (c.1 - a.1) - (pv - a.1) * (c.0 - a.0)) / area;
                let w2 = ((b.0 - a.0) * (pv - a.1) - (b.1 - a.1) * (pu - a.0)) / area;
                let w0 = 1.0 - w1 - w2;
                if w0 < -EDGE_EPS || w1 < -EDGE_EPS || w2 < -EDGE_EPS {
                    continue;
                }
                // written relative to vertex a so a constant-depth face stays exact
                let depth = a.2 + w1 * (b.2 - a.2) + w2 * (c.2 - a.2);
                if !(depth > 0.0 && depth < far) {
                    continue;
                }
                let idx = v * n + u;
                if depth < zbuf[idx] {
                    zbuf[idx] = depth;
                    owner[idx] = Some((fi as u32, w1, w2));
                }
            }
        }
    }

    let face_normals: Vec<Option<Vec3>> = mesh
        .faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| rot * mesh.vertices[i as usize]);
            let nrm = (b - a).cross(&(c - a));
            let len = nrm.norm();
            if len == 0.0 || nrm.z == 0.0 {
                return None;
            }
            let nrm = nrm / len;
            Some(if nrm.z < 0.0 { -nrm } else { nrm })
        })
        .collect();

    let mut rgb = Raster::new(n, n, 3);
    let mut depth = Raster::new(n, n, 1);
    let mut normals = Raster::new(n, n, 3);
    let mut mask = Raster::new(n, n, 1);
    for v in 0..n {
        for u in 0..n {
            let idx = v * n + u;
            let Some((fi, w1, w2)) = owner[idx] else { continue };
            // edge-on faces carry no usable normal
            let Some(nrm) = face_normals[fi as usize] else { continue };
            mask.set(u, v, 0, 1.0);
            depth.set(u, v, 0, zbuf[idx]);
            normals.pixel_mut(u, v).copy_from_slice(nrm.as_slice());
            let shade = AMBIENT + DIFFUSE * nrm.z;
            let albedo = match &mesh.vertex_colors {
                Some(cols) => {
                    let f = mesh.faces[fi as usize];
                    let [c0, c1, c2] = f.map(|i| cols[i as usize]);
                    c0 + (c1 - c0) * w1 + (c2 - c0) * w2
                }
                None => Vec3::new(1.0, 1.0, 1.0),
            };
            let px = rgb.pixel_mut(u, v);
            for k in 0..3 {
                px[k] = (albedo[k] * shade).clamp(0.0, 1.0);
            }
        }
    }
    RenderSample {
        rgb,
        depth,
        normals,
        mask,
        camera: *camera,
        statue_id: 0,
    }
}

/// Renders one mesh from several cameras.
pub fn render_views(mesh: &TriangleMesh, cameras: &[OrthoCamera], exec: Exec) -> Vec<RenderSample> {
    exec.map(cameras, |c| rasterize(mesh, c))
}

/// Camera-space normals from central differences of a depth map.
///
/// A pixel gets a normal only when it and its four neighbours are all inside
/// the mask; every other pixel gets the zero vector.
pub fn depth_to_normals(depth: &Raster, mask: &Raster, camera: &OrthoCamera) -> Result<Raster> {
    depth.check_dims(mask.width(), mask.height(), 1)?;
    mask.check_dims(depth.width(), depth.height(), 1)?;
    let (w, h) = (depth.width(), depth.height());
    let step = camera.pixel_size();
    let inside = |u: usize, v: usize| mask.get(u, v, 0) > 0.5;
    let mut out = Raster::new(w, h, 3);
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            if !(inside(u, v) && inside(u - 1, v) && inside(u + 1, v) && inside(u, v - 1) && inside(u, v + 1)) {
                continue;
            }
            // camera x grows with u, camera y shrinks with v
            let dd_dx = (depth.get(u + 1, v, 0) - depth.get(u - 1, v, 0)) / (2.0 * step);
            let dd_dy = (depth.get(u, v - 1, 0) - depth.get(u, v + 1, 0)) / (2.0 * step);
            // surface z = ref - depth, normal ∝ (-dz/dx, -dz/dy, 1)
            let nrm = Vec3::new(dd_dx, dd_dy, 1.0).normalize();
            out.pixel_mut(u, v).copy_from_slice(nrm.as_slice());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    fn cam(az: f64, res: usize) -> OrthoCamera {
        OrthoCamera::new(az, 0.0, 1.1, 2.0, res).unwrap()
    }

    #[test]
    fn sphere_center_pixel() {
        let c = cam(0.0, 64);
        let s = rasterize(&shapes::icosphere(4), &c);
        s.check_invariants().unwrap();
        let tol = 2.0 * 1.1 / 64.0;
        let d = s.depth.get(32, 32, 0);
        assert!((d - 1.0).abs() <= tol, "depth {d}");
        // faceted sphere: the face normal differs from the analytic one by up to half a facet
        let nrm = Vec3::from_column_slice(s.normals.pixel(32, 32));
        assert!((nrm - Vec3::z()).norm() < 5e-2, "{nrm:?}");
    }

    #[test]
    fn out_of_frame_mesh_is_invisible() {
        let m = shapes::icosphere(2).translated(Vec3::new(5.0, 0.0, 0.0));
        let s = rasterize(&m, &cam(0.0, 32));
        assert!(s.mask.data().iter().all(|&v| v == 0.0));
        assert!(s.depth.data().iter().all(|&v| v == 0.0));
        // behind the far plane
        let m = shapes::icosphere(2).translated(Vec3::new(0.0, 0.0, -3.5));
        let s = rasterize(&m, &cam(0.0, 32));
        assert!(s.mask.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn facing_triangle_has_exact_depth() {
        let z = 0.37;
        let m = TriangleMesh::new(
            vec![Vec3::new(-0.9, -0.8, z), Vec3::new(0.8, -0.7, z), Vec3::new(0.1, 0.9, z)],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let c = cam(0.0, 48);
        let s = rasterize(&m, &c);
        let expected = 2.0 - z;
        let mut covered = 0;
        for v in 0..48 {
            for u in 0..48 {
                if s.mask.get(u, v, 0) == 1.0 {
                    covered += 1;
                    assert_eq!(s.depth.get(u, v, 0), expected);
                    assert_eq!(s.normals.pixel(u, v), &[0.0, 0.0, 1.0]);
                }
            }
        }
        assert!(covered > 300);
    }

    #[test]
    fn back_facing_triangle_normal_is_flipped() {
        let m = TriangleMesh::new(
            vec![Vec3::new(-0.9, -0.8, 0.0), Vec3::new(0.1, 0.9, 0.0), Vec3::new(0.8, -0.7, 0.0)],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let s = rasterize(&m, &cam(0.0, 32));
        s.check_invariants().unwrap();
        assert!(s.mask.data().iter().any(|&v| v == 1.0));
    }

    #[test]
    fn vertex_colors_are_shaded() {
        let mut m = shapes::icosphere(2);
        m.vertex_colors = Some(vec![Vec3::new(1.0, 0.0, 0.0); m.vertex_count()]);
        let s = rasterize(&m, &cam(0.0, 32));
        let px = s.rgb.pixel(16, 16);
        assert!(px[0] > 0.9 && px[1] == 0.0 && px[2] == 0.0);
    }

    #[test]
    fn flat_depth_gives_facing_normals() {
        let c = cam(0.0, 16);
        let depth = Raster::filled(16, 16, 1, 1.5);
        let mask = Raster::filled(16, 16, 1, 1.0);
        let n = depth_to_normals(&depth, &mask, &c).unwrap();
        for v in 1..15 {
            for u in 1..15 {
                assert_eq!(n.pixel(u, v), &[0.0, 0.0, 1.0]);
            }
        }
        assert_eq!(n.pixel(0, 0), &[0.0, 0.0, 0.0]);
        let none = depth_to_normals(&depth, &Raster::new(16, 16, 1), &c).unwrap();
        assert!(none.data().iter().all(|&v| v == 0.0));
        assert!(depth_to_normals(&depth, &Raster::new(15, 16, 1), &c).is_err());
    }

    #[test]
    fn depth_ramp_normals() {
        // Surface receding to the right (depth grows with x) tilts towards +x;
        // approaching to the right tilts towards -x.
        let c = cam(0.0, 32);
        let mask = Raster::filled(32, 32, 1, 1.0);
        for (slope, sx) in [(1.0, 1.0), (-1.0, -1.0)] {
            let depth = Raster::from_fn(32, 32, 1, |u, v, _| 2.0 + slope * c.pixel_center(u, v).0);
            let n = depth_to_normals(&depth, &mask, &c).unwrap();
            let expected = Vec3::new(sx, 0.0, 1.0) / 2f64.sqrt();
            for v in 1..31 {
                for u in 1..31 {
                    let got = Vec3::from_column_slice(n.pixel(u, v));
                    assert!((got - expected).norm() < 1e-3, "{got:?}");
                }
            }
        }
    }

    #[test]
    fn sphere_depth_normals_agree_with_rasterized() {
        let c = cam(30.0, 128);
        let s = rasterize(&shapes::icosphere(5), &c);
        let est = depth_to_normals(&s.depth, &s.mask, &c).unwrap();
        let (mut sum, mut count) = (0.0, 0);
        for v in 0..128 {
            for u in 0..128 {
                let e = Vec3::from_column_slice(est.pixel(u, v));
                if e == Vec3::zeros() {
                    continue;
                }
                let r = Vec3::from_column_slice(s.normals.pixel(u, v));
                sum += e.dot(&r).clamp(-1.0, 1.0).acos().to_degrees();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!(count > 5000);
        assert!(mean < 10.0, "mean angular error {mean}");
    }
}
