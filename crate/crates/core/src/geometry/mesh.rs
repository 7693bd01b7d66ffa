use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mat3, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle soup. Faces are expected to wind counter-clockwise when
/// seen from outside, although the rasterizer renders both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Per-vertex RGB in [0, 1].
    pub vertex_colors: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    /// Builds a mesh, checking index bounds and finiteness.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, vertex_colors: Option<Vec<Vec3>>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            vertex_colors,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("vertex {i} has a non-finite coordinate")));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= n) {
                return Err(Error::invalid(format!(
                    "face {fi} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
        }
        if let Some(c) = &self.vertex_colors {
            if c.len() != n {
                return Err(Error::invalid(format!("{} vertex colors for {n} vertices", c.len())));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }

    /// Centres the bounding box on the origin and scales so the farthest
    /// vertex lies on the unit sphere.
    pub fn normalize(&self) -> Result<TriangleMesh> {
        let (lo, hi) = self
            .bounding_box()
            .ok_or_else(|| Error::invalid("cannot normalize an empty mesh"))?;
        let center = (lo + hi) * 0.5;
        let radius = self
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0, f64::max);
        if !(radius > 0.0) {
            return Err(Error::invalid("cannot normalize a mesh with zero extent"));
        }
        Ok(TriangleMesh {
            vertices: self.vertices.iter().map(|v| (v - center) / radius).collect(),
            faces: self.faces.clone(),
            vertex_colors: self.vertex_colors.clone(),
        })
    }

    pub fn transformed(&self, rotation: &Mat3, translation: Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| rotation * v + translation).collect(),
            faces: self.faces.clone(),
            vertex_colors: self.vertex_colors.clone(),
        }
    }

    pub fn translated(&self, offset: Vec3) -> TriangleMesh {
        self.transformed(&Mat3::identity(), offset)
    }

    /// Turns the mesh on the turntable by `degrees`. Rendering the result
    /// with a camera at azimuth 0 is equivalent to rendering the original
    /// from azimuth `degrees`.
    pub fn turned(&self, degrees: f64) -> TriangleMesh {
        let (s, c) = degrees.to_radians().sin_cos();
        #[rustfmt::skip]
        let r = Mat3::new(
            c,   0.0, -s,
            0.0, 1.0, 0.0,
            s,   0.0, c,
        );
        self.transformed(&r, Vec3::zeros())
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| triangle_area(&self.triangle(i))).sum()
    }

    /// Area-weighted uniform surface samples, deterministic in `seed`.
    pub fn sample_surface(&self, count: usize, seed: u64) -> Result<Vec<Vec3>> {
        let areas: Vec<f64> = (0..self.faces.len()).map(|i| triangle_area(&self.triangle(i))).collect();
        let total: f64 = areas.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("mesh has no surface area to sample"));
        }
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a;
            cdf.push(acc / total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| {
                let t: f64 = rng.random();
                let face = cdf.partition_point(|&c| c < t).min(cdf.len() - 1);
                let [a, b, c] = self.triangle(face);
                let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                a + (b - a) * u + (c - a) * v
            })
            .collect())
    }

    /// Unsigned distance from `p` to the nearest triangle (brute force).
    pub fn distance_to_surface(&self, p: &Vec3) -> f64 {
        (0..self.faces.len())
            .map(|i| point_triangle_distance2(p, &self.triangle(i)))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

fn triangle_area([a, b, c]: &[Vec3; 3]) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Squared distance from `p` to a triangle (Ericson, "Real-Time Collision
/// Detection", closest point on triangle).
pub(crate) fn point_triangle_distance2(p: &Vec3, [a, b, c]: &[Vec3; 3]) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm_squared()
}
