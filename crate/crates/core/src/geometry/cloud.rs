use std::collections::HashSet;

use super::{OrthoCamera, Vec3};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::Raster;

/// Points in the canonical (world) frame with optional per-point attributes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub colors: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            normals: None,
            colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        for (what, attr) in [("normals", &self.normals), ("colors", &self.colors)] {
            if let Some(a) = attr {
                if a.len() != n {
                    return Err(Error::invalid(format!("{} {what} for {n} points", a.len())));
                }
            }
        }
        let finite = |v: &Vec<Vec3>| v.iter().all(|p| p.iter().all(|c| c.is_finite()));
        if !finite(&self.points)
            || !self.normals.as_ref().is_none_or(finite)
            || !self.colors.as_ref().is_none_or(finite)
        {
            return Err(Error::invalid("point cloud contains non-finite values"));
        }
        Ok(())
    }

    /// Appends `other`; attributes survive only if both clouds carry them.
    pub fn extend(&mut self, other: PointCloud) {
        let was_empty = self.points.is_empty();
        fn merge(mine: &mut Option<Vec<Vec3>>, theirs: Option<Vec<Vec3>>, was_empty: bool) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.extend(t),
                (None, Some(t)) if was_empty => *mine = Some(t),
                _ => *mine = None,
            }
        }
        merge(&mut self.normals, other.normals, was_empty);
        merge(&mut self.colors, other.colors, was_empty);
        self.points.extend(other.points);
    }

    /// Keeps the first point falling into each cubic cell of side `cell`.
    pub fn voxel_dedup(&self, cell: f64) -> Result<PointCloud> {
        if !(cell > 0.0) {
            return Err(Error::invalid(format!("voxel size must be positive, got {cell}")));
        }
        let mut seen = HashSet::new();
        let keep: Vec<usize> = (0..self.points.len())
            .filter(|&i| {
                let p = self.points[i] / cell;
                seen.insert((p.x.floor() as i64, p.y.floor() as i64, p.z.floor() as i64))
            })
            .collect();
        let pick = |v: &Vec<Vec3>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(PointCloud {
            points: pick(&self.points),
            normals: self.normals.as_ref().map(pick),
            colors: self.colors.as_ref().map(pick),
        })
    }
}

/// Lifts every pixel with mask > 0.5 to the world point on its orthographic
/// ray at the stored depth.
pub fn backproject(depth: &Raster, mask: &Raster, camera: &OrthoCamera) -> Result<PointCloud> {
    let n = camera.resolution;
    depth.check_dims(n, n, 1)?;
    mask.check_dims(n, n, 1)?;
    let mut points = Vec::new();
    for v in 0..n {
        for u in 0..n {
            if mask.get(u, v, 0) > 0.5 {
                points.push(camera.unproject(u, v, depth.get(u, v, 0)));
            }
        }
    }
    Ok(PointCloud::from_points(points))
}

/// One view's depth and mask with the camera that produced them.
#[derive(Debug, Clone, Copy)]
pub struct ViewInput<'a> {
    pub depth: &'a Raster,
    pub mask: &'a Raster,
    pub camera: &'a OrthoCamera,
}

/// Concatenates the back-projections of all views in the shared world frame,
/// optionally thinning the result on a voxel grid of the given cell size.
pub fn fuse_views(views: &[ViewInput<'_>], dedup_cell: Option<f64>) -> Result<PointCloud> {
    if views.is_empty() {
        return Err(Error::invalid("fusion needs at least one view"));
    }
    let mut fused = PointCloud::default();
    for view in views {
        fused.extend(backproject(view.depth, view.mask, view.camera)?);
    }
    match dedup_cell {
        Some(cell) => fused.voxel_dedup(cell),
        None => Ok(fused),
    }
}

/// Uniform bucket grid for exact nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct PointGrid<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    // CSR layout: bucket b holds entries[starts[b]..starts[b + 1]]
    starts: Vec<usize>,
    entries: Vec<u32>,
}

impl<'a> PointGrid<'a> {
    pub fn build(points: &'a [Vec3]) -> Result<Self> {
        let first = *points.first().ok_or_else(|| Error::invalid("cannot index an empty point set"))?;
        let (lo, hi) = points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let extent = hi - lo;
        // aim for about two points per occupied cell along the dominant extent
        let max_extent = extent.max();
        let target = ((points.len() as f64 / 2.0).cbrt().ceil() as usize).clamp(1, 128);
        let cell = if max_extent > 0.0 { max_extent / target as f64 } else { 1.0 };
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).min(4096));
        let mut grid = PointGrid {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            entries: Vec::new(),
        };
        let buckets: Vec<usize> = points.iter().map(|p| grid.bucket(grid.cell_of(p))).collect();
        let total = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; total + 1];
        for &b in &buckets {
            counts[b + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; points.len()];
        for (i, &b) in buckets.iter().enumerate() {
            entries[fill[b]] = i as u32;
            fill[b] += 1;
        }
        grid.starts = counts;
        grid.entries = entries;
        Ok(grid)
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            c.clamp(0.0, (self.dims[k] - 1) as f64) as usize
        })
    }

    fn bucket(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Index of and squared distance to the nearest indexed point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let c = self.cell_of(q);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_ring = *self.dims.iter().max().unwrap();
        for ring in 0..=max_ring {
            self.visit_ring(c, ring, |i| {
                let d2 = (self.points[i] - q).norm_squared();
                if d2 < best.1 || (d2 == best.1 && i < best.0) {
                    best = (i, d2);
                }
            });
            // anything beyond this ring is at least ring * cell away
            let bound = ring as f64 * self.cell;
            if best.1 <= bound * bound {
                break;
            }
        }
        best
    }

    fn visit_ring(&self, c: [usize; 3], ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as i64;
        let range = |k: usize| {
            let lo = (c[k] as i64 - r).max(0);
            let hi = (c[k] as i64 + r).min(self.dims[k] as i64 - 1);
            lo..=hi
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let on_shell = (x - c[0] as i64).abs() == r
                        || (y - c[1] as i64).abs() == r
                        || (z - c[2] as i64).abs() == r;
                    if !on_shell {
                        continue;
                    }
                    let b = self.bucket([x as usize, y as usize, z as usize]);
                    for &i in &self.entries[self.starts[b]..self.starts[b + 1]] {
                        f(i as usize);
                    }
                }
            }
        }
    }
}

/// Mean squared nearest-neighbour distance from `a` to `b` plus the same from
/// `b` to `a`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_distance_with(a, b, Exec::default())
}

pub fn chamfer_distance_with(a: &PointCloud, b: &PointCloud, exec: Exec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance needs two non-empty clouds"));
    }
    let directed = |from: &[Vec3], to: &[Vec3]| -> Result<f64> {
        let grid = PointGrid::build(to)?;
        let d2 = exec.map(from, |p| grid.nearest(p).1);
        Ok(d2.iter().sum::<f64>() / from.len() as f64)
    };
    Ok(directed(&a.points, &b.points)? + directed(&b.points, &a.points)?)
}
