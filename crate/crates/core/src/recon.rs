//! Inference and point-cloud reconstruction from a single sketch.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::io::write_point_cloud_ply;
use crate::geometry::{backproject, fuse_views, OrthoCamera, PointCloud, Vec3, ViewInput};
use crate::net::{Checkpoint, Network, PredictionSet};
use crate::raster::Raster;

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Outcome flag of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconStatus {
    Ok,
    /// No pixel passed the mask threshold; the cloud is empty.
    EmptyMask,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cloud: PointCloud,
    pub status: ReconStatus,
}

/// Converts any image to a square single-channel sketch of `size` pixels:
/// gray conversion, centred white padding, bilinear resize.
pub fn prepare_sketch(image: &Raster, size: usize) -> Raster {
    let square = image.to_gray().pad_to_square(1.0);
    if square.width() == size {
        square
    } else {
        square.resize(size, size)
    }
}

/// Evaluation-mode forward pass on an arbitrary image.
pub fn infer(net: &Network, sketch: &Raster) -> Result<PredictionSet> {
    net.predict(&prepare_sketch(sketch, net.config().image_size))
}

/// Frontal camera matching the geometry the checkpoint was trained with.
pub fn default_camera(checkpoint: &Checkpoint) -> Result<OrthoCamera> {
    OrthoCamera::new(
        0.0,
        0.0,
        checkpoint.meta.half_extent,
        checkpoint.meta.reference_distance,
        checkpoint.network.config().image_size,
    )
}

/// Back-projects pixels with `mask ≥ threshold` (threshold clamped to
/// [0, 1]) and attaches world-frame normals and RGB colors.
pub fn reconstruct_from_predictions(pred: &PredictionSet, threshold: f64, camera: &OrthoCamera) -> Result<Reconstruction> {
    if threshold.is_nan() {
        return Err(Error::invalid("mask threshold is NaN"));
    }
    let t = threshold.clamp(0.0, 1.0);
    let n = camera.resolution;
    pred.mask.check_dims(n, n, 1)?;
    pred.normals.check_dims(n, n, 3)?;
    pred.rgb.check_dims(n, n, 3)?;
    let keep = pred.mask.map(|m| if m >= t { 1.0 } else { 0.0 });
    let mut cloud = backproject(&pred.depth, &keep, camera)?;
    let mut normals = Vec::with_capacity(cloud.len());
    let mut colors = Vec::with_capacity(cloud.len());
    for v in 0..n {
        for u in 0..n {
            if keep.get(u, v, 0) > 0.5 {
                let c = Vec3::from_column_slice(pred.normals.pixel(u, v));
                let w = camera.camera_to_world(&c);
                let len = w.norm();
                normals.push(if len > 1e-12 { w / len } else { camera.back_direction() });
                let rgb = pred.rgb.pixel(u, v);
                colors.push(Vec3::new(rgb[0], rgb[1], rgb[2]).map(|x| x.clamp(0.0, 1.0)));
            }
        }
    }
    let status = if cloud.is_empty() {
        ReconStatus::EmptyMask
    } else {
        ReconStatus::Ok
    };
    cloud.normals = Some(normals);
    cloud.colors = Some(colors);
    Ok(Reconstruction { cloud, status })
}

/// Sketch to attributed point cloud.
pub fn reconstruct(net: &Network, sketch: &Raster, threshold: f64, camera: &OrthoCamera) -> Result<Reconstruction> {
    if camera.resolution != net.config().image_size {
        return Err(Error::invalid(format!(
            "camera resolution {} differs from network image size {}",
            camera.resolution,
            net.config().image_size
        )));
    }
    reconstruct_from_predictions(&infer(net, sketch)?, threshold, camera)
}

/// Fuses several predicted views into one cloud without attributes.
/// Experimental: the network is trained on single views.
pub fn reconstruct_multi_view(views: &[(&PredictionSet, &OrthoCamera)], threshold: f64) -> Result<PointCloud> {
    let t = threshold.clamp(0.0, 1.0);
    let masks: Vec<Raster> = views.iter().map(|(p, _)| p.mask.map(|m| if m >= t { 1.0 } else { 0.0 })).collect();
    let inputs: Vec<ViewInput> = views
        .iter()
        .zip(&masks)
        .map(|((p, c), m)| ViewInput {
            depth: &p.depth,
            mask: m,
            camera: c,
        })
        .collect();
    fuse_views(&inputs, None)
}

/// Writes the cloud as PLY after checking it is non-empty and well formed.
pub fn export_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot export an empty point cloud"));
    }
    cloud.validate()?;
    write_point_cloud_ply(cloud, path)
}

/// Side-by-side panel: sketch | rgb | depth | normals | mask. Depth is
/// scaled by `depth_range` into [0, 1].
pub fn save_panel(sketch: &Raster, pred: &PredictionSet, depth_range: f64, path: &Path) -> Result<()> {
    let n = pred.resolution();
    let sketch = prepare_sketch(sketch, n);
    let depth = pred.depth.map(|d| (d / depth_range).clamp(0.0, 1.0));
    let normals = pred.normals.map(|v| 0.5 * (v + 1.0));
    Raster::hstack(&[&sketch, &pred.rgb, &depth, &normals, &pred.mask])?.save_png8(path)
}
