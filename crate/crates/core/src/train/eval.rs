//! Per-view and per-statue evaluation metrics.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetIndex, Record, ViewSample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{backproject, chamfer_distance_with, RenderSample};
use crate::net::{Checkpoint, Network, PredictionSet};
use crate::raster::Raster;

/// PSNR reported for a perfect RGB prediction.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Anything that maps a sample to predictions.
pub trait Predictor: Sync {
    fn predict(&self, sample: &ViewSample) -> Result<PredictionSet>;
}

impl Predictor for Network {
    fn predict(&self, sample: &ViewSample) -> Result<PredictionSet> {
        Network::predict(self, &sample.sketch)
    }
}

/// Returns the ground truth as the prediction.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthPredictor {
    pub num_classes: usize,
}

impl Predictor for GroundTruthPredictor {
    fn predict(&self, sample: &ViewSample) -> Result<PredictionSet> {
        Ok(prediction_from_target(&sample.target, self.num_classes.max(1)))
    }
}

pub fn prediction_from_target(t: &RenderSample, num_classes: usize) -> PredictionSet {
    PredictionSet {
        rgb: t.rgb.clone(),
        depth: t.depth.clone(),
        normals: t.normals.clone(),
        mask: t.mask.clone(),
        class_logits: vec![0.0; num_classes],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub mask_iou: f64,
    pub depth_rmse: f64,
    pub normal_angle_deg: f64,
    pub psnr_db: f64,
    /// `None` when the predicted or true mask is empty.
    pub chamfer: Option<f64>,
}

/// Metrics averaged over views; chamfer over views where it is defined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub views: usize,
    pub mask_iou: f64,
    pub depth_rmse: f64,
    pub normal_angle_deg: f64,
    pub psnr_db: f64,
    pub chamfer: Option<f64>,
    pub chamfer_views: usize,
}

impl Metrics {
    pub fn mean(views: &[ViewMetrics]) -> Metrics {
        let n = views.len().max(1) as f64;
        let ch: Vec<f64> = views.iter().filter_map(|v| v.chamfer).collect();
        Metrics {
            views: views.len(),
            mask_iou: views.iter().map(|v| v.mask_iou).sum::<f64>() / n,
            depth_rmse: views.iter().map(|v| v.depth_rmse).sum::<f64>() / n,
            normal_angle_deg: views.iter().map(|v| v.normal_angle_deg).sum::<f64>() / n,
            psnr_db: views.iter().map(|v| v.psnr_db).sum::<f64>() / n,
            chamfer: (!ch.is_empty()).then(|| ch.iter().sum::<f64>() / ch.len() as f64),
            chamfer_views: ch.len(),
        }
    }

    pub fn all_finite(&self) -> bool {
        [self.mask_iou, self.depth_rmse, self.normal_angle_deg, self.psnr_db]
            .iter()
            .chain(self.chamfer.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatueMetrics {
    pub statue_id: u32,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_statue: Vec<StatueMetrics>,
    pub aggregate: Metrics,
}

/// Intersection over union of `pred ≥ 0.5` and `truth > 0.5`; two empty
/// masks count as a perfect match.
pub fn mask_iou(pred: &Raster, truth: &Raster) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let (p, t) = (p >= 0.5, t > 0.5);
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn psnr(pred: &Raster, truth: &Raster) -> f64 {
    let mse = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.data().len() as f64;
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn view_metrics(pred: &PredictionSet, truth: &RenderSample, exec: Exec) -> Result<ViewMetrics> {
    pred.mask.check_same_shape(&truth.mask)?;
    let m = truth.mask.data();
    let inside: Vec<usize> = (0..m.len()).filter(|&i| m[i] > 0.5).collect();
    let (mut se, mut ang) = (0.0, 0.0);
    for &i in &inside {
        se += (pred.depth.data()[i] - truth.depth.data()[i]).powi(2);
        let p = &pred.normals.data()[3 * i..3 * i + 3];
        let t = &truth.normals.data()[3 * i..3 * i + 3];
        let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(1e-12);
        let nt = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt().max(1e-12);
        let cos = ((p[0] * t[0] + p[1] * t[1] + p[2] * t[2]) / (np * nt)).clamp(-1.0, 1.0);
        ang += cos.acos().to_degrees();
    }
    let k = inside.len().max(1) as f64;
    let pred_mask = pred.mask.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    let pc = backproject(&pred.depth, &pred_mask, &truth.camera)?;
    let tc = backproject(&truth.depth, &truth.mask, &truth.camera)?;
    let chamfer = if pc.is_empty() || tc.is_empty() {
        None
    } else {
        Some(chamfer_distance_with(&pc, &tc, exec)?)
    };
    Ok(ViewMetrics {
        mask_iou: mask_iou(&pred.mask, &truth.mask),
        depth_rmse: (se / k).sqrt(),
        normal_angle_deg: ang / k,
        psnr_db: psnr(&pred.rgb, &truth.rgb),
        chamfer,
    })
}

/// `count` views spread evenly over the turntable (all when `None`).
pub fn pick_views(total: usize, count: Option<usize>) -> Vec<usize> {
    match count {
        Some(c) if c < total => (0..c).map(|i| i * total / c).collect(),
        _ => (0..total).collect(),
    }
}

/// Evaluates `predictor` on the given statues. Views are processed with
/// `exec`; results are in statue order.
pub fn evaluate(
    predictor: &dyn Predictor,
    index: &DatasetIndex,
    statues: &[u32],
    views_per_statue: Option<usize>,
    exec: Exec,
) -> Result<EvalReport> {
    if statues.is_empty() {
        return Err(Error::invalid("evaluation needs at least one statue"));
    }
    let known = index.statue_ids();
    let mut unique = BTreeSet::new();
    for id in statues {
        if !known.contains(id) {
            return Err(Error::invalid(format!("unknown statue id {id}")));
        }
        unique.insert(*id);
    }
    let views = pick_views(index.metadata.views_per_statue, views_per_statue);
    let mut per_statue = Vec::new();
    let mut all = Vec::new();
    for id in unique {
        let records: Vec<&Record> = index
            .records
            .iter()
            .filter(|r| r.statue_id == id && views.contains(&r.view_index))
            .collect();
        let results = exec.map(&records, |r| -> Result<ViewMetrics> {
            let sample = index.load(r)?;
            let pred = predictor.predict(&sample)?;
            view_metrics(&pred, &sample.target, Exec::Sequential)
        });
        let vm = results.into_iter().collect::<Result<Vec<_>>>()?;
        per_statue.push(StatueMetrics {
            statue_id: id,
            metrics: Metrics::mean(&vm),
        });
        all.extend(vm);
    }
    Ok(EvalReport {
        per_statue,
        aggregate: Metrics::mean(&all),
    })
}

/// Loads a checkpoint and evaluates it. Statues the network was trained on
/// are refused unless `allow_training_statues` is set.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    index: &DatasetIndex,
    statues: &[u32],
    views_per_statue: Option<usize>,
    allow_training_statues: bool,
    exec: Exec,
) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    if !allow_training_statues {
        if let Some(id) = statues.iter().find(|id| ck.meta.train_statues.contains(id)) {
            return Err(Error::invalid(format!(
                "statue {id} was used for training; evaluation on it is refused"
            )));
        }
    }
    if ck.network.config().image_size != index.metadata.resolution {
        return Err(Error::Checkpoint(format!(
            "network expects {} px images, dataset has {} px",
            ck.network.config().image_size,
            index.metadata.resolution
        )));
    }
    evaluate(&ck.network, index, statues, views_per_statue, exec)
}
