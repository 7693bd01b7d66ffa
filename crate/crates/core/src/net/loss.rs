//! Multi-term training objective.

use serde::{Deserialize, Serialize};

use super::model::{OutputGrads, PredictionSet};
use crate::error::{Error, Result};
use crate::geometry::RenderSample;
use crate::raster::Raster;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the mask
/// cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_rgb: f64,
    pub w_depth: f64,
    pub w_normals: f64,
    pub w_mask: f64,
    pub w_adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_rgb: 1.0,
            w_depth: 1.0,
            w_normals: 1.0,
            w_mask: 1.0,
            w_adv: 0.1,
        }
    }
}

impl LossWeights {
    /// Only the RGB reconstruction term, used during warm-up.
    pub fn rgb_only() -> Self {
        LossWeights {
            w_rgb: 1.0,
            w_depth: 0.0,
            w_normals: 0.0,
            w_mask: 0.0,
            w_adv: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_rgb, self.w_depth, self.w_normals, self.w_mask, self.w_adv];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("loss weights must be finite and >= 0: {self:?}")))
        }
    }
}

/// Unweighted value of every loss term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rgb: f64,
    pub depth: f64,
    pub normals: f64,
    pub mask: f64,
    pub adv: f64,
    /// Set when the ground-truth mask is empty and the masked terms were
    /// defined as zero.
    pub empty_mask: bool,
}

impl LossBreakdown {
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        w.w_rgb * self.rgb + w.w_depth * self.depth + w.w_normals * self.normals + w.w_mask * self.mask + w.w_adv * self.adv
    }

    pub fn all_finite(&self) -> bool {
        [self.rgb, self.depth, self.normals, self.mask, self.adv].iter().all(|v| v.is_finite())
    }
}

fn check_shapes(pred: &PredictionSet, target: &RenderSample, label: usize) -> Result<()> {
    pred.rgb.check_same_shape(&target.rgb)?;
    pred.depth.check_same_shape(&target.depth)?;
    pred.normals.check_same_shape(&target.normals)?;
    pred.mask.check_same_shape(&target.mask)?;
    if label >= pred.class_logits.len() {
        return Err(Error::invalid(format!(
            "statue label {label} out of range for {} classes",
            pred.class_logits.len()
        )));
    }
    Ok(())
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

fn cosine_parts(p: &[f64], t: &[f64]) -> (f64, f64, f64) {
    let dot = p[0] * t[0] + p[1] * t[1] + p[2] * t[2];
    let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(1e-12);
    let nt = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt().max(1e-12);
    (dot, np, nt)
}

/// Evaluates every term and the weighted total.
pub fn total_loss(
    pred: &PredictionSet,
    target: &RenderSample,
    label: usize,
    weights: &LossWeights,
) -> Result<(f64, LossBreakdown)> {
    check_shapes(pred, target, label)?;
    weights.validate()?;
    let mut b = LossBreakdown::default();

    let rgb = pred.rgb.data();
    b.rgb = rgb.iter().zip(target.rgb.data()).map(|(p, t)| (p - t).abs()).sum::<f64>() / rgb.len() as f64;

    let m = target.mask.data();
    let count = m.iter().filter(|&&v| v > 0.5).count();
    if count == 0 {
        b.empty_mask = true;
    } else {
        let (mut dl, mut nl) = (0.0, 0.0);
        for (i, _) in m.iter().enumerate().filter(|(_, &v)| v > 0.5) {
            dl += (pred.depth.data()[i] - target.depth.data()[i]).abs();
            let (dot, np, nt) = cosine_parts(
                &pred.normals.data()[3 * i..3 * i + 3],
                &target.normals.data()[3 * i..3 * i + 3],
            );
            nl += 1.0 - (dot / (np * nt)).clamp(-1.0, 1.0);
        }
        b.depth = dl / count as f64;
        b.normals = nl / count as f64;
    }

    let pm = pred.mask.data();
    b.mask = pm
        .iter()
        .zip(m)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / pm.len() as f64;

    b.adv = -log_softmax(&pred.class_logits)[label];
    Ok((b.weighted_sum(weights), b))
}

/// Gradient of the weighted total with respect to the activated outputs.
/// Terms with zero weight produce `None`.
pub fn loss_output_grads(
    pred: &PredictionSet,
    target: &RenderSample,
    label: usize,
    weights: &LossWeights,
) -> Result<OutputGrads> {
    check_shapes(pred, target, label)?;
    weights.validate()?;
    let n = pred.resolution();
    let mut out = OutputGrads::default();
    let m = target.mask.data();
    let count = m.iter().filter(|&&v| v > 0.5).count();

    if weights.w_rgb > 0.0 {
        let scale = weights.w_rgb / (3 * n * n) as f64;
        let g = pred.rgb.data().iter().zip(target.rgb.data()).map(|(p, t)| scale * sign(p - t)).collect();
        out.rgb = Some(Raster::from_vec(n, n, 3, g)?);
    }
    if weights.w_depth > 0.0 && count > 0 {
        let scale = weights.w_depth / count as f64;
        let mut g = Raster::new(n, n, 1);
        for (i, _) in m.iter().enumerate().filter(|(_, &v)| v > 0.5) {
            g.data_mut()[i] = scale * sign(pred.depth.data()[i] - target.depth.data()[i]);
        }
        out.depth = Some(g);
    }
    if weights.w_normals > 0.0 && count > 0 {
        let scale = weights.w_normals / count as f64;
        let mut g = Raster::new(n, n, 3);
        for (i, _) in m.iter().enumerate().filter(|(_, &v)| v > 0.5) {
            let p = &pred.normals.data()[3 * i..3 * i + 3];
            let t = &target.normals.data()[3 * i..3 * i + 3];
            let (dot, np, nt) = cosine_parts(p, t);
            let cos = dot / (np * nt);
            // d(1 - cos)/dp = -(t / (|p||t|) - cos p / |p|^2)
            for c in 0..3 {
                g.data_mut()[3 * i + c] = -scale * (t[c] / (np * nt) - cos * p[c] / (np * np));
            }
        }
        out.normals = Some(g);
    }
    if weights.w_mask > 0.0 {
        let scale = weights.w_mask / (n * n) as f64;
        let g = pred
            .mask
            .data()
            .iter()
            .zip(m)
            .map(|(&p, &t)| {
                if p < BCE_CLAMP || p > 1.0 - BCE_CLAMP {
                    0.0
                } else {
                    scale * (p - t) / (p * (1.0 - p))
                }
            })
            .collect();
        out.mask = Some(Raster::from_vec(n, n, 1, g)?);
    }
    if weights.w_adv > 0.0 {
        let mut g: Vec<f64> = log_softmax(&pred.class_logits).iter().map(|v| weights.w_adv * v.exp()).collect();
        g[label] -= weights.w_adv;
        out.class_logits = Some(g);
    }
    Ok(out)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
