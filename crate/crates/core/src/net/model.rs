//! The residual encoder-decoder with four modality heads and an adversarial
//! statue classifier behind a gradient reversal layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_mask, grl_backward, grl_forward, sigmoid, silu, silu_backward, softplus, upsample2,
    upsample2_backward, Conv2d, Linear, ResBlock, ResCache, Tensor,
};
use super::params::{Init, ParamLayout};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Small constant inside the normals head normalisation.
pub const NORMAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub image_size: usize,
    pub latent_dim: usize,
    pub base_channels: usize,
    /// Upper bound on channel width at any stage.
    pub max_channels: usize,
    pub num_res_blocks_per_stage: usize,
    pub num_statue_classes: usize,
    pub dropout_p: f64,
    pub grl_lambda: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            image_size: 640,
            latent_dim: 2050,
            base_channels: 32,
            max_channels: 256,
            num_res_blocks_per_stage: 2,
            num_statue_classes: 91,
            dropout_p: 0.5,
            grl_lambda: 0.1,
        }
    }
}

impl NetConfig {
    /// A CPU-sized network for quick experiments.
    pub fn desk(image_size: usize, num_statue_classes: usize) -> Self {
        NetConfig {
            image_size,
            base_channels: 8,
            max_channels: 32,
            num_res_blocks_per_stage: 1,
            num_statue_classes,
            dropout_p: 0.1,
            ..NetConfig::default()
        }
    }

    /// Number of stride-2 stages: halve while the size stays even and at
    /// least 4.
    pub fn num_downsample_stages(&self) -> usize {
        let mut s = self.image_size;
        let mut n = 0;
        while s % 2 == 0 && s / 2 >= 4 {
            s /= 2;
            n += 1;
        }
        n
    }

    pub fn bottleneck_size(&self) -> usize {
        self.image_size >> self.num_downsample_stages()
    }

    pub fn channels(&self, stage: usize) -> usize {
        (self.base_channels << stage).min(self.max_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::invalid(format!("image_size {} below 8", self.image_size)));
        }
        if self.num_downsample_stages() == 0 {
            return Err(Error::invalid(format!("image_size {} cannot be downsampled", self.image_size)));
        }
        if self.latent_dim == 0 || self.base_channels == 0 || self.max_channels == 0 {
            return Err(Error::invalid("latent_dim and channel widths must be positive"));
        }
        if self.num_res_blocks_per_stage == 0 {
            return Err(Error::invalid("num_res_blocks_per_stage must be at least 1"));
        }
        if self.num_statue_classes == 0 {
            return Err(Error::invalid("num_statue_classes must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if !(self.grl_lambda >= 0.0 && self.grl_lambda.is_finite()) {
            return Err(Error::invalid(format!("grl_lambda {} must be finite and >= 0", self.grl_lambda)));
        }
        Ok(())
    }
}

/// Network outputs for one sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub rgb: Raster,
    pub depth: Raster,
    pub normals: Raster,
    pub mask: Raster,
    pub class_logits: Vec<f64>,
}

impl PredictionSet {
    pub fn resolution(&self) -> usize {
        self.mask.width()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.mask.width();
        self.rgb.check_dims(n, n, 3)?;
        self.depth.check_dims(n, n, 1)?;
        self.normals.check_dims(n, n, 3)?;
        self.mask.check_dims(n, n, 1)?;
        let finite = self.rgb.all_finite()
            && self.depth.all_finite()
            && self.normals.all_finite()
            && self.mask.all_finite()
            && self.class_logits.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("prediction contains non-finite values"));
        }
        if self.depth.data().iter().any(|&d| d < 0.0) {
            return Err(Error::invalid("negative predicted depth"));
        }
        for p in self.normals.data().chunks_exact(3) {
            if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() > 1.0 + 1e-4 {
                return Err(Error::invalid("predicted normal longer than 1"));
            }
        }
        Ok(())
    }
}

/// Gradients of a scalar objective with respect to the activated outputs.
/// `None` marks a modality that does not contribute.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub rgb: Option<Raster>,
    pub depth: Option<Raster>,
    pub normals: Option<Raster>,
    pub mask: Option<Raster>,
    pub class_logits: Option<Vec<f64>>,
}

/// Forward-pass mode. Training mode applies dropout drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

#[derive(Debug, Clone)]
struct Encoder {
    stem: Conv2d,
    blocks: Vec<ResBlock>,
    fc: Linear,
}

#[derive(Debug, Clone)]
struct Decoder {
    fc: Linear,
    /// One entry per upsampling stage.
    stages: Vec<Vec<ResBlock>>,
    rgb: Conv2d,
    depth: Conv2d,
    normals: Conv2d,
    mask: Conv2d,
    classifier: Linear,
}

/// Everything recorded by a forward pass that the backward pass needs.
#[derive(Debug, Clone)]
pub struct Trace {
    stem_cols: Vec<f64>,
    stem_pre: Tensor,
    enc_caches: Vec<ResCache>,
    enc_flat: Vec<f64>,
    pub latent: Vec<f64>,
    dec_pre: Vec<f64>,
    class_in: Vec<f64>,
    dec_caches: Vec<(ResCache, Option<Vec<f64>>)>,
    head_cols: Vec<f64>,
    raw_normals: Tensor,
    raw_depth: Tensor,
    pub prediction: PredictionSet,
}

/// Softplus inverse of 2, so the depth head starts near the middle of the
/// depth range.
const DEPTH_BIAS: f64 = 1.854_587_164_755_52;
const NORMAL_BIAS: [f64; 3] = [0.0, 0.0, 1.0];

/// Network architecture together with its flat parameter vector.
///
/// The classifier reads `tanh` of the reversed trunk features, which keeps
/// the adversarial objective bounded.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetConfig,
    layout: ParamLayout,
    encoder: Encoder,
    decoder: Decoder,
    pub params: Vec<f64>,
}

impl Network {
    /// Builds the architecture and draws initial parameters from `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::architecture(config)?;
        net.params = net.layout.initialize(seed);
        Ok(net)
    }

    /// Builds the architecture with the given parameter values.
    pub fn with_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::architecture(config)?;
        if params.len() != net.layout.len() {
            return Err(Error::shape(net.layout.len(), params.len()));
        }
        net.params = params;
        Ok(net)
    }

    fn architecture(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::default();
        let stages = config.num_downsample_stages();
        let b = config.bottleneck_size();
        let zero = Init::Constant(0.0);
        let ch = |i| config.channels(i);
        let reps = config.num_res_blocks_per_stage;

        let stem = Conv2d::new(&mut layout, "encoder.stem", 1, ch(0), 3, 1, 1.0, zero);
        let mut blocks = Vec::new();
        for s in 0..stages {
            for r in 0..reps {
                let (cin, stride) = if r == 0 { (ch(s), 2) } else { (ch(s + 1), 1) };
                blocks.push(ResBlock::new(&mut layout, &format!("encoder.stage{s}.block{r}"), cin, ch(s + 1), stride));
            }
        }
        let flat = ch(stages) * b * b;
        let enc_fc = Linear::new(&mut layout, "encoder.fc", flat, config.latent_dim, 1.0);

        let dec_fc = Linear::new(&mut layout, "trunk.fc", config.latent_dim, flat, 2f64.sqrt());
        let mut dec_stages = Vec::new();
        for j in 0..stages {
            let level = stages - j;
            let mut stage = Vec::new();
            for r in 0..reps {
                let cin = if r == 0 { ch(level) } else { ch(level - 1) };
                stage.push(ResBlock::new(&mut layout, &format!("trunk.stage{j}.block{r}"), cin, ch(level - 1), 1));
            }
            dec_stages.push(stage);
        }
        let c0 = ch(0);
        let rgb = Conv2d::new(&mut layout, "heads.rgb", c0, 3, 3, 1, 1.0, zero);
        let depth = Conv2d::new(&mut layout, "heads.depth", c0, 1, 3, 1, 0.1, Init::Constant(DEPTH_BIAS));
        let normals = Conv2d::new(&mut layout, "heads.normals", c0, 3, 3, 1, 0.1, Init::Pattern(&NORMAL_BIAS));
        let mask = Conv2d::new(&mut layout, "heads.mask", c0, 1, 3, 1, 1.0, zero);
        let classifier = Linear::new(&mut layout, "classifier.fc", flat, config.num_statue_classes, 1.0);

        Ok(Network {
            config,
            layout,
            encoder: Encoder {
                stem,
                blocks,
                fc: enc_fc,
            },
            decoder: Decoder {
                fc: dec_fc,
                stages: dec_stages,
                rgb,
                depth,
                normals,
                mask,
                classifier,
            },
            params: Vec::new(),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    /// Parameter count of the shared decoder trunk.
    pub fn trunk_param_count(&self) -> usize {
        self.layout.count_with_prefix("trunk.")
    }

    /// Parameter count of the four modality heads plus the classifier.
    pub fn head_param_count(&self) -> usize {
        self.layout.count_with_prefix("heads.") + self.layout.count_with_prefix("classifier.")
    }

    /// Maps a sketch (1 = paper, 0 = ink) to the network input (ink = 1).
    fn input_tensor(&self, sketch: &Raster) -> Result<Tensor> {
        let n = self.config.image_size;
        if sketch.dims() != (n, n, 1) {
            return Err(Error::invalid(format!(
                "sketch is {}x{}x{}, network expects {n}x{n}x1",
                sketch.width(),
                sketch.height(),
                sketch.channels()
            )));
        }
        Ok(Tensor::from_vec(1, n, n, sketch.data().iter().map(|v| 1.0 - v).collect()))
    }

    /// Encodes a sketch to its latent vector (evaluation mode).
    pub fn encode(&self, sketch: &Raster) -> Result<Vec<f64>> {
        let x = self.input_tensor(sketch)?;
        Ok(self.encode_tensor(&x).3)
    }

    #[allow(clippy::type_complexity)]
    fn encode_tensor(&self, x: &Tensor) -> (Vec<f64>, Tensor, Vec<ResCache>, Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let (stem_pre, stem_cols) = self.encoder.stem.forward(x, p);
        let mut h = stem_pre.map(silu);
        let mut caches = Vec::with_capacity(self.encoder.blocks.len());
        for block in &self.encoder.blocks {
            let (y, cache) = block.forward(&h, p);
            caches.push(cache);
            h = y;
        }
        let latent = self.encoder.fc.forward(&h.data, p);
        (stem_cols, stem_pre, caches, latent, h.data)
    }

    /// Decodes a latent vector (evaluation mode).
    pub fn decode(&self, latent: &[f64]) -> Result<PredictionSet> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::invalid(format!(
                "latent has length {}, expected {}",
                latent.len(),
                self.config.latent_dim
            )));
        }
        Ok(self.decode_traced(latent, Mode::Eval).prediction)
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, sketch: &Raster) -> Result<PredictionSet> {
        Ok(self.forward(sketch, Mode::Eval)?.prediction)
    }

    /// Full forward pass keeping every activation for [`Network::backward`].
    pub fn forward(&self, sketch: &Raster, mode: Mode) -> Result<Trace> {
        let x = self.input_tensor(sketch)?;
        let (stem_cols, stem_pre, enc_caches, latent, enc_flat) = self.encode_tensor(&x);
        let mut trace = self.decode_traced(&latent, mode);
        trace.stem_cols = stem_cols;
        trace.stem_pre = stem_pre;
        trace.enc_caches = enc_caches;
        trace.enc_flat = enc_flat;
        Ok(trace)
    }

    fn decode_traced(&self, latent: &[f64], mode: Mode) -> Trace {
        let p = &self.params;
        let cfg = &self.config;
        let b = cfg.bottleneck_size();
        let stages = cfg.num_downsample_stages();
        let mut rng = match mode {
            Mode::Train { seed } if cfg.dropout_p > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };

        let dec_pre = self.decoder.fc.forward(latent, p);
        let trunk0: Vec<f64> = dec_pre.iter().map(|&v| silu(v)).collect();
        let mut h = Tensor::from_vec(cfg.channels(stages), b, b, trunk0.clone());
        let mut dec_caches = Vec::new();
        for stage in &self.decoder.stages {
            h = upsample2(&h);
            for block in stage {
                let (mut y, cache) = block.forward(&h, p);
                let drop = rng.as_mut().map(|r| dropout_mask(y.len(), cfg.dropout_p, r));
                if let Some(m) = &drop {
                    y.data.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
                dec_caches.push((cache, drop));
                h = y;
            }
        }

        let n = cfg.image_size;
        let head_cols = self.decoder.rgb.im2col(&h);
        let raw_rgb = self.decoder.rgb.forward_cols(&head_cols, n, n, p);
        let raw_depth = self.decoder.depth.forward_cols(&head_cols, n, n, p);
        let raw_normals = self.decoder.normals.forward_cols(&head_cols, n, n, p);
        let raw_mask = self.decoder.mask.forward_cols(&head_cols, n, n, p);
        let class_in: Vec<f64> = grl_forward(&trunk0).iter().map(|v| v.tanh()).collect();
        let logits = self.decoder.classifier.forward(&class_in, p);

        let npx = n * n;
        let rgb = Raster::from_fn(n, n, 3, |x, y, c| sigmoid(raw_rgb.data[c * npx + y * n + x]));
        let depth = Raster::from_fn(n, n, 1, |x, y, _| softplus(raw_depth.data[y * n + x]));
        let mask = Raster::from_fn(n, n, 1, |x, y, _| sigmoid(raw_mask.data[y * n + x]));
        let mut normals = Raster::new(n, n, 3);
        for i in 0..npx {
            let z = [raw_normals.data[i], raw_normals.data[npx + i], raw_normals.data[2 * npx + i]];
            let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2] + NORMAL_EPS).sqrt();
            let dst = &mut normals.data_mut()[3 * i..3 * i + 3];
            for c in 0..3 {
                dst[c] = z[c] / r;
            }
        }

        Trace {
            stem_cols: Vec::new(),
            stem_pre: Tensor::zeros(0, 0, 0),
            enc_caches: Vec::new(),
            enc_flat: Vec::new(),
            latent: latent.to_vec(),
            dec_pre,
            class_in,
            dec_caches,
            head_cols,
            raw_normals,
            raw_depth,
            prediction: PredictionSet {
                rgb,
                depth,
                normals,
                mask,
                class_logits: logits,
            },
        }
    }

    /// Backpropagates output gradients through the network, accumulating into
    /// `grads` (same layout as the parameters). The classifier gradient
    /// reaching the trunk is multiplied by `grl_coefficient`; the gradient
    /// reversal layer uses `-lambda`.
    pub fn backward(&self, trace: &Trace, out: &OutputGrads, grl_coefficient: f64, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        let p = &self.params;
        let cfg = &self.config;
        let n = cfg.image_size;
        let npx = n * n;
        let pred = &trace.prediction;
        let kk = self.decoder.rgb.cin * 9;
        let mut dcols: Option<Vec<f64>> = None;
        let mut add_head = |conv: &Conv2d, dy: Tensor, grads: &mut [f64]| {
            let d = conv.backward_cols(&trace.head_cols, &dy, p, grads);
            match dcols.as_mut() {
                Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
                None => dcols = Some(d),
            }
        };

        if let Some(g) = &out.rgb {
            let s = pred.rgb.data();
            let dy = Tensor::from_vec(3, n, n, (0..3 * npx)
                .map(|k| {
                    let (c, i) = (k / npx, k % npx);
                    let v = s[3 * i + c];
                    g.data()[3 * i + c] * v * (1.0 - v)
                })
                .collect());
            add_head(&self.decoder.rgb, dy, grads);
        }
        if let Some(g) = &out.depth {
            let dy = Tensor::from_vec(1, n, n, (0..npx)
                .map(|i| g.data()[i] * sigmoid(trace.raw_depth.data[i]))
                .collect());
            add_head(&self.decoder.depth, dy, grads);
        }
        if let Some(g) = &out.normals {
            let mut dy = Tensor::zeros(3, n, n);
            let z = &trace.raw_normals.data;
            for i in 0..npx {
                let zi = [z[i], z[npx + i], z[2 * npx + i]];
                let r = (zi[0] * zi[0] + zi[1] * zi[1] + zi[2] * zi[2] + NORMAL_EPS).sqrt();
                let nv = &pred.normals.data()[3 * i..3 * i + 3];
                let gv = &g.data()[3 * i..3 * i + 3];
                let dot = nv[0] * gv[0] + nv[1] * gv[1] + nv[2] * gv[2];
                for c in 0..3 {
                    dy.data[c * npx + i] = (gv[c] - nv[c] * dot) / r;
                }
            }
            add_head(&self.decoder.normals, dy, grads);
        }
        if let Some(g) = &out.mask {
            let s = pred.mask.data();
            let dy = Tensor::from_vec(1, n, n, (0..npx).map(|i| g.data()[i] * s[i] * (1.0 - s[i])).collect());
            add_head(&self.decoder.mask, dy, grads);
        }

        let stages = cfg.num_downsample_stages();
        let b = cfg.bottleneck_size();
        let c_s = cfg.channels(stages);
        let mut d_trunk0 = vec![0.0; c_s * b * b];
        let mut trunk_active = false;

        if let Some(dcols) = dcols {
            trunk_active = true;
            let mut dh = self.decoder.rgb.fold(&dcols, n, n);
            debug_assert_eq!(dcols.len(), kk * npx);
            let mut caches = trace.dec_caches.iter().rev();
            for stage in self.decoder.stages.iter().rev() {
                for block in stage.iter().rev() {
                    let (cache, drop) = caches.next().expect("cache per block");
                    if let Some(m) = drop {
                        dh.data.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
                    }
                    dh = block.backward(cache, &dh, p, grads);
                }
                dh = upsample2_backward(&dh);
            }
            d_trunk0.copy_from_slice(&dh.data);
        }
        if let Some(g) = &out.class_logits {
            trunk_active = true;
            let mut d = self.decoder.classifier.backward(&trace.class_in, g, p, grads);
            d.iter_mut().zip(&trace.class_in).for_each(|(v, t)| *v *= 1.0 - t * t);
            let d = grl_backward(&d, -grl_coefficient);
            d_trunk0.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }
        if !trunk_active {
            return;
        }

        let d_pre = silu_backward(&trace.dec_pre, &d_trunk0);
        let d_latent = self.decoder.fc.backward(&trace.latent, &d_pre, p, grads);
        if trace.enc_caches.is_empty() {
            return;
        }

        let d_flat = self.encoder.fc.backward(&trace.enc_flat, &d_latent, p, grads);
        let last = self.encoder.blocks.len() - 1;
        let top = &self.encoder.blocks[last].conv2;
        let side = cfg.bottleneck_size();
        let mut dh = Tensor::from_vec(top.cout, side, side, d_flat);
        for (block, cache) in self.encoder.blocks.iter().zip(&trace.enc_caches).rev() {
            dh = block.backward(cache, &dh, p, grads);
        }
        let d_stem = Tensor::from_vec(dh.c, dh.h, dh.w, silu_backward(&trace.stem_pre, &dh));
        self.encoder.stem.backward_params(&trace.stem_cols, &d_stem, grads);
    }
}
