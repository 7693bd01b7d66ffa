//! The training loop.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetIndex, Record, ViewSample};
use super::eval::{evaluate, Metrics};
use super::split::SplitSpec;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::net::{Adam, AdamConfig, Checkpoint, CheckpointMeta, LossBreakdown, LossWeights, Mode, NetConfig, Network};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const ACCESS_FILE: &str = "access.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// How the gradient reversal strength evolves over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrlSchedule {
    Constant,
    /// Grows linearly from 0 to the configured lambda over `steps` steps.
    LinearRamp { steps: u64 },
}

impl GrlSchedule {
    pub fn lambda(&self, base: f64, step: u64) -> f64 {
        match *self {
            GrlSchedule::Constant => base,
            GrlSchedule::LinearRamp { steps } => base * (step as f64 / steps.max(1) as f64).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Samples seen before the non-RGB terms switch on.
    pub warmup_samples: u64,
    pub max_steps: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub net: NetConfig,
    pub grl_schedule: GrlSchedule,
    /// Random horizontal mirroring of training samples.
    pub flip_augment: bool,
    /// Views per validation statue evaluated at every epoch end; 0 disables.
    pub val_views_per_statue: usize,
    /// Decoded training samples kept in memory are capped at this many bytes.
    pub sample_cache_bytes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 12,
            learning_rate: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            warmup_samples: 60_000,
            max_steps: 10_000,
            checkpoint_every: 1000,
            seed: 0,
            weights: LossWeights::default(),
            net: NetConfig::default(),
            grl_schedule: GrlSchedule::Constant,
            flip_augment: false,
            val_views_per_statue: 4,
            sample_cache_bytes: 1 << 30,
        }
    }
}

impl TrainConfig {
    /// CPU-sized profile.
    pub fn desk(image_size: usize) -> Self {
        TrainConfig {
            batch_size: 4,
            learning_rate: 1e-3,
            warmup_samples: 400,
            max_steps: 500,
            checkpoint_every: 100,
            net: NetConfig::desk(image_size, 1),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::invalid("checkpoint_every must be at least 1"));
        }
        self.weights.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Step {
        step: u64,
        epoch: u64,
        phase: u8,
        samples_seen: u64,
        loss: f64,
        terms: LossBreakdown,
        grl_lambda: f64,
        empty_masks: usize,
        /// Sum of absolute gradients on the depth, normals and mask heads
        /// and the classifier.
        nonrgb_head_grad_abs: f64,
    },
    Val {
        step: u64,
        epoch: u64,
        metrics: Metrics,
    },
}

impl LogEntry {
    pub fn step(&self) -> u64 {
        match self {
            LogEntry::Step { step, .. } | LogEntry::Val { step, .. } => *step,
        }
    }
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Most recent checkpoint.
    pub checkpoint: PathBuf,
    pub metrics_log: PathBuf,
    pub final_step: u64,
    /// Statues whose samples the loop consumed.
    pub accessed_statues: BTreeSet<u32>,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SALT_INIT: u64 = 1;
const SALT_ORDER: u64 = 2;
const SALT_DROPOUT: u64 = 3;
const SALT_FLIP: u64 = 4;

/// Global sample index to record position, reshuffled every epoch.
struct SampleOrder {
    seed: u64,
    n: usize,
    epoch: Option<u64>,
    perm: Vec<usize>,
}

impl SampleOrder {
    fn position(&mut self, sample: u64) -> usize {
        let epoch = sample / self.n as u64;
        if self.epoch != Some(epoch) {
            self.perm = (0..self.n).collect();
            self.perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(mix(self.seed, SALT_ORDER), epoch)));
            self.epoch = Some(epoch);
        }
        self.perm[(sample % self.n as u64) as usize]
    }
}

fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("step_{step:08}.ckpt"))
}

fn nonrgb_ranges(net: &Network) -> Vec<std::ops::Range<usize>> {
    ["heads.depth", "heads.normals", "heads.mask", "classifier."]
        .iter()
        .flat_map(|p| net.layout().ranges_with_prefix(p))
        .collect()
}

/// Trains from scratch, or continues from `resume` (a checkpoint written by
/// an earlier run with the same configuration). Writes the metrics log,
/// checkpoints, and the statue access log into `out_dir`.
pub fn train(
    index: &DatasetIndex,
    split: &SplitSpec,
    config: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    exec: Exec,
) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate(&index.statue_ids())?;
    if split.train_statues.is_empty() {
        return Err(Error::invalid("split has no training statues"));
    }
    let mut net_cfg = config.net.clone();
    net_cfg.num_statue_classes = split.train_statues.len();
    if net_cfg.image_size != index.metadata.resolution {
        return Err(Error::invalid(format!(
            "net image_size {} differs from dataset resolution {}",
            net_cfg.image_size, index.metadata.resolution
        )));
    }
    let records: Vec<&Record> = index.records_for(&split.train_statues);
    let n = records.len();
    if n == 0 {
        return Err(Error::MissingData("no training samples".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(METRICS_FILE);

    let (mut net, mut adam, start) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let saved: TrainConfig = serde_json::from_value(ck.meta.extra["train_config"].clone())
                .map_err(|e| Error::Checkpoint(format!("checkpoint lacks training state: {e}")))?;
            if (TrainConfig { max_steps: config.max_steps, ..saved }) != *config {
                return Err(Error::invalid("resume configuration differs from the checkpoint's"));
            }
            if ck.meta.train_statues != split.train_statues || ck.meta.dataset_hash.as_deref() != Some(&index.hash) {
                return Err(Error::invalid("resume split or dataset differs from the checkpoint's"));
            }
            let adam = ck.optimizer.ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;
            let kept: Vec<String> = fs::read_to_string(&log_path)
                .map_err(|e| Error::io(&log_path, e))?
                .lines()
                .filter(|l| serde_json::from_str::<LogEntry>(l).map(|e| e.step() <= ck.meta.step).unwrap_or(false))
                .map(|l| format!("{l}\n"))
                .collect();
            fs::write(&log_path, kept.concat()).map_err(|e| Error::io(&log_path, e))?;
            (ck.network, adam, ck.meta.step)
        }
        None => {
            let net = Network::new(net_cfg.clone(), mix(config.seed, SALT_INIT))?;
            let adam = Adam::new(config.adam(), net.num_params());
            fs::write(&log_path, "").map_err(|e| Error::io(&log_path, e))?;
            (net, adam, 0)
        }
    };
    if net.config() != &net_cfg {
        return Err(Error::Checkpoint("checkpoint network configuration differs".into()));
    }

    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut order = SampleOrder {
        seed: config.seed,
        n,
        epoch: None,
        perm: Vec::new(),
    };
    let res = index.metadata.resolution;
    let cache_limit = config.sample_cache_bytes / (res * res * 9 * 8).max(1);
    let mut cache: HashMap<usize, ViewSample> = HashMap::new();
    let mut accessed = BTreeSet::new();
    let b = config.batch_size as u64;
    let frozen = nonrgb_ranges(&net);
    let mut last_checkpoint = resume.map(Path::to_path_buf);
    let meta_for = |step: u64| CheckpointMeta {
        dataset_hash: Some(index.hash.clone()),
        train_statues: split.train_statues.clone(),
        step,
        half_extent: index.metadata.half_extent,
        reference_distance: index.metadata.reference_distance,
        depth_scale: Some(index.metadata.depth_scale),
        extra: serde_json::json!({ "train_config": config, "split": split }),
    };

    for step in start + 1..=config.max_steps {
        let first = (step - 1) * b;
        let phase: u8 = if first < config.warmup_samples { 1 } else { 2 };
        let weights = if phase == 1 { LossWeights::rgb_only() } else { config.weights };
        let lambda = config.grl_schedule.lambda(net_cfg.grl_lambda, step);

        let batch: Vec<(u64, usize)> = (first..first + b).map(|s| (s, order.position(s))).collect();
        let missing: Vec<usize> = batch.iter().map(|x| x.1).filter(|p| !cache.contains_key(p)).collect::<BTreeSet<_>>().into_iter().collect();
        let loaded = exec.map(&missing, |&p| index.load(records[p]));
        let mut fresh = HashMap::new();
        for (p, s) in missing.iter().zip(loaded) {
            fresh.insert(*p, s?);
        }
        for &(_, p) in &batch {
            accessed.insert(records[p].statue_id);
        }

        let results = exec.map(&batch, |&(s, p)| -> Result<(Vec<f64>, f64, LossBreakdown)> {
            let base = cache.get(&p).or_else(|| fresh.get(&p)).expect("sample loaded");
            let flipped;
            let sample = if config.flip_augment && ChaCha8Rng::seed_from_u64(mix(mix(config.seed, SALT_FLIP), s)).random::<bool>() {
                flipped = base.flipped();
                &flipped
            } else {
                base
            };
            let label = split.label_of(records[p].statue_id).expect("training statue");
            let mut g = vec![0.0; net.num_params()];
            let mode = Mode::Train {
                seed: mix(mix(config.seed, SALT_DROPOUT), s),
            };
            let (loss, terms) = net.loss_and_grad(&sample.sketch, &sample.target, label, &weights, mode, -lambda, &mut g)?;
            Ok((g, loss, terms))
        });
        for (p, s) in fresh {
            if cache.len() < cache_limit {
                cache.insert(p, s);
            }
        }

        let mut grads = vec![0.0; net.num_params()];
        let mut loss = 0.0;
        let mut terms = LossBreakdown::default();
        let mut empty_masks = 0;
        for r in results {
            let (g, l, t) = r?;
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            loss += l;
            terms.rgb += t.rgb;
            terms.depth += t.depth;
            terms.normals += t.normals;
            terms.mask += t.mask;
            terms.adv += t.adv;
            empty_masks += t.empty_mask as usize;
        }
        let inv = 1.0 / b as f64;
        grads.iter_mut().for_each(|g| *g *= inv);
        loss *= inv;
        for v in [&mut terms.rgb, &mut terms.depth, &mut terms.normals, &mut terms.mask, &mut terms.adv] {
            *v *= inv;
        }
        terms.empty_mask = empty_masks > 0;
        if !loss.is_finite() || !terms.all_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                last_checkpoint,
            });
        }
        let nonrgb: f64 = frozen.iter().map(|r| grads[r.clone()].iter().map(|g| g.abs()).sum::<f64>()).sum();
        adam.step(&mut net.params, &grads);

        let epoch = first / n as u64;
        let mut lines = vec![LogEntry::Step {
            step,
            epoch,
            phase,
            samples_seen: first + b,
            loss,
            terms,
            grl_lambda: lambda,
            empty_masks,
            nonrgb_head_grad_abs: nonrgb,
        }];
        let finished_epoch = (first + b) / n as u64;
        if finished_epoch > epoch && config.val_views_per_statue > 0 && !split.val_statues.is_empty() {
            let report = evaluate(&net, index, &split.val_statues, Some(config.val_views_per_statue), exec)?;
            lines.push(LogEntry::Val {
                step,
                epoch,
                metrics: report.aggregate,
            });
        }
        for l in &lines {
            let text = serde_json::to_string(l)?;
            writeln!(log, "{text}").map_err(|e| Error::io(&log_path, e))?;
        }
        if step % config.checkpoint_every == 0 || step == config.max_steps {
            let path = checkpoint_path(out_dir, step);
            Checkpoint {
                network: net.clone(),
                meta: meta_for(step),
                optimizer: Some(adam.clone()),
            }
            .save(&path)?;
            last_checkpoint = Some(path);
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let access_path = out_dir.join(ACCESS_FILE);
    fs::write(&access_path, serde_json::to_string(&accessed)?).map_err(|e| Error::io(&access_path, e))?;
    let checkpoint = match last_checkpoint {
        Some(p) => p,
        None => {
            let path = checkpoint_path(out_dir, start);
            Checkpoint {
                network: net,
                meta: meta_for(start),
                optimizer: Some(adam),
            }
            .save(&path)?;
            path
        }
    };
    Ok(TrainOutcome {
        checkpoint,
        metrics_log: log_path,
        final_step: config.max_steps.max(start),
        accessed_statues: accessed,
    })
}
