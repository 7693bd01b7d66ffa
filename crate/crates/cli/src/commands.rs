use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sketch2statue::datagen::{self, GenConfig, PlaceholderSpec};
use sketch2statue::net::Checkpoint;
use sketch2statue::recon::{self, ReconStatus, DEFAULT_MASK_THRESHOLD};
use sketch2statue::sketch::{external_translate, SketchMethod, DEFAULT_DOG_K, DEFAULT_DOG_SIGMA, DEFAULT_DOG_TAU};
use sketch2statue::train::dataset::depth_scale_for;
use sketch2statue::train::{self, split_by_statue, DatasetIndex, SplitSpec, TrainConfig, DEFAULT_FRACTIONS};
use sketch2statue::geometry::OrthoCamera;
use sketch2statue::{Error, Exec, Raster, Result};

use crate::{Common, EvalArgs, GenDataArgs, InferArgs, MethodArg, ReconstructArgs, SketchifyArgs, Subset, TrainArgs};

pub const SCHEMA_VERSION: u32 = 1;

/// Exit code and error kind for an error.
pub fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::InvalidInput(_) => (2, "invalid_input"),
        e if e.is_data_error() => (3, "data_error"),
        _ => (4, "runtime_error"),
    }
}

fn load_config<T: DeserializeOwned + Default>(common: &Common) -> Result<T> {
    let Some(path) = &common.config else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        other => {
            return Err(Error::invalid(format!(
                "{}: schema_version must be {SCHEMA_VERSION}, found {other:?}",
                path.display()
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::invalid(format!("missing --{flag} (or the matching config field)")))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn exec_for(workers: Option<usize>) -> Exec {
    match workers {
        Some(1) => Exec::Sequential,
        _ => Exec::Parallel,
    }
}

#[cfg(feature = "parallel")]
fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::invalid("--workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == Some(0) {
        return Err(Error::invalid("--workers must be at least 1"));
    }
    Ok(f())
}

pub fn gen_data(a: GenDataArgs) -> Result<String> {
    let mut cfg: GenConfig = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.output {
        cfg.output = o;
    }
    if let Some(m) = a.meshes {
        cfg.meshes = m;
    }
    if let Some(count) = a.placeholders {
        cfg.placeholders = Some(PlaceholderSpec { count, seed: cfg.seed });
    }
    if let Some(v) = a.views {
        cfg.views = v;
    }
    if let Some(r) = a.resolution {
        cfg.resolution = r;
    }
    if let Some(e) = a.elevation {
        cfg.elevation_deg = e;
    }
    if a.dry_run {
        let plan = datagen::plan(&cfg)?;
        return Ok(json!({
            "statues": plan.metadata.statues.len(),
            "views_per_statue": plan.metadata.views_per_statue,
            "samples": plan.samples,
            "output": cfg.output,
        })
        .to_string());
    }
    let exec = exec_for(a.workers);
    let report = with_workers(a.workers, || datagen::generate(&cfg, exec))??;
    Ok(json!({
        "output": cfg.output,
        "samples": report.samples,
        "views_rendered": report.views_rendered,
        "views_skipped": report.views_skipped,
        "files_written": report.files_written,
    })
    .to_string())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SketchifyFile {
    schema_version: u32,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    sketch: Option<SketchMethod>,
    external: Option<String>,
}

pub fn sketchify(a: SketchifyArgs) -> Result<String> {
    let cfg: SketchifyFile = load_config(&a.common)?;
    let input = required(a.input.or(cfg.input), "input")?;
    let output = required(a.output.or(cfg.output), "output")?;
    let external = a.external.or(cfg.external);
    let sketch = if let Some(template) = external {
        external_translate(&input, &template)?
    } else {
        let mut method = match a.method {
            Some(MethodArg::Canny) => SketchMethod::default(),
            Some(MethodArg::Dog) => SketchMethod::Dog {
                sigma: DEFAULT_DOG_SIGMA,
                k: DEFAULT_DOG_K,
                tau: DEFAULT_DOG_TAU,
            },
            Some(MethodArg::Laplacian) => SketchMethod::Laplacian { tau: 0.05 },
            None => cfg.sketch.unwrap_or_default(),
        };
        match &mut method {
            SketchMethod::Canny { low, high, sigma } => {
                *low = a.low.unwrap_or(*low);
                *high = a.high.unwrap_or(*high);
                *sigma = a.sigma.unwrap_or(*sigma);
            }
            SketchMethod::Dog { sigma, k, tau } => {
                *sigma = a.sigma.unwrap_or(*sigma);
                *k = a.k.unwrap_or(*k);
                *tau = a.tau.unwrap_or(*tau);
            }
            SketchMethod::Laplacian { tau } => *tau = a.tau.unwrap_or(*tau),
        }
        let image = Raster::load_rgb(&input)?;
        method.apply(&image.to_gray())?
    };
    sketch.pixels.save_png8(&output)?;
    Ok(json!({
        "output": output,
        "method": sketch.method_tag,
        "blank": sketch.is_blank(),
    })
    .to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SplitFile {
    fractions: (f64, f64, f64),
    seed: Option<u64>,
    train_statues: Option<Vec<u32>>,
    val_statues: Option<Vec<u32>>,
    test_statues: Option<Vec<u32>>,
}

impl Default for SplitFile {
    fn default() -> Self {
        SplitFile {
            fractions: DEFAULT_FRACTIONS,
            seed: None,
            train_statues: None,
            val_statues: None,
            test_statues: None,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    schema_version: u32,
    data: Option<PathBuf>,
    output: Option<PathBuf>,
    split: SplitFile,
    train: TrainConfig,
}

pub const SPLIT_FILE: &str = "split.json";

pub fn train(a: TrainArgs) -> Result<String> {
    let mut cfg: TrainFile = load_config(&a.common)?;
    let t = &mut cfg.train;
    if let Some(s) = a.common.seed {
        t.seed = s;
    }
    t.max_steps = a.max_steps.unwrap_or(t.max_steps);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    t.warmup_samples = a.warmup_samples.unwrap_or(t.warmup_samples);
    t.checkpoint_every = a.checkpoint_every.unwrap_or(t.checkpoint_every);
    if let Some(f) = a.split_fractions {
        cfg.split.fractions = (f[0], f[1], f[2]);
    }
    if a.train_statues.is_some() {
        cfg.split.train_statues = a.train_statues;
    }
    if a.val_statues.is_some() {
        cfg.split.val_statues = a.val_statues;
    }
    if a.test_statues.is_some() {
        cfg.split.test_statues = a.test_statues;
    }
    let data = required(a.data.or(cfg.data), "data")?;
    let output = required(a.output.or(cfg.output), "output")?;
    let index = DatasetIndex::open(&data)?;
    let split = match cfg.split.train_statues.clone() {
        Some(train_statues) => SplitSpec {
            train_statues,
            val_statues: cfg.split.val_statues.clone().unwrap_or_default(),
            test_statues: cfg.split.test_statues.clone().unwrap_or_default(),
            seed: cfg.split.seed.unwrap_or(cfg.train.seed),
        },
        None => split_by_statue(&index.statue_ids(), cfg.split.fractions, cfg.split.seed.unwrap_or(cfg.train.seed))?,
    };
    split.validate(&index.statue_ids())?;
    fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
    write_json(&output.join(SPLIT_FILE), &split)?;
    let exec = if a.sequential { Exec::Sequential } else { Exec::Parallel };
    let outcome = train::train(&index, &split, &cfg.train, &output, a.resume.as_deref(), exec)?;
    Ok(json!({
        "checkpoint": outcome.checkpoint,
        "metrics_log": outcome.metrics_log,
        "final_step": outcome.final_step,
        "train_statues": split.train_statues,
        "val_statues": split.val_statues,
        "test_statues": split.test_statues,
    })
    .to_string())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvalFile {
    schema_version: u32,
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
    statues: Option<Vec<u32>>,
    split: Option<PathBuf>,
    subset: Option<Subset>,
    views_per_statue: Option<usize>,
    allow_training_statues: bool,
    output: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<String> {
    let cfg: EvalFile = load_config(&a.common)?;
    let checkpoint = required(a.checkpoint.or(cfg.checkpoint), "checkpoint")?;
    let data = required(a.data.or(cfg.data), "data")?;
    let statues = match (a.statues.or(cfg.statues), a.split.or(cfg.split)) {
        (Some(s), _) => s,
        (None, Some(split_path)) => {
            let text = fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
            let split: SplitSpec = serde_json::from_str(&text)?;
            match a.subset.or(cfg.subset).unwrap_or(Subset::Test) {
                Subset::Train => split.train_statues,
                Subset::Val => split.val_statues,
                Subset::Test => split.test_statues,
            }
        }
        (None, None) => return Err(Error::invalid("give --statues or --split")),
    };
    let index = DatasetIndex::open(&data)?;
    let report = train::evaluate_checkpoint(
        &checkpoint,
        &index,
        &statues,
        a.views_per_statue.or(cfg.views_per_statue),
        a.allow_training_statues || cfg.allow_training_statues,
        Exec::Parallel,
    )?;
    if let Some(out) = a.output.or(cfg.output) {
        write_json(&out, &report)?;
    }
    Ok(serde_json::to_string(&report)?)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct InferFile {
    schema_version: u32,
    checkpoint: Option<PathBuf>,
    sketch: Option<PathBuf>,
    output: Option<PathBuf>,
    panel: bool,
}

fn depth_range(ck: &Checkpoint) -> f64 {
    2.0 * ck.meta.reference_distance
}

pub fn infer(a: InferArgs) -> Result<String> {
    let cfg: InferFile = load_config(&a.common)?;
    let checkpoint = required(a.checkpoint.or(cfg.checkpoint), "checkpoint")?;
    let sketch_path = required(a.sketch.or(cfg.sketch), "sketch")?;
    let output = required(a.output.or(cfg.output), "output")?;
    let ck = Checkpoint::load(&checkpoint)?;
    let sketch = Raster::load_gray(&sketch_path)?;
    let pred = recon::infer(&ck.network, &sketch)?;
    fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
    let scale = ck.meta.depth_scale.unwrap_or_else(|| depth_scale_for(ck.meta.reference_distance));
    pred.rgb.save_png8(&output.join("rgb.png"))?;
    pred.depth.save_png16(&output.join("depth.png"), scale)?;
    pred.normals.map(|v| 0.5 * (v + 1.0)).save_png8(&output.join("normals.png"))?;
    pred.mask.save_png8(&output.join("mask.png"))?;
    let mut files = vec!["rgb.png", "depth.png", "normals.png", "mask.png"];
    if a.panel || cfg.panel {
        recon::save_panel(&sketch, &pred, depth_range(&ck), &output.join("panel.png"))?;
        files.push("panel.png");
    }
    Ok(json!({ "output": output, "files": files, "resolution": pred.resolution(), "depth_scale": scale }).to_string())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ReconstructFile {
    schema_version: u32,
    checkpoint: Option<PathBuf>,
    sketch: Option<PathBuf>,
    output: Option<PathBuf>,
    threshold: Option<f64>,
    azimuth: Option<f64>,
    elevation: Option<f64>,
    panel: bool,
}

pub fn reconstruct(a: ReconstructArgs) -> Result<String> {
    let cfg: ReconstructFile = load_config(&a.common)?;
    let checkpoint = required(a.checkpoint.or(cfg.checkpoint), "checkpoint")?;
    let sketch_path = required(a.sketch.or(cfg.sketch), "sketch")?;
    let output = required(a.output.or(cfg.output), "output")?;
    let threshold = a.threshold.or(cfg.threshold).unwrap_or(DEFAULT_MASK_THRESHOLD);
    let ck = Checkpoint::load(&checkpoint)?;
    let base = recon::default_camera(&ck)?;
    let camera = OrthoCamera::new(
        a.azimuth.or(cfg.azimuth).unwrap_or(base.azimuth_deg),
        a.elevation.or(cfg.elevation).unwrap_or(base.elevation_deg),
        base.half_extent,
        base.reference_distance,
        base.resolution,
    )?;
    let sketch = Raster::load_gray(&sketch_path)?;
    let pred = recon::infer(&ck.network, &sketch)?;
    let rec = recon::reconstruct_from_predictions(&pred, threshold, &camera)?;
    if a.panel || cfg.panel {
        recon::save_panel(&sketch, &pred, depth_range(&ck), &output.with_extension("panel.png"))?;
    }
    let status = match rec.status {
        ReconStatus::Ok => {
            recon::export_ply(&rec.cloud, &output)?;
            "ok"
        }
        ReconStatus::EmptyMask => {
            eprintln!("warning: no pixel reached mask threshold {threshold}; no PLY written");
            "empty_mask"
        }
    };
    Ok(json!({ "output": output, "points": rec.cloud.len(), "status": status, "threshold": threshold }).to_string())
}
