//! Synthetic dataset generation: turntable renders of every statue, their
//! sketches, and `metadata.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{io::load_mesh, rasterize, shapes, OrthoCamera, TriangleMesh, Vec3};
use crate::raster::Raster;
use crate::sketch::SketchMethod;
use crate::train::dataset::{
    depth_scale_for, view_dir, DatasetMetadata, StatueEntry, METADATA_FILE, METADATA_SCHEMA_VERSION, MODALITY_FILES,
};

pub const GEN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceholderSpec {
    pub count: usize,
    pub seed: u64,
}

/// Configuration of a generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub schema_version: u32,
    pub output: PathBuf,
    /// OBJ or PLY files; statue ids follow list order.
    pub meshes: Vec<PathBuf>,
    /// Procedural statues appended after the listed meshes.
    pub placeholders: Option<PlaceholderSpec>,
    pub views: usize,
    pub resolution: usize,
    pub elevation_deg: f64,
    pub half_extent: f64,
    pub reference_distance: f64,
    pub sketch: SketchMethod,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            schema_version: GEN_SCHEMA_VERSION,
            output: PathBuf::from("dataset"),
            meshes: Vec::new(),
            placeholders: None,
            views: 360,
            resolution: 640,
            elevation_deg: 0.0,
            half_extent: crate::geometry::DEFAULT_HALF_EXTENT,
            reference_distance: crate::geometry::DEFAULT_REFERENCE_DISTANCE,
            sketch: SketchMethod::default(),
            seed: 0,
        }
    }
}

/// What a run would produce.
#[derive(Debug, Clone, PartialEq)]
pub struct GenPlan {
    pub metadata: DatasetMetadata,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenReport {
    pub samples: usize,
    pub views_rendered: usize,
    pub views_skipped: usize,
    pub files_written: usize,
}

const PLACEHOLDER_PREFIX: &str = "placeholder:";

/// Validates the configuration and lists the statues without rendering.
/// Every absent mesh path is named in the error.
pub fn plan(config: &GenConfig) -> Result<GenPlan> {
    if config.schema_version != GEN_SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unsupported gen-data schema_version {}",
            config.schema_version
        )));
    }
    if config.views == 0 {
        return Err(Error::invalid("views must be at least 1"));
    }
    // camera parameter checks
    OrthoCamera::new(0.0, config.elevation_deg, config.half_extent, config.reference_distance, config.resolution)?;
    if !(config.reference_distance > 0.0) {
        return Err(Error::invalid("reference_distance must be positive"));
    }
    let missing: Vec<String> = config
        .meshes
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(format!("mesh files not found: {}", missing.join(", "))));
    }
    let mut statues: Vec<StatueEntry> = config
        .meshes
        .iter()
        .enumerate()
        .map(|(i, p)| StatueEntry {
            id: i as u32,
            source: p.display().to_string(),
        })
        .collect();
    if let Some(ph) = &config.placeholders {
        let base = statues.len() as u64;
        statues.extend((0..ph.count as u64).map(|i| StatueEntry {
            id: (base + i) as u32,
            source: format!("{PLACEHOLDER_PREFIX}{}", ph.seed.wrapping_add(i)),
        }));
    }
    if statues.is_empty() {
        return Err(Error::invalid("configuration lists no meshes and no placeholders"));
    }
    let metadata = DatasetMetadata {
        schema_version: METADATA_SCHEMA_VERSION,
        sketch_method: config.sketch.clone(),
        depth_scale: depth_scale_for(config.reference_distance),
        resolution: config.resolution,
        views_per_statue: config.views,
        elevation_deg: config.elevation_deg,
        half_extent: config.half_extent,
        reference_distance: config.reference_distance,
        seed: config.seed,
        statues,
    };
    Ok(GenPlan {
        samples: metadata.sample_count(),
        metadata,
    })
}

/// Builds the normalized mesh of one statue. Placeholders get a
/// seed-dependent stone tint.
pub fn statue_mesh(entry: &StatueEntry) -> Result<TriangleMesh> {
    if let Some(seed) = entry.source.strip_prefix(PLACEHOLDER_PREFIX) {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::invalid(format!("bad placeholder source {}", entry.source)))?;
        let mut mesh = shapes::placeholder_statue(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let tint = Vec3::new(rng.random_range(0.6..1.0), rng.random_range(0.5..0.9), rng.random_range(0.4..0.8));
        mesh.vertex_colors = Some(vec![tint; mesh.vertex_count()]);
        return Ok(mesh);
    }
    load_mesh(Path::new(&entry.source))?.normalize()
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("part.png");
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn view_complete(dir: &Path) -> bool {
    MODALITY_FILES.iter().all(|f| dir.join(f).is_file())
}

/// Renders one view and writes its five files.
fn write_view(mesh: &TriangleMesh, meta: &DatasetMetadata, statue: u32, view: usize, dir: &Path) -> Result<()> {
    let camera = meta.camera(view)?;
    let mut sample = rasterize(mesh, &camera);
    sample.statue_id = statue;
    let sketch = meta.sketch_method.apply(&sample.gray())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let normals = sample.normals.map(|v| 0.5 * (v + 1.0));
    write_atomic(&dir.join("sketch.png"), |p| sketch.pixels.save_png8(p))?;
    write_atomic(&dir.join("rgb.png"), |p| sample.rgb.save_png8(p))?;
    write_atomic(&dir.join("depth.png"), |p| sample.depth.save_png16(p, meta.depth_scale))?;
    write_atomic(&dir.join("normals.png"), |p| normals.save_png8(p))?;
    write_atomic(&dir.join("mask.png"), |p| sample.mask.save_png8(p))
}

/// Generates the dataset. Views whose five files already exist are skipped,
/// so an unchanged re-run writes nothing. Views are rendered with `exec`.
pub fn generate(config: &GenConfig, exec: Exec) -> Result<GenReport> {
    let GenPlan { metadata, samples } = plan(config)?;
    let root = &config.output;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let meta_path = root.join(METADATA_FILE);
    let meta_json = serde_json::to_string_pretty(&metadata)? + "\n";
    let mut report = GenReport {
        samples,
        ..Default::default()
    };
    match fs::read_to_string(&meta_path) {
        Ok(existing) if existing == meta_json => {}
        Ok(_) => {
            return Err(Error::invalid(format!(
                "{} holds a dataset generated with different parameters",
                root.display()
            )))
        }
        Err(_) => {
            fs::write(&meta_path, &meta_json).map_err(|e| Error::io(&meta_path, e))?;
            report.files_written += 1;
        }
    }

    for entry in &metadata.statues {
        let todo: Vec<usize> = (0..metadata.views_per_statue)
            .filter(|&v| !view_complete(&view_dir(root, entry.id, v)))
            .collect();
        report.views_skipped += metadata.views_per_statue - todo.len();
        if todo.is_empty() {
            continue;
        }
        let mesh = statue_mesh(entry)?;
        let results = exec.map(&todo, |&v| write_view(&mesh, &metadata, entry.id, v, &view_dir(root, entry.id, v)));
        for r in results {
            r?;
            report.views_rendered += 1;
            report.files_written += MODALITY_FILES.len();
        }
    }
    Ok(report)
}

/// Applies a sketch filter to an image with any number of channels.
pub fn sketchify(image: &Raster, method: &SketchMethod) -> Result<Raster> {
    Ok(method.apply(&image.to_gray())?.pixels)
}
