//! Dataset layout on disk, metadata, and decoded samples.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{OrthoCamera, RenderSample};
use crate::raster::Raster;
use crate::sketch::SketchMethod;

pub const METADATA_FILE: &str = "metadata.json";
pub const METADATA_SCHEMA_VERSION: u32 = 1;
pub const MODALITY_FILES: [&str; 5] = ["sketch.png", "rgb.png", "depth.png", "normals.png", "mask.png"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatueEntry {
    pub id: u32,
    /// Mesh path, or `placeholder:<seed>` for generated statues.
    pub source: String,
}

/// Contents of `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub schema_version: u32,
    pub sketch_method: SketchMethod,
    /// Stored 16-bit depth value per world unit.
    pub depth_scale: f64,
    pub resolution: usize,
    pub views_per_statue: usize,
    pub elevation_deg: f64,
    pub half_extent: f64,
    pub reference_distance: f64,
    pub seed: u64,
    pub statues: Vec<StatueEntry>,
}

impl DatasetMetadata {
    pub fn sample_count(&self) -> usize {
        self.statues.len() * self.views_per_statue
    }

    pub fn azimuth_deg(&self, view: usize) -> f64 {
        view as f64 * 360.0 / self.views_per_statue as f64
    }

    pub fn camera(&self, view: usize) -> Result<OrthoCamera> {
        OrthoCamera::new(
            self.azimuth_deg(view),
            self.elevation_deg,
            self.half_extent,
            self.reference_distance,
            self.resolution,
        )
    }
}

/// Depth scale that maps `[0, 2·reference_distance]` onto the 16-bit range.
pub fn depth_scale_for(reference_distance: f64) -> f64 {
    65535.0 / (2.0 * reference_distance)
}

pub fn statue_dir(root: &Path, statue: u32) -> PathBuf {
    root.join(format!("statue_{statue:04}"))
}

pub fn view_dir(root: &Path, statue: u32, view: usize) -> PathBuf {
    statue_dir(root, statue).join(format!("view_{view:03}"))
}

/// One view of one statue.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub statue_id: u32,
    pub view_index: usize,
    pub dir: PathBuf,
}

impl Record {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

/// Decoded training example.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    /// 1 is paper, 0 is ink.
    pub sketch: Raster,
    pub target: RenderSample,
}

impl ViewSample {
    /// Mirror image; normals flip their x component.
    pub fn flipped(&self) -> ViewSample {
        let mut normals = self.target.normals.flip_horizontal();
        normals.data_mut().chunks_exact_mut(3).for_each(|n| n[0] = -n[0]);
        ViewSample {
            sketch: self.sketch.flip_horizontal(),
            target: RenderSample {
                rgb: self.target.rgb.flip_horizontal(),
                depth: self.target.depth.flip_horizontal(),
                normals,
                mask: self.target.mask.flip_horizontal(),
                camera: self.target.camera,
                statue_id: self.target.statue_id,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub metadata: DatasetMetadata,
    /// SHA-256 of `metadata.json`.
    pub hash: String,
    /// Sorted by (statue, view).
    pub records: Vec<Record>,
}

impl DatasetIndex {
    /// Reads `metadata.json` and checks that every view directory holds all
    /// five modality files.
    pub fn open(root: &Path) -> Result<DatasetIndex> {
        let meta_path = root.join(METADATA_FILE);
        let bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let metadata: DatasetMetadata = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: meta_path.clone(),
            element: "metadata".into(),
            message: e.to_string(),
        })?;
        if metadata.schema_version != METADATA_SCHEMA_VERSION {
            return Err(Error::Parse {
                path: meta_path,
                element: "schema_version".into(),
                message: format!("unsupported version {}", metadata.schema_version),
            });
        }
        let mut seen = BTreeSet::new();
        let mut records = Vec::with_capacity(metadata.sample_count());
        let mut missing = Vec::new();
        for s in &metadata.statues {
            if !seen.insert(s.id) {
                return Err(Error::MissingData(format!("statue {} listed twice", s.id)));
            }
            for v in 0..metadata.views_per_statue {
                let dir = view_dir(root, s.id, v);
                for f in MODALITY_FILES {
                    if !dir.join(f).is_file() {
                        missing.push(dir.join(f));
                    }
                }
                records.push(Record {
                    statue_id: s.id,
                    view_index: v,
                    dir,
                });
            }
        }
        if !missing.is_empty() {
            let shown: Vec<String> = missing.iter().take(5).map(|p| p.display().to_string()).collect();
            return Err(Error::MissingData(format!(
                "{} dataset files missing, e.g. {}",
                missing.len(),
                shown.join(", ")
            )));
        }
        records.sort_by_key(|r| (r.statue_id, r.view_index));
        Ok(DatasetIndex {
            root: root.to_path_buf(),
            metadata,
            hash: hex(&Sha256::digest(&bytes)),
            records,
        })
    }

    pub fn statue_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.metadata.statues.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn records_for(&self, statues: &[u32]) -> Vec<&Record> {
        self.records.iter().filter(|r| statues.contains(&r.statue_id)).collect()
    }

    /// Decodes one record, going through the on-disk cache when
    /// `SKETCH2STATUE_CACHE` is set.
    pub fn load(&self, record: &Record) -> Result<ViewSample> {
        match std::env::var_os(crate::CACHE_ENV) {
            Some(dir) if !dir.is_empty() => self.load_cached(record, Path::new(&dir)),
            _ => self.decode(record),
        }
    }

    fn cache_path(&self, record: &Record, dir: &Path) -> PathBuf {
        dir.join(&self.hash[..16])
            .join(format!("s{}_v{}.bin", record.statue_id, record.view_index))
    }

    fn load_cached(&self, record: &Record, dir: &Path) -> Result<ViewSample> {
        let path = self.cache_path(record, dir);
        let n = self.metadata.resolution;
        let len = n * n * 9;
        if let Ok(bytes) = fs::read(&path) {
            if bytes.len() == len * 8 {
                let v: Vec<f64> = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                let px = n * n;
                let take = |from: usize, ch: usize| Raster::from_vec(n, n, ch, v[from * px..(from + ch) * px].to_vec());
                return Ok(ViewSample {
                    sketch: take(0, 1)?,
                    target: RenderSample {
                        rgb: take(1, 3)?,
                        depth: take(4, 1)?,
                        normals: take(5, 3)?,
                        mask: take(8, 1)?,
                        camera: self.metadata.camera(record.view_index)?,
                        statue_id: record.statue_id,
                    },
                });
            }
        }
        let sample = self.decode(record)?;
        let mut buf = Vec::with_capacity(len * 8);
        let t = &sample.target;
        for r in [&sample.sketch, &t.rgb, &t.depth, &t.normals, &t.mask] {
            r.data().iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(sample)
    }

    /// Decodes one record from its PNG files.
    pub fn decode(&self, record: &Record) -> Result<ViewSample> {
        let m = &self.metadata;
        let n = m.resolution;
        let sketch = Raster::load_gray(&record.path("sketch.png"))?;
        let rgb = Raster::load_rgb(&record.path("rgb.png"))?;
        let mut depth = Raster::load_png16(&record.path("depth.png"), m.depth_scale)?;
        let mask = Raster::load_gray(&record.path("mask.png"))?.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        let mut normals = Raster::load_rgb(&record.path("normals.png"))?.map(|v| 2.0 * v - 1.0);
        for (r, name) in [(&sketch, "sketch"), (&rgb, "rgb"), (&depth, "depth"), (&normals, "normals"), (&mask, "mask")] {
            if r.width() != n || r.height() != n {
                return Err(Error::MissingData(format!(
                    "{}: {name} is {}x{}, metadata says {n}",
                    record.dir.display(),
                    r.width(),
                    r.height()
                )));
            }
        }
        for i in 0..n * n {
            let px = &mut normals.data_mut()[3 * i..3 * i + 3];
            let len = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
            if mask.data()[i] > 0.5 && len > 0.0 {
                px.iter_mut().for_each(|v| *v /= len);
            } else {
                px.iter_mut().for_each(|v| *v = 0.0);
            }
            if mask.data()[i] <= 0.5 {
                depth.data_mut()[i] = 0.0;
            }
        }
        Ok(ViewSample {
            sketch,
            target: RenderSample {
                rgb,
                depth,
                normals,
                mask,
                camera: m.camera(record.view_index)?,
                statue_id: record.statue_id,
            },
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
