//! Line-drawing extraction from renders.
//!
//! All filters produce black lines (0) on white (1). Convolutions add
//! mirrored taps pairwise before weighting, so every filter commutes exactly
//! with a horizontal flip of its input.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const DEFAULT_CANNY_SIGMA: f64 = 1.0;
pub const DEFAULT_DOG_SIGMA: f64 = 1.0;
pub const DEFAULT_DOG_K: f64 = 1.6;
pub const DEFAULT_DOG_TAU: f64 = 0.02;

/// A grayscale sketch: 1 is paper, 0 is ink.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchImage {
    pub pixels: Raster,
    /// Producing filter and its parameters.
    pub method_tag: String,
}

impl SketchImage {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    /// True when no pixel is darker than paper.
    pub fn is_blank(&self) -> bool {
        self.pixels.data().iter().all(|&v| v >= 1.0)
    }

    pub fn load(path: &Path) -> Result<SketchImage> {
        Ok(SketchImage {
            pixels: Raster::load_gray(path)?,
            method_tag: format!("file:{}", path.display()),
        })
    }
}

/// Filter choice and parameters, as recorded in dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SketchMethod {
    Canny {
        low: f64,
        high: f64,
        #[serde(default = "default_canny_sigma")]
        sigma: f64,
    },
    Dog {
        #[serde(default = "default_dog_sigma")]
        sigma: f64,
        #[serde(default = "default_dog_k")]
        k: f64,
        #[serde(default = "default_dog_tau")]
        tau: f64,
    },
    Laplacian {
        tau: f64,
    },
}

fn default_canny_sigma() -> f64 {
    DEFAULT_CANNY_SIGMA
}
fn default_dog_sigma() -> f64 {
    DEFAULT_DOG_SIGMA
}
fn default_dog_k() -> f64 {
    DEFAULT_DOG_K
}
fn default_dog_tau() -> f64 {
    DEFAULT_DOG_TAU
}

impl Default for SketchMethod {
    fn default() -> Self {
        SketchMethod::Canny {
            low: 0.1,
            high: 0.2,
            sigma: DEFAULT_CANNY_SIGMA,
        }
    }
}

impl SketchMethod {
    pub fn apply(&self, gray: &Raster) -> Result<SketchImage> {
        match *self {
            SketchMethod::Canny { low, high, sigma } => canny_sketch_with_sigma(gray, low, high, sigma),
            SketchMethod::Dog { sigma, k, tau } => dog_sketch(gray, sigma, k, tau),
            SketchMethod::Laplacian { tau } => laplacian_sketch(gray, tau),
        }
    }
}

fn require_gray(image: &Raster) -> Result<()> {
    if image.channels() != 1 {
        return Err(Error::invalid(format!(
            "sketch filters take grayscale input, got {} channels",
            image.channels()
        )));
    }
    if image.width() < 3 || image.height() < 3 {
        return Err(Error::invalid("image must be at least 3x3"));
    }
    Ok(())
}

/// Mirror index into [0, n): -1 -> 0, n -> n - 1.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|w| *w /= total);
    // k[i] weights the taps at offset ±i
    k
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(image: &Raster, sigma: f64) -> Raster {
    let k = gaussian_kernel(sigma);
    let (w, h) = (image.width(), image.height());
    let horizontal = Raster::from_fn(w, h, 1, |x, y, _| {
        let mut acc = k[0] * image.get(x, y, 0);
        for (i, wt) in k.iter().enumerate().skip(1) {
            let l = image.get(mirror(x as isize - i as isize, w), y, 0);
            let r = image.get(mirror(x as isize + i as isize, w), y, 0);
            acc += wt * (l + r);
        }
        acc
    });
    Raster::from_fn(w, h, 1, |x, y, _| {
        let mut acc = k[0] * horizontal.get(x, y, 0);
        for (i, wt) in k.iter().enumerate().skip(1) {
            let t = horizontal.get(x, mirror(y as isize - i as isize, h), 0);
            let b = horizontal.get(x, mirror(y as isize + i as isize, h), 0);
            acc += wt * (t + b);
        }
        acc
    })
}

fn binarize(width: usize, height: usize, ink: impl Fn(usize, usize) -> bool) -> Raster {
    Raster::from_fn(width, height, 1, |x, y, _| if ink(x, y) { 0.0 } else { 1.0 })
}

/// Canny edges with the default blur of σ = 1.
pub fn canny_sketch(image: &Raster, low: f64, high: f64) -> Result<SketchImage> {
    canny_sketch_with_sigma(image, low, high, DEFAULT_CANNY_SIGMA)
}

/// Gaussian blur, Sobel gradients, non-maximum suppression and
/// double-threshold hysteresis. Thresholds apply to the Sobel magnitude
/// divided by 4, so a unit step before blurring peaks just under 1.
pub fn canny_sketch_with_sigma(image: &Raster, low: f64, high: f64, sigma: f64) -> Result<SketchImage> {
    require_gray(image)?;
    if !(0.0 <= low && low <= high && high <= 1.0) {
        return Err(Error::invalid(format!("canny thresholds need 0 <= low <= high <= 1, got {low}, {high}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let (w, h) = (image.width(), image.height());
    let b = gaussian_blur(image, sigma);
    let at = |x: usize, y: usize, dx: isize, dy: isize| {
        b.get(mirror(x as isize + dx, w), mirror(y as isize + dy, h), 0)
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = ((at(x, y, 1, -1) - at(x, y, -1, -1))
                + 2.0 * (at(x, y, 1, 0) - at(x, y, -1, 0))
                + (at(x, y, 1, 1) - at(x, y, -1, 1)))
                / 4.0;
            gy[i] = (((at(x, y, -1, 1) + at(x, y, 1, 1)) + 2.0 * at(x, y, 0, 1))
                - ((at(x, y, -1, -1) + at(x, y, 1, -1)) + 2.0 * at(x, y, 0, -1)))
                / 4.0;
            mag[i] = gx[i].hypot(gy[i]);
        }
    }

    const TAN_22_5: f64 = 0.414_213_562_373_095_03;
    const TAN_67_5: f64 = 2.414_213_562_373_095;
    let get = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let (xi, yi) = (x as isize, y as isize);
            // neighbours along the gradient direction
            let (n1, n2) = if ay <= TAN_22_5 * ax {
                (get(xi - 1, yi), get(xi + 1, yi))
            } else if ay >= TAN_67_5 * ax {
                (get(xi, yi - 1), get(xi, yi + 1))
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                (get(xi - 1, yi - 1), get(xi + 1, yi + 1))
            } else {
                (get(xi + 1, yi - 1), get(xi - 1, yi + 1))
            };
            if m >= n1 && m >= n2 {
                thin[i] = m;
            }
        }
    }

    let mut edge = vec![false; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if thin[i] > 0.0 && thin[i] >= high {
            edge[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edge[j] && thin[j] > 0.0 && thin[j] >= low {
                    edge[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(SketchImage {
        pixels: binarize(w, h, |x, y| edge[y * w + x]),
        method_tag: format!("canny(low={low},high={high},sigma={sigma})"),
    })
}

/// Difference of Gaussians `G(σ) - G(kσ)`; ink wherever its magnitude
/// exceeds `tau`.
pub fn dog_sketch(image: &Raster, sigma: f64, k: f64, tau: f64) -> Result<SketchImage> {
    require_gray(image)?;
    if !(sigma > 0.0 && k > 1.0 && tau >= 0.0) {
        return Err(Error::invalid(format!(
            "difference of Gaussians needs sigma > 0, k > 1, tau >= 0; got {sigma}, {k}, {tau}"
        )));
    }
    let fine = gaussian_blur(image, sigma);
    let coarse = gaussian_blur(image, k * sigma);
    let (w, h) = (image.width(), image.height());
    Ok(SketchImage {
        pixels: binarize(w, h, |x, y| (fine.get(x, y, 0) - coarse.get(x, y, 0)).abs() > tau),
        method_tag: format!("dog(sigma={sigma},k={k},tau={tau})"),
    })
}

/// 4-neighbour Laplacian magnitude above `tau`. The one-pixel frame is
/// left blank.
pub fn laplacian_sketch(image: &Raster, tau: f64) -> Result<SketchImage> {
    require_gray(image)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("laplacian threshold must lie in [0, 1], got {tau}")));
    }
    let (w, h) = (image.width(), image.height());
    Ok(SketchImage {
        pixels: binarize(w, h, |x, y| {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                return false;
            }
            let c = image.get(x, y, 0);
            let lap = (image.get(x - 1, y, 0) + image.get(x + 1, y, 0))
                + (image.get(x, y - 1, 0) + image.get(x, y + 1, 0))
                - 4.0 * c;
            lap.abs() > tau
        }),
        method_tag: format!("laplacian(tau={tau})"),
    })
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

static EXTERNAL_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Runs an external image translator and loads its output as a sketch.
///
/// `template` is a shell command containing `{in}` and `{out}`, which are
/// replaced by the quoted input path and a fresh output path. The output
/// must match the input's dimensions.
pub fn external_translate(input: &Path, template: &str) -> Result<SketchImage> {
    if !template.contains("{in}") || !template.contains("{out}") {
        return Err(Error::invalid("command template must contain {in} and {out} placeholders"));
    }
    let source = Raster::load_gray(input)?;
    let out: PathBuf = std::env::temp_dir().join(format!(
        "sketch2statue-ext-{}-{}.png",
        std::process::id(),
        EXTERNAL_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let _ = std::fs::remove_file(&out);
    let cmd = template
        .replace("{in}", &shell_quote(input))
        .replace("{out}", &shell_quote(&out));
    let output = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::ExternalTool {
            status: "spawn failed".into(),
            diagnostics: e.to_string(),
        })?;
    let diagnostics = || {
        format!(
            "command `{cmd}`; stderr: {}; stdout: {}",
            String::from_utf8_lossy(&output.stderr).trim(),
            String::from_utf8_lossy(&output.stdout).trim()
        )
    };
    if !output.status.success() {
        let _ = std::fs::remove_file(&out);
        return Err(Error::ExternalTool {
            status: output.status.to_string(),
            diagnostics: diagnostics(),
        });
    }
    if !out.exists() {
        return Err(Error::ExternalTool {
            status: "missing output".into(),
            diagnostics: diagnostics(),
        });
    }
    let loaded = Raster::load_gray(&out);
    let _ = std::fs::remove_file(&out);
    let pixels = loaded?;
    source.check_same_shape(&pixels)?;
    Ok(SketchImage {
        pixels,
        method_tag: "external".into(),
    })
}
