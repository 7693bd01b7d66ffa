//! Dense multi-channel `f64` images and their PNG encodings.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image. Row 0 is the top of the picture.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(
                format!("{width}x{height}x{channels}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Errors unless `other` has the same width, height and channel count.
    pub fn check_same_shape(&self, other: &Raster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                shape_str(self.dims()),
                shape_str(other.dims()),
            ));
        }
        Ok(())
    }

    pub fn check_dims(&self, width: usize, height: usize, channels: usize) -> Result<()> {
        if self.dims() != (width, height, channels) {
            return Err(Error::shape(
                shape_str((width, height, channels)),
                shape_str(self.dims()),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Raster {
        Raster::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(self.width - 1 - x, y, c)
        })
    }

    /// Channel average, giving a single-channel image.
    pub fn to_gray(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.channels as f64;
        Raster::from_fn(self.width, self.height, 1, |x, y, _| {
            self.pixel(x, y).iter().sum::<f64>() / n
        })
    }

    /// Pads to a square canvas (content centred) filled with `fill`.
    pub fn pad_to_square(&self, fill: f64) -> Raster {
        let side = self.width.max(self.height);
        if side == self.width && side == self.height {
            return self.clone();
        }
        let ox = (side - self.width) / 2;
        let oy = (side - self.height) / 2;
        let mut out = Raster::filled(side, side, self.channels, fill);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(x + ox, y + oy, c, self.get(x, y, c));
                }
            }
        }
        out
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resize(&self, width: usize, height: usize) -> Raster {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let sample = |coord: f64, n: usize| -> (usize, usize, f64) {
            let c = coord.clamp(0.0, (n - 1) as f64);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, c - i0 as f64)
        };
        Raster::from_fn(width, height, self.channels, |x, y, c| {
            let (x0, x1, fx) = sample((x as f64 + 0.5) * sx - 0.5, self.width);
            let (y0, y1, fy) = sample((y as f64 + 0.5) * sy - 0.5, self.height);
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0, 1].
    pub fn save_png8(&self, path: &Path) -> Result<()> {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        let res = match self.channels {
            1 => ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, self.data.iter().map(|&v| q(v)).collect())
                .expect("buffer size")
                .save_with_format(path, image::ImageFormat::Png),
            3 => ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(w, h, self.data.iter().map(|&v| q(v)).collect())
                .expect("buffer size")
                .save_with_format(path, image::ImageFormat::Png),
            c => return Err(Error::invalid(format!("cannot encode {c}-channel image as PNG"))),
        };
        res.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Writes a single-channel image as 16-bit grayscale PNG storing
    /// `round(value * scale)`, clamped to the u16 range.
    pub fn save_png16(&self, path: &Path, scale: f64) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::invalid("16-bit PNG requires a single channel"));
        }
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, u16::MAX as f64) as u16)
            .collect();
        ImageBuffer::<Luma<u16>, _>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    /// Loads any supported image as single-channel luminance in [0, 1].
    pub fn load_gray(path: &Path) -> Result<Raster> {
        let img = open(path)?;
        let w = img.width() as usize;
        let h = img.height() as usize;
        let data = match img {
            image::DynamicImage::ImageLuma16(buf) => {
                buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
            }
            other => other
                .to_luma8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
        };
        Raster::from_vec(w, h, 1, data)
    }

    /// Loads an image as 3-channel RGB in [0, 1].
    pub fn load_rgb(path: &Path) -> Result<Raster> {
        let img = open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Raster::from_vec(
            w,
            h,
            3,
            img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        )
    }

    /// Loads a 16-bit grayscale PNG and divides the stored integers by `scale`.
    pub fn load_png16(path: &Path, scale: f64) -> Result<Raster> {
        let img = open(path)?.to_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Raster::from_vec(
            w,
            h,
            1,
            img.into_raw().into_iter().map(|v| v as f64 / scale).collect(),
        )
    }

    /// Concatenates images of equal height left to right; single-channel
    /// inputs are broadcast to RGB.
    pub fn hstack(parts: &[&Raster]) -> Result<Raster> {
        let h = parts.first().map(|p| p.height).unwrap_or(0);
        if parts.iter().any(|p| p.height != h || !(p.channels == 1 || p.channels == 3)) {
            return Err(Error::invalid("panel parts must share height and be gray or RGB"));
        }
        let w: usize = parts.iter().map(|p| p.width).sum();
        let mut out = Raster::new(w, h, 3);
        let mut ox = 0;
        for p in parts {
            for y in 0..h {
                for x in 0..p.width {
                    for c in 0..3 {
                        let v = if p.channels == 1 { p.get(x, y, 0) } else { p.get(x, y, c) };
                        out.set(ox + x, y, c, v);
                    }
                }
            }
            ox += p.width;
        }
        Ok(out)
    }
}

fn shape_str((w, h, c): (usize, usize, usize)) -> String {
    format!("{w}x{h}x{c}")
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })
}
