//! Planar image tensors, synthetic test images, and on-disk formats.
//!
//! Layout is channel-major (`data[c][y][x]` flattened), values are nominally
//! in `[0, 1]` but never clamped by math ops: embedding and editing are exact
//! linear operations and clipping would break their algebra.
//!
//! Two formats are supported:
//!
//! * **raw** (`.dws`): magic `DWS1`, then little-endian `u32` height, width,
//!   channels, then `h*w*c` little-endian `f32` values in planar order.
//!   Lossless for `f32` data; `f64` tensors are rounded to the nearest `f32`
//!   on save, after which save/load is idempotent.
//! * **PNG**: grayscale or RGB at 8 or 16 bits, no alpha. Save clamps to
//!   `[0, 1]` and quantises with `round(v * max)`, ties away from zero, so
//!   a flat 0.5 image stores as 128/255 at 8 bits.

use std::fs;
use std::io::{Read, Write};
use std::ops::{Add, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::RngStream;
use crate::{fft, sc, Scalar};

const RAW_MAGIC: &[u8; 4] = b"DWS1";
// Element-count ceiling for loads; rejects absurd headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 31;

/// Dense H x W x C image with planar storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    /// Zero-filled tensor.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    /// Constant-valued tensor.
    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty tensor");
        ImageTensor {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Wraps an existing planar buffer.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "buffer holds {} values, expected {}x{}x{} = {}",
                data.len(),
                height,
                width,
                channels,
                height * width * channels
            )));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Total element count `d = h*w*c`.
    pub fn d(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// One channel plane, row-major.
    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Squared Euclidean norm over all elements.
    pub fn norm_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// `self += factor * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &Self, factor: T) {
        assert_eq!(self.dims(), other.dims(), "shape mismatch in add_scaled");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    /// Multiplies every element in place.
    pub fn scale(&mut self, factor: T) {
        for v in self.data.iter_mut() {
            *v *= factor;
        }
    }

    /// Per-channel mean values.
    pub fn mean_per_channel(&self) -> Vec<T> {
        let n = sc::<T>((self.height * self.width) as f64);
        (0..self.channels)
            .map(|c| self.channel(c).iter().copied().sum::<T>() / n)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts element-wise to another scalar type (rounding if narrowing).
    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|v| sc(v.to_f64().expect("scalar converts to f64")))
                .collect(),
        }
    }
}

impl<T: Scalar> Sub for &ImageTensor<T> {
    type Output = ImageTensor<T>;

    fn sub(self, rhs: Self) -> ImageTensor<T> {
        assert_eq!(self.dims(), rhs.dims(), "shape mismatch in sub");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }
}

impl<T: Scalar> Add for &ImageTensor<T> {
    type Output = ImageTensor<T>;

    fn add(self, rhs: Self) -> ImageTensor<T> {
        assert_eq!(self.dims(), rhs.dims(), "shape mismatch in add");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }
}

/// Families of synthetic test images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Smooth random field with a power-law spectrum; every radial band is
    /// populated. Mean exactly 0.5, standard deviation 0.15 per channel.
    GaussianField,
    /// Constant 0.5.
    Flat,
    /// Alternating 0/1 blocks, block size `max(1, min(h, w)/8)`.
    Checker,
    /// Sum of bilinearly upsampled noise octaves, normalised like
    /// `GaussianField`.
    MultiscaleTexture,
}

/// Generates a deterministic synthetic image from the given stream.
pub fn synth_image<T: Scalar>(
    kind: SynthKind,
    height: usize,
    width: usize,
    channels: usize,
    rng: &mut RngStream,
) -> ImageTensor<T> {
    match kind {
        SynthKind::Flat => ImageTensor::filled(height, width, channels, sc(0.5)),
        SynthKind::Checker => checker(height, width, channels),
        SynthKind::GaussianField => gaussian_field(height, width, channels, rng),
        SynthKind::MultiscaleTexture => multiscale(height, width, channels, rng),
    }
}

fn checker<T: Scalar>(height: usize, width: usize, channels: usize) -> ImageTensor<T> {
    let block = (height.min(width) / 8).max(1);
    let mut img = ImageTensor::zeros(height, width, channels);
    for c in 0..channels {
        for y in 0..height {
            for x in 0..width {
                if (y / block + x / block) % 2 == 1 {
                    img.set(y, x, c, T::one());
                }
            }
        }
    }
    img
}

/// Standardises a plane to mean 0.5 and standard deviation 0.15.
fn normalize_plane<T: Scalar>(plane: &mut [T]) {
    let n = sc::<T>(plane.len() as f64);
    let mean = plane.iter().copied().sum::<T>() / n;
    let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let std = var.sqrt().max(sc(1e-12));
    let gain = sc::<T>(0.15) / std;
    let offset = sc::<T>(0.5);
    for v in plane.iter_mut() {
        *v = offset + (*v - mean) * gain;
    }
}

fn gaussian_field<T: Scalar>(
    height: usize,
    width: usize,
    channels: usize,
    rng: &mut RngStream,
) -> ImageTensor<T> {
    // White noise shaped by |A(f)| = (1 + f/f0)^(-p): mostly low-frequency
    // energy but a heavy enough tail that mid and high bands stay populated.
    let f0 = 0.05;
    let p = 1.5;
    let mut img = ImageTensor::zeros(height, width, channels);
    for c in 0..channels {
        let mut white = vec![T::zero(); height * width];
        rng.fill_normal(&mut white);
        let mut spec = fft::forward(&white, height, width);
        for ky in 0..height {
            for kx in 0..width {
                let f = fft::radial_frequency(ky, kx, height, width);
                let a = (1.0 + f / f0).powf(-p);
                spec[ky * width + kx] = spec[ky * width + kx].scale(sc(a));
            }
        }
        let mut plane = fft::inverse_real(spec, height, width);
        normalize_plane(&mut plane);
        img.channel_mut(c).copy_from_slice(&plane);
    }
    img
}

fn multiscale<T: Scalar>(
    height: usize,
    width: usize,
    channels: usize,
    rng: &mut RngStream,
) -> ImageTensor<T> {
    let mut img = ImageTensor::zeros(height, width, channels);
    for c in 0..channels {
        let mut plane = vec![T::zero(); height * width];
        let mut scale = 1usize;
        let mut weight = 1.0;
        while scale <= height.min(width) / 2 {
            let ch = (height / scale).max(2);
            let cw = (width / scale).max(2);
            let mut coarse = vec![T::zero(); ch * cw];
            rng.fill_normal(&mut coarse);
            for y in 0..height {
                for x in 0..width {
                    let sy = (y as f64 + 0.5) / scale as f64 - 0.5;
                    let sx = (x as f64 + 0.5) / scale as f64 - 0.5;
                    plane[y * width + x] +=
                        sc::<T>(weight) * bilinear(&coarse, ch, cw, sy, sx);
                }
            }
            scale *= 2;
            weight *= 0.6;
        }
        normalize_plane(&mut plane);
        img.channel_mut(c).copy_from_slice(&plane);
    }
    img
}

fn bilinear<T: Scalar>(plane: &[T], h: usize, w: usize, y: f64, x: f64) -> T {
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let dy = sc::<T>(yc - y0 as f64);
    let dx = sc::<T>(xc - x0 as f64);
    let one = T::one();
    let v00 = plane[y0 * w + x0];
    let v01 = plane[y0 * w + x1];
    let v10 = plane[y1 * w + x0];
    let v11 = plane[y1 * w + x1];
    (one - dy) * ((one - dx) * v00 + dx * v01) + dy * ((one - dx) * v10 + dx * v11)
}

/// Bit depth for PNG output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngDepth {
    Eight,
    Sixteen,
}

/// Saves in the raw planar format (values rounded to `f32`).
pub fn save_raw<T: Scalar>(img: &ImageTensor<T>, path: &Path) -> Result<()> {
    if !img.is_finite() {
        return Err(Error::OutOfRange(
            "refusing to save non-finite image values".into(),
        ));
    }
    let mut bytes = Vec::with_capacity(16 + img.d() * 4);
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&(img.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&(img.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(img.channels() as u32).to_le_bytes());
    for v in img.data() {
        let f = v.to_f64().expect("scalar converts to f64") as f32;
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Loads the raw planar format.
pub fn load_raw<T: Scalar>(path: &Path) -> Result<ImageTensor<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::BadRawFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 {
        return Err(bad("file shorter than the 16-byte header"));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(bad("magic bytes are not DWS1"));
    }
    let dim = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as u64;
    let (h, w, c) = (dim(4), dim(8), dim(12));
    if h == 0 || w == 0 || c == 0 {
        return Err(bad("zero dimension in header"));
    }
    let count = h * w * c;
    if count > MAX_ELEMENTS {
        return Err(bad("header claims an implausibly large image"));
    }
    if bytes.len() != 16 + count as usize * 4 {
        return Err(bad(&format!(
            "payload holds {} bytes, header implies {}",
            bytes.len() - 16,
            count * 4
        )));
    }
    let mut data = Vec::with_capacity(count as usize);
    for chunk in bytes[16..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(bad("non-finite value in payload"));
        }
        data.push(sc::<T>(v as f64));
    }
    ImageTensor::from_vec(h as usize, w as usize, c as usize, data)
}

/// Saves as PNG (grayscale for 1 channel, RGB for 3).
pub fn save_png<T: Scalar>(img: &ImageTensor<T>, path: &Path, depth: PngDepth) -> Result<()> {
    let (h, w, c) = img.dims();
    if c != 1 && c != 3 {
        return Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: format!("PNG export needs 1 or 3 channels, image has {c}"),
        });
    }
    // Quantisation: clamp to [0,1], scale to the depth maximum, round to
    // nearest with ties away from zero (f64::round).
    let quant = |v: T, max: f64| -> u16 {
        let f = v.to_f64().expect("scalar converts to f64").clamp(0.0, 1.0);
        (f * max).round() as u16
    };
    let interleave = |max: f64| -> Vec<u16> {
        let mut out = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out.push(quant(img.get(y, x, ch), max));
                }
            }
        }
        out
    };
    match (depth, c) {
        (PngDepth::Eight, 1) => {
            let buf: Vec<u8> = interleave(255.0).into_iter().map(|v| v as u8).collect();
            image::GrayImage::from_vec(w as u32, h as u32, buf)
                .expect("buffer sized to dims")
                .save(path)?;
        }
        (PngDepth::Eight, 3) => {
            let buf: Vec<u8> = interleave(255.0).into_iter().map(|v| v as u8).collect();
            image::RgbImage::from_vec(w as u32, h as u32, buf)
                .expect("buffer sized to dims")
                .save(path)?;
        }
        (PngDepth::Sixteen, 1) => {
            image::ImageBuffer::<image::Luma<u16>, _>::from_vec(
                w as u32,
                h as u32,
                interleave(65535.0),
            )
            .expect("buffer sized to dims")
            .save(path)?;
        }
        (PngDepth::Sixteen, 3) => {
            image::ImageBuffer::<image::Rgb<u16>, _>::from_vec(
                w as u32,
                h as u32,
                interleave(65535.0),
            )
            .expect("buffer sized to dims")
            .save(path)?;
        }
        _ => unreachable!("channel count checked above"),
    }
    Ok(())
}

/// Loads a PNG (grayscale/RGB, 8 or 16 bits); values land in `[0, 1]`.
pub fn load_png<T: Scalar>(path: &Path) -> Result<ImageTensor<T>> {
    let dynimg = image::open(path)?;
    let unsupported = |what: &str| Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason: format!("{what}; expected 8- or 16-bit grayscale or RGB without alpha"),
    };
    let (w, h, c, values): (usize, usize, usize, Vec<f64>) = match dynimg {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let v = buf.into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
            (w as usize, h as usize, 1, v)
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let v = buf.into_raw().into_iter().map(|p| p as f64 / 65535.0).collect();
            (w as usize, h as usize, 1, v)
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let v = buf.into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
            (w as usize, h as usize, 3, v)
        }
        image::DynamicImage::ImageRgb16(buf) => {
            let (w, h) = buf.dimensions();
            let v = buf.into_raw().into_iter().map(|p| p as f64 / 65535.0).collect();
            (w as usize, h as usize, 3, v)
        }
        other => return Err(unsupported(&format!("pixel format {:?}", other.color()))),
    };
    // PNG buffers interleave channels; convert to planar.
    let mut img = ImageTensor::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                img.set(y, x, ch, sc(values[(y * w + x) * c + ch]));
            }
        }
    }
    Ok(img)
}

/// Saves by extension: `.dws` raw or `.png` (16-bit, to keep watermark-scale
/// residuals above the quantisation floor).
pub fn save_image<T: Scalar>(img: &ImageTensor<T>, path: &Path) -> Result<()> {
    match extension(path) {
        Some("dws") => save_raw(img, path),
        Some("png") => save_png(img, path, PngDepth::Sixteen),
        _ => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: "unknown extension; use .dws or .png".into(),
        }),
    }
}

/// Loads by extension: `.dws` raw or `.png`.
pub fn load_image<T: Scalar>(path: &Path) -> Result<ImageTensor<T>> {
    match extension(path) {
        Some("dws") => load_raw(path),
        Some("png") => load_png(path),
        _ => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: "unknown extension; use .dws or .png".into(),
        }),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}
