//! Grayscale images, PGM/PNG decoding and smoothed gradient fields.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("empty image file")]
    Empty,
    #[error("unsupported image format (expected binary PGM or PNG)")]
    Unsupported,
    #[error("malformed PGM header at byte {offset}: {msg}")]
    Header { offset: usize, msg: String },
    #[error("truncated image data at byte {offset}: expected {expected} bytes of pixels")]
    Truncated { offset: usize, expected: usize },
    #[error("PNG decode failed: {0}")]
    Png(String),
    #[error("image must be at least 2x2, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("intensity at ({0}, {1}) is not a finite value in [0, 1]")]
    BadIntensity(usize, usize),
}

/// Row-major grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width < 2 || height < 2 || data.len() != width * height {
            return Err(ImageError::TooSmall(width, height));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(ImageError::BadIntensity(i % width, i / width));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Hex SHA-256 of the dimensions and intensities, independent of the
    /// file encoding the image was read from.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Quantized 8-bit intensities.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("buffer matches dimensions");
        let mut out = Vec::new();
        buf.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a binary PGM (P5) or PNG file as normalized intensities.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.is_empty() {
        return Err(ImageError::Empty);
    }
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else {
        Err(ImageError::Unsupported)
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Header {
                offset: pos,
                msg: "expected a decimal number".into(),
            });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Header {
                offset: start,
                msg: "number out of range".into(),
            })?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::Header {
            offset: pos,
            msg: format!("unsupported maxval {maxval}"),
        });
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(ImageError::Header {
                offset: pos,
                msg: "expected whitespace before raster".into(),
            })
        }
    }
    let expected = width * height;
    if bytes.len() - pos < expected {
        return Err(ImageError::Truncated {
            offset: bytes.len(),
            expected,
        });
    }
    let scale = maxval as f64;
    let data = bytes[pos..pos + expected]
        .iter()
        .map(|&b| (b as f64 / scale).min(1.0))
        .collect();
    GrayImage::new(width, height, data)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::Png(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(b) => b.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        image::DynamicImage::ImageLumaA8(b) => {
            b.pixels().map(|p| p.0[0] as f64 / 255.0).collect()
        }
        image::DynamicImage::ImageRgb8(b) => b.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        image::DynamicImage::ImageRgba8(b) => {
            b.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect()
        }
        other => {
            return Err(ImageError::Png(format!(
                "unsupported PNG color type {:?}",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

fn luma(r: u8, g: u8, b: u8) -> f64 {
    ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).min(1.0)
}

/// Per-pixel image gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

/// Symmetric reflection of `i` into `0..n` (`-1 -> 0`, `n -> n - 1`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur, kernel truncated at 3 sigma, reflected borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    if sigma <= 0.0 {
        return img.data.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img.data[y * w + reflect(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gaussian smoothing followed by central differences (one-sided at the
/// borders).
pub fn smooth_gradient(img: &GrayImage, smooth_sigma: f64) -> GradientField {
    let (w, h) = (img.width, img.height);
    let s = gaussian_blur(img, smooth_sigma);
    let at = |x: usize, y: usize| s[y * w + x];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            gx[y * w + x] = if x == 0 {
                at(1, y) - at(0, y)
            } else if x == w - 1 {
                at(w - 1, y) - at(w - 2, y)
            } else {
                (at(x + 1, y) - at(x - 1, y)) / 2.0
            };
            gy[y * w + x] = if y == 0 {
                at(x, 1) - at(x, 0)
            } else if y == h - 1 {
                at(x, h - 1) - at(x, h - 2)
            } else {
                (at(x, y + 1) - at(x, y - 1)) / 2.0
            };
        }
    }
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
    }
}

impl GradientField {
    /// Bilinear interpolation at pixel coordinates (pixel centers at
    /// integers); samples outside the image count as zero.
    pub fn interpolate(&self, px: f64, py: f64) -> (f64, f64) {
        let x0 = px.floor();
        let y0 = py.floor();
        let fx = px - x0;
        let fy = py - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let (x, y) = (x0 + dx, y0 + dy);
                if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
                    continue;
                }
                let wgt = wx * wy;
                if wgt == 0.0 {
                    continue;
                }
                let i = y as usize * self.width + x as usize;
                gx += wgt * self.gx[i];
                gy += wgt * self.gy[i];
            }
        }
        (gx, gy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_two_by_two() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 255, 0]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5 # made by hand\n2 # w\n2\n255\n".to_vec();
        bytes.extend([10, 20, 30, 40]);
        assert_eq!(decode_image(&bytes).unwrap().get(1, 1), 40.0 / 255.0);
    }

    #[test]
    fn truncated_pgm_reports_offset() {
        let mut bytes = b"P5\n3 3\n255\n".to_vec();
        bytes.extend([1, 2, 3]);
        match decode_image(&bytes) {
            Err(ImageError::Truncated { offset, expected }) => {
                assert_eq!(offset, bytes.len());
                assert_eq!(expected, 9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_unknown_inputs() {
        assert!(matches!(decode_image(&[]), Err(ImageError::Empty)));
        assert!(matches!(decode_image(b"GIF89a"), Err(ImageError::Unsupported)));
        assert!(matches!(
            decode_image(b"P5\nx"),
            Err(ImageError::Header { offset: 3, .. })
        ));
    }

    #[test]
    fn png_and_pgm_agree() {
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f64 / 255.0).unwrap();
        let a = decode_image(&img.to_pgm()).unwrap();
        let b = decode_image(&img.to_png()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn rgb_png_uses_luma_weights() {
        let buf = image::RgbImage::from_fn(2, 2, |x, _| {
            if x == 0 {
                image::Rgb([255, 0, 0])
            } else {
                image::Rgb([0, 0, 255])
            }
        });
        let mut png = Vec::new();
        buf.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
            .unwrap();
        let img = decode_image(&png).unwrap();
        assert!((img.get(0, 0) - 0.299).abs() < 1e-12);
        assert!((img.get(1, 1) - 0.114).abs() < 1e-12);
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = GrayImage::constant(9, 6, 0.3).unwrap();
        for sigma in [0.0, 1.5] {
            let g = smooth_gradient(&img, sigma);
            assert!(g.gx.iter().chain(&g.gy).all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn vertical_step_gradient() {
        let img = GrayImage::from_fn(10, 4, |x, _| if x >= 5 { 1.0 } else { 0.0 }).unwrap();
        let g = smooth_gradient(&img, 0.0);
        for y in 0..4 {
            for x in 0..10 {
                let want = if x == 4 || x == 5 { 0.5 } else { 0.0 };
                assert_eq!(g.gx[y * 10 + x], want, "x={x}");
                assert_eq!(g.gy[y * 10 + x], 0.0);
            }
        }
    }

    #[test]
    fn smoothed_impulse_gradient_is_antisymmetric() {
        let n = 21;
        let img = GrayImage::from_fn(n, n, |x, y| if x == 10 && y == 10 { 1.0 } else { 0.0 }).unwrap();
        let g = smooth_gradient(&img, 2.0);
        for y in 1..n - 1 {
            for x in 1..n - 1 {
                let (mx, my) = (n - 1 - x, n - 1 - y);
                assert!((g.gx[y * n + x] + g.gx[y * n + mx]).abs() < 1e-9);
                assert!((g.gy[y * n + x] + g.gy[my * n + x]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }
}
