//! Grayscale rasters, binary PGM I/O, eye-based alignment and histogram
//! equalization.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image with row-major `f64` intensities, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("dimensions", format!("{width}x{height} is empty")));
        }
        if pixels.len() != width * height {
            return Err(Error::mismatch(width * height, pixels.len()));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("pixels", format!("non-finite intensity at index {i}")));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image::new(width, height, pixels)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with replicate-edge clamping.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Applies `f` to every pixel. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let pixels: Vec<f64> = self.pixels.iter().map(|&v| f(v)).collect();
        assert!(pixels.iter().all(|v| v.is_finite()), "map produced a non-finite pixel");
        Image {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linearly maps `[min, max]` onto `[0, 1]`. A constant image maps to 0.5.
    pub fn rescale_unit(&self) -> Image {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        if span <= 0.0 {
            return self.map(|_| 0.5);
        }
        self.map(|v| (v - lo) / span)
    }

    /// Root-mean-square difference between two images of equal size.
    pub fn rms_diff(&self, other: &Image) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::mismatch(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        let ss: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss / self.pixels.len() as f64).sqrt())
    }
}

// ---------------------------------------------------------------------------
// PGM (P5) I/O

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self, field: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("unparsable {field}")))
    }
}

/// Decodes a binary PGM (P5) byte stream, rescaling samples to `[0, 1]` by maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::UnsupportedFormat(format!(
            "expected binary PGM magic `P5`, found `{magic}`"
        )));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.next_uint("width")?;
    let height = cur.next_uint("height")?;
    let maxval = cur.next_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("empty raster {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedHeader("no separator before raster".into())),
    }
    let data = &bytes[cur.pos..];
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample_bytes;
    if data.len() != expected {
        return Err(Error::MalformedHeader(format!(
            "header declares {width}x{height} ({expected} bytes) but raster has {} bytes",
            data.len()
        )));
    }
    let scale = maxval as f64;
    let pixels: Vec<f64> = if sample_bytes == 1 {
        data.iter().map(|&b| b as f64 / scale).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Image::new(width, height, pixels)
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_pgm(&bytes)
}

fn encode_pgm16(width: usize, height: usize, samples: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(width * height * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Encodes as 16-bit P5 with intensities stretched from `[min, max]` to the
/// full sample range. A constant image is written as its clamped value.
pub fn encode_pgm_rescaled(img: &Image) -> Vec<u8> {
    let (lo, hi) = (img.min(), img.max());
    let span = hi - lo;
    if span <= 0.0 {
        return encode_pgm_unscaled(img);
    }
    encode_pgm16(
        img.width,
        img.height,
        img.pixels.iter().map(|&v| quantize16((v - lo) / span)),
    )
}

/// Encodes as 16-bit P5, mapping `[0, 1]` to `[0, 65535]` without stretching.
pub fn encode_pgm_unscaled(img: &Image) -> Vec<u8> {
    encode_pgm16(img.width, img.height, img.pixels.iter().map(|&v| quantize16(v)))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

/// Writes a 16-bit PGM rescaled from the image's own `[min, max]`.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pgm_rescaled(img))
}

/// Writes a 16-bit PGM preserving absolute intensities (clamped to `[0, 1]`).
pub fn save_image_unscaled(img: &Image, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pgm_unscaled(img))
}

// ---------------------------------------------------------------------------
// Alignment

pub type Point = (f64, f64);

/// Eye coordinates in pixel units. Pixel centres sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks {
    left_eye: Point,
    right_eye: Point,
}

impl Landmarks {
    pub fn new(left_eye: Point, right_eye: Point, width: usize, height: usize) -> Result<Self> {
        let inside = |(x, y): Point| {
            x.is_finite()
                && y.is_finite()
                && (0.0..=(width as f64 - 1.0)).contains(&x)
                && (0.0..=(height as f64 - 1.0)).contains(&y)
        };
        if !(left_eye.0 < right_eye.0) {
            return Err(Error::InvalidLandmarks(format!(
                "left eye x ({}) must be less than right eye x ({})",
                left_eye.0, right_eye.0
            )));
        }
        if !inside(left_eye) || !inside(right_eye) {
            return Err(Error::InvalidLandmarks(format!(
                "eyes {left_eye:?}, {right_eye:?} outside {width}x{height} image"
            )));
        }
        Ok(Landmarks {
            left_eye,
            right_eye,
        })
    }

    pub fn left_eye(&self) -> Point {
        self.left_eye
    }

    pub fn right_eye(&self) -> Point {
        self.right_eye
    }
}

/// Bilinear sample; points outside `[0, w-1] x [0, h-1]` read as 0.
fn sample_bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width as f64, img.height as f64);
    if !(0.0..=w - 1.0).contains(&x) || !(0.0..=h - 1.0).contains(&y) {
        return 0.0;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Warps `img` with the similarity transform that carries the eye landmarks
/// onto `targets` (left, right) in an output raster of `out_size`.
pub fn align(img: &Image, marks: &Landmarks, targets: (Point, Point), out_size: (usize, usize)) -> Result<Image> {
    let (t_left, t_right) = targets;
    // Complex-number form: q = z (p - a1) + b1, with z = (b2 - b1) / (a2 - a1).
    let (ax, ay) = (marks.right_eye.0 - marks.left_eye.0, marks.right_eye.1 - marks.left_eye.1);
    let (bx, by) = (t_right.0 - t_left.0, t_right.1 - t_left.1);
    let a_norm = ax * ax + ay * ay;
    let b_norm = bx * bx + by * by;
    if a_norm == 0.0 || b_norm == 0.0 || !b_norm.is_finite() {
        return Err(Error::InvalidLandmarks("zero inter-eye distance".into()));
    }
    // Inverse map p = (q - b1) / z + a1, with 1/z = (a2 - a1) / (b2 - b1).
    let inv_re = (ax * bx + ay * by) / b_norm;
    let inv_im = (ay * bx - ax * by) / b_norm;
    let (w, h) = out_size;
    Image::from_fn(w, h, |x, y| {
        let (qx, qy) = (x as f64 - t_left.0, y as f64 - t_left.1);
        let px = inv_re * qx - inv_im * qy + marks.left_eye.0;
        let py = inv_im * qx + inv_re * qy + marks.left_eye.1;
        sample_bilinear(img, px, py)
    })
}

// ---------------------------------------------------------------------------
// Histogram equalization

#[inline]
fn quantize_bin(v: f64, levels: usize) -> usize {
    ((v.clamp(0.0, 1.0) * levels as f64).floor() as usize).min(levels - 1)
}

/// Maps every pixel to the empirical CDF of its quantized level, `out = cdf(bin(v))`.
pub fn histogram_equalize(img: &Image, levels: usize) -> Result<Image> {
    if levels < 2 {
        return Err(Error::param("levels", format!("need at least 2 bins, got {levels}")));
    }
    let mut counts = vec![0usize; levels];
    for &v in &img.pixels {
        counts[quantize_bin(v, levels)] += 1;
    }
    let n = img.pixels.len() as f64;
    let mut cdf = Vec::with_capacity(levels);
    let mut running = 0usize;
    for c in counts {
        running += c;
        cdf.push(running as f64 / n);
    }
    Ok(img.map(|v| cdf[quantize_bin(v, levels)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm8(w: usize, h: usize, data: &[u8]) -> Vec<u8> {
        let mut b = format!("P5\n{w} {h}\n255\n").into_bytes();
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn decodes_8bit_endpoints() {
        let img = decode_pgm(&pgm8(2, 2, &[0, 255, 255, 0])).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(img.dims(), (2, 2));
    }

    #[test]
    fn decodes_single_pixel_midpoint() {
        let img = decode_pgm(&pgm8(1, 1, &[128])).unwrap();
        assert_eq!(img.pixels()[0], 128.0 / 255.0);
    }

    #[test]
    fn short_raster_is_malformed() {
        let err = decode_pgm(&pgm8(3, 3, &[0; 8])).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader(_)), "{err}");
    }

    #[test]
    fn header_comments_and_16bit() {
        let mut b = b"P5\n# made by hand\n2 1\n# another\n65535\n".to_vec();
        b.extend_from_slice(&[0x00, 0x00, 0xff, 0xff]);
        let img = decode_pgm(&b).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn distinct_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_image(&dir.path().join("nope.pgm")).unwrap_err();
        assert!(matches!(missing, Error::MissingFile(_)));
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_pgm(b"P5\n1\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5\n1 1\n70000\n\0\0"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn rescaled_writer_stretches_range() {
        let img = Image::new(3, 1, vec![0.25, 0.5, 0.75]).unwrap();
        let back = decode_pgm(&encode_pgm_rescaled(&img)).unwrap();
        assert_eq!(back.pixels(), &[0.0, 32768.0 / 65535.0, 1.0]);
    }

    #[test]
    fn align_identity() {
        let img = Image::from_fn(8, 6, |x, y| (x * 7 + y * 3) as f64 / 60.0).unwrap();
        let marks = Landmarks::new((2.0, 2.0), (5.0, 2.0), 8, 6).unwrap();
        let out = align(&img, &marks, ((2.0, 2.0), (5.0, 2.0)), (8, 6)).unwrap();
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn reversed_eyes_rejected() {
        let err = Landmarks::new((5.0, 2.0), (2.0, 2.0), 8, 8).unwrap_err();
        assert!(matches!(err, Error::InvalidLandmarks(_)));
        assert!(Landmarks::new((1.0, 1.0), (9.0, 1.0), 8, 8).is_err());
    }

    #[test]
    fn coincident_targets_rejected() {
        let img = Image::constant(8, 8, 0.3).unwrap();
        let marks = Landmarks::new((2.0, 3.0), (5.0, 3.0), 8, 8).unwrap();
        assert!(align(&img, &marks, ((4.0, 4.0), (4.0, 4.0)), (8, 8)).is_err());
    }

    #[test]
    fn align_constant_image_brute_force() {
        // Oracle: map each output pixel back by hand and test bounds directly.
        let img = Image::constant(8, 8, 0.6).unwrap();
        let marks = Landmarks::new((1.5, 2.0), (6.0, 3.0), 8, 8).unwrap();
        let targets = ((2.0, 3.0), (5.0, 3.0));
        let out = align(&img, &marks, targets, (8, 8)).unwrap();
        let angle_in = (3.0f64 - 2.0).atan2(6.0 - 1.5);
        let scale = ((6.0f64 - 1.5).hypot(1.0)) / 3.0;
        for y in 0..8 {
            for x in 0..8 {
                let (dx, dy) = (x as f64 - 2.0, y as f64 - 3.0);
                let (c, s) = (angle_in.cos(), angle_in.sin());
                let px = scale * (c * dx - s * dy) + 1.5;
                let py = scale * (s * dx + c * dy) + 2.0;
                let inside = (0.0..=7.0).contains(&px) && (0.0..=7.0).contains(&py);
                let expected = if inside { 0.6 } else { 0.0 };
                assert!((out.get(x, y) - expected).abs() < 1e-9, "({x},{y})");
            }
        }
    }

    #[test]
    fn equalize_two_pixels() {
        let img = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        let out = histogram_equalize(&img, 256).unwrap();
        assert_eq!(out.pixels(), &[0.5, 1.0]);
    }

    #[test]
    fn equalize_constant() {
        let img = Image::constant(3, 3, 0.42).unwrap();
        let out = histogram_equalize(&img, 256).unwrap();
        assert!(out.pixels().iter().all(|&v| v == out.pixels()[0]));
    }

    #[test]
    fn equalize_uniform_histogram() {
        // 4x4 image, 4 levels, 4 pixels per bin: brute-force CDF is (b+1)/4.
        let vals: Vec<f64> = (0..16).map(|i| ((i % 4) as f64 + 0.5) / 4.0).collect();
        let img = Image::new(4, 4, vals.clone()).unwrap();
        let out = histogram_equalize(&img, 4).unwrap();
        for (v, o) in vals.iter().zip(out.pixels()) {
            let bin = (v * 4.0).floor();
            let below = vals.iter().filter(|&&u| (u * 4.0).floor() <= bin).count();
            assert_eq!(*o, below as f64 / 16.0);
            assert!((o - v).abs() <= 0.25);
        }
    }

    #[test]
    fn equalize_rejects_one_level() {
        let img = Image::constant(2, 2, 0.5).unwrap();
        assert!(histogram_equalize(&img, 1).is_err());
    }
}
