//! Grayscale image loading, resizing, and the dense patch grid.

use std::fs;
use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};

// ITU-R BT.601 luminance weights for RGB input.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Row-major grayscale image with real-valued intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be at least 1x1".into(),
            ));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer of length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function of (row, col).
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
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

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Pixel access with replicated borders: out-of-range indices clamp to
    /// the nearest edge pixel.
    #[inline]
    pub fn at_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.at(r, c)
    }
}

/// Loads an 8-bit grayscale or RGB image (PNG or binary PGM) as grayscale.
///
/// RGB input is converted with BT.601 luminance weights; values stay in
/// `[0, 255]` without requantization.
pub fn load_grayscale(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return parse_pgm(path, &bytes);
    }
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(b) => b
            .pixels()
            .map(|p| {
                LUMA_R * f64::from(p.0[0]) + LUMA_G * f64::from(p.0[1]) + LUMA_B * f64::from(p.0[2])
            })
            .collect(),
        DynamicImage::ImageRgba8(b) => b
            .pixels()
            .map(|p| {
                LUMA_R * f64::from(p.0[0]) + LUMA_G * f64::from(p.0[1]) + LUMA_B * f64::from(p.0[2])
            })
            .collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel format {:?} (8-bit gray or RGB expected)",
                path.display(),
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// Binary PGM (P5) parser, 8-bit maxval only.
fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2; // past "P5"
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comment lines
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Format(format!(
                "{}: malformed PGM header",
                path.display()
            )));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format(format!("{}: malformed PGM header", path.display())))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "{}: PGM maxval {} unsupported (8-bit expected)",
            path.display(),
            maxval
        )));
    }
    pos += 1; // single whitespace byte after maxval
    let expected = width * height;
    let raster = bytes
        .get(pos..pos + expected)
        .ok_or_else(|| Error::Format(format!("{}: truncated PGM raster", path.display())))?;
    GrayImage::new(width, height, raster.iter().map(|&b| f64::from(b)).collect())
}

/// Interpolation method used by [`resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMethod {
    Bilinear,
    Bicubic,
}

/// Per-output-pixel sampling taps for one separable pass.
enum Taps {
    /// Linear interpolation in lerp form, which keeps constant images exact.
    Lerp { i0: usize, i1: usize, frac: f64 },
    /// Four-tap cubic with weights normalized to sum to 1.
    Cubic {
        taps: [usize; 4],
        weights: [f64; 4],
    },
}

impl Taps {
    fn apply(&self, fetch: impl Fn(usize) -> f64) -> f64 {
        match *self {
            Taps::Lerp { i0, i1, frac } => {
                let a = fetch(i0);
                a + frac * (fetch(i1) - a)
            }
            Taps::Cubic { taps, weights } => taps
                .iter()
                .zip(&weights)
                .map(|(&i, &w)| w * fetch(i))
                .sum(),
        }
    }
}

/// Half-pixel-centered source positions for one axis.
fn build_taps(src_len: usize, dst_len: usize, method: ResizeMethod) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let clamp = |i: isize| i.clamp(0, src_len as isize - 1) as usize;
    (0..dst_len)
        .map(|d| {
            let src = (d as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let base = base as isize;
            match method {
                ResizeMethod::Bilinear => Taps::Lerp {
                    i0: clamp(base),
                    i1: clamp(base + 1),
                    frac,
                },
                ResizeMethod::Bicubic => {
                    let mut taps = [0usize; 4];
                    let mut weights = [0.0f64; 4];
                    let mut sum = 0.0;
                    for k in 0..4 {
                        taps[k] = clamp(base - 1 + k as isize);
                        weights[k] = cubic_weight(frac - (k as f64 - 1.0));
                        sum += weights[k];
                    }
                    for w in weights.iter_mut() {
                        *w /= sum;
                    }
                    Taps::Cubic { taps, weights }
                }
            }
        })
        .collect()
}

/// Resamples `img` to `new_w` x `new_h` with half-pixel-centered sampling.
///
/// Resizing to the source dimensions reproduces the input bit for bit.
pub fn resize(
    img: &GrayImage,
    new_w: usize,
    new_h: usize,
    method: ResizeMethod,
) -> Result<GrayImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidArgument(
            "resize target must be at least 1x1".into(),
        ));
    }
    // horizontal pass: (h x w) -> (h x new_w)
    let taps_x = build_taps(img.width(), new_w, method);
    let mut horiz = vec![0.0; img.height() * new_w];
    for r in 0..img.height() {
        for (d, t) in taps_x.iter().enumerate() {
            horiz[r * new_w + d] = t.apply(|c| img.at(r, c));
        }
    }
    // vertical pass: (h x new_w) -> (new_h x new_w)
    let taps_y = build_taps(img.height(), new_h, method);
    let mut data = vec![0.0; new_h * new_w];
    for (d, t) in taps_y.iter().enumerate() {
        for c in 0..new_w {
            data[d * new_w + c] = t.apply(|r| horiz[r * new_w + c]);
        }
    }
    GrayImage::new(new_w, new_h, data)
}

/// Keys cubic kernel with a = -0.5.
fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Regular lattice of patch centers whose `patch_size` x `patch_size`
/// windows lie fully inside the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub step: usize,
    /// (row, col) centers in row-major lattice order.
    pub centers: Vec<(usize, usize)>,
}

/// Enumerates patch centers starting at (L/2, L/2), advancing by `step`,
/// keeping only fully interior patches.
pub fn patch_grid(img: &GrayImage, patch_size: usize, step: usize) -> Result<PatchGrid> {
    if patch_size % 2 == 0 || patch_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "patch size must be odd, got {patch_size}"
        )));
    }
    if patch_size > img.width() || patch_size > img.height() {
        return Err(Error::InvalidArgument(format!(
            "patch size {} exceeds image dimensions {}x{}",
            patch_size,
            img.width(),
            img.height()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("step must be at least 1".into()));
    }
    let half = patch_size / 2;
    let mut centers = Vec::new();
    let mut r = half;
    while r + half < img.height() {
        let mut c = half;
        while c + half < img.width() {
            centers.push((r, c));
            c += step;
        }
        r += step;
    }
    Ok(PatchGrid {
        patch_size,
        step,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png_rgb(path: &Path, w: u32, h: u32, rgb: &[u8]) {
        image::save_buffer(path, rgb, w, h, image::ExtendedColorType::Rgb8).unwrap();
    }

    #[test]
    fn pgm_single_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.pgm");
        fs::write(&path, b"P5\n1 1\n255\n\x80").unwrap();
        let img = load_grayscale(&path).unwrap();
        assert_eq!((img.width(), img.height()), (1, 1));
        assert_eq!(img.data(), &[128.0]);
    }

    #[test]
    fn pgm_comment_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.pgm");
        fs::write(&ok, b"P5\n# a comment\n2 1\n255\n\x01\x02").unwrap();
        let img = load_grayscale(&ok).unwrap();
        assert_eq!(img.data(), &[1.0, 2.0]);

        let bad = dir.path().join("bad.pgm");
        fs::write(&bad, b"P5\n2 2\n255\n\x01\x02").unwrap();
        assert!(matches!(load_grayscale(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn white_png_maps_to_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        write_png_rgb(&path, 2, 2, &[255; 12]);
        let img = load_grayscale(&path).unwrap();
        assert!(img.data().iter().all(|&v| (v - 255.0).abs() < 1e-9));
    }

    #[test]
    fn red_pixel_uses_bt601_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        write_png_rgb(&path, 1, 1, &[255, 0, 0]);
        let img = load_grayscale(&path).unwrap();
        assert!((img.at(0, 0) - 76.245).abs() < 1e-9);
    }

    #[test]
    fn grayscale_conversion_is_pointwise() {
        // converting a permuted image equals permuting the converted image
        let dir = tempfile::tempdir().unwrap();
        let rgb: Vec<u8> = vec![10, 200, 30, 250, 5, 90, 0, 0, 0, 77, 77, 77];
        let rev: Vec<u8> = rgb.chunks(3).rev().flatten().copied().collect();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        write_png_rgb(&a, 2, 2, &rgb);
        write_png_rgb(&b, 2, 2, &rev);
        let fa = load_grayscale(&a).unwrap();
        let fb = load_grayscale(&b).unwrap();
        let mut rb = fb.data().to_vec();
        rb.reverse();
        assert_eq!(fa.data(), &rb[..]);
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let missing = Path::new("/nonexistent/nowhere.png");
        assert!(matches!(load_grayscale(missing), Err(Error::Io { .. })));
    }

    #[test]
    fn garbage_bytes_are_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        fs::write(&path, b"definitely not an image").unwrap();
        assert!(matches!(load_grayscale(&path), Err(Error::Format(_))));
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = GrayImage::from_fn(5, 4, |_, _| 50.0);
        for method in [ResizeMethod::Bilinear, ResizeMethod::Bicubic] {
            for (w, h) in [(3, 3), (9, 2), (13, 17)] {
                let out = resize(&img, w, h, method).unwrap();
                for &v in out.data() {
                    assert!((v - 50.0).abs() < 1e-9, "{method:?} {w}x{h}: {v}");
                }
            }
        }
    }

    #[test]
    fn identity_resize_is_bit_identical() {
        let img = GrayImage::from_fn(7, 5, |r, c| (r * 31 + c * 7) as f64 % 253.0);
        for method in [ResizeMethod::Bilinear, ResizeMethod::Bicubic] {
            let out = resize(&img, 7, 5, method).unwrap();
            assert_eq!(out.data(), img.data());
        }
    }

    #[test]
    fn bilinear_midpoint_from_hand_weights() {
        // [[0,100],[0,100]] widened to 3 columns: middle column sits halfway
        let img = GrayImage::new(2, 2, vec![0.0, 100.0, 0.0, 100.0]).unwrap();
        let out = resize(&img, 3, 2, ResizeMethod::Bilinear).unwrap();
        assert_eq!(out.at(0, 1), 50.0);
        assert_eq!(out.at(1, 1), 50.0);
        assert_eq!(out.at(0, 0), 0.0);
        assert_eq!(out.at(0, 2), 100.0);
    }

    #[test]
    fn patch_grid_matches_brute_force_enumeration() {
        let img = GrayImage::from_fn(200, 200, |_, _| 0.0);
        let grid = patch_grid(&img, 15, 2).unwrap();
        assert_eq!(grid.centers.len(), 8649); // 93 x 93

        // oracle: every lattice-aligned center whose patch fits
        let half = 7usize;
        let mut expected = Vec::new();
        for r in 0..200usize {
            for c in 0..200usize {
                let inside = r >= half && c >= half && r + half < 200 && c + half < 200;
                if inside && (r - half) % 2 == 0 && (c - half) % 2 == 0 {
                    expected.push((r, c));
                }
            }
        }
        assert_eq!(grid.centers, expected);
    }

    #[test]
    fn patch_grid_degenerate_cases() {
        let img = GrayImage::from_fn(9, 9, |_, _| 0.0);
        let single = patch_grid(&img, 9, 2).unwrap();
        assert_eq!(single.centers, vec![(4, 4)]);

        let big_step = patch_grid(&img, 3, 100).unwrap();
        assert_eq!(big_step.centers, vec![(1, 1)]);

        assert!(patch_grid(&img, 11, 2).is_err()); // larger than image
        assert!(patch_grid(&img, 4, 2).is_err()); // even
        assert!(patch_grid(&img, 3, 0).is_err()); // zero step
    }

    #[test]
    fn patches_lie_inside_image() {
        let img = GrayImage::from_fn(37, 23, |_, _| 0.0);
        for (l, step) in [(3, 1), (5, 2), (7, 3), (21, 4)] {
            let grid = patch_grid(&img, l, step).unwrap();
            let half = l / 2;
            assert!(!grid.centers.is_empty());
            for &(r, c) in &grid.centers {
                assert!(r >= half && c >= half);
                assert!(r + half < img.height() && c + half < img.width());
            }
        }
    }
}
