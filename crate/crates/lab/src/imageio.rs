//! PNG frames at 8 or 16 bits, with an explicit white level.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use radlog_core::render::{Image, ScalarMap};

use crate::fsutil::write_atomic;
use crate::{LabError, Result};

/// Integer RGB samples exactly as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    /// Row-major RGB triples.
    pub samples: Vec<u16>,
}

impl RawFrame {
    /// Divides by `white_level`. Samples above it are rejected.
    pub fn normalize(&self, white_level: u32) -> Result<Image> {
        if white_level == 0 {
            return Err(LabError::invalid("white level must be positive"));
        }
        if let Some(&s) = self.samples.iter().find(|&&s| u32::from(s) > white_level) {
            return Err(LabError::invalid(format!(
                "sample {s} exceeds the white level {white_level}"
            )));
        }
        let w = f64::from(white_level);
        let pixels = self
            .samples
            .chunks_exact(3)
            .map(|c| [f64::from(c[0]) / w, f64::from(c[1]) / w, f64::from(c[2]) / w])
            .collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            pixels,
        })
    }
}

/// Nearest integer code for `v` in `[0, 1]`, clamped.
pub fn quantize(v: f64, white_level: u32) -> u16 {
    let w = f64::from(white_level);
    (v.clamp(0.0, 1.0) * w).round().min(w) as u16
}

pub fn read_png(path: &Path) -> Result<RawFrame> {
    let img = image::open(path).map_err(|e| LabError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (bit_depth, samples) = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            (8, img.to_rgb8().into_raw().into_iter().map(u16::from).collect())
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            (16, img.to_rgb16().into_raw())
        }
        other => {
            return Err(LabError::Image {
                path: path.to_path_buf(),
                message: format!("unsupported pixel format {:?}", other.color()),
            })
        }
    };
    Ok(RawFrame {
        width,
        height,
        bit_depth,
        samples,
    })
}

fn encode_png(img: DynamicImage, path: &Path) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| LabError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(buf.into_inner())
}

/// Writes `img` (values in `[0, 1]`) as an RGB PNG of the given depth, with
/// `1.0` stored as `white_level`.
pub fn write_png(path: &Path, img: &Image, bit_depth: u8, white_level: u32) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let samples = img.pixels.iter().flat_map(|p| p.map(|v| quantize(v, white_level)));
    let dynamic = match bit_depth {
        8 if white_level <= 255 => {
            let raw: Vec<u8> = samples.map(|s| s as u8).collect();
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
        16 => {
            let raw: Vec<u16> = samples.collect();
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
        _ => {
            return Err(LabError::invalid(format!(
                "unsupported bit depth {bit_depth} with white level {white_level}"
            )))
        }
    };
    write_atomic(path, &encode_png(dynamic, path)?)
}

/// 16-bit grayscale depth visualization: `near` maps to black, `far` to white.
pub fn write_depth_png(path: &Path, depth: &ScalarMap, near: f64, far: f64) -> Result<()> {
    let span = (far - near).max(f64::MIN_POSITIVE);
    let raw: Vec<u16> = depth
        .values
        .iter()
        .map(|d| quantize((d - near) / span, 65535))
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(depth.width as u32, depth.height as u32, raw)
        .ok_or_else(|| LabError::invalid("depth map size mismatch"))?;
    write_atomic(path, &encode_png(DynamicImage::ImageLuma16(buf), path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image() -> Image {
        let mut img = Image::new(5, 3);
        for (k, p) in img.pixels.iter_mut().enumerate() {
            let t = k as f64 / 14.0;
            *p = [t, 1.0 - t, (t * 7.0) % 1.0];
        }
        img
    }

    #[test]
    fn png_round_trip_at_each_depth() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient_image();
        for (depth, white) in [(8u8, 255u32), (16, 65535), (16, 1023)] {
            let path = dir.path().join(format!("f{depth}_{white}.png"));
            write_png(&path, &img, depth, white).unwrap();
            let raw = read_png(&path).unwrap();
            assert_eq!((raw.width, raw.height, raw.bit_depth), (5, 3, depth));
            let back = raw.normalize(white).unwrap();
            for (p, q) in img.pixels.iter().zip(&back.pixels) {
                for c in 0..3 {
                    assert!((p[c] - q[c]).abs() <= 0.5 / f64::from(white) + 1e-15);
                }
            }
        }
        assert!(!dir.path().join(".f8_255.png.tmp").exists());
    }

    #[test]
    fn samples_above_white_level_are_rejected() {
        let raw = RawFrame {
            width: 1,
            height: 1,
            bit_depth: 16,
            samples: vec![0, 1023, 1024],
        };
        assert!(raw.normalize(1023).is_err());
        assert_eq!(raw.normalize(65535).unwrap().pixels[0][1], 1023.0 / 65535.0);
    }

    #[test]
    fn depth_png_is_sixteen_bit_gray() {
        let dir = tempfile::tempdir().unwrap();
        let map = ScalarMap {
            width: 2,
            height: 1,
            values: vec![1.0, 3.0],
        };
        let path = dir.path().join("d.png");
        write_depth_png(&path, &map, 1.0, 3.0).unwrap();
        let raw = read_png(&path).unwrap();
        assert_eq!(raw.samples, vec![0, 0, 0, 65535, 65535, 65535]);
    }
}
