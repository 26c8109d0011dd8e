//! Image metrics and descriptive statistics.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::colorspace::luma;
use crate::math::{log10, sqrt};
use crate::render::Image;
use crate::{Error, Result};

/// Reported PSNR when the two images are identical.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.pixels.is_empty() {
        return Err(Error::invalid("cannot compare empty images"));
    }
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]) * (p[c] - q[c])).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.pixels.len()) as f64)
}

/// `10 log10(1 / mse)` for images with unit peak.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_IDENTICAL
    } else {
        -10.0 * log10(mse)
    }
}

/// Mean luma of linear images over a random `fraction` of them (at least one).
pub fn mean_luminance<R: Rng + ?Sized>(frames: &[Image], fraction: f64, rng: &mut R) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("sample fraction {fraction} outside (0, 1]")));
    }
    let count = (libm::round(frames.len() as f64 * fraction) as usize).clamp(1, frames.len());
    let mut picked = index::sample(rng, frames.len(), count).into_vec();
    picked.sort_unstable();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in picked {
        for p in &frames[i].pixels {
            sum += luma(*p);
        }
        n += frames[i].pixels.len();
    }
    if n == 0 {
        return Err(Error::invalid("frames have no pixels"));
    }
    Ok(sum / n as f64)
}

/// Mean, sample standard deviation (n - 1), min and max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("summary of an empty sample"));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Summary {
            count: n,
            mean,
            std_dev: sqrt(var),
            min,
            max,
        })
    }
}

/// Median of a non-empty sample (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 3, [0.2, 0.4, 0.6]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = Image::filled(4, 3, [0.0; 3]);
        let d = Image::filled(4, 3, [0.5; 3]);
        assert!((psnr(&c, &d).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
        assert!(psnr(&a, &Image::new(3, 4)).is_err());
    }

    #[test]
    fn psnr_symmetric_and_channel_permutation_invariant() {
        let mut a = Image::new(3, 2);
        let mut b = Image::new(3, 2);
        for (k, (p, q)) in a.pixels.iter_mut().zip(b.pixels.iter_mut()).enumerate() {
            let k = k as f64;
            *p = [0.1 * k % 1.0, 0.3, 0.05 * k];
            *q = [0.2, 0.07 * k, 0.9 - 0.1 * k];
        }
        let perm = |img: &Image| Image {
            pixels: img.pixels.iter().map(|p| [p[2], p[0], p[1]]).collect(),
            ..img.clone()
        };
        let ab = psnr(&a, &b).unwrap();
        assert_eq!(ab, psnr(&b, &a).unwrap());
        assert!((ab - psnr(&perm(&a), &perm(&b)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn luminance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let white = alloc::vec![Image::filled(2, 2, [1.0; 3]); 8];
        assert!((mean_luminance(&white, 0.25, &mut rng).unwrap() - 1.0).abs() < 1e-12);
        let black = alloc::vec![Image::filled(2, 2, [0.0; 3]); 8];
        assert_eq!(mean_luminance(&black, 0.25, &mut rng).unwrap(), 0.0);
        let mut mixed = white[..2].to_vec();
        mixed.extend_from_slice(&black[..2]);
        assert!((mean_luminance(&mixed, 1.0, &mut rng).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(mean_luminance(&[], 0.25, &mut rng), Err(Error::EmptyDataset));
    }

    #[test]
    fn summary_matches_hand_formula() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert_eq!(Summary::of(&[7.0]).unwrap().std_dev, 0.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
