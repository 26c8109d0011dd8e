//! Transforms between linear RGB and the representation color spaces.
//!
//! Every space is a strictly increasing map from `[x_lo, 1]` onto `[0, 1]`.
//! `x_lo` is 0 for all spaces except TrueLog, which floors its input at
//! 1/255 (anything darker encodes to 0). All arithmetic is `f64`.
//!
//! | space       | forward `x -> y`                  | inverse `y -> x`            |
//! |-------------|-----------------------------------|-----------------------------|
//! | `linear`    | `x`                               | `y`                         |
//! | `srgb`      | `x^(1/2.22)`                      | `y^2.22`                    |
//! | `gplog`     | `ln(x(e-1)+1)`                    | `(e^y-1)/(e-1)`             |
//! | `truelog`   | `ln(max(255x,1))/ln 255`          | `255^(y-1)`                 |
//! | `scaledlog` | `ln(kx+1)/ln(k+1)`                | `((k+1)^y-1)/k`             |
//!
//! The TrueLog row is the closed form of the normalized log pipeline
//! `f(x) = ln(e^(ln(max(255x,1)) - 1) * 255 / (e-1))`,
//! `(f(x) - f(1/255)) / (f(1) - f(1/255))`: every additive constant inside
//! `f` cancels under the normalization.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use crate::math::{exp, exp_m1, ln, ln_1p, powf};
use crate::{Error, Result};

/// Gamma of the power-law sRGB approximation.
pub const SRGB_GAMMA: f64 = 2.22;
/// Number of code values spanned by TrueLog (`x_lo = 1 / TRUELOG_RANGE`).
pub const TRUELOG_RANGE: f64 = 255.0;
const E_MINUS_1: f64 = core::f64::consts::E - 1.0;
const LN_255: f64 = 5.541263545158426;

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Representation color space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorSpace {
    Linear,
    SrgbGamma,
    GpLog,
    TrueLog,
    /// `ln(kx+1)/ln(k+1)`; `k > 0`.
    ScaledLog(f64),
}

impl ColorSpace {
    /// `k = 255 * 100`.
    pub const LOG100: ColorSpace = ColorSpace::ScaledLog(25500.0);
    /// `k = 255 * 0.1`.
    pub const LOG01: ColorSpace = ColorSpace::ScaledLog(25.5);

    /// The four spaces compared in the main quality experiments.
    pub const MAIN: [ColorSpace; 4] = [
        ColorSpace::GpLog,
        ColorSpace::Linear,
        ColorSpace::SrgbGamma,
        ColorSpace::TrueLog,
    ];

    pub fn scaled_log(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid(format!("scaledlog needs a finite k > 0, got {k}")));
        }
        Ok(ColorSpace::ScaledLog(k))
    }

    fn validate(self) -> Result<Self> {
        match self {
            ColorSpace::ScaledLog(k) => ColorSpace::scaled_log(k),
            s => Ok(s),
        }
    }

    /// Smallest input that the forward map does not clamp.
    pub fn lower_bound(self) -> f64 {
        match self {
            ColorSpace::TrueLog => 1.0 / TRUELOG_RANGE,
            _ => 0.0,
        }
    }

    /// Forward map with the input clamped to `[0, 1]`; no validation.
    #[inline]
    pub fn encode(self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            ColorSpace::Linear => x,
            ColorSpace::SrgbGamma => powf(x, 1.0 / SRGB_GAMMA),
            ColorSpace::GpLog => ln_1p(x * E_MINUS_1),
            ColorSpace::TrueLog => ln((TRUELOG_RANGE * x).max(1.0)) / LN_255,
            ColorSpace::ScaledLog(k) => ln_1p(k * x) / ln_1p(k),
        }
    }

    /// Inverse map with the input clamped to `[0, 1]`; no validation.
    #[inline]
    pub fn decode(self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            ColorSpace::Linear => y,
            ColorSpace::SrgbGamma => powf(y, SRGB_GAMMA),
            ColorSpace::GpLog => exp_m1(y) / E_MINUS_1,
            ColorSpace::TrueLog => exp((y - 1.0) * LN_255),
            ColorSpace::ScaledLog(k) => exp_m1(y * ln_1p(k)) / k,
        }
    }

    /// `d encode / dx`. Zero in the TrueLog clamp region `x < 1/255`.
    /// The sRGB derivative diverges at 0 and is returned as `+inf` there.
    #[inline]
    pub fn encode_derivative(self, x: f64) -> f64 {
        match self {
            ColorSpace::Linear => 1.0,
            ColorSpace::SrgbGamma => {
                if x <= 0.0 {
                    f64::INFINITY
                } else {
                    powf(x, 1.0 / SRGB_GAMMA - 1.0) / SRGB_GAMMA
                }
            }
            ColorSpace::GpLog => E_MINUS_1 / (x * E_MINUS_1 + 1.0),
            ColorSpace::TrueLog => {
                if x < 1.0 / TRUELOG_RANGE {
                    0.0
                } else {
                    1.0 / (x * LN_255)
                }
            }
            ColorSpace::ScaledLog(k) => k / ((k * x + 1.0) * ln_1p(k)),
        }
    }

    /// `d decode / dy` on `[0, 1]`.
    #[inline]
    pub fn decode_derivative(self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            ColorSpace::Linear => 1.0,
            ColorSpace::SrgbGamma => SRGB_GAMMA * powf(y, SRGB_GAMMA - 1.0),
            ColorSpace::GpLog => exp(y) / E_MINUS_1,
            ColorSpace::TrueLog => LN_255 * exp((y - 1.0) * LN_255),
            ColorSpace::ScaledLog(k) => {
                let l = ln_1p(k);
                l * exp(y * l) / k
            }
        }
    }

    pub fn name(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColorSpace::Linear => f.write_str("linear"),
            ColorSpace::SrgbGamma => f.write_str("srgb"),
            ColorSpace::GpLog => f.write_str("gplog"),
            ColorSpace::TrueLog => f.write_str("truelog"),
            ColorSpace::ScaledLog(k) => write!(f, "scaledlog:{k}"),
        }
    }
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ColorSpace::Linear),
            "srgb" => Ok(ColorSpace::SrgbGamma),
            "gplog" => Ok(ColorSpace::GpLog),
            "truelog" => Ok(ColorSpace::TrueLog),
            "log100" => Ok(ColorSpace::LOG100),
            "log01" => Ok(ColorSpace::LOG01),
            other => match other.strip_prefix("scaledlog:") {
                Some(k) => {
                    let k: f64 = k
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad scaledlog coefficient in {s:?}")))?;
                    ColorSpace::scaled_log(k)
                }
                None => Err(Error::invalid(format!("unknown color space {s:?}"))),
            },
        }
    }
}

fn check_finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(format!("non-finite color value {x}")))
    }
}

/// Linear value to `space`. The input is clamped to `[0, 1]` first.
pub fn forward_transform(space: ColorSpace, x: f64) -> Result<f64> {
    let space = space.validate()?;
    Ok(space.encode(check_finite(x)?))
}

/// `space` value back to linear.
pub fn inverse_transform(space: ColorSpace, y: f64) -> Result<f64> {
    let space = space.validate()?;
    let y = check_finite(y)?;
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::invalid(format!("encoded value {y} outside [0, 1]")));
    }
    Ok(space.decode(y))
}

/// Derivative of [`forward_transform`] with respect to the linear input.
pub fn transform_derivative(space: ColorSpace, x: f64) -> Result<f64> {
    let space = space.validate()?;
    Ok(space.encode_derivative(check_finite(x)?))
}

/// An RGB triple tagged with the space its channels are encoded in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorValue {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub space: ColorSpace,
}

impl ColorValue {
    pub fn new(r: f64, g: f64, b: f64, space: ColorSpace) -> Self {
        ColorValue { r, g, b, space }
    }

    pub fn linear(rgb: [f64; 3]) -> Self {
        ColorValue::new(rgb[0], rgb[1], rgb[2], ColorSpace::Linear)
    }

    pub fn channels(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

/// Re-encode a color: source space to linear, then linear to `target`.
pub fn convert(c: ColorValue, target: ColorSpace) -> Result<ColorValue> {
    let mut out = [0.0; 3];
    for (o, v) in out.iter_mut().zip(c.channels()) {
        *o = forward_transform(target, inverse_transform(c.space, v)?)?;
    }
    Ok(ColorValue::new(out[0], out[1], out[2], target))
}

/// Luma of a linear color.
pub fn luminance(c: ColorValue) -> Result<f64> {
    if c.space != ColorSpace::Linear {
        return Err(Error::invalid(format!(
            "luminance needs a linear color, got {}",
            c.space
        )));
    }
    let rgb = c.channels();
    for v in rgb {
        check_finite(v)?;
    }
    Ok(luma(rgb))
}

#[inline]
pub(crate) fn luma(rgb: [f64; 3]) -> f64 {
    LUMA_WEIGHTS[0] * rgb[0] + LUMA_WEIGHTS[1] * rgb[1] + LUMA_WEIGHTS[2] * rgb[2]
}
