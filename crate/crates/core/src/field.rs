//! The learnable radiance field and its hand-written reverse-mode gradient.
//!
//! Architecture: world points are mapped into `[-1, 1]^3` using the model
//! bounds, encoded with sin/cos features and (optionally) a dense trilinear
//! feature grid, and fed to a ReLU MLP trunk. Two linear heads read the last
//! hidden layer: `softplus` for density and `sigmoid` for the three color
//! channels, so color is always inside `[0, 1]` in the representation space.
//!
//! All parameters live in one flat `Vec<f64>`; [`Layout`] records where each
//! block starts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::ColorSpace;
use crate::math::{cos, floor, sigmoid, sin, softplus, sqrt, Aabb, Vec3};
use crate::{Error, Result};

/// Frequencies used for the view direction when the color head is view dependent.
pub const DIR_FREQUENCIES: usize = 2;

/// Dense feature grid covering the model bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    /// Vertices per axis (at least 2).
    pub resolution: usize,
    pub feature_dim: usize,
    /// Upper limit on `resolution^3 * feature_dim`.
    pub budget: usize,
}

impl GridConfig {
    /// Largest cube resolution whose entry count fits `budget`.
    pub fn from_budget(budget: usize, feature_dim: usize) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::invalid("grid feature_dim must be positive"));
        }
        let mut res = 1;
        while (res + 1usize).pow(3) * feature_dim <= budget {
            res += 1;
        }
        if res < 2 {
            return Err(Error::invalid(format!(
                "grid budget {budget} cannot hold a 2^3 grid of {feature_dim} features"
            )));
        }
        Ok(GridConfig {
            resolution: res,
            feature_dim,
            budget,
        })
    }

    pub fn entries(&self) -> usize {
        self.resolution.pow(3) * self.feature_dim
    }

    fn validate(&self) -> Result<()> {
        if self.resolution < 2 || self.feature_dim == 0 {
            return Err(Error::invalid("grid needs resolution >= 2 and feature_dim >= 1"));
        }
        if self.entries() > self.budget {
            return Err(Error::invalid(format!(
                "grid {}^3 x {} exceeds its entry budget {}",
                self.resolution, self.feature_dim, self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mlp_width: usize,
    /// Number of hidden ReLU layers.
    pub mlp_depth: usize,
    pub pe_frequencies: usize,
    pub grid: Option<GridConfig>,
    pub representation_space: ColorSpace,
    /// Feed the encoded view direction to the color head.
    pub view_dependent: bool,
    /// World box mapped onto `[-1, 1]^3`.
    pub bounds: Aabb,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mlp_width: 32,
            mlp_depth: 2,
            pe_frequencies: 4,
            grid: Some(GridConfig {
                resolution: 10,
                feature_dim: 4,
                budget: 4096,
            }),
            representation_space: ColorSpace::TrueLog,
            view_dependent: false,
            bounds: Aabb::cube(1.0),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mlp_width == 0 || self.mlp_depth == 0 {
            return Err(Error::invalid("mlp width and depth must be at least 1"));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let ColorSpace::ScaledLog(k) = self.representation_space {
            ColorSpace::scaled_log(k)?;
        }
        let e = self.bounds.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(Error::invalid("model bounds must have positive extent"));
        }
        Ok(())
    }

    pub fn pe_dim(&self) -> usize {
        3 + 6 * self.pe_frequencies
    }

    pub fn dir_dim(&self) -> usize {
        if self.view_dependent {
            3 + 6 * DIR_FREQUENCIES
        } else {
            0
        }
    }

    pub fn input_dim(&self) -> usize {
        self.pe_dim() + self.grid.map_or(0, |g| g.feature_dim)
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    trunk: Vec<Dense>,
    density: Dense,
    color: Dense,
    /// Start of the grid features (row-major `[z][y][x][feature]`).
    pub grid_offset: usize,
    pub grid_len: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut off = 0;
        let mut dense = |inputs: usize, outputs: usize| {
            let d = Dense {
                inputs,
                outputs,
                weights: off,
                bias: off + inputs * outputs,
            };
            off += d.len();
            d
        };
        let width = cfg.mlp_width;
        let mut trunk = Vec::with_capacity(cfg.mlp_depth);
        trunk.push(dense(cfg.input_dim(), width));
        for _ in 1..cfg.mlp_depth {
            trunk.push(dense(width, width));
        }
        let density = dense(width, 1);
        let color = dense(width + cfg.dir_dim(), 3);
        let grid_len = cfg.grid.map_or(0, |g| g.entries());
        Layout {
            trunk,
            density,
            color,
            grid_offset: off,
            grid_len,
            total: off + grid_len,
        }
    }

    /// Index range of the density head (weights then bias).
    pub fn density_head(&self) -> core::ops::Range<usize> {
        self.density.weights..self.density.weights + self.density.len()
    }

    /// Index range of the color head (weights then bias).
    pub fn color_head(&self) -> core::ops::Range<usize> {
        self.color.weights..self.color.weights + self.color.len()
    }
}

/// `[p, sin(2^k pi p), cos(2^k pi p)]` for `k = 0..frequencies`.
///
/// Layout per frequency is `sin(x), sin(y), sin(z), cos(x), cos(y), cos(z)`.
pub fn positional_encoding(p: Vec3, frequencies: usize) -> Vec<f64> {
    let mut out = vec![0.0; 3 + 6 * frequencies];
    encode_positions(p, frequencies, &mut out);
    out
}

fn encode_positions(p: Vec3, frequencies: usize, out: &mut [f64]) {
    out[0] = p.x;
    out[1] = p.y;
    out[2] = p.z;
    let mut scale = PI;
    for k in 0..frequencies {
        let base = 3 + 6 * k;
        for axis in 0..3 {
            let a = scale * p[axis];
            out[base + axis] = sin(a);
            out[base + 3 + axis] = cos(a);
        }
        scale *= 2.0;
    }
}

/// Trilinear corner indices (into the grid block, already multiplied by
/// `feature_dim`) and weights for a point in `[-1, 1]^3` (clamped).
fn grid_corners(grid: &GridConfig, p: Vec3) -> ([usize; 8], [f64; 8]) {
    let res = grid.resolution;
    let mut cell = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for axis in 0..3 {
        let u = (p[axis].clamp(-1.0, 1.0) + 1.0) * 0.5 * (res - 1) as f64;
        let i = (floor(u) as usize).min(res - 2);
        cell[axis] = i;
        frac[axis] = u - i as f64;
    }
    let mut idx = [0usize; 8];
    let mut w = [0.0f64; 8];
    for corner in 0..8 {
        let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
        let (x, y, z) = (cell[0] + dx, cell[1] + dy, cell[2] + dz);
        idx[corner] = ((z * res + y) * res + x) * grid.feature_dim;
        let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
        let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
        let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
        w[corner] = wx * wy * wz;
    }
    (idx, w)
}

/// Trilinear interpolation of grid features at `p` (in `[-1, 1]^3`, clamped).
pub fn grid_encode(grid: &GridConfig, features: &[f64], p: Vec3) -> Result<Vec<f64>> {
    if features.len() != grid.entries() {
        return Err(Error::Shape {
            expected: grid.entries(),
            actual: features.len(),
        });
    }
    let (idx, w) = grid_corners(grid, p);
    let mut out = vec![0.0; grid.feature_dim];
    for c in 0..8 {
        for (f, o) in out.iter_mut().enumerate() {
            *o += w[c] * features[idx[c] + f];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput {
    /// Representation-space color, each channel in `[0, 1]`.
    pub color: [f64; 3],
    pub density: f64,
}

/// Anything the renderer can query for representation-space color and density.
pub trait RadianceField {
    fn representation_space(&self) -> ColorSpace;
    fn bounds(&self) -> Aabb;
    fn query(&self, p: Vec3, dir: Vec3) -> Result<FieldOutput>;
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct FieldTape {
    /// Encoded input followed by every hidden layer's post-ReLU output.
    acts: Vec<f64>,
    /// Start offset of each block in `acts`.
    act_offsets: Vec<usize>,
    dir_features: Vec<f64>,
    density_pre: f64,
    color: [f64; 3],
    grid_idx: [usize; 8],
    grid_w: [f64; 8],
    /// Scratch for the backward pass.
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl FieldTape {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut act_offsets = vec![0];
        let mut len = cfg.input_dim();
        for _ in 0..cfg.mlp_depth {
            act_offsets.push(len);
            len += cfg.mlp_width;
        }
        let max_dim = cfg.input_dim().max(cfg.mlp_width);
        FieldTape {
            acts: vec![0.0; len],
            act_offsets,
            dir_features: vec![0.0; cfg.dir_dim()],
            density_pre: 0.0,
            color: [0.0; 3],
            grid_idx: [0; 8],
            grid_w: [0.0; 8],
            delta: vec![0.0; max_dim],
            delta_prev: vec![0.0; max_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    layout: Layout,
}

/// Four-accumulator dot product; the fixed summation order keeps results
/// reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic initialization from `config.seed`.
///
/// Trunk weights are `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, head weights
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero, grid features
/// `U(-0.05, 0.05)`.
pub fn init_model(config: &ModelConfig) -> Result<RadianceModel> {
    config.validate()?;
    let layout = Layout::new(config);
    let mut params = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fill = |params: &mut [f64], d: &Dense, bound: f64| {
        for w in &mut params[d.weights..d.weights + d.inputs * d.outputs] {
            *w = rng.random_range(-bound..bound);
        }
    };
    for d in &layout.trunk {
        fill(&mut params, d, sqrt(6.0 / d.inputs as f64));
    }
    fill(&mut params, &layout.density, 1.0 / sqrt(layout.density.inputs as f64));
    fill(&mut params, &layout.color, 1.0 / sqrt(layout.color.inputs as f64));
    for g in &mut params[layout.grid_offset..] {
        *g = rng.random_range(-0.05..0.05);
    }
    Ok(RadianceModel {
        config: config.clone(),
        params,
        layout,
    })
}

impl RadianceModel {
    /// Rebuilds a model from a stored parameter vector.
    pub fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape {
                expected: layout.total,
                actual: params.len(),
            });
        }
        Ok(RadianceModel {
            config,
            params,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn grid_features(&self) -> &[f64] {
        &self.params[self.layout.grid_offset..]
    }

    pub fn new_tape(&self) -> FieldTape {
        FieldTape::new(&self.config)
    }

    /// Forward pass recording activations into `tape`.
    pub fn eval_with_tape(&self, p: Vec3, dir: Vec3, tape: &mut FieldTape) -> Result<FieldOutput> {
        let cfg = &self.config;
        let unit = cfg.bounds.to_unit(p);
        let pe_dim = cfg.pe_dim();
        encode_positions(unit, cfg.pe_frequencies, &mut tape.acts[..pe_dim]);
        if let Some(grid) = &cfg.grid {
            let (idx, w) = grid_corners(grid, unit);
            tape.grid_idx = idx;
            tape.grid_w = w;
            let feats = &self.params[self.layout.grid_offset..];
            let out = &mut tape.acts[pe_dim..pe_dim + grid.feature_dim];
            out.fill(0.0);
            for c in 0..8 {
                let base = idx[c];
                axpy(w[c], &feats[base..base + grid.feature_dim], out);
            }
        }
        for (l, d) in self.layout.trunk.iter().enumerate() {
            let (prev, rest) = tape.acts.split_at_mut(tape.act_offsets[l + 1]);
            let input = &prev[tape.act_offsets[l]..];
            let out = &mut rest[..d.outputs];
            for (o, h) in out.iter_mut().enumerate() {
                let row = d.weights + o * d.inputs;
                let z = dot(&self.params[row..row + d.inputs], input) + self.params[d.bias + o];
                // NaN must propagate so divergence is detected.
                *h = if z > 0.0 || z.is_nan() { z } else { 0.0 };
            }
        }
        let last = &tape.acts[tape.act_offsets[cfg.mlp_depth]..];
        let dh = &self.layout.density;
        tape.density_pre = dot(&self.params[dh.weights..dh.weights + dh.inputs], last)
            + self.params[dh.bias];
        let density = softplus(tape.density_pre);

        if cfg.view_dependent {
            encode_positions(dir, DIR_FREQUENCIES, &mut tape.dir_features);
        }
        let ch = &self.layout.color;
        let width = cfg.mlp_width;
        for c in 0..3 {
            let row = ch.weights + c * ch.inputs;
            let mut z = dot(&self.params[row..row + width], last) + self.params[ch.bias + c];
            if cfg.view_dependent {
                z += dot(&self.params[row + width..row + ch.inputs], &tape.dir_features);
            }
            tape.color[c] = sigmoid(z);
        }
        let out = FieldOutput {
            color: tape.color,
            density,
        };
        if !(density.is_finite() && out.color.iter().all(|c| c.is_finite())) {
            return Err(self.numeric_error("field output"));
        }
        Ok(out)
    }

    fn numeric_error(&self, what: &str) -> Error {
        let bad = self.params.iter().filter(|v| !v.is_finite()).count();
        let max_abs = self
            .params
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Error::Numeric(format!(
            "{what} is not finite ({bad} non-finite of {} parameters, max |finite param| = {max_abs:.3e})",
            self.params.len()
        ))
    }

    /// Accumulates `d(outputs)/d(params)` contracted with the upstream
    /// gradients into `grad`.
    pub fn backward_into(
        &self,
        tape: &mut FieldTape,
        d_color: [f64; 3],
        d_density: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let cfg = &self.config;
        let width = cfg.mlp_width;
        let depth = cfg.mlp_depth;
        let last_off = tape.act_offsets[depth];

        let d_dpre = d_density * sigmoid(tape.density_pre);
        let mut d_logit = [0.0; 3];
        for c in 0..3 {
            let y = tape.color[c];
            d_logit[c] = d_color[c] * y * (1.0 - y);
        }

        let delta = &mut tape.delta[..width];
        delta.fill(0.0);
        {
            let last = &tape.acts[last_off..last_off + width];
            let dh = &self.layout.density;
            if d_dpre != 0.0 {
                axpy(d_dpre, last, &mut grad[dh.weights..dh.weights + width]);
                grad[dh.bias] += d_dpre;
                axpy(d_dpre, &self.params[dh.weights..dh.weights + width], delta);
            }
            let ch = &self.layout.color;
            for (c, &g) in d_logit.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = ch.weights + c * ch.inputs;
                axpy(g, last, &mut grad[row..row + width]);
                if cfg.view_dependent {
                    axpy(g, &tape.dir_features, &mut grad[row + width..row + ch.inputs]);
                }
                grad[ch.bias + c] += g;
                axpy(g, &self.params[row..row + width], delta);
            }
        }

        for l in (0..depth).rev() {
            let d = &self.layout.trunk[l];
            let out_off = tape.act_offsets[l + 1];
            let in_off = tape.act_offsets[l];
            let prev = &mut tape.delta_prev[..d.inputs];
            prev.fill(0.0);
            for o in 0..d.outputs {
                // ReLU gate: zero activations pass no gradient.
                if tape.acts[out_off + o] <= 0.0 {
                    continue;
                }
                let dz = tape.delta[o];
                if dz == 0.0 {
                    continue;
                }
                let row = d.weights + o * d.inputs;
                axpy(dz, &tape.acts[in_off..in_off + d.inputs], &mut grad[row..row + d.inputs]);
                grad[d.bias + o] += dz;
                axpy(dz, &self.params[row..row + d.inputs], prev);
            }
            core::mem::swap(&mut tape.delta, &mut tape.delta_prev);
        }

        if let Some(grid) = &cfg.grid {
            let pe_dim = cfg.pe_dim();
            let fd = grid.feature_dim;
            let goff = self.layout.grid_offset;
            for c in 0..8 {
                let base = goff + tape.grid_idx[c];
                axpy(
                    tape.grid_w[c],
                    &tape.delta[pe_dim..pe_dim + fd],
                    &mut grad[base..base + fd],
                );
            }
        }
        Ok(())
    }
}

impl RadianceField for RadianceModel {
    fn representation_space(&self) -> ColorSpace {
        self.config.representation_space
    }

    fn bounds(&self) -> Aabb {
        self.config.bounds
    }

    fn query(&self, p: Vec3, dir: Vec3) -> Result<FieldOutput> {
        field_eval(self, p, dir)
    }
}

/// Representation-space color and density at a world point.
pub fn field_eval(model: &RadianceModel, p: Vec3, dir: Vec3) -> Result<FieldOutput> {
    let mut tape = model.new_tape();
    model.eval_with_tape(p, dir, &mut tape)
}

/// Parameter gradient of `d_color . color + d_density * density` at `(p, dir)`.
pub fn field_backward(
    model: &RadianceModel,
    p: Vec3,
    dir: Vec3,
    d_color: [f64; 3],
    d_density: f64,
) -> Result<Vec<f64>> {
    let mut tape = model.new_tape();
    model.eval_with_tape(p, dir, &mut tape)?;
    let mut grad = vec![0.0; model.param_count()];
    model.backward_into(&mut tape, d_color, d_density, &mut grad)?;
    Ok(grad)
}
