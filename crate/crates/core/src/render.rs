//! Cameras, ray sampling and differentiable alpha compositing.
//!
//! Per sample, the field's representation-space color is decoded to linear
//! RGB, compositing happens in linear RGB, the background is blended in
//! linear, and the final pixel is encoded with the sRGB power law:
//!
//! ```text
//! field -> rep color --decode--> linear --composite--> linear pixel --encode sRGB--> pixel
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bidr::Scene;
use crate::colorspace::ColorSpace;
use crate::field::{FieldOutput, FieldTape, RadianceField, RadianceModel};
use crate::math::{exp, Aabb, Pose, Vec3};
use crate::{Error, Result};

/// Guard for normalizing the expected depth of nearly empty rays.
pub const DEPTH_EPS: f64 = 1e-6;
/// The sRGB derivative is evaluated no closer to 0 than this.
pub const SRGB_GRAD_FLOOR: f64 = 1e-6;

/// Pinhole camera; looks down its local -z axis with +y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
    /// World-from-camera.
    pub pose: Pose,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera needs a non-empty image"));
        }
        if !(self.focal > 0.0) {
            return Err(Error::invalid("camera focal length must be positive"));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(Error::invalid(format!(
                "camera needs 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        Ok(())
    }

    /// Focal length giving horizontal field of view `fov` (radians).
    pub fn focal_for_fov(width: usize, fov: f64) -> f64 {
        0.5 * width as f64 / libm::tan(0.5 * fov)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// The part of `[near, far]` inside `bounds`, if any.
    pub fn clipped(&self, bounds: &Aabb) -> Option<Ray> {
        let (t0, t1) = bounds.ray_interval(self.origin, self.direction)?;
        let near = self.near.max(t0);
        let far = self.far.min(t1);
        (far > near).then_some(Ray { near, far, ..*self })
    }
}

/// Ray through the center of pixel `(i, j)` (column, row; row 0 at the top).
pub fn camera_ray(cam: &Camera, i: usize, j: usize) -> Result<Ray> {
    if i >= cam.width || j >= cam.height {
        return Err(Error::invalid(format!(
            "pixel ({i}, {j}) outside {}x{} image",
            cam.width, cam.height
        )));
    }
    let x = (i as f64 + 0.5 - 0.5 * cam.width as f64) / cam.focal;
    let y = -(j as f64 + 0.5 - 0.5 * cam.height as f64) / cam.focal;
    let dir = cam.pose.rotate(Vec3::new(x, y, -1.0)).normalized();
    Ok(Ray {
        origin: cam.pose.translation,
        direction: dir,
        near: cam.near,
        far: cam.far,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub t: f64,
    pub delta: f64,
}

/// `n` samples on `[near, far]`, one per equal-width bin. Bins partition the
/// interval and `delta` is the bin width. Without stratification each sample
/// sits at its bin midpoint; with it, uniformly inside its bin.
pub fn sample_along_ray<R: Rng + ?Sized>(
    ray: &Ray,
    n: usize,
    stratified: bool,
    rng: &mut R,
) -> Vec<RaySample> {
    let mut out = Vec::with_capacity(n);
    fill_samples(ray, n, stratified, rng, &mut out);
    out
}

fn fill_samples<R: Rng + ?Sized>(
    ray: &Ray,
    n: usize,
    stratified: bool,
    rng: &mut R,
    out: &mut Vec<RaySample>,
) {
    out.clear();
    let n = n.max(1);
    let width = (ray.far - ray.near) / n as f64;
    for k in 0..n {
        let lo = ray.near + width * k as f64;
        let u = if stratified { rng.random::<f64>() } else { 0.5 };
        out.push(RaySample {
            t: lo + u * width,
            delta: width,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    /// `T_i * alpha_i` per sample.
    pub weights: Vec<f64>,
}

/// Quadrature of the volume rendering integral.
///
/// `alpha_i = 1 - exp(-sigma_i delta_i)`, `T_i = prod_{j<i} (1 - alpha_j)`,
/// `color = sum T_i alpha_i c_i`, `opacity = sum T_i alpha_i`,
/// `depth = sum T_i alpha_i t_i / max(opacity, DEPTH_EPS)`.
pub fn composite(
    colors: &[[f64; 3]],
    densities: &[f64],
    deltas: &[f64],
    ts: &[f64],
) -> Result<Composite> {
    let n = colors.len();
    if n == 0 {
        return Err(Error::invalid("compositing needs at least one sample"));
    }
    for len in [densities.len(), deltas.len(), ts.len()] {
        if len != n {
            return Err(Error::Shape {
                expected: n,
                actual: len,
            });
        }
    }
    if let Some(bad) = densities.iter().find(|&&s| !(s >= 0.0)) {
        return Err(Error::invalid(format!("negative or NaN density {bad}")));
    }
    let mut weights = Vec::with_capacity(n);
    let mut color = [0.0; 3];
    let mut transmittance = 1.0;
    let mut opacity = 0.0;
    let mut depth = 0.0;
    for i in 0..n {
        let alpha = 1.0 - exp(-densities[i] * deltas[i]);
        let w = transmittance * alpha;
        for c in 0..3 {
            color[c] += w * colors[i][c];
        }
        opacity += w;
        depth += w * ts[i];
        weights.push(w);
        transmittance *= 1.0 - alpha;
    }
    Ok(Composite {
        color,
        depth: depth / opacity.max(DEPTH_EPS),
        opacity,
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub representation_space: ColorSpace,
    pub white_background: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            samples_per_ray: 32,
            stratified: false,
            representation_space: ColorSpace::TrueLog,
            white_background: true,
        }
    }
}

impl RenderConfig {
    pub fn background(&self) -> f64 {
        if self.white_background {
            1.0
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples_per_ray == 0 {
            return Err(Error::invalid("samples_per_ray must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelOutput {
    pub srgb: [f64; 3],
    /// Composited linear color including background.
    pub linear: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
}

fn empty_pixel(rcfg: &RenderConfig, ray: &Ray) -> PixelOutput {
    let bg = rcfg.background();
    PixelOutput {
        srgb: [bg; 3],
        linear: [bg; 3],
        depth: ray.far,
        opacity: 0.0,
    }
}

fn finish(rcfg: &RenderConfig, comp_color: [f64; 3], opacity: f64, depth: f64) -> PixelOutput {
    let bg = rcfg.background();
    let linear: [f64; 3] = core::array::from_fn(|c| comp_color[c] + (1.0 - opacity) * bg);
    PixelOutput {
        srgb: linear.map(|v| ColorSpace::SrgbGamma.encode(v)),
        linear,
        depth,
        opacity,
    }
}

/// Renders one ray through any field. Sampling is restricted to the part of
/// the ray inside the field's bounds; a ray that misses them shows background.
pub fn render_ray<F: RadianceField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    ray: &Ray,
    rcfg: &RenderConfig,
    rng: &mut R,
) -> Result<PixelOutput> {
    rcfg.validate()?;
    let space = rcfg.representation_space;
    let Some(clipped) = ray.clipped(&field.bounds()) else {
        return Ok(empty_pixel(rcfg, ray));
    };
    let samples = sample_along_ray(&clipped, rcfg.samples_per_ray, rcfg.stratified, rng);
    let mut colors = Vec::with_capacity(samples.len());
    let mut densities = Vec::with_capacity(samples.len());
    for s in &samples {
        let FieldOutput { color, density } = field.query(clipped.at(s.t), ray.direction)?;
        colors.push(color.map(|v| space.decode(v)));
        densities.push(density);
    }
    let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let comp = composite(&colors, &densities, &deltas, &ts)?;
    Ok(finish(rcfg, comp.color, comp.opacity, comp.depth))
}

/// sRGB color of one ray through a learned model (non-stratified rays need no RNG).
pub fn render_pixel(model: &RadianceModel, ray: &Ray, rcfg: &RenderConfig) -> Result<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(render_ray(model, ray, rcfg, &mut rng)?.srgb)
}

/// Forward state of one rendered ray, kept for [`render_backward`].
#[derive(Debug, Clone)]
pub struct PixelTape {
    tapes: Vec<FieldTape>,
    samples: Vec<RaySample>,
    rep: Vec<[f64; 3]>,
    linear: Vec<[f64; 3]>,
    sigma: Vec<f64>,
    weights: Vec<f64>,
    trans_after: Vec<f64>,
    used: usize,
    out: Option<PixelOutput>,
    space: ColorSpace,
    background: f64,
}

impl PixelTape {
    pub fn new() -> Self {
        PixelTape {
            tapes: Vec::new(),
            samples: Vec::new(),
            rep: Vec::new(),
            linear: Vec::new(),
            sigma: Vec::new(),
            weights: Vec::new(),
            trans_after: Vec::new(),
            used: 0,
            out: None,
            space: ColorSpace::Linear,
            background: 0.0,
        }
    }
}

impl Default for PixelTape {
    fn default() -> Self {
        Self::new()
    }
}

/// Forward render of one ray that records everything the backward pass needs.
pub fn render_forward<R: Rng + ?Sized>(
    model: &RadianceModel,
    ray: &Ray,
    rcfg: &RenderConfig,
    rng: &mut R,
    tape: &mut PixelTape,
) -> Result<PixelOutput> {
    rcfg.validate()?;
    tape.space = rcfg.representation_space;
    tape.background = rcfg.background();
    tape.used = 0;
    tape.out = None;
    let Some(clipped) = ray.clipped(&model.config.bounds) else {
        let out = empty_pixel(rcfg, ray);
        tape.out = Some(out);
        return Ok(out);
    };
    fill_samples(&clipped, rcfg.samples_per_ray, rcfg.stratified, rng, &mut tape.samples);
    let n = tape.samples.len();
    while tape.tapes.len() < n {
        tape.tapes.push(model.new_tape());
    }
    for v in [&mut tape.rep, &mut tape.linear] {
        v.resize(n, [0.0; 3]);
    }
    for v in [&mut tape.sigma, &mut tape.weights, &mut tape.trans_after] {
        v.resize(n, 0.0);
    }
    let space = rcfg.representation_space;
    let mut color = [0.0; 3];
    let mut transmittance = 1.0;
    let mut opacity = 0.0;
    let mut depth = 0.0;
    for i in 0..n {
        let s = tape.samples[i];
        let out = model.eval_with_tape(clipped.at(s.t), ray.direction, &mut tape.tapes[i])?;
        let lin = out.color.map(|v| space.decode(v));
        let alpha = 1.0 - exp(-out.density * s.delta);
        let w = transmittance * alpha;
        for c in 0..3 {
            color[c] += w * lin[c];
        }
        opacity += w;
        depth += w * s.t;
        transmittance *= 1.0 - alpha;
        tape.rep[i] = out.color;
        tape.linear[i] = lin;
        tape.sigma[i] = out.density;
        tape.weights[i] = w;
        tape.trans_after[i] = transmittance;
    }
    tape.used = n;
    let out = finish(rcfg, color, opacity, depth / opacity.max(DEPTH_EPS));
    tape.out = Some(out);
    Ok(out)
}

/// Accumulates the parameter gradient of `d_srgb . srgb` for the ray recorded
/// in `tape`.
pub fn render_backward(
    model: &RadianceModel,
    tape: &mut PixelTape,
    d_srgb: [f64; 3],
    grad: &mut [f64],
) -> Result<()> {
    let out = tape
        .out
        .ok_or_else(|| Error::invalid("render_backward called without a forward pass"))?;
    let n = tape.used;
    if n == 0 {
        return Ok(());
    }
    // sRGB encode of the composited linear pixel.
    let d_lin: [f64; 3] = core::array::from_fn(|c| {
        let x = out.linear[c];
        if x > 1.0 {
            0.0
        } else {
            d_srgb[c] * ColorSpace::SrgbGamma.encode_derivative(x.max(SRGB_GRAD_FLOOR))
        }
    });
    let bg = tape.background;
    // Suffix sums S_{i+1} = sum_{j>i} w_j (c_j - bg).
    let mut suffix = [0.0; 3];
    for i in (0..n).rev() {
        let w = tape.weights[i];
        let e: [f64; 3] = core::array::from_fn(|c| tape.linear[i][c] - bg);
        let delta = tape.samples[i].delta;
        let mut d_sigma = 0.0;
        for c in 0..3 {
            d_sigma += d_lin[c] * delta * (tape.trans_after[i] * e[c] - suffix[c]);
        }
        let d_rep: [f64; 3] = core::array::from_fn(|c| {
            d_lin[c] * w * tape.space.decode_derivative(tape.rep[i][c])
        });
        model.backward_into(&mut tape.tapes[i], d_rep, d_sigma, grad)?;
        for c in 0..3 {
            suffix[c] += w * e[c];
        }
    }
    Ok(())
}

/// Row-major RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; 3] {
        self.pixels[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: [f64; 3]) {
        self.pixels[j * self.width + i] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(&f)).collect(),
        }
    }
}

/// Row-major scalar map (depth, opacity).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Per-ray RNG stream keyed by pixel index, so any evaluation order yields
/// the same samples.
pub fn pixel_rng(seed: u64, pixel_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel_index as u64);
    rng
}

/// Renders every pixel of `cam`: sRGB image and depth map. The depth map is
/// the expected termination distance, with light that passes through the
/// whole ray terminating at the far plane.
pub fn render_image<F: RadianceField + ?Sized>(
    field: &F,
    cam: &Camera,
    rcfg: &RenderConfig,
    seed: u64,
) -> Result<(Image, ScalarMap)> {
    cam.validate()?;
    let mut img = Image::new(cam.width, cam.height);
    let mut depth = ScalarMap {
        width: cam.width,
        height: cam.height,
        values: vec![0.0; cam.width * cam.height],
    };
    for j in 0..cam.height {
        for i in 0..cam.width {
            let idx = j * cam.width + i;
            let ray = camera_ray(cam, i, j)?;
            let mut rng = pixel_rng(seed, idx);
            let px = render_ray(field, &ray, rcfg, &mut rng)?;
            img.pixels[idx] = px.srgb;
            depth.values[idx] = px.opacity * px.depth + (1.0 - px.opacity) * ray.far;
        }
    }
    Ok((img, depth))
}

/// Depth map only.
pub fn render_depth<F: RadianceField + ?Sized>(
    field: &F,
    cam: &Camera,
    rcfg: &RenderConfig,
    seed: u64,
) -> Result<ScalarMap> {
    Ok(render_image(field, cam, rcfg, seed)?.1)
}

/// A BIDR scene exposed as a field that emits exact `space` encodings of its
/// linear radiance.
#[derive(Debug, Clone)]
pub struct SceneField<'a> {
    pub scene: &'a Scene,
    pub space: ColorSpace,
}

impl RadianceField for SceneField<'_> {
    fn representation_space(&self) -> ColorSpace {
        self.space
    }

    fn bounds(&self) -> Aabb {
        self.scene.bounds
    }

    fn query(&self, p: Vec3, dir: Vec3) -> Result<FieldOutput> {
        let (rgb, density) = self.scene.radiance(p, dir);
        Ok(FieldOutput {
            color: rgb.map(|v| self.space.encode(v)),
            density,
        })
    }
}

/// Exact surface-hit render of a scene: linear color (background blended) and depth.
pub fn trace_scene(scene: &Scene, ray: &Ray, white_background: bool) -> ([f64; 3], f64) {
    match scene.trace(ray.origin, ray.direction, ray.near, ray.far) {
        Some((rgb, t)) => (rgb, t),
        None => {
            let bg = if white_background { 1.0 } else { 0.0 };
            ([bg; 3], ray.far)
        }
    }
}

/// Analytic linear-RGB render of a scene from a camera.
pub fn trace_image(scene: &Scene, cam: &Camera, white_background: bool) -> Result<(Image, ScalarMap)> {
    cam.validate()?;
    let mut img = Image::new(cam.width, cam.height);
    let mut depth = ScalarMap {
        width: cam.width,
        height: cam.height,
        values: vec![0.0; cam.width * cam.height],
    };
    for j in 0..cam.height {
        for i in 0..cam.width {
            let ray = camera_ray(cam, i, j)?;
            let (rgb, t) = trace_scene(scene, &ray, white_background);
            img.set(i, j, rgb);
            depth.values[j * cam.width + i] = t;
        }
    }
    Ok((img, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{init_model, ModelConfig};

    fn cam(w: usize, h: usize, focal: f64) -> Camera {
        Camera {
            width: w,
            height: h,
            focal,
            pose: Pose::IDENTITY,
            near: 0.5,
            far: 6.0,
        }
    }

    #[test]
    fn center_ray_looks_down_minus_z() {
        let c = cam(5, 5, 10.0);
        let r = camera_ray(&c, 2, 2).unwrap();
        assert!((r.direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        assert!(camera_ray(&c, 5, 0).is_err());
    }

    #[test]
    fn adjacent_pixels_differ_by_one_over_focal() {
        let c = cam(101, 101, 200.0);
        let a = camera_ray(&c, 50, 50).unwrap().direction;
        let b = camera_ray(&c, 51, 50).unwrap().direction;
        let angle = libm::acos(a.dot(b).min(1.0));
        assert!((angle - 1.0 / 200.0).abs() < 1e-6, "{angle}");
    }

    #[test]
    fn translation_moves_origin_only() {
        let mut c = cam(5, 5, 10.0);
        let base = camera_ray(&c, 1, 3).unwrap();
        c.pose.translation = Vec3::new(1.0, -2.0, 3.0);
        let moved = camera_ray(&c, 1, 3).unwrap();
        assert_eq!(moved.direction, base.direction);
        assert_eq!(moved.origin, Vec3::new(1.0, -2.0, 3.0));
    }

    #[test]
    fn sample_layouts() {
        let ray = Ray {
            origin: Vec3::ZERO,
            direction: Vec3::new(0.0, 0.0, -1.0),
            near: 1.0,
            far: 3.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = sample_along_ray(&ray, 1, false, &mut rng);
        assert_eq!(one, alloc::vec![RaySample { t: 2.0, delta: 2.0 }]);
        let four = sample_along_ray(&ray, 4, false, &mut rng);
        let ts: Vec<f64> = four.iter().map(|s| s.t).collect();
        assert_eq!(ts, alloc::vec![1.25, 1.75, 2.25, 2.75]);
        assert!((four.iter().map(|s| s.delta).sum::<f64>() - 2.0).abs() < 1e-15);

        let a = sample_along_ray(&ray, 16, true, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_along_ray(&ray, 16, true, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[0].t < w[1].t);
        }
        assert!(a.iter().all(|s| s.t >= 1.0 && s.t <= 3.0));
    }

    #[test]
    fn composite_rejects_bad_input() {
        assert!(composite(&[[0.0; 3]], &[-1.0], &[1.0], &[1.0]).is_err());
        assert!(composite(&[[0.0; 3]; 2], &[1.0], &[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(composite(&[], &[], &[], &[]).is_err());
    }

    #[test]
    fn empty_model_renders_background() {
        let mut model = init_model(&ModelConfig::default()).unwrap();
        // Drive every density to ~0 through the density bias.
        let b = model.layout().density_head().end - 1;
        model.params[b] = -60.0;
        let rcfg = RenderConfig {
            white_background: false,
            representation_space: model.config.representation_space,
            samples_per_ray: 8,
            ..RenderConfig::default()
        };
        let mut c = cam(4, 4, 4.0);
        c.pose.translation = Vec3::new(0.0, 0.0, 3.0);
        let (img, depth) = render_image(&model, &c, &rcfg, 0).unwrap();
        assert!(img.pixels.iter().all(|p| p.iter().all(|&v| v < 1e-6)));
        assert!(depth.values.iter().all(|&d| (d - c.far).abs() < 1e-6));
    }
}
