//! Optimization loop: Charbonnier loss on sRGB pixels, total variation on the
//! feature grid, Adam with a geometrically decaying learning rate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{init_model, ModelConfig, RadianceModel};
use crate::math::{powf, sqrt};
use crate::metrics::psnr_from_mse;
use crate::render::{camera_ray, render_backward, render_forward, render_ray, Camera, Image, PixelTape, RenderConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Optimizer steps.
    pub iterations: usize,
    pub batch_rays: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub charbonnier_eps: f64,
    pub tv_weight: f64,
    pub seed: u64,
    /// Held-out PSNR is recorded every `eval_every` steps and after the last.
    pub eval_every: usize,
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub white_background: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch_rays: 128,
            lr_start: 0.01,
            lr_end: 0.001,
            charbonnier_eps: 1e-3,
            tv_weight: 0.01,
            seed: 0,
            eval_every: 500,
            samples_per_ray: 32,
            stratified: true,
            white_background: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_rays == 0 || self.samples_per_ray == 0 {
            return Err(Error::invalid("iterations, batch_rays and samples_per_ray must be >= 1"));
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return Err(Error::invalid("learning rates need 0 < lr_end <= lr_start"));
        }
        if !(self.charbonnier_eps > 0.0) || !(self.tv_weight >= 0.0) {
            return Err(Error::invalid("need charbonnier_eps > 0 and tv_weight >= 0"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be >= 1"));
        }
        Ok(())
    }

    pub fn render_config(&self, model: &ModelConfig) -> RenderConfig {
        RenderConfig {
            samples_per_ray: self.samples_per_ray,
            stratified: self.stratified,
            representation_space: model.representation_space,
            white_background: self.white_background,
        }
    }

    fn eval_render_config(&self, model: &ModelConfig) -> RenderConfig {
        RenderConfig {
            stratified: false,
            ..self.render_config(model)
        }
    }
}

/// Mean over channels of `sqrt(d^2 + eps^2)`.
pub fn charbonnier(pred: [f64; 3], gt: [f64; 3], eps: f64) -> f64 {
    (0..3)
        .map(|c| {
            let d = pred[c] - gt[c];
            sqrt(d * d + eps * eps)
        })
        .sum::<f64>()
        / 3.0
}

/// Gradient of [`charbonnier`] with respect to `pred`.
pub fn charbonnier_grad(pred: [f64; 3], gt: [f64; 3], eps: f64) -> [f64; 3] {
    core::array::from_fn(|c| {
        let d = pred[c] - gt[c];
        d / (3.0 * sqrt(d * d + eps * eps))
    })
}

fn grid_pairs(res: usize, fd: usize) -> usize {
    3 * res * res * (res - 1) * fd
}

/// Mean squared difference between axis-adjacent grid entries; 0 without a grid.
pub fn tv_regularizer(model: &RadianceModel) -> f64 {
    let Some(grid) = model.config.grid else {
        return 0.0;
    };
    let (res, fd) = (grid.resolution, grid.feature_dim);
    let g = model.grid_features();
    let mut sum = 0.0;
    visit_grid_pairs(res, fd, |a, b| {
        let d = g[a] - g[b];
        sum += d * d;
    });
    sum / grid_pairs(res, fd) as f64
}

/// Adds `weight * d tv / d params` into `grad`.
pub fn tv_backward(model: &RadianceModel, weight: f64, grad: &mut [f64]) {
    let Some(grid) = model.config.grid else {
        return;
    };
    let (res, fd) = (grid.resolution, grid.feature_dim);
    let off = model.layout().grid_offset;
    let g = model.grid_features();
    let scale = 2.0 * weight / grid_pairs(res, fd) as f64;
    visit_grid_pairs(res, fd, |a, b| {
        let d = scale * (g[a] - g[b]);
        grad[off + a] += d;
        grad[off + b] -= d;
    });
}

fn visit_grid_pairs(res: usize, fd: usize, mut f: impl FnMut(usize, usize)) {
    let idx = |x: usize, y: usize, z: usize| ((z * res + y) * res + x) * fd;
    for z in 0..res {
        for y in 0..res {
            for x in 0..res {
                let here = idx(x, y, z);
                let neighbours = [
                    (x + 1 < res).then(|| idx(x + 1, y, z)),
                    (y + 1 < res).then(|| idx(x, y + 1, z)),
                    (z + 1 < res).then(|| idx(x, y, z + 1)),
                ];
                for there in neighbours.into_iter().flatten() {
                    for k in 0..fd {
                        f(here + k, there + k);
                    }
                }
            }
        }
    }
}

/// `lr_start * (lr_end / lr_start)^(step / iterations)`.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let frac = step.min(cfg.iterations) as f64 / cfg.iterations as f64;
    cfg.lr_start * powf(cfg.lr_end / cfg.lr_start, frac)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - powf(self.beta1, self.t as f64);
        let bc2 = 1.0 - powf(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (sqrt(vh) + self.eps);
        }
    }
}

/// A posed sRGB training image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    /// sRGB ground truth, `camera.width x camera.height`.
    pub image: Image,
}

/// Posed views with a train / held-out split (indices into `views`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub views: Vec<View>,
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

impl TrainingSet {
    /// Holds out every frame with `index % every == every - 1`. With a single
    /// view, that view serves as both training and evaluation view.
    pub fn with_holdout(views: Vec<View>, every: usize) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let every = every.max(1);
        let (mut train, mut held_out) = (Vec::new(), Vec::new());
        for i in 0..views.len() {
            if every > 1 && i % every == every - 1 {
                held_out.push(i);
            } else {
                train.push(i);
            }
        }
        if held_out.is_empty() {
            held_out = train.clone();
        }
        let set = TrainingSet {
            views,
            train,
            held_out,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() || self.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for &i in self.train.iter().chain(&self.held_out) {
            let v = self
                .views
                .get(i)
                .ok_or_else(|| Error::invalid(format!("split index {i} out of range")))?;
            v.camera.validate()?;
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(Error::invalid(format!("view {i}: image size differs from camera")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRay {
    pub view: usize,
    pub pixel: (usize, usize),
    pub gt: [f64; 3],
}

/// `n` pixels drawn uniformly with replacement from all training pixels.
pub fn sample_batch<R: Rng + ?Sized>(data: &TrainingSet, n: usize, rng: &mut R) -> Result<Vec<BatchRay>> {
    let mut out = Vec::with_capacity(n);
    fill_batch(data, n, rng, &mut out)?;
    Ok(out)
}

fn fill_batch<R: Rng + ?Sized>(
    data: &TrainingSet,
    n: usize,
    rng: &mut R,
    out: &mut Vec<BatchRay>,
) -> Result<()> {
    out.clear();
    let sizes: Vec<usize> = data
        .train
        .iter()
        .map(|&v| data.views[v].image.pixels.len())
        .collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    for _ in 0..n {
        let mut k = rng.random_range(0..total);
        let mut slot = 0;
        while k >= sizes[slot] {
            k -= sizes[slot];
            slot += 1;
        }
        let view = data.train[slot];
        let img = &data.views[view].image;
        out.push(BatchRay {
            view,
            pixel: (k % img.width, k / img.width),
            gt: img.pixels[k],
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub psnr: f64,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub seed: u64,
    pub evals: Vec<EvalRecord>,
    pub diverged: bool,
    /// Step at which a non-finite loss or gradient aborted training.
    pub diverged_at: Option<usize>,
    /// Held-out PSNR of the returned model.
    pub final_psnr: f64,
    pub wall_ms: f64,
}

/// Renders every held-out view and returns the pooled PSNR.
pub fn evaluate(model: &RadianceModel, data: &TrainingSet, rcfg: &RenderConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for &v in &data.held_out {
        let view = &data.views[v];
        let cam = &view.camera;
        for j in 0..cam.height {
            for i in 0..cam.width {
                let px = render_ray(model, &camera_ray(cam, i, j)?, rcfg, &mut rng)?.srgb;
                let gt = view.image.get(i, j);
                for c in 0..3 {
                    sum += (px[c] - gt[c]) * (px[c] - gt[c]);
                }
                count += 3;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(psnr_from_mse(sum / count as f64))
}

/// Train a fresh model. See [`train_with_clock`].
pub fn train(data: &TrainingSet, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<(RadianceModel, RunReport)> {
    train_with_clock(data, model_cfg, cfg, &|| 0.0)
}

/// One training run. `clock` returns elapsed milliseconds and is only used
/// for the `wall_ms` columns; pass a constant for reproducible reports.
///
/// A non-finite loss, gradient or field output stops training, restores the
/// last parameters that produced a finite loss and marks the report diverged.
pub fn train_with_clock(
    data: &TrainingSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    clock: &dyn Fn() -> f64,
) -> Result<(RadianceModel, RunReport)> {
    cfg.validate()?;
    data.validate()?;
    let start = clock();
    let mut model = init_model(model_cfg)?;
    let rcfg = cfg.render_config(model_cfg);
    let eval_cfg = cfg.eval_render_config(model_cfg);
    let mut adam = Adam::new(model.param_count(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut grad = vec![0.0; model.param_count()];
    let mut last_good = model.params.clone();
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(1);
    let mut tape = PixelTape::new();
    let mut batch = Vec::with_capacity(cfg.batch_rays);
    let mut report = RunReport {
        train: *cfg,
        model: model_cfg.clone(),
        seed: cfg.seed,
        evals: Vec::new(),
        diverged: false,
        diverged_at: None,
        final_psnr: f64::NAN,
        wall_ms: 0.0,
    };
    let inv_batch = 1.0 / cfg.batch_rays as f64;

    for step in 0..cfg.iterations {
        let lr = lr_schedule(step, cfg);
        grad.fill(0.0);
        fill_batch(data, cfg.batch_rays, &mut batch_rng, &mut batch)?;
        let mut loss = 0.0;
        let mut failed = false;
        for ray in &batch {
            let cam = &data.views[ray.view].camera;
            let r = camera_ray(cam, ray.pixel.0, ray.pixel.1)?;
            let out = match render_forward(&model, &r, &rcfg, &mut sample_rng, &mut tape) {
                Ok(o) => o,
                Err(Error::Numeric(_)) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            loss += inv_batch * charbonnier(out.srgb, ray.gt, cfg.charbonnier_eps);
            let d = charbonnier_grad(out.srgb, ray.gt, cfg.charbonnier_eps).map(|g| g * inv_batch);
            render_backward(&model, &mut tape, d, &mut grad)?;
        }
        if cfg.tv_weight > 0.0 {
            loss += cfg.tv_weight * tv_regularizer(&model);
            tv_backward(&model, cfg.tv_weight, &mut grad);
        }
        if failed || !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            model.params.copy_from_slice(&last_good);
            report.diverged = true;
            report.diverged_at = Some(step);
            let psnr = evaluate(&model, data, &eval_cfg)?;
            report.evals.push(EvalRecord {
                iteration: step,
                psnr,
                loss: f64::NAN,
                lr,
                wall_ms: clock() - start,
            });
            break;
        }
        last_good.copy_from_slice(&model.params);
        adam.step(&mut model.params, &grad, lr);

        let done = step + 1;
        if done % cfg.eval_every == 0 || done == cfg.iterations {
            let psnr = evaluate(&model, data, &eval_cfg)?;
            report.evals.push(EvalRecord {
                iteration: done,
                psnr,
                loss,
                lr,
                wall_ms: clock() - start,
            });
        }
    }
    report.final_psnr = report.evals.last().map_or(f64::NAN, |e| e.psnr);
    report.wall_ms = clock() - start;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridConfig;

    #[test]
    fn charbonnier_examples() {
        assert_eq!(charbonnier([0.3; 3], [0.3; 3], 1e-3), 1e-3);
        let l1 = charbonnier([1.0, 0.0, 1.0], [0.0, 1.0, 0.0], 1e-12);
        assert!((l1 - 1.0).abs() < 1e-12);
        let r = charbonnier([0.6; 3], [0.5; 3], 1e-3);
        assert!((r - 0.100_004_999_875_006_25).abs() < 1e-12);
    }

    #[test]
    fn charbonnier_grad_matches_fd() {
        let (p, g) = ([0.3, 0.7, 0.5], [0.31, 0.2, 0.5]);
        let d = charbonnier_grad(p, g, 1e-3);
        for c in 0..3 {
            let h = 1e-7;
            let (mut a, mut b) = (p, p);
            a[c] += h;
            b[c] -= h;
            let fd = (charbonnier(a, g, 1e-3) - charbonnier(b, g, 1e-3)) / (2.0 * h);
            assert!((fd - d[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn lr_examples() {
        let cfg = TrainConfig {
            iterations: 5000,
            ..TrainConfig::default()
        };
        assert_eq!(lr_schedule(0, &cfg), 0.01);
        assert!((lr_schedule(5000, &cfg) - 0.001).abs() < 1e-18);
        assert!((lr_schedule(2500, &cfg) - 0.003_162_277_660_168_379_3).abs() < 1e-15);
    }

    fn grid_model(res: usize, fd: usize) -> RadianceModel {
        let cfg = ModelConfig {
            grid: Some(GridConfig {
                resolution: res,
                feature_dim: fd,
                budget: res * res * res * fd,
            }),
            ..ModelConfig::default()
        };
        init_model(&cfg).unwrap()
    }

    #[test]
    fn tv_examples() {
        let mut m = grid_model(4, 2);
        let off = m.layout().grid_offset;
        for v in &mut m.params[off..] {
            *v = 0.7;
        }
        assert_eq!(tv_regularizer(&m), 0.0);

        // Unit step between x = 1 and x = 2 across the whole grid.
        let res = 4;
        for z in 0..res {
            for y in 0..res {
                for x in 0..res {
                    for f in 0..2 {
                        m.params[off + ((z * res + y) * res + x) * 2 + f] = if x >= 2 { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        // Brute force: enumerate every adjacent pair independently.
        let g = m.grid_features().to_vec();
        let at = |x: usize, y: usize, z: usize, f: usize| g[((z * res + y) * res + x) * 2 + f];
        let (mut sum, mut pairs) = (0.0, 0usize);
        for z in 0..res {
            for y in 0..res {
                for x in 0..res {
                    for f in 0..2 {
                        if x + 1 < res {
                            sum += (at(x, y, z, f) - at(x + 1, y, z, f)).powi(2);
                            pairs += 1;
                        }
                        if y + 1 < res {
                            sum += (at(x, y, z, f) - at(x, y + 1, z, f)).powi(2);
                            pairs += 1;
                        }
                        if z + 1 < res {
                            sum += (at(x, y, z, f) - at(x, y, z + 1, f)).powi(2);
                            pairs += 1;
                        }
                    }
                }
            }
        }
        let brute = sum / pairs as f64;
        assert!((tv_regularizer(&m) - brute).abs() < 1e-15);
        assert!((brute - 1.0 / (3.0 * (res - 1) as f64)).abs() < 1e-15);

        let no_grid = init_model(&ModelConfig {
            grid: None,
            ..ModelConfig::default()
        })
        .unwrap();
        assert_eq!(tv_regularizer(&no_grid), 0.0);
    }

    #[test]
    fn tv_gradient_matches_fd() {
        let m = grid_model(3, 2);
        let mut grad = vec![0.0; m.param_count()];
        tv_backward(&m, 0.5, &mut grad);
        let off = m.layout().grid_offset;
        for k in [off, off + 5, off + 17, m.param_count() - 1] {
            let h = 1e-6;
            let mut a = m.clone();
            a.params[k] += h;
            let mut b = m.clone();
            b.params[k] -= h;
            let fd = 0.5 * (tv_regularizer(&a) - tv_regularizer(&b)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut adam = Adam::new(1, 0.9, 0.999, 1e-8);
        let mut p = [3.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            adam.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
