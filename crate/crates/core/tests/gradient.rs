//! Finite-difference checks of the analytic gradients through the full
//! render pipeline (decode, composite, sRGB encode, Charbonnier).

use radlog_core::colorspace::ColorSpace;
use radlog_core::field::{field_backward, field_eval, init_model, GridConfig, ModelConfig, RadianceModel};
use radlog_core::math::{Aabb, Pose, Vec3};
use radlog_core::render::{camera_ray, render_backward, render_forward, render_pixel, Camera, PixelTape, Ray, RenderConfig};
use radlog_core::train::{charbonnier, charbonnier_grad};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(space: ColorSpace, view_dependent: bool, seed: u64) -> RadianceModel {
    let cfg = ModelConfig {
        mlp_width: 8,
        mlp_depth: 2,
        pe_frequencies: 2,
        grid: Some(GridConfig {
            resolution: 3,
            feature_dim: 2,
            budget: 54,
        }),
        representation_space: space,
        view_dependent,
        bounds: Aabb::cube(1.0),
        seed,
    };
    init_model(&cfg).unwrap()
}

fn rays() -> Vec<Ray> {
    let cam = Camera {
        width: 4,
        height: 4,
        focal: 4.0,
        pose: Pose::look_at(Vec3::new(0.4, 0.8, 2.6), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0)),
        near: 0.5,
        far: 5.0,
    };
    [(0, 0), (1, 2), (2, 1), (3, 3)]
        .iter()
        .map(|&(i, j)| camera_ray(&cam, i, j).unwrap())
        .collect()
}

const GT: [[f64; 3]; 4] = [
    [0.2, 0.5, 0.9],
    [0.7, 0.1, 0.3],
    [0.45, 0.45, 0.6],
    [0.05, 0.8, 0.35],
];
const EPS: f64 = 1e-3;

fn loss(m: &RadianceModel, rcfg: &RenderConfig) -> f64 {
    rays()
        .iter()
        .zip(GT)
        .map(|(r, gt)| charbonnier(render_pixel(m, r, rcfg).unwrap(), gt, EPS))
        .sum()
}

fn analytic(m: &RadianceModel, rcfg: &RenderConfig) -> Vec<f64> {
    let mut grad = vec![0.0; m.param_count()];
    let mut tape = PixelTape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (r, gt) in rays().iter().zip(GT) {
        let out = render_forward(m, r, rcfg, &mut rng, &mut tape).unwrap();
        render_backward(m, &mut tape, charbonnier_grad(out.srgb, gt, EPS), &mut grad).unwrap();
    }
    grad
}

/// Fraction of parameters whose analytic and central-difference gradients
/// agree to 1e-3 relative error (gradients below 1e-8 in both compare as equal).
fn agreement(m: &RadianceModel, rcfg: &RenderConfig) -> f64 {
    let grad = analytic(m, rcfg);
    let h = 1e-6;
    let mut ok = 0;
    for k in 0..m.param_count() {
        let mut plus = m.clone();
        plus.params[k] += h;
        let mut minus = m.clone();
        minus.params[k] -= h;
        let fd = (loss(&plus, rcfg) - loss(&minus, rcfg)) / (2.0 * h);
        let scale = grad[k].abs().max(fd.abs());
        if scale < 1e-8 || (grad[k] - fd).abs() / scale < 1e-3 {
            ok += 1;
        }
    }
    ok as f64 / m.param_count() as f64
}

#[test]
fn render_gradient_matches_finite_differences_in_every_space() {
    let spaces = [
        ColorSpace::Linear,
        ColorSpace::SrgbGamma,
        ColorSpace::GpLog,
        ColorSpace::TrueLog,
        ColorSpace::LOG100,
        ColorSpace::LOG01,
    ];
    for space in spaces {
        for white in [true, false] {
            let m = model(space, false, 3);
            let rcfg = RenderConfig {
                samples_per_ray: 3,
                stratified: false,
                representation_space: space,
                white_background: white,
            };
            let frac = agreement(&m, &rcfg);
            assert!(frac >= 0.99, "{space} white={white}: only {frac:.4} of parameters agree");
        }
    }
}

#[test]
fn view_dependent_head_gradient() {
    let m = model(ColorSpace::TrueLog, true, 11);
    let rcfg = RenderConfig {
        samples_per_ray: 3,
        stratified: false,
        representation_space: ColorSpace::TrueLog,
        white_background: true,
    };
    assert!(agreement(&m, &rcfg) >= 0.99);
}

#[test]
fn field_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    use rand::Rng;
    for trial in 0..5 {
        let m = model(ColorSpace::GpLog, trial % 2 == 0, trial);
        let p = Vec3::new(
            rng.random_range(-0.9..0.9),
            rng.random_range(-0.9..0.9),
            rng.random_range(-0.9..0.9),
        );
        let dir = Vec3::new(0.3, -0.2, 0.9).normalized();
        let up_c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let up_d = rng.random_range(-1.0..1.0);
        let objective = |m: &RadianceModel| {
            let o = field_eval(m, p, dir).unwrap();
            o.color.iter().zip(up_c).map(|(c, u)| c * u).sum::<f64>() + o.density * up_d
        };
        let grad = field_backward(&m, p, dir, up_c, up_d).unwrap();
        let mut ok = 0;
        for k in 0..m.param_count() {
            let h = 1e-6;
            let mut a = m.clone();
            a.params[k] += h;
            let mut b = m.clone();
            b.params[k] -= h;
            let fd = (objective(&a) - objective(&b)) / (2.0 * h);
            let scale = grad[k].abs().max(fd.abs());
            if scale < 1e-8 || (grad[k] - fd).abs() / scale < 1e-3 {
                ok += 1;
            }
        }
        assert!(ok as f64 / m.param_count() as f64 >= 0.99);
    }
}
