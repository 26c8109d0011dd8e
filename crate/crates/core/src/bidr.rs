//! Synthetic scenes that follow the bi-illuminant body-reflection model
//! `I = R_B (A + gamma D)`.
//!
//! A [`Scene`] is a set of solid primitives with constant body reflectance,
//! one ambient/direct illuminant pair shared by the whole scene, and a shadow
//! field giving the fraction `gamma` of direct light reaching each point. The
//! scene doubles as an analytic radiance oracle for ground-truth renders.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{ln, sqrt, Aabb, Vec3};
use crate::{Error, Result};

pub type Rgb = [f64; 3];

/// Density assigned to the inside of every primitive, per world unit.
pub const DEFAULT_OPAQUE_DENSITY: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Linear RGB, every channel in `(0, 1]`.
    pub body_reflectance: Rgb,
}

impl Material {
    pub fn new(body_reflectance: Rgb) -> Result<Self> {
        if body_reflectance
            .iter()
            .any(|&c| !(c.is_finite() && c > 0.0 && c <= 1.0))
        {
            return Err(Error::invalid(format!(
                "body reflectance {body_reflectance:?} must lie in (0, 1]"
            )));
        }
        Ok(Material { body_reflectance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    pub ambient: Rgb,
    pub direct: Rgb,
}

impl Illumination {
    pub fn new(ambient: Rgb, direct: Rgb) -> Result<Self> {
        for c in 0..3 {
            let (a, d) = (ambient[c], direct[c]);
            if !(a.is_finite() && a > 0.0) || !(d.is_finite() && d >= 0.0) {
                return Err(Error::invalid(format!(
                    "need ambient > 0 and direct >= 0, got A={ambient:?} D={direct:?}"
                )));
            }
            if a + d > 1.0 + 1e-12 {
                return Err(Error::invalid(format!(
                    "A + D exceeds 1 in channel {c}: A={ambient:?} D={direct:?}"
                )));
            }
        }
        Ok(Illumination { ambient, direct })
    }

    /// Both illuminants multiplied by `s` (dims or brightens the scene).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Illumination::new(self.ambient.map(|v| v * s), self.direct.map(|v| v * s))
    }
}

/// `R_B (A + gamma D)` per channel.
pub fn body_reflection(m: &Material, illum: &Illumination, gamma: f64) -> Result<Rgb> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("shadow fraction {gamma} outside [0, 1]")));
    }
    Ok(reflect(m, illum, gamma))
}

#[inline]
fn reflect(m: &Material, illum: &Illumination, gamma: f64) -> Rgb {
    core::array::from_fn(|c| m.body_reflectance[c] * (illum.ambient[c] + gamma * illum.direct[c]))
}

/// `ln(A + gamma D) - ln(A)`: the shadow-to-lit offset in log space. It does
/// not depend on the material.
pub fn log_illumination_span(illum: &Illumination, gamma: f64) -> Rgb {
    core::array::from_fn(|c| {
        ln(illum.ambient[c] + gamma * illum.direct[c]) - ln(illum.ambient[c])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box(Aabb),
}

impl Shape {
    pub fn contains(&self, p: Vec3) -> bool {
        match self {
            Shape::Sphere { center, radius } => {
                let d = p - *center;
                d.dot(d) <= radius * radius
            }
            Shape::Box(b) => b.contains(p),
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match *self {
            Shape::Sphere { center, radius } => {
                Aabb::new(center - Vec3::splat(radius), center + Vec3::splat(radius))
            }
            Shape::Box(b) => b,
        }
    }

    /// Entry and exit distances along a unit-direction ray.
    pub fn ray_interval(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = sqrt(disc);
                Some((-b - s, -b + s))
            }
            Shape::Box(b) => b.ray_interval(origin, dir),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub material: Material,
}

/// Fraction of the direct illuminant reaching a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShadowField {
    Constant(f64),
    /// 1 where `normal . p >= offset`, else 0.
    HalfSpace { normal: Vec3, offset: f64 },
    /// 0 at `normal . p <= start`, 1 at `normal . p >= end`, linear between.
    Ramp { normal: Vec3, start: f64, end: f64 },
}

impl ShadowField {
    pub fn gamma(&self, p: Vec3) -> f64 {
        match *self {
            ShadowField::Constant(g) => g,
            ShadowField::HalfSpace { normal, offset } => {
                if normal.dot(p) >= offset {
                    1.0
                } else {
                    0.0
                }
            }
            ShadowField::Ramp { normal, start, end } => {
                ((normal.dot(p) - start) / (end - start)).clamp(0.0, 1.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ShadowField::Constant(g) if !(0.0..=1.0).contains(&g) => {
                Err(Error::invalid(format!("constant shadow fraction {g} outside [0, 1]")))
            }
            ShadowField::Ramp { start, end, .. } if !(end > start) => {
                Err(Error::invalid("shadow ramp needs end > start"))
            }
            ShadowField::HalfSpace { normal, .. } | ShadowField::Ramp { normal, .. }
                if !(normal.is_finite() && normal.norm() > 0.0) =>
            {
                Err(Error::invalid("shadow normal must be a non-zero vector"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub illumination: Illumination,
    pub shadow: ShadowField,
    pub bounds: Aabb,
    /// Density inside primitives; empty space has density 0.
    pub opaque_density: f64,
}

impl Scene {
    pub fn new(
        primitives: Vec<Primitive>,
        illumination: Illumination,
        shadow: ShadowField,
        bounds: Aabb,
        opaque_density: f64,
    ) -> Result<Self> {
        shadow.validate()?;
        if !(opaque_density.is_finite() && opaque_density > 0.0) {
            return Err(Error::invalid("opaque density must be positive"));
        }
        for (i, p) in primitives.iter().enumerate() {
            if !bounds.contains_box(&p.shape.bounding_box()) {
                return Err(Error::invalid(format!("primitive {i} leaves the scene bounds")));
            }
        }
        Ok(Scene {
            primitives,
            illumination,
            shadow,
            bounds,
            opaque_density,
        })
    }

    /// Linear color and density at `p`. The view direction is ignored: body
    /// reflection is Lambertian.
    pub fn radiance(&self, p: Vec3, _dir: Vec3) -> (Rgb, f64) {
        match self.primitives.iter().find(|prim| prim.shape.contains(p)) {
            Some(prim) => (
                reflect(&prim.material, &self.illumination, self.shadow.gamma(p)),
                self.opaque_density,
            ),
            None => ([0.0; 3], 0.0),
        }
    }

    /// Nearest surface hit along a unit ray with `t >= t_min`, as `(t, primitive index)`.
    pub fn first_hit(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some((t0, t1)) = prim.shape.ray_interval(origin, dir) {
                if t1 < t_min {
                    continue;
                }
                let t = t0.max(t_min);
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    /// Surface-hit render of one ray: `(linear color, depth)` or `None` for background.
    pub fn trace(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<(Rgb, f64)> {
        let (t, i) = self.first_hit(origin, dir, t_min)?;
        if t > t_max {
            return None;
        }
        let p = origin + dir * t;
        let prim = &self.primitives[i];
        Some((reflect(&prim.material, &self.illumination, self.shadow.gamma(p)), t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Sphere,
    Box,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowKind {
    Constant,
    HalfSpace,
    Ramp,
}

/// Parameters for [`generate_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecipe {
    pub primitive_count: usize,
    pub shape: ShapeKind,
    /// Sphere radius or box half-size range.
    pub size_range: (f64, f64),
    /// Per-channel body reflectance range.
    pub reflectance_range: (f64, f64),
    pub ambient: Rgb,
    pub direct: Rgb,
    /// Multiplies both illuminants.
    pub illumination_scale: f64,
    pub shadow: ShadowKind,
    /// Constant gamma for [`ShadowKind::Constant`].
    pub shadow_gamma: f64,
    pub shadow_normal: Vec3,
    /// Plane offset for the half-space; ramp runs over `[start, end]`.
    pub shadow_start: f64,
    pub shadow_end: f64,
    /// Scene bounds are the cube `[-h, h]^3`.
    pub half_extent: f64,
    /// Adds a floor slab of this thickness (0 disables it).
    pub floor_thickness: f64,
    pub opaque_density: f64,
    /// Whether primitives may intersect each other.
    pub allow_overlap: bool,
}

impl Default for SceneRecipe {
    fn default() -> Self {
        SceneRecipe {
            primitive_count: 5,
            shape: ShapeKind::Sphere,
            size_range: (0.15, 0.35),
            reflectance_range: (0.3, 0.9),
            ambient: [0.25, 0.25, 0.3],
            direct: [0.7, 0.7, 0.65],
            illumination_scale: 1.0,
            shadow: ShadowKind::Ramp,
            shadow_gamma: 1.0,
            shadow_normal: Vec3::new(1.0, 0.0, 0.0),
            shadow_start: -0.3,
            shadow_end: 0.3,
            half_extent: 1.0,
            floor_thickness: 0.2,
            opaque_density: DEFAULT_OPAQUE_DENSITY,
            allow_overlap: false,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Deterministic scene from `(recipe, seed)`.
///
/// Primitives are placed uniformly inside the bounds (above the floor slab if
/// present) by rejection sampling; a recipe whose primitives cannot be placed
/// is a [`Error::Generation`].
pub fn generate_scene(recipe: &SceneRecipe, seed: u64) -> Result<Scene> {
    let (smin, smax) = recipe.size_range;
    let (rmin, rmax) = recipe.reflectance_range;
    if !(smin > 0.0 && smax >= smin) {
        return Err(Error::invalid("size range must satisfy 0 < min <= max"));
    }
    if !(rmin > 0.0 && rmax >= rmin && rmax <= 1.0) {
        return Err(Error::invalid("reflectance range must satisfy 0 < min <= max <= 1"));
    }
    if !(recipe.half_extent > 0.0) {
        return Err(Error::invalid("half extent must be positive"));
    }
    let illumination =
        Illumination::new(recipe.ambient, recipe.direct)?.scaled(recipe.illumination_scale)?;
    let shadow = match recipe.shadow {
        ShadowKind::Constant => ShadowField::Constant(recipe.shadow_gamma),
        ShadowKind::HalfSpace => ShadowField::HalfSpace {
            normal: recipe.shadow_normal,
            offset: recipe.shadow_start,
        },
        ShadowKind::Ramp => ShadowField::Ramp {
            normal: recipe.shadow_normal,
            start: recipe.shadow_start,
            end: recipe.shadow_end,
        },
    };
    let bounds = Aabb::cube(recipe.half_extent);
    let h = recipe.half_extent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_material = |rng: &mut ChaCha8Rng| -> Result<Material> {
        Material::new(core::array::from_fn(|_| {
            if rmax > rmin {
                rng.random_range(rmin..=rmax)
            } else {
                rmin
            }
        }))
    };

    let mut primitives = Vec::new();
    let mut floor_top = -h;
    if recipe.floor_thickness > 0.0 {
        if recipe.floor_thickness >= 2.0 * h {
            return Err(Error::Generation("floor slab fills the whole scene".into()));
        }
        floor_top = -h + recipe.floor_thickness;
        let slab = Aabb::new(Vec3::new(-h, -h, -h), Vec3::new(h, floor_top, h));
        primitives.push(Primitive {
            shape: Shape::Box(slab),
            material: sample_material(&mut rng)?,
        });
    }

    let placed_start = primitives.len();
    for n in 0..recipe.primitive_count {
        let kind = match recipe.shape {
            ShapeKind::Sphere => ShapeKind::Sphere,
            ShapeKind::Box => ShapeKind::Box,
            ShapeKind::Mixed => {
                if rng.random_bool(0.5) {
                    ShapeKind::Sphere
                } else {
                    ShapeKind::Box
                }
            }
        };
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size = if smax > smin { rng.random_range(smin..=smax) } else { smin };
            let lo = Vec3::new(-h + size, floor_top + size, -h + size);
            let hi = Vec3::splat(h - size);
            if lo.x > hi.x || lo.y > hi.y {
                break;
            }
            let center = Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            );
            let shape = match kind {
                ShapeKind::Box => Shape::Box(Aabb::new(
                    center - Vec3::splat(size),
                    center + Vec3::splat(size),
                )),
                _ => Shape::Sphere {
                    center,
                    radius: size,
                },
            };
            let bb = shape.bounding_box();
            let clear = recipe.allow_overlap
                || primitives[placed_start..]
                    .iter()
                    .all(|p: &Primitive| !boxes_overlap(&bb, &p.shape.bounding_box()));
            if clear {
                placed = Some(shape);
                break;
            }
        }
        let shape = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place primitive {n} of {} inside the bounds",
                recipe.primitive_count
            ))
        })?;
        primitives.push(Primitive {
            shape,
            material: sample_material(&mut rng)?,
        });
    }
    Scene::new(primitives, illumination, shadow, bounds, recipe.opaque_density)
}

fn boxes_overlap(a: &Aabb, b: &Aabb) -> bool {
    a.min.x < b.max.x
        && b.min.x < a.max.x
        && a.min.y < b.max.y
        && b.min.y < a.max.y
        && a.min.z < b.max.z
        && b.min.z < a.max.z
}
