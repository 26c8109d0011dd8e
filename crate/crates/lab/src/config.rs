//! `key=value` text used by recipes, metadata, run records and checkpoints.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Floats are written in shortest round-trip form, so write-then-read is exact.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use radlog_core::bidr::{SceneRecipe, ShadowKind, ShapeKind};
use radlog_core::colorspace::ColorSpace;
use radlog_core::field::{GridConfig, ModelConfig};
use radlog_core::math::{Aabb, Vec3};
use radlog_core::train::TrainConfig;

use crate::{LabError, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    source: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(LabError::Parse {
                    path: source.to_path_buf(),
                    line: idx + 1,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            let key = k.trim().to_string();
            if entries.iter().any(|(e, _, _)| *e == key) {
                return Err(LabError::Parse {
                    path: source.to_path_buf(),
                    line: idx + 1,
                    message: format!("duplicate key {key:?}"),
                });
            }
            entries.push((key, v.trim().to_string(), idx + 1));
        }
        Ok(KeyValues {
            source: source.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&crate::fsutil::read_to_string(path)?, path)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.iter().find(|(k, _, _)| k == key).map_or(0, |e| e.2)
    }

    fn error(&self, key: &str, message: String) -> LabError {
        LabError::Parse {
            path: self.source.clone(),
            line: self.line_of(key),
            message,
        }
    }

    /// Parses `key` with `parse`, reporting failures against its line.
    pub fn parse_with<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse(v)
                .map(Some)
                .ok_or_else(|| self.error(key, format!("invalid value {v:?} for {key}"))),
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.parse_with(key, |v| v.parse().ok())
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?.ok_or_else(|| LabError::Parse {
            path: self.source.clone(),
            line: 0,
            message: format!("missing key {key:?}"),
        })
    }

    /// Errors on any key outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _, _)| !known.contains(&k.as_str())) {
            Some((k, _, _)) => Err(self.error(k, format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

pub fn format_kv(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

fn kv(k: &str, v: impl Display) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn fmt_triple(v: [f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

pub fn parse_triple(s: &str) -> Option<[f64; 3]> {
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    <[f64; 3]>::try_from(parts).ok()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

pub fn shape_name(s: ShapeKind) -> &'static str {
    match s {
        ShapeKind::Sphere => "sphere",
        ShapeKind::Box => "box",
        ShapeKind::Mixed => "mixed",
    }
}

pub fn shadow_name(s: ShadowKind) -> &'static str {
    match s {
        ShadowKind::Constant => "constant",
        ShadowKind::HalfSpace => "halfspace",
        ShadowKind::Ramp => "ramp",
    }
}

/// Named recipes: `bright` is the default recipe, `dark` scales both
/// illuminants by 0.05.
pub fn recipe_preset(name: &str) -> Option<SceneRecipe> {
    match name {
        "bright" => Some(SceneRecipe::default()),
        "dark" => Some(SceneRecipe {
            illumination_scale: 0.05,
            ..SceneRecipe::default()
        }),
        _ => None,
    }
}

const RECIPE_KEYS: &[&str] = &[
    "primitive_count",
    "shape",
    "size_min",
    "size_max",
    "reflectance_min",
    "reflectance_max",
    "ambient",
    "direct",
    "illumination_scale",
    "shadow",
    "shadow_gamma",
    "shadow_normal",
    "shadow_start",
    "shadow_end",
    "half_extent",
    "floor_thickness",
    "opaque_density",
    "allow_overlap",
];

pub fn recipe_to_kv(r: &SceneRecipe) -> Vec<(String, String)> {
    let n = r.shadow_normal;
    vec![
        kv("primitive_count", r.primitive_count),
        kv("shape", shape_name(r.shape)),
        kv("size_min", r.size_range.0),
        kv("size_max", r.size_range.1),
        kv("reflectance_min", r.reflectance_range.0),
        kv("reflectance_max", r.reflectance_range.1),
        kv("ambient", fmt_triple(r.ambient)),
        kv("direct", fmt_triple(r.direct)),
        kv("illumination_scale", r.illumination_scale),
        kv("shadow", shadow_name(r.shadow)),
        kv("shadow_gamma", r.shadow_gamma),
        kv("shadow_normal", fmt_triple([n.x, n.y, n.z])),
        kv("shadow_start", r.shadow_start),
        kv("shadow_end", r.shadow_end),
        kv("half_extent", r.half_extent),
        kv("floor_thickness", r.floor_thickness),
        kv("opaque_density", r.opaque_density),
        kv("allow_overlap", r.allow_overlap),
    ]
}

/// Recipe from `kv`, starting at the default recipe; unknown keys are errors.
pub fn recipe_from_kv(kv: &KeyValues) -> Result<SceneRecipe> {
    kv.reject_unknown(RECIPE_KEYS)?;
    let mut r = SceneRecipe::default();
    if let Some(v) = kv.parsed("primitive_count")? {
        r.primitive_count = v;
    }
    if let Some(v) = kv.parse_with("shape", |s| match s {
        "sphere" => Some(ShapeKind::Sphere),
        "box" => Some(ShapeKind::Box),
        "mixed" => Some(ShapeKind::Mixed),
        _ => None,
    })? {
        r.shape = v;
    }
    if let Some(v) = kv.parsed("size_min")? {
        r.size_range.0 = v;
    }
    if let Some(v) = kv.parsed("size_max")? {
        r.size_range.1 = v;
    }
    if let Some(v) = kv.parsed("reflectance_min")? {
        r.reflectance_range.0 = v;
    }
    if let Some(v) = kv.parsed("reflectance_max")? {
        r.reflectance_range.1 = v;
    }
    if let Some(v) = kv.parse_with("ambient", parse_triple)? {
        r.ambient = v;
    }
    if let Some(v) = kv.parse_with("direct", parse_triple)? {
        r.direct = v;
    }
    if let Some(v) = kv.parsed("illumination_scale")? {
        r.illumination_scale = v;
    }
    if let Some(v) = kv.parse_with("shadow", |s| match s {
        "constant" => Some(ShadowKind::Constant),
        "halfspace" => Some(ShadowKind::HalfSpace),
        "ramp" => Some(ShadowKind::Ramp),
        _ => None,
    })? {
        r.shadow = v;
    }
    if let Some(v) = kv.parsed("shadow_gamma")? {
        r.shadow_gamma = v;
    }
    if let Some(v) = kv.parse_with("shadow_normal", parse_triple)? {
        r.shadow_normal = Vec3::new(v[0], v[1], v[2]);
    }
    if let Some(v) = kv.parsed("shadow_start")? {
        r.shadow_start = v;
    }
    if let Some(v) = kv.parsed("shadow_end")? {
        r.shadow_end = v;
    }
    if let Some(v) = kv.parsed("half_extent")? {
        r.half_extent = v;
    }
    if let Some(v) = kv.parsed("floor_thickness")? {
        r.floor_thickness = v;
    }
    if let Some(v) = kv.parsed("opaque_density")? {
        r.opaque_density = v;
    }
    if let Some(v) = kv.parse_with("allow_overlap", parse_bool)? {
        r.allow_overlap = v;
    }
    Ok(r)
}

const MODEL_KEYS: &[&str] = &[
    "mlp_width",
    "mlp_depth",
    "pe_frequencies",
    "grid_resolution",
    "grid_features",
    "grid_budget",
    "representation_space",
    "view_dependent",
    "bounds_min",
    "bounds_max",
    "model_seed",
];

pub fn model_to_kv(m: &ModelConfig) -> Vec<(String, String)> {
    let (res, fd, budget) = m
        .grid
        .map_or((0, 0, 0), |g| (g.resolution, g.feature_dim, g.budget));
    let b = m.bounds;
    vec![
        kv("mlp_width", m.mlp_width),
        kv("mlp_depth", m.mlp_depth),
        kv("pe_frequencies", m.pe_frequencies),
        kv("grid_resolution", res),
        kv("grid_features", fd),
        kv("grid_budget", budget),
        kv("representation_space", m.representation_space),
        kv("view_dependent", m.view_dependent),
        kv("bounds_min", fmt_triple([b.min.x, b.min.y, b.min.z])),
        kv("bounds_max", fmt_triple([b.max.x, b.max.y, b.max.z])),
        kv("model_seed", m.seed),
    ]
}

/// Applies the model keys present in `kv` on top of `base`. A grid
/// resolution of 0 removes the grid; a budget alone sizes it with
/// [`GridConfig::from_budget`].
pub fn apply_model_kv(kv: &KeyValues, base: &ModelConfig) -> Result<ModelConfig> {
    let mut m = base.clone();
    if let Some(v) = kv.parsed("mlp_width")? {
        m.mlp_width = v;
    }
    if let Some(v) = kv.parsed("mlp_depth")? {
        m.mlp_depth = v;
    }
    if let Some(v) = kv.parsed("pe_frequencies")? {
        m.pe_frequencies = v;
    }
    let res: Option<usize> = kv.parsed("grid_resolution")?;
    let fd: Option<usize> = kv.parsed("grid_features")?;
    let budget: Option<usize> = kv.parsed("grid_budget")?;
    match (res, budget) {
        (Some(0), _) => m.grid = None,
        (Some(r), b) => {
            let fd = fd.or(m.grid.map(|g| g.feature_dim)).unwrap_or(4);
            m.grid = Some(GridConfig {
                resolution: r,
                feature_dim: fd,
                budget: b.unwrap_or(r * r * r * fd),
            });
        }
        (None, Some(b)) => {
            let fd = fd.or(m.grid.map(|g| g.feature_dim)).unwrap_or(4);
            m.grid = Some(GridConfig::from_budget(b, fd)?);
        }
        (None, None) => {}
    }
    if let Some(v) = kv.parsed::<ColorSpace>("representation_space")? {
        m.representation_space = v;
    }
    if let Some(v) = kv.parse_with("view_dependent", parse_bool)? {
        m.view_dependent = v;
    }
    let lo = kv.parse_with("bounds_min", parse_triple)?;
    let hi = kv.parse_with("bounds_max", parse_triple)?;
    if let (Some(lo), Some(hi)) = (lo, hi) {
        m.bounds = Aabb {
            min: Vec3::new(lo[0], lo[1], lo[2]),
            max: Vec3::new(hi[0], hi[1], hi[2]),
        };
    } else if lo.is_some() || hi.is_some() {
        return Err(LabError::invalid("bounds_min and bounds_max must be given together"));
    }
    if let Some(v) = kv.parsed("model_seed")? {
        m.seed = v;
    }
    m.validate()?;
    Ok(m)
}

pub fn model_from_kv(kv: &KeyValues) -> Result<ModelConfig> {
    kv.reject_unknown(MODEL_KEYS)?;
    apply_model_kv(kv, &ModelConfig::default())
}

const TRAIN_KEYS: &[&str] = &[
    "iterations",
    "batch_rays",
    "lr_start",
    "lr_end",
    "charbonnier_eps",
    "tv_weight",
    "seed",
    "eval_every",
    "samples_per_ray",
    "stratified",
    "white_background",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
];

pub fn train_to_kv(t: &TrainConfig) -> Vec<(String, String)> {
    vec![
        kv("iterations", t.iterations),
        kv("batch_rays", t.batch_rays),
        kv("lr_start", t.lr_start),
        kv("lr_end", t.lr_end),
        kv("charbonnier_eps", t.charbonnier_eps),
        kv("tv_weight", t.tv_weight),
        kv("seed", t.seed),
        kv("eval_every", t.eval_every),
        kv("samples_per_ray", t.samples_per_ray),
        kv("stratified", t.stratified),
        kv("white_background", t.white_background),
        kv("adam_beta1", t.adam_beta1),
        kv("adam_beta2", t.adam_beta2),
        kv("adam_eps", t.adam_eps),
    ]
}

pub fn apply_train_kv(kv: &KeyValues, base: &TrainConfig) -> Result<TrainConfig> {
    let mut t = *base;
    macro_rules! field {
        ($($name:ident),*) => {$(
            if let Some(v) = kv.parsed(stringify!($name))? {
                t.$name = v;
            }
        )*};
    }
    field!(iterations, batch_rays, lr_start, lr_end, charbonnier_eps, tv_weight, seed, eval_every, samples_per_ray);
    field!(adam_beta1, adam_beta2, adam_eps);
    if let Some(v) = kv.parse_with("stratified", parse_bool)? {
        t.stratified = v;
    }
    if let Some(v) = kv.parse_with("white_background", parse_bool)? {
        t.white_background = v;
    }
    t.validate()?;
    Ok(t)
}

pub fn train_from_kv(kv: &KeyValues, base: &TrainConfig) -> Result<TrainConfig> {
    kv.reject_unknown(TRAIN_KEYS)?;
    apply_train_kv(kv, base)
}

/// Keys accepted in a combined model + training config file.
pub fn run_config_keys() -> Vec<&'static str> {
    MODEL_KEYS.iter().chain(TRAIN_KEYS).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> KeyValues {
        KeyValues::parse(text, Path::new("t.txt")).unwrap()
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = KeyValues::parse("# c\na=1\nnot a pair\n", Path::new("x.txt")).unwrap_err();
        assert!(matches!(err, LabError::Parse { line: 3, .. }), "{err}");
        let dup = KeyValues::parse("a=1\n\na=2\n", Path::new("x.txt")).unwrap_err();
        assert!(matches!(dup, LabError::Parse { line: 3, .. }));
        let bad = parse("a=1\nprimitive_count=x\n");
        assert!(matches!(
            recipe_from_kv(&bad).unwrap_err(),
            LabError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn recipe_round_trips() {
        let mut r = recipe_preset("dark").unwrap();
        r.shape = ShapeKind::Mixed;
        r.shadow = ShadowKind::HalfSpace;
        r.ambient = [0.1, 0.2, 0.30000000000000004];
        let text = format_kv(&recipe_to_kv(&r));
        assert_eq!(recipe_from_kv(&parse(&text)).unwrap(), r);
        assert!(recipe_from_kv(&parse("colour=red")).is_err());
    }

    #[test]
    fn model_and_train_round_trip() {
        let m = ModelConfig {
            mlp_width: 48,
            representation_space: ColorSpace::LOG01,
            view_dependent: true,
            seed: 9,
            ..ModelConfig::default()
        };
        assert_eq!(model_from_kv(&parse(&format_kv(&model_to_kv(&m)))).unwrap(), m);
        let no_grid = ModelConfig { grid: None, ..m };
        assert_eq!(model_from_kv(&parse(&format_kv(&model_to_kv(&no_grid)))).unwrap(), no_grid);

        let t = TrainConfig {
            iterations: 77,
            lr_start: 0.02,
            stratified: false,
            ..TrainConfig::default()
        };
        let text = format_kv(&train_to_kv(&t));
        assert_eq!(train_from_kv(&parse(&text), &TrainConfig::default()).unwrap(), t);
    }

    #[test]
    fn grid_budget_key_sizes_grid() {
        let m = model_from_kv(&parse("grid_budget=2048")).unwrap();
        assert_eq!(m.grid.unwrap().resolution, 8);
        assert!(model_from_kv(&parse("grid_resolution=0")).unwrap().grid.is_none());
    }
}
