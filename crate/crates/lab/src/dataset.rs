//! On-disk datasets: `frames/NNNN.png`, `poses.txt` and `meta.txt`.
//!
//! `meta.txt` holds `key=value` lines: `colorspace`, `white_level`,
//! `resolution` (`WxH`), `bit_depth`, `near`, `far`, `background`
//! (`white`/`black`), `holdout_every`, plus free-form `notes` and any
//! `recipe.*` / `scene_seed` keys written by the generator.
//!
//! `poses.txt` has one registered frame per line: the frame file name,
//! the 16 entries of the row-major 4x4 world-from-camera matrix (camera
//! looks down -z, +y up) and the focal length in pixels. `#` starts a
//! comment line.

use std::fs;
use std::path::{Path, PathBuf};

use radlog_core::bidr::Scene;
use radlog_core::colorspace::ColorSpace;
use radlog_core::math::{Pose, Vec3};
use radlog_core::render::{trace_image, Camera, Image};
use radlog_core::train::{TrainingSet, View};

use crate::config::{format_kv, KeyValues};
use crate::fsutil::{create_dir, write_atomic};
use crate::imageio::{read_png, write_png};
use crate::{LabError, Result};

pub const FRAMES_DIR: &str = "frames";
pub const POSES_FILE: &str = "poses.txt";
pub const META_FILE: &str = "meta.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub colorspace: ColorSpace,
    pub white_level: u32,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub near: f64,
    pub far: f64,
    pub white_background: bool,
    pub holdout_every: usize,
    /// Other keys, kept in file order.
    pub extra: Vec<(String, String)>,
}

const META_KEYS: &[&str] = &[
    "colorspace",
    "white_level",
    "resolution",
    "bit_depth",
    "near",
    "far",
    "background",
    "holdout_every",
];

/// Default white level for a container depth.
pub fn full_scale(bit_depth: u8) -> u32 {
    if bit_depth == 8 {
        255
    } else {
        65535
    }
}

impl DatasetMeta {
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("colorspace".into(), self.colorspace.to_string()),
            ("white_level".into(), self.white_level.to_string()),
            ("resolution".into(), format!("{}x{}", self.width, self.height)),
            ("bit_depth".into(), self.bit_depth.to_string()),
            ("near".into(), self.near.to_string()),
            ("far".into(), self.far.to_string()),
            (
                "background".into(),
                if self.white_background { "white" } else { "black" }.into(),
            ),
            ("holdout_every".into(), self.holdout_every.to_string()),
        ];
        out.extend(self.extra.iter().cloned());
        out
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let (width, height) = kv
            .parse_with("resolution", |s| {
                let (w, h) = s.split_once('x')?;
                Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
            })?
            .ok_or_else(|| LabError::invalid("meta.txt lacks resolution"))?;
        let bit_depth: u8 = kv.parsed("bit_depth")?.unwrap_or(16);
        let meta = DatasetMeta {
            colorspace: kv.required("colorspace")?,
            white_level: kv.parsed("white_level")?.unwrap_or(full_scale(bit_depth)),
            width,
            height,
            bit_depth,
            near: kv.required("near")?,
            far: kv.required("far")?,
            white_background: kv
                .parse_with("background", |s| match s {
                    "white" => Some(true),
                    "black" => Some(false),
                    _ => None,
                })?
                .unwrap_or(true),
            holdout_every: kv.parsed("holdout_every")?.unwrap_or(8),
            extra: kv
                .keys()
                .filter(|k| !META_KEYS.contains(k))
                .map(|k| (k.to_string(), kv.get(k).unwrap_or_default().to_string()))
                .collect(),
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.bit_depth, 8 | 16) {
            return Err(LabError::invalid(format!("bit depth {} is not 8 or 16", self.bit_depth)));
        }
        if self.white_level == 0 || self.white_level > full_scale(self.bit_depth) {
            return Err(LabError::invalid(format!(
                "white level {} does not fit {}-bit samples",
                self.white_level, self.bit_depth
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(LabError::invalid("resolution must be positive"));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(LabError::invalid("need 0 < near < far"));
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(&dir.join(META_FILE))?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(META_FILE), format_kv(&self.to_kv()).as_bytes())
    }

    pub fn camera(&self, pose: Pose, focal: f64) -> Camera {
        Camera {
            width: self.width,
            height: self.height,
            focal,
            pose,
            near: self.near,
            far: self.far,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEntry {
    pub frame: String,
    pub pose: Pose,
    pub focal: f64,
}

/// Parses a pose file; errors name the offending line.
pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<PoseEntry>> {
    let mut out: Vec<PoseEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| LabError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 18 {
            return Err(err(format!(
                "expected a file name, 16 matrix entries and a focal length; found {} fields",
                tokens.len()
            )));
        }
        let nums: Vec<f64> = tokens[1..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("{t:?} is not a number"))))
            .collect::<Result<_>>()?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let mut m = [[0.0; 4]; 4];
        for r in 0..4 {
            m[r].copy_from_slice(&nums[r * 4..r * 4 + 4]);
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(err("bottom matrix row must be 0 0 0 1".into()));
        }
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][a] * m[k][b]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-6 {
                    return Err(err("rotation block is not orthonormal".into()));
                }
            }
        }
        let focal = nums[16];
        if focal <= 0.0 {
            return Err(err("focal length must be positive".into()));
        }
        let frame = tokens[0].to_string();
        if out.iter().any(|e| e.frame == frame) {
            return Err(err(format!("frame {frame} listed twice")));
        }
        out.push(PoseEntry {
            frame,
            pose: Pose::from_matrix(&m),
            focal,
        });
    }
    Ok(out)
}

pub fn format_poses(entries: &[PoseEntry]) -> String {
    let mut s = String::from("# frame, row-major 4x4 world-from-camera matrix, focal length in pixels\n");
    for e in entries {
        s.push_str(&e.frame);
        for row in e.pose.to_matrix() {
            for v in row {
                s.push(' ');
                s.push_str(&v.to_string());
            }
        }
        s.push(' ');
        s.push_str(&e.focal.to_string());
        s.push('\n');
    }
    s
}

/// Cameras for every registered frame in a pose file.
pub fn load_poses(path: &Path, meta: &DatasetMeta) -> Result<Vec<(String, Camera)>> {
    let entries = parse_poses(&crate::fsutil::read_to_string(path)?, path)?;
    Ok(entries
        .into_iter()
        .map(|e| (e.frame, meta.camera(e.pose, e.focal)))
        .collect())
}

/// Source-space frame to linear, channel by channel.
pub fn decode_frame(img: &Image, space: ColorSpace) -> Image {
    img.map(|v| space.decode(v))
}

/// Linear frame to `space`, channel by channel.
pub fn encode_frame(img: &Image, space: ColorSpace) -> Image {
    img.map(|v| space.encode(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    /// Normalized samples in the dataset's source space.
    pub pixels: Image,
    /// `None` for frames without a pose entry.
    pub camera: Option<Camera>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dir: PathBuf,
    pub meta: DatasetMeta,
    /// Every frame on disk, sorted by name.
    pub frames: Vec<Frame>,
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let frames = dir.join(FRAMES_DIR);
    if !frames.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&frames)
        .map_err(|e| LabError::io(&frames, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"))
                && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let meta = DatasetMeta::read(dir)?;
        let poses_path = dir.join(POSES_FILE);
        let poses = if poses_path.exists() {
            load_poses(&poses_path, &meta)?
        } else {
            Vec::new()
        };
        let mut frames = Vec::new();
        for path in frame_files(dir)? {
            let raw = read_png(&path)?;
            if (raw.width, raw.height) != (meta.width, meta.height) {
                return Err(LabError::invalid(format!(
                    "{}: {}x{} frame in a {}x{} dataset",
                    path.display(),
                    raw.width,
                    raw.height,
                    meta.width,
                    meta.height
                )));
            }
            if raw.bit_depth != meta.bit_depth {
                return Err(LabError::invalid(format!(
                    "{}: {}-bit frame in a {}-bit dataset",
                    path.display(),
                    raw.bit_depth,
                    meta.bit_depth
                )));
            }
            let pixels = raw
                .normalize(meta.white_level)
                .map_err(|e| LabError::invalid(format!("{}: {e}", path.display())))?;
            let name = file_name(&path);
            let camera = poses.iter().find(|(f, _)| *f == name).map(|(_, c)| c.clone());
            frames.push(Frame { name, pixels, camera });
        }
        if let Some((missing, _)) = poses.iter().find(|(f, _)| !frames.iter().any(|fr| fr.name == *f)) {
            return Err(LabError::invalid(format!("pose listed for missing frame {missing}")));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            meta,
            frames,
        })
    }

    /// Names of frames that have no pose; they never enter a split.
    pub fn unregistered(&self) -> Vec<&str> {
        self.frames
            .iter()
            .filter(|f| f.camera.is_none())
            .map(|f| f.name.as_str())
            .collect()
    }

    pub fn registered(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(|f| f.camera.is_some())
    }

    /// Every frame decoded to linear.
    pub fn linear_frames(&self) -> Vec<Image> {
        self.frames
            .iter()
            .map(|f| decode_frame(&f.pixels, self.meta.colorspace))
            .collect()
    }

    /// Registered frames converted to sRGB ground truth, split by holding
    /// out every `holdout_every`-th registered frame.
    pub fn training_set(&self) -> Result<TrainingSet> {
        let views: Vec<View> = self
            .registered()
            .map(|f| View {
                camera: f.camera.clone().expect("registered"),
                image: encode_frame(&decode_frame(&f.pixels, self.meta.colorspace), ColorSpace::SrgbGamma),
            })
            .collect();
        if views.is_empty() {
            return Err(LabError::invalid(format!("{}: no registered frames", self.dir.display())));
        }
        Ok(TrainingSet::with_holdout(views, self.meta.holdout_every)?)
    }

    /// Short name for tables: the directory's last component.
    pub fn label(&self) -> String {
        file_name(&self.dir)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvertReport {
    pub written: usize,
    /// `(file name, error message)` for frames that could not be converted.
    pub errors: Vec<(String, String)>,
}

/// Re-encodes every frame from the dataset's space into `target`, through
/// linear, keeping bit depth and white level. `source`, when given, must
/// match the recorded space. Poses are copied and the metadata is written
/// last with the new space. `out_dir` may equal `in_dir`.
pub fn convert_dataset(
    in_dir: &Path,
    source: Option<ColorSpace>,
    target: ColorSpace,
    out_dir: &Path,
) -> Result<ConvertReport> {
    let files = frame_files(in_dir)?;
    let meta_path = in_dir.join(META_FILE);
    if files.is_empty() && !meta_path.exists() {
        create_dir(out_dir)?;
        return Ok(ConvertReport::default());
    }
    let meta = DatasetMeta::read(in_dir)?;
    if let Some(s) = source {
        if s != meta.colorspace {
            return Err(LabError::invalid(format!(
                "{} is tagged {}, not {s}",
                in_dir.display(),
                meta.colorspace
            )));
        }
    }
    create_dir(&out_dir.join(FRAMES_DIR))?;
    let poses = in_dir.join(POSES_FILE);
    let pose_bytes = if poses.exists() {
        Some(fs::read(&poses).map_err(|e| LabError::io(&poses, e))?)
    } else {
        None
    };
    let mut report = ConvertReport::default();
    for path in files {
        let name = file_name(&path);
        let converted = read_png(&path).and_then(|raw| {
            let img = raw.normalize(meta.white_level)?;
            let out = encode_frame(&decode_frame(&img, meta.colorspace), target);
            write_png(&out_dir.join(FRAMES_DIR).join(&name), &out, meta.bit_depth, meta.white_level)
        });
        match converted {
            Ok(()) => report.written += 1,
            Err(e) => report.errors.push((name, e.to_string())),
        }
    }
    if let Some(bytes) = pose_bytes {
        write_atomic(&out_dir.join(POSES_FILE), &bytes)?;
    }
    DatasetMeta {
        colorspace: target,
        ..meta
    }
    .write(out_dir)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportOptions {
    pub space: ColorSpace,
    pub bit_depth: u8,
    /// Defaults to the container's full scale.
    pub white_level: Option<u32>,
    pub white_background: bool,
    pub holdout_every: usize,
    /// Extra metadata lines (recipe, seed, notes).
    pub extra: Vec<(String, String)>,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            space: ColorSpace::GpLog,
            bit_depth: 16,
            white_level: None,
            white_background: true,
            holdout_every: 8,
            extra: Vec::new(),
        }
    }
}

/// Renders `scene` analytically from each camera and writes the frames
/// encoded in `opts.space`, with poses and metadata.
pub fn export_synthetic_dataset(
    scene: &Scene,
    cameras: &[Camera],
    opts: &ExportOptions,
    out_dir: &Path,
) -> Result<Dataset> {
    if cameras.len() < 2 {
        return Err(LabError::invalid("a synthetic dataset needs at least two cameras"));
    }
    let first = &cameras[0];
    if let Some(c) = cameras.iter().find(|c| {
        (c.width, c.height, c.near, c.far) != (first.width, first.height, first.near, first.far)
    }) {
        return Err(LabError::invalid(format!(
            "cameras must share resolution and near/far; found {}x{} [{}, {}]",
            c.width, c.height, c.near, c.far
        )));
    }
    let meta = DatasetMeta {
        colorspace: opts.space,
        white_level: opts.white_level.unwrap_or(full_scale(opts.bit_depth)),
        width: first.width,
        height: first.height,
        bit_depth: opts.bit_depth,
        near: first.near,
        far: first.far,
        white_background: opts.white_background,
        holdout_every: opts.holdout_every,
        extra: opts.extra.clone(),
    };
    meta.validate()?;
    create_dir(&out_dir.join(FRAMES_DIR))?;
    let mut poses = Vec::with_capacity(cameras.len());
    for (k, cam) in cameras.iter().enumerate() {
        let name = format!("{k:04}.png");
        let (linear, _) = trace_image(scene, cam, opts.white_background)?;
        write_png(
            &out_dir.join(FRAMES_DIR).join(&name),
            &encode_frame(&linear, opts.space),
            meta.bit_depth,
            meta.white_level,
        )?;
        poses.push(PoseEntry {
            frame: name,
            pose: cam.pose,
            focal: cam.focal,
        });
    }
    write_atomic(&out_dir.join(POSES_FILE), format_poses(&poses).as_bytes())?;
    meta.write(out_dir)?;
    Dataset::load(out_dir)
}

/// `count` cameras evenly spaced on a circle of `radius` at height
/// `elevation`, all looking at the origin.
pub fn orbit_cameras(count: usize, size: usize, radius: f64, elevation: f64, fov: f64, near: f64, far: f64) -> Vec<Camera> {
    (0..count)
        .map(|k| {
            let a = k as f64 / count as f64 * std::f64::consts::TAU;
            let eye = Vec3::new(radius * a.cos(), elevation, radius * a.sin());
            Camera {
                width: size,
                height: size,
                focal: Camera::focal_for_fov(size, fov),
                pose: Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0)),
                near,
                far,
            }
        })
        .collect()
}
