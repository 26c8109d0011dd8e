//! Dataset directories: frames, poses, metadata, conversion and export.

use std::fs;
use std::path::Path;

use radlog_core::bidr::{generate_scene, SceneRecipe};
use radlog_core::colorspace::ColorSpace;
use radlog_core::math::Pose;
use radlog_core::render::{trace_image, Image};
use radlog_lab::dataset::{
    convert_dataset, decode_frame, export_synthetic_dataset, parse_poses, Dataset, DatasetMeta, ExportOptions,
    META_FILE, POSES_FILE,
};
use radlog_lab::harness::desk_cameras;
use radlog_lab::imageio::{read_png, write_png};
use radlog_lab::LabError;

fn export(dir: &Path, space: ColorSpace, views: usize, size: usize) -> Dataset {
    let scene = generate_scene(&SceneRecipe::default(), 1).unwrap();
    let opts = ExportOptions {
        space,
        extra: vec![("notes".into(), "test export".into())],
        ..ExportOptions::default()
    };
    export_synthetic_dataset(&scene, &desk_cameras(views, size), &opts, dir).unwrap()
}

#[test]
fn decode_examples() {
    let ones = Image::filled(2, 2, [1.0; 3]);
    assert_eq!(decode_frame(&ones, ColorSpace::GpLog).pixels[0], [1.0; 3]);
    let srgb = Image::filled(1, 1, [0.731836; 3]);
    assert!((decode_frame(&srgb, ColorSpace::SrgbGamma).pixels[0][0] - 0.5).abs() < 1e-4);
    let lin = Image::filled(1, 1, [0.123, 0.456, 0.789]);
    assert_eq!(decode_frame(&lin, ColorSpace::Linear), lin);
    assert!("notaspace".parse::<ColorSpace>().is_err());
}

#[test]
fn export_writes_frames_poses_and_exact_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let ds = export(dir.path(), ColorSpace::LOG01, 2, 8);
    assert_eq!(ds.frames.len(), 2);
    assert_eq!(parse_poses(&fs::read_to_string(dir.path().join(POSES_FILE)).unwrap(), Path::new("p")).unwrap().len(), 2);
    let meta = fs::read_to_string(dir.path().join(META_FILE)).unwrap();
    assert!(meta.contains("colorspace=scaledlog:25.5\n"), "{meta}");
    assert!(meta.contains("notes=test export\n"));
    assert_eq!(ds.meta.colorspace, ColorSpace::LOG01);
    assert!(ds.unregistered().is_empty());
}

#[test]
fn exported_frames_decode_to_the_analytic_render() {
    let dir = tempfile::tempdir().unwrap();
    let ds = export(dir.path(), ColorSpace::GpLog, 3, 12);
    let scene = generate_scene(&SceneRecipe::default(), 1).unwrap();
    let cams = desk_cameras(3, 12);
    for (frame, cam) in ds.frames.iter().zip(&cams) {
        assert_eq!(frame.camera.as_ref().unwrap(), cam);
        let (truth, _) = trace_image(&scene, cam, true).unwrap();
        let decoded = decode_frame(&frame.pixels, ColorSpace::GpLog);
        for (p, q) in decoded.pixels.iter().zip(&truth.pixels) {
            for c in 0..3 {
                // Half a 16-bit step in GPLog, scaled by the decode slope (at most e - 1).
                let bound = 0.5 / 65535.0 * (std::f64::consts::E - 1.0) + 1e-12;
                assert!((p[c] - q[c]).abs() <= bound, "{} vs {}", p[c], q[c]);
            }
        }
    }
}

#[test]
fn poses_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = export(dir.path(), ColorSpace::SrgbGamma, 4, 6);
    let again = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds, again);
    for (f, cam) in again.frames.iter().zip(desk_cameras(4, 6)) {
        assert_eq!(f.camera.as_ref().unwrap().pose, cam.pose);
        assert_eq!(f.camera.as_ref().unwrap().focal, cam.focal);
    }
}

#[test]
fn identity_pose_file() {
    let text = "0000.png 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1 50\n";
    let poses = parse_poses(text, Path::new("poses.txt")).unwrap();
    assert_eq!(poses.len(), 1);
    assert_eq!(poses[0].pose, Pose::IDENTITY);
    assert_eq!(poses[0].focal, 50.0);
}

#[test]
fn malformed_pose_lines_report_their_line() {
    let cases = [
        "# header\n0000.png 1 0 0\n",
        "# header\n\n0000.png 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1 x\n",
        "# header\n0000.png 2 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1 50\n",
    ];
    for (text, line) in cases.iter().zip([2, 3, 2]) {
        match parse_poses(text, Path::new("poses.txt")) {
            Err(LabError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

#[test]
fn frames_without_pose_are_flagged_and_left_out_of_the_split() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), ColorSpace::SrgbGamma, 9, 4);
    let poses = fs::read_to_string(dir.path().join(POSES_FILE)).unwrap();
    let kept: Vec<&str> = poses.lines().filter(|l| !l.starts_with("0003.png")).collect();
    fs::write(dir.path().join(POSES_FILE), kept.join("\n")).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds.unregistered(), vec!["0003.png"]);
    let set = ds.training_set().unwrap();
    assert_eq!(set.views.len(), 8);
    assert_eq!((set.train.len(), set.held_out.len()), (7, 1));
}

#[test]
fn truelog_lies_above_gplog_except_just_above_its_floor() {
    // Sample the inequality before relying on it for the brightening claim.
    let mut crossing = None;
    let n = 200_000;
    for i in 0..=n {
        let x = 1.0 / 255.0 + (1.0 - 1.0 / 255.0) * i as f64 / n as f64;
        let below = ColorSpace::TrueLog.encode(x) < ColorSpace::GpLog.encode(x);
        if below {
            crossing = Some(x);
        }
    }
    let crossing = crossing.expect("TrueLog starts below GPLog at 1/255");
    assert!(crossing < 0.0042, "inequality fails up to {crossing}");
    assert_eq!(ColorSpace::TrueLog.encode(1.0), ColorSpace::GpLog.encode(1.0));
}

#[test]
fn gplog_to_truelog_brightens_mid_gray() {
    let src = tempfile::tempdir().unwrap();
    let dst = tempfile::tempdir().unwrap();
    let gray = Image::filled(4, 4, [0.5; 3]);
    fs::create_dir_all(src.path().join("frames")).unwrap();
    write_png(&src.path().join("frames/0000.png"), &gray, 8, 255).unwrap();
    fs::write(
        src.path().join(META_FILE),
        "colorspace=gplog\nresolution=4x4\nbit_depth=8\nnear=0.5\nfar=6\n",
    )
    .unwrap();
    let rep = convert_dataset(src.path(), Some(ColorSpace::GpLog), ColorSpace::TrueLog, dst.path()).unwrap();
    assert_eq!(rep.written, 1);
    let mean = |p: &Path| {
        let raw = read_png(p).unwrap();
        raw.samples.iter().map(|&s| f64::from(s)).sum::<f64>() / raw.samples.len() as f64
    };
    assert!(mean(&dst.path().join("frames/0000.png")) > mean(&src.path().join("frames/0000.png")));
    assert_eq!(DatasetMeta::read(dst.path()).unwrap().colorspace, ColorSpace::TrueLog);
}

#[test]
fn converting_back_reproduces_frames_within_one_code() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    export(a.path(), ColorSpace::GpLog, 2, 10);
    convert_dataset(a.path(), None, ColorSpace::TrueLog, b.path()).unwrap();
    convert_dataset(b.path(), Some(ColorSpace::TrueLog), ColorSpace::GpLog, c.path()).unwrap();
    let orig = Dataset::load(a.path()).unwrap();
    let back = Dataset::load(c.path()).unwrap();
    for (f, g) in orig.frames.iter().zip(&back.frames) {
        for (p, q) in f.pixels.pixels.iter().zip(&g.pixels.pixels) {
            for ch in 0..3 {
                assert!((p[ch] - q[ch]).abs() <= 1.0 / 65535.0 + 1e-12);
            }
        }
    }
    // Same-space conversion leaves the samples untouched.
    let d = tempfile::tempdir().unwrap();
    convert_dataset(a.path(), None, ColorSpace::GpLog, d.path()).unwrap();
    let same = Dataset::load(d.path()).unwrap();
    assert_eq!(same.frames, orig.frames);
}

#[test]
fn conversion_is_idempotent_and_records_bad_files() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    export(src.path(), ColorSpace::GpLog, 3, 6);
    fs::write(src.path().join("frames/0001.png"), b"not a png").unwrap();
    let first = convert_dataset(src.path(), None, ColorSpace::SrgbGamma, out.path()).unwrap();
    assert_eq!(first.written, 2);
    assert_eq!(first.errors.len(), 1);
    assert_eq!(first.errors[0].0, "0001.png");
    let snapshot = |d: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(d.join("frames"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        v.sort();
        (v, fs::read(d.join(META_FILE)).unwrap(), fs::read(d.join(POSES_FILE)).unwrap())
    };
    let once = snapshot(out.path());
    let second = convert_dataset(src.path(), None, ColorSpace::SrgbGamma, out.path()).unwrap();
    assert_eq!(second, first);
    assert_eq!(snapshot(out.path()), once);
    // No temporary files are left behind.
    assert!(fs::read_dir(out.path().join("frames")).unwrap().all(|e| !e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .ends_with(".tmp")));
}

#[test]
fn tag_mismatch_is_an_error_and_empty_input_is_not() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let empty = convert_dataset(src.path(), Some(ColorSpace::GpLog), ColorSpace::TrueLog, out.path()).unwrap();
    assert_eq!(empty.written, 0);
    assert!(empty.errors.is_empty());
    export(src.path(), ColorSpace::GpLog, 2, 4);
    assert!(convert_dataset(src.path(), Some(ColorSpace::Linear), ColorSpace::TrueLog, out.path()).is_err());
}

#[test]
fn ten_bit_white_level() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(&SceneRecipe::default(), 2).unwrap();
    let opts = ExportOptions {
        space: ColorSpace::GpLog,
        white_level: Some(1023),
        ..ExportOptions::default()
    };
    let ds = export_synthetic_dataset(&scene, &desk_cameras(2, 6), &opts, dir.path()).unwrap();
    assert_eq!(ds.meta.white_level, 1023);
    let raw = read_png(&dir.path().join("frames/0000.png")).unwrap();
    assert!(raw.samples.iter().all(|&s| s <= 1023));
    assert!(raw.samples.contains(&1023));
}
