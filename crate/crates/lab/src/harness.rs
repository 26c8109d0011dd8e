//! Experiment sweeps over representation spaces, seeds, iteration counts and
//! model sizes. Every sweep is a list of independent training cells run on a
//! small thread pool; results are keyed by cell index, so the tables do not
//! depend on completion order.
//!
//! CSV schemas (one header line, one row per entry):
//! - `quality.csv`: `dataset,<space>...,delta_truelog_srgb`, best held-out
//!   PSNR over repeats (diverged runs excluded), rows sorted by the delta,
//!   largest first.
//! - `robustness.csv`: `space,stddev,avg,min,max,runs,diverged`; diverged
//!   runs count with the PSNR of their restored parameters.
//! - `iters.csv`: `space,iterations,psnr,diverged`.
//! - `compactness.csv`: `space,axis,value,param_count,psnr,diverged`.
//! - `ablation.csv`: `dataset,truelog,log100,log01` (best over repeats).
//! - `brightness.csv`: `dataset,mean_luminance,psnr_truelog,psnr_srgb,delta`.
//! - `runs.csv` (every command): `cell,dataset,space,repeat,seed,iterations,
//!   mlp_width,grid_budget,param_count,psnr,diverged,status`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use radlog_core::colorspace::ColorSpace;
use radlog_core::field::{GridConfig, ModelConfig};
use radlog_core::metrics::{mean_luminance, median, Summary};
use radlog_core::render::Camera;
use radlog_core::train::{train_with_clock, RunReport, TrainConfig, TrainingSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::save_checkpoint;
use crate::dataset::{orbit_cameras, Dataset};
use crate::fsutil::{create_dir, write_atomic};
use crate::report::write_run;
use crate::svg::{line_chart, scatter, Series};
use crate::{LabError, Result};

/// Frame size of desk-scale datasets.
pub const DESK_SIZE: usize = 64;
/// 24 training views plus 3 held out (every 8th frame).
pub const DESK_FRAMES: usize = 27;
pub const DESK_ITERATIONS: usize = 1000;
/// Iteration sweep scaled down from the full-size schedule.
pub const DESK_ITER_SCHEDULE: [usize; 6] = [100, 250, 500, 1000, 2500, 5000];
pub const FULL_ITER_SCHEDULE: [usize; 7] = [500, 1000, 2000, 5000, 10000, 20000, 25000];
pub const WIDTH_VALUES: [usize; 5] = [16, 32, 64, 128, 256];
pub const GRID_BUDGETS: [usize; 6] = [256, 512, 1024, 2048, 4096, 8192];
/// Feature channels per grid vertex in the grid-budget sweep.
pub const GRID_FEATURES: usize = 4;
/// Share of frames sampled for the mean luminance.
pub const LUMINANCE_FRACTION: f64 = 0.25;

/// Orbit cameras used for generated datasets.
pub fn desk_cameras(count: usize, size: usize) -> Vec<Camera> {
    orbit_cameras(count, size, 3.0, 1.4, 0.75, 0.5, 6.0)
}

pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        iterations: DESK_ITERATIONS,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub spaces: Vec<ColorSpace>,
    pub repeats: usize,
    /// Repeat `r` uses seed `seed + r`.
    pub seed: u64,
    /// Zero wall-clock columns so outputs are bit-reproducible.
    pub deterministic: bool,
    pub jobs: usize,
    pub train: TrainConfig,
    pub model: ModelConfig,
    /// Write `runs/<cell>/{report.csv,run.txt,model.ckpt}` under the output directory.
    pub save_runs: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            spaces: ColorSpace::MAIN.to_vec(),
            repeats: 5,
            seed: 0,
            deterministic: false,
            jobs: 1,
            train: desk_train_config(),
            model: ModelConfig::default(),
            save_runs: true,
        }
    }
}

impl HarnessOptions {
    fn validate(&self) -> Result<()> {
        if self.spaces.is_empty() {
            return Err(LabError::invalid("no representation spaces selected"));
        }
        if self.repeats == 0 {
            return Err(LabError::invalid("repeats must be at least 1"));
        }
        Ok(())
    }
}

/// One training run of a sweep.
#[derive(Debug, Clone)]
pub struct Cell {
    pub dataset: usize,
    pub space: ColorSpace,
    pub repeat: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Cell {
    /// Cell for `dataset` trained in `space` with model and batch seed `seed`.
    pub fn new(opts: &HarnessOptions, dataset: usize, space: ColorSpace, repeat: usize, seed: u64) -> Self {
        Cell {
            dataset,
            space,
            repeat,
            model: ModelConfig {
                representation_space: space,
                seed,
                ..opts.model.clone()
            },
            train: TrainConfig { seed, ..opts.train },
        }
    }

    fn grid_budget(&self) -> usize {
        self.model.grid.map_or(0, |g| g.budget)
    }

    /// Directory name of the cell's artifacts under `runs/`.
    pub fn name(&self, datasets: &[String], index: usize) -> String {
        format!(
            "{index:04}_{}_{}_r{}_s{}",
            datasets[self.dataset],
            self.space.to_string().replace(':', "-"),
            self.repeat,
            self.train.seed
        )
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub outcome: std::result::Result<RunReport, String>,
}

impl CellResult {
    /// Final PSNR of a run that finished without diverging.
    pub fn clean_psnr(&self) -> Option<f64> {
        match &self.outcome {
            Ok(r) if !r.diverged => Some(r.final_psnr),
            _ => None,
        }
    }
}

/// A sweep's datasets with their training sets.
pub struct Inputs {
    pub labels: Vec<String>,
    pub sets: Vec<TrainingSet>,
    pub datasets: Vec<Dataset>,
}

impl Inputs {
    pub fn load(dirs: &[PathBuf]) -> Result<Self> {
        if dirs.is_empty() {
            return Err(LabError::invalid("at least one dataset is required"));
        }
        let datasets: Vec<Dataset> = dirs.iter().map(|d| Dataset::load(d)).collect::<Result<_>>()?;
        Self::from_datasets(datasets)
    }

    pub fn from_datasets(datasets: Vec<Dataset>) -> Result<Self> {
        let sets = datasets.iter().map(Dataset::training_set).collect::<Result<_>>()?;
        let mut labels: Vec<String> = Vec::new();
        for d in &datasets {
            let base = d.label();
            let mut label = base.clone();
            let mut k = 2;
            while labels.contains(&label) {
                label = format!("{base}_{k}");
                k += 1;
            }
            labels.push(label);
        }
        Ok(Inputs { labels, sets, datasets })
    }
}

/// Trains every cell with up to `opts.jobs` worker threads.
pub fn run_cells(inputs: &Inputs, cells: Vec<Cell>, opts: &HarnessOptions, out: Option<&Path>) -> Vec<CellResult> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let jobs = opts.jobs.clamp(1, cells.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let outcome = run_cell(inputs, cell, i, opts, out);
                slots.lock().expect("result lock")[i] = Some(CellResult {
                    cell: cell.clone(),
                    outcome,
                });
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

fn run_cell(
    inputs: &Inputs,
    cell: &Cell,
    index: usize,
    opts: &HarnessOptions,
    out: Option<&Path>,
) -> std::result::Result<RunReport, String> {
    let started = Instant::now();
    let wall = || started.elapsed().as_secs_f64() * 1000.0;
    let zero = || 0.0;
    let clock: &dyn Fn() -> f64 = if opts.deterministic { &zero } else { &wall };
    let train = TrainConfig {
        white_background: inputs.datasets[cell.dataset].meta.white_background,
        ..cell.train
    };
    let (model, report) = train_with_clock(&inputs.sets[cell.dataset], &cell.model, &train, clock)
        .map_err(|e| e.to_string())?;
    if let (true, Some(out)) = (opts.save_runs, out) {
        let dir = out.join("runs").join(cell.name(&inputs.labels, index));
        write_run(&dir, &report).map_err(|e| e.to_string())?;
        save_checkpoint(&dir.join("model.ckpt"), &model).map_err(|e| e.to_string())?;
    }
    Ok(report)
}

/// Outcome of a harness command: files written and number of failed cells.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub errors: usize,
    pub results: Vec<CellResult>,
}

fn fmt_f(v: Option<f64>) -> String {
    v.map_or("nan".into(), |v| v.to_string())
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn write_file(out: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    create_dir(out)?;
    let path = out.join(name);
    write_atomic(&path, text.as_bytes())?;
    files.push(path);
    Ok(())
}

fn finish(inputs: &Inputs, out: &Path, results: Vec<CellResult>, mut files: Vec<PathBuf>) -> Result<Outcome> {
    let header = [
        "cell",
        "dataset",
        "space",
        "repeat",
        "seed",
        "iterations",
        "mlp_width",
        "grid_budget",
        "param_count",
        "psnr",
        "diverged",
        "status",
    ];
    let mut errors = 0;
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let c = &r.cell;
            let (psnr, diverged, status) = match &r.outcome {
                Ok(rep) => (rep.final_psnr.to_string(), rep.diverged.to_string(), "ok".to_string()),
                Err(e) => {
                    errors += 1;
                    ("nan".into(), "false".into(), format!("error: {e}"))
                }
            };
            vec![
                i.to_string(),
                inputs.labels[c.dataset].clone(),
                c.space.to_string(),
                c.repeat.to_string(),
                c.train.seed.to_string(),
                c.train.iterations.to_string(),
                c.model.mlp_width.to_string(),
                c.grid_budget().to_string(),
                c.model.param_count().to_string(),
                psnr,
                diverged,
                status,
            ]
        })
        .collect();
    write_file(out, "runs.csv", &csv_text(&header, &rows)?, &mut files)?;
    Ok(Outcome { files, errors, results })
}

/// Best clean PSNR per `(dataset, space name)` over repeats.
fn best_table(results: &[CellResult]) -> HashMap<(usize, String), f64> {
    let mut best: HashMap<(usize, String), f64> = HashMap::new();
    for r in results {
        if let Some(p) = r.clean_psnr() {
            let e = best.entry((r.cell.dataset, r.cell.space.to_string())).or_insert(f64::NEG_INFINITY);
            *e = e.max(p);
        }
    }
    best
}

fn repeat_cells(inputs: &Inputs, opts: &HarnessOptions, spaces: &[ColorSpace]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for d in 0..inputs.sets.len() {
        for &space in spaces {
            for r in 0..opts.repeats {
                cells.push(Cell::new(opts, d, space, r, opts.seed + r as u64));
            }
        }
    }
    cells
}

/// Best PSNR per dataset and space, ordered by the TrueLog minus sRGB gap.
pub fn quality_table(inputs: &Inputs, opts: &HarnessOptions, out: &Path) -> Result<Outcome> {
    opts.validate()?;
    let results = run_cells(inputs, repeat_cells(inputs, opts, &opts.spaces), opts, Some(out));
    let best = best_table(&results);
    let mut rows: Vec<(f64, Vec<String>)> = (0..inputs.sets.len())
        .map(|d| {
            let get = |s: ColorSpace| best.get(&(d, s.to_string())).copied();
            let delta = match (get(ColorSpace::TrueLog), get(ColorSpace::SrgbGamma)) {
                (Some(t), Some(s)) => Some(t - s),
                _ => None,
            };
            let mut row = vec![inputs.labels[d].clone()];
            row.extend(opts.spaces.iter().map(|&s| fmt_f(get(s))));
            row.push(fmt_f(delta));
            (delta.unwrap_or(f64::NEG_INFINITY), row)
        })
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut header = vec!["dataset".to_string()];
    header.extend(opts.spaces.iter().map(|s| s.to_string()));
    header.push("delta_truelog_srgb".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut files = Vec::new();
    let rows: Vec<Vec<String>> = rows.into_iter().map(|r| r.1).collect();
    write_file(out, "quality.csv", &csv_text(&header, &rows)?, &mut files)?;
    finish(inputs, out, results, files)
}

/// Summary statistics over `runs` seeds per space. With `same_seed` every
/// run reuses the base seed.
pub fn robustness_suite(inputs: &Inputs, opts: &HarnessOptions, runs: usize, same_seed: bool, out: &Path) -> Result<Outcome> {
    opts.validate()?;
    if runs == 0 {
        return Err(LabError::invalid("runs must be at least 1"));
    }
    let mut cells = Vec::new();
    for &space in &opts.spaces {
        for r in 0..runs {
            let seed = if same_seed { opts.seed } else { opts.seed + r as u64 };
            cells.push(Cell::new(opts, 0, space, r, seed));
        }
    }
    let results = run_cells(inputs, cells, opts, Some(out));
    let mut rows = Vec::new();
    for &space in &opts.spaces {
        let mine: Vec<&CellResult> = results.iter().filter(|r| r.cell.space == space).collect();
        let psnrs: Vec<f64> = mine
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|rep| rep.final_psnr))
            .collect();
        let diverged = mine
            .iter()
            .filter(|r| r.outcome.as_ref().is_ok_and(|rep| rep.diverged))
            .count();
        let row = match Summary::of(&psnrs) {
            Ok(s) => vec![
                space.to_string(),
                s.std_dev.to_string(),
                s.mean.to_string(),
                s.min.to_string(),
                s.max.to_string(),
                s.count.to_string(),
                diverged.to_string(),
            ],
            Err(_) => vec![space.to_string(), "nan".into(), "nan".into(), "nan".into(), "nan".into(), "0".into(), diverged.to_string()],
        };
        rows.push(row);
    }
    let mut files = Vec::new();
    write_file(
        out,
        "robustness.csv",
        &csv_text(&["space", "stddev", "avg", "min", "max", "runs", "diverged"], &rows)?,
        &mut files,
    )?;
    finish(inputs, out, results, files)
}

/// One run per space and iteration count; each run has its own learning-rate
/// schedule over its full length.
pub fn iteration_sweep(inputs: &Inputs, opts: &HarnessOptions, schedule: &[usize], out: &Path) -> Result<Outcome> {
    opts.validate()?;
    if schedule.is_empty() {
        return Err(LabError::invalid("iteration schedule is empty"));
    }
    let mut cells = Vec::new();
    for &space in &opts.spaces {
        for &iters in schedule {
            let mut cell = Cell::new(opts, 0, space, 0, opts.seed);
            cell.train.iterations = iters;
            cell.train.eval_every = iters;
            cells.push(cell);
        }
    }
    let results = run_cells(inputs, cells, opts, Some(out));
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.cell.space.to_string(),
                r.cell.train.iterations.to_string(),
                fmt_f(r.outcome.as_ref().ok().map(|rep| rep.final_psnr)),
                r.outcome.as_ref().is_ok_and(|rep| rep.diverged).to_string(),
            ]
        })
        .collect();
    let mut files = Vec::new();
    write_file(out, "iters.csv", &csv_text(&["space", "iterations", "psnr", "diverged"], &rows)?, &mut files)?;
    let protocol = if schedule == DESK_ITER_SCHEDULE {
        "desk"
    } else if schedule == FULL_ITER_SCHEDULE {
        "full"
    } else {
        "custom"
    };
    let meta = format!(
        "protocol={protocol}\nschedule={}\nfull_schedule={}\n",
        schedule.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        FULL_ITER_SCHEDULE.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
    );
    write_file(out, "iters.txt", &meta, &mut files)?;
    let series = series_by_space(&results, &opts.spaces, |c| c.train.iterations as f64);
    write_file(out, "iters.svg", &line_chart("Held-out PSNR vs iterations", "iterations", "PSNR (dB)", &series, true), &mut files)?;
    finish(inputs, out, results, files)
}

fn series_by_space(results: &[CellResult], spaces: &[ColorSpace], x: impl Fn(&Cell) -> f64) -> Vec<Series> {
    spaces
        .iter()
        .map(|&s| Series {
            name: s.to_string(),
            points: results
                .iter()
                .filter(|r| r.cell.space == s)
                .map(|r| (x(&r.cell), r.outcome.as_ref().map_or(f64::NAN, |rep| rep.final_psnr)))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompactAxis {
    Width,
    GridBudget,
}

impl CompactAxis {
    pub fn name(self) -> &'static str {
        match self {
            CompactAxis::Width => "width",
            CompactAxis::GridBudget => "grid_budget",
        }
    }

    pub fn default_values(self) -> Vec<usize> {
        match self {
            CompactAxis::Width => WIDTH_VALUES.to_vec(),
            CompactAxis::GridBudget => GRID_BUDGETS.to_vec(),
        }
    }
}

/// Model config with one compactness axis set to `value`.
pub fn compact_model(base: &ModelConfig, axis: CompactAxis, value: usize) -> Result<ModelConfig> {
    let mut m = base.clone();
    match axis {
        CompactAxis::Width => m.mlp_width = value,
        CompactAxis::GridBudget => m.grid = Some(GridConfig::from_budget(value, GRID_FEATURES)?),
    }
    m.validate()?;
    Ok(m)
}

pub fn compactness_sweep(inputs: &Inputs, opts: &HarnessOptions, axis: CompactAxis, values: &[usize], out: &Path) -> Result<Outcome> {
    opts.validate()?;
    if values.is_empty() {
        return Err(LabError::invalid("no sweep values"));
    }
    let mut cells = Vec::new();
    for &space in &opts.spaces {
        for &v in values {
            let mut cell = Cell::new(opts, 0, space, 0, opts.seed);
            cell.model = ModelConfig {
                representation_space: space,
                seed: opts.seed,
                ..compact_model(&opts.model, axis, v)?
            };
            cells.push(cell);
        }
    }
    let results = run_cells(inputs, cells, opts, Some(out));
    let value_of = |c: &Cell| match axis {
        CompactAxis::Width => c.model.mlp_width,
        CompactAxis::GridBudget => c.grid_budget(),
    };
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.cell.space.to_string(),
                axis.name().to_string(),
                value_of(&r.cell).to_string(),
                r.cell.model.param_count().to_string(),
                fmt_f(r.outcome.as_ref().ok().map(|rep| rep.final_psnr)),
                r.outcome.as_ref().is_ok_and(|rep| rep.diverged).to_string(),
            ]
        })
        .collect();
    let mut files = Vec::new();
    write_file(
        out,
        "compactness.csv",
        &csv_text(&["space", "axis", "value", "param_count", "psnr", "diverged"], &rows)?,
        &mut files,
    )?;
    let series = series_by_space(&results, &opts.spaces, |c| value_of(c) as f64);
    write_file(
        out,
        "compactness.svg",
        &line_chart(&format!("Held-out PSNR vs {}", axis.name()), axis.name(), "PSNR (dB)", &series, true),
        &mut files,
    )?;
    finish(inputs, out, results, files)
}

/// TrueLog against the two scaled logs, best over repeats.
pub fn scaledlog_ablation(inputs: &Inputs, opts: &HarnessOptions, out: &Path) -> Result<Outcome> {
    let spaces = [ColorSpace::TrueLog, ColorSpace::LOG100, ColorSpace::LOG01];
    let opts = HarnessOptions {
        spaces: spaces.to_vec(),
        ..opts.clone()
    };
    opts.validate()?;
    let results = run_cells(inputs, repeat_cells(inputs, &opts, &spaces), &opts, Some(out));
    let best = best_table(&results);
    let rows: Vec<Vec<String>> = (0..inputs.sets.len())
        .map(|d| {
            let mut row = vec![inputs.labels[d].clone()];
            row.extend(spaces.iter().map(|&s| fmt_f(best.get(&(d, s.to_string())).copied())));
            row
        })
        .collect();
    let mut files = Vec::new();
    write_file(out, "ablation.csv", &csv_text(&["dataset", "truelog", "log100", "log01"], &rows)?, &mut files)?;
    finish(inputs, out, results, files)
}

/// Mean luminance of a seeded quarter of each dataset's frames against the
/// TrueLog minus sRGB gap (best over repeats, as in the quality table).
pub fn brightness_analysis(inputs: &Inputs, opts: &HarnessOptions, out: &Path) -> Result<Outcome> {
    let spaces = [ColorSpace::TrueLog, ColorSpace::SrgbGamma];
    let opts = HarnessOptions {
        spaces: spaces.to_vec(),
        ..opts.clone()
    };
    opts.validate()?;
    let mut luminance = Vec::new();
    for d in &inputs.datasets {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        luminance.push(mean_luminance(&d.linear_frames(), LUMINANCE_FRACTION, &mut rng)?);
    }
    let results = run_cells(inputs, repeat_cells(inputs, &opts, &spaces), &opts, Some(out));
    let best = best_table(&results);
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for d in 0..inputs.sets.len() {
        let t = best.get(&(d, ColorSpace::TrueLog.to_string())).copied();
        let s = best.get(&(d, ColorSpace::SrgbGamma.to_string())).copied();
        let delta = t.zip(s).map(|(t, s)| t - s);
        rows.push(vec![
            inputs.labels[d].clone(),
            luminance[d].to_string(),
            fmt_f(t),
            fmt_f(s),
            fmt_f(delta),
        ]);
        points.push((inputs.labels[d].clone(), luminance[d], delta.unwrap_or(f64::NAN)));
    }
    let mut files = Vec::new();
    write_file(
        out,
        "brightness.csv",
        &csv_text(&["dataset", "mean_luminance", "psnr_truelog", "psnr_srgb", "delta"], &rows)?,
        &mut files,
    )?;
    write_file(
        out,
        "brightness.svg",
        &scatter("TrueLog gain vs brightness", "mean luminance", "PSNR TrueLog - sRGB (dB)", &points),
        &mut files,
    )?;
    finish(inputs, out, results, files)
}

/// Median over seeds of each space's final PSNR (clean runs only).
pub fn median_by_space(results: &[CellResult], space: ColorSpace) -> Option<f64> {
    let v: Vec<f64> = results
        .iter()
        .filter(|r| r.cell.space == space)
        .filter_map(CellResult::clean_psnr)
        .collect();
    median(&v)
}
