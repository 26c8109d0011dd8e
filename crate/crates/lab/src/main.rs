use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use radlog_core::bidr::generate_scene;
use radlog_core::colorspace::ColorSpace;
use radlog_core::metrics::{psnr, psnr_from_mse};
use radlog_core::render::render_image;
use radlog_core::train::train_with_clock;
use radlog_lab::checkpoint::{load_checkpoint, save_checkpoint};
use radlog_lab::config::{
    apply_model_kv, apply_train_kv, format_kv, recipe_from_kv, recipe_preset, recipe_to_kv, run_config_keys, KeyValues,
};
use radlog_lab::dataset::{convert_dataset, export_synthetic_dataset, Dataset, ExportOptions};
use radlog_lab::harness::{
    brightness_analysis, compactness_sweep, desk_cameras, desk_train_config, iteration_sweep, quality_table,
    robustness_suite, scaledlog_ablation, CompactAxis, HarnessOptions, Inputs, Outcome, DESK_FRAMES,
    DESK_ITER_SCHEDULE, DESK_SIZE, FULL_ITER_SCHEDULE,
};
use radlog_lab::imageio::{write_depth_png, write_png};
use radlog_lab::report::write_run;

#[derive(Parser)]
#[command(name = "lab", about = "Radiance fields with swappable representation color spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic BIDR scene into a dataset directory.
    Generate(GenerateArgs),
    /// Re-encode a dataset's frames into another color space.
    Convert(ConvertArgs),
    /// Train one model and write its checkpoint and report.
    Train(TrainArgs),
    /// Render held-out views of a checkpoint and score them.
    Eval(EvalArgs),
    /// Best PSNR per dataset and space over repeats.
    Quality(SweepArgs),
    /// Mean, min, max and stddev of PSNR over repeated runs.
    Robustness(RobustnessArgs),
    /// PSNR as a function of training length.
    Iters(ItersArgs),
    /// PSNR as a function of MLP width or grid budget.
    Compactness(CompactnessArgs),
    /// TrueLog against Log100 and Log01.
    Ablation(SweepArgs),
    /// Mean luminance against the TrueLog minus sRGB gap.
    Brightness(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Preset name (`bright`, `dark`) or a recipe file of key=value lines.
    #[arg(long, default_value = "bright")]
    recipe: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DESK_FRAMES)]
    views: usize,
    #[arg(long, default_value_t = DESK_SIZE)]
    size: usize,
    /// Color space the frames are encoded in.
    #[arg(long, default_value = "gplog")]
    space: ColorSpace,
    #[arg(long, default_value_t = 16)]
    bit_depth: u8,
    /// Stored value of 1.0; defaults to the container's full scale.
    #[arg(long)]
    white_level: Option<u32>,
    #[arg(long)]
    black_background: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Expected source space; must match the dataset's metadata.
    #[arg(long)]
    from: Option<ColorSpace>,
    #[arg(long)]
    to: ColorSpace,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// key=value file with model and training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training iterations (overrides the config file).
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report zero wall time so outputs are bit-reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Representation space of the model.
    #[arg(long, default_value = "truelog")]
    space: ColorSpace,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    samples: usize,
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Dataset directory; repeat for several.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated representation spaces.
    #[arg(long, value_delimiter = ',', default_value = "gplog,linear,srgb,truelog")]
    spaces: Vec<ColorSpace>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip per-run reports and checkpoints.
    #[arg(long)]
    no_save_runs: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RobustnessArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Give every run the same seed.
    #[arg(long)]
    same_seed: bool,
}

#[derive(Args)]
struct ItersArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// `desk`, `full` or a comma-separated list.
    #[arg(long, default_value = "desk")]
    schedule: String,
}

#[derive(Args)]
struct CompactnessArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// `width` or `grid`.
    #[arg(long, default_value = "width")]
    axis: String,
    /// Comma-separated values; defaults depend on the axis.
    #[arg(long, value_delimiter = ',')]
    values: Vec<usize>,
}

fn harness_options(args: &SweepArgs) -> Result<HarnessOptions> {
    let mut opts = HarnessOptions {
        spaces: args.spaces.clone(),
        repeats: args.repeats,
        seed: args.run.seed,
        deterministic: args.run.deterministic,
        jobs: args.jobs,
        save_runs: !args.no_save_runs,
        ..HarnessOptions::default()
    };
    let (model, train) = run_configs(&args.run)?;
    opts.model = model;
    opts.train = train;
    Ok(opts)
}

fn run_configs(run: &RunArgs) -> Result<(radlog_core::field::ModelConfig, radlog_core::train::TrainConfig)> {
    let mut model = radlog_core::field::ModelConfig::default();
    let mut train = desk_train_config();
    if let Some(path) = &run.config {
        let kv = KeyValues::read(path)?;
        kv.reject_unknown(&run_config_keys())?;
        model = apply_model_kv(&kv, &model)?;
        train = apply_train_kv(&kv, &train)?;
    }
    if let Some(n) = run.iters {
        train.iterations = n;
        train.eval_every = train.eval_every.min(n);
    }
    train.seed = run.seed;
    model.seed = run.seed;
    train.validate()?;
    Ok((model, train))
}

fn report(outcome: &Outcome) -> ExitCode {
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for r in &outcome.results {
        if let Err(e) = &r.outcome {
            eprintln!("run failed ({} {} repeat {}): {e}", r.cell.dataset, r.cell.space, r.cell.repeat);
        }
    }
    if outcome.errors > 0 {
        eprintln!("{} run(s) failed", outcome.errors);
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let recipe = match recipe_preset(&args.recipe) {
        Some(r) => r,
        None => recipe_from_kv(&KeyValues::read(Path::new(&args.recipe))?)?,
    };
    let scene = generate_scene(&recipe, args.seed)?;
    let mut extra: Vec<(String, String)> = recipe_to_kv(&recipe)
        .into_iter()
        .map(|(k, v)| (format!("recipe.{k}"), v))
        .collect();
    extra.push(("scene_seed".into(), args.seed.to_string()));
    let opts = ExportOptions {
        space: args.space,
        bit_depth: args.bit_depth,
        white_level: args.white_level,
        white_background: !args.black_background,
        extra,
        ..ExportOptions::default()
    };
    let ds = export_synthetic_dataset(&scene, &desk_cameras(args.views, args.size), &opts, &args.out)?;
    println!("wrote {} frames to {}", ds.frames.len(), args.out.display());
    Ok(())
}

fn convert(args: &ConvertArgs) -> Result<ExitCode> {
    let rep = convert_dataset(&args.input, args.from, args.to, &args.out)?;
    println!("converted {} frames into {}", rep.written, args.out.display());
    for (file, err) in &rep.errors {
        eprintln!("{file}: {err}");
    }
    Ok(if rep.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn train(args: &TrainArgs) -> Result<()> {
    let ds = Dataset::load(&args.dataset)?;
    let data = ds.training_set()?;
    let (mut model_cfg, mut train_cfg) = run_configs(&args.run)?;
    model_cfg.representation_space = args.space;
    train_cfg.white_background = ds.meta.white_background;
    let start = std::time::Instant::now();
    let wall = || start.elapsed().as_secs_f64() * 1000.0;
    let zero = || 0.0;
    let clock: &dyn Fn() -> f64 = if args.run.deterministic { &zero } else { &wall };
    let (model, rep) = train_with_clock(&data, &model_cfg, &train_cfg, clock)?;
    write_run(&args.out, &rep)?;
    save_checkpoint(&args.out.join("model.ckpt"), &model)?;
    println!(
        "final held-out PSNR {:.3} dB{}; wrote {}",
        rep.final_psnr,
        if rep.diverged { " (diverged)" } else { "" },
        args.out.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ds = Dataset::load(&args.dataset)?;
    let data = ds.training_set()?;
    let model = load_checkpoint(&args.checkpoint)?;
    let rcfg = radlog_core::render::RenderConfig {
        samples_per_ray: args.samples,
        stratified: false,
        representation_space: model.config.representation_space,
        white_background: ds.meta.white_background,
    };
    let renders = args.out.join("renders");
    std::fs::create_dir_all(&renders).with_context(|| renders.display().to_string())?;
    let names: Vec<&str> = ds.registered().map(|f| f.name.as_str()).collect();
    let mut rows = Vec::new();
    let (mut sq, mut n) = (0.0, 0usize);
    for &v in &data.held_out {
        let view = &data.views[v];
        let (img, depth) = render_image(&model, &view.camera, &rcfg, 0)?;
        let p = psnr(&img, &view.image)?;
        let stem = names[v].trim_end_matches(".png");
        write_png(&renders.join(format!("{stem}.png")), &img, 16, 65535)?;
        write_depth_png(&renders.join(format!("{stem}_depth.png")), &depth, view.camera.near, view.camera.far)?;
        let count = 3 * img.pixels.len();
        sq += radlog_core::metrics::mse(&img, &view.image)? * count as f64;
        n += count;
        rows.push(format!("{},{}", names[v], p));
    }
    if n == 0 {
        bail!("dataset has no held-out views");
    }
    let pooled = psnr_from_mse(sq / n as f64);
    let mut text = String::from("frame,psnr\n");
    for r in &rows {
        text.push_str(r);
        text.push('\n');
    }
    text.push_str(&format!("pooled,{pooled}\n"));
    std::fs::write(args.out.join("eval.csv"), text)?;
    std::fs::write(args.out.join("eval.txt"), format_kv(&[("samples_per_ray".into(), args.samples.to_string())]))?;
    println!("held-out PSNR {pooled:.3} dB over {} views", rows.len());
    Ok(())
}

fn schedule(value: &str) -> Result<Vec<usize>> {
    Ok(match value {
        "desk" => DESK_ITER_SCHEDULE.to_vec(),
        "full" => FULL_ITER_SCHEDULE.to_vec(),
        list => list
            .split(',')
            .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad iteration count {s:?}")))
            .collect::<Result<_>>()?,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    Ok(match cli.command {
        Command::Generate(a) => {
            generate(&a)?;
            ExitCode::SUCCESS
        }
        Command::Convert(a) => convert(&a)?,
        Command::Train(a) => {
            train(&a)?;
            ExitCode::SUCCESS
        }
        Command::Eval(a) => {
            eval(&a)?;
            ExitCode::SUCCESS
        }
        Command::Quality(a) => report(&quality_table(&Inputs::load(&a.dataset)?, &harness_options(&a)?, &a.out)?),
        Command::Ablation(a) => report(&scaledlog_ablation(&Inputs::load(&a.dataset)?, &harness_options(&a)?, &a.out)?),
        Command::Brightness(a) => report(&brightness_analysis(&Inputs::load(&a.dataset)?, &harness_options(&a)?, &a.out)?),
        Command::Robustness(a) => {
            let s = &a.sweep;
            report(&robustness_suite(&Inputs::load(&s.dataset[..1])?, &harness_options(s)?, a.runs, a.same_seed, &s.out)?)
        }
        Command::Iters(a) => {
            let s = &a.sweep;
            report(&iteration_sweep(&Inputs::load(&s.dataset[..1])?, &harness_options(s)?, &schedule(&a.schedule)?, &s.out)?)
        }
        Command::Compactness(a) => {
            let s = &a.sweep;
            let axis = match a.axis.as_str() {
                "width" => CompactAxis::Width,
                "grid" | "grid_budget" => CompactAxis::GridBudget,
                other => bail!("unknown axis {other:?}; use width or grid"),
            };
            let values = if a.values.is_empty() { axis.default_values() } else { a.values.clone() };
            report(&compactness_sweep(&Inputs::load(&s.dataset[..1])?, &harness_options(s)?, axis, &values, &s.out)?)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
