//! `stride-zero`: command-line front end for the network engine.
//!
//! Failures print a single `error[<kind>]: <message>` line on stderr and
//! exit with status 1. The kind is the core error tag (`syntax`,
//! `semantic`, `dimension`, `format`, ...), or `check` when a gradient
//! check exceeds its tolerance.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stride_zero_core::cost::{time_comparison, CostModel};
use stride_zero_core::io::{load_weights_file, read_labels_png, read_scene, save_weights_file, write_labels_png, write_scene};
use stride_zero_core::metrics::{boundary_ignore_mask, evaluate, EvalMode};
use stride_zero_core::net::{parse_spec, receptive_field, Inputs};
use stride_zero_core::pipeline::{augment, mean_subtract, predict_labels, synth_scene, training_set, AugmentOptions, BandMeans, TilePlan};
use stride_zero_core::trainer::{grad_check, train_loop, TrainConfig, TrainTile};
use stride_zero_core::transform::{remove_downsampling, PoolExpansion, RewriteOptions};
use stride_zero_core::{IgnoreMask, LabelImage, NetworkSpec, SceneRaster, Shape, Tensor, WeightStore};

#[derive(Parser)]
#[command(name = "stride-zero", version, about = "Fully convolutional networks without downsampling")]
struct Cli {
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a network so it no longer downsamples.
    Transform(TransformArgs),
    /// Analytical cost of shift-and-stitch versus the rewritten network.
    Cost(CostArgs),
    /// Train a network on scene directories.
    Train(TrainArgs),
    /// Label a scene with tiled inference.
    Predict(PredictArgs),
    /// Score a predicted label raster against ground truth.
    Eval(EvalArgs),
    /// Write rotated and mirrored copies of a scene.
    Augment(AugmentArgs),
    /// Compare backpropagated gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Expansion {
    Dilated,
    Dense,
}

impl From<Expansion> for PoolExpansion {
    fn from(e: Expansion) -> Self {
        match e {
            Expansion::Dilated => PoolExpansion::Dilated,
            Expansion::Dense => PoolExpansion::Dense,
        }
    }
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Rewritten network description.
    #[arg(long)]
    out: PathBuf,
    /// Downsampling factor to keep.
    #[arg(long, default_value_t = 1)]
    keep_factor: usize,
    #[arg(long, value_enum, default_value_t = Expansion::Dilated)]
    pool_expansion: Expansion,
    /// Also write the before/after table here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    /// Machine-readable `key=value` output.
    #[arg(long)]
    kv: Option<PathBuf>,
    /// Also time both methods on random weights and inputs of this extent.
    #[arg(long)]
    time: Option<usize>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Scene directory, or a directory of scene directories. Repeatable.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Output weight file.
    #[arg(long)]
    out: PathBuf,
    /// Start from these weights instead of a random initialisation.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    tile: usize,
    /// Also drop this label boundary band from the loss. Scoring ignores it
    /// regardless; training on it is what teaches small objects.
    #[arg(long, default_value_t = 0)]
    boundary_radius: usize,
    /// vaihingen, potsdam, or a class count.
    #[arg(long, default_value = "vaihingen")]
    mode: EvalMode,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    init_sigma: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a weight snapshot every this many iterations.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Loss curve file (iteration, loss); defaults to `<out>.loss.txt`.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Scene directory to label.
    #[arg(long)]
    data: PathBuf,
    /// Output palette PNG.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = stride_zero_core::pipeline::DEFAULT_TEST_TILE)]
    tile: usize,
    /// Defaults to half the network support.
    #[arg(long)]
    overlap: Option<usize>,
    /// Rewrite the network to this downsampling factor before inference.
    #[arg(long)]
    keep_factor: Option<usize>,
    /// Band means file; defaults to `<weights>.means` when present.
    #[arg(long)]
    means: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth palette PNG.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "vaihingen")]
    mode: EvalMode,
    #[arg(long, default_value_t = 3)]
    boundary_radius: usize,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    /// Scene directory.
    #[arg(long)]
    data: PathBuf,
    /// Parent directory for the augmented scenes.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    angle_step: u32,
    #[arg(long)]
    no_flips: bool,
    #[arg(long, default_value_t = 1)]
    min_size: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Check the rewritten network with this keep factor instead.
    #[arg(long)]
    keep_factor: Option<usize>,
    /// Tile edge; defaults to the smallest multiple of the stride covering the support.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 2)]
    tiles: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.3)]
    init_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure with a CLI-level kind rather than a core error.
#[derive(Debug)]
struct Tagged(&'static str, String);

impl std::fmt::Display for Tagged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Tagged {}

fn kind_of(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<stride_zero_core::Error>() {
            return e.kind();
        }
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return t.0;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

fn load_spec(path: &Path) -> Result<NetworkSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn is_scene_dir(dir: &Path) -> bool {
    dir.join(stride_zero_core::io::SCENE_IMAGE_FILE).is_file()
}

/// Scene directories named by `paths`, expanding parents one level deep.
fn scene_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if is_scene_dir(p) {
            out.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(p)
            .with_context(|| format!("listing {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| is_scene_dir(c))
            .collect();
        if children.is_empty() {
            return Err(anyhow!(Tagged("data", format!("{} holds no scene directories", p.display()))));
        }
        children.sort();
        out.extend(children);
    }
    Ok(out)
}

fn rewrite_opts(keep_factor: usize, expansion: PoolExpansion) -> RewriteOptions {
    RewriteOptions {
        keep_factor,
        pool_expansion: expansion,
    }
}

fn transform(a: TransformArgs) -> Result<()> {
    let net = load_spec(&a.spec)?;
    let (out, report) = remove_downsampling(&net, rewrite_opts(a.keep_factor, a.pool_expansion.into()))?;
    write_text(&a.out, &out.to_text())?;
    let table = report.to_string();
    print!("{table}");
    if let Some(p) = a.report {
        write_text(&p, &table)?;
    }
    Ok(())
}

fn cost(a: CostArgs) -> Result<()> {
    let net = load_spec(&a.spec)?;
    let report = CostModel::from_network(&net)?.report(a.width, a.height)?;
    print!("{report}");
    if let Some(p) = &a.kv {
        write_text(p, &report.to_key_values())?;
    }
    if let Some(size) = a.time {
        let w = WeightStore::<f32>::init(&net, 0.01, a.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let inputs: Inputs<f32> = net
            .input_branches()
            .into_iter()
            .map(|(name, c)| {
                let t = Tensor::from_fn(Shape::new(1, c, size, size), |_, _, _, _| rng.gen_range(-1.0..1.0));
                t.map(|t| (name.to_string(), t))
            })
            .collect::<stride_zero_core::Result<_>>()?;
        let t = time_comparison(&net, &w, &inputs, a.runs)?;
        println!(
            "timing {size}x{size}, median of {}: shift-and-stitch {:.4} s, no downsampling {:.4} s, ratio {:.2}",
            t.runs,
            t.stitch,
            t.no_ds,
            t.ratio()
        );
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let net = load_spec(&a.spec)?;
    let dirs = scene_dirs(&a.data)?;
    let mut scenes = dirs
        .iter()
        .map(|d| read_scene(d).with_context(|| format!("reading scene {}", d.display())))
        .collect::<Result<Vec<SceneRaster>>>()?;
    let means = mean_subtract(&mut scenes)?;
    let tiles = training_set(&scenes, &net, a.tile, a.boundary_radius, a.mode)?;
    if tiles.is_empty() {
        return Err(anyhow!(Tagged(
            "data",
            format!("no {}px training tiles fit in the given scenes", a.tile)
        )));
    }
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        momentum: a.momentum.unwrap_or(d.momentum),
        weight_decay: a.weight_decay.unwrap_or(d.weight_decay),
        dropout: a.dropout.unwrap_or(d.dropout),
        batch: a.batch.unwrap_or(d.batch),
        iterations: a.iterations.unwrap_or(d.iterations),
        init_sigma: a.init_sigma.unwrap_or(d.init_sigma),
        log_every: a.log_every.unwrap_or(d.log_every),
        seed: a.seed,
        ..d
    };
    let init = match &a.weights {
        Some(p) => load_weights_file(p, Some(&net))?,
        None => WeightStore::init(&net, cfg.init_sigma, cfg.seed)?,
    };
    log::info!("{} tiles from {} scenes, {} iterations", tiles.len(), scenes.len(), cfg.iterations);
    let mut snapshot_err = None;
    let outcome = train_loop(&net, init, &tiles, &cfg, |iter, _, w| {
        if let Some(every) = a.snapshot_every.filter(|&e| e > 0) {
            if (iter + 1) % every == 0 && snapshot_err.is_none() {
                let path = with_suffix(&a.out, &format!(".iter{}", iter + 1));
                if let Err(e) = save_weights_file(&path, w) {
                    snapshot_err = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = snapshot_err {
        return Err(e).context("writing a weight snapshot");
    }
    save_weights_file(&a.out, &outcome.weights)?;
    write_text(&with_suffix(&a.out, ".means"), &means.to_text())?;
    let curve: String = outcome.curve.iter().map(|(i, l)| format!("{i} {l:.6}\n")).collect();
    write_text(&a.curve.unwrap_or_else(|| with_suffix(&a.out, ".loss.txt")), &curve)?;
    if let Some((i, l)) = outcome.curve.last() {
        println!("trained {i} iterations, final loss {l:.5}");
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut net = load_spec(&a.spec)?;
    let weights = load_weights_file(&a.weights, Some(&net))?;
    if let Some(k) = a.keep_factor {
        net = remove_downsampling(&net, rewrite_opts(k, PoolExpansion::Dilated))?.0;
    }
    let mut scene = read_scene(&a.data).with_context(|| format!("reading scene {}", a.data.display()))?;
    let means_path = a.means.clone().unwrap_or_else(|| with_suffix(&a.weights, ".means"));
    if means_path.is_file() {
        let text = fs::read_to_string(&means_path).with_context(|| format!("reading {}", means_path.display()))?;
        BandMeans::from_text(&text)?.apply(&mut scene)?;
    } else if a.means.is_some() {
        bail!(Tagged("io", format!("{} does not exist", means_path.display())));
    } else {
        log::warn!("no band means at {}; using raw values", means_path.display());
    }
    let (h, w) = (scene.height(), scene.width());
    let plan = match a.overlap {
        Some(ov) => TilePlan::new(h, w, a.tile, ov, receptive_field(&net)?.stride)?,
        None => TilePlan::for_network(&net, h, w, a.tile)?,
    };
    log::info!("{} tiles of {}px over {w}x{h}", plan.len(), a.tile);
    let labels = predict_labels(&net, &weights, &scene.bands, &plan)?;
    write_labels_png(&a.out, &labels)?;
    println!("wrote {w}x{h} labels to {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_labels_png(&a.pred)?;
    let gt = read_labels_png(&a.gt)?;
    let mask = boundary_ignore_mask(&gt, a.boundary_radius);
    let report = evaluate(&pred, &gt, &mask, a.mode)?;
    let text = report.to_string();
    print!("{text}");
    if let Some(p) = a.report {
        write_text(&p, &text)?;
    }
    Ok(())
}

fn augment_cmd(a: AugmentArgs) -> Result<()> {
    let scene = read_scene(&a.data).with_context(|| format!("reading scene {}", a.data.display()))?;
    let opts = AugmentOptions {
        angle_step: a.angle_step,
        flips: !a.no_flips,
        min_size: a.min_size,
    };
    let result = augment(&scene, &opts)?;
    let stem = a
        .data
        .file_name()
        .map_or_else(|| "scene".to_string(), |s| s.to_string_lossy().into_owned());
    for aug in &result.outputs {
        let flip = if aug.flipped { "_f" } else { "" };
        let dir = a.out.join(format!("{stem}_a{:03}{flip}", aug.angle));
        write_scene(&dir, &aug.scene)?;
    }
    println!("wrote {} augmented scenes, skipped {}", result.outputs.len(), result.skipped.len());
    for (angle, flipped, why) in &result.skipped {
        println!("skipped {angle} deg{}: {why}", if *flipped { " mirrored" } else { "" });
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut net = load_spec(&a.spec)?;
    if let Some(k) = a.keep_factor {
        net = remove_downsampling(&net, rewrite_opts(k, PoolExpansion::Dilated))?.0;
    }
    let rf = receptive_field(&net)?;
    let size = a.size.unwrap_or_else(|| rf.support.div_ceil(rf.stride).max(1) * rf.stride);
    let classes = net
        .classes()
        .ok_or_else(|| anyhow!(Tagged("semantic", "gradient checks need a `classes` line".into())))?;
    let w = WeightStore::<f64>::init(&net, a.init_sigma, a.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let tiles = (0..a.tiles)
        .map(|_| {
            let inputs = net
                .input_branches()
                .into_iter()
                .map(|(name, c)| {
                    let t = Tensor::from_fn(Shape::new(1, c, size, size), |_, _, _, _| rng.gen_range(-1.0..1.0))?;
                    Ok((name.to_string(), t))
                })
                .collect::<stride_zero_core::Result<Inputs<f64>>>()?;
            let labels = (0..size * size).map(|_| rng.gen_range(0..classes) as u8).collect();
            Ok(TrainTile {
                inputs,
                labels: LabelImage::new(size, size, labels)?,
                mask: IgnoreMask::none(size, size),
            })
        })
        .collect::<stride_zero_core::Result<Vec<_>>>()?;
    let r = grad_check(&net, &w, &tiles, a.eps)?;
    println!(
        "checked {} parameters ({} skipped at kinks), max relative error {:.3e} at {}",
        r.checked, r.skipped, r.max_rel_error, r.worst
    );
    if r.max_rel_error >= a.tolerance {
        bail!(Tagged(
            "check",
            format!("max relative error {:.3e} exceeds {:.1e}", r.max_rel_error, a.tolerance)
        ));
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let scene = synth_scene(a.seed, a.size)?;
    write_scene(&a.out, &scene)?;
    println!("wrote {}x{} synthetic scene to {}", a.size, a.size, a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform(a) => transform(a),
        Command::Cost(a) => cost(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Augment(a) => augment_cmd(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Core errors embed their source in the message; skip repeats.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error[{}]: {msg}", kind_of(&e));
            ExitCode::FAILURE
        }
    }
}
