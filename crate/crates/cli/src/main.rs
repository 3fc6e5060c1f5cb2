//! `crackdet`: the batch pipeline from raw modalities to crack maps.
//!
//! Exit status: 0 success, 2 bad arguments, 3 missing or corrupt input,
//! 4 contract violation, 5 numeric failure. Failures also print one JSON
//! line on stderr.

mod config;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crackdet::bctf::{
    fit, format_selection, predict, selection_report, threshold_map, BctfPosterior, Dataset, Hyper,
};
use crackdet::features::{default_manifest, extract_features, FeatureManifest, FeatureStack, ModalitySet};
use crackdet::preprocess::{
    align_translation, apply_offset, clahe, crude_crack_map, mca_separate, xray_flatten, McaParams, CLAHE_CLIP,
    CLAHE_TILES, CRUDE_QUANTILE, CRUDE_SIGMA,
};
use crackdet::quantize::{assemble_training, FeatureMatrix, LabelMask, QuantizerSpec, DEFAULT_BINS};
use crackdet::raster::{decode_fr32, decode_pnm, encode_fr32, encode_pnm, PnmDepth, Raster};
use crackdet::synth::{overlay, synth_generate, SynthSpec};
use serde_json::json;

use config::ConfigFile;
use error::{CliError, CliResult};
use manifest::{read_file, write_file, RunManifest};

#[derive(Parser)]
#[command(name = "crackdet", version, about = "Multimodal crack detection pipeline")]
struct Cli {
    /// Seed for every random choice in the stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with default parameters; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic IR/VIS/X-ray scene with its label mask.
    Synth(SynthArgs),
    /// Estimate the translation between two modalities from crude crack maps.
    Align(AlignArgs),
    /// Condition one image: X-ray flattening, texture removal, CLAHE.
    Preprocess(PreprocessArgs),
    /// Evaluate the filter bank on aligned modalities.
    Features(FeaturesArgs),
    /// Fit per-feature quantile bins.
    QuantizeFit(QuantizeFitArgs),
    /// Bin a feature stack into a categorical matrix.
    QuantizeApply(QuantizeApplyArgs),
    /// Fit the classifier on labeled pixels.
    Train(TrainArgs),
    /// Crack probability and binary maps for every pixel.
    Predict(PredictArgs),
    /// Report predictors with inclusion probability above one half.
    Select(SelectArgs),
    /// Paint a binary crack map in red over grayscale VIS.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for ir.pgm, vis.ppm, xray.pgm and labels.pgm.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    cracks: usize,
    #[arg(long, default_value_t = 6)]
    distractors: usize,
    #[arg(long, default_value_t = 1)]
    min_width: u8,
    #[arg(long, default_value_t = 3)]
    max_width: u8,
    /// Noise σ applied to every modality.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    moving: PathBuf,
    /// Search radius in pixels.
    #[arg(long)]
    radius: Option<usize>,
    /// Offset JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the moving image translated onto the reference.
    #[arg(long)]
    aligned: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Subtract the background blurred at this σ.
    #[arg(long)]
    flatten_sigma: Option<f64>,
    /// Drop the texture layer found by morphological component analysis.
    #[arg(long)]
    remove_texture: bool,
    /// Contrast-limited adaptive histogram equalization.
    #[arg(long)]
    clahe: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    ir: PathBuf,
    #[arg(long)]
    vis: PathBuf,
    #[arg(long)]
    xray: PathBuf,
    /// Manifest JSON; the 208-entry default when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// FR32 stack with one channel per feature.
    #[arg(long)]
    out: PathBuf,
    /// Where to record the manifest used; `<out>.manifest.json` by default.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct StackInput {
    #[arg(long)]
    features: PathBuf,
    /// Defaults to `<features>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeFitArgs {
    #[command(flatten)]
    stack: StackInput,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QuantizeApplyArgs {
    #[command(flatten)]
    stack: StackInput,
    #[arg(long)]
    quantizer: PathBuf,
    /// BFM1 matrix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    rbar: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Pair birth/death proposals per sweep.
    #[arg(long)]
    pair_moves: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Keep at most this many labeled pixels per class.
    #[arg(long)]
    per_class: Option<usize>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Posterior JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    posterior: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    /// Image width; the matrix rows are pixels in row-major order.
    #[arg(long)]
    width: usize,
    #[arg(long)]
    threshold: Option<f64>,
    /// Probability map (FR32, or 16-bit PGM by extension).
    #[arg(long)]
    prob_out: PathBuf,
    /// Binary crack map (PGM, crack = white).
    #[arg(long)]
    map_out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    posterior: PathBuf,
    /// Feature manifest used to describe predictors.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    vis: PathBuf,
    /// Binary crack map; nonzero pixels are cracks.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn has_extension(path: &Path, ext: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ext.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// FR32 or PNM, chosen by content.
fn read_image(path: &Path) -> CliResult<Raster<f64>> {
    let bytes = read_file(path)?;
    let image = if bytes.starts_with(b"FR32") { decode_fr32(&bytes) } else { decode_pnm(&bytes) };
    image.map_err(|e| CliError::from(e).with_path(path))
}

/// PNM for `.pgm`/`.ppm` paths, FR32 otherwise.
fn write_image(path: &Path, image: &Raster<f64>) -> CliResult<()> {
    let bytes = if has_extension(path, &["pgm", "ppm", "pnm"]) {
        encode_pnm(image, PnmDepth::Sixteen)?
    } else {
        encode_fr32(image)
    };
    write_file(path, &bytes)
}

fn read_manifest(path: &Path) -> CliResult<FeatureManifest> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "manifest is not UTF-8"))?;
    FeatureManifest::from_json(&text).map_err(|e| CliError::from(e).with_path(path))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

fn read_stack(input: &StackInput) -> CliResult<(FeatureStack<f64>, PathBuf)> {
    let manifest_path = input.manifest.clone().unwrap_or_else(|| sidecar(&input.features, ".manifest.json"));
    let manifest = read_manifest(&manifest_path)?;
    let bytes = read_file(&input.features)?;
    let stack = FeatureStack::from_fr32(&bytes, manifest).map_err(|e| CliError::from(e).with_path(&input.features))?;
    Ok((stack, manifest_path))
}

fn read_matrix(path: &Path) -> CliResult<FeatureMatrix> {
    FeatureMatrix::from_bfm1(&read_file(path)?).map_err(|e| CliError::from(e).with_path(path))
}

fn read_posterior(path: &Path) -> CliResult<BctfPosterior> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| CliError::format(path, "posterior is not UTF-8"))?;
    BctfPosterior::from_json(&text).map_err(|e| CliError::from(e).with_path(path))
}

fn cmd_synth(args: &SynthArgs, seed: u64) -> CliResult<()> {
    let spec = SynthSpec {
        width: args.width,
        height: args.height,
        cracks: args.cracks,
        crack_width: (args.min_width, args.max_width),
        distractors: args.distractors,
        noise: [args.noise; 3],
        seed,
        ..SynthSpec::default()
    };
    let (set, labels) = synth_generate(&spec)?;
    let paths = ["ir.pgm", "vis.ppm", "xray.pgm", "labels.pgm"].map(|f| args.out.join(f));
    write_image(&paths[0], &set.ir)?;
    write_image(&paths[1], &set.vis)?;
    write_image(&paths[2], &set.xray)?;
    write_file(&paths[3], &labels.to_pgm())?;
    let mut run = RunManifest::new("synth", serde_json::to_value(&spec)?);
    for p in &paths {
        run = run.output(p)?;
    }
    run.write()?;
    Ok(())
}

fn cmd_align(args: &AlignArgs, cfg: &ConfigFile) -> CliResult<()> {
    let radius = args.radius.or(cfg.radius).unwrap_or(10);
    let reference = crackdet::raster::to_gray(&read_image(&args.reference)?)?;
    let moving_full = read_image(&args.moving)?;
    let moving = crackdet::raster::to_gray(&moving_full)?;
    let a = crude_crack_map(&reference, CRUDE_SIGMA, CRUDE_QUANTILE)?;
    let b = crude_crack_map(&moving, CRUDE_SIGMA, CRUDE_QUANTILE)?;
    let offset = align_translation(&a, &b, radius)?;
    write_file(&args.out, (serde_json::to_string_pretty(&offset)? + "\n").as_bytes())?;
    let mut run = RunManifest::new("align", json!({ "radius": radius, "sigma": CRUDE_SIGMA, "quantile": CRUDE_QUANTILE }))
        .input(&args.reference)?
        .input(&args.moving)?
        .output(&args.out)?;
    if let Some(path) = &args.aligned {
        write_image(path, &apply_offset(&moving_full, &offset))?;
        run = run.output(path)?;
    }
    run.write()?;
    Ok(())
}

/// Applies `f` to every channel independently.
fn per_channel(image: &Raster<f64>, f: impl Fn(&Raster<f64>) -> crackdet::Result<Raster<f64>>) -> CliResult<Raster<f64>> {
    let planes: Vec<Raster<f64>> = (0..image.channels()).map(|c| f(&image.channel(c))).collect::<Result<_, _>>()?;
    if planes.len() == 1 {
        return Ok(planes.into_iter().next().expect("one plane"));
    }
    let mut samples = Vec::with_capacity(image.len());
    for i in 0..image.width() * image.height() {
        samples.extend(planes.iter().map(|p| p.samples()[i]));
    }
    Ok(Raster::new(image.width(), image.height(), planes.len(), samples)?)
}

fn cmd_preprocess(args: &PreprocessArgs, cfg: &ConfigFile) -> CliResult<()> {
    let flatten = args.flatten_sigma.or(cfg.flatten_sigma);
    let remove_texture = args.remove_texture || cfg.remove_texture.unwrap_or(false);
    let use_clahe = args.clahe || cfg.clahe.unwrap_or(false);
    if flatten.is_some_and(|s| s.is_nan() || s <= 0.0) {
        return Err(CliError::bad_args("--flatten-sigma must be positive"));
    }
    let mut image = read_image(&args.input)?;
    if let Some(sigma) = flatten {
        image = per_channel(&image, |r| xray_flatten(r, sigma))?;
    }
    if remove_texture {
        image = per_channel(&image, |r| Ok(mca_separate(r, McaParams::default())?.cartoon))?;
    }
    if use_clahe {
        image = per_channel(&image, |r| clahe(r, CLAHE_TILES, CLAHE_TILES, CLAHE_CLIP))?;
    }
    write_image(&args.output, &image)?;
    RunManifest::new(
        "preprocess",
        json!({
            "flatten_sigma": flatten,
            "remove_texture": remove_texture,
            "clahe": use_clahe,
            "clahe_tiles": CLAHE_TILES,
            "clahe_clip": CLAHE_CLIP,
        }),
    )
    .input(&args.input)?
    .output(&args.output)?
    .write()?;
    Ok(())
}

fn cmd_features(args: &FeaturesArgs) -> CliResult<()> {
    let manifest = match &args.manifest {
        Some(p) => read_manifest(p)?,
        None => default_manifest(),
    };
    let set = ModalitySet::new(read_image(&args.ir)?, read_image(&args.vis)?, read_image(&args.xray)?)?;
    if set.vis.channels() != 3 {
        return Err(CliError::contract("VIS must be a color (3-channel) image"));
    }
    let stack = extract_features(&set, &manifest)?;
    let manifest_out = args.manifest_out.clone().unwrap_or_else(|| sidecar(&args.out, ".manifest.json"));
    write_file(&args.out, &stack.to_fr32())?;
    write_file(&manifest_out, (manifest.to_json()? + "\n").as_bytes())?;
    let mut run = RunManifest::new("features", json!({ "entries": manifest.len() }))
        .input(&args.ir)?
        .input(&args.vis)?
        .input(&args.xray)?;
    if let Some(p) = &args.manifest {
        run = run.input(p)?;
    }
    run.output(&args.out)?.output(&manifest_out)?.write()?;
    Ok(())
}

fn cmd_quantize_fit(args: &QuantizeFitArgs, cfg: &ConfigFile) -> CliResult<()> {
    let bins = args.bins.or(cfg.bins).unwrap_or(DEFAULT_BINS);
    if bins < 2 {
        return Err(CliError::bad_args(format!("--bins must be at least 2, got {bins}")));
    }
    let (stack, manifest_path) = read_stack(&args.stack)?;
    let spec = QuantizerSpec::fit(&stack, bins)?;
    for id in spec.degenerate() {
        eprintln!("warning: feature {id} is constant and gets a single category");
    }
    write_file(&args.out, (spec.to_json()? + "\n").as_bytes())?;
    RunManifest::new("quantize-fit", json!({ "bins": bins }))
        .input(&args.stack.features)?
        .input(&manifest_path)?
        .output(&args.out)?
        .write()?;
    Ok(())
}

fn cmd_quantize_apply(args: &QuantizeApplyArgs) -> CliResult<()> {
    let (stack, manifest_path) = read_stack(&args.stack)?;
    let text = String::from_utf8(read_file(&args.quantizer)?)
        .map_err(|_| CliError::format(&args.quantizer, "quantizer is not UTF-8"))?;
    let spec = QuantizerSpec::from_json(&text).map_err(|e| CliError::from(e).with_path(&args.quantizer))?;
    let matrix = spec.apply(&stack)?;
    write_file(&args.out, &matrix.to_bfm1())?;
    RunManifest::new("quantize-apply", json!({ "rows": matrix.n(), "predictors": matrix.p() }))
        .input(&args.stack.features)?
        .input(&manifest_path)?
        .input(&args.quantizer)?
        .output(&args.out)?
        .write()?;
    Ok(())
}

fn resolve_hyper(args: &HyperArgs, cfg: &ConfigFile, seed: u64) -> Hyper {
    let base = Hyper::default();
    Hyper {
        r: args.r.or(cfg.r).unwrap_or(base.r),
        r_bar: args.rbar.or(cfg.rbar).unwrap_or(base.r_bar),
        iterations: args.iters.or(cfg.iters).unwrap_or(base.iterations),
        burn_in: args.burnin.or(cfg.burnin).unwrap_or(base.burn_in),
        thin: args.thin.or(cfg.thin).unwrap_or(base.thin),
        pair_moves: args.pair_moves.or(cfg.pair_moves).unwrap_or(base.pair_moves),
        seed,
        ..base
    }
}

fn cmd_train(args: &TrainArgs, cfg: &ConfigFile, seed: u64) -> CliResult<()> {
    let hyper = resolve_hyper(&args.hyper, cfg, seed);
    let per_class = args.per_class.or(cfg.per_class).unwrap_or(1000);
    let matrix = read_matrix(&args.matrix)?;
    hyper.validate(matrix.p()).map_err(|e| CliError::bad_args(e.to_string()))?;
    let labels = LabelMask::read(&args.labels).map_err(|e| CliError::from(e).with_path(&args.labels))?;
    let training = assemble_training(&matrix, &labels)?.subsample(per_class, seed);
    let posterior = fit(&Dataset::new(&training.x, &training.y)?, &hyper)?;
    write_file(&args.out, (posterior.to_json()? + "\n").as_bytes())?;
    RunManifest::new(
        "train",
        json!({ "hyper": serde_json::to_value(&hyper)?, "per_class": per_class, "training_rows": training.len() }),
    )
    .input(&args.matrix)?
    .input(&args.labels)?
    .output(&args.out)?
    .write()?;
    Ok(())
}

fn cmd_predict(args: &PredictArgs, cfg: &ConfigFile) -> CliResult<()> {
    let threshold = args.threshold.or(cfg.threshold).unwrap_or(0.5);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::bad_args(format!("--threshold {threshold} outside [0, 1]")));
    }
    let posterior = read_posterior(&args.posterior)?;
    let matrix = read_matrix(&args.matrix)?;
    if args.width == 0 || matrix.n() % args.width != 0 {
        return Err(CliError::contract(format!("{} rows do not form an image of width {}", matrix.n(), args.width)));
    }
    let height = matrix.n() / args.width;
    let prob = predict(&posterior, &matrix)?;
    let crack = threshold_map(&prob, threshold)?;
    let prob_image = Raster::new(args.width, height, 1, prob)?;
    let map_image = Raster::new(args.width, height, 1, crack.iter().map(|&c| f64::from(u8::from(c))).collect())?;
    write_image(&args.prob_out, &prob_image)?;
    write_file(&args.map_out, &encode_pnm(&map_image, PnmDepth::Eight)?)?;
    RunManifest::new(
        "predict",
        json!({ "threshold": threshold, "width": args.width, "height": height, "crack_pixels": crack.iter().filter(|&&c| c).count() }),
    )
    .input(&args.posterior)?
    .input(&args.matrix)?
    .output(&args.prob_out)?
    .output(&args.map_out)?
    .write()?;
    Ok(())
}

fn cmd_select(args: &SelectArgs) -> CliResult<()> {
    let posterior = read_posterior(&args.posterior)?;
    let manifest = args.manifest.as_deref().map(read_manifest).transpose()?;
    if let Some(m) = &manifest {
        if m.len() != posterior.d.len() {
            return Err(CliError::contract(format!(
                "manifest lists {} features, posterior has {} predictors",
                m.len(),
                posterior.d.len()
            )));
        }
    }
    let report = format_selection(&selection_report(&posterior, manifest.as_ref()));
    print!("{report}");
    write_file(&args.out, report.as_bytes())?;
    let mut run = RunManifest::new("select", json!({ "inclusion_cutoff": 0.5 })).input(&args.posterior)?;
    if let Some(p) = &args.manifest {
        run = run.input(p)?;
    }
    run.output(&args.out)?.write()?;
    Ok(())
}

fn cmd_overlay(args: &OverlayArgs) -> CliResult<()> {
    let vis = read_image(&args.vis)?;
    let map = read_image(&args.map)?;
    if map.channels() != 1 || map.width() != vis.width() || map.height() != vis.height() {
        return Err(CliError::contract("crack map must be a gray image matching VIS"));
    }
    let crack: Vec<bool> = map.samples().iter().map(|&v| v > 0.5).collect();
    let out = overlay(&vis, &crack)?;
    write_file(&args.out, &encode_pnm(&out, PnmDepth::Eight)?)?;
    RunManifest::new("overlay", json!({}))
        .input(&args.vis)?
        .input(&args.map)?
        .output(&args.out)?
        .write()?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, seed),
        Command::Align(a) => cmd_align(a, &cfg),
        Command::Preprocess(a) => cmd_preprocess(a, &cfg),
        Command::Features(a) => cmd_features(a),
        Command::QuantizeFit(a) => cmd_quantize_fit(a, &cfg),
        Command::QuantizeApply(a) => cmd_quantize_apply(a),
        Command::Train(a) => cmd_train(a, &cfg, seed),
        Command::Predict(a) => cmd_predict(a, &cfg),
        Command::Select(a) => cmd_select(a),
        Command::Overlay(a) => cmd_overlay(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            let err = CliError::bad_args(e.kind().to_string());
            eprintln!("{}", err.to_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
