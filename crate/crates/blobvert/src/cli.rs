//! The `blobvert` command line.
//!
//! Exit codes: 0 success, 1 runtime failure (oracle, IO while writing),
//! 2 bad input (usage, missing or malformed files, invalid config).

use std::collections::HashSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use blobvert_core::blobs::{build_dictionary, render_symmetric};
use blobvert_core::canvas::{GrayCanvas, RgbCanvas};
use blobvert_core::eval::{evaluate_set, gray_tolerance, mean_curve, EvalError};
use blobvert_core::oracle::{Oracle, OracleError};
use blobvert_core::recovery::{recover_with_observer, Recovery, RecoveryError, TraceSummary};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{env_seed, load_oracle_spec, Mode, Overrides, ResolvedConfig, RunConfig};
use crate::emb::{read_embedding, write_embedding};
use crate::image_io::{load_init_image, load_rgb, save_image, ImageFormat};
use crate::report::{write_curve, write_eval, write_tolerance};
use crate::server::{serve, ServerConfig, DEFAULT_MAX_BATCH};
use crate::spec::OracleSpec;
use crate::synthetic;
use crate::trace_io::{read_trace, TraceWriter};

#[derive(Debug, Parser)]
#[command(
    name = "blobvert",
    version,
    about = "Recover face images from a black-box embedding oracle with Gaussian blobs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct an image from a target embedding.
    Recover(RecoverArgs),
    /// Embed image files, writing one .emb file per image.
    Embed(EmbedArgs),
    /// Score reconstructions under the attacked oracle and a critic.
    Eval(EvalArgs),
    /// Similarity between color images and their grayscale versions.
    GrayTolerance(GrayToleranceArgs),
    /// List (and optionally render) the initialization dictionary.
    BuildDict(BuildDictArgs),
    /// Serve a synthetic oracle over HTTP.
    ServeOracle(ServeArgs),
    /// Mean similarity-vs-queries curve over several traces.
    Curve(CurveArgs),
    /// Write a procedural face image.
    SynthFace(SynthFaceArgs),
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Run config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target embedding (.emb).
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Oracle spec file; replaces the config's [oracle] section.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Total query budget, initialization included.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Overrides BLOBVERT_SEED and the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from this image instead of the dictionary.
    #[arg(long)]
    pub init_face: Option<PathBuf>,
    /// Use the cosine-only loss.
    #[arg(long)]
    pub cosine_only: bool,
    /// No progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Oracle spec file.
    #[arg(long)]
    pub oracle: PathBuf,
    /// Directory for the .emb files, named after the images.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Resize images to the oracle's input size.
    #[arg(long)]
    pub resize: bool,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Spec of the oracle the reconstructions were attacked against.
    #[arg(long)]
    pub attacked: PathBuf,
    /// Spec of the independent critic.
    #[arg(long)]
    pub critic: PathBuf,
    /// CSV with `original,reconstruction` columns; relative paths resolve
    /// against the CSV's directory.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// A single pair; may be repeated.
    #[arg(long, num_args = 2, value_names = ["ORIGINAL", "RECONSTRUCTION"])]
    pub pair: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub resize: bool,
}

#[derive(Debug, Args)]
pub struct GrayToleranceArgs {
    /// Spec of an oracle that accepts color input.
    #[arg(long)]
    pub oracle: PathBuf,
    /// Also test this many generated saturated-color images.
    #[arg(long, default_value_t = 0)]
    pub synthetic: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildDictArgs {
    /// Run config whose [dictionary] section and oracle size are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write every entry as an image under `<out>/dict/`.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Oracle spec file (synthetic kinds only).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, default_value_t = DEFAULT_MAX_BATCH)]
    pub max_batch: usize,
    /// Delay added to every /embed answer.
    #[arg(long)]
    pub latency_ms: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Trace files (JSONL).
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthFaceArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 112)]
    pub width: usize,
    #[arg(long, default_value_t = 112)]
    pub height: usize,
    /// Output image (.pgm or .png).
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

trait OrExit<T> {
    fn input_err(self) -> CliResult<T>;
    fn runtime_err(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn input_err(self) -> CliResult<T> {
        self.map_err(CliError::input)
    }

    fn runtime_err(self) -> CliResult<T> {
        self.map_err(CliError::runtime)
    }
}

/// Oracle failures caused by the caller's data or spec exit with 2.
fn oracle_err(e: OracleError) -> CliError {
    match e {
        OracleError::InputSize { .. }
        | OracleError::PixelRange
        | OracleError::Unsupported(_)
        | OracleError::InvalidParameters(_) => CliError::input(e),
        _ => CliError::runtime(e),
    }
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::Oracle(o) => oracle_err(o),
        EvalError::Empty | EvalError::NoBins => CliError::input(e),
        EvalError::Objective(_) => CliError::runtime(e),
    }
}

fn recovery_err(e: RecoveryError) -> CliError {
    match e {
        RecoveryError::Oracle(o) => oracle_err(o),
        RecoveryError::Objective(_) => CliError::runtime(e),
        _ => CliError::input(e),
    }
}

pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CliResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(CliError {
                    code: 2,
                    error: anyhow!("invalid arguments"),
                })
            };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match cli.command {
        Command::Recover(a) => cmd_recover(&a, &argv),
        Command::Embed(a) => cmd_embed(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::GrayTolerance(a) => cmd_gray_tolerance(&a),
        Command::BuildDict(a) => cmd_build_dict(&a),
        Command::ServeOracle(a) => cmd_serve(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::SynthFace(a) => cmd_synth_face(&a),
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .runtime_err()
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime_err()
}

fn spec_from(path: &Path) -> CliResult<OracleSpec> {
    load_oracle_spec(path).input_err()
}

#[derive(Serialize)]
struct RecoverSummary<'a> {
    /// The command line, verbatim.
    command: &'a [String],
    status: &'static str,
    error: Option<String>,
    budget: u64,
    mode: Mode,
    seed: u64,
    target: String,
    reconstruction: &'static str,
    trace: &'static str,
    oracle_images_sent: u64,
    elapsed_secs: f64,
    run: &'a TraceSummary,
    config: &'a ResolvedConfig,
}

fn cmd_recover(args: &RecoverArgs, argv: &[String]) -> CliResult {
    let file = match &args.config {
        Some(path) => RunConfig::load(path).input_err()?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: args.seed,
        oracle: args.oracle.as_deref().map(spec_from).transpose()?,
        query_budget: args.budget,
        batch_size: args.batch_size,
        mode: args.mode,
        init_face: args.init_face.clone(),
        cosine_only: args.cosine_only.then_some(true),
    };
    let resolved = file
        .resolve(&overrides, env_seed().as_deref())
        .input_err()?;
    let target = read_embedding(&args.target).input_err()?;
    let size = resolved.oracle.input_size();
    let init_image = resolved
        .init_face
        .as_deref()
        .map(|p| load_init_image(p, size, resolved.resize_init))
        .transpose()
        .input_err()?;
    let oracle = resolved.oracle.build().map_err(oracle_err)?;
    let config = &resolved.recovery;
    if config.query_budget < config.init_cost() {
        return Err(recovery_err(RecoveryError::BudgetBelowInit {
            budget: config.query_budget,
            init_cost: config.init_cost(),
        }));
    }

    create_dir(&args.out)?;
    let trace_path = args.out.join("trace.jsonl");
    let mut writer = TraceWriter::create(&trace_path).runtime_err()?;
    let mut write_failure = None;
    let iterations = config.iterations();
    let every = (iterations / 20).max(1);
    let started = Instant::now();
    let sent_before = oracle.images_sent();
    let outcome = recover_with_observer(&*oracle, &target, config, init_image.as_ref(), |record| {
        if write_failure.is_none() {
            if let Err(e) = writer.write(record) {
                write_failure = Some(e);
            }
        }
        if !args.quiet && (record.iter + 1) % every == 0 {
            eprintln!(
                "iter {}/{}  queries {}  cos {:.4}",
                record.iter + 1,
                iterations,
                record.queries,
                record.cos
            );
        }
    });
    let elapsed = started.elapsed().as_secs_f64();
    writer.finish().runtime_err()?;
    if let Some(e) = write_failure {
        return Err(CliError::runtime(e));
    }

    let (recovery, error): (Recovery, Option<CliError>) = match outcome {
        Ok(r) => (r, None),
        Err(failure) => match failure.partial {
            Some(partial) => (*partial, Some(recovery_err(failure.error))),
            None => return Err(recovery_err(failure.error)),
        },
    };
    save_image(
        &recovery.reconstruction.clamp_unit(),
        &args.out.join("recon.pgm"),
        ImageFormat::Pgm,
    )
    .runtime_err()?;
    let summary = RecoverSummary {
        command: argv,
        status: if error.is_some() { "aborted" } else { "ok" },
        error: error.as_ref().map(|e| format!("{:#}", e.error)),
        budget: config.query_budget,
        mode: resolved.mode,
        seed: resolved.seed,
        target: args.target.display().to_string(),
        reconstruction: "recon.pgm",
        trace: "trace.jsonl",
        oracle_images_sent: oracle.images_sent() - sent_before,
        elapsed_secs: elapsed,
        run: &recovery.trace.summary,
        config: &resolved,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_text(&args.out.join("summary.json"), &text)?;
    write_text(&args.out.join("config.resolved.json"), &resolved.to_json())?;
    if let Some(e) = error {
        return Err(e);
    }
    if !args.quiet {
        if let Some(s) = recovery.trace.summary.final_similarity {
            eprintln!(
                "final similarity {s:.4} after {} queries",
                recovery.trace.summary.total_queries
            );
        }
    }
    Ok(())
}

/// Output names for `paths`, refusing two images with the same stem.
fn emb_names(paths: &[PathBuf]) -> CliResult<Vec<String>> {
    let mut seen = HashSet::new();
    paths
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .ok_or_else(|| CliError::input(anyhow!("{}: no file name", p.display())))?
                .to_string_lossy()
                .into_owned();
            if !seen.insert(stem.clone()) {
                return Err(CliError::input(anyhow!(
                    "{}: another input already maps to {stem}.emb",
                    p.display()
                )));
            }
            Ok(format!("{stem}.emb"))
        })
        .collect()
}

fn cmd_embed(args: &EmbedArgs) -> CliResult {
    let spec = spec_from(&args.oracle)?;
    let names = emb_names(&args.images)?;
    let size = spec.input_size();
    let images = args
        .images
        .iter()
        .map(|p| load_init_image(p, size, args.resize))
        .collect::<Result<Vec<_>, _>>()
        .input_err()?;
    let oracle = spec.build().map_err(oracle_err)?;
    create_dir(&args.out_dir)?;
    for (chunk, names) in images.chunks(64).zip(names.chunks(64)) {
        let embeddings = oracle.embed_batch(chunk).map_err(oracle_err)?;
        for (e, name) in embeddings.iter().zip(names) {
            write_embedding(&args.out_dir.join(name), e).runtime_err()?;
        }
    }
    println!(
        "wrote {} embeddings to {}",
        images.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn read_pairs_csv(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .input_err()?;
    let headers = reader.headers().input_err()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::input(anyhow!("{}: missing column {name:?}", path.display())))
    };
    let (oi, ri) = (column("original")?, column("reconstruction")?);
    let resolve = |s: &str| {
        let p = PathBuf::from(s.trim());
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    reader
        .records()
        .map(|r| {
            let r = r
                .with_context(|| format!("cannot read {}", path.display()))
                .input_err()?;
            match (r.get(oi), r.get(ri)) {
                (Some(o), Some(rc)) => Ok((resolve(o), resolve(rc))),
                _ => Err(CliError::input(anyhow!("{}: short row", path.display()))),
            }
        })
        .collect()
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    let attacked_spec = spec_from(&args.attacked)?;
    let critic_spec = spec_from(&args.critic)?;
    if attacked_spec == critic_spec {
        eprintln!("warning: the critic is the attacked oracle; both columns will be identical");
    }
    let mut pairs: Vec<(PathBuf, PathBuf)> = match &args.pairs {
        Some(p) => read_pairs_csv(p)?,
        None => Vec::new(),
    };
    pairs.extend(args.pair.chunks(2).map(|c| (c[0].clone(), c[1].clone())));
    if pairs.is_empty() {
        return Err(CliError::input(anyhow!("no image pairs given")));
    }
    if args.bins == 0 {
        return Err(CliError::input(anyhow!("--bins must be at least 1")));
    }
    let size = attacked_spec.input_size();
    if critic_spec.input_size() != size {
        return Err(CliError::input(anyhow!(
            "attacked oracle takes {:?} images, critic takes {:?}",
            size,
            critic_spec.input_size()
        )));
    }
    let images = pairs
        .iter()
        .map(|(o, r)| {
            Ok((
                load_init_image(o, size, args.resize)?,
                load_init_image(r, size, args.resize)?,
            ))
        })
        .collect::<Result<Vec<(GrayCanvas, GrayCanvas)>, crate::image_io::ImageIoError>>()
        .input_err()?;
    let attacked = attacked_spec.build().map_err(oracle_err)?;
    let critic = critic_spec.build().map_err(oracle_err)?;
    let report = evaluate_set(&*attacked, &*critic, &images, args.bins).map_err(eval_err)?;
    create_dir(&args.out)?;
    let names: Vec<(String, String)> = pairs
        .iter()
        .map(|(o, r)| (o.display().to_string(), r.display().to_string()))
        .collect();
    write_eval(&args.out, &names, &report, &attacked_spec, &critic_spec).runtime_err()?;
    println!(
        "{} pairs: attacked mean {:.4}, critic mean {:.4}",
        report.rows.len(),
        report.attacked.mean,
        report.critic.mean
    );
    Ok(())
}

fn cmd_gray_tolerance(args: &GrayToleranceArgs) -> CliResult {
    let spec = spec_from(&args.oracle)?;
    let (w, h) = spec.input_size();
    let mut images: Vec<RgbCanvas> = Vec::new();
    let mut names = Vec::new();
    for path in &args.images {
        let img = load_rgb(path).input_err()?;
        if img.size() != (w, h) {
            return Err(CliError::input(anyhow!(
                "{}: image is {:?}, oracle takes {:?}",
                path.display(),
                img.size(),
                (w, h)
            )));
        }
        images.push(img);
        names.push(path.display().to_string());
    }
    for seed in 0..args.synthetic as u64 {
        images.push(synthetic::saturated_color(seed, w, h));
        names.push(format!("synthetic:{seed}"));
    }
    if images.is_empty() {
        return Err(CliError::input(anyhow!("no images given")));
    }
    let oracle = spec.build().map_err(oracle_err)?;
    let report = gray_tolerance(&*oracle, &images, args.bins).map_err(eval_err)?;
    create_dir(&args.out)?;
    write_tolerance(&args.out, &names, &report, &spec).runtime_err()?;
    println!(
        "{} images: mean {:.6}, min {:.6}",
        images.len(),
        report.distribution.mean,
        report
            .similarities
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    );
    Ok(())
}

#[derive(Serialize)]
struct DictRow {
    index: usize,
    x0: f64,
    y0: f64,
    sigma1: f64,
    sigma2: f64,
    amplitude: f64,
}

fn cmd_build_dict(args: &BuildDictArgs) -> CliResult {
    let file = match &args.config {
        Some(path) => RunConfig::load(path).input_err()?,
        None => RunConfig::default(),
    };
    let (fw, fh) = file
        .oracle
        .as_ref()
        .map_or((112, 112), OracleSpec::input_size);
    let (w, h) = (args.width.unwrap_or(fw), args.height.unwrap_or(fh));
    if w == 0 || h == 0 {
        return Err(CliError::input(anyhow!("canvas size must be non-zero")));
    }
    let grid = file.dictionary_grid(w, h);
    let blobs = build_dictionary(&grid).input_err()?;
    create_dir(&args.out)?;
    let path = args.out.join("dictionary.csv");
    let mut out = csv::Writer::from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime_err()?;
    for (index, b) in blobs.iter().enumerate() {
        out.serialize(DictRow {
            index,
            x0: b.x0,
            y0: b.y0,
            sigma1: b.sigma1,
            sigma2: b.sigma2,
            amplitude: b.amplitude,
        })
        .runtime_err()?;
    }
    out.flush().runtime_err()?;
    if args.render {
        let dir = args.out.join("dict");
        create_dir(&dir)?;
        for (index, b) in blobs.iter().enumerate() {
            let img = render_symmetric(b, w, h).runtime_err()?.clamp_unit();
            save_image(&img, &dir.join(format!("{index:05}.pgm")), ImageFormat::Pgm)
                .runtime_err()?;
        }
    }
    println!("{} dictionary entries for {w}x{h}", blobs.len());
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> CliResult {
    let spec = spec_from(&args.spec)?;
    if !spec.is_synthetic() {
        return Err(CliError::input(anyhow!(
            "the mock server needs a synthetic oracle spec"
        )));
    }
    let config = ServerConfig {
        bind: args.bind.clone(),
        spec,
        max_batch: args.max_batch,
        latency: args.latency_ms.map(Duration::from_millis),
        workers: args.workers,
    };
    let handle = serve(config).input_err()?;
    let stopper = handle.stopper();
    ctrlc::set_handler(move || stopper.stop()).runtime_err()?;
    println!("listening on {}", handle.url());
    let _ = std::io::stdout().flush();
    handle.join();
    eprintln!("shut down");
    Ok(())
}

fn cmd_curve(args: &CurveArgs) -> CliResult {
    let runs = args
        .traces
        .iter()
        .map(|p| {
            read_trace(p).input_err().map(|records| {
                records
                    .iter()
                    .map(|r| (r.queries, r.cos))
                    .collect::<Vec<_>>()
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let curve = mean_curve(&runs).map_err(eval_err)?;
    create_dir(&args.out)?;
    let names: Vec<String> = args
        .traces
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    write_curve(&args.out, &names, &curve).runtime_err()?;
    if curve.truncated {
        eprintln!(
            "traces differ in length; truncated to {} points",
            curve.points.len()
        );
    }
    println!("{} points from {} traces", curve.points.len(), runs.len());
    Ok(())
}

fn cmd_synth_face(args: &SynthFaceArgs) -> CliResult {
    if args.width == 0 || args.height == 0 {
        return Err(CliError::input(anyhow!("image size must be non-zero")));
    }
    let format = ImageFormat::from_path(&args.out).input_err()?;
    let face = synthetic::face(args.seed, args.width, args.height);
    save_image(&face, &args.out, format).runtime_err()
}
