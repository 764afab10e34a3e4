//! Command-line front end: argument parsing, the layered run configuration and one
//! handler per subcommand.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::aesthetics::{write_aesthetics_csv, AestheticExtractor, JpegQualityParams, SpectrumPrior, AESTHETIC_DIM};
use crate::analysis::{feature_quantile_report, write_quantile_csv, write_significance_csv, ChiSquareResult, DEFAULT_BINS};
use crate::baselines::{MethodContext, MethodRegistry, RankedFrame};
use crate::descriptors::{compute_descriptor, write_descriptor_dump, FrameDescriptor};
use crate::error::{Error, Result};
use crate::evaluation::{load_manifest, mean_precision_at_k, write_results_csv, MatchConfig, MatcherKind, VideoOutcome, DEFAULT_KS};
use crate::fixtures::regression_harness;
use crate::frame_io::{guess_source_kind, read_all, Frame, SourceKind, SourceOptions, SourceRegistry};
use crate::quality_filter::FilterReport;
use crate::scoring::{load_model, pearson, read_training_csv, save_model, train_forest, ForestConfig, ScoreMode};
use crate::selection::{extract_keyframe_stage, select_thumbnails, PipelineReport, PipelineResources, SelectionConfig, StageTimes};
use crate::{clustering::Subshot, seeding};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const TOOL: &str = "thumbforge";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every setting a run depends on, resolved from defaults, then the config file, then
/// flags. It is written into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Pipeline settings; `selection.seed` seeds every subcommand.
    pub selection: SelectionConfig,
    pub matching: MatchConfig,
    pub forest: ForestConfig,
    /// Group LASSO regularization weight.
    pub lambda: f64,
    /// Histogram bins of the quantile uniformity test.
    pub bins: usize,
    pub ks: Vec<usize>,
    pub jpeg: JpegQualityParams,
    pub model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            matching: MatchConfig::default(),
            forest: ForestConfig::default(),
            lambda: 1.0,
            bins: DEFAULT_BINS,
            ks: DEFAULT_KS.to_vec(),
            jpeg: JpegQualityParams::default(),
            model: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn seed(&self) -> u64 {
        self.selection.seed
    }

    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.matching.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.bins < 2 {
            return Err(Error::InvalidConfig("bins must be at least 2".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidConfig("ks must be a non-empty list of values >= 1".into()));
        }
        if self.forest.n_trees == 0 || self.forest.features_per_split == 0 {
            return Err(Error::InvalidConfig("n_trees and features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    fn resources(&self) -> Result<PipelineResources> {
        let model = match &self.model {
            Some(path) => Some(Arc::new(load_model(path)?)),
            None => None,
        };
        Ok(PipelineResources {
            model,
            extractor: Arc::new(self.extractor()),
        })
    }

    fn extractor(&self) -> AestheticExtractor {
        AestheticExtractor::new(SpectrumPrior::default(), self.jpeg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "thumbforge", version, about = "Pick thumbnail frames from a video", propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML file with run settings (overridden by flags).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the data-parallel stages.
    #[arg(long, global = true, env = "THUMBFORGE_THREADS")]
    pub threads: Option<usize>,
    /// Leave wall-clock times and timestamps out of every output.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the selection pipeline and write a candidate manifest.
    Extract(ExtractArgs),
    /// Filter, segment into subshots and list the stillest frame of each.
    Keyframes(KeyframesArgs),
    /// Rank frames with a baseline method.
    Baseline(BaselineArgs),
    /// Train an attractiveness forest.
    Train(TrainArgs),
    /// Mean precision at k of one method over a corpus manifest.
    Evaluate(EvaluateArgs),
    /// Feature quantiles of the ground-truth thumbnails and their uniformity tests.
    Analyze(AnalyzeArgs),
    /// Per-frame scores as CSV.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKindArg {
    Y4m,
    Raw,
    Imagedir,
}

impl From<SourceKindArg> for SourceKind {
    fn from(k: SourceKindArg) -> Self {
        match k {
            SourceKindArg::Y4m => SourceKind::Y4m,
            SourceKindArg::Raw => SourceKind::Raw,
            SourceKindArg::Imagedir => SourceKind::ImageDir,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Y4M file, raw RGB24 file (`-` for stdin) or image directory.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Source format [default: guessed from the path].
    #[arg(long, value_enum)]
    pub source_kind: Option<SourceKindArg>,
    /// Frame width of a raw stream.
    #[arg(long)]
    pub width: Option<usize>,
    /// Frame height of a raw stream.
    #[arg(long)]
    pub height: Option<usize>,
    /// Frame rate of a raw stream or image directory, `N` or `N/D`.
    #[arg(long, value_parser = parse_fps)]
    pub fps: Option<(u32, u32)>,
}

fn parse_fps(s: &str) -> std::result::Result<(u32, u32), String> {
    let (num, den) = s.split_once(['/', ':']).unwrap_or((s, "1"));
    let num: u32 = num.trim().parse().map_err(|_| format!("bad frame rate `{s}`"))?;
    let den: u32 = den.trim().parse().map_err(|_| format!("bad frame rate `{s}`"))?;
    if num == 0 || den == 0 {
        return Err(format!("frame rate must be positive, got `{s}`"));
    }
    Ok((num, den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Unsupervised,
    Supervised,
}

impl From<ModeArg> for ScoreMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unsupervised => ScoreMode::Unsupervised,
            ModeArg::Supervised => ScoreMode::Supervised,
        }
    }
}

/// Quality filter and clustering overrides.
#[derive(Debug, Args, Default)]
pub struct FilterArgs {
    #[arg(long)]
    pub lum_min: Option<f64>,
    #[arg(long)]
    pub sharp_min: Option<f64>,
    #[arg(long)]
    pub unif_max: Option<f64>,
    #[arg(long)]
    pub ecr_thresh: Option<f64>,
    #[arg(long)]
    pub boundary_margin: Option<usize>,
    /// Smallest cluster count tried by the gap statistic.
    #[arg(long)]
    pub kmin: Option<usize>,
    /// Largest cluster count tried by the gap statistic.
    #[arg(long)]
    pub kmax: Option<usize>,
}

impl FilterArgs {
    fn apply(&self, c: &mut RunConfig) {
        let f = &mut c.selection.filter;
        set(&mut f.luminance_min, self.lum_min);
        set(&mut f.sharpness_min, self.sharp_min);
        set(&mut f.uniformity_max, self.unif_max);
        set(&mut f.ecr_threshold, self.ecr_thresh);
        set(&mut f.boundary_margin, self.boundary_margin);
        set(&mut c.selection.k_min, self.kmin);
        set(&mut c.selection.k_max, self.kmax);
    }
}

#[derive(Debug, Args, Default)]
pub struct DumpArgs {
    /// Per-frame quality scores as CSV (index,luminance,sharpness,uniformity,ecr).
    #[arg(long, value_name = "FILE")]
    pub dump_quality: Option<PathBuf>,
    /// Descriptors of every frame in the THDESC01 binary format.
    #[arg(long, value_name = "FILE")]
    pub dump_descriptors: Option<PathBuf>,
    /// Aesthetic vectors of every frame as CSV, with stillness.
    #[arg(long, value_name = "FILE")]
    pub dump_aesthetics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Debug, Args)]
pub struct FramesArgs {
    /// Directory for the candidate images [default: the output directory].
    #[arg(long, value_name = "DIR")]
    pub emit_frames: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub frame_format: ImageFormat,
    /// Write only the manifest.
    #[arg(long, conflicts_with = "emit_frames")]
    pub no_frames: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of candidates to output.
    #[arg(long, short = 'k')]
    pub k: Option<usize>,
    /// Forest model for supervised scoring.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory for manifest.json and the candidate frames.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    #[command(flatten)]
    pub frames: FramesArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[command(flatten)]
    pub dumps: DumpArgs,
}

#[derive(Debug, Args)]
pub struct KeyframesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output JSON file [default: standard output].
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Random,
    KmeansCentroid,
    KmeansStillness,
    Glasso,
    Beauty,
}

impl BaselineMethod {
    fn registry_name(self) -> &'static str {
        match self {
            BaselineMethod::Random => "random",
            BaselineMethod::KmeansCentroid => "kmeans-centroid",
            BaselineMethod::KmeansStillness => "kmeans-stillness",
            BaselineMethod::Glasso => "glasso",
            BaselineMethod::Beauty => "beauty",
        }
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// Group LASSO regularization weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, short = 'k')]
    pub k: Option<usize>,
    /// Forest model for the beauty baseline.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory for manifest.json and the candidate frames.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    #[command(flatten)]
    pub frames: FramesArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV: the 52 aesthetic feature columns and `score`.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Train on this many rows of the built-in synthetic regression harness.
    #[arg(long, value_name = "ROWS")]
    pub synthetic: Option<usize>,
    /// Model file to write.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Fraction of rows held out for the reported Pearson correlation and MSE.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long, value_enum)]
    pub matcher: Option<MatcherArg>,
    /// Near-duplicate threshold of the matcher.
    #[arg(long)]
    pub theta: Option<f64>,
}

impl MatchArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.matching.matcher, self.matcher.map(MatcherKind::from));
        set(&mut c.matching.theta, self.theta);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    ExactIndex,
    DescriptorL2,
    PixelSsd,
}

impl From<MatcherArg> for MatcherKind {
    fn from(m: MatcherArg) -> Self {
        match m {
            MatcherArg::ExactIndex => MatcherKind::ExactIndex,
            MatcherArg::DescriptorL2 => MatcherKind::DescriptorL2,
            MatcherArg::PixelSsd => MatcherKind::PixelSsd,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Corpus manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Method name: ours-unsupervised, ours-supervised, random, kmeans-centroid,
    /// kmeans-stillness, glasso or beauty.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Cut-offs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Results CSV; the run record goes next to it as `<FILE>.run.json`.
    #[arg(long, short = 'o', default_value = "results.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub matching: MatchArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Corpus manifest (JSON lines); each entry's ground-truth frame is its thumbnail.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for quantiles.csv, significance.csv and analysis.json.
    #[arg(long, short = 'o', default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Per-frame CSV; the run record goes next to it as `<FILE>.run.json`.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Append the 52 aesthetic features of every frame.
    #[arg(long)]
    pub aesthetics: bool,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[command(flatten)]
    pub dumps: DumpArgs,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_logging(cli.global.verbose);
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == EXIT_USAGE {
                eprintln!("usage: thumbforge [OPTIONS] <COMMAND> (see `thumbforge --help`)");
            }
            code
        }
    }
}

/// Bad settings are usage errors; everything that goes wrong with the data is a data
/// error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::UnknownStrategy { .. } | Error::ModelMissing => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("THUMBFORGE_LOG")
        .try_init();
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        // a pool that was already built (tests calling run twice) keeps its size
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("thread pool already initialized");
        }
    }
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut config.selection.seed, cli.global.seed);
    let out = Output {
        deterministic: cli.global.deterministic,
    };
    match cli.command {
        Command::Extract(a) => extract(a, config, out),
        Command::Keyframes(a) => keyframes(a, config, out),
        Command::Baseline(a) => baseline(a, config, out),
        Command::Train(a) => train(a, config, out),
        Command::Evaluate(a) => evaluate(a, config, out),
        Command::Analyze(a) => analyze(a, config, out),
        Command::Inspect(a) => inspect(a, config, out),
    }
}

#[derive(Clone, Copy)]
struct Output {
    deterministic: bool,
}

impl Output {
    fn generated(self) -> Option<u64> {
        if self.deterministic {
            None
        } else {
            SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
        }
    }

    fn times(self, t: StageTimes) -> StageTimes {
        if self.deterministic {
            StageTimes::default()
        } else {
            t
        }
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_s: Option<u64>,
}

impl<'a> Provenance<'a> {
    fn new(command: &'static str, config: &'a RunConfig, out: Output) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            seed: config.seed(),
            config,
            generated_unix_s: out.generated(),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Run record written next to a non-JSON artifact.
fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".run.json");
    path.with_file_name(name)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct VideoInfo {
    source: String,
    source_kind: SourceKind,
    frames: usize,
    width: usize,
    height: usize,
    fps: f64,
    duration_s: f64,
}

fn load_input(args: &InputArgs) -> Result<(Vec<Frame>, VideoInfo)> {
    let kind = args.source_kind.map(SourceKind::from).unwrap_or_else(|| guess_source_kind(&args.input));
    let options = SourceOptions {
        path: args.input.clone(),
        width: args.width,
        height: args.height,
        fps_num: args.fps.map(|f| f.0),
        fps_den: args.fps.map(|f| f.1),
    };
    let mut source = SourceRegistry::default().open(kind.name(), &options)?;
    let frames = read_all(source.as_mut())?;
    let info = source.info();
    let fps = info.fps();
    let video = VideoInfo {
        source: args.input.display().to_string(),
        source_kind: kind,
        frames: frames.len(),
        width: info.width,
        height: info.height,
        fps,
        duration_s: frames.len() as f64 / fps,
    };
    Ok((frames, video))
}

/// One ranked frame of a candidate manifest. Fields a method does not produce are null.
#[derive(Debug, Clone, Serialize)]
struct ManifestCandidate {
    rank: usize,
    frame_index: usize,
    timestamp_s: f64,
    cluster_id: Option<usize>,
    cluster_size: Option<usize>,
    attractiveness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<String>,
}

#[derive(Serialize)]
struct CandidateManifest<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    method: String,
    video: VideoInfo,
    candidates: Vec<ManifestCandidate>,
    /// Every ranked candidate, so callers can cut at a different k.
    all_candidates: Vec<ManifestCandidate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<PipelineReport>,
}

/// Writes the top `k` candidates' images and fills in their file names.
fn emit_frames(candidates: &mut [ManifestCandidate], frames: &[Frame], args: &FramesArgs, out_dir: &Path) -> Result<()> {
    if args.no_frames {
        return Ok(());
    }
    let dir = args.emit_frames.as_deref().unwrap_or(out_dir);
    fs::create_dir_all(dir)?;
    for c in candidates {
        let name = format!("rank_{}_frame_{}.{}", c.rank, c.frame_index, args.frame_format.extension());
        frames[c.frame_index].save(&dir.join(&name))?;
        c.image = Some(name);
    }
    Ok(())
}

fn write_dumps(dumps: &DumpArgs, frames: &[Frame], filter: &FilterReport, stillness: &[f64], config: &RunConfig) -> Result<()> {
    if let Some(path) = &dumps.dump_quality {
        create_parent(path)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "luminance", "sharpness", "uniformity", "ecr"])?;
        for (q, ecr) in filter.qualities.iter().zip(&filter.ecr) {
            w.write_record([
                q.index.to_string(),
                q.luminance.to_string(),
                q.sharpness.to_string(),
                q.uniformity.to_string(),
                ecr.map(|e| e.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    if let Some(path) = &dumps.dump_descriptors {
        create_parent(path)?;
        let descriptors = all_descriptors(frames)?;
        let mut w = BufWriter::new(File::create(path)?);
        write_descriptor_dump(&mut w, &descriptors)?;
        w.flush()?;
    }
    if let Some(path) = &dumps.dump_aesthetics {
        create_parent(path)?;
        let vectors = config.extractor().compute_all(frames)?;
        let mut w = BufWriter::new(File::create(path)?);
        write_aesthetics_csv(&mut w, &vectors, Some(stillness))?;
        w.flush()?;
    }
    Ok(())
}

fn all_descriptors(frames: &[Frame]) -> Result<Vec<FrameDescriptor>> {
    use rayon::prelude::*;
    frames.par_iter().map(compute_descriptor).collect()
}

fn extract(a: ExtractArgs, mut config: RunConfig, out: Output) -> Result<()> {
    set(&mut config.selection.mode, a.mode.map(ScoreMode::from));
    set(&mut config.selection.k_output, a.k);
    if a.model.is_some() {
        config.model = a.model.clone();
    }
    a.filter.apply(&mut config);
    config.validate()?;
    let resources = config.resources()?;
    if config.selection.mode == ScoreMode::Supervised && resources.model.is_none() {
        return Err(Error::ModelMissing);
    }

    let (frames, video) = load_input(&a.input)?;
    let selection = select_thumbnails(&frames, video.duration_s, &config.selection, &resources)?;
    let to_manifest = |c: &crate::selection::ThumbnailCandidate| ManifestCandidate {
        rank: c.rank,
        frame_index: c.frame_index,
        timestamp_s: c.timestamp_s,
        cluster_id: Some(c.cluster_id),
        cluster_size: Some(c.cluster_size),
        attractiveness: Some(c.attractiveness),
        image: None,
    };
    let mut candidates: Vec<ManifestCandidate> = selection.top(config.selection.k_output).iter().map(to_manifest).collect();
    let all_candidates = selection.ranked.iter().map(to_manifest).collect();
    fs::create_dir_all(&a.out)?;
    emit_frames(&mut candidates, &frames, &a.frames, &a.out)?;
    write_dumps(&a.dumps, &frames, &selection.filter, &selection.stillness, &config)?;

    let mut report = selection.report.clone();
    report.wall_time = out.times(report.wall_time);
    let manifest = CandidateManifest {
        provenance: Provenance::new("extract", &config, out),
        method: format!("ours-{}", config.selection.mode),
        video,
        candidates,
        all_candidates,
        report: Some(report),
    };
    write_json(&a.out.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct KeyframeEntry {
    frame_index: usize,
    timestamp_s: f64,
    stillness: f64,
    shot_id: usize,
    subshot: usize,
    cluster_id: usize,
}

#[derive(Serialize)]
struct KeyframeReport {
    frames_total: usize,
    frames_after_filter: usize,
    shots: usize,
    subshots: usize,
    keyframes: usize,
    filter_fallback: bool,
    wall_time: StageTimes,
}

#[derive(Serialize)]
struct KeyframeManifest<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    video: VideoInfo,
    boundaries: Vec<usize>,
    shots: Vec<(usize, usize)>,
    subshots: Vec<Subshot>,
    keyframes: Vec<KeyframeEntry>,
    report: KeyframeReport,
}

fn keyframes(a: KeyframesArgs, mut config: RunConfig, out: Output) -> Result<()> {
    a.filter.apply(&mut config);
    config.validate()?;
    let (frames, video) = load_input(&a.input)?;
    let stage = extract_keyframe_stage(&frames, &config.selection)?;
    let entries = stage
        .keyframes
        .iter()
        .zip(&stage.subshots)
        .enumerate()
        .map(|(i, (&f, s))| KeyframeEntry {
            frame_index: f,
            timestamp_s: frames[f].timestamp,
            stillness: stage.stillness[f],
            shot_id: s.shot_id,
            subshot: i,
            cluster_id: s.cluster_id,
        })
        .collect();
    let manifest = KeyframeManifest {
        provenance: Provenance::new("keyframes", &config, out),
        video,
        boundaries: stage.filter.boundaries.clone(),
        shots: stage.filter.mask.shots.clone(),
        report: KeyframeReport {
            frames_total: frames.len(),
            frames_after_filter: stage.filter.mask.kept_count(),
            shots: stage.filter.mask.shots.len(),
            subshots: stage.subshots.len(),
            keyframes: stage.keyframes.len(),
            filter_fallback: stage.filter_fallback,
            wall_time: out.times(stage.times.clone()),
        },
        subshots: stage.subshots,
        keyframes: entries,
    };
    match &a.out {
        Some(path) => {
            create_parent(path)?;
            write_json(path, &manifest)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            w.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn method_context(config: &RunConfig) -> Result<MethodContext> {
    Ok(MethodContext {
        lambda: config.lambda,
        selection: config.selection.clone(),
        gap: config.selection.gap(),
        resources: config.resources()?,
    })
}

fn baseline(a: BaselineArgs, mut config: RunConfig, out: Output) -> Result<()> {
    set(&mut config.lambda, a.lambda);
    set(&mut config.selection.k_output, a.k);
    if a.model.is_some() {
        config.model = a.model.clone();
    }
    a.filter.apply(&mut config);
    config.validate()?;
    let name = a.method.registry_name();
    let method = MethodRegistry::default().create(name, &method_context(&config)?)?;

    let (frames, video) = load_input(&a.input)?;
    if frames.is_empty() {
        return Err(Error::EmptyStream);
    }
    let k = config.selection.k_output.min(frames.len());
    let ranked = method.rank(&frames, video.fps, k, config.seed())?;
    let to_manifest = |(i, r): (usize, &RankedFrame)| ManifestCandidate {
        rank: i + 1,
        frame_index: r.frame_index,
        timestamp_s: frames[r.frame_index].timestamp,
        cluster_id: r.cluster_id,
        cluster_size: r.cluster_size,
        attractiveness: r.score,
        image: None,
    };
    let mut candidates: Vec<ManifestCandidate> = ranked.iter().take(k).enumerate().map(to_manifest).collect();
    let all_candidates = ranked.iter().enumerate().map(to_manifest).collect();
    fs::create_dir_all(&a.out)?;
    emit_frames(&mut candidates, &frames, &a.frames, &a.out)?;
    let manifest = CandidateManifest {
        provenance: Provenance::new("baseline", &config, out),
        method: name.to_string(),
        video,
        candidates,
        all_candidates,
        report: None,
    };
    write_json(&a.out.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    data: String,
    rows: usize,
    train_rows: usize,
    holdout_rows: usize,
    holdout_pearson: Option<f64>,
    holdout_mse: Option<f64>,
    trees: usize,
    max_tree_depth: usize,
}

fn train(a: TrainArgs, mut config: RunConfig, out: Output) -> Result<()> {
    set(&mut config.forest.n_trees, a.n_trees);
    set(&mut config.forest.min_leaf, a.min_leaf);
    set(&mut config.forest.features_per_split, a.features_per_split);
    if a.max_depth.is_some() {
        config.forest.max_depth = a.max_depth;
    }
    config.validate()?;
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(Error::InvalidConfig(format!("holdout must lie in [0,1), got {}", a.holdout)));
    }
    let seed = config.seed();
    let (x, y, data) = match (&a.data, a.synthetic) {
        (Some(path), _) => {
            let (x, y) = read_training_csv(path)?;
            (x, y, path.display().to_string())
        }
        (None, Some(rows)) => {
            if rows == 0 {
                return Err(Error::EmptyTrainingSet);
            }
            let (x, y) = regression_harness(rows, AESTHETIC_DIM, 0, seeding::derive(seed, 10));
            (x, y, format!("synthetic:{rows}"))
        }
        (None, None) => return Err(Error::InvalidConfig("either --data or --synthetic is required".into())),
    };

    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeding::rng(seeding::derive(seed, 11)));
    let n_holdout = if n > 1 { ((n as f64 * a.holdout) as usize).min(n - 1) } else { 0 };
    let (held, fit) = order.split_at(n_holdout);
    let x_fit = x.select(ndarray::Axis(0), fit);
    let y_fit: Vec<f64> = fit.iter().map(|&i| y[i]).collect();
    let model = train_forest(x_fit.view(), &y_fit, &config.forest, seed)?;

    let (pearson_r, mse) = if held.is_empty() {
        (None, None)
    } else {
        let pred: Vec<f64> = held.iter().map(|&i| model.predict(x.row(i))).collect::<Result<_>>()?;
        let truth: Vec<f64> = held.iter().map(|&i| y[i]).collect();
        let mse = pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / held.len() as f64;
        (Some(pearson(&pred, &truth)).filter(|r| r.is_finite()), Some(mse))
    };
    create_parent(&a.out)?;
    save_model(&model, &a.out)?;
    if let (Some(r), Some(m)) = (pearson_r, mse) {
        log::info!("holdout pearson {r:.4}, mse {m:.6} on {n_holdout} rows");
    }
    let report = TrainReport {
        provenance: Provenance::new("train", &config, out),
        data,
        rows: n,
        train_rows: fit.len(),
        holdout_rows: held.len(),
        holdout_pearson: pearson_r,
        holdout_mse: mse,
        trees: model.trees.len(),
        max_tree_depth: model.trees.iter().map(|t| t.depth()).max().unwrap_or(0),
    };
    write_json(&sidecar_path(&a.out), &report)
}

#[derive(Serialize)]
struct EvaluationRecord<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    manifest: String,
    method: String,
    results: &'a [crate::evaluation::ResultRow],
    videos: &'a [VideoOutcome],
}

fn evaluate(a: EvaluateArgs, mut config: RunConfig, out: Output) -> Result<()> {
    set(&mut config.lambda, a.lambda);
    set(&mut config.ks, a.ks.clone());
    if a.model.is_some() {
        config.model = a.model.clone();
    }
    a.matching.apply(&mut config);
    a.filter.apply(&mut config);
    config.validate()?;
    let method = MethodRegistry::default().create(&a.method, &method_context(&config)?)?;
    let entries = load_manifest(&a.manifest)?;
    let (rows, outcomes) = mean_precision_at_k(&entries, &SourceRegistry::default(), method.as_ref(), &config.ks, &config.matching, config.seed())?;

    create_parent(&a.out)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    write_results_csv(&mut w, &rows)?;
    w.flush()?;
    let record = EvaluationRecord {
        provenance: Provenance::new("evaluate", &config, out),
        manifest: a.manifest.display().to_string(),
        method: method.name().to_string(),
        results: &rows,
        videos: &outcomes,
    };
    write_json(&sidecar_path(&a.out), &record)
}

#[derive(Serialize)]
struct AnalysisRecord<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    manifest: String,
    videos: usize,
    skipped: &'a [(String, String)],
    flagged: Vec<&'a str>,
    results: &'a [ChiSquareResult],
}

fn analyze(a: AnalyzeArgs, mut config: RunConfig, out: Output) -> Result<()> {
    set(&mut config.bins, a.bins);
    a.matching.apply(&mut config);
    config.validate()?;
    let entries = load_manifest(&a.manifest)?;
    let extractor = config.extractor();
    let report = feature_quantile_report(&entries, &SourceRegistry::default(), &extractor, &config.matching, config.bins)?;

    fs::create_dir_all(&a.out)?;
    let mut w = BufWriter::new(File::create(a.out.join("quantiles.csv"))?);
    write_quantile_csv(&mut w, &report.matrix)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(a.out.join("significance.csv"))?);
    write_significance_csv(&mut w, &report.results)?;
    w.flush()?;
    let record = AnalysisRecord {
        provenance: Provenance::new("analyze", &config, out),
        manifest: a.manifest.display().to_string(),
        videos: report.matrix.rows.len(),
        skipped: &report.skipped,
        flagged: report.flagged(),
        results: &report.results,
    };
    write_json(&a.out.join("analysis.json"), &record)
}

fn inspect(a: InspectArgs, mut config: RunConfig, out: Output) -> Result<()> {
    a.filter.apply(&mut config);
    config.validate()?;
    let (frames, _) = load_input(&a.input)?;
    let stage = extract_keyframe_stage(&frames, &config.selection)?;
    let aesthetics = if a.aesthetics {
        Some(config.extractor().compute_all(&frames)?)
    } else {
        None
    };
    let mut shot_of = vec![None; frames.len()];
    for (s, &(start, end)) in stage.filter.mask.shots.iter().enumerate() {
        shot_of[start..=end].fill(Some(s));
    }
    let mut subshot_of = vec![None; frames.len()];
    for (i, s) in stage.subshots.iter().enumerate() {
        subshot_of[s.start..=s.end].fill(Some(i));
    }

    create_parent(&a.out)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header: Vec<String> = [
        "index",
        "timestamp_s",
        "luminance",
        "sharpness",
        "uniformity",
        "ecr",
        "kept",
        "shot",
        "subshot",
        "keyframe",
        "stillness",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if aesthetics.is_some() {
        header.extend(crate::aesthetics::aesthetic_names().iter().cloned());
    }
    w.write_record(&header)?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, frame) in frames.iter().enumerate() {
        let q = &stage.filter.qualities[i];
        let mut rec = vec![
            i.to_string(),
            frame.timestamp.to_string(),
            q.luminance.to_string(),
            q.sharpness.to_string(),
            q.uniformity.to_string(),
            stage.filter.ecr[i].map(|e| e.to_string()).unwrap_or_default(),
            u8::from(stage.filter.mask.keep[i]).to_string(),
            opt(shot_of[i]),
            opt(subshot_of[i]),
            u8::from(stage.keyframes.contains(&i)).to_string(),
            stage.stillness[i].to_string(),
        ];
        if let Some(vectors) = &aesthetics {
            rec.extend(vectors[i].values().iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_dumps(&a.dumps, &frames, &stage.filter, &stage.stillness, &config)?;
    write_json(&sidecar_path(&a.out), &Provenance::new("inspect", &config, out))
}
