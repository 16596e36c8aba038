//! `chainrep`: synthesize, extract, refine, evaluate and export B-Rep
//! chain complexes.
//!
//! Exit status is 0 on success, 1 on a structured failure (reported as a
//! JSON object on stderr) and 2 on a usage error.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chainrep::extraction::{
    build_ilp, combine_probabilities, extract_complex, lp_format::write_lp, nms, proximity_matrices, ExtractOptions,
    IlpWeights, SolveOptions,
};
use chainrep::io::{self, ComplexDocument, LoadMode};
use chainrep::metrics::{evaluate, EvalOptions, COVERAGE_EPSILON, FSCORE_DELTA};
use chainrep::refinement::{refine, validity_assessment, FitWeights, RefineOptions, ASSIGN_THRESHOLD, VALIDITY_THRESHOLD};
use chainrep::synth::{corrupt_with_trace, generate_gt, sample_point_cloud, CorruptionParams, HalfSpace, Shape};
use chainrep::{check_dependencies, topology_residuals, Complex, Error, Result, Vec3};
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;

use report::Report;

#[derive(Parser)]
#[command(name = "chainrep", version, about = "B-Rep chain complex extraction, refinement and evaluation")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads for batch inputs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Warn instead of failing on documents that break complex invariants.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write ground-truth complexes and sampled point clouds.
    Synth(SynthArgs),
    /// Turn ground-truth complexes into corrupted soft predictions.
    Corrupt(CorruptArgs),
    /// Extract a valid chain complex from soft predictions.
    Extract(ExtractArgs),
    /// Refine complex geometry against a point cloud.
    Refine(RefineArgs),
    /// Compare a predicted complex with a reference.
    Evaluate(EvaluateArgs),
    /// Report the geometric validity of a complex.
    Validate(ValidateArgs),
    /// Export complexes as OBJ meshes with polylines and corner points.
    Export(ExportArgs),
    /// Extract, refine and validate in one go.
    Pipeline(PipelineArgs),
}

/// Inputs with either a single output path or an output directory.
#[derive(Args)]
struct Batch {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output file (single input only).
    #[arg(short, long, conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Output directory; files are named after their inputs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Shape families: cube, capped_cylinder, sphere, l_bracket, prism<n>.
    #[arg(long = "shape", value_delimiter = ',', default_value = "cube,capped_cylinder,sphere,l_bracket,prism6")]
    shapes: Vec<Shape>,
    #[arg(long, default_value_t = 10_000)]
    points: usize,
    /// Standard deviation of normal offsets.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Half-space removing points with `n·p > d`, as `nx,ny,nz,d`; repeatable.
    #[arg(long = "mask", value_parser = parse_mask)]
    masks: Vec<[f64; 4]>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    #[command(flatten)]
    batch: Batch,
    /// Per-coordinate sample jitter.
    #[arg(long, default_value_t = CorruptionParams::default().sigma_g)]
    sigma_g: f64,
    #[arg(long, default_value_t = CorruptionParams::default().validness_blur)]
    validness_blur: f64,
    #[arg(long, default_value_t = CorruptionParams::default().topology_blur)]
    topology_blur: f64,
    /// Near-duplicate elements to inject.
    #[arg(long, default_value_t = 0)]
    spurious: usize,
    /// Off-shape elements to inject.
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ExtractFlags {
    /// Validness cutoff for candidate elements.
    #[arg(long, default_value_t = 0.3)]
    cutoff: f64,
    /// Cutoff retried once when nothing survives `--cutoff`.
    #[arg(long, default_value_t = 0.1)]
    retry_cutoff: f64,
    #[arg(long)]
    no_retry: bool,
    /// Chamfer threshold of duplicate suppression.
    #[arg(long, default_value_t = 0.05)]
    nms_threshold: f64,
    /// Fall-off of the proximity fitness score.
    #[arg(long, default_value_t = chainrep::geometry::FITNESS_EPSILON)]
    epsilon: f64,
    /// Weight of predictions against proximity.
    #[arg(long, default_value_t = IlpWeights::default().w)]
    w: f64,
    #[arg(long, default_value_t = IlpWeights::default().unary)]
    w_unary: f64,
    #[arg(long, default_value_t = IlpWeights::default().binary)]
    w_binary: f64,
    #[arg(long, default_value_t = IlpWeights::default().tie_break)]
    tie_break: f64,
    /// Solver time limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Programs with at most this many variables are enumerated.
    #[arg(long, default_value_t = SolveOptions::default().enumeration_threshold)]
    enumeration_threshold: usize,
    #[arg(long, default_value_t = SolveOptions::default().dive_interval)]
    dive_interval: usize,
    #[arg(long, default_value_t = SolveOptions::default().dive_budget)]
    dive_budget: usize,
}

impl ExtractFlags {
    fn options(&self) -> Result<ExtractOptions> {
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(Error::Argument("--time-limit must be positive".into()));
        }
        Ok(ExtractOptions {
            cutoff: self.cutoff,
            retry_cutoff: (!self.no_retry).then_some(self.retry_cutoff),
            nms_threshold: self.nms_threshold,
            epsilon: self.epsilon,
            weights: IlpWeights { w: self.w, unary: self.w_unary, binary: self.w_binary, tie_break: self.tie_break },
            solve: SolveOptions {
                time_limit: Duration::from_secs_f64(self.time_limit),
                enumeration_threshold: self.enumeration_threshold,
                dive_interval: self.dive_interval,
                dive_budget: self.dive_budget,
            },
        })
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    batch: Batch,
    /// Also write the binary program in LP format (single input only).
    #[arg(long)]
    lp_dump: Option<PathBuf>,
    #[command(flatten)]
    flags: ExtractFlags,
}

#[derive(Args, Clone)]
struct RefineFlags {
    /// Rounds with spline patches.
    #[arg(long, default_value_t = RefineOptions::default().stage1_rounds)]
    stage1_rounds: usize,
    /// Rounds with typed patches.
    #[arg(long, default_value_t = RefineOptions::default().stage2_rounds)]
    stage2_rounds: usize,
    /// Point-to-patch assignment distance.
    #[arg(long, default_value_t = ASSIGN_THRESHOLD)]
    assign_threshold: f64,
    #[arg(long, default_value_t = FitWeights::default().input)]
    w_input: f64,
    #[arg(long, default_value_t = FitWeights::default().adjacent)]
    w_adjacent: f64,
    #[arg(long, default_value_t = FitWeights::default().stabilization)]
    w_stabilization: f64,
    /// Fit cylinders and cones without axes implied by their boundary circles.
    #[arg(long)]
    no_axis_cues: bool,
}

impl RefineFlags {
    fn options(&self) -> RefineOptions {
        RefineOptions {
            stage1_rounds: self.stage1_rounds,
            stage2_rounds: self.stage2_rounds,
            assign_threshold: self.assign_threshold,
            weights: FitWeights { input: self.w_input, adjacent: self.w_adjacent, stabilization: self.w_stabilization },
            use_axis_cues: !self.no_axis_cues,
        }
    }
}

#[derive(Args)]
struct RefineArgs {
    /// Chain complex document.
    complex: PathBuf,
    /// Point cloud (`x y z` per line).
    points: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Refinement report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = VALIDITY_THRESHOLD)]
    validity_threshold: f64,
    #[command(flatten)]
    flags: RefineFlags,
}

#[derive(Args, Clone)]
struct EvalFlags {
    /// Distance gate for true positives.
    #[arg(long, default_value_t = FSCORE_DELTA)]
    delta: f64,
    /// Distance within which a point counts as covered.
    #[arg(long, default_value_t = COVERAGE_EPSILON)]
    coverage_epsilon: f64,
    #[arg(long, default_value_t = VALIDITY_THRESHOLD)]
    validity_threshold: f64,
}

impl EvalFlags {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            delta: self.delta,
            coverage_epsilon: self.coverage_epsilon,
            validity_threshold: self.validity_threshold,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted chain complex.
    pred: PathBuf,
    /// Reference chain complex.
    gt: PathBuf,
    /// Input points for the coverage score.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Report file (JSON); the report is printed as text either way.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: EvalFlags,
}

#[derive(Args)]
struct ValidateArgs {
    complex: PathBuf,
    #[arg(long, default_value_t = VALIDITY_THRESHOLD)]
    threshold: f64,
    /// Report file (JSON).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    batch: Batch,
    /// Subdivisions per sample-grid cell.
    #[arg(long, default_value_t = io::TRIM_SUBDIVISIONS)]
    subdivisions: usize,
}

#[derive(Args)]
struct PipelineArgs {
    /// Probabilistic complex document.
    soft: PathBuf,
    /// Point cloud (`x y z` per line).
    points: PathBuf,
    /// Reference complex; adds evaluation scores to the report.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also export the refined complex as OBJ.
    #[arg(long)]
    mesh: bool,
    #[command(flatten)]
    extract: ExtractFlags,
    #[command(flatten)]
    refine: RefineFlags,
    #[command(flatten)]
    eval: EvalFlags,
}

fn parse_mask(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}"))).collect::<std::result::Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|_| "expected nx,ny,nz,d".to_string())
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(clap::error::ErrorKind::ArgumentConflict, msg).exit()
}

fn mode(cli: &Cli) -> LoadMode {
    if cli.lenient {
        LoadMode::Lenient
    } else {
        LoadMode::Strict
    }
}

/// File name without any `.json`/`.soft`/`.complex` suffixes.
fn stem(p: &Path) -> String {
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let mut s = name.as_str();
    for suffix in [".json", ".obj", ".xyz", ".soft", ".complex", ".gt", ".refined"] {
        s = s.strip_suffix(suffix).unwrap_or(s);
    }
    s.to_string()
}

/// Output path of every input of a batch.
fn outputs(b: &Batch, suffix: &str) -> Vec<PathBuf> {
    match (&b.out, &b.out_dir) {
        (Some(out), _) => {
            if b.inputs.len() > 1 {
                usage_error("--out takes a single input; use --out-dir for batches");
            }
            vec![out.clone()]
        }
        (None, dir) => {
            let dir = dir.clone().unwrap_or_else(|| PathBuf::from("."));
            b.inputs.iter().map(|p| dir.join(format!("{}{suffix}", stem(p)))).collect()
        }
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p)?;
    Ok(())
}

fn parent_dir(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => create_dir(d),
        _ => Ok(()),
    }
}

/// Runs `f` on every `(input, output)` pair in parallel; the first error wins.
fn run_batch(pairs: Vec<(PathBuf, PathBuf)>, f: impl Fn(&Path, &Path) -> Result<()> + Sync) -> Result<()> {
    let results: Vec<Result<()>> = pairs
        .par_iter()
        .map(|(i, o)| {
            parent_dir(o)?;
            f(i, o).map_err(|e| with_file(e, i))
        })
        .collect();
    results.into_iter().collect()
}

fn with_file(e: Error, file: &Path) -> Error {
    match e {
        Error::Parse { .. } | Error::Io(_) => e,
        Error::Structural(m) => Error::Structural(format!("{}: {m}", file.display())),
        Error::Argument(m) => Error::Argument(format!("{}: {m}", file.display())),
        other => other,
    }
}

fn print(text: &str) {
    print!("{text}");
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    create_dir(&a.out_dir)?;
    let masks: Vec<HalfSpace<f64>> =
        a.masks.iter().map(|m| HalfSpace { normal: Vec3::new(m[0], m[1], m[2]), offset: m[3] }).collect();
    let results: Vec<Result<()>> = a
        .shapes
        .par_iter()
        .map(|&shape| {
            let gt: Complex = generate_gt(shape)?;
            let pts = sample_point_cloud(&gt, a.points, a.sigma, &masks, a.seed);
            let doc = ComplexDocument::chain(gt)
                .with("generator", "synth")
                .with("shape", shape)
                .with("seed", a.seed);
            io::save_complex(&doc, &a.out_dir.join(format!("{shape}.json")))?;
            io::save_points(&pts, &a.out_dir.join(format!("{shape}.xyz")))?;
            log::info!("{shape}: {} points", pts.len());
            Ok(())
        })
        .collect();
    results.into_iter().collect()
}

fn cmd_corrupt(a: &CorruptArgs, mode: LoadMode) -> Result<()> {
    let params = CorruptionParams {
        sigma_g: a.sigma_g,
        validness_blur: a.validness_blur,
        topology_blur: a.topology_blur,
        spurious: a.spurious,
        outliers: a.outliers,
        seed: a.seed,
    };
    if !(params.sigma_g >= 0.0) || !(0.0..=1.0).contains(&params.validness_blur) || !(0.0..=1.0).contains(&params.topology_blur) {
        return Err(Error::Argument("need --sigma-g >= 0 and blur strengths in [0, 1]".into()));
    }
    let pairs = a.batch.inputs.iter().cloned().zip(outputs(&a.batch, ".soft.json")).collect();
    run_batch(pairs, |input, out| {
        let gt = io::load_complex(input, mode)?.into_chain()?;
        let (soft, trace) = corrupt_with_trace(&gt, &params);
        let doc = ComplexDocument::probabilistic(soft)
            .with("generator", "corrupt")
            .with("source", input.display())
            .with("seed", params.seed)
            .with("duplicates", trace.duplicates.len())
            .with("outliers", trace.outliers.len());
        io::save_complex(&doc, out)
    })
}

fn extraction_report(r: &mut Report, x: &chainrep::extraction::Extraction<f64>, elapsed: Duration) -> Result<()> {
    r.add("extract.variables", x.num_vars)
        .add("extract.constraints", x.num_constraints)
        .add("extract.objective", x.solution.objective)
        .add("extract.optimal", x.solution.optimal)
        .add("extract.gap", x.solution.gap)
        .add("extract.nodes", x.solution.nodes)
        .add("extract.method", x.solution.method)
        .add("extract.cutoff", x.cutoff)
        .add("extract.suppressed", x.suppressed.total())
        .add("extract.seconds", elapsed.as_secs_f64())
        .add("extract.patches", x.complex.num_patches())
        .add("extract.curves", x.complex.num_curves())
        .add("extract.corners", x.complex.num_corners())
        .add("extract.topology_residuals", topology_residuals(&x.complex)?)
        .add("extract.dependencies_hold", check_dependencies(&x.complex));
    Ok(())
}

fn cmd_extract(a: &ExtractArgs, mode: LoadMode) -> Result<()> {
    let opts = a.flags.options()?;
    if a.lp_dump.is_some() && a.batch.inputs.len() > 1 {
        usage_error("--lp-dump takes a single input");
    }
    let pairs = a.batch.inputs.iter().cloned().zip(outputs(&a.batch, ".complex.json")).collect();
    run_batch(pairs, |input, out| {
        let soft = io::load_complex(input, mode)?.into_probabilistic()?;
        if let Some(lp) = &a.lp_dump {
            let (deduped, _) = nms(&soft, opts.nms_threshold);
            let s = proximity_matrices(&deduped, opts.epsilon);
            let em = build_ilp(&combine_probabilities(&deduped), &s, &opts.weights, opts.cutoff)?;
            io::write_atomic(lp, write_lp(&em.model).as_bytes())?;
        }
        let t = Instant::now();
        let x = extract_complex(&soft, &opts)?;
        let mut r = Report::default();
        r.add("input", input.display().to_string());
        extraction_report(&mut r, &x, t.elapsed())?;
        let doc = ComplexDocument::chain(x.complex)
            .with("generator", "extract")
            .with("source", input.display())
            .with("cutoff", x.cutoff);
        io::save_complex(&doc, out)?;
        print(&r.to_text());
        Ok(())
    })
}

fn cmd_refine(a: &RefineArgs, mode: LoadMode) -> Result<()> {
    let c = io::load_complex(&a.complex, mode)?.into_chain()?;
    let pts = io::load_points(&a.points)?;
    let (out, rep) = refine(&c, &pts, &a.flags.options())?;
    let validity = validity_assessment(&out, a.validity_threshold);
    let mut r = Report::default();
    r.add("refine", &rep).add("validity", &validity);
    parent_dir(&a.out)?;
    io::save_complex(&ComplexDocument::chain(out).with("generator", "refine").with("source", a.complex.display()), &a.out)?;
    if let Some(p) = &a.report {
        parent_dir(p)?;
        io::write_atomic(p, r.to_json().as_bytes())?;
    }
    print(&r.to_text());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, mode: LoadMode) -> Result<()> {
    let pred = io::load_complex(&a.pred, mode)?.into_chain()?;
    let gt = io::load_complex(&a.gt, mode)?.into_chain()?;
    let pts = a.points.as_ref().map(|p| io::load_points(p)).transpose()?;
    let e = evaluate(&pred, &gt, pts.as_deref(), &a.flags.options())?;
    let mut r = Report::default();
    r.add("", &e);
    if let Some(p) = &a.out {
        parent_dir(p)?;
        io::write_atomic(p, r.to_json().as_bytes())?;
    }
    print(&r.to_text());
    Ok(())
}

fn cmd_validate(a: &ValidateArgs, mode: LoadMode) -> Result<()> {
    let c = io::load_complex(&a.complex, mode)?.into_chain()?;
    let v = validity_assessment(&c, a.threshold);
    let mut r = Report::default();
    r.add("validity", &v)
        .add("topology_residuals", topology_residuals(&c)?)
        .add("dependencies_hold", check_dependencies(&c));
    for x in &v.violations {
        println!("violation {:?} {} {} distance {:?}", x.adjacency, x.higher, x.lower, x.distance);
    }
    if let Some(p) = &a.out {
        parent_dir(p)?;
        io::write_atomic(p, r.to_json().as_bytes())?;
    }
    print(&r.to_text());
    Ok(())
}

fn cmd_export(a: &ExportArgs, mode: LoadMode) -> Result<()> {
    let pairs = a.batch.inputs.iter().cloned().zip(outputs(&a.batch, ".obj")).collect();
    run_batch(pairs, |input, out| {
        let c = io::load_complex(input, mode)?.into_chain()?;
        let m = io::export_mesh(&c, out, a.subdivisions)?;
        let triangles: usize = m.patches.iter().map(|p| p.triangles.len()).sum();
        println!(
            "{}: {} patches ({triangles} triangles), {} curves, {} corners, {} skipped",
            out.display(),
            m.patches.len(),
            m.polylines.len(),
            m.corners.len(),
            m.skipped.len()
        );
        Ok(())
    })
}

fn cmd_pipeline(a: &PipelineArgs, mode: LoadMode) -> Result<()> {
    let start = Instant::now();
    let opts = a.extract.options()?;
    let soft = io::load_complex(&a.soft, mode)?.into_probabilistic()?;
    let pts = io::load_points(&a.points)?;
    let gt = a.gt.as_ref().map(|p| io::load_complex(p, mode).and_then(ComplexDocument::into_chain)).transpose()?;
    create_dir(&a.out_dir)?;
    let name = stem(&a.soft);

    let t = Instant::now();
    let x = extract_complex(&soft, &opts)?;
    let mut r = Report::default();
    r.add("input", a.soft.display().to_string());
    extraction_report(&mut r, &x, t.elapsed())?;
    io::save_complex(
        &ComplexDocument::chain(x.complex.clone()).with("generator", "pipeline/extract"),
        &a.out_dir.join(format!("{name}.complex.json")),
    )?;

    let t = Instant::now();
    let (refined, rep) = refine(&x.complex, &pts, &a.refine.options())?;
    r.add("refine", &rep).add("refine.seconds", t.elapsed().as_secs_f64());
    let validity = validity_assessment(&refined, a.eval.validity_threshold);
    r.add("validity", &validity);
    io::save_complex(
        &ComplexDocument::chain(refined.clone()).with("generator", "pipeline/refine"),
        &a.out_dir.join(format!("{name}.refined.json")),
    )?;
    if a.mesh {
        io::export_mesh(&refined, &a.out_dir.join(format!("{name}.obj")), io::TRIM_SUBDIVISIONS)?;
    }
    if let Some(gt) = &gt {
        r.add("eval", evaluate(&refined, gt, Some(&pts), &a.eval.options())?);
    }
    r.add("seconds", start.elapsed().as_secs_f64());
    io::write_atomic(&a.out_dir.join(format!("{name}.report.json")), r.to_json().as_bytes())?;
    print(&r.to_text());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mode = mode(cli);
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Corrupt(a) => cmd_corrupt(a, mode),
        Command::Extract(a) => cmd_extract(a, mode),
        Command::Refine(a) => cmd_refine(a, mode),
        Command::Evaluate(a) => cmd_evaluate(a, mode),
        Command::Validate(a) => cmd_validate(a, mode),
        Command::Export(a) => cmd_export(a, mode),
        Command::Pipeline(a) => cmd_pipeline(a, mode),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut obj = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            if let Some(h) = e.hint() {
                obj["hint"] = h.into();
            }
            eprintln!("{obj}");
            ExitCode::from(1)
        }
    }
}
