//! `vpk` command line. Exit codes: 0 success, 1 runtime failure, 2 usage error,
//! 3 ablation ordering not reproduced.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autonet::{read_checkpoint, write_checkpoint, Network};
use crate::error::{Error, Result};
use crate::heatmap::{
    decode_argmax, decode_soft, read_volume, write_volume, HeatmapVolume, SupervisionLadder,
    DEFAULT_SIGMA, DEFAULT_SOFT_WINDOW,
};
use crate::metrics::{MetricAccumulator, MetricSummary};
use crate::skeleton::{make_toy_skeleton, BBox, Camera, Pose2D, Pose3D, Skeleton};
use crate::trainer::{
    evaluate, make_dataset, run_ablation, train_and_evaluate, DataSpec, RunOptions, Sample, Suite,
    TrainConfig,
};
use crate::voxelgrid::{lift_to_3d, GridSpec, VoxelGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABLATION_FAIL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "vpk",
    version,
    about = "Volumetric 3D pose experiments on a synthetic benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: skeleton, pose records and rendered inputs.
    SynthData(SynthArgs),
    /// Write per-stage target volumes for every sample of a dataset split.
    MakeTargets(TargetArgs),
    /// Train one configuration; writes checkpoint, config and report.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split, or compare two pose files.
    Eval(EvalArgs),
    /// Decode joint positions from a volume file.
    Decode(DecodeArgs),
    /// Run a paired-architecture suite over several seeds.
    Ablation(AblationArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_train: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_test: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Dataset directory written by synth-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Comma-separated depth ladder, e.g. 1,2,16.
    #[arg(long, default_value = "16")]
    pub ladder: SupervisionLadder,
    /// Spatial grid size (w = h).
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Record wall-clock time in the report (makes it non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Mpjpe,
    Recon,
    Pcp,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by train; its config.json must sit next to it.
    #[arg(long, requires = "data", conflicts_with_all = ["pred", "gt"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Predicted poses, one JSON array of [x, y, z] per line.
    #[arg(long, requires = "gt")]
    pub pred: Option<PathBuf>,
    /// Groundtruth poses in the same format.
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    /// Skeleton JSON for pose-file mode; defaults to the toy skeleton.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "mpjpe,recon,pcp"
    )]
    pub metrics: Vec<MetricName>,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Expected grid as w,h,d; checked against the file.
    #[arg(long)]
    pub grid: Option<String>,
    /// Sub-voxel expectation instead of the hard argmax.
    #[arg(long)]
    pub soft: bool,
    #[arg(long, default_value_t = DEFAULT_SOFT_WINDOW)]
    pub window: usize,
    /// Bounding box x,y,w,h in pixels; with --root-z, coordinates are also lifted to millimetres.
    #[arg(long, requires = "root_z")]
    pub bbox: Option<String>,
    #[arg(long, requires = "bbox")]
    pub root_z: Option<f64>,
    #[arg(long, default_value_t = 1000.0)]
    pub z_half_range: f64,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    /// Number of seeds; seeds 0..N are used.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    /// Base configuration; model, ladder and fusion are overridden per arm.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the step budget of every arm.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Table1,
    Table2,
    Table3,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Table1 => Suite::Table1,
            SuiteArg::Table2 => Suite::Table2,
            SuiteArg::Table3 => Suite::Table3,
        }
    }
}

/// One line of train.jsonl / test.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub split: String,
    pub pose_3d_mm: Vec<[f64; 3]>,
    pub pose_2d_px: Vec<[f64; 2]>,
    pub bbox: BBox,
    pub root_depth_mm: f64,
    pub noise_seed: u64,
    /// Input image path relative to the dataset directory.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetManifest {
    pub split: String,
    pub ladder: SupervisionLadder,
    pub sigma: f64,
    pub grid: [usize; 2],
    pub files: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedJoint {
    pub joint: usize,
    pub i: f64,
    pub j: f64,
    pub k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera_mm: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    pub grid: [usize; 3],
    pub joints: usize,
    pub decoder: String,
    pub coordinates: Vec<DecodedJoint>,
}

/// Metrics selected with `--metrics`; absent keys were not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpjpe_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recon_err_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcp: Option<std::collections::BTreeMap<String, f64>>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| io_context(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| io_context(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

fn parse_list<const N: usize>(s: &str, what: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            Error::Config(format!(
                "{what} must be {N} comma-separated numbers, got {s:?}"
            ))
        })?;
    v.try_into().map_err(|_| {
        Error::Config(format!(
            "{what} must be {N} comma-separated numbers, got {s:?}"
        ))
    })
}

fn image_volume(sample: &Sample, size: usize) -> Result<HeatmapVolume> {
    HeatmapVolume::from_data(
        size,
        size,
        1,
        1,
        sample.image.iter().map(|&v| v as f64).collect(),
    )
}

fn synth_data(args: &SynthArgs) -> Result<()> {
    let skeleton = make_toy_skeleton();
    let spec = DataSpec::default();
    let data = make_dataset(
        &skeleton,
        args.n_train as usize,
        args.n_test as usize,
        args.seed,
        &spec,
    )?;
    fs::create_dir_all(args.out.join("images"))?;
    write_json(&args.out.join("skeleton.json"), &skeleton)?;
    for (split, samples) in [(Split::Train, &data.train), (Split::Test, &data.test)] {
        let mut w = BufWriter::new(File::create(
            args.out.join(format!("{}.jsonl", split.name())),
        )?);
        for s in samples.iter() {
            let image = format!("images/{}_{:06}.vol", split.name(), s.id);
            let vol = image_volume(s, spec.image_size)?;
            let mut f = BufWriter::new(File::create(args.out.join(&image))?);
            write_volume(&mut f, &vol)?;
            f.flush()?;
            let rec = Record {
                id: s.id,
                split: split.name().into(),
                pose_3d_mm: s.pose.coords.clone(),
                pose_2d_px: s.pose2d.coords.clone(),
                bbox: s.pose2d.bbox,
                root_depth_mm: s.grid.z_center,
                noise_seed: s.noise_seed,
                image,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    println!(
        "wrote {} train and {} test samples to {}",
        data.train.len(),
        data.test.len(),
        args.out.display()
    );
    Ok(())
}

/// Loads a split written by synth-data, binding each sample to `grid`.
fn load_split(dir: &Path, split: Split, grid: &GridSpec) -> Result<(Skeleton, Vec<Sample>)> {
    let skeleton: Skeleton = read_json(&dir.join("skeleton.json"))?;
    skeleton.validate()?;
    let records: Vec<Record> = read_jsonl(&dir.join(format!("{}.jsonl", split.name())))?;
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        let pose = Pose3D::new(r.pose_3d_mm);
        if pose.len() != skeleton.n_joints || r.pose_2d_px.len() != skeleton.n_joints {
            return Err(Error::ShapeMismatch(format!(
                "record {} has {} joints, skeleton has {}",
                r.id,
                pose.len(),
                skeleton.n_joints
            )));
        }
        let path = dir.join(&r.image);
        let vol = read_volume(BufReader::new(
            File::open(&path).map_err(|e| io_context(&path, e))?,
        ))?;
        if vol.d != 1 || vol.n != 1 || vol.w != vol.h {
            return Err(Error::Format(format!(
                "{} is not a square single-channel image",
                r.image
            )));
        }
        samples.push(Sample {
            id: r.id,
            grid: grid.bind(r.bbox, r.root_depth_mm),
            pose,
            pose2d: Pose2D {
                coords: r.pose_2d_px,
                bbox: r.bbox,
            },
            noise_seed: r.noise_seed,
            image: vol.to_f32(),
        });
    }
    Ok((skeleton, samples))
}

fn make_targets(args: &TargetArgs) -> Result<()> {
    let mut grid = GridSpec::cube(args.size);
    grid.d = args.ladder.final_depth();
    grid.validate()?;
    let (_, samples) = load_split(&args.data, args.split, &grid)?;
    fs::create_dir_all(&args.out)?;
    let mut files = Vec::with_capacity(samples.len());
    for s in &samples {
        let mut names = Vec::new();
        for (stage, vol) in s.targets(&args.ladder, args.sigma)?.iter().enumerate() {
            let name = format!("{}_{:06}_s{stage}.vol", args.split.name(), s.id);
            let mut f = BufWriter::new(File::create(args.out.join(&name))?);
            write_volume(&mut f, vol)?;
            f.flush()?;
            names.push(name);
        }
        files.push(names);
    }
    write_json(
        &args.out.join("targets.json"),
        &TargetManifest {
            split: args.split.name().into(),
            ladder: args.ladder.clone(),
            sigma: args.sigma,
            grid: [args.size, args.size],
            files,
        },
    )?;
    println!(
        "wrote targets for {} samples to {}",
        samples.len(),
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let cfg: TrainConfig = read_json(&args.config)?;
    cfg.validate()?;
    fs::create_dir_all(&args.out)?;
    let (net, report) = train_and_evaluate(
        &cfg,
        RunOptions {
            timing: args.timing,
        },
    )?;
    let mut f = BufWriter::new(File::create(args.out.join("model.vpkt"))?);
    write_checkpoint(&mut f, &net.params)?;
    f.flush()?;
    write_json(&args.out.join("config.json"), &cfg)?;
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "{}: test MPJPE {:.2} mm, reconstruction error {:.2} mm",
        cfg.label(),
        report.test_mpjpe_mm,
        report.test_recon_err_mm
    );
    Ok(())
}

fn select(summary: MetricSummary, metrics: &[MetricName]) -> EvalOutput {
    EvalOutput {
        count: summary.count,
        mpjpe_mm: metrics
            .contains(&MetricName::Mpjpe)
            .then_some(summary.mpjpe_mm),
        recon_err_mm: metrics
            .contains(&MetricName::Recon)
            .then_some(summary.recon_err_mm),
        pcp: metrics.contains(&MetricName::Pcp).then_some(summary.pcp),
    }
}

fn print_eval(out: &EvalOutput) {
    println!("{:<24}{:>12}", "metric", "value");
    println!("{:<24}{:>12}", "poses", out.count);
    if let Some(v) = out.mpjpe_mm {
        println!("{:<24}{:>12.2}", "mpjpe_mm", v);
    }
    if let Some(v) = out.recon_err_mm {
        println!("{:<24}{:>12.2}", "recon_err_mm", v);
    }
    for (group, v) in out.pcp.iter().flatten() {
        println!("{:<24}{:>12.3}", format!("pcp_{group}"), v);
    }
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let summary = match (&args.checkpoint, &args.data, &args.pred, &args.gt) {
        (Some(ckpt), Some(data), None, None) => {
            let dir = ckpt.parent().unwrap_or(Path::new("."));
            let cfg: TrainConfig = read_json(&dir.join("config.json"))?;
            cfg.validate()?;
            let (skeleton, samples) = load_split(data, args.split, &cfg.grid)?;
            let mut net: Network<f32> = Network::new(cfg.net_config(skeleton.n_joints), cfg.seed)?;
            let stored = read_checkpoint(BufReader::new(
                File::open(ckpt).map_err(|e| io_context(ckpt, e))?,
            ))?;
            net.params.assign_from(&stored)?;
            evaluate(&net, &cfg, &skeleton, &samples)?
        }
        (None, None, Some(pred), Some(gt)) => {
            let skeleton = match &args.skeleton {
                Some(p) => read_json(p)?,
                None => make_toy_skeleton(),
            };
            let preds: Vec<Vec<[f64; 3]>> = read_jsonl(pred)?;
            let gts: Vec<Vec<[f64; 3]>> = read_jsonl(gt)?;
            if preds.len() != gts.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} predicted poses vs {} groundtruth poses",
                    preds.len(),
                    gts.len()
                )));
            }
            let mut acc = MetricAccumulator::default();
            for (p, g) in preds.into_iter().zip(gts) {
                let (p, g) = (Pose3D::new(p), Pose3D::new(g));
                skeleton.check_pose(&g)?;
                acc.add(&p, &g, &skeleton)?;
            }
            acc.summary()
        }
        _ => {
            return Err(Error::Config(
                "eval needs either --checkpoint with --data, or --pred with --gt".into(),
            ))
        }
    };
    let out = select(summary, &args.metrics);
    print_eval(&out);
    if let Some(path) = &args.out {
        write_json(path, &out)?;
    }
    Ok(())
}

fn decode_cmd(args: &DecodeArgs) -> Result<()> {
    let path = &args.volume;
    let vol = read_volume(BufReader::new(
        File::open(path).map_err(|e| io_context(path, e))?,
    ))?;
    if let Some(g) = &args.grid {
        let [w, h, d] = parse_list::<3>(g, "--grid")?;
        if [w, h, d] != [vol.w as f64, vol.h as f64, vol.d as f64] {
            return Err(Error::ShapeMismatch(format!(
                "--grid {g} does not match the volume's {}x{}x{}",
                vol.w, vol.h, vol.d
            )));
        }
    }
    let coords = if args.soft {
        decode_soft(&vol, args.window)
    } else {
        decode_argmax(&vol)
    };
    let lift = match (&args.bbox, args.root_z) {
        (Some(b), Some(z)) => {
            let [x, y, w, h] = parse_list::<4>(b, "--bbox")?;
            let grid = VoxelGrid {
                w: vol.w,
                h: vol.h,
                d: vol.d,
                bbox: BBox { x, y, w, h },
                z_half_range: args.z_half_range,
                z_center: z,
            };
            grid.validate()?;
            Some(grid)
        }
        _ => None,
    };
    let mut joints = Vec::with_capacity(coords.len());
    for (n, c) in coords.iter().enumerate() {
        let camera_mm = match &lift {
            Some(g) => Some(lift_to_3d(g, *c, &Camera::default())?),
            None => None,
        };
        joints.push(DecodedJoint {
            joint: n,
            i: c.i,
            j: c.j,
            k: c.k,
            camera_mm,
        });
    }
    let out = DecodeOutput {
        grid: [vol.w, vol.h, vol.d],
        joints: vol.n,
        decoder: if args.soft { "soft" } else { "argmax" }.into(),
        coordinates: joints,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

/// Worker threads from `VPK_THREADS`, default 1.
pub fn thread_count() -> Result<usize> {
    match std::env::var("VPK_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "VPK_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn ablation_cmd(args: &AblationArgs) -> Result<bool> {
    let mut base = match &args.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.steps {
        base.steps = s as usize;
    }
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let report = run_ablation(args.suite.into(), &seeds, &base, thread_count()?)?;
    for c in &report.comparisons {
        println!("{}", c.name);
        for (k, s) in seeds.iter().enumerate() {
            println!(
                "  seed {s}: {} {:.2} mm vs {} {:.2} mm",
                c.better, c.better_mpjpe_mm[k], c.worse, c.worse_mpjpe_mm[k]
            );
        }
        println!(
            "  published: {:.2} vs {:.2} mm; ordering held on {}/{} seeds: {}",
            c.published_mm[0],
            c.published_mm[1],
            c.seeds_preserving,
            seeds.len(),
            c.verdict
        );
    }
    println!("verdict: {}", report.verdict);
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    Ok(report.passed())
}

/// Runs a parsed command and maps the outcome to an exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::SynthData(a) => synth_data(a).map(|_| true),
        Command::MakeTargets(a) => make_targets(a).map(|_| true),
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Eval(a) => eval_cmd(a).map(|_| true),
        Command::Decode(a) => decode_cmd(a).map(|_| true),
        Command::Ablation(a) => ablation_cmd(a),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_ABLATION_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Entry point of the `vpk` binary.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    run(cli)
}
