use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lfdepth::autodiff::{gradcheck::gradcheck, OpKind};
use lfdepth::config::Config;
use lfdepth::dataset::{export_lightfield, load_lightfield, write_image, LfMode};
use lfdepth::dispnet::{DispNet, DispNetConfig};
use lfdepth::losses::{gradcheck_loss, LossKind};
use lfdepth::metrics::{bpr, mse_x100, DENSE_THRESHOLDS, SPARSE_THRESHOLDS};
use lfdepth::occlusion::OccNet;
use lfdepth::params::ParamStore;
use lfdepth::pfm::{read_pfm, write_pfm};
use lfdepth::pipeline::{fuse_maps, run, select_aux};
use lfdepth::synth::{generate_synthetic, SyntheticSpec};
use lfdepth::train::{train, Model};
use lfdepth::viz::{falsecolor, save_png};
use lfdepth::{DisparityMap, Image};

#[derive(Parser)]
#[command(name = "lfdepth", version, about = "Unsupervised light-field disparity estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the center-view disparity of a light field.
    Estimate(EstimateArgs),
    /// Fuse precomputed candidate maps using a light field's auxiliary views.
    Fuse(FuseArgs),
    /// Train DispNet and OccNet without ground truth.
    Train(TrainArgs),
    /// Score disparity maps against ground truth as CSV.
    Eval(EvalArgs),
    /// Render a synthetic light field with ground truth.
    Synth(SynthArgs),
    /// Check analytic gradients of every op and loss against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dense,
    Sparse,
}

impl From<ModeArg> for LfMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dense => LfMode::Dense,
            ModeArg::Sparse => LfMode::Sparse,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured light-field mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

impl ConfigArgs {
    fn resolve(&self, fallback: Option<LfMode>) -> Result<Config> {
        let mode = self.mode.map(LfMode::from);
        Ok(match &self.config {
            Some(path) => Config::load(path, mode)?,
            None => Config::for_mode(mode.or(fallback).unwrap_or(LfMode::Dense)),
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Light-field directory.
    #[arg(long)]
    lf: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Trained weights (LFDW1); required unless the network has no parameters.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Untrained matching: raw image features and negated-variance scores.
    #[arg(long)]
    oracle: bool,
    /// Output PFM.
    #[arg(long)]
    out: PathBuf,
    /// Also write each combination's map here.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// False-color PNG of the result.
    #[arg(long)]
    falsecolor: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    lf: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Candidate PFMs in the center-view frame.
    #[arg(long, num_args = 1.., required = true)]
    candidates: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training light-field directories.
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Add this many random synthetic scenes.
    #[arg(long, default_value_t = 0)]
    synthetic: usize,
    /// Size of the synthetic scenes.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fix both confidences at 0.5 instead of training OccNet.
    #[arg(long)]
    no_occnet: bool,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Checkpoints, loss curve and resolved config go here.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth PFM.
    #[arg(long)]
    gt: PathBuf,
    /// Estimated PFMs.
    #[arg(long, num_args = 1.., required = true)]
    est: Vec<PathBuf>,
    /// Method names, one per estimate; file stems by default.
    #[arg(long, num_args = 1..)]
    method: Vec<String>,
    #[arg(long, default_value = "scene")]
    scene: String,
    /// Pixels excluded at each edge.
    #[arg(long, default_value_t = 15)]
    border: usize,
    /// Chooses the bad-pixel thresholds.
    #[arg(long, value_enum, default_value = "dense")]
    mode: ModeArg,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Plane,
    TwoPlanes,
    Random,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Scene description in TOML; overrides the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    preset: Preset,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plane disparity.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    disparity: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    back: f64,
    #[arg(long, default_value_t = 2.5, allow_hyphen_values = true)]
    front: f64,
    /// Gaussian sensor noise deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LFDEPTH_THREADS") {
        let n: usize = v.parse().with_context(|| format!("LFDEPTH_THREADS={v:?} is not a count"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
    }
    Ok(())
}

fn config_path(out: &Path) -> PathBuf {
    out.with_extension("config.toml")
}

fn load_params(net_specs: bool, checkpoint: &Option<PathBuf>) -> Result<ParamStore> {
    match checkpoint {
        Some(p) => Ok(ParamStore::load(p)?),
        None if !net_specs => Ok(ParamStore::new()),
        None => bail!("the configured network has learned weights; pass --checkpoint or --oracle"),
    }
}

fn display_range(map: &DisparityMap) -> (f64, f64) {
    let lo = map.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let data = load_lightfield(&a.lf).with_context(|| format!("loading {}", a.lf.display()))?;
    let mut cfg = a.cfg.resolve(data.layout.mode)?;
    if a.oracle {
        cfg.dispnet = DispNetConfig {
            coarse_to_fine: cfg.dispnet.coarse_to_fine,
            oracle_sharpness: cfg.dispnet.oracle_sharpness,
            ..DispNetConfig::oracle()
        };
    }
    let net = DispNet::new(cfg.dispnet.clone(), data.lightfield.channels())?;
    let params = load_params(!net.param_specs().is_empty(), &a.checkpoint)?;
    let out = run(&data.lightfield, &net, &params, &cfg.pipeline()?)?;
    write_pfm(&a.out, &out.disparity)?;
    cfg.echo(&config_path(&a.out))?;
    if let Some(dir) = &a.candidates {
        std::fs::create_dir_all(dir)?;
        for c in &out.candidates {
            write_pfm(dir.join(format!("{}.pfm", c.combo)), &c.estimate.refined)?;
        }
    }
    if let Some(png) = &a.falsecolor {
        let (lo, hi) = display_range(&out.disparity);
        save_png(&falsecolor(&out.disparity, lo, hi)?, png)?;
    }
    Ok(())
}

fn fuse(a: &FuseArgs) -> Result<()> {
    let data = load_lightfield(&a.lf)?;
    let cfg = a.cfg.resolve(data.layout.mode)?;
    let maps = a
        .candidates
        .iter()
        .map(|p| read_pfm(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    // the combinations behind file inputs are unknown, so nothing is excluded
    let aux = select_aux(&data.lightfield, &cfg.inference.aux, &[], false)?;
    let pipeline = cfg.pipeline()?;
    let (fused, _) = fuse_maps(&data.lightfield, &maps, &aux, &pipeline.fusion)?;
    write_pfm(&a.out, &fused)?;
    cfg.echo(&config_path(&a.out))?;
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve(None)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if a.no_occnet {
        cfg.train.use_occnet = false;
    }
    let mut scenes = Vec::new();
    for dir in &a.data {
        scenes.push(load_lightfield(dir).with_context(|| format!("loading {}", dir.display()))?.lightfield);
    }
    for i in 0..a.synthetic {
        let seed = cfg.train.seed.wrapping_mul(1000).wrapping_add(i as u64);
        scenes.push(generate_synthetic(&SyntheticSpec::random(a.size, seed), seed)?.lightfield);
    }
    let Some(first) = scenes.first() else {
        bail!("no training data: pass --data or --synthetic");
    };
    let channels = first.channels();
    let model = Model {
        dispnet: DispNet::new(cfg.dispnet.clone(), channels)?,
        occnet: OccNet::new(cfg.occnet.clone(), channels)?,
        sampling: cfg.sampling()?,
    };
    let params = match &a.init {
        Some(p) => ParamStore::load(p)?,
        None => model.init_params(cfg.train.seed),
    };
    std::fs::create_dir_all(&a.out_dir)?;
    cfg.echo(&a.out_dir.join("config.toml"))?;
    let out = train(&model, &scenes, params, &cfg.train, Some(&a.out_dir))?;
    if let Some(last) = out.curve.last() {
        eprintln!("epoch {}: l_full {:.6}", last.epoch, last.terms.full);
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalRow<'a> {
    scene: &'a str,
    method: &'a str,
    mse_x100: f64,
    bpr_a: f64,
    bpr_b: f64,
    bpr_c: f64,
    border_margin: usize,
}

fn eval(a: &EvalArgs) -> Result<()> {
    if !a.method.is_empty() && a.method.len() != a.est.len() {
        bail!("{} method names for {} estimates", a.method.len(), a.est.len());
    }
    let gt = read_pfm(&a.gt)?;
    let thresholds = match a.mode {
        ModeArg::Dense => DENSE_THRESHOLDS,
        ModeArg::Sparse => SPARSE_THRESHOLDS,
    };
    let sink: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for (i, path) in a.est.iter().enumerate() {
        let d = read_pfm(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let method = a.method.get(i).cloned().unwrap_or(stem);
        let b = |t| bpr(&d, &gt, t, a.border);
        w.serialize(EvalRow {
            scene: &a.scene,
            method: &method,
            mse_x100: mse_x100(&d, &gt, a.border)?,
            bpr_a: b(thresholds[0])?,
            bpr_b: b(thresholds[1])?,
            bpr_c: b(thresholds[2])?,
            border_margin: a.border,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => match a.preset {
            Preset::Plane => SyntheticSpec::plane(a.size, a.disparity),
            Preset::TwoPlanes => SyntheticSpec::two_planes(a.size, a.back, a.front),
            Preset::Random => SyntheticSpec::random(a.size, a.seed),
        },
    };
    if a.spec.is_none() {
        spec.noise = a.noise;
    }
    let scene = generate_synthetic(&spec, a.seed)?;
    export_lightfield(&a.out, &scene.lightfield, Some(&scene.disparity))?;
    let masks = a.out.join("occlusion");
    std::fs::create_dir_all(&masks)?;
    let (nu, nv) = scene.lightfield.angular_size();
    let (nx, ny) = scene.lightfield.spatial_size();
    let occ = scene.occlusion.data();
    for u in 0..nu {
        for v in 0..nv {
            let base = (u * nv + v) * nx * ny;
            let mask = Image::from_fn(nx, ny, 1, |x, y, _| occ[base + x * ny + y]);
            write_image(&masks.join(format!("mask_{u:02}_{v:02}.png")), &mask)?;
        }
    }
    #[derive(serde::Serialize)]
    struct SceneFile<'a> {
        seed: u64,
        spec: &'a SyntheticSpec,
    }
    let text = toml::to_string(&SceneFile { seed: a.seed, spec: &spec })?;
    std::fs::write(a.out.join("scene.toml"), text)?;
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<bool> {
    let mut ok = true;
    let mut report = |name: &str, err: f64| {
        let pass = err < a.tol;
        ok &= pass;
        println!("{name:<24} {err:.3e} {}", if pass { "pass" } else { "FAIL" });
    };
    for kind in OpKind::ALL {
        report(kind.name(), gradcheck(kind, a.trials, a.seed)?);
    }
    for kind in LossKind::ALL {
        report(kind.name(), gradcheck_loss(kind, a.trials, a.seed)?);
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Fuse(a) => fuse(a).map(|_| true),
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
