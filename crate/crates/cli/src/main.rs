mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use scenepose_core::evaluation::Report;
use scenepose_core::labeler::label_bundle;
use scenepose_core::models::library;
use scenepose_core::pipeline::{estimate, estimated_poses, evaluate, hypothesize, EstimatedPose, Method, ObjectHypotheses, PipelineConfig};
use scenepose_core::render::{render_depth, DepthImage};
use scenepose_core::scene::{generate_scene, SceneBundle};

use config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "scenepose", version, about = "Scene-level pose estimation on synthetic depth scenes")]
struct Cli {
    /// TOML file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for generation, matching and search.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenes processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scene bundles.
    Gen {
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        objects: Option<usize>,
        /// Keep ground-truth detections and exact depth.
        #[arg(long)]
        noiseless: bool,
    },
    /// Clustered pose hypotheses per detected object.
    Hypo { scenes: Vec<PathBuf> },
    /// Estimate object poses.
    Estimate {
        scenes: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Mcts)]
        method: MethodArg,
        #[arg(long)]
        expansions: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Read hypotheses written by `hypo` from this directory.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
    },
    /// Multi-view labels for every object.
    Label { scenes: Vec<PathBuf> },
    /// Score estimates against ground truth.
    Eval {
        scenes: Vec<PathBuf>,
        /// Directory written by `estimate`.
        #[arg(long)]
        estimates: PathBuf,
    },
    /// Depth images of the estimates next to the observed ones.
    Render {
        scenes: Vec<PathBuf>,
        #[arg(long)]
        estimates: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Mcts,
    Heuristic,
    PerObject,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mcts => Method::Mcts,
            MethodArg::Heuristic => Method::Heuristic,
            MethodArg::PerObject => Method::PerObject,
        }
    }
}

/// Input files that do not exist or cannot be read.
#[derive(Debug)]
struct MissingInput(String);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for MissingInput {}

const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_PIPELINE: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<MissingInput>() || cause.is::<std::io::Error>() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<scenepose_core::Error>() {
            return match e {
                scenepose_core::Error::Io { .. } => EXIT_INPUT,
                _ => EXIT_PIPELINE,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if cli.jobs == 0 {
        bail!(ConfigError("--jobs must be at least 1".into()));
    }
    if let Some(seed) = cli.seed {
        cfg.scene.seed = seed;
        cfg.pipeline.search.seed = seed;
        cfg.pipeline.matching.seed = seed;
        cfg.labeler.matching.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    pool.install(|| match cli.command {
        Command::Gen {
            scenes,
            objects,
            noiseless,
        } => {
            if let Some(n) = scenes {
                cfg.scene.scenes = n;
            }
            if let Some(n) = objects {
                cfg.scene.objects = n;
            }
            if noiseless {
                cfg.noise.enabled = false;
            }
            gen(&cfg, &cli.out)
        }
        Command::Hypo { scenes } => per_scene(&scenes, &cli.out, |bundle, dir| {
            let hyps = hypothesize(bundle, &cfg.pipeline);
            write_json(&dir.join("hypotheses.json"), &hyps)
        }),
        Command::Estimate {
            scenes,
            method,
            expansions,
            alpha,
            hypotheses,
        } => {
            if let Some(n) = expansions {
                cfg.pipeline.search.max_expansions = n;
            }
            if let Some(a) = alpha {
                if !(a >= 0.0) {
                    bail!(ConfigError(format!("--alpha must be non-negative, got {a}")));
                }
                cfg.pipeline.search.alpha = a;
            }
            per_scene(&scenes, &cli.out, |bundle, dir| estimate_scene(bundle, dir, method.into(), hypotheses.as_deref(), &cfg.pipeline))
        }
        Command::Label { scenes } => per_scene(&scenes, &cli.out, |bundle, dir| {
            let set = label_bundle(bundle, &cfg.labeler);
            for (view, labels) in set.views.iter().enumerate() {
                write_json(&dir.join(format!("labels_{view}.json")), labels)?;
            }
            write_json(&dir.join("label_poses.json"), &set.poses)?;
            for (object, reason) in &set.skipped {
                eprintln!("{}: {object} not labelled: {reason}", dir.display());
            }
            Ok(())
        }),
        Command::Eval { scenes, estimates } => eval(&scenes, &estimates, &cli.out, &cfg.pipeline),
        Command::Render { scenes, estimates } => per_scene(&scenes, &cli.out, |bundle, dir| {
            let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
            let est = read_estimates(&estimates, &name)?;
            render_scene(bundle, &est, dir)
        }),
    })
}

fn gen(cfg: &Config, out: &Path) -> Result<()> {
    let rs = cfg.scene.surface();
    let cameras = cfg.cameras.cameras(&rs)?;
    let models = library();
    let seeds: Vec<u64> = (0..cfg.scene.scenes as u64).map(|i| cfg.scene.seed + i).collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut bundle = generate_scene(&models, &rs, &cameras, cfg.scene.objects, seed, &cfg.scene.placement)
                .with_context(|| format!("scene with seed {seed}"))?;
            if cfg.noise.enabled {
                bundle = bundle.with_noise(&cfg.noise.for_seed(seed));
            }
            let dir = out.join(format!("scene_{seed:04}"));
            bundle.write(&dir).with_context(|| format!("writing {}", dir.display()))?;
            Ok(())
        })
        .collect::<Vec<Result<()>>>()
        .into_iter()
        .collect()
}

fn scene_name(path: &Path) -> Result<String> {
    let name = path
        .file_name()
        .ok_or_else(|| MissingInput(format!("not a scene directory: {}", path.display())))?;
    Ok(name.to_string_lossy().to_string())
}

fn load_bundle(path: &Path) -> Result<SceneBundle> {
    if !path.is_dir() {
        bail!(MissingInput(format!("scene bundle not found: {}", path.display())));
    }
    SceneBundle::read(path).with_context(|| format!("reading scene bundle {}", path.display()))
}

/// Runs `f` on every scene in parallel with `out/<scene name>` created for it.
/// Errors are reported for the first failing scene in argument order.
fn per_scene<F>(scenes: &[PathBuf], out: &Path, f: F) -> Result<()>
where
    F: Fn(&SceneBundle, &Path) -> Result<()> + Sync,
{
    if scenes.is_empty() {
        bail!(ConfigError("no scene directories given".into()));
    }
    scenes
        .par_iter()
        .map(|path| {
            let bundle = load_bundle(path)?;
            let dir = out.join(scene_name(path)?);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            f(&bundle, &dir).with_context(|| format!("scene {}", path.display()))
        })
        .collect::<Vec<Result<()>>>()
        .into_iter()
        .collect()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        bail!(MissingInput(format!("file not found: {}", path.display())));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("malformed {}: {e}", path.display())).into())
}

fn read_estimates(dir: &Path, scene: &str) -> Result<Vec<EstimatedPose>> {
    read_json(&dir.join(scene).join("estimate.json"))
}

fn estimate_scene(bundle: &SceneBundle, dir: &Path, method: Method, hyp_dir: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let hyps: Vec<ObjectHypotheses> = match hyp_dir {
        Some(h) => read_json(&h.join(dir.file_name().unwrap_or_default()).join("hypotheses.json"))?,
        None => hypothesize(bundle, cfg),
    };
    let est = estimate(bundle, &hyps, method, cfg)?;
    write_json(&dir.join("estimate.json"), &estimated_poses(bundle, &est.poses))?;
    if let Some(search) = &est.search {
        let path = dir.join("trace.jsonl");
        let mut file = std::io::BufWriter::new(fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?);
        for record in &search.trace {
            serde_json::to_writer(&mut file, record)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
    }
    Ok(())
}

fn eval(scenes: &[PathBuf], estimates: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    if scenes.is_empty() {
        bail!(ConfigError("no scene directories given".into()));
    }
    let items = scenes
        .par_iter()
        .map(|path| {
            let bundle = load_bundle(path)?;
            let name = scene_name(path)?;
            let est = read_estimates(estimates, &name)?;
            Ok(evaluate(&bundle, &name, &est, cfg.view)?)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let report = Report::new(items.into_iter().flatten().collect());
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("report.json"), report.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
    fs::write(out.join("report.csv"), report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", report.to_csv());
    Ok(())
}

/// Per view: the estimate's depth and the absolute difference to the
/// observation where both have depth.
fn render_scene(bundle: &SceneBundle, est: &[EstimatedPose], dir: &Path) -> Result<()> {
    let table = bundle.surface.mesh();
    let mut objects = Vec::with_capacity(est.len() + 1);
    for e in est {
        let model = bundle
            .objects
            .get(e.index)
            .ok_or_else(|| ConfigError(format!("estimate names object {} but the scene has {}", e.index, bundle.objects.len())))?;
        objects.push((&model.mesh, e.pose));
    }
    objects.push((&table, bundle.surface.pose));
    for (view, cam) in bundle.cameras.iter().enumerate() {
        let rendered = render_depth(&objects, cam);
        let observed = &bundle.depth[view];
        let mut diff = DepthImage::for_camera(cam);
        for (d, (&r, &o)) in diff.data.iter_mut().zip(rendered.data.iter().zip(&observed.data)) {
            if r > 0.0 && o > 0.0 {
                *d = (r - o).abs();
            }
        }
        for (name, img) in [("render", &rendered), ("diff", &diff)] {
            let path = dir.join(format!("{name}_{view}.pgm"));
            fs::write(&path, img.to_pgm()).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}
