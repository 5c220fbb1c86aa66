//! Command-line entry points: `match`, `eval`, `gen-synth` and `inspect`.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad flags, malformed or
//! inconsistent files), 2 for I/O failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use noctis_core::{AssignmentConfig, PatchGridDescriptor, ScoreConfig};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::match_scenes;
use crate::results::{evaluate_dataset, write_results, ReportJson, ResultEntry};
use crate::store::{read_manifest, read_proposal_set, read_scene_proposals, read_template_library, AnyManifest, MANIFEST};
use crate::synth::{generate_benchmark, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "noctis", version, about = "Zero-shot instance segmentation matching and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score proposals against a template library and write detections.
    Match(MatchArgs),
    /// Compute mask AP of a result file against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic benchmark.
    GenSynth(SynthArgs),
    /// Summarise a descriptor container.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub templates: PathBuf,
    /// A proposal container, or a directory of proposal containers.
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with default values for any of the tuning flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_ct: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub w_appe: Option<f64>,
    /// Do not clamp the weighted appearance term to [0, 1].
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub conf_thresh: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub nms_iou: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub min_prop_conf: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub min_rel_area: Option<f64>,
    #[arg(long)]
    pub batch_proposals: Option<usize>,
    #[arg(long)]
    pub batch_objects: Option<usize>,
    /// Worker threads for scene-level parallelism (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Accepted for interface symmetry with `gen-synth`; matching is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store measured per-image runtimes in the `time` field instead of -1.
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2025)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub objects: usize,
    #[arg(long, default_value_t = 7)]
    pub templates: usize,
    #[arg(long, default_value_t = 20)]
    pub proposals: usize,
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    #[arg(long, default_value_t = 1024)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub distractor_fraction: f64,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

/// Tuning values accepted in a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delta_ct: Option<f64>,
    pub w_appe: Option<f64>,
    pub clamp: Option<bool>,
    pub top_k: Option<usize>,
    pub conf_thresh: Option<f64>,
    pub nms_iou: Option<f64>,
    pub min_prop_conf: Option<f64>,
    pub min_rel_area: Option<f64>,
    pub batch_proposals: Option<usize>,
    pub batch_objects: Option<usize>,
    pub jobs: Option<usize>,
}

/// Merged configuration of a `match` run: defaults, then file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub score: ScoreConfig,
    pub assign: AssignmentConfig,
    pub jobs: usize,
}

impl CliConfig {
    pub fn resolve(args: &MatchArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&text).map_err(|source| Error::Config {
                    path: path.clone(),
                    source,
                })?
            }
            None => FileConfig::default(),
        };
        let mut score = ScoreConfig::default();
        let mut assign = AssignmentConfig::default();
        let pick = |flag: Option<f64>, file: Option<f64>, slot: &mut f64| {
            if let Some(v) = flag.or(file) {
                *slot = v;
            }
        };
        pick(args.delta_ct, file.delta_ct, &mut score.delta_ct);
        pick(args.w_appe, file.w_appe, &mut score.w_appe);
        pick(args.conf_thresh, file.conf_thresh, &mut assign.conf_threshold);
        pick(args.nms_iou, file.nms_iou, &mut assign.nms_iou);
        pick(args.min_prop_conf, file.min_prop_conf, &mut assign.min_proposal_conf);
        pick(args.min_rel_area, file.min_rel_area, &mut assign.min_relative_area);
        if let Some(c) = file.clamp {
            score.clamp_weighted_appearance = c;
        }
        if args.no_clamp {
            score.clamp_weighted_appearance = false;
        }
        if let Some(k) = args.top_k.or(file.top_k) {
            score.semantic_top_k = k;
        }
        if let Some(b) = args.batch_proposals.or(file.batch_proposals) {
            score.batch_proposals = b;
        }
        if let Some(b) = args.batch_objects.or(file.batch_objects) {
            score.batch_objects = b;
        }
        let jobs = args
            .jobs
            .or(file.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(noctis_core::Error::InvalidConfig("jobs must be >= 1".into()).into());
        }
        score.validate()?;
        assign.validate()?;
        Ok(Self { score, assign, jobs })
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Match(a) => cmd_match(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::GenSynth(a) => cmd_gen_synth(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_match(args: &MatchArgs) -> Result<()> {
    let cfg = CliConfig::resolve(args)?;
    let lib = read_template_library(&args.templates)?;
    let scenes = read_proposal_set(&args.proposals)?;
    let matches = match_scenes(&scenes, &lib, &cfg.score, &cfg.assign, cfg.jobs)?;
    let mut entries = Vec::new();
    for m in &matches {
        let time = if args.record_time { m.seconds } else { -1.0 };
        entries.extend(m.detections.iter().map(|d| ResultEntry::new(d, time)));
        println!(
            "scene {} image {}: {} proposals, {} detections, {:.3} s",
            m.scene_id,
            m.image_id,
            m.n_proposals,
            m.detections.len(),
            m.seconds
        );
    }
    write_results(&args.out, &entries)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let report = evaluate_dataset(&args.results, &args.gt)?;
    let json = serde_json::to_string(&ReportJson::from(&report)).map_err(|source| Error::Json {
        path: args.results.clone(),
        source,
    })?;
    println!("{json}");
    Ok(())
}

pub fn cmd_gen_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        n_objects: args.objects,
        n_templates: args.templates,
        n_proposals: args.proposals,
        n_scenes: args.scenes,
        embed_dim: args.embed_dim,
        grid: args.grid,
        noise_sigma: args.noise_sigma,
        distractor_fraction: args.distractor_fraction,
        image_size: (args.width, args.height),
    };
    let bench = generate_benchmark(&cfg, &args.out)?;
    println!(
        "wrote {} objects x {} templates, {} scenes, {} annotations to {}",
        cfg.n_objects,
        cfg.n_templates,
        bench.scenes.len(),
        bench.ground_truth.len(),
        args.out.display()
    );
    Ok(())
}

fn valid_stats<'a>(descs: impl Iterator<Item = &'a PatchGridDescriptor>) -> String {
    let counts: Vec<usize> = descs.map(|d| d.valid_count()).collect();
    match (counts.iter().min(), counts.iter().max()) {
        (Some(min), Some(max)) => format!(
            "min {min}, mean {:.1}, max {max}",
            counts.iter().sum::<usize>() as f64 / counts.len() as f64
        ),
        _ => "n/a".into(),
    }
}

/// Human-readable summary of a container (or a directory of proposal containers).
pub fn inspect(path: &Path) -> Result<String> {
    let mut s = String::new();
    if !path.join(MANIFEST).is_file() && path.is_dir() {
        for scene in read_proposal_set(path)? {
            let _ = writeln!(
                s,
                "scene {} image {}: {} proposals, valid patches {}",
                scene.scene_id,
                scene.image_id,
                scene.proposals.len(),
                valid_stats(scene.proposals.iter().map(|p| &p.descriptor))
            );
        }
        return Ok(s);
    }
    match read_manifest(path)? {
        AnyManifest::Templates(m) => {
            let lib = read_template_library(path)?;
            let n_tpl: usize = lib.objects().iter().map(|o| o.templates.len()).sum();
            let _ = writeln!(s, "kind: templates");
            let _ = writeln!(s, "format: {}", m.format);
            let _ = writeln!(s, "embed_dim: {}", lib.embed_dim());
            let _ = writeln!(s, "grid: {}x{}", lib.grid(), lib.grid());
            let _ = writeln!(s, "objects: {}", lib.objects().len());
            let _ = writeln!(s, "templates: {n_tpl}");
            let _ = writeln!(
                s,
                "valid_patches: {}",
                valid_stats(lib.objects().iter().flat_map(|o| o.templates.iter()))
            );
        }
        AnyManifest::Proposals(m) => {
            let scene = read_scene_proposals(path)?;
            let _ = writeln!(s, "kind: proposals");
            let _ = writeln!(s, "format: {}", m.format);
            let _ = writeln!(s, "embed_dim: {}", m.embed_dim);
            let _ = writeln!(s, "grid: {}x{}", m.grid[0], m.grid[1]);
            let _ = writeln!(s, "scene_id: {}", scene.scene_id);
            let _ = writeln!(s, "image_id: {}", scene.image_id);
            let _ = writeln!(s, "image_size: {}x{}", scene.image_size.0, scene.image_size.1);
            let _ = writeln!(s, "proposals: {}", scene.proposals.len());
            let _ = writeln!(
                s,
                "valid_patches: {}",
                valid_stats(scene.proposals.iter().map(|p| &p.descriptor))
            );
        }
    }
    Ok(s)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    print!("{}", inspect(&args.path)?);
    Ok(())
}
