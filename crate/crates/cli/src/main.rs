mod data;
mod plot;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hdzsc_core::codebooks::{build_codebooks, memory_report, memory_report_counts, AttributeVectorMatrix, Codebook};
use hdzsc_core::encoder::{build_class_encoder, AttributeScale, ClassAttributeMatrix};
use hdzsc_core::hypervector::{cossim_hv, Hypervector, DEFAULT_DIM};
use hdzsc_core::io::{read_hdcb, save_embeddings, write_hdcb};
use hdzsc_core::metrics::WmapWeights;
use hdzsc_core::nn::TrainState;
use hdzsc_core::training::{
    evaluate_attributes, evaluate_zsc, format_split_file, generate_synthetic, summarize, sweep, train_attribute_extraction,
    train_zsc, GridSpec, Role, RunConfig, SyntheticParams,
};
use rayon::prelude::*;
use serde_json::json;

use data::{load_schema, read_text, DataArgs};
use plot::Series;

/// Bad invocation that clap cannot see, such as a missing path with no
/// `--data` to fall back on. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "hdzsc", version, about = "Zero-shot classification with stationary binary hypervector codebooks")]
struct Cli {
    /// Cap on worker threads; results do not depend on it
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    /// Seed for codebooks, synthetic tasks and training
    #[arg(long, global = true, env = "HDZSC_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build, inspect or dump hypervector codebooks
    #[command(subcommand)]
    Codebook(CodebookCommand),
    /// Write the class encoder matrix for a schema and attribute matrix
    Encode(EncodeArgs),
    /// Generate a seeded synthetic task
    Synth(SynthArgs),
    /// Train the projection head on attribute extraction
    TrainAttr(TrainAttrArgs),
    /// Train the zero-shot classifier
    TrainZsc(TrainZscArgs),
    /// Evaluate checkpoints on the test split
    Eval(EvalArgs),
    /// Hyperparameter grid search on validation classes
    Sweep(SweepArgs),
    /// Render loss curves and sweep tables as SVG
    Report(ReportArgs),
    /// Codebook memory footprint of a schema
    Memory(MemoryArgs),
}

#[derive(Debug, Subcommand)]
enum CodebookCommand {
    /// Write the group and value codebooks
    Build {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize an HDCB file
    Inspect { file: PathBuf },
    /// Write all attribute vectors, materialized
    Dump {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    attributes: PathBuf,
    #[arg(long)]
    percent: bool,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// CSV output, one row per class
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    /// Number of training classes
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    values: Option<usize>,
    #[arg(long)]
    d_in: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Run configuration. A JSON file gives the base; flags override it.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    /// Initial 1/K
    #[arg(long)]
    inv_temperature: Option<f64>,
    /// Keep the temperature at its initial value
    #[arg(long)]
    freeze_temperature: bool,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Multiplier on similarities before the attribute sigmoid
    #[arg(long)]
    logit_scale: Option<f64>,
    /// Threshold attribute targets into {0, 1}
    #[arg(long)]
    binarize: Option<f64>,
    /// Replace the stationary encoder by an MLP of this width
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainAttrArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainZscArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Warm-start checkpoint
    #[arg(long, conflicts_with = "attr_epochs")]
    init: Option<PathBuf>,
    /// Attribute-extraction epochs run before each trial
    #[arg(long, default_value_t = 0)]
    attr_epochs: usize,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum EvalTask {
    Zsc,
    Attributes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Side {
    Train,
    Test,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint files, or directories whose .ckpt files are all evaluated
    #[arg(long = "checkpoint", required = true, num_args = 1..)]
    checkpoints: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalTask::Zsc)]
    task: EvalTask,
    /// Split side for attribute evaluation
    #[arg(long, value_enum, default_value_t = Side::Test)]
    side: Side,
    /// Attribute strength counted as present
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// inv_freq, freq or uniform
    #[arg(long, default_value = "inv_freq")]
    wmap_weights: WmapWeights,
    /// CSV with per-checkpoint results
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    grid_epochs: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    grid_batch_size: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    grid_lr: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_inv_temperature: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_weight_decay: Vec<f64>,
    /// Training classes held out for validation
    #[arg(long, default_value_t = 50)]
    val_classes: usize,
    #[arg(long, default_value_t = 0)]
    attr_epochs: usize,
    /// CSV output
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Loss-curve or sweep CSV files
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MemoryArgs {
    #[arg(long, required_unless_present = "alpha", conflicts_with_all = ["alpha", "groups", "values"])]
    schema: Option<PathBuf>,
    #[arg(long, requires_all = ["groups", "values"])]
    alpha: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    values: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
}

/// Provenance echoed into every artifact.
struct Provenance {
    seed: u64,
    command: String,
    /// `--seed` or `HDZSC_SEED`, when given; overrides a config file's seed.
    seed_flag: Option<u64>,
}

impl Provenance {
    fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            command: self.command.clone(),
            seed_flag: self.seed_flag,
        }
    }

    fn header(&self, config: &str) -> String {
        format!(
            "hdzsc {}\ncommand: {}\nseed: {}\nconfig: {config}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.seed
        )
    }

    fn comment(&self, config: &str) -> String {
        self.header(config).lines().map(|l| format!("# {l}\n")).collect()
    }

    fn json(&self, config: serde_json::Value) -> serde_json::Value {
        json!({
            "tool": format!("hdzsc {}", env!("CARGO_PKG_VERSION")),
            "command": self.command,
            "seed": self.seed,
            "config": config,
        })
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    write(path, serde_json::to_string_pretty(v)? + "\n")
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl RunArgs {
    fn resolve(&self, seed: Option<u64>, default_dim: Option<usize>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None => RunConfig {
                dim: default_dim.unwrap_or(DEFAULT_DIM),
                ..RunConfig::default()
            },
        };
        macro_rules! overlay {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { cfg.$field = v; } )* };
        }
        overlay!(epochs, batch_size, lr, lr_min, inv_temperature, weight_decay, logit_scale, dim);
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if self.freeze_temperature {
            cfg.learn_temperature = false;
        }
        if self.binarize.is_some() {
            cfg.binarize = self.binarize;
        }
        if self.mlp_hidden.is_some() {
            cfg.mlp_hidden = self.mlp_hidden;
        }
        if self.lr.is_some() && self.lr_min.is_none() {
            cfg.lr_min = cfg.lr_min.min(cfg.lr);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn codebook(ctx: &Provenance, cmd: CodebookCommand) -> Result<()> {
    match cmd {
        CodebookCommand::Build { schema, dim, out } => {
            let s = load_schema(&schema)?;
            let (groups, values) = build_codebooks(&s, dim, ctx.seed)?;
            create_dir(&out)?;
            for (name, cb) in [("groups", &groups), ("values", &values)] {
                let path = out.join(format!("{name}.hdcb"));
                write_hdcb(&path, cb.vectors())?;
                write_json(&sidecar(&path), &codebook_sidecar(ctx, &schema, cb))?;
            }
            println!("groups={} values={} dim={dim} seed={}", groups.len(), values.len(), ctx.seed);
            println!("{}", memory_report(&s, dim));
        }
        CodebookCommand::Inspect { file } => inspect(&file)?,
        CodebookCommand::Dump { schema, dim, out } => {
            let s = load_schema(&schema)?;
            let b = AttributeVectorMatrix::generate(s, dim, ctx.seed)?;
            write_hdcb(&out, &b.dense())?;
            let names: Vec<String> = b.schema().entries().iter().map(|e| format!("{}::{}", e.group, e.value)).collect();
            let cfg = json!({ "schema": schema, "dim": dim, "kind": "attributes", "names": names });
            write_json(&sidecar(&out), &ctx.json(cfg))?;
            println!("attributes={} dim={dim} seed={}", b.alpha(), ctx.seed);
        }
    }
    Ok(())
}

fn codebook_sidecar(ctx: &Provenance, schema: &Path, cb: &Codebook) -> serde_json::Value {
    ctx.json(json!({
        "schema": schema,
        "dim": cb.dim,
        "kind": cb.kind.stream(),
        "names": cb.names(),
    }))
}

fn inspect(file: &Path) -> Result<()> {
    let vs: Vec<Hypervector> = read_hdcb(file)?;
    let dim = vs.first().map_or(0, Hypervector::dim);
    println!("file={} vectors={} dim={dim}", file.display(), vs.len());
    if !vs.is_empty() {
        let minus: u64 = vs.iter().map(|v| v.count_minus_ones() as u64).sum();
        println!("fraction_minus_one={:.4}", minus as f64 / (vs.len() * dim) as f64);
        let mut worst: f64 = 0.0;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                worst = worst.max(cossim_hv(&vs[i], &vs[j])?.abs());
            }
        }
        println!("max_abs_cos={worst:.4}");
    }
    let side = sidecar(file);
    if side.exists() {
        let v: serde_json::Value = serde_json::from_str(&read_text(&side)?)?;
        println!("seed={} kind={}", v["seed"], v["config"]["kind"]);
    }
    Ok(())
}

fn encode(ctx: &Provenance, a: EncodeArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let scale = if a.percent { AttributeScale::Percent } else { AttributeScale::Raw };
    let attrs = ClassAttributeMatrix::parse(&read_text(&a.attributes)?, scale, &a.attributes.display().to_string())?;
    let b = AttributeVectorMatrix::generate(schema, a.dim, ctx.seed)?;
    let phi = build_class_encoder(&attrs, &b)?;
    let cfg = json!({ "schema": a.schema, "attributes": a.attributes, "percent": a.percent, "dim": a.dim });
    let mut s = ctx.comment(&cfg.to_string());
    s += "class_id";
    for j in 0..a.dim {
        s += &format!(",d{j}");
    }
    s += "\n";
    for (id, row) in phi.class_ids.iter().zip(phi.phi.row_iter()) {
        s += &id.to_string();
        for v in row {
            s += &format!(",{v}");
        }
        s += "\n";
    }
    write(&a.out, s)?;
    println!("classes={} dim={}", phi.num_classes(), phi.dim());
    Ok(())
}

fn synth(ctx: &Provenance, a: SynthArgs) -> Result<()> {
    let d = SyntheticParams::default();
    let p = SyntheticParams {
        classes: a.classes.unwrap_or(d.classes),
        train_classes: a.train.unwrap_or(d.train_classes),
        alpha: a.alpha.unwrap_or(d.alpha),
        groups: a.groups.unwrap_or(d.groups),
        values: a.values.unwrap_or(d.values),
        d_in: a.d_in.unwrap_or(d.d_in),
        dim: a.dim.unwrap_or(d.dim),
        noise: a.noise.unwrap_or(d.noise),
        samples_per_class: a.samples.unwrap_or(d.samples_per_class),
        seed: ctx.seed,
    };
    let task = generate_synthetic(&p)?;
    let params = serde_json::to_value(&p)?;
    let header = ctx.header(&params.to_string());
    let comment = ctx.comment(&params.to_string());
    create_dir(&a.out)?;
    write(&a.out.join(data::SCHEMA_FILE), comment.clone() + &task.schema.to_text())?;
    write(&a.out.join(data::ATTRIBUTES_FILE), comment + &task.attributes.to_text())?;
    write(&a.out.join(data::SPLIT_FILE), format_split_file(&task.assignments, &header))?;
    save_embeddings(
        &a.out.join(data::EMBEDDINGS_FILE),
        &a.out.join(data::INDEX_FILE),
        &task.embeddings,
        &header,
    )?;
    let mut manifest = ctx.json(params);
    manifest["codebook_seed"] = json!(p.seed);
    manifest["dim"] = json!(p.dim);
    manifest["files"] = json!({
        "schema": data::SCHEMA_FILE,
        "attributes": data::ATTRIBUTES_FILE,
        "split": data::SPLIT_FILE,
        "embeddings": data::EMBEDDINGS_FILE,
        "index": data::INDEX_FILE,
    });
    write_json(&a.out.join(data::MANIFEST), &manifest)?;
    let train = task.assignments.iter().filter(|(_, r)| *r == Role::Train).count();
    println!(
        "classes={} train={train} test={} samples={} attributes={} d_in={}",
        p.classes,
        p.classes - train,
        task.embeddings.len(),
        p.alpha,
        p.d_in
    );
    Ok(())
}

/// Checkpoint config: the run config plus the codebook seed it was trained
/// against.
fn stamp(state: &mut TrainState, ctx: &Provenance, cfg: &RunConfig, codebook_seed: u64) {
    let mut v = ctx.json(serde_json::to_value(cfg).expect("config"));
    v["codebook_seed"] = json!(codebook_seed);
    state.config = v.to_string();
}

fn train_attr(ctx: &Provenance, a: TrainAttrArgs) -> Result<()> {
    let manifest = a.data.manifest()?;
    let mut cfg = a.run.resolve(ctx.seed_flag, manifest.dim)?;
    cfg.mode = a.data.mode;
    let ctx = &ctx.with_seed(cfg.seed);
    let task = a.data.load(cfg.dim, ctx.seed)?;
    let (mut state, report) = train_attribute_extraction(&cfg, &task.split, &task.data())?;
    stamp(&mut state, ctx, &cfg, task.codebook_seed);
    create_dir(&a.out)?;
    state.save(&a.out.join("attributes.ckpt"))?;
    write(&a.out.join("attributes.csv"), ctx.comment(&state.config) + &report.to_csv())?;
    println!(
        "epochs={} steps={} final_loss={}",
        report.epoch_losses.len(),
        report.steps,
        report.final_loss().map_or("none".into(), |l| format!("{l:.6}"))
    );
    Ok(())
}

fn train_zsc_cmd(ctx: &Provenance, a: TrainZscArgs) -> Result<()> {
    let manifest = a.data.manifest()?;
    let base = a.run.resolve(ctx.seed_flag, manifest.dim)?;
    let ctx = &ctx.with_seed(base.seed);
    let task = a.data.load(base.dim, ctx.seed)?;
    let init = a
        .init
        .as_deref()
        .map(|p| TrainState::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    create_dir(&a.out)?;
    let runs: Vec<_> = (0..a.trials)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let cfg = RunConfig {
                seed: base.seed + t,
                mode: a.data.mode,
                ..base.clone()
            };
            let (start, attr_report) = if a.attr_epochs > 0 {
                let attr_cfg = RunConfig {
                    epochs: a.attr_epochs,
                    ..cfg.clone()
                };
                let (s, r) = train_attribute_extraction(&attr_cfg, &task.split, &task.data())?;
                (Some(s), Some(r))
            } else {
                (init.clone(), None)
            };
            let (state, report) = train_zsc(&cfg, &task.split, &task.data(), start)?;
            Ok((cfg, state, report, attr_report))
        })
        .collect::<Result<_>>()?;
    for (t, (cfg, mut state, report, attr_report)) in runs.into_iter().enumerate() {
        let ctx = &ctx.with_seed(cfg.seed);
        stamp(&mut state, ctx, &cfg, task.codebook_seed);
        state.save(&a.out.join(format!("trial{t}.ckpt")))?;
        write(&a.out.join(format!("trial{t}.csv")), ctx.comment(&state.config) + &report.to_csv())?;
        if let Some(r) = attr_report {
            write(&a.out.join(format!("trial{t}_attributes.csv")), ctx.comment(&state.config) + &r.to_csv())?;
        }
        println!(
            "trial {t} seed={} final_loss={} inv_temperature={:.4}",
            cfg.seed,
            report.final_loss().map_or("none".into(), |l| format!("{l:.6}")),
            report.inv_temperature
        );
    }
    Ok(())
}

fn checkpoint_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "ckpt"))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("no .ckpt files in {}", p.display());
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn checkpoint_codebook_seed(state: &TrainState) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(&state.config).ok()?["codebook_seed"].as_u64()
}

fn eval(ctx: &Provenance, a: EvalArgs) -> Result<()> {
    let paths = checkpoint_paths(&a.checkpoints)?;
    let states: Vec<TrainState> = paths
        .iter()
        .map(|p| TrainState::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<_>>()?;
    let dim = states[0].params.head.d_out();
    if let Some((p, _)) = paths.iter().zip(&states).find(|(_, s)| s.params.head.d_out() != dim) {
        bail!("{} projects to a different dimension than {}", p.display(), paths[0].display());
    }
    let fallback = checkpoint_codebook_seed(&states[0]).unwrap_or(ctx.seed);
    let task = a.data.load(dim, fallback)?;
    if let Some((p, s)) = paths
        .iter()
        .zip(&states)
        .find(|(_, s)| checkpoint_codebook_seed(s).is_some_and(|c| c != task.codebook_seed))
    {
        bail!(
            "{} was trained against codebook seed {}, evaluating with {}",
            p.display(),
            checkpoint_codebook_seed(s).unwrap_or_default(),
            task.codebook_seed
        );
    }
    let cfg = json!({
        "task": format!("{:?}", a.task).to_lowercase(),
        "codebook_seed": task.codebook_seed,
        "mode": a.data.mode.to_string(),
        "checkpoints": paths,
        "threshold": a.threshold,
        "wmap_weights": a.wmap_weights.to_string(),
    });
    let mut csv = ctx.comment(&cfg.to_string());
    match a.task {
        EvalTask::Zsc => {
            let evals = states
                .iter()
                .map(|s| evaluate_zsc(s, &task.split, &task.data()))
                .collect::<hdzsc_core::Result<Vec<_>>>()?;
            csv += "checkpoint,top1,top5,samples\n";
            for (p, e) in paths.iter().zip(&evals) {
                println!("{}: top1={:.2} top5={:.2} samples={}", p.display(), e.top1, e.top5, e.samples);
                csv += &format!("{},{},{},{}\n", p.display(), e.top1, e.top5, e.samples);
            }
            let top1 = summarize(&evals.iter().map(|e| e.top1).collect::<Vec<_>>())?;
            let top5 = summarize(&evals.iter().map(|e| e.top5).collect::<Vec<_>>())?;
            println!("top-1: {top1} (n={})", top1.n);
            println!("top-5: {top5} (n={})", top5.n);
            csv += &format!("# top1={top1}\n# top5={top5}\n");
        }
        EvalTask::Attributes => {
            let side = match a.side {
                Side::Train => &task.split.train,
                Side::Test => &task.split.test,
            };
            csv += "checkpoint,group_top1,wmap\n";
            let mut groups = Vec::new();
            let mut maps = Vec::new();
            for (p, s) in paths.iter().zip(&states) {
                let e = evaluate_attributes(s, side, &task.data(), a.threshold, &a.wmap_weights)?;
                println!(
                    "{}: group_top1={:.2} wmap={:.4}",
                    p.display(),
                    e.groups.average,
                    e.wmap.wmap
                );
                csv += &format!("{},{},{}\n", p.display(), e.groups.average, e.wmap.wmap);
                groups.push(e.groups.average);
                maps.push(100.0 * e.wmap.wmap);
            }
            let g = summarize(&groups)?;
            let m = summarize(&maps)?;
            println!("group top-1: {g} (n={})", g.n);
            println!("wmap (%): {m} (n={})", m.n);
            csv += &format!("# group_top1={g}\n# wmap_percent={m}\n");
        }
    }
    if let Some(out) = &a.out {
        write(out, csv)?;
    }
    Ok(())
}

fn sweep_cmd(ctx: &Provenance, a: SweepArgs) -> Result<()> {
    let manifest = a.data.manifest()?;
    let mut base = a.run.resolve(ctx.seed_flag, manifest.dim)?;
    base.mode = a.data.mode;
    let ctx = &ctx.with_seed(base.seed);
    let task = a.data.load(base.dim, ctx.seed)?;
    let grid = GridSpec {
        epochs: a.grid_epochs,
        batch_size: a.grid_batch_size,
        lr: a.grid_lr,
        inv_temperature: a.grid_inv_temperature,
        weight_decay: a.grid_weight_decay,
    };
    let configs = grid.expand(&base);
    let table = sweep(&configs, a.attr_epochs, &task.split, &task.data(), a.val_classes)?;
    let cfg = json!({
        "base": base,
        "grid": grid,
        "val_classes": a.val_classes,
        "attr_epochs": a.attr_epochs,
        "codebook_seed": task.codebook_seed,
    });
    write(&a.out, ctx.comment(&cfg.to_string()) + &table.to_csv())?;
    for r in &table.rows {
        println!(
            "{}: epochs={} batch_size={} lr={} inv_temperature={} weight_decay={} val_top1={:.2}",
            r.index, r.config.epochs, r.config.batch_size, r.config.lr, r.config.inv_temperature, r.config.weight_decay, r.val_top1
        );
    }
    println!("best={}", table.best);
    Ok(())
}

enum Table {
    Loss(Vec<(f64, f64)>),
    Sweep { val_top1: Vec<f64>, best: Option<usize> },
}

fn parse_table(path: &Path) -> Result<(String, Table)> {
    let text = read_text(path)?;
    let name = path.display().to_string();
    let mut comments = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        if let Some(c) = l.strip_prefix('#') {
            comments.push(c.trim().to_string());
            false
        } else {
            !l.trim().is_empty()
        }
    });
    let Some((_, header)) = lines.next() else {
        bail!("{name}: no header line");
    };
    let header = header.to_string();
    let rows: Vec<(usize, String)> = lines.map(|(i, l)| (i + 1, l.to_string())).collect();
    let field = |line: usize, s: &str, col: usize| -> Result<f64> {
        let v = s.split(',').nth(col).unwrap_or("");
        v.trim()
            .parse::<f64>()
            .with_context(|| format!("{name}:{line}: column {} is {v:?}, expected a number", col + 1))
    };
    let table = if header == "epoch,loss" {
        Table::Loss(
            rows.iter()
                .map(|(i, l)| Ok((field(*i, l, 0)?, field(*i, l, 1)?)))
                .collect::<Result<_>>()?,
        )
    } else if header.starts_with("index,epochs,") {
        let col = header.split(',').position(|c| c == "val_top1").context("sweep table without val_top1")?;
        let val_top1 = rows.iter().map(|(i, l)| field(*i, l, col)).collect::<Result<_>>()?;
        let best = comments.iter().find_map(|c| c.strip_prefix("best=")?.parse().ok());
        Table::Sweep { val_top1, best }
    } else {
        bail!("{name}: unrecognised header {header:?}, expected a loss curve or a sweep table");
    };
    Ok((comments.join("\n"), table))
}

fn report(a: ReportArgs) -> Result<()> {
    create_dir(&a.out)?;
    let mut merged = String::from("source,epoch,loss\n");
    let mut curves = Vec::new();
    for input in &a.inputs {
        let (desc, table) = parse_table(input)?;
        let stem = input.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
        let svg = match table {
            Table::Loss(points) => {
                for (e, l) in &points {
                    merged += &format!("{},{e},{l}\n", input.display());
                }
                let series = Series {
                    label: stem.clone(),
                    points,
                };
                let svg = plot::line_chart(&stem, &desc, "epoch", "loss", std::slice::from_ref(&series));
                curves.push(series);
                svg
            }
            Table::Sweep { val_top1, best } => plot::bar_chart(&stem, &desc, "grid point", "validation top-1 (%)", &val_top1, best),
        };
        let path = a.out.join(format!("{stem}.svg"));
        write(&path, svg)?;
        println!("{}", path.display());
    }
    if !curves.is_empty() {
        let inputs: Vec<String> = a.inputs.iter().map(|p| p.display().to_string()).collect();
        write(&a.out.join("losses.csv"), format!("# inputs={}\n", inputs.join(" ")) + &merged)?;
        write(
            &a.out.join("losses.svg"),
            plot::line_chart("losses", &inputs.join(" "), "epoch", "loss", &curves),
        )?;
        println!("{}", a.out.join("losses.svg").display());
    }
    Ok(())
}

fn memory(a: MemoryArgs) -> Result<()> {
    let r = match (&a.schema, a.alpha, a.groups, a.values) {
        (Some(p), ..) => memory_report(&load_schema(p)?, a.dim),
        (None, Some(alpha), Some(g), Some(v)) => memory_report_counts(alpha, g, v, a.dim),
        _ => return Err(UsageError("give --schema or all of --alpha, --groups, --values".into()).into()),
    };
    println!("{r}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Provenance {
        seed: cli.seed.unwrap_or(0),
        seed_flag: cli.seed,
        command: std::env::args().collect::<Vec<_>>().join(" "),
    };
    match cli.command {
        Command::Codebook(c) => codebook(&ctx, c),
        Command::Encode(a) => encode(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::TrainAttr(a) => train_attr(&ctx, a),
        Command::TrainZsc(a) => train_zsc_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::Report(a) => report(a),
        Command::Memory(a) => memory(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
