//! Command-line driver for the next-POI pipeline. Every stage reads and
//! writes inside one data directory and records what it produced in that
//! directory's `manifest.json`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use poigraph::config::{RunConfig, CONFIG_KEYS};
use poigraph::eval::{evaluate, MetricsReport, DEFAULT_KS};
use poigraph::graphs::{build_global_spatial, build_global_temporal, EdgeList, TrajectoryGraph};
use poigraph::ingest::{parse_checkins, preprocess, read_trajectories, write_trajectories, Catalog, DatasetSplit, LogFormat};
use poigraph::pretrain::{pretrain, EmbeddingTable, Pretrained};
use poigraph::ssl::{self, AugmentOp, CorrelationIndex, Mode};
use poigraph::train::{append_report, Checkpoint, FitOutcome, Trainer, TrainingData};
use poigraph::{rng, Error, Result};

const CATALOG: &str = "catalog.tsv";
const TRAJECTORIES: &str = "trajectories.jsonl";
const MANIFEST: &str = "manifest.json";
const EMBED_DIR: &str = "embeddings";
const CHECKPOINT: &str = "checkpoint.bin";
const REPORT: &str = "train_report.jsonl";
const INTERRUPTED: u8 = 130;

fn config_help() -> &'static str {
    static HELP: OnceLock<String> = OnceLock::new();
    HELP.get_or_init(|| {
        let defaults = RunConfig::default();
        let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::from("Config keys (set in --config files or with --set key=value):\n");
        for (key, help) in CONFIG_KEYS {
            let value = defaults.get(key).expect("listed key");
            s.push_str(&format!("  {key:<width$}  {value:<8}  {help}\n"));
        }
        s.push_str("\nLog verbosity follows RUST_LOG (default: info).");
        s
    })
}

#[derive(Parser)]
#[command(name = "poigraph", version, about = "Graph-biased self-attention next-POI recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Run config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Contrastive loss weight (0 disables the contrastive task).
    #[arg(long)]
    lambda: Option<f64>,
    /// Train the POI embeddings from random initialization instead of
    /// loading pretrained tables.
    #[arg(long)]
    from_scratch: bool,
    /// Disable the category-path attention bias.
    #[arg(long)]
    no_category_bias: bool,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if self.no_category_bias {
            cfg.category_bias = false;
        }
        cfg.validate()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Val,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    /// Embedding dimension.
    D,
    Lambda,
    /// Node dropout probability.
    Dropout,
    Layers,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a raw check-in log and split it into trajectories.
    #[command(after_help = config_help())]
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "foursquare")]
        format: LogFormat,
        /// Data directory to create or update.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_visits: Option<usize>,
        #[arg(long)]
        min_poi_users: Option<usize>,
        #[arg(long)]
        gap_hours: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the global spatial and temporal graphs as edge lists.
    #[command(after_help = config_help())]
    BuildGraphs {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Learn node2vec embeddings of both global graphs and fuse them.
    #[command(after_help = config_help())]
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the recommender; resumes from the run directory's checkpoint
    /// when one exists.
    #[command(after_help = config_help())]
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Run directory (default: <data>/run).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
        /// Ignore an existing checkpoint and start over.
        #[arg(long)]
        restart: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Rank held-out targets with a trained checkpoint.
    #[command(after_help = config_help())]
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Run directory holding the checkpoint (default: <data>/run).
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Train once per value of one hyperparameter and tabulate the results.
    #[command(after_help = config_help())]
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Output directory (default: <data>/sweep-<param>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print each augmentation operator's output on one trajectory.
    #[command(after_help = config_help())]
    AugmentDebug {
        #[arg(long)]
        data: PathBuf,
        /// User whose trajectory to show.
        #[arg(long)]
        user: String,
        /// Which of the user's trajectories, in file order.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Use no pretrained tables, so insertion and substitution have
        /// nothing to draw from.
        #[arg(long)]
        from_scratch: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        if let Err(e) = ctrlc::set_handler(move || {
            if stop.swap(true, Ordering::SeqCst) {
                std::process::exit(INTERRUPTED as i32);
            }
            eprintln!("interrupt received; finishing at the last epoch boundary (press again to abort)");
        }) {
            log::warn!("cannot install the interrupt handler: {e}");
        }
    }
    match run(cli.command, &stop) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command, stop: &AtomicBool) -> Result<u8> {
    match command {
        Command::Preprocess {
            input,
            format,
            out,
            min_visits,
            min_poi_users,
            gap_hours,
            max_len,
            cfg,
        } => {
            let mut cfg = cfg.load()?;
            if let Some(v) = min_visits {
                cfg.min_user_visits = v;
            }
            if let Some(v) = min_poi_users {
                cfg.min_poi_users = v;
            }
            if let Some(v) = gap_hours {
                cfg.gap_hours = v;
            }
            if let Some(v) = max_len {
                cfg.max_len = v;
            }
            cfg.validate()?;
            cmd_preprocess(&input, format, &out, &cfg)
        }
        Command::BuildGraphs { data, cfg } => cmd_build_graphs(&data, &cfg.load()?),
        Command::Pretrain { data, cfg } => cmd_pretrain(&data, &cfg.load()?),
        Command::Train {
            data,
            out,
            flags,
            restart,
            cfg,
        } => {
            let mut c = cfg.load()?;
            flags.apply(&mut c)?;
            let out = out.unwrap_or_else(|| data.join("run"));
            cmd_train(&data, &out, &c, flags.from_scratch, restart, stop)
        }
        Command::Evaluate { data, run, split } => {
            let run = run.unwrap_or_else(|| data.join("run"));
            cmd_evaluate(&data, &run, split)
        }
        Command::Sweep {
            data,
            param,
            values,
            out,
            flags,
            cfg,
        } => {
            let mut c = cfg.load()?;
            flags.apply(&mut c)?;
            let name = sweep_key(param);
            let out = out.unwrap_or_else(|| data.join(format!("sweep-{name}")));
            cmd_sweep(&data, &out, &c, param, &values, flags.from_scratch, stop)
        }
        Command::AugmentDebug {
            data,
            user,
            index,
            from_scratch,
            cfg,
        } => cmd_augment_debug(&data, &user, index, from_scratch, &cfg.load()?),
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Records one stage's outputs and settings in `<dir>/manifest.json`,
/// keeping entries from other stages.
fn record_stage(dir: &Path, stage: &str, entry: Value) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut manifest: Value = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?,
        Err(_) => json!({}),
    };
    manifest["format"] = json!("poigraph-run");
    manifest["stages"][stage] = entry;
    write_json(&path, &manifest)
}

fn load_split(data: &Path) -> Result<DatasetSplit> {
    let (cat_path, traj_path) = (data.join(CATALOG), data.join(TRAJECTORIES));
    require(&cat_path)?;
    require(&traj_path)?;
    let catalog = Catalog::read_tsv(&cat_path)?;
    let trajectories = read_trajectories(&traj_path, &catalog)?;
    Ok(DatasetSplit::from_trajectories(catalog, trajectories))
}

fn embed_paths(data: &Path) -> [PathBuf; 3] {
    ["spatial", "temporal", "fused"].map(|n| data.join(EMBED_DIR).join(format!("{n}.emb")))
}

fn load_pretrained(data: &Path, catalog: &Catalog) -> Result<Pretrained> {
    let [s, t, f] = embed_paths(data);
    for p in [&s, &t, &f] {
        if !p.exists() {
            return Err(Error::Data(format!(
                "pretrained embeddings not found at {}; run `poigraph pretrain` first or pass --from-scratch",
                p.display()
            )));
        }
    }
    Ok(Pretrained {
        spatial: EmbeddingTable::load(&s, catalog)?,
        temporal: EmbeddingTable::load(&t, catalog)?,
        fused: EmbeddingTable::load(&f, catalog)?,
    })
}

fn cmd_preprocess(input: &Path, format: LogFormat, out: &Path, cfg: &RunConfig) -> Result<u8> {
    require(input)?;
    let parsed = parse_checkins(input, format)?;
    if parsed.malformed > 0 {
        log::warn!("skipped {} malformed lines", parsed.malformed);
    }
    let pre = preprocess(parsed.checkins, &cfg.preprocess())?;
    create_dir(out)?;
    pre.catalog.write_tsv(&out.join(CATALOG))?;
    write_trajectories(&out.join(TRAJECTORIES), &pre.trajectories)?;
    println!("{:<14}{:>10}{:>10}", "", "before", "after");
    for (name, b, a) in [
        ("users", pre.before.users, pre.after.users),
        ("POIs", pre.before.pois, pre.after.pois),
        ("check-ins", pre.before.checkins, pre.after.checkins),
        ("trajectories", pre.before.trajectories, pre.after.trajectories),
    ] {
        println!("{name:<14}{b:>10}{a:>10}");
    }
    record_stage(
        out,
        "preprocess",
        json!({
            "input": input.display().to_string(),
            "format": format.to_string(),
            "malformed_lines": parsed.malformed,
            "before": pre.before,
            "after": pre.after,
            "settings": cfg.preprocess(),
            "files": [CATALOG, TRAJECTORIES],
        }),
    )?;
    Ok(0)
}

fn global_graphs(
    split: &DatasetSplit,
    cfg: &RunConfig,
) -> Result<(poigraph::graphs::GlobalSpatialGraph, poigraph::graphs::GlobalTemporalGraph)> {
    let seqs = split.train_sequences()?;
    Ok((
        build_global_spatial(&split.catalog, cfg.spatial_threshold_km),
        build_global_temporal(&seqs, split.catalog.len(), cfg.max_neighbors),
    ))
}

fn cmd_build_graphs(data: &Path, cfg: &RunConfig) -> Result<u8> {
    let split = load_split(data)?;
    let (gs, gt) = global_graphs(&split, cfg)?;
    let mut files = Vec::new();
    for (name, list) in [
        ("graph_spatial.tsv", EdgeList::spatial(&gs, &split.catalog)),
        ("graph_temporal.tsv", EdgeList::temporal(&gt, &split.catalog)),
    ] {
        let path = data.join(name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        list.write(BufWriter::new(f)).map_err(|e| Error::io(&path, e))?;
        println!("{name}: {} nodes, {} edges", list.node_count, list.edges.len());
        files.push(name);
    }
    record_stage(
        data,
        "build-graphs",
        json!({
            "spatial_threshold_km": cfg.spatial_threshold_km,
            "max_neighbors": cfg.max_neighbors,
            "files": files,
        }),
    )?;
    Ok(0)
}

fn cmd_pretrain(data: &Path, cfg: &RunConfig) -> Result<u8> {
    let split = load_split(data)?;
    let (gs, gt) = global_graphs(&split, cfg)?;
    let tables = pretrain(&gs, &gt, &cfg.pretrain(), rng::derive_seed(cfg.seed, "pretrain"))?;
    create_dir(&data.join(EMBED_DIR))?;
    let [s, t, f] = embed_paths(data);
    tables.spatial.save(&s, &split.catalog)?;
    tables.temporal.save(&t, &split.catalog)?;
    tables.fused.save(&f, &split.catalog)?;
    println!(
        "embedded {} POIs at dimension {} into {}",
        tables.fused.rows(),
        tables.fused.dim(),
        data.join(EMBED_DIR).display()
    );
    let files: Vec<String> = [s, t, f]
        .iter()
        .map(|p| p.strip_prefix(data).unwrap_or(p).display().to_string())
        .collect();
    record_stage(
        data,
        "pretrain",
        json!({
            "seed": cfg.seed,
            "settings": cfg.pretrain(),
            "spatial_threshold_km": cfg.spatial_threshold_km,
            "max_neighbors": cfg.max_neighbors,
            "files": files,
        }),
    )?;
    Ok(0)
}

/// Trains into `out`, returning the trainer on completion or `None` if
/// interrupted.
fn train_into(
    data: &Path,
    out: &Path,
    cfg: &RunConfig,
    from_scratch: bool,
    restart: bool,
    stop: &AtomicBool,
) -> Result<Option<Trainer>> {
    let split = load_split(data)?;
    let pretrained = if from_scratch {
        None
    } else {
        Some(load_pretrained(data, &split.catalog)?)
    };
    let training = TrainingData::from_split(&split, cfg)?;
    create_dir(out)?;
    let (ckpt, report) = (out.join(CHECKPOINT), out.join(REPORT));
    let mut trainer = if ckpt.exists() && !restart {
        let t = Trainer::resume(&ckpt, training, pretrained.as_ref())?;
        if t.cfg != *cfg {
            return Err(Error::Config(format!(
                "{} was written with a different config; pass --restart to discard it",
                ckpt.display()
            )));
        }
        log::info!("resuming after epoch {}", t.progress.epoch);
        t
    } else {
        if report.exists() {
            fs::remove_file(&report).map_err(|e| Error::io(&report, e))?;
        }
        Trainer::new(cfg.clone(), training, pretrained.as_ref())?
    };
    fs::write(out.join("config.txt"), cfg.to_text()).map_err(|e| Error::io(out.join("config.txt"), e))?;

    let should_stop = || stop.load(Ordering::SeqCst);
    let outcome = trainer.fit(&should_stop, &mut |record, t| {
        append_report(&report, record)?;
        t.save_checkpoint(&ckpt)
    })?;
    if outcome == FitOutcome::Interrupted {
        trainer.save_checkpoint(&ckpt)?;
        eprintln!(
            "interrupted; checkpoint at epoch {} saved to {}",
            trainer.progress.epoch,
            ckpt.display()
        );
        return Ok(None);
    }
    trainer.save_checkpoint(&ckpt)?;
    Ok(Some(trainer))
}

fn final_reports(trainer: &Trainer) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for (name, samples) in [("val", &trainer.data.val), ("test", &trainer.data.test)] {
        if !samples.is_empty() {
            out.push(trainer.evaluate_split(name, samples, &trainer.best)?);
        }
    }
    Ok(out)
}

fn cmd_train(
    data: &Path,
    out: &Path,
    cfg: &RunConfig,
    from_scratch: bool,
    restart: bool,
    stop: &AtomicBool,
) -> Result<u8> {
    let Some(trainer) = train_into(data, out, cfg, from_scratch, restart, stop)? else {
        return Ok(INTERRUPTED);
    };
    let reports = final_reports(&trainer)?;
    for r in &reports {
        print!("{}", r.table());
        write_json(&out.join(format!("metrics_{}.json", r.split)), r)?;
    }
    record_stage(
        out,
        "train",
        json!({
            "data": data.display().to_string(),
            "seed": cfg.seed,
            "from_scratch": from_scratch,
            "epochs": trainer.progress.epoch,
            "best_epoch": trainer.progress.best_epoch,
            "early_stopped": trainer.progress.stopped,
            "files": [CHECKPOINT, REPORT, "config.txt"],
        }),
    )?;
    Ok(0)
}

fn cmd_evaluate(data: &Path, run: &Path, split_name: Split) -> Result<u8> {
    let ckpt_path = run.join(CHECKPOINT);
    require(&ckpt_path)?;
    let ckpt = Checkpoint::read(&ckpt_path)?;
    let cfg = &ckpt.manifest.config;
    let split = load_split(data)?;
    let (model, params) = ckpt.best_model()?;
    if model.num_pois != split.catalog.len() {
        return Err(Error::Data(format!(
            "checkpoint covers {} POIs but the catalog has {}",
            model.num_pois,
            split.catalog.len()
        )));
    }
    let gt = build_global_temporal(&split.train_sequences()?, split.catalog.len(), cfg.max_neighbors);
    let (name, pairs) = match split_name {
        Split::Val => ("val", &split.val),
        Split::Test => ("test", &split.test),
    };
    let samples = split.eval_samples(pairs)?;
    let report = evaluate(name, &model, &params, &split.catalog, &gt, &samples, &DEFAULT_KS)?;
    print!("{}", report.table());
    println!("{}", serde_json::to_string(&report).map_err(|e| Error::Data(e.to_string()))?);
    write_json(&run.join(format!("metrics_{name}.json")), &report)?;
    Ok(0)
}

fn sweep_key(p: SweepParam) -> &'static str {
    match p {
        SweepParam::D => "dim",
        SweepParam::Lambda => "lambda",
        SweepParam::Dropout => "dropout",
        SweepParam::Layers => "layers",
    }
}

fn cmd_sweep(
    data: &Path,
    out: &Path,
    base: &RunConfig,
    param: SweepParam,
    values: &[String],
    from_scratch: bool,
    stop: &AtomicBool,
) -> Result<u8> {
    let key = sweep_key(param);
    // validate every value before training anything
    let configs = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            c.set(key, v)?;
            c.validate()?;
            Ok((v.trim().to_string(), c))
        })
        .collect::<Result<Vec<_>>>()?;
    if !from_scratch {
        let split = load_split(data)?;
        let dims: Vec<usize> = configs.iter().map(|(_, c)| c.dim).collect();
        let p = load_pretrained(data, &split.catalog)?;
        if let Some(d) = dims.iter().find(|&&d| d != p.fused.dim()) {
            return Err(Error::Config(format!(
                "pretrained tables have dimension {} but the sweep asks for {d}; pretrain per dimension or pass --from-scratch",
                p.fused.dim()
            )));
        }
    }
    create_dir(out)?;
    let mut rows = Vec::new();
    for (value, cfg) in &configs {
        log::info!("sweep {key} = {value}");
        let run_dir = out.join(format!("{key}={value}"));
        let Some(trainer) = train_into(data, &run_dir, cfg, from_scratch, true, stop)? else {
            return Ok(INTERRUPTED);
        };
        let reports = final_reports(&trainer)?;
        rows.push(json!({ "param": key, "value": value, "reports": reports }));
    }
    println!("{key:>10}  {:>8}  {:>8}  {:>8}  {:>8}", "split", "HR@10", "nDCG@10", "HR@1");
    for row in &rows {
        for r in row["reports"].as_array().into_iter().flatten() {
            let report: MetricsReport = serde_json::from_value(r.clone()).map_err(|e| Error::Data(e.to_string()))?;
            let at = |k| report.at(k).map_or((f64::NAN, f64::NAN), |m| (m.hr, m.ndcg));
            println!(
                "{:>10}  {:>8}  {:>8.4}  {:>8.4}  {:>8.4}",
                row["value"].as_str().unwrap_or(""),
                report.split,
                at(10).0,
                at(10).1,
                at(1).0
            );
        }
    }
    write_json(&out.join("sweep.json"), &rows)?;
    record_stage(
        out,
        "sweep",
        json!({ "param": key, "values": values, "seed": base.seed, "files": ["sweep.json"] }),
    )?;
    Ok(0)
}

fn render_graph(g: &TrajectoryGraph, catalog: &Catalog) -> String {
    let id = |i: usize| catalog.poi(g.nodes[i]).poi_id.as_str();
    let nodes: Vec<&str> = (0..g.len()).map(id).collect();
    let mut s = format!("  nodes: {}\n  last:  {}\n  edges:\n", nodes.join(" "), id(g.last_node));
    for &(a, b) in &g.edges {
        s.push_str(&format!("    {} -> {}\n", id(a), id(b)));
    }
    s
}

fn cmd_augment_debug(data: &Path, user: &str, index: usize, from_scratch: bool, cfg: &RunConfig) -> Result<u8> {
    let split = load_split(data)?;
    let traj = split
        .train
        .iter()
        .filter(|t| t.user_id == user)
        .nth(index)
        .ok_or_else(|| Error::Data(format!("user `{user}` has no training trajectory number {index}")))?;
    let seq = split.catalog.sequence(traj)?;
    let g = TrajectoryGraph::from_sequence(&seq, &split.catalog);
    let index_table = if from_scratch {
        CorrelationIndex::empty(split.catalog.len())
    } else {
        let p = load_pretrained(data, &split.catalog)?;
        CorrelationIndex::build(&p.spatial, &p.temporal, cfg.correlation_top)?
    };
    print!("original\n{}", render_graph(&g, &split.catalog));
    let ops = [
        AugmentOp::Dropout,
        AugmentOp::Insertion(Mode::Spatial),
        AugmentOp::Insertion(Mode::Temporal),
        AugmentOp::Substitution,
    ];
    let seed = rng::derive_seed(cfg.seed, "augment-debug");
    for (k, op) in ops.into_iter().enumerate() {
        let mut r = rng::child(seed, k as u64);
        let view = ssl::apply(op, &g, &cfg.augment(), &index_table, &split.catalog, &mut r);
        print!("\n{op}\n{}", render_graph(&view, &split.catalog));
    }
    Ok(0)
}
