//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use cfrec::data::{parse_movielens, synth_generate, Dataset};
use cfrec::eval::{self, ExplainerConfig};
use cfrec::explain::{self, Algorithm, ExplanationRecord, Status};
use cfrec::influence::{Method, ParamScope};
use cfrec::models::{self, ModelKind, ModelParams, RatingScale};
use clap::Args;

use crate::config::RunConfig;
use crate::{manifest, Cli, Command, Common, InputError};

#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// Model kind: ncf or fm.
    #[arg(long = "model")]
    pub model: Option<String>,
    /// Embedding dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// NCF hidden widths, comma separated (default 2d,d).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Rating scale: unit or raw.
    #[arg(long)]
    pub scale: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct InfluenceFlags {
    /// Influence estimation: gradient or data.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub damping: Option<f64>,
    /// Parameter block: user or user_and_items.
    #[arg(long)]
    pub scope: Option<String>,
    /// Continuation epochs for data-based estimation.
    #[arg(long)]
    pub t2_epochs: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SearchFlags {
    /// Search: accent (iterative greedy) or fia (greedy).
    #[arg(long)]
    pub algo: Option<String>,
    /// Pool size (top-1 plus K-1 candidates).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_removals: Option<usize>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// MovieLens `u.data` (tab separated).
    #[arg(long, conflicts_with_all = ["csv", "synthetic"])]
    pub movielens: Option<PathBuf>,
    /// Canonical CSV to re-ingest.
    #[arg(long, conflicts_with = "synthetic")]
    pub csv: Option<PathBuf>,
    /// Generate a low-rank synthetic dataset.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub causes: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Keep only users and items with at least this many interactions.
    #[arg(long)]
    pub min_actions: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset CSV.
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint manifest; the model is trained from the flags when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of sampled users.
    #[arg(long)]
    pub users: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub influence: InfluenceFlags,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON-lines file written by `explain`.
    #[arg(long)]
    pub explanations: PathBuf,
    /// Explainer label in the report.
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Embedding sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Users explained per size (0 reports MSE only).
    #[arg(long)]
    pub users: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub influence: InfluenceFlags,
    #[command(flatten)]
    pub search: SearchFlags,
}

fn parse<T: std::str::FromStr<Err = cfrec::Error>>(s: &str) -> anyhow::Result<T> {
    s.parse::<T>().map_err(|e| InputError(e.to_string()).into())
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(m) = &self.model {
            cfg.model_kind = parse::<ModelKind>(m)?;
        }
        let t = &mut cfg.train;
        if let Some(d) = self.d {
            t.d = d;
        }
        if let Some(e) = self.epochs {
            t.epochs = e;
        }
        if let Some(lr) = self.lr {
            t.lr = lr;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(h) = &self.hidden {
            t.hidden_widths = Some(h.clone());
        }
        if let Some(s) = &self.scale {
            t.rating_scale = parse::<RatingScale>(s)?;
        }
        Ok(())
    }
}

impl InfluenceFlags {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        let i = &mut cfg.influence;
        if let Some(m) = &self.method {
            i.method = parse::<Method>(m)?;
        }
        if let Some(d) = self.damping {
            i.damping = d;
        }
        if let Some(s) = &self.scope {
            i.param_scope = match s.as_str() {
                "user" | "user_block" => ParamScope::UserBlock,
                "user_and_items" | "user_and_items_block" => ParamScope::UserAndItemsBlock,
                other => {
                    return Err(InputError(format!("unknown parameter scope `{other}`")).into())
                }
            };
        }
        if let Some(t) = self.t2_epochs {
            i.t2_epochs = t;
        }
        Ok(())
    }
}

impl SearchFlags {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(a) = &self.algo {
            cfg.search.algorithm = parse::<Algorithm>(a)?;
        }
        if let Some(k) = self.k {
            cfg.search.k = k;
            cfg.eval.ks = vec![k];
        }
        if let Some(m) = self.max_removals {
            cfg.search.max_removals = Some(m);
        }
        Ok(())
    }
}

/// Loads the config file, applies flags, and fills derived fields.
fn resolve(
    common: &Common,
    flags: impl FnOnce(&mut RunConfig) -> anyhow::Result<()>,
) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    flags(&mut cfg)?;
    cfg.propagate_seed();
    cfg.eval.seeds = vec![cfg.seed];
    // data-based estimation continues with the training optimizer settings
    cfg.influence.continuation_lr = cfg.train.lr;
    cfg.influence.continuation_batch_size = cfg.train.batch_size;
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let spec = &cfg.dataset;
    let ds = if let Some(p) = &spec.csv {
        Dataset::read_csv(p)?
    } else if let Some(p) = &spec.movielens {
        parse_movielens(p)?
    } else if let Some(s) = &spec.synthetic {
        synth_generate(s)?
    } else {
        return Err(InputError(
            "no dataset given (use --data or a config with dataset.csv)".into(),
        )
        .into());
    };
    Ok(if spec.min_actions > 0 {
        ds.filter_min_actions(spec.min_actions)?
    } else {
        ds
    })
}

fn explainer(cfg: &RunConfig) -> ExplainerConfig {
    ExplainerConfig {
        label: cfg.label(),
        model_kind: cfg.model_kind,
        train: cfg.train.clone(),
        influence: cfg.influence.clone(),
        algorithm: cfg.search.algorithm,
        max_removals: cfg.search.max_removals,
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let common = cli.common;
    match cli.command {
        Command::Ingest(a) => ingest(&common, a),
        Command::Train(a) => train(&common, a),
        Command::Explain(a) => explain_cmd(&common, a),
        Command::Evaluate(a) => evaluate(&common, a),
        Command::Sweep(a) => sweep(&common, a),
    }
}

fn dump(common: &Common, cfg: &RunConfig) -> anyhow::Result<bool> {
    if common.dump_config {
        print!("{}", cfg.to_json()?);
    }
    Ok(common.dump_config)
}

fn ingest(common: &Common, a: IngestArgs) -> anyhow::Result<()> {
    let cfg = resolve(common, |cfg| {
        if let Some(p) = &a.movielens {
            cfg.dataset = Default::default();
            cfg.dataset.movielens = Some(p.clone());
        } else if let Some(p) = &a.csv {
            cfg.dataset = Default::default();
            cfg.dataset.csv = Some(p.clone());
        }
        if a.synthetic || a.users.is_some() || a.items.is_some() || a.density.is_some() {
            let mut s = cfg.dataset.synthetic.clone().unwrap_or_default();
            s.num_users = a.users.unwrap_or(s.num_users);
            s.num_items = a.items.unwrap_or(s.num_items);
            s.density = a.density.unwrap_or(s.density);
            s.num_latent_causes = a.causes.unwrap_or(s.num_latent_causes);
            s.noise_std = a.noise.unwrap_or(s.noise_std);
            s.validate().map_err(|e| InputError(e.to_string()))?;
            cfg.dataset = Default::default();
            cfg.dataset.synthetic = Some(s);
        }
        if let Some(m) = a.min_actions {
            cfg.dataset.min_actions = m;
        }
        Ok(())
    })?;
    if dump(common, &cfg)? {
        return Ok(());
    }
    let ds = load_dataset(&cfg)?;
    let (dir, file) = if cfg.out.extension().is_some_and(|e| e == "csv") {
        let dir = cfg
            .out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        (dir, cfg.out.clone())
    } else {
        (cfg.out.clone(), cfg.out.join("dataset.csv"))
    };
    create_dir(&dir)?;
    ds.write_csv(&file)?;
    manifest::write(&dir, "ingest", &cfg, std::slice::from_ref(&file))?;
    println!("wrote {}", file.display());
    println!("{}", ds.stats());
    Ok(())
}

fn data_flag(cfg: &mut RunConfig, data: &Option<PathBuf>) {
    if let Some(p) = data {
        cfg.dataset = Default::default();
        cfg.dataset.csv = Some(p.clone());
    }
}

fn train(common: &Common, a: TrainArgs) -> anyhow::Result<()> {
    let cfg = resolve(common, |cfg| {
        data_flag(cfg, &a.data);
        a.train.apply(cfg)
    })?;
    if dump(common, &cfg)? {
        return Ok(());
    }
    let ds = load_dataset(&cfg)?;
    create_dir(&cfg.out)?;
    let trained = models::train(cfg.model_kind, &ds, &cfg.train)?;
    let ckpt = cfg.out.join("model.json");
    models::save_checkpoint(&trained.params, &ckpt)?;
    let mut trace = String::from("epoch,loss\n");
    for (i, l) in trained.trace.iter().enumerate() {
        trace.push_str(&format!("{},{}\n", i + 1, l));
    }
    let trace_path = cfg.out.join("train_trace.csv");
    write_file(&trace_path, &trace)?;
    manifest::write(
        &cfg.out,
        "train",
        &cfg,
        &[ckpt.clone(), ckpt.with_extension("bin"), trace_path],
    )?;
    println!("wrote {}", ckpt.display());
    println!("final training MSE: {}", trained.params.mse(&ds)?);
    Ok(())
}

fn model_for(
    cfg: &RunConfig,
    ds: &Dataset,
    checkpoint: &Option<PathBuf>,
) -> anyhow::Result<ModelParams> {
    let params = match checkpoint {
        Some(p) => models::load_checkpoint(p)?,
        None => models::train(cfg.model_kind, ds, &cfg.train)?.params,
    };
    if params.num_users() != ds.num_users() || params.num_items() != ds.num_items() {
        return Err(InputError(format!(
            "checkpoint is for {} users x {} items, dataset has {} x {}",
            params.num_users(),
            params.num_items(),
            ds.num_users(),
            ds.num_items()
        ))
        .into());
    }
    Ok(params)
}

fn explain_cmd(common: &Common, a: ExplainArgs) -> anyhow::Result<()> {
    let cfg = resolve(common, |cfg| {
        data_flag(cfg, &a.data);
        if let Some(n) = a.users {
            cfg.eval.n_users = n;
        }
        a.train.apply(cfg)?;
        a.influence.apply(cfg)?;
        a.search.apply(cfg)
    })?;
    if dump(common, &cfg)? {
        return Ok(());
    }
    let ds = load_dataset(&cfg)?;
    let params = model_for(&cfg, &ds, &a.checkpoint)?;
    let users = eval::sample_users(&ds, cfg.eval.n_users, cfg.seed)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join("explanations.jsonl");
    let mut w = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    let (mut found, mut exhausted, mut failed) = (0, 0, 0);
    for &u in &users {
        let result = explain::user_influences(&params, &ds, u, cfg.search.k, &cfg.influence)
            .and_then(|t| explain::explain_with(&t, &cfg.search));
        let record = match result {
            Ok(e) => ExplanationRecord::new(
                &ds,
                &e,
                cfg.search.algorithm,
                cfg.influence.method,
                cfg.search.k,
            ),
            Err(e @ (cfrec::Error::Singular { .. } | cfrec::Error::Precondition(_))) => {
                eprintln!("user {u}: {e}");
                failed += 1;
                let rec = params.top_k(u, &ds, 1)?[0].item;
                ExplanationRecord {
                    user: u,
                    rec,
                    rec_star: None,
                    removed: Vec::new(),
                    algorithm: cfg.search.algorithm,
                    method: cfg.influence.method,
                    k: cfg.search.k,
                    status: Status::Exhausted,
                }
            }
            Err(e) => return Err(e.into()),
        };
        match record.status {
            Status::Found => found += 1,
            Status::Exhausted => exhausted += 1,
        }
        writeln!(w, "{}", serde_json::to_string(&record)?)?;
    }
    w.flush()?;
    drop(w);
    manifest::write(&cfg.out, "explain", &cfg, std::slice::from_ref(&path))?;
    println!("wrote {}", path.display());
    println!(
        "attempted {} found {} exhausted {} (of which {} could not be searched)",
        users.len(),
        found,
        exhausted,
        failed
    );
    Ok(())
}

fn read_records(path: &Path) -> anyhow::Result<Vec<ExplanationRecord>> {
    let text =
        fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| anyhow!(InputError(format!("{}:{}: {e}", path.display(), i + 1))))
        })
        .collect()
}

fn evaluate(common: &Common, a: EvaluateArgs) -> anyhow::Result<()> {
    let records = read_records(&a.explanations)?;
    let first = records
        .first()
        .ok_or_else(|| InputError(format!("{}: no records", a.explanations.display())))?
        .clone();
    let cfg = resolve(common, |cfg| {
        data_flag(cfg, &a.data);
        if let Some(l) = &a.label {
            cfg.label = l.clone();
        }
        cfg.search.algorithm = first.algorithm;
        cfg.influence.method = first.method;
        a.train.apply(cfg)
    })?;
    if dump(common, &cfg)? {
        return Ok(());
    }
    let ds = load_dataset(&cfg)?;
    create_dir(&cfg.out)?;
    let verified_path = cfg.out.join("verified.jsonl");
    let mut w = BufWriter::new(
        File::create(&verified_path)
            .with_context(|| format!("creating {}", verified_path.display()))?,
    );
    let report = eval::evaluate_records(&ds, &explainer(&cfg), &records, |o| {
        let line = serde_json::to_string(o)?;
        let io =
            |e: std::io::Error| cfrec::Error::Precondition(format!("writing verified.jsonl: {e}"));
        writeln!(w, "{line}").map_err(io)?;
        w.flush().map_err(io)
    })?;
    drop(w);
    let csv_path = cfg.out.join("report.csv");
    let json_path = cfg.out.join("report.json");
    let csv = eval::report_csv(std::slice::from_ref(&report));
    write_file(&csv_path, &csv)?;
    write_file(&json_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    manifest::write(
        &cfg.out,
        "evaluate",
        &cfg,
        &[verified_path, csv_path, json_path],
    )?;
    print!("{csv}");
    Ok(())
}

fn sweep(common: &Common, a: SweepArgs) -> anyhow::Result<()> {
    let cfg = resolve(common, |cfg| {
        data_flag(cfg, &a.data);
        if let Some(d) = &a.dims {
            cfg.sweep_dims = d.clone();
        }
        if let Some(n) = a.users {
            cfg.eval.n_users = n;
        }
        a.train.apply(cfg)?;
        a.influence.apply(cfg)?;
        a.search.apply(cfg)
    })?;
    if dump(common, &cfg)? {
        return Ok(());
    }
    let ds = load_dataset(&cfg)?;
    let report = eval::sweep_embedding(
        &ds,
        &cfg.sweep_dims,
        &explainer(&cfg),
        cfg.search.k,
        cfg.eval.n_users,
        cfg.seed,
    )?;
    create_dir(&cfg.out)?;
    let csv_path = cfg.out.join("sweep.csv");
    let svg_path = cfg.out.join("sweep.svg");
    let json_path = cfg.out.join("sweep.json");
    let csv = eval::sweep_csv(&report);
    write_file(&csv_path, &csv)?;
    write_file(&svg_path, &eval::sweep_svg(&report))?;
    write_file(&json_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    manifest::write(&cfg.out, "sweep", &cfg, &[csv_path, svg_path, json_path])?;
    print!("{csv}");
    let fmt = |c: Option<f64>| c.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into());
    println!(
        "corr(mse, esp) = {}  corr(mse, aes) = {}",
        fmt(report.corr_mse_esp),
        fmt(report.corr_mse_aes)
    );
    Ok(())
}
