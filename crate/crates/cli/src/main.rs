//! `forge`: floor-plan dataset synthesis, n-gram baseline and
//! information-gain evaluation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use forge_core::evalstats::cdf_csv;
use forge_core::floorplan::{load_floorplan, prepare, raw_to_json, write_canonical, FloorPlan, WindowTermination};
use forge_core::infogain::PREDICTED;
use forge_core::pipeline::{
    compute_gains, evaluate, frontier_records, load_named_plan, plan_paths, predict_segments, read_jsonl, run_synth,
    token_corpus, tokenize_record, write_jsonl, GainRecord, Header, NamedPlan, PipelineConfig, PredictConfig,
    Predictions, SampleRecord, TOOL, VERSION,
};
use forge_core::seq::{
    fit_ngram, sample_sequence, Context, NGram, QuantizerConfig, DEFAULT_NGRAM_ALPHA, DEFAULT_TOP_P,
};
use forge_core::synthetic::{generate_plan, SyntheticConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "forge", version, about = "Floor-plan occupancy datasets and frontier information-gain evaluation")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FORGE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Floor-plan utilities.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Sample waypoints and emit filtered shortest paths as JSON polylines.
    Paths {
        plan: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate LIDAR trajectories through plans and write a JSON Lines dataset.
    Synth {
        /// Plan files or directories of `*.json` plans.
        #[arg(required = true)]
        plans: Vec<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tokenize the target segments of every sample.
    Tokenize {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// N-gram baseline predictor.
    #[command(subcommand)]
    Ngram(NgramCommand),
    /// Draw token sequences from a fitted n-gram model.
    Sample(SampleArgs),
    /// Detect and cluster frontiers in every sample.
    Frontiers {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-frontier information gain under naive, predicted and true occluders.
    Infogain {
        dataset: PathBuf,
        /// Ground-truth plan files or directories; matched to samples by file stem.
        #[arg(long = "plan", required = true)]
        plans: Vec<PathBuf>,
        /// Predicted segments keyed by sample id.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Estimator name for the predicted segments.
        #[arg(long, default_value = PREDICTED)]
        estimator: String,
        /// Sensor range in meters (defaults to the dataset's).
        #[arg(long)]
        range: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MAE, bootstrap intervals, over/under rates, KS statistics and CDFs.
    Eval {
        gains: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Resample the CDF on this many evenly spaced points.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cdf: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Parse and prepare plans, reporting problems.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write the canonical segment form of a plan.
    Canonicalize { input: PathBuf, output: Option<PathBuf> },
    /// Write seeded synthetic corridor plans.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum NgramCommand {
    /// Fit a smoothed n-gram model on dataset token sequences.
    Fit {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_NGRAM_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw token sequences from a model.
    Sample(SampleArgs),
    /// Predict segments for every sample in a dataset.
    Predict {
        #[arg(long)]
        provider: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_P)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "max-len", default_value_t = 402)]
        max_len: usize,
        /// Forbid vertices in cells already observed as free.
        #[arg(long = "mask-free")]
        mask_free: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    provider: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_P)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long = "max-len", default_value_t = 402)]
    max_len: usize,
    /// Grid side length the model's vocabulary was built for.
    #[arg(long = "grid-size", default_value_t = 121)]
    grid_size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long = "grid-size", default_value_t = 121)]
    grid_size: usize,
    /// Grid side length in meters.
    #[arg(long, default_value_t = 15.0)]
    area: f64,
    /// Sensor range in meters.
    #[arg(long, default_value_t = 4.5)]
    range: f64,
    /// Distance between poses along a path, meters.
    #[arg(long, default_value_t = 0.8)]
    step: f64,
    #[arg(long, default_value_t = 720)]
    rays: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Waypoints sampled per plan.
    #[arg(long, default_value_t = 12)]
    waypoints: usize,
    /// Keep at most this many paths per plan.
    #[arg(long = "max-paths")]
    max_paths: Option<usize>,
    /// Navigation grid resolution, meters.
    #[arg(long, default_value_t = 0.1)]
    resolution: f64,
    /// Minimum wall clearance of waypoints, meters.
    #[arg(long, default_value_t = 0.3)]
    clearance: f64,
    #[arg(long = "min-length", default_value_t = 5.0)]
    min_length: f64,
    #[arg(long = "max-length", default_value_t = 100.0)]
    max_length: f64,
    #[arg(long = "min-turns", default_value_t = 3)]
    min_turns: usize,
    /// Which windows stop rays: exterior, none or all.
    #[arg(long = "window-termination", default_value = "exterior")]
    window_termination: WindowTermination,
}

impl ConfigArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            grid_size: self.grid_size,
            area: self.area,
            range: self.range,
            step: self.step,
            rays: self.rays,
            seed: self.seed,
            waypoints: self.waypoints,
            max_paths: self.max_paths,
            window_termination: self.window_termination,
            ..PipelineConfig::default()
        };
        cfg.nav.resolution = self.resolution;
        cfg.nav.clearance = self.clearance;
        cfg.filter.min_length = self.min_length;
        cfg.filter.max_length = self.max_length;
        cfg.filter.min_turns = self.min_turns;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Completed with some inputs skipped.
struct Partial;

type Outcome = Result<Option<Partial>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Plan(p) => plan(p),
        Command::Paths { plan, cfg, out } => paths(&plan, &cfg.config()?, out.as_deref()),
        Command::Synth { plans, cfg, out } => synth(&plans, &cfg.config()?, out.as_deref()),
        Command::Tokenize { dataset, out } => tokenize(&dataset, out.as_deref()),
        Command::Ngram(NgramCommand::Fit {
            datasets,
            order,
            alpha,
            out,
        }) => ngram_fit(&datasets, order, alpha, &out),
        Command::Ngram(NgramCommand::Sample(a)) | Command::Sample(a) => ngram_sample(&a),
        Command::Ngram(NgramCommand::Predict {
            provider,
            dataset,
            p,
            seed,
            max_len,
            mask_free,
            out,
        }) => {
            let pc = PredictConfig {
                top_p: p,
                seed,
                max_len,
                mask_free,
            };
            ngram_predict(&provider, &dataset, &pc, out.as_deref())
        }
        Command::Frontiers { dataset, out } => frontiers(&dataset, out.as_deref()),
        Command::Infogain {
            dataset,
            plans,
            pred,
            estimator,
            range,
            out,
        } => infogain(&dataset, &plans, pred.as_deref(), &estimator, range, out.as_deref()),
        Command::Eval {
            gains,
            trials,
            seed,
            bins,
            out,
            cdf,
        } => eval(&gains, trials, seed, bins, out.as_deref(), cdf.as_deref()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn producer() -> serde_json::Value {
    json!({ "tool": TOOL, "version": VERSION })
}

/// Expands directories into their `*.json` files, sorted by name.
fn expand_plan_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn read_dataset(path: &Path) -> Result<(PipelineConfig, Vec<SampleRecord>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (header, records) = read_jsonl::<SampleRecord>(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    let cfg = match header {
        Some(h) => h.config,
        None => {
            log::warn!("{} has no header; assuming default configuration", path.display());
            PipelineConfig::default()
        }
    };
    Ok((cfg, records))
}

fn plan(cmd: PlanCommand) -> Outcome {
    match cmd {
        PlanCommand::Validate { files } => {
            let mut failed = 0;
            for f in &files {
                match load_floorplan(f) {
                    Ok(raw) => {
                        let plan = prepare(&raw);
                        let mut notes = Vec::new();
                        if plan.perimeter.is_empty() {
                            notes.push("no enclosed perimeter".to_string());
                        }
                        if plan.dropped_zero_length > 0 {
                            notes.push(format!("{} zero-length segments dropped", plan.dropped_zero_length));
                        }
                        println!(
                            "ok {}: {} segments, {} perimeter vertices, {} exterior windows{}",
                            f.display(),
                            plan.segments.len(),
                            plan.perimeter.len(),
                            plan.exterior_windows().len(),
                            if notes.is_empty() { String::new() } else { format!(" ({})", notes.join("; ")) }
                        );
                    }
                    Err(e) => {
                        failed += 1;
                        println!("invalid {}: {e}", f.display());
                    }
                }
            }
            if failed == files.len() {
                bail!("no valid plans");
            }
            Ok((failed > 0).then_some(Partial))
        }
        PlanCommand::Canonicalize { input, output: out } => {
            let plan = prepare(&load_floorplan(&input)?);
            let mut doc: serde_json::Value = serde_json::from_str(&write_canonical(&plan)?)?;
            doc["producer"] = producer();
            write_json(out.as_deref(), &doc)?;
            Ok(None)
        }
        PlanCommand::Generate { seed, count, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let cfg = SyntheticConfig::default();
            for i in 0..count as u64 {
                let s = seed.wrapping_add(i);
                let mut doc = raw_to_json(&generate_plan(s, &cfg));
                doc["producer"] = producer();
                doc["seed"] = json!(s);
                let path = out_dir.join(format!("plan_{s:06}.json"));
                write_json(Some(&path), &doc)?;
            }
            log::info!("wrote {count} plans to {}", out_dir.display());
            Ok(None)
        }
    }
}

fn paths(plan_path: &Path, cfg: &PipelineConfig, out: Option<&Path>) -> Outcome {
    let plan = load_named_plan(plan_path)?;
    let paths = plan_paths(&plan.plan, &plan.id, cfg)?;
    log::info!("{}: {} paths", plan.id, paths.len());
    write_json(
        out,
        &json!({ "header": Header::new(cfg), "plan_id": plan.id, "paths": paths }),
    )?;
    Ok(None)
}

fn synth(inputs: &[PathBuf], cfg: &PipelineConfig, out: Option<&Path>) -> Outcome {
    let files = expand_plan_paths(inputs)?;
    let mut plans: Vec<NamedPlan> = Vec::new();
    let mut failed = 0;
    for f in &files {
        match load_named_plan(f) {
            Ok(p) => {
                if plans.iter().any(|q| q.id == p.id) {
                    bail!("duplicate plan id '{}'", p.id);
                }
                plans.push(p);
            }
            Err(e) => {
                failed += 1;
                log::error!("{}: {e}", f.display());
            }
        }
    }
    if plans.is_empty() {
        bail!("no usable plans");
    }
    let (records, outcomes) = run_synth(&plans, cfg);
    for o in &outcomes {
        match &o.result {
            Ok(n) => log::info!("{}: {n} samples", o.plan_id),
            Err(e) => {
                failed += 1;
                log::error!("{}: {e}", o.plan_id);
            }
        }
    }
    write_jsonl(output(out)?, &Header::new(cfg), &records)?;
    log::info!("{} samples from {} plans", records.len(), plans.len());
    Ok((failed > 0).then_some(Partial))
}

fn tokenize(dataset: &Path, out: Option<&Path>) -> Outcome {
    let (cfg, records) = read_dataset(dataset)?;
    let q = cfg.quantizer();
    let tokens: Vec<_> = records.iter().map(|r| tokenize_record(r, &q)).collect();
    let clamped: usize = tokens.iter().map(|t| t.clamped).sum();
    if clamped > 0 {
        log::warn!("{clamped} vertices clamped to the grid extent");
    }
    write_jsonl(output(out)?, &Header::new(&cfg), &tokens)?;
    Ok(None)
}

fn ngram_fit(datasets: &[PathBuf], order: usize, alpha: f64, out: &Path) -> Outcome {
    let mut corpus = Vec::new();
    let mut q: Option<QuantizerConfig> = None;
    for d in datasets {
        let (cfg, records) = read_dataset(d)?;
        let dq = cfg.quantizer();
        if q.is_some_and(|q| q != dq) {
            bail!("{} uses a different grid than earlier datasets", d.display());
        }
        q = Some(dq);
        corpus.extend(token_corpus(&records, &dq));
    }
    let q = q.expect("at least one dataset");
    let model = fit_ngram(&corpus, order, q.vocab_size(), alpha)?;
    log::info!(
        "fitted order-{order} model on {} sequences, {} contexts",
        corpus.len(),
        model.context_count()
    );
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    model.write(BufWriter::new(file))?;
    Ok(None)
}

fn load_model(path: &Path) -> Result<NGram> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(NGram::read(BufReader::new(file))?)
}

fn ngram_sample(a: &SampleArgs) -> Outcome {
    let model = load_model(&a.provider)?;
    let q = QuantizerConfig::from(forge_core::grid::GridGeometry::new(a.grid_size, 1.0));
    if q.vocab_size() != model.vocab_size {
        bail!(
            "model vocabulary {} does not match grid size {} (expected {})",
            model.vocab_size,
            a.grid_size,
            q.vocab_size()
        );
    }
    let mut w = output(a.out.as_deref())?;
    let mut incomplete = 0;
    for i in 0..a.count {
        let seed = a.seed.wrapping_add(i as u64);
        let s = sample_sequence(&model, &Context::default(), q.start_id(), q.end_id(), a.p, a.max_len, seed)?;
        incomplete += usize::from(!s.complete);
        serde_json::to_writer(&mut w, &json!({ "seed": seed, "complete": s.complete, "tokens": s.tokens(&q) }))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if incomplete > 0 {
        log::warn!("{incomplete} sequences hit the length limit");
    }
    Ok(None)
}

fn ngram_predict(provider: &Path, dataset: &Path, pc: &PredictConfig, out: Option<&Path>) -> Outcome {
    let model = load_model(provider)?;
    let (cfg, records) = read_dataset(dataset)?;
    let q = cfg.quantizer();
    if q.vocab_size() != model.vocab_size {
        bail!("model vocabulary {} does not match the dataset grid", model.vocab_size);
    }
    let preds = predict_segments(&model, &records, &q, pc)?;
    let header = Header::new(&cfg).with("predict", pc).with("model_order", model.order);
    write_json(out, &json!({ "header": header, "predictions": preds }))?;
    Ok(None)
}

fn frontiers(dataset: &Path, out: Option<&Path>) -> Outcome {
    let (cfg, records) = read_dataset(dataset)?;
    let fr = frontier_records(&records)?;
    write_jsonl(output(out)?, &Header::new(&cfg), &fr)?;
    Ok(None)
}

/// Accepts either a bare `{id: segments}` map or one wrapped in `predictions`.
fn read_predictions(path: &Path) -> Result<Predictions> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut v: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
    if let Some(inner) = v.get_mut("predictions") {
        v = inner.take();
    }
    serde_json::from_value(v).with_context(|| format!("parsing {}", path.display()))
}

fn infogain(
    dataset: &Path,
    plan_inputs: &[PathBuf],
    pred: Option<&Path>,
    estimator: &str,
    range: Option<f64>,
    out: Option<&Path>,
) -> Outcome {
    let (mut cfg, records) = read_dataset(dataset)?;
    if let Some(r) = range {
        cfg.range = r;
        cfg.validate()?;
    }
    let mut plans: BTreeMap<String, FloorPlan> = BTreeMap::new();
    for f in expand_plan_paths(plan_inputs)? {
        let p = load_named_plan(&f)?;
        plans.insert(p.id, p.plan);
    }
    let preds = pred.map(read_predictions).transpose()?;
    let mut partial = false;
    if let Some(p) = &preds {
        let unused: Vec<&String> = p.keys().filter(|k| !records.iter().any(|r| &r.id == *k)).collect();
        if !unused.is_empty() {
            partial = true;
            log::warn!("{} predictions match no sample: {}", unused.len(), list(&unused));
        }
    }
    let result = compute_gains(&records, &plans, preds.as_ref().map(|p| (estimator, p)), &cfg);
    if !result.skipped.is_empty() {
        partial = true;
        for (id, why) in &result.skipped {
            log::warn!("skipped {id}: {why}");
        }
    }
    let header = Header::new(&cfg).with("estimator", estimator);
    write_jsonl(output(out)?, &header, &result.records)?;
    log::info!("{} gain records for {} samples", result.records.len(), records.len());
    Ok(partial.then_some(Partial))
}

fn list(ids: &[&String]) -> String {
    let shown: Vec<&str> = ids.iter().take(10).map(|s| s.as_str()).collect();
    let more = ids.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} and {more} more", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

fn eval(gains: &Path, trials: usize, seed: u64, bins: Option<usize>, out: Option<&Path>, cdf: Option<&Path>) -> Outcome {
    let file = File::open(gains).with_context(|| format!("opening {}", gains.display()))?;
    let (header, records) = read_jsonl::<GainRecord>(BufReader::new(file))?;
    if records.is_empty() {
        bail!("{} holds no gain records", gains.display());
    }
    let cfg = header.map(|h| h.config).unwrap_or_default();
    let (report, rows) = evaluate(&records, trials, seed, bins)?;
    let header = Header::new(&cfg).with("trials", trials).with("seed", seed);
    if let Some(path) = cdf {
        let mut w = output(Some(path))?;
        writeln!(w, "# {TOOL} {VERSION} config_hash={}", header.config_hash)?;
        w.write_all(cdf_csv(&rows).as_bytes())?;
        w.flush()?;
    }
    write_json(out, &json!({ "header": header, "report": report }))?;
    Ok(None)
}
