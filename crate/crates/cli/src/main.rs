mod backend;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, Write};
use std::os::unix::net::UnixListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use logic_selftrain::consistency::{content_score, tokenize, ConsistencyConfig, DEFAULT_BETA};
use logic_selftrain::corpus::{
    bucket_by_depth, calibrate_thresholds, convert_logic2text, dataset_stats, form_depths, load_dataset, load_pool,
    sample_few_shot, split_digest, write_records, DepthThresholds, LoadStats, ParallelPair,
};
use logic_selftrain::metrics::corpus_eval;
use logic_selftrain::parse_logical_form;
use logic_selftrain::rules::{structure_verdict, StructureVerdict, DEFAULT_KAPPA};
use logic_selftrain::schema::{FunctionSchema, LogicType};
use logic_selftrain::selftrain::{run_self_training, IterationView, RunOptions, SelfTrainConfig};
use logic_selftrain::tagger::protocol::serve;
use logic_selftrain::tagger::{Direction, ReplayTagger, Tagger};

use backend::{BackendSpec, BuildOptions};

#[derive(Parser)]
#[command(name = "logic-selftrain", version, about = "Validate logical forms, score round trips and run self-training")]
struct Cli {
    /// Output style.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Human-readable, tab-separated.
    Text,
    /// One JSON object per line.
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Check logical forms against the structure rules.
    Validate(ValidateArgs),
    /// Content-consistency score between original and recovered texts.
    Score(ScoreArgs),
    /// BLEU-1 and ROUGE-1/2/L of candidates against references.
    Eval(EvalArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Split a dataset into depth buckets.
    Bucket(BucketArgs),
    /// Sample a few-shot training set; the rest becomes the unlabeled pool.
    SampleFewshot(SampleArgs),
    /// Run the self-training loop.
    Selftrain(SelftrainArgs),
    /// Convert a Logic2Text JSON split into dataset records.
    Convert(ConvertArgs),
    /// Serve replay taggers over the tagger protocol.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SchemaArg {
    /// Function schema (TOML); defaults to the built-in schema.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl SchemaArg {
    fn load(&self) -> Result<FunctionSchema> {
        match &self.schema {
            Some(p) => FunctionSchema::load(p).with_context(|| format!("cannot load schema {}", p.display())),
            None => Ok(FunctionSchema::default_schema()),
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    /// Dataset records, or raw forms one per line with `--forms`.
    input: PathBuf,
    /// Treat each input line as a raw logical form.
    #[arg(long)]
    forms: bool,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// Exit with status 1 if any form fails.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    schema: SchemaArg,
}

#[derive(Args)]
struct ScoreArgs {
    /// Original text (omit when using --input).
    #[arg(required_unless_present = "input")]
    original: Option<String>,
    /// Recovered text.
    #[arg(required_unless_present = "input")]
    recovered: Option<String>,
    /// Lines of `{"id": .., "original": .., "recovered": ..}`.
    #[arg(long, conflicts_with_all = ["original", "recovered"])]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Recall against the original length, precision against the recovered.
    #[arg(long)]
    conventional: bool,
    #[arg(long)]
    case_sensitive: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Generated texts, one per line.
    #[arg(long)]
    candidates: PathBuf,
    /// Reference texts, line-aligned with the candidates.
    #[arg(long)]
    references: PathBuf,
    /// Line-aligned logical forms or logic type names to group by.
    #[arg(long, value_name = "FILE")]
    group_by_logic: Option<PathBuf>,
    /// Also report unsmoothed BLEU-4.
    #[arg(long)]
    bleu4: bool,
    #[arg(long)]
    case_sensitive: bool,
    #[command(flatten)]
    schema: SchemaArg,
}

#[derive(Args)]
struct StatsArgs {
    input: PathBuf,
}

#[derive(Args)]
struct BucketArgs {
    input: PathBuf,
    /// Inclusive upper depths of the easy and middle buckets.
    #[arg(long, default_value_t = DepthThresholds::default())]
    thresholds: DepthThresholds,
    /// Pick the thresholds whose bucket sizes best match `easy,middle,hard`.
    #[arg(long, value_name = "E,M,H", value_parser = parse_triple, conflicts_with = "thresholds")]
    calibrate: Option<[usize; 3]>,
    /// Write easy.jsonl, middle.jsonl and hard.jsonl here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    input: PathBuf,
    /// Number of gold pairs to keep.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.jsonl, pool.jsonl and split.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SelftrainArgs {
    /// Gold training pairs.
    #[arg(long)]
    train: PathBuf,
    /// Unlabeled pool.
    #[arg(long)]
    pool: PathBuf,
    /// Checkpoint directory; also receives train_final.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Backend for both directions.
    #[arg(long, default_value = "replay")]
    backend: BackendSpec,
    /// Text-to-logic backend (overrides --backend).
    #[arg(long)]
    t2l_backend: Option<BackendSpec>,
    /// Logic-to-text backend (overrides --backend).
    #[arg(long)]
    l2t_backend: Option<BackendSpec>,
    /// Replay memory for the text-to-logic direction (`{"in","out"}` lines).
    #[arg(long)]
    t2l_memory: Option<PathBuf>,
    /// Replay memory for the logic-to-text direction.
    #[arg(long)]
    l2t_memory: Option<PathBuf>,
    /// Root function of the template text-to-logic backend.
    #[arg(long, default_value = "count")]
    template_root: String,
    /// Loop settings (TOML); command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Pool shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Keep iterating when no candidate qualifies.
    #[arg(long)]
    no_early_stop: bool,
    /// Include table rows in tagger inputs.
    #[arg(long)]
    include_rows: bool,
    /// Scoring threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Continue from the checkpoint in --out.
    #[arg(long)]
    resume: bool,
    /// Check conservation and selection invariants every iteration.
    #[arg(long)]
    verify_invariants: bool,
    /// Stop after this many iterations, as if interrupted.
    #[arg(long, hide = true)]
    halt_after: Option<usize>,
    #[command(flatten)]
    schema: SchemaArg,
}

#[derive(Args)]
struct ConvertArgs {
    /// Logic2Text JSON array.
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Id prefix, e.g. the split name.
    #[arg(long, default_value = "l2t")]
    prefix: String,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    t2l_memory: Option<PathBuf>,
    #[arg(long)]
    l2t_memory: Option<PathBuf>,
    /// Listen on a Unix socket instead of standard streams; every connection
    /// gets its own fresh taggers.
    #[arg(long)]
    socket: Option<PathBuf>,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || format!("expected three comma-separated counts, got `{s}`");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

fn warn_skipped(path: &Path, stats: &LoadStats) {
    for s in &stats.skipped {
        eprintln!("warning: {}:{}: skipped: {}", path.display(), s.line, s.message);
    }
}

fn dataset(path: &Path) -> Result<Vec<ParallelPair>> {
    let (pairs, stats) = load_dataset(path)?;
    warn_skipped(path, &stats);
    Ok(pairs)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn emit<T: Serialize>(out: &mut impl Write, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct VerdictRecord<'a> {
    id: &'a str,
    #[serde(flatten)]
    verdict: &'a StructureVerdict,
}

fn validate(args: &ValidateArgs, format: Format, out: &mut impl Write) -> Result<bool> {
    let schema = args.schema.load()?;
    let forms: Vec<(String, String)> = if args.forms {
        read_lines(&args.input)?
            .into_iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (format!("line {}", i + 1), l))
            .collect()
    } else {
        dataset(&args.input)?.into_iter().map(|p| (p.id, p.logic)).collect()
    };
    let mut passed = 0;
    for (id, form) in &forms {
        let v = structure_verdict(form, &schema, args.kappa);
        if v.overall_pass {
            passed += 1;
        }
        match format {
            Format::Records => emit(out, &VerdictRecord { id, verdict: &v })?,
            Format::Text if !v.overall_pass => {
                let reason = if !v.rule1_pass {
                    "unbalanced braces".to_string()
                } else if let Err(e) = parse_logical_form(form) {
                    format!("parse error: {e}")
                } else if !v.rule2_pass {
                    "unknown function".to_string()
                } else {
                    format!("arity agreement {:.4} < {}", v.rule3_avg, v.kappa)
                };
                writeln!(out, "FAIL\t{id}\t{reason}")?;
            }
            Format::Text => {}
        }
    }
    if format == Format::Text {
        let pct = 100.0 * passed as f64 / forms.len().max(1) as f64;
        writeln!(out, "{passed}/{} forms pass ({pct:.2}%)", forms.len())?;
    }
    Ok(passed == forms.len())
}

#[derive(Deserialize)]
struct ScorePair {
    #[serde(default)]
    id: Option<String>,
    original: String,
    recovered: String,
}

fn score(args: &ScoreArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let cfg = ConsistencyConfig { beta: args.beta, lowercase: !args.case_sensitive, conventional: args.conventional };
    if !(cfg.beta > 0.0 && cfg.beta.is_finite()) {
        bail!("beta must be a positive finite number");
    }
    let pairs = match &args.input {
        Some(path) => {
            let mut pairs = Vec::new();
            for (i, line) in read_lines(path)?.iter().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let p: ScorePair = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
                pairs.push(ScorePair { id: Some(p.id.unwrap_or_else(|| format!("line {}", i + 1))), ..p });
            }
            pairs
        }
        None => vec![ScorePair {
            id: None,
            original: args.original.clone().unwrap_or_default(),
            recovered: args.recovered.clone().unwrap_or_default(),
        }],
    };
    for p in &pairs {
        let s = content_score(&p.original, &p.recovered, &cfg);
        match (format, &p.id) {
            (Format::Records, id) => emit(out, &serde_json::json!({ "id": id, "score": s }))?,
            (Format::Text, Some(id)) => writeln!(out, "{id}\t{s:.4}")?,
            (Format::Text, None) => writeln!(out, "{s:.4}")?,
        }
    }
    Ok(())
}

fn eval(args: &EvalArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let tok = ConsistencyConfig { lowercase: !args.case_sensitive, ..ConsistencyConfig::default() };
    let cands = read_lines(&args.candidates)?;
    let refs = read_lines(&args.references)?;
    if cands.len() != refs.len() {
        bail!(
            "{} has {} lines but {} has {}",
            args.candidates.display(),
            cands.len(),
            args.references.display(),
            refs.len()
        );
    }
    let groups = match &args.group_by_logic {
        Some(path) => {
            let schema = args.schema.load()?;
            let lines = read_lines(path)?;
            if lines.len() != cands.len() {
                bail!("{} has {} lines for {} candidates", path.display(), lines.len(), cands.len());
            }
            let mut types = Vec::with_capacity(lines.len());
            for (i, l) in lines.iter().enumerate() {
                let t = match l.trim().parse::<LogicType>() {
                    Ok(t) => t,
                    Err(_) => parse_logical_form(l)
                        .map_err(anyhow::Error::from)
                        .and_then(|tree| tree.classify(&schema).map_err(anyhow::Error::from))
                        .with_context(|| format!("{}:{}: cannot determine logic type", path.display(), i + 1))?,
                };
                types.push(t);
            }
            Some(types)
        }
        None => None,
    };
    let pairs: Vec<(Vec<String>, Vec<String>)> =
        cands.iter().zip(&refs).map(|(c, r)| (tokenize(c, &tok), tokenize(r, &tok))).collect();
    let report = corpus_eval(&pairs, groups.as_deref(), args.bleu4)?;
    match format {
        Format::Text => write!(out, "{}", report.to_text())?,
        Format::Records => write!(out, "{}", report.to_records())?,
    }
    Ok(())
}

fn stats(args: &StatsArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let s = dataset_stats(&dataset(&args.input)?);
    match format {
        Format::Records => emit(out, &s)?,
        Format::Text => {
            writeln!(out, "tables\t{}", s.tables)?;
            writeln!(out, "examples\t{}", s.examples)?;
            writeln!(out, "vocabulary\t{}", s.vocabulary)?;
            writeln!(out, "avg_description_length\t{:.2}", s.avg_description_length)?;
            writeln!(out, "avg_nodes\t{:.2}", s.avg_nodes)?;
            writeln!(out, "avg_function_nodes\t{:.2}", s.avg_function_nodes)?;
            writeln!(out, "avg_linearized_length\t{:.2}", s.avg_linearized_length)?;
            writeln!(out, "unparseable\t{}", s.unparseable)?;
        }
    }
    Ok(())
}

fn bucket(args: &BucketArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let pairs = dataset(&args.input)?;
    let (thresholds, deviation) = match args.calibrate {
        Some(target) => {
            let (th, dev) = calibrate_thresholds(&form_depths(&pairs), target);
            (th, Some(dev))
        }
        None => (args.thresholds, None),
    };
    let b = bucket_by_depth(&pairs, thresholds);
    for (id, e) in &b.errors {
        eprintln!("warning: {}: record `{id}` does not parse ({e}); counted as hard", args.input.display());
    }
    let [easy, middle, hard] = b.counts();
    match format {
        Format::Records => emit(
            out,
            &serde_json::json!({
                "thresholds": thresholds.to_string(),
                "easy": easy, "middle": middle, "hard": hard,
                "unparseable": b.errors.len(),
                "deviation": deviation,
            }),
        )?,
        Format::Text => {
            writeln!(out, "thresholds\t{thresholds}")?;
            writeln!(out, "easy\t{easy}")?;
            writeln!(out, "middle\t{middle}")?;
            writeln!(out, "hard\t{hard}")?;
            if let Some(d) = deviation {
                writeln!(out, "deviation\t{d}")?;
            }
        }
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        let by_id: BTreeMap<&str, &ParallelPair> = pairs.iter().map(|p| (p.id.as_str(), p)).collect();
        for (name, ids) in [("easy", &b.easy), ("middle", &b.middle), ("hard", &b.hard)] {
            let recs: Vec<&ParallelPair> = ids.iter().map(|id| by_id[id.as_str()]).collect();
            write_records(dir.join(format!("{name}.jsonl")), &recs)?;
        }
    }
    Ok(())
}

fn sample(args: &SampleArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let pairs = dataset(&args.input)?;
    let (train, pool) = sample_few_shot(&pairs, args.n, args.seed)?;
    let digest = split_digest(&train, &pool);
    fs::create_dir_all(&args.out_dir)?;
    write_records(args.out_dir.join("train.jsonl"), &train)?;
    write_records(args.out_dir.join("pool.jsonl"), &pool)?;
    let info = serde_json::json!({ "n": args.n, "seed": args.seed, "train": train.len(), "pool": pool.len(), "digest": digest });
    fs::write(args.out_dir.join("split.json"), format!("{}\n", serde_json::to_string_pretty(&info)?))?;
    match format {
        Format::Records => emit(out, &info)?,
        Format::Text => writeln!(out, "train\t{}\npool\t{}\ndigest\t{digest}", train.len(), pool.len())?,
    }
    Ok(())
}

fn loop_config(args: &SelftrainArgs) -> Result<SelfTrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => SelfTrainConfig::default(),
    };
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(kappa) = args.kappa {
        cfg.kappa = kappa;
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(seed) = args.seed {
        cfg.shuffle_seed = seed;
    }
    if args.max_iterations.is_some() {
        cfg.max_iterations = args.max_iterations;
    }
    if args.no_early_stop {
        cfg.early_stop_if_no_qualified = false;
    }
    if args.include_rows {
        cfg.include_rows = true;
    }
    cfg.jobs = args.jobs;
    cfg.verify_invariants = args.verify_invariants;
    Ok(cfg)
}

fn selftrain(args: &SelftrainArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let schema = args.schema.load()?;
    let cfg = loop_config(args)?;
    let train = dataset(&args.train)?;
    let (pool, stats) = load_pool(&args.pool)?;
    warn_skipped(&args.pool, &stats);

    let t2l_spec = args.t2l_backend.as_ref().unwrap_or(&args.backend);
    let l2t_spec = args.l2t_backend.as_ref().unwrap_or(&args.backend);
    let base = BuildOptions { memory: None, template_root: &args.template_root, schema: &schema };
    let t2l_opts = BuildOptions { memory: args.t2l_memory.as_deref(), ..base };
    let l2t_opts = BuildOptions { memory: args.l2t_memory.as_deref(), ..base };
    let mut t2l = backend::build(t2l_spec, Direction::TextToLogic, &t2l_opts)?;
    let mut l2t = backend::build(l2t_spec, Direction::LogicToText, &l2t_opts)?;

    let mut progress = |v: &IterationView<'_>| {
        let it = v.state.iterations.last().expect("iteration recorded");
        eprintln!(
            "iteration {}: pool {} -> {}, qualified {}, selected {}, mean selected score {:.4}",
            v.iteration, it.pool_before, it.pool_after, it.qualified, it.selected, it.selected_scores.mean
        );
    };
    let outcome = run_self_training(
        &train,
        &pool,
        t2l.as_mut(),
        l2t.as_mut(),
        &schema,
        &cfg,
        Some(&args.out),
        RunOptions { resume: args.resume, halt_after: args.halt_after, observer: Some(&mut progress) },
    )?;
    if outcome.state.done {
        write_records(args.out.join("train_final.jsonl"), &outcome.train_set)?;
    }
    let r = &outcome.report;
    match format {
        Format::Records => emit(out, r)?,
        Format::Text => {
            writeln!(out, "iterations\t{}", r.iterations.len())?;
            writeln!(out, "train\t{} -> {}", r.initial_train, r.final_train)?;
            writeln!(out, "pool\t{} -> {}", r.initial_pool, r.final_pool)?;
            match r.stop_reason {
                Some(reason) => writeln!(out, "stopped\t{reason}")?,
                None => writeln!(out, "stopped\tinterrupted (resume with --resume)")?,
            }
        }
    }
    Ok(())
}

fn convert(args: &ConvertArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let json = fs::read_to_string(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let pairs = convert_logic2text(&json, &args.prefix).with_context(|| format!("{}: not a Logic2Text split", args.input.display()))?;
    write_records(&args.output, &pairs)?;
    match format {
        Format::Records => emit(out, &serde_json::json!({ "records": pairs.len(), "output": args.output }))?,
        Format::Text => writeln!(out, "wrote {} records to {}", pairs.len(), args.output.display())?,
    }
    Ok(())
}

fn replay_backends(args: &ServeArgs) -> Result<BTreeMap<Direction, Box<dyn Tagger>>> {
    let mut backends: BTreeMap<Direction, Box<dyn Tagger>> = BTreeMap::new();
    for (direction, memory) in [(Direction::TextToLogic, &args.t2l_memory), (Direction::LogicToText, &args.l2t_memory)] {
        let memory = match memory {
            Some(p) => backend::load_memory(p)?,
            None => Vec::new(),
        };
        backends.insert(direction, Box::new(ReplayTagger::with_memory(direction, memory)));
    }
    Ok(backends)
}

fn serve_cmd(args: &ServeArgs) -> Result<()> {
    let Some(path) = &args.socket else {
        let mut backends = replay_backends(args)?;
        serve(&mut backends, io::stdin().lock(), io::stdout().lock())?;
        return Ok(());
    };
    let listener = UnixListener::bind(path).with_context(|| format!("cannot bind {}", path.display()))?;
    for stream in listener.incoming() {
        let stream = stream?;
        let mut backends = replay_backends(args)?;
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => return eprintln!("error: {e}"),
            };
            if let Err(e) = serve(&mut backends, reader, stream) {
                eprintln!("error: connection failed: {e}");
            }
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let f = cli.format;
    match &cli.command {
        Command::Validate(a) => return validate(a, f, &mut out).map(|ok| ok || !a.strict),
        Command::Score(a) => score(a, f, &mut out)?,
        Command::Eval(a) => eval(a, f, &mut out)?,
        Command::Stats(a) => stats(a, f, &mut out)?,
        Command::Bucket(a) => bucket(a, f, &mut out)?,
        Command::SampleFewshot(a) => sample(a, f, &mut out)?,
        Command::Selftrain(a) => selftrain(a, f, &mut out)?,
        Command::Convert(a) => convert(a, f, &mut out)?,
        Command::Serve(a) => serve_cmd(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
