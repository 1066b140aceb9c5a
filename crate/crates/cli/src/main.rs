use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fiha::caption_extract::{extract_factset_with, ExtractConfig};
use fiha::dsg::{build_forest_with, load_forests, write_forests, ForestOptions};
use fiha::eval::{
    render_markdown, EvalConfig, FreeFormScorer, HttpScorer, PositiveClass, TokenF1,
    UnparseablePolicy,
};
use fiha::jsonl::{read_jsonl, write_jsonl};
use fiha::model_client::{read_responses_lenient, run_batch, BatchOptions, EndpointConfig, HttpTransport};
use fiha::qa_gen::{generate_all, DistractorVocabulary, GenConfig, QaPair};
use fiha::scene_facts::{load_corpus, parse_factset, write_corpus, FactSet, SchemaMode};
use fiha::stats::pair_stats;
use fiha::{EvalReport, Lexicon};

mod config;
mod manifest;

use manifest::Recorder;

#[derive(Parser)]
#[command(name = "fiha", version, about = "Fine-grained hallucination probing for vision-language models")]
pub struct Cli {
    /// TOML or JSON file of default flag values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for per-image work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    log_format: LogFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Extract fact sets from captions.
    Extract(ExtractArgs),
    /// Generate question-answer pairs from fact sets.
    Generate(GenerateArgs),
    /// Ask a model endpoint every question.
    Query(QueryArgs),
    /// Score responses and write a report.
    Evaluate(EvaluateArgs),
    /// Render one or more reports as Markdown tables.
    Report(ReportArgs),
    /// Count pairs by kind, category, polarity and source.
    Stats(StatsArgs),
    /// Check fact-set files against the interchange rules.
    Validate(ValidateArgs),
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct ExtractArgs {
    /// JSONL of {"image_id", "caption"} records.
    #[arg(long)]
    captions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    modifier_window: usize,
    #[arg(long, default_value_t = 2)]
    preposition_gap: usize,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct GenerateArgs {
    /// Fact-set corpus; may be repeated to combine image and caption facts.
    #[arg(long, required = true)]
    facts: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    negative_ratio: f64,
    #[arg(long)]
    max_pairs: Option<usize>,
    #[arg(long)]
    symmetric_wh: bool,
    /// Also write the dependency forests, as a JSON array.
    #[arg(long, value_name = "PATH")]
    emit_dsg: Option<PathBuf>,
    #[arg(long)]
    single_root_relations: bool,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    distractors: Option<PathBuf>,
    /// Ignore unknown fields in fact sets.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct QueryArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Directory holding `{image_id}.jpg` (or .jpeg, .png, .webp, .gif).
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    model: String,
    #[arg(long)]
    out: PathBuf,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long)]
    max_concurrency: Option<usize>,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 1000)]
    backoff_ms: u64,
    #[arg(long)]
    yes_no_suffix: Option<String>,
    #[arg(long)]
    wh_suffix: Option<String>,
    /// Write request payloads to this directory instead of sending them.
    #[arg(long, value_name = "DIR")]
    dry_run: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PositiveArg {
    Yes,
    No,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum UnparseableArg {
    Incorrect,
    Exclude,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, required_unless_present = "no_dsg")]
    dsg: Option<PathBuf>,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_dsg: bool,
    #[arg(long, default_value_t = fiha::eval::DEFAULT_WH_THRESHOLD)]
    wh_threshold: f64,
    #[arg(long, value_enum, default_value_t = PositiveArg::Yes)]
    positive_class: PositiveArg,
    #[arg(long, value_enum, default_value_t = UnparseableArg::Incorrect)]
    unparseable: UnparseableArg,
    /// Score missing responses as unparseable.
    #[arg(long)]
    allow_partial: bool,
    /// Model to score when the responses file holds several.
    #[arg(long)]
    model: Option<String>,
    /// Similarity service for wh answers instead of token F1.
    #[arg(long)]
    scorer_url: Option<String>,
    #[arg(long, value_name = "PATH")]
    verdicts_out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    markdown: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct ReportArgs {
    #[arg(long, required = true)]
    reports: Vec<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum StatsFormat {
    Markdown,
    Json,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct StatsArgs {
    #[arg(long, required = true)]
    pairs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = StatsFormat::Markdown)]
    format: StatsFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
struct ValidateArgs {
    #[arg(long, required = true)]
    facts: Vec<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

enum Failure {
    Usage(String),
    Data(String),
}

type Outcome = Result<(), Failure>;

fn data(e: impl Display) -> Failure {
    Failure::Data(e.to_string())
}

fn at(path: &Path) -> impl Fn(String) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

struct Log {
    json: bool,
    subcommand: &'static str,
}

impl Log {
    fn emit(&self, level: &str, msg: &str) {
        if self.json {
            let line = serde_json::json!({"level": level, "subcommand": self.subcommand, "message": msg});
            eprintln!("{line}");
        } else {
            eprintln!("fiha {}: {level}: {msg}", self.subcommand);
        }
    }

    fn info(&self, msg: impl Display) {
        self.emit("info", &msg.to_string());
    }

    fn warn(&self, msg: impl Display) {
        self.emit("warn", &msg.to_string());
    }

    fn error(&self, msg: impl Display) {
        self.emit("error", &msg.to_string());
    }
}

struct Ctx {
    log: Log,
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let json_logs = argv.windows(2).any(|w| w[0] == "--log-format" && w[1] == "json")
        || argv.iter().any(|a| a == "--log-format=json");
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            Log { json: json_logs, subcommand: "config" }.error(e);
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let subcommand = match &cli.command {
        Command::Extract(_) => "extract",
        Command::Generate(_) => "generate",
        Command::Query(_) => "query",
        Command::Evaluate(_) => "evaluate",
        Command::Report(_) => "report",
        Command::Stats(_) => "stats",
        Command::Validate(_) => "validate",
    };
    let ctx = Ctx {
        log: Log {
            json: cli.log_format == LogFormat::Json,
            subcommand,
        },
        jobs: cli.jobs,
    };
    if ctx.jobs == Some(0) {
        ctx.log.error("--jobs must be at least 1");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Extract(a) => extract(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Query(a) => query(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Validate(a) => validate(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            ctx.log.error(m);
            ExitCode::from(2)
        }
        Err(Failure::Data(m)) => {
            ctx.log.error(m);
            ExitCode::from(1)
        }
    }
}

fn pool(ctx: &Ctx) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = ctx.jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(data)
}

fn lexicon(path: &Option<PathBuf>) -> Result<Lexicon, Failure> {
    match path {
        Some(p) => Lexicon::load(p).map_err(|e| at(p)(e.to_string())),
        None => Ok(Lexicon::bundled()),
    }
}

#[derive(Debug, Deserialize)]
struct CaptionRecord {
    image_id: String,
    caption: String,
}

fn extract(ctx: &Ctx, a: &ExtractArgs) -> Outcome {
    let mut rec = Recorder::start("extract", a);
    rec.input(&a.captions);
    let lex = lexicon(&a.lexicon)?;
    if let Some(p) = &a.lexicon {
        rec.input(p);
    }
    let records: Vec<CaptionRecord> = read_jsonl(&a.captions).map_err(data)?;
    let mut seen = HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.image_id.trim())) {
        return Err(Failure::Data(format!("duplicate image_id {:?} in {}", dup.image_id, a.captions.display())));
    }
    let cfg = ExtractConfig {
        modifier_window: a.modifier_window,
        preposition_gap: a.preposition_gap,
    };
    let corpus: Vec<FactSet> = pool(ctx)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                extract_factset_with(&r.image_id, &r.caption, &lex, &cfg)
                    .map_err(|e| Failure::Data(format!("{}: {e}", r.image_id)))
            })
            .collect::<Result<_, _>>()
    })?;
    write_corpus(&a.out, &corpus).map_err(|e| at(&a.out)(e.to_string()))?;
    let objects: usize = corpus.iter().map(|f| f.objects.len()).sum();
    let relations: usize = corpus.iter().map(|f| f.relations.len()).sum();
    ctx.log.info(format!(
        "{} captions -> {objects} objects, {relations} relations",
        corpus.len()
    ));
    rec.finish(&[&a.out], None).map_err(data)
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Outcome {
    let mut rec = Recorder::start("generate", a);
    rec.seed(a.seed);
    let mode = if a.lenient { SchemaMode::Lenient } else { SchemaMode::Strict };
    let lex = lexicon(&a.lexicon)?;
    let vocab = match &a.distractors {
        Some(p) => {
            rec.input(p);
            DistractorVocabulary::load(p).map_err(|e| at(p)(e.to_string()))?
        }
        None => DistractorVocabulary::from_lexicon(&lex),
    };
    if let Some(p) = &a.lexicon {
        rec.input(p);
    }
    let mut corpus = Vec::new();
    for path in &a.facts {
        rec.input(path);
        corpus.extend(load_corpus(path, mode).map_err(|e| at(path)(e.to_string()))?);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = corpus.iter().find(|f| !seen.insert((f.image_id.clone(), f.source))) {
        return Err(Failure::Data(format!(
            "image {:?} appears twice with source {:?}",
            dup.image_id, dup.source
        )));
    }
    let cfg = GenConfig {
        seed: a.seed,
        negative_ratio: a.negative_ratio,
        max_pairs_per_image: a.max_pairs,
        symmetric_wh: a.symmetric_wh,
    };
    if !(0.0..=1.0).contains(&cfg.negative_ratio) {
        return Err(Failure::Usage(format!("--negative-ratio {} is outside [0, 1]", cfg.negative_ratio)));
    }
    let opts = ForestOptions {
        single_root_relations: a.single_root_relations,
    };
    let per_image = pool(ctx)?.install(|| {
        corpus
            .par_iter()
            .map(|fs| {
                let pairs = generate_all(fs, &lex, &vocab, &cfg)
                    .map_err(|e| Failure::Data(format!("{}: {e}", fs.image_id)))?;
                let forest = match &a.emit_dsg {
                    Some(_) => Some(build_forest_with(&pairs, fs, opts).map_err(data)?),
                    None => None,
                };
                Ok((pairs, forest))
            })
            .collect::<Result<Vec<_>, Failure>>()
    })?;
    let pairs: Vec<QaPair> = per_image.iter().flat_map(|(p, _)| p.iter().cloned()).collect();
    write_jsonl(&a.out, &pairs).map_err(data)?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(dsg) = &a.emit_dsg {
        let forests: Vec<_> = per_image.into_iter().filter_map(|(_, f)| f).collect();
        write_forests(dsg, &forests).map_err(|e| at(dsg)(e.to_string()))?;
        outputs.push(dsg);
    }
    ctx.log.info(format!("{} fact sets -> {} pairs", corpus.len(), pairs.len()));
    rec.finish(&outputs, None).map_err(data)
}

fn query(ctx: &Ctx, a: &QueryArgs) -> Outcome {
    let mut rec = Recorder::start("query", a);
    rec.input(&a.pairs);
    let pairs: Vec<QaPair> = read_jsonl(&a.pairs).map_err(data)?;
    let defaults = EndpointConfig::default();
    let concurrency = a.max_concurrency.unwrap_or(defaults.max_concurrency);
    let cfg = EndpointConfig {
        base_url: a.endpoint.clone(),
        model_name: a.model.clone(),
        api_key_env: a.api_key_env.clone(),
        timeout_secs: a.timeout,
        max_concurrency: ctx.jobs.map_or(concurrency, |j| concurrency.min(j)),
        max_retries: a.max_retries,
        backoff_base_ms: a.backoff_ms,
        yes_no_suffix: a.yes_no_suffix.clone().unwrap_or(defaults.yes_no_suffix),
        wh_suffix: a.wh_suffix.clone().unwrap_or(defaults.wh_suffix),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let transport = HttpTransport::new(&cfg).map_err(data)?;
    let opts = BatchOptions {
        dry_run: a.dry_run.clone(),
        cancel: None,
    };
    let summary = run_batch(&cfg, &transport, &pairs, &a.images, &a.out, &opts).map_err(data)?;
    if summary.dropped_on_resume > 0 {
        ctx.log.warn(format!(
            "dropped {} torn or failed records from {} before resuming",
            summary.dropped_on_resume,
            a.out.display()
        ));
    }
    println!("{}", serde_json::to_string(&summary).expect("serializable summary"));
    match &a.dry_run {
        Some(dir) => rec.finish(&[], Some(&dir.join("manifest.json"))).map_err(data)?,
        None => rec.finish(&[&a.out], None).map_err(data)?,
    }
    if summary.aborted {
        return Err(Failure::Data("run stopped early; rerun to resume".into()));
    }
    if summary.failed > 0 {
        ctx.log.warn(format!("{} pairs failed; rerun to retry them", summary.failed));
    }
    Ok(())
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Outcome {
    let mut rec = Recorder::start("evaluate", a);
    rec.input(&a.pairs);
    rec.input(&a.responses);
    let pairs: Vec<QaPair> = read_jsonl(&a.pairs).map_err(data)?;
    let forests = match (&a.dsg, a.no_dsg) {
        (Some(p), false) => {
            rec.input(p);
            load_forests(p).map_err(|e| at(p)(e.to_string()))?
        }
        _ => Vec::new(),
    };
    let text = std::fs::read_to_string(&a.responses).map_err(|e| at(&a.responses)(e.to_string()))?;
    let (responses, dropped) = read_responses_lenient(&text);
    if dropped > 0 {
        ctx.log.warn(format!("ignored {dropped} malformed, failed or duplicate response lines"));
    }
    let http;
    let scorer: &dyn FreeFormScorer = match &a.scorer_url {
        Some(url) => {
            http = HttpScorer::new(url, std::time::Duration::from_secs(30)).map_err(data)?;
            &http
        }
        None => &TokenF1,
    };
    if !(0.0..=1.0).contains(&a.wh_threshold) {
        return Err(Failure::Usage(format!("--wh-threshold {} is outside [0, 1]", a.wh_threshold)));
    }
    let cfg = EvalConfig {
        wh_threshold: a.wh_threshold,
        use_dsg: !a.no_dsg,
        positive_class: match a.positive_class {
            PositiveArg::Yes => PositiveClass::Yes,
            PositiveArg::No => PositiveClass::No,
        },
        unparseable: match a.unparseable {
            UnparseableArg::Incorrect => UnparseablePolicy::Incorrect,
            UnparseableArg::Exclude => UnparseablePolicy::Exclude,
        },
        allow_partial: a.allow_partial,
        model_name: a.model.clone(),
    };
    let (report, verdicts) = fiha::evaluate(&pairs, &forests, &responses, scorer, &cfg).map_err(data)?;
    let json = serde_json::to_string_pretty(&report).expect("serializable report") + "\n";
    std::fs::write(&a.out, json).map_err(|e| at(&a.out)(e.to_string()))?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(p) = &a.verdicts_out {
        write_jsonl(p, &verdicts).map_err(data)?;
        outputs.push(p);
    }
    if let Some(p) = &a.markdown {
        std::fs::write(p, render_markdown(std::slice::from_ref(&report))).map_err(|e| at(p)(e.to_string()))?;
        outputs.push(p);
    }
    ctx.log.info(format!(
        "{}: accuracy {:.4}, f1 {:.4}, {} gated leaves",
        report.model_name, report.overall.accuracy, report.overall.f1, report.skipped_count
    ));
    rec.finish(&outputs, None).map_err(data)
}

fn report(_ctx: &Ctx, a: &ReportArgs) -> Outcome {
    let mut rec = Recorder::start("report", a);
    let mut reports = Vec::new();
    for p in &a.reports {
        rec.input(p);
        let text = std::fs::read_to_string(p).map_err(|e| at(p)(e.to_string()))?;
        let r: EvalReport = serde_json::from_str(&text).map_err(|e| at(p)(e.to_string()))?;
        reports.push(r);
    }
    let md = render_markdown(&reports);
    match &a.out {
        Some(out) => {
            std::fs::write(out, md).map_err(|e| at(out)(e.to_string()))?;
            rec.finish(&[out], None).map_err(data)
        }
        None => {
            print!("{md}");
            Ok(())
        }
    }
}

fn stats(_ctx: &Ctx, a: &StatsArgs) -> Outcome {
    let mut rec = Recorder::start("stats", a);
    let mut pairs: Vec<QaPair> = Vec::new();
    for p in &a.pairs {
        rec.input(p);
        pairs.extend(read_jsonl::<QaPair>(p).map_err(data)?);
    }
    let s = pair_stats(&pairs);
    let text = match a.format {
        StatsFormat::Markdown => s.to_markdown(),
        StatsFormat::Json => serde_json::to_string_pretty(&s).expect("serializable stats") + "\n",
    };
    match &a.out {
        Some(out) => {
            std::fs::write(out, text).map_err(|e| at(out)(e.to_string()))?;
            rec.finish(&[out], None).map_err(data)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate(ctx: &Ctx, a: &ValidateArgs) -> Outcome {
    let mode = if a.lenient { SchemaMode::Lenient } else { SchemaMode::Strict };
    let mut bad = 0usize;
    let mut good = 0usize;
    for path in &a.facts {
        let text = std::fs::read_to_string(path).map_err(|e| at(path)(e.to_string()))?;
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        // a single pretty-printed document spans several lines
        let chunks: Vec<(usize, &str)> =
            if lines.len() > 1 && serde_json::from_str::<serde_json::Value>(&text).is_ok() {
                vec![(1, text.as_str())]
            } else {
                lines
            };
        for (line, chunk) in chunks {
            match parse_factset(chunk, mode) {
                Ok(_) => good += 1,
                Err(e) => {
                    bad += 1;
                    ctx.log.error(format!("{}:{line}: {e}", path.display()));
                }
            }
        }
    }
    println!("{good} valid, {bad} invalid");
    if bad > 0 {
        return Err(Failure::Data(format!("{bad} fact sets failed validation")));
    }
    Ok(())
}
