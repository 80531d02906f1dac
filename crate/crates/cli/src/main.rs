//! `hice`: score captions, run benchmark protocols, build reports, validate
//! bundles and extract triplets.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 internal error.
//! Results go to stdout, diagnostics to stderr.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hice_core::benchmark::{self, BenchmarkRun, PairwiseOptions, Scorer, Statistic};
use hice_core::bundle_io::{read_bundle, read_bundle_unvalidated};
use hice_core::model::has_errors;
use hice_core::report::{build_report, render_report, ReportFormat};
use hice_core::scoring::{hice_score, ref_hice_score, AblationMode, ScoreBreakdown};
use hice_core::triplets::{Lexicon, TripletExtractor};
use hice_core::{validate_bundle, EvalBundle, Execution};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "hice",
    version,
    about = "Hierarchical image-caption evaluation"
)]
struct Cli {
    /// Worker threads for bundle loading and scoring (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score one or more bundles.
    Score(ScoreArgs),
    /// Run an evaluation protocol over a record file.
    #[command(subcommand)]
    Benchmark(BenchmarkCommand),
    /// Per-phrase / per-region interpretability report for one bundle.
    Report(ReportArgs),
    /// Split text into subject | predicate | object triplets.
    ExtractTriplets(ExtractArgs),
    /// Check a bundle file against every invariant.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScoreFormat {
    Structured,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AblationArg {
    GlobalOnly,
    LocalOnly,
    Fused,
}

impl From<AblationArg> for AblationMode {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::GlobalOnly => AblationMode::GlobalOnly,
            AblationArg::LocalOnly => AblationMode::LocalOnly,
            AblationArg::Fused => AblationMode::Fused,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ScorerArg {
    Hice,
    RefHice,
    GlobalOnly,
    LocalOnly,
}

impl From<ScorerArg> for Scorer {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Hice => Scorer::Hice,
            ScorerArg::RefHice => Scorer::RefHice,
            ScorerArg::GlobalOnly => Scorer::GlobalOnly,
            ScorerArg::LocalOnly => Scorer::LocalOnly,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum StatArg {
    TauB,
    TauC,
}

impl From<StatArg> for Statistic {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::TauB => Statistic::TauB,
            StatArg::TauC => Statistic::TauC,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ReportFormatArg {
    Structured,
    Markdown,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Bundle file; repeat to score several (output keeps this order).
    #[arg(long, required = true)]
    bundle: Vec<PathBuf>,
    /// Include the reference-based terms (gTTC, lTTC, RefHICE).
    #[arg(long, conflicts_with = "ablation")]
    refs: bool,
    /// Report a single ablation component instead of the fused score.
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    /// Print every component score.
    #[arg(long)]
    breakdown: bool,
    #[arg(long, value_enum, default_value = "structured")]
    format: ScoreFormat,
}

#[derive(Subcommand, Debug)]
enum BenchmarkCommand {
    /// Kendall correlation with human judgments.
    Correlation {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        scorer: ScorerArg,
        #[arg(long, value_enum)]
        stat: StatArg,
    },
    /// Pairwise preference accuracy.
    Pairs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        scorer: ScorerArg,
        /// Reference draws averaged for reference-based scorers.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
        draws: u32,
        /// References sampled per bundle in each draw.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
        refs_per_draw: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Foil (hallucination) detection accuracy.
    Foil {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        scorer: ScorerArg,
    },
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!(
            "threshold must lie strictly between 0 and 1, got {v}"
        ))
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value = "0.5", value_parser = parse_threshold)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "structured")]
    format: ReportFormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, args = ["text", "file"])]
struct ExtractArgs {
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
    /// Predicate lexicon to use instead of the built-in one.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    bundle: PathBuf,
}

/// A failure with its exit code.
enum Failure {
    Input(String),
    Internal(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn score_line(b: &EvalBundle, args: &ScoreArgs) -> Result<String, Failure> {
    let breakdown: ScoreBreakdown = if args.refs {
        ref_hice_score(b).map_err(|e| Failure::Input(format!("{}: {e}", b.bundle_id)))?
    } else {
        hice_score(b).map_err(|e| Failure::Input(format!("{}: {e}", b.bundle_id)))?
    };
    let (metric, value) = match (args.ablation, args.refs) {
        (Some(mode), _) => (
            AblationMode::from(mode).to_string(),
            AblationMode::from(mode).pick(&breakdown),
        ),
        (None, true) => (
            "ref_hice".to_string(),
            breakdown.ref_hice.unwrap_or_default(),
        ),
        (None, false) => ("hice".to_string(), breakdown.hice),
    };
    let line = match (args.format, args.breakdown) {
        (ScoreFormat::Structured, false) => {
            json!({ "bundle_id": b.bundle_id, "metric": metric, "value": value }).to_string()
        }
        (ScoreFormat::Structured, true) => {
            let fields =
                serde_json::to_value(&breakdown).map_err(|e| Failure::Internal(e.to_string()))?;
            let mut obj = serde_json::Map::new();
            obj.insert("bundle_id".into(), json!(b.bundle_id));
            obj.extend(fields.as_object().expect("breakdown is an object").clone());
            if args.ablation.is_some() {
                obj.insert(metric.clone(), json!(value));
            }
            serde_json::Value::Object(obj).to_string()
        }
        (ScoreFormat::Text, false) => format!("{}\t{metric}\t{value}", b.bundle_id),
        (ScoreFormat::Text, true) => {
            let obj =
                serde_json::to_value(&breakdown).map_err(|e| Failure::Internal(e.to_string()))?;
            let mut out = format!("bundle_id: {}", b.bundle_id);
            for (k, v) in obj.as_object().expect("breakdown is an object") {
                let _ = write!(out, "\n{k}: {v}");
            }
            out
        }
    };
    Ok(line)
}

fn cmd_score(args: &ScoreArgs, exec: Execution, out: &mut String) -> Result<(), Failure> {
    let loaded = hice_core::bundle_io::read_bundles(&args.bundle, exec);
    let bundles = loaded.into_iter().collect::<Result<Vec<_>, _>>()?;
    let lines = hice_core::parallel::map(exec, &bundles, |b| score_line(b, args));
    for line in lines {
        out.push_str(&line?);
        out.push('\n');
    }
    Ok(())
}

fn emit_run(run: BenchmarkRun, out: &mut String) -> Result<(), Failure> {
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    out.push_str(
        &serde_json::to_string(&run.report).map_err(|e| Failure::Internal(e.to_string()))?,
    );
    out.push('\n');
    Ok(())
}

fn cmd_benchmark(cmd: &BenchmarkCommand, exec: Execution, out: &mut String) -> Result<(), Failure> {
    let run = match cmd {
        BenchmarkCommand::Correlation {
            input,
            scorer,
            stat,
        } => benchmark::run_correlation(input, (*scorer).into(), (*stat).into(), exec)?,
        BenchmarkCommand::Pairs {
            input,
            scorer,
            draws,
            refs_per_draw,
            seed,
        } => {
            let opts = PairwiseOptions {
                draws: *draws as usize,
                refs_per_draw: *refs_per_draw as usize,
                seed: *seed,
            };
            benchmark::run_pairwise(input, (*scorer).into(), &opts, exec)?
        }
        BenchmarkCommand::Foil { input, scorer } => {
            benchmark::run_foil(input, (*scorer).into(), exec)?
        }
    };
    emit_run(run, out)
}

fn cmd_report(args: &ReportArgs, out: &mut String) -> Result<(), Failure> {
    let bundle = read_bundle(&args.bundle)?;
    let report = build_report(&bundle, args.threshold)?;
    let format = match args.format {
        ReportFormatArg::Structured => ReportFormat::Structured,
        ReportFormatArg::Markdown => ReportFormat::Markdown,
    };
    let text = render_report(&report, format);
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        None => out.push_str(&text),
    }
    Ok(())
}

fn cmd_extract(args: &ExtractArgs, out: &mut String) -> Result<(), Failure> {
    let custom = match &args.lexicon {
        Some(path) => Some(
            Lexicon::parse(&read_file(path)?)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let extractor = match &custom {
        Some(lex) => TripletExtractor::new(lex),
        None => TripletExtractor::default(),
    };
    let text = match (&args.text, &args.file) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => read_file(path)?,
        (None, None) => unreachable!("clap enforces one input"),
    };
    for t in extractor.extract(&text) {
        let _ = writeln!(out, "{t}");
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs, out: &mut String) -> Result<(), Failure> {
    let bundle = read_bundle_unvalidated(&args.bundle)?;
    let issues = validate_bundle(&bundle);
    for issue in &issues {
        eprintln!("{}: {issue}", args.bundle.display());
    }
    let errors = issues.iter().filter(|i| i.is_error()).count();
    let warnings = issues.len() - errors;
    if has_errors(&issues) {
        return Err(Failure::Input(format!(
            "{}: invalid bundle ({errors} error(s), {warnings} warning(s))",
            args.bundle.display()
        )));
    }
    let _ = writeln!(
        out,
        "{}: valid ({warnings} warning(s))",
        args.bundle.display()
    );
    Ok(())
}

fn configure_threads(threads: Option<u32>) -> Result<Execution, Failure> {
    match threads {
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build_global()
                .map_err(|e| Failure::Internal(e.to_string()))?;
            Ok(if n == 1 {
                Execution::Sequential
            } else {
                Execution::Parallel
            })
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> Result<String, Failure> {
    let exec = configure_threads(cli.threads)?;
    let mut out = String::new();
    match &cli.command {
        Command::Score(args) => cmd_score(args, exec, &mut out)?,
        Command::Benchmark(cmd) => cmd_benchmark(cmd, exec, &mut out)?,
        Command::Report(args) => cmd_report(args, &mut out)?,
        Command::ExtractTriplets(args) => cmd_extract(args, &mut out)?,
        Command::Validate(args) => cmd_validate(args, &mut out)?,
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = std::panic::catch_unwind(|| run(cli));
    match result {
        Ok(Ok(out)) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Ok(Err(Failure::Input(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
