use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use unjoin_core::dataset::{filter_items, load_dataset, Flavor, RunConfig};
use unjoin_core::llm::CacheMode;
use unjoin_core::metrics::{buckets_csv, render_summary, RunSummary, Summary};
use unjoin_core::pipeline::Method;
use unjoin_core::run::{execute_run, rescore, SUMMARY_FILE};
use unjoin_core::schema::{read_catalogue, render_simplified, simplify_schema};

#[derive(Debug, Parser)]
#[command(
    name = "unjoin",
    version,
    about = "Multi-table text-to-SQL through schema simplification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a database's simplified (single-table) schema.
    Simplify(SimplifyArgs),
    /// Keep the multi-table items of a dataset and report counts.
    Filter(FilterArgs),
    /// Run a method over a dataset and write records, summary and buckets.
    Run(Box<RunArgs>),
    /// Recompute the summary of a finished run from its records.
    Score(ScoreArgs),
    /// Compare two summary files metric by metric.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long, default_value = "spider")]
    dataset: Flavor,
    #[arg(long)]
    root: PathBuf,
}

#[derive(Debug, Args)]
struct SimplifyArgs {
    #[arg(long)]
    db: String,
    /// Schema catalogue (tables.json layout); defaults to the dataset's.
    #[arg(long)]
    tables: Option<PathBuf>,
    #[arg(long, default_value = "spider")]
    dataset: Flavor,
    #[arg(long)]
    root: Option<PathBuf>,
    /// Print the prompt block with column descriptions instead of bare names.
    #[arg(long)]
    describe: bool,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Write the kept items as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<Flavor>,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    cache: Option<CacheMode>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    topk: Option<usize>,
    /// Open-book retrieval list (JSON lines).
    #[arg(long)]
    retrieval: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
    /// Per-query execution timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    run: PathBuf,
    /// Write the recomputed summary JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fail unless the recomputed summary equals the run's summary.json.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simplify(args) => simplify(args),
        Command::Filter(args) => filter(args),
        Command::Run(args) => run(*args),
        Command::Score(args) => score(args),
        Command::Diff { a, b } => diff(&a, &b),
    }
}

fn simplify(args: SimplifyArgs) -> Result<()> {
    let tables = match (&args.tables, &args.root) {
        (Some(t), _) => t.clone(),
        (None, Some(root)) => root.join(args.dataset.tables_file()),
        (None, None) => bail!("either --tables or --root is required"),
    };
    let catalogue = read_catalogue(&tables)?;
    let db = catalogue
        .get(&args.db)
        .with_context(|| format!("database `{}` not in {}", args.db, tables.display()))?;
    let simplified = simplify_schema(db)?;
    if args.describe {
        let descriptions = db.descriptions();
        println!("{}", render_simplified(&simplified, Some(&descriptions)));
    } else {
        let mut out = std::io::stdout().lock();
        for entry in simplified.entries() {
            if let Err(e) = writeln!(out, "{}", entry.rendered) {
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    break;
                }
                return Err(e.into());
            }
        }
    }
    Ok(())
}

fn filter(args: FilterArgs) -> Result<()> {
    let ds = load_dataset(&args.data.root, args.data.dataset)?;
    let result = filter_items(&ds.items, &ds.catalogue);
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&result.kept)?;
        std::fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    for (id, reason) in &result.dropped {
        eprintln!("dropped {id}: {reason}");
    }
    println!("{} items, {} databases", result.kept.len(), result.database_count());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = args.$flag.clone() { cfg.$($field).+ = v; })*
        };
    }
    set! {
        dataset => dataset,
        root => root,
        method => method,
        cache => cache_mode,
        cache_dir => cache_dir,
        model => llm.model,
        endpoint => llm.endpoint,
        workers => workers,
        topk => top_k,
        timeout => exec_timeout_secs,
        out => out_dir,
    }
    if args.retrieval.is_some() {
        cfg.retrieval = args.retrieval.clone();
    }
    if args.templates.is_some() {
        cfg.template_dir = args.templates.clone();
    }
    if args.limit.is_some() {
        cfg.limit = args.limit;
    }
    let out = execute_run(&cfg)?;
    println!("{}", summary_line(&out.summary.summary));
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn summary_line(s: &Summary) -> String {
    format!(
        "items {}  QE {:.2}  EM {:.2}  table P/R {:.2}/{:.2}  column P/R {:.2}/{:.2}",
        s.items, s.qe, s.em, s.table_precision, s.table_recall, s.column_precision, s.column_recall
    )
}

fn score(args: ScoreArgs) -> Result<()> {
    let (summary, buckets) = rescore(&args.run)?;
    let rendered = render_summary(&summary);
    if let Some(path) = &args.output {
        std::fs::write(path, &rendered).with_context(|| format!("writing {}", path.display()))?;
    }
    if args.check {
        let path = args.run.join(SUMMARY_FILE);
        let existing = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        if existing != rendered {
            bail!("recomputed summary differs from {}", path.display());
        }
    }
    println!("{}", summary_line(&summary.summary));
    print!("{}", buckets_csv(&buckets));
    Ok(())
}

fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn diff(a: &Path, b: &Path) -> Result<()> {
    let (a, b) = (read_summary(a)?.summary, read_summary(b)?.summary);
    println!("{:<18}{:>10}{:>10}{:>10}", "metric", "a", "b", "b-a");
    let rows = [
        ("qe", a.qe, b.qe),
        ("em", a.em, b.em),
        ("table_precision", a.table_precision, b.table_precision),
        ("table_recall", a.table_recall, b.table_recall),
        ("column_precision", a.column_precision, b.column_precision),
        ("column_recall", a.column_recall, b.column_recall),
    ];
    for (name, x, y) in rows {
        println!("{name:<18}{x:>10.2}{y:>10.2}{:>+10.2}", y - x);
    }
    println!("{:<18}{:>10}{:>10}", "items", a.items, b.items);
    Ok(())
}
