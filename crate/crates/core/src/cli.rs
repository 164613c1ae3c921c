//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or
//! empty dataset / results directory, 3 failure while running or writing.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    fit_logistic, read_results, render_regression, render_report, run_experiment, write_results, ExperimentConfig,
    Formula, Observation, OutputFormat, Report, UNION_REPETITION,
};
use crate::catalog::SensitiveCatalog;
use crate::explore::StrategyKind;
use crate::ir::{lint, parse_app, scan_pair_dataset, AppPair, SkippedPair};
use crate::static_analysis::{build_call_graph, diff_manifest};
use crate::synth::{write_fuzz_dataset, write_synthetic_dataset, FuzzConfig};
use crate::taint::{taint_diff, TaintVerdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATASET: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sandmine", version, about = "Sandbox mining and taint differencing over app pairs")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the available exploration tools.
    ListTools,
    /// Run the WS/WOS experiment over a pair dataset.
    Run(RunArgs),
    /// Re-render the report of a finished run.
    Report(ReportArgs),
    /// Run only the taint-differencing detector.
    Taint(TaintArgs),
    /// Fit a logistic regression on a finished run's observations.
    Regress(RegressArgs),
    /// Write the synthetic benchmark dataset, or random fuzz pairs.
    Generate(GenerateArgs),
    /// Parse and lint one app file; optionally dump its call graph.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Directory with one `<pair>/{benign,malign}.app` subdirectory per pair.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated tool names.
    #[arg(long, value_delimiter = ',')]
    tools: Option<Vec<String>>,
    /// GUI events per exploration.
    #[arg(long, short = 't')]
    budget: Option<u32>,
    /// Explorations per (tool, app); repetition r uses seed + r - 1.
    #[arg(long = "repetitions", short = 'r')]
    repetitions: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Format of the written report.
    #[arg(long, value_enum)]
    output_format: Option<FormatArg>,
    /// Only run WOS (dynamic traces only).
    #[arg(long)]
    disable_static_analysis: bool,
    /// Per-handler statement limit.
    #[arg(long)]
    step_limit: Option<usize>,
    /// Results root; the run is written to `<out>/<run-id>/`.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Defaults to `<dataset-dir>-seed<N>`.
    #[arg(long)]
    run_id: Option<String>,
    /// Sensitive-API catalog file (defaults to the built-in catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of a finished run.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum)]
    output_format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct TaintArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Only this pair.
    #[arg(long)]
    pair: Option<String>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    output_format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Granularity {
    /// One row per repetition.
    Repetition,
    /// One row per union of repetitions.
    Union,
}

#[derive(Debug, Args)]
struct RegressArgs {
    #[arg(long)]
    results: PathBuf,
    /// full = Detected ~ Tool + Static + Repetition; tool = Detected ~ Tool.
    #[arg(long, default_value = "full")]
    formula: String,
    #[arg(long, value_enum, default_value = "repetition")]
    granularity: Granularity,
    /// Keep the inert control tool in the model.
    #[arg(long)]
    include_joker: bool,
    #[arg(long, value_enum, default_value = "markdown")]
    output_format: FormatArg,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Write this many random pairs instead of the benchmark dataset.
    #[arg(long)]
    fuzz: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    app: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Print the call graph in DOT format.
    #[arg(long)]
    dot: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Markdown => OutputFormat::Markdown,
        }
    }
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
    fn dataset(message: impl Into<String>) -> Self {
        Failure { code: EXIT_DATASET, message: message.into() }
    }
    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_FAILURE, message: message.into() }
    }
}

type CmdResult = Result<String, Failure>;

fn load_catalog(path: Option<&Path>) -> Result<SensitiveCatalog, Failure> {
    let Some(path) = path else { return Ok(SensitiveCatalog::default_catalog()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    SensitiveCatalog::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_dataset(root: &Path, catalog: &SensitiveCatalog) -> Result<(Vec<AppPair>, Vec<SkippedPair>), Failure> {
    let scan = scan_pair_dataset(root, Some(catalog)).map_err(|e| Failure::dataset(e.to_string()))?;
    if scan.pairs.is_empty() {
        return Err(Failure::dataset(format!("{}: no loadable pairs", root.display())));
    }
    Ok((scan.pairs, scan.skipped))
}

fn parse_tools(names: &[String]) -> Result<Vec<StrategyKind>, Failure> {
    names.iter().map(|n| n.trim().parse::<StrategyKind>().map_err(|e| Failure::usage(e.to_string()))).collect()
}

fn experiment_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(tools) = &args.tools {
        config.tools = parse_tools(tools)?;
    }
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(f) = args.output_format {
        config.output_format = f.into();
    }
    if let Some(l) = args.step_limit {
        config.step_limit = l;
    }
    config.disable_static |= args.disable_static_analysis;
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let config = experiment_config(args)?;
    let catalog = load_catalog(args.catalog.as_deref())?;
    let (pairs, parse_skips) = load_dataset(&args.dataset, &catalog)?;
    let mut result = run_experiment(&pairs, &catalog, &config).map_err(|e| Failure::usage(e.to_string()))?;
    result.skipped.extend(parse_skips);
    result.skipped.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let run_id = args.run_id.clone().unwrap_or_else(|| {
        let name = args.dataset.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        format!("{name}-seed{}", config.seed)
    });
    let dir = args.out.join(&run_id);
    let report_path = write_results(&dir, &result, &run_id).map_err(|e| Failure::runtime(e.to_string()))?;
    log::info!("results written to {}", dir.display());
    let report = render_report(&Report::from_experiment(&result), config.output_format);
    let mut out = report;
    if config.output_format == OutputFormat::Markdown {
        let _ = writeln!(out, "\nResults: {}", dir.display());
        let _ = writeln!(out, "Report: {}", report_path.display());
    }
    Ok(out)
}

fn read_run(dir: &Path) -> Result<crate::bench::StoredResults, Failure> {
    read_results(dir).map_err(|e| Failure::dataset(e.to_string()))
}

fn cmd_report(args: &ReportArgs) -> CmdResult {
    let stored = read_run(&args.results)?;
    let format = args.output_format.map(OutputFormat::from).unwrap_or(stored.summary.config.output_format);
    Ok(render_report(&Report::from_stored(&stored), format))
}

fn render_taint(verdicts: &[(TaintVerdict, bool)], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let items: Vec<_> = verdicts
                .iter()
                .map(|(v, manifest)| serde_json::json!({ "verdict": v, "manifest_changed": manifest }))
                .collect();
            serde_json::to_string_pretty(&items).expect("verdicts serialize")
        }
        OutputFormat::Csv => {
            let mut out = String::from("pair_id,detected,new_pairs,manifest_changed\n");
            for (v, manifest) in verdicts {
                let pairs: Vec<String> = v.s3.iter().map(|(s, k)| format!("{s}->{k}")).collect();
                let _ = writeln!(out, "{},{},{},{}", v.pair_id, v.detected, pairs.join(";"), manifest);
            }
            out
        }
        OutputFormat::Markdown => {
            let mut out = String::from("| Pair | Detected | New source -> sink pairs | Manifest changed |\n");
            out.push_str("|------|----------|--------------------------|------------------|\n");
            for (v, manifest) in verdicts {
                let pairs: Vec<String> = v.s3.iter().map(|(s, k)| format!("{s} -> {k}")).collect();
                let shown = if pairs.is_empty() { "-".to_owned() } else { pairs.join(", ") };
                let _ = writeln!(out, "| {} | {} | {} | {} |", v.pair_id, v.detected, shown, manifest);
            }
            let detected = verdicts.iter().filter(|(v, _)| v.detected).count();
            let _ = writeln!(out, "\nDetected {detected} of {} pairs", verdicts.len());
            out
        }
    }
}

fn cmd_taint(args: &TaintArgs) -> CmdResult {
    let catalog = load_catalog(args.catalog.as_deref())?;
    let (pairs, _) = load_dataset(&args.dataset, &catalog)?;
    let selected: Vec<&AppPair> = match &args.pair {
        Some(id) => {
            let p = pairs
                .iter()
                .find(|p| &p.pair_id == id)
                .ok_or_else(|| Failure::dataset(format!("no pair `{id}` in {}", args.dataset.display())))?;
            vec![p]
        }
        None => pairs.iter().collect(),
    };
    let verdicts: Vec<_> = selected.iter().map(|p| (taint_diff(p, &catalog), !diff_manifest(p).is_empty())).collect();
    Ok(render_taint(&verdicts, args.output_format.into()))
}

fn cmd_regress(args: &RegressArgs) -> CmdResult {
    let formula: Formula = args.formula.parse().map_err(Failure::usage)?;
    if matches!(args.granularity, Granularity::Union) && formula == Formula::Full {
        // union rows all carry repetition 0, so the Repetition column is constant
        return Err(Failure::usage("`--granularity union` has no Repetition term; use `--formula tool`"));
    }
    let stored = read_run(&args.results)?;
    let joker = StrategyKind::Joker.name();
    let rows: Vec<Observation> = stored
        .observations
        .into_iter()
        .filter(|o| match args.granularity {
            Granularity::Repetition => o.repetition != UNION_REPETITION,
            Granularity::Union => o.repetition == UNION_REPETITION,
        })
        .filter(|o| args.include_joker || o.tool != joker)
        .collect();
    let fit = fit_logistic(&rows, formula).map_err(|e| Failure::runtime(format!("regression failed: {e}")))?;
    Ok(render_regression(&fit, args.output_format.into()))
}

fn cmd_generate(args: &GenerateArgs) -> CmdResult {
    let io = |e: std::io::Error| Failure::runtime(format!("{}: {e}", args.out.display()));
    match args.fuzz {
        Some(count) => {
            use rand::SeedableRng;
            let catalog = load_catalog(args.catalog.as_deref())?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
            write_fuzz_dataset(&mut rng, &catalog, &args.out, count, &FuzzConfig::default()).map_err(io)?;
            Ok(format!("wrote {count} random pairs to {}\n", args.out.display()))
        }
        None => {
            let truth = write_synthetic_dataset(&args.out).map_err(io)?;
            Ok(format!("wrote {} synthetic pairs to {}\n", truth.len(), args.out.display()))
        }
    }
}

fn cmd_check(args: &CheckArgs) -> CmdResult {
    let catalog = load_catalog(args.catalog.as_deref())?;
    let text = fs::read_to_string(&args.app).map_err(|e| Failure::dataset(format!("{}: {e}", args.app.display())))?;
    let app =
        parse_app(&text, Some(&catalog)).map_err(|e| Failure::dataset(format!("{}: {e}", args.app.display())))?;
    if args.dot {
        return Ok(build_call_graph(&app).to_dot());
    }
    let mut out = format!(
        "{}: {} methods, {} screens, {} entry points\n",
        app.id,
        app.methods.len(),
        app.screens.len(),
        app.entry_points.len()
    );
    for l in lint(&app) {
        let _ = writeln!(out, "warning: {l}");
    }
    Ok(out)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Run the CLI on `argv` (including the program name), printing to stdout and
/// stderr. Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::ListTools => Ok(StrategyKind::ALL.iter().map(|k| format!("{k}\n")).collect()),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Taint(a) => cmd_taint(a),
        Command::Regress(a) => cmd_regress(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["sandmine"]), EXIT_USAGE);
        assert_eq!(cli_main(["sandmine", "frobnicate"]), EXIT_USAGE);
        assert_eq!(cli_main(["sandmine", "run"]), EXIT_USAGE);
        assert_eq!(cli_main(["sandmine", "list-tools"]), EXIT_OK);
    }

    #[test]
    fn unknown_tool_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        assert_eq!(cli_main(["sandmine", "run", "--dataset", d, "--tools", "fuzzer"]), EXIT_USAGE);
    }

    #[test]
    fn missing_dataset_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert_eq!(cli_main(["sandmine", "taint", "--dataset", missing.to_str().unwrap()]), EXIT_DATASET);
        // an existing but empty dataset is also unusable
        assert_eq!(cli_main(["sandmine", "taint", "--dataset", dir.path().to_str().unwrap()]), EXIT_DATASET);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("exp.toml");
        fs::write(&cfg, "tools = [\"random\", \"joker\"]\nbudget = 17\nseed = 3\n").unwrap();
        let args = RunArgs {
            dataset: dir.path().into(),
            tools: None,
            budget: Some(40),
            repetitions: None,
            seed: None,
            output_format: Some(FormatArg::Json),
            disable_static_analysis: true,
            step_limit: None,
            out: dir.path().into(),
            run_id: None,
            catalog: None,
            config: Some(cfg),
        };
        let c = experiment_config(&args).ok().unwrap();
        assert_eq!(c.tools, [StrategyKind::Random, StrategyKind::Joker]);
        assert_eq!((c.budget, c.seed, c.disable_static), (40, 3, true));
        assert_eq!(c.output_format, OutputFormat::Json);
    }
}
