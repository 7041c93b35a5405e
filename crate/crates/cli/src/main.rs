//! `qprior` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.
//!
//! Option precedence is flag, then `--config` file, then `QPRIOR_SEED`
//! (seed only), then the built-in default.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qprior::anneal::{Solver, SolverKind};
use qprior::bench::{bench_hyper, run_bench, size_for, BenchConfig};
use qprior::clock::ClockKind;
use qprior::evaluate::{aggregate, paired_significance, write_metrics_csv, MetricsRecord};
use qprior::ingest::{
    generate_synthetic_suite, impute_missing, load_dataset, save_suite, Dataset, FileFormat,
    NormalizationParams, SyntheticConfig,
};
use qprior::learner::{
    default_grid, grid_search_cv, pearson_matrix, rfe_select, train_forest, Forest, HyperParams,
    Samples,
};
use qprior::model::OrderingFile;
use qprior::pipeline::{drift_check, read_log, run_simulation_to_file, PipelineConfig};
use qprior::prioritize::{run_policy, PolicyConfig};
use qprior::qubo::QuboConfig;
use qprior::report::{emit_figures, emit_table1, write_figures, CsvTable};
use qprior::{Policy, SuiteCategory};

#[derive(Debug, Parser)]
#[command(name = "qprior", version, about = "QUBO-based test-case prioritization", arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file of option defaults; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct SolveArgs {
    #[arg(long)]
    policy: Option<Policy>,
    /// simulated_annealing (sa), exhaustive or remote_stub.
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long)]
    lambda_t: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic suite.
    Generate {
        #[arg(long)]
        tests: Option<usize>,
        #[arg(long)]
        faults: Option<usize>,
        #[arg(long)]
        format: Option<FileFormat>,
    },
    /// Grid-search, train and analyze a forest; writes a model bundle.
    Train {
        /// Labeled suite files (csv or json).
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Skip the grid and train this many trees with the bench settings.
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Features kept by recursive elimination; defaults to half.
        #[arg(long)]
        keep: Option<usize>,
    },
    /// Order one suite with one policy.
    Prioritize {
        #[arg(long)]
        suite: PathBuf,
        /// Model bundle from `train`; needed by ml_only and quantum_enhanced.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Every policy over seeds and suite sizes; writes a metrics file.
    Bench {
        /// Number of seeds, counted up from `--seed`.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<SuiteCategory>>,
        #[arg(long)]
        format: Option<FileFormat>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Simulated CI/CD build stream; writes a JSON-lines log.
    Simulate {
        #[arg(long)]
        builds: Option<usize>,
        #[arg(long)]
        retrain_every: Option<usize>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Table I and figures from a metrics CSV and an optional build log.
    Report {
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

/// Values accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    policy: Option<Policy>,
    solver: Option<String>,
    lambda_r: Option<f64>,
    lambda_t: Option<f64>,
    batch_size: Option<usize>,
    sweeps: Option<usize>,
    restarts: Option<usize>,
    seeds: Option<u64>,
    sizes: Option<Vec<SuiteCategory>>,
    builds: Option<usize>,
    retrain_every: Option<usize>,
    format: Option<FileFormat>,
    tests: Option<usize>,
    faults: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

/// Model bundle written by `train`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelBundle {
    normalization: NormalizationParams,
    forest: Forest,
}

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    file: FileConfig,
}

impl Ctx {
    fn new(global: GlobalArgs) -> CliResult<Self> {
        let file = match &global.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let env_seed = match std::env::var("QPRIOR_SEED") {
            Ok(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Usage(format!("QPRIOR_SEED `{s}` is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        Ok(Self {
            seed: global.seed.or(file.seed).or(env_seed).unwrap_or(0),
            out: global.out.or_else(|| file.out.clone()),
            file,
        })
    }

    fn out(&self, what: &str) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{what} needs --out")))
    }

    fn solver(&self, args: &SolveArgs) -> CliResult<Solver> {
        let mut solver = Solver::default();
        if let Some(kind) = args.solver {
            solver.kind = kind;
        } else if let Some(name) = &self.file.solver {
            solver.kind = name.parse().map_err(|e| CliError::Usage(format!("config solver: {e}")))?;
        }
        if let Some(v) = args.sweeps.or(self.file.sweeps) {
            solver.schedule.sweeps = v;
        }
        if let Some(v) = args.restarts.or(self.file.restarts) {
            solver.schedule.restarts = v;
        }
        solver.schedule.seed = self.seed;
        solver.schedule.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(solver)
    }

    fn qubo(&self, args: &SolveArgs) -> CliResult<QuboConfig> {
        let mut q = QuboConfig::default();
        if let Some(v) = args.lambda_r.or(self.file.lambda_r) {
            q.lambda_r = v;
        }
        if let Some(v) = args.lambda_t.or(self.file.lambda_t) {
            q.lambda_t = v;
        }
        if let Some(v) = args.batch_size.or(self.file.batch_size) {
            q.batch_size = Some(v);
        }
        q.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(q)
    }

    fn policy(&self, args: &SolveArgs) -> Option<Policy> {
        args.policy.or(self.file.policy)
    }
}

fn format_for(flag: Option<FileFormat>, file: Option<FileFormat>, path: &Path) -> FileFormat {
    flag.or(file)
        .or_else(|| FileFormat::from_path(path))
        .unwrap_or(FileFormat::Csv)
}

fn load_suite_file(path: &Path) -> CliResult<Dataset> {
    let format = FileFormat::from_path(path)
        .ok_or_else(|| CliError::Usage(format!("{}: expected a .csv or .json file", path.display())))?;
    load_dataset(path, format).map_err(data)
}

fn write_file(path: &Path, body: &[u8]) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_generate(ctx: &Ctx, tests: Option<usize>, faults: Option<usize>, format: Option<FileFormat>) -> CliResult {
    let out = ctx.out("generate")?;
    let n_tests = tests.or(ctx.file.tests).unwrap_or(SyntheticConfig::default().n_tests);
    let config = SyntheticConfig {
        n_tests,
        n_faults: faults.or(ctx.file.faults).unwrap_or((n_tests / 4).max(1)),
        seed: ctx.seed,
        ..Default::default()
    };
    let suite = generate_synthetic_suite(&config).map_err(data)?;
    let format = format_for(format, ctx.file.format, out);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(data)?;
    }
    save_suite(out, &suite, format).map_err(data)?;
    eprintln!("wrote {} tests, {} faults to {}", suite.len(), suite.faults.m(), out.display());
    Ok(())
}

fn cmd_train(ctx: &Ctx, files: &[PathBuf], trees: Option<usize>, folds: usize, keep: Option<usize>) -> CliResult {
    let out = ctx.out("train")?;
    let mut suites = Vec::new();
    for f in files {
        suites.extend(load_suite_file(f)?.suites);
    }
    let dataset = impute_missing(&Dataset::from_suites(suites)).map_err(data)?;
    let normalization = NormalizationParams::fit(&dataset).map_err(data)?;
    let samples = Samples::from_dataset(&normalization.apply(&dataset).map_err(data)?).map_err(data)?;

    let grid: Vec<HyperParams> = match trees {
        Some(n) => vec![HyperParams { n_trees: n, ..bench_hyper() }],
        None => default_grid(),
    };
    let search = grid_search_cv(&samples, &grid, folds, ctx.seed).map_err(data)?;
    let forest = train_forest(&samples, &search.best, ctx.seed).map_err(data)?;
    let target = keep.unwrap_or(samples.n_features().div_ceil(2));
    let rfe = rfe_select(&samples, &search.best, target, Some(folds), ctx.seed).map_err(data)?;
    let corr = pearson_matrix(&samples);

    let bundle = ModelBundle { normalization, forest };
    write_file(&out.join("model.json"), serde_json::to_string(&bundle).map_err(data)?.as_bytes())?;

    let mut grid_csv = String::from("n_trees,max_depth,min_samples_leaf,precision,recall,f1,roc_auc,best\n");
    for (i, cell) in search.table.iter().enumerate() {
        let h = &cell.hyper;
        let s = &cell.scores;
        grid_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            h.n_trees,
            h.max_depth.map_or("none".to_string(), |d| d.to_string()),
            h.min_samples_leaf,
            s.precision,
            s.recall,
            s.f1,
            s.roc_auc.map_or(String::new(), |a| a.to_string()),
            i == search.best_index
        ));
    }
    write_file(&out.join("grid.csv"), grid_csv.as_bytes())?;
    write_file(&out.join("rfe.json"), serde_json::to_string_pretty(&rfe).map_err(data)?.as_bytes())?;

    let names = &samples.feature_names;
    let mut corr_csv = format!("feature,{}\n", names.join(","));
    for (name, row) in names.iter().zip(&corr) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        corr_csv.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    write_file(&out.join("correlation.csv"), corr_csv.as_bytes())?;

    let best = &search.table[search.best_index];
    eprintln!(
        "best: {} trees, depth {:?}, leaf {} (cv f1 {:.3}); rfe kept {}",
        best.hyper.n_trees,
        best.hyper.max_depth,
        best.hyper.min_samples_leaf,
        best.scores.f1,
        rfe.survivors.join(", ")
    );
    Ok(())
}

fn cmd_prioritize(ctx: &Ctx, suite_path: &Path, model: Option<&Path>, args: &SolveArgs) -> CliResult {
    let bundle: Option<ModelBundle> = match model {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut dataset = impute_missing(&load_suite_file(suite_path)?).map_err(data)?;
    if let Some(b) = &bundle {
        dataset = b.normalization.apply(&dataset).map_err(data)?;
    }
    let suite = dataset.suites.pop().expect("one suite per file");
    let config = PolicyConfig {
        policy: ctx.policy(args).unwrap_or(Policy::QuantumEnhanced),
        qubo: ctx.qubo(args)?,
        solver: ctx.solver(args)?,
        seed: ctx.seed,
        ..Default::default()
    };
    let clock = ClockKind::Monotonic.make();
    let result = run_policy(&suite, bundle.as_ref().map(|b| &b.forest), &config, clock.as_ref()).map_err(data)?;
    let file = OrderingFile::new(&result.ordering, suite.id.clone(), ctx.seed);
    let mut json = serde_json::to_string_pretty(&file).map_err(data)?;
    json.push('\n');
    match &ctx.out {
        Some(p) => write_file(p, json.as_bytes())?,
        None => std::io::stdout().write_all(json.as_bytes()).map_err(data)?,
    }
    eprintln!(
        "{}: {} tests, {} selected, overhead {:.4}s",
        config.policy,
        result.ordering.len(),
        result.ordering.selected().len(),
        result.ledger.total
    );
    Ok(())
}

fn cmd_bench(
    ctx: &Ctx,
    seeds: Option<u64>,
    sizes: Option<Vec<SuiteCategory>>,
    format: Option<FileFormat>,
    args: &SolveArgs,
) -> CliResult {
    let out = ctx.out("bench")?;
    let n_seeds = seeds.or(ctx.file.seeds).unwrap_or(30);
    let sizes = sizes
        .or_else(|| ctx.file.sizes.clone())
        .unwrap_or_else(|| SuiteCategory::ALL.to_vec());
    if n_seeds == 0 || sizes.is_empty() {
        return Err(CliError::Usage("bench needs at least one seed and one size".into()));
    }
    let policies = ctx.policy(args).map_or_else(|| Policy::ALL.to_vec(), |p| vec![p]);
    let base = BenchConfig {
        policies,
        qubo: ctx.qubo(args)?,
        solver: ctx.solver(args)?,
        ..Default::default()
    };
    let configs: Vec<BenchConfig> = sizes
        .iter()
        .map(|&c| BenchConfig {
            n_tests: size_for(c),
            ..base.clone()
        })
        .collect();
    let seed_list: Vec<u64> = (0..n_seeds).map(|i| ctx.seed + i).collect();
    let rows = run_bench(&configs, &seed_list).map_err(data)?;

    let body = match format_for(format, ctx.file.format, out) {
        FileFormat::Csv => {
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &rows).map_err(data)?;
            buf
        }
        FileFormat::Json => serde_json::to_vec_pretty(&rows).map_err(data)?,
    };
    write_file(out, &body)?;
    print_summary(&rows)?;
    Ok(())
}

fn print_summary(rows: &[MetricsRecord]) -> CliResult {
    eprintln!("{:<18} {:<8} {:>6} {:>8} {:>8} {:>10}", "policy", "category", "count", "apfd", "tet", "overhead");
    for a in aggregate(rows).map_err(data)? {
        eprintln!(
            "{:<18} {:<8} {:>6} {:>8.4} {:>8.2} {:>10.4}",
            a.policy.as_str(), a.category.as_str(), a.count, a.apfd_mean, a.tet_mean, a.overhead_mean
        );
    }
    let apfd_of = |p: Policy| -> Vec<f64> { rows.iter().filter(|r| r.policy == p).map(|r| r.apfd).collect() };
    let pairs = [
        (Policy::QuantumEnhanced, Policy::MlOnly),
        (Policy::MlOnly, Policy::Greedy),
        (Policy::Greedy, Policy::Random),
    ];
    for (a, b) in pairs {
        if let Ok(p) = paired_significance(&apfd_of(a), &apfd_of(b)) {
            eprintln!("paired test {a} vs {b}: p = {p:.4}");
        }
    }
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, builds: Option<usize>, retrain_every: Option<usize>, args: &SolveArgs) -> CliResult {
    let out = ctx.out("simulate")?;
    let mut config = PipelineConfig {
        qubo: ctx.qubo(args)?,
        solver: ctx.solver(args)?,
        seed: ctx.seed,
        ..Default::default()
    };
    if let Some(b) = builds.or(ctx.file.builds) {
        config.n_builds = b;
    }
    if let Some(r) = retrain_every.or(ctx.file.retrain_every) {
        config.retrain_every = r;
    }
    if let Some(p) = ctx.policy(args) {
        config.policies = vec![p];
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(data)?;
    }
    let written = run_simulation_to_file(&config, out).map_err(data)?;
    let log = read_log(out).map_err(data)?;
    eprintln!("{written} builds appended; log holds {}", log.len());
    if let Ok(d) = drift_check(&log) {
        eprintln!(
            "drift: early {:.4}, late {:.4}, delta {:+.4}, p = {:.4}",
            d.early_mean, d.late_mean, d.delta, d.p_value
        );
    }
    Ok(())
}

fn cmd_report(ctx: &Ctx, metrics: Option<&Path>, log: Option<&Path>) -> CliResult {
    let out = ctx.out("report")?;
    if metrics.is_none() && log.is_none() {
        return Err(CliError::Usage("report needs --metrics and/or --log".into()));
    }
    let table = metrics.map(CsvTable::from_path).transpose().map_err(data)?;
    let log = log.map(read_log).transpose().map_err(data)?;
    let mut warnings = Vec::new();
    if let Some(t) = &table {
        let t1 = emit_table1(t).map_err(data)?;
        write_file(&out.join("table1.csv"), t1.to_csv().as_bytes())?;
        write_file(&out.join("table1.txt"), t1.to_text().as_bytes())?;
        print!("{}", t1.to_text());
        warnings.extend(t1.warnings);
    }
    let (figs, w) = emit_figures(table.as_ref(), log.as_deref()).map_err(data)?;
    warnings.extend(w);
    write_figures(&figs, out).map_err(data)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx::new(cli.global)?;
    match cli.command {
        Command::Generate { tests, faults, format } => cmd_generate(&ctx, tests, faults, format),
        Command::Train { data, trees, folds, keep } => cmd_train(&ctx, &data, trees, folds, keep),
        Command::Prioritize { suite, model, solve } => cmd_prioritize(&ctx, &suite, model.as_deref(), &solve),
        Command::Bench { seeds, sizes, format, solve } => cmd_bench(&ctx, seeds, sizes, format, &solve),
        Command::Simulate { builds, retrain_every, solve } => cmd_simulate(&ctx, builds, retrain_every, &solve),
        Command::Report { metrics, log } => cmd_report(&ctx, metrics.as_deref(), log.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Data(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}
