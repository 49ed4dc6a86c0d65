use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use thermofray::attack::AttackSignal;
use thermofray::harness::{self, compare, ControllerKind, RunLog, Scenario};
use thermofray::metrics::RunReport;
use thermofray::plot;

#[derive(Parser)]
#[command(name = "thermofray", version, about = "Building thermal simulation under sensor and actuator attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its log, report and plot.
    Run(RunArgs),
    /// Synthesize the energy-maximizing attack and run it against the baseline.
    Attack(RunArgs),
    /// Compare two runs field by field.
    Compare(CompareArgs),
    /// Recompute a report from a run log CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Pi,
    Mpc,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Pi => ControllerKind::Pi,
            ControllerArg::Mpc => ControllerKind::Mpc,
        }
    }
}

#[derive(Args, Clone)]
struct ScenarioOpts {
    /// Override the scenario's controller.
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
    /// Drop the scenario's attack block.
    #[arg(long)]
    no_attack: bool,
}

impl ScenarioOpts {
    fn load(&self, path: &Path) -> Result<Scenario> {
        if !path.exists() {
            bail!("scenario file not found: {}", path.display());
        }
        let mut sc = Scenario::from_file(path)?;
        if let Some(c) = self.controller {
            sc = sc.with_controller(c.into());
        }
        if self.no_attack {
            sc = sc.without_attack();
        }
        Ok(sc)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    opts: ScenarioOpts,
    /// Format of the summary printed to standard output.
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct CompareArgs {
    /// One scenario with an attack (normal vs attack), or two scenarios.
    #[arg(long, num_args = 1, conflicts_with = "report")]
    scenario: Vec<PathBuf>,
    /// One report CSV with two rows, or two report CSVs (last row of each).
    #[arg(long, num_args = 1)]
    report: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    opts: ScenarioOpts,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ReportArgs {
    /// Run log CSV.
    #[arg(long)]
    log: PathBuf,
    /// Unattacked run log used for the lifespan estimate.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 15.0)]
    baseline_years: f64,
    /// Also write report.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Attack(a) => cmd_attack(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain on one line, skipping causes their parent already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            if !msg.is_empty() {
                msg += ": ";
            }
            msg += &text;
        }
    }
    msg
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// Fails on a run that stopped early; the partial log is still written.
fn check_failure(log: &RunLog, dir: &Path, name: &str) -> Result<()> {
    if let Some(f) = &log.failure {
        log.write_csv(create(dir, name)?)?;
        bail!("simulation failed: {f} (partial log in {})", dir.join(name).display());
    }
    Ok(())
}

fn reports_text(reports: &[RunReport]) -> String {
    let header = RunReport::csv_header();
    let rows: Vec<Vec<String>> = reports.iter().map(|r| r.csv_row()).collect();
    let width = header.iter().map(|h| h.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (i, h) in header.iter().enumerate() {
        out += &format!("{h:<width$}");
        for r in &rows {
            let cell = match r[i].parse::<f64>() {
                Ok(v) if r[i].contains('.') || r[i].contains('e') => format!("{v:.4}"),
                _ => r[i].clone(),
            };
            out += &format!(" {cell:>14}");
        }
        out.push('\n');
    }
    out
}

fn print_reports(reports: &[RunReport], format: Format) -> Result<()> {
    match format {
        Format::Csv => RunReport::write_csv(reports, std::io::stdout().lock())?,
        Format::Text => print!("{}", reports_text(reports)),
    }
    Ok(())
}

/// Baseline and attacked runs of `sc` with the given signal.
fn run_pair(sc: &Scenario, traces: &thermofray::traces::ScenarioTraces, signal: &AttackSignal, out: &Path) -> Result<(RunLog, RunLog)> {
    let base = harness::simulate(&sc.without_attack(), traces, None)?;
    check_failure(&base, out, "baseline_log.csv")?;
    let log = harness::simulate(sc, traces, Some(signal))?;
    Ok((base, log))
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let sc = a.opts.load(&a.scenario)?;
    let traces = sc.load_traces()?;
    prepare_out(&a.out)?;
    let years = sc.run.baseline_years;
    let reports = match harness::resolve_attack(&sc, &traces)? {
        None => {
            let log = harness::simulate(&sc, &traces, None)?;
            check_failure(&log, &a.out, "run_log.csv")?;
            log.write_csv(create(&a.out, "run_log.csv")?)?;
            write_text(&a.out, "run.svg", &plot::run_figure(&log))?;
            vec![log.report(None, years)?]
        }
        Some(signal) => {
            signal.write_csv(create(&a.out, "attack.csv")?)?;
            let (base, log) = run_pair(&sc, &traces, &signal, &a.out)?;
            check_failure(&log, &a.out, "run_log.csv")?;
            base.write_csv(create(&a.out, "baseline_log.csv")?)?;
            log.write_csv(create(&a.out, "run_log.csv")?)?;
            write_text(&a.out, "run.svg", &plot::run_figure(&log))?;
            vec![base.report(None, years)?, log.report(Some(&base), years)?]
        }
    };
    RunReport::write_csv(&reports, create(&a.out, "run_report.csv")?)?;
    print_reports(&reports, a.format)
}

fn cmd_attack(a: &RunArgs) -> Result<()> {
    let sc = a.opts.load(&a.scenario)?;
    if sc.attack.is_none() {
        bail!("{} has no [attack] block", a.scenario.display());
    }
    let traces = sc.load_traces()?;
    prepare_out(&a.out)?;
    let result = harness::synthesize_attack(&sc, &traces)?;
    result.signal.write_csv(create(&a.out, "attack.csv")?)?;
    let (base, log) = run_pair(&sc, &traces, &result.signal, &a.out)?;
    check_failure(&log, &a.out, "attack_log.csv")?;
    base.write_csv(create(&a.out, "baseline_log.csv")?)?;
    log.write_csv(create(&a.out, "attack_log.csv")?)?;
    write_text(&a.out, "attack.svg", &plot::run_figure(&log))?;
    let years = sc.run.baseline_years;
    let reports = [base.report(None, years)?, log.report(Some(&base), years)?];
    RunReport::write_csv(&reports, create(&a.out, "attack_report.csv")?)?;
    print_reports(&reports, a.format)
}

/// Worker cap from THERMOFRAY_THREADS, defaulting to the available cores.
fn thread_cap() -> Result<usize> {
    match std::env::var("THERMOFRAY_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!("THERMOFRAY_THREADS must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Reports of one scenario: the run itself, preceded by its baseline when
/// the scenario carries an attack.
fn scenario_reports(path: &Path, opts: &ScenarioOpts) -> Result<Vec<RunReport>> {
    let sc = opts.load(path)?;
    let traces = sc.load_traces()?;
    let years = sc.run.baseline_years;
    let base = harness::simulate(&sc.without_attack(), &traces, None)?;
    if let Some(f) = &base.failure {
        bail!("{}: simulation failed: {f}", path.display());
    }
    let mut reports = vec![base.report(None, years)?];
    if let Some(signal) = harness::resolve_attack(&sc, &traces)? {
        let log = harness::simulate(&sc, &traces, Some(&signal))?;
        if let Some(f) = &log.failure {
            bail!("{}: attacked simulation failed: {f}", path.display());
        }
        reports.push(log.report(Some(&base), years)?);
    }
    Ok(reports)
}

/// Runs every scenario, at most `cap` at a time, keeping input order.
fn run_scenarios(paths: &[PathBuf], opts: &ScenarioOpts, cap: usize) -> Result<Vec<Vec<RunReport>>> {
    let mut out = Vec::with_capacity(paths.len());
    for chunk in paths.chunks(cap.max(1)) {
        let results: Vec<Result<Vec<RunReport>>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|p| s.spawn(move || scenario_reports(p, opts)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("scenario worker panicked"))))
                .collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

fn read_reports(path: &Path) -> Result<Vec<RunReport>> {
    let f = File::open(path).with_context(|| format!("cannot open report {}", path.display()))?;
    let reports = RunReport::read_csv(f, &path.display().to_string())?;
    if reports.is_empty() {
        bail!("{} contains no reports", path.display());
    }
    Ok(reports)
}

/// The two reports to compare: the rows of a single source, or the last
/// (attacked, if present) row of each of two sources.
fn pick_pair(mut sources: Vec<Vec<RunReport>>, what: &str) -> Result<(RunReport, RunReport)> {
    match sources.len() {
        1 => {
            let rows = sources.remove(0);
            match <[RunReport; 2]>::try_from(rows) {
                Ok([a, b]) => Ok((a, b)),
                Err(rows) => bail!("a single {what} must yield exactly two runs, got {}", rows.len()),
            }
        }
        2 => {
            let b = sources.pop().and_then(|mut v| v.pop());
            let a = sources.pop().and_then(|mut v| v.pop());
            Ok((a.expect("non-empty source"), b.expect("non-empty source")))
        }
        n => bail!("compare takes one or two {what}s, got {n}"),
    }
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let (ra, rb) = if !a.scenario.is_empty() {
        let sources = run_scenarios(&a.scenario, &a.opts, thread_cap()?)?;
        pick_pair(sources, "scenario")?
    } else if !a.report.is_empty() {
        let sources = a.report.iter().map(|p| read_reports(p)).collect::<Result<Vec<_>>>()?;
        pick_pair(sources, "report")?
    } else {
        bail!("compare needs --scenario or --report inputs");
    };
    let cmp = compare(&ra, &rb)?;
    prepare_out(&a.out)?;
    cmp.write_csv(create(&a.out, "comparison.csv")?)?;
    write_text(&a.out, "comparison.txt", &cmp.to_text())?;
    match a.format {
        Format::Csv => cmp.write_csv(std::io::stdout().lock())?,
        Format::Text => print!("{}", cmp.to_text()),
    }
    Ok(())
}

fn read_log(path: &Path) -> Result<RunLog> {
    let f = File::open(path).with_context(|| format!("cannot open run log {}", path.display()))?;
    Ok(RunLog::read_csv(f, &path.display().to_string())?)
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let log = read_log(&a.log)?;
    let base = a.baseline.as_deref().map(read_log).transpose()?;
    let report = log.report(base.as_ref(), a.baseline_years)?;
    if let Some(out) = &a.out {
        prepare_out(out)?;
        RunReport::write_csv(std::slice::from_ref(&report), create(out, "report.csv")?)?;
    }
    print_reports(&[report], a.format)
}
