//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for bad input (arguments, configuration,
//! sweep files, I/O), 3 for numerical failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_config, ResolvedConfig};
use crate::error::{Error, Result};
use crate::oracle::{oracle_paths, price_direct_with, write_path_csv, Comparison, DEFAULT_DT};
use crate::pricing::{price, PricingOptions, SpreadDiscounting, CSV_HEADER};
use crate::reproduce::{deviations, figures, write_figure_csv};
use crate::sweep::{load_sweep_spec, run_sweep, write_sweep_csv};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const THREADS_ENV: &str = "COCOCAT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "cococat",
    version,
    about = "Index-linked contingent convertible catastrophe bond pricer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price one contract and print the breakdown as JSON.
    Price(PriceArgs),
    /// Price a grid of one parameter and write CSV.
    Sweep(SweepArgs),
    /// Price by joint simulation of rates, share and losses.
    Oracle(OracleArgs),
    /// Regenerate the threshold table and figure data.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum SpreadArg {
    #[default]
    Discounted,
    Undiscounted,
}

impl From<SpreadArg> for PricingOptions {
    fn from(s: SpreadArg) -> Self {
        PricingOptions {
            spread: match s {
                SpreadArg::Discounted => SpreadDiscounting::Discounted,
                SpreadArg::Undiscounted => SpreadDiscounting::Undiscounted,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `mc.paths`.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Append the breakdown as a CSV row (header written for new files).
    #[arg(long)]
    pub dump_breakdown: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub spread: SpreadArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Base configuration; falls back to `base_config` in the sweep file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub spread: SpreadArg,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long)]
    pub seed: u64,
    /// Also price analytically and report the combined-SE z-score.
    #[arg(long)]
    pub compare: bool,
    /// Write per-path outcomes to this CSV.
    #[arg(long)]
    pub dump_paths: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub spread: SpreadArg,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).multiple(true).args(["table3", "figures"])))]
pub struct ReproduceArgs {
    #[arg(long)]
    pub table3: bool,
    #[arg(long)]
    pub figures: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the bundled configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub spread: SpreadArg,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Normal output goes to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return if code == 0 { 0 } else { EXIT_INPUT };
        }
    };
    configure_threads();
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails only if the pool is already built, e.g. under the test harness
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Price(a) => cmd_price(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stderr),
        Command::Oracle(a) => cmd_oracle(&a, stdout),
        Command::Reproduce(a) => cmd_reproduce(&a, stderr),
    }
}

fn plan_for(cfg: &ResolvedConfig, paths: Option<usize>, seed: u64) -> Result<crate::rng::McPlan> {
    let mut plan = cfg.plan().with_seed(seed);
    if let Some(n) = paths {
        if n == 0 {
            return Err(Error::invalid("--paths must be >= 1"));
        }
        plan = plan.with_paths(n);
    }
    Ok(plan)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn cmd_price(a: &PriceArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let plan = plan_for(&cfg, a.paths, a.seed)?;
    let p = price(&cfg, &plan, a.spread.into())?;
    writeln!(stdout, "{}", p.to_json())?;
    if let Some(path) = &a.dump_breakdown {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record(CSV_HEADER)?;
        }
        w.write_record(p.csv_record())?;
        w.flush()?;
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs, stderr: &mut dyn Write) -> Result<()> {
    let spec = load_sweep_spec(&a.sweep)?;
    let config_path = match (&a.config, &spec.base_config) {
        (Some(p), _) => p.clone(),
        // relative to the sweep file
        (None, Some(p)) => a.sweep.parent().unwrap_or(Path::new(".")).join(p),
        (None, None) => return Err(Error::config("sweep.base_config", "no configuration given")),
    };
    let cfg = load_config(config_path)?;
    let rows = run_sweep(&cfg, &spec, a.spread.into())?;
    write_sweep_csv(&rows, create(&a.out)?)?;
    writeln!(stderr, "wrote {} rows to {}", rows.len(), a.out.display())?;
    Ok(())
}

pub fn cmd_oracle(a: &OracleArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let plan = plan_for(&cfg, a.paths, a.seed)?;
    let options: PricingOptions = a.spread.into();
    let oracle = price_direct_with(&cfg, &plan, a.dt, options.spread)?;
    if let Some(path) = &a.dump_paths {
        write_path_csv(&oracle_paths(&cfg, &plan, a.dt, options.spread)?, create(path)?)?;
    }
    if a.compare {
        let analytic = price(&cfg, &plan, options)?;
        let cmp = Comparison::new(analytic, oracle);
        writeln!(stdout, "{}", serde_json::to_string_pretty(&cmp)?)?;
    } else {
        writeln!(stdout, "{}", oracle.to_json())?;
    }
    Ok(())
}

pub fn cmd_reproduce(a: &ReproduceArgs, stderr: &mut dyn Write) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => ResolvedConfig::canonical(),
    };
    let plan = plan_for(&cfg, a.paths, a.seed)?;
    let options: PricingOptions = a.spread.into();
    fs::create_dir_all(&a.out)?;
    if a.table3 {
        let dev = deviations(&cfg, &plan, options)?;
        dev.table.write_csv(create(&a.out.join("table3.csv"))?)?;
        dev.write_cells_csv(create(&a.out.join("deviations.csv"))?)?;
        let mut md = create(&a.out.join("deviations.md"))?;
        md.write_all(dev.markdown().as_bytes())?;
        md.flush()?;
        writeln!(
            stderr,
            "wrote table3.csv, deviations.csv and deviations.md to {}",
            a.out.display()
        )?;
    }
    if a.figures {
        for (file, points) in figures(&cfg, &plan, options)? {
            write_figure_csv(&points, create(&a.out.join(file))?)?;
            writeln!(stderr, "wrote {file} ({} rows)", points.len())?;
        }
    }
    Ok(())
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
