use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use evbounds::bounds::CSV_HEADER;
use evbounds::config::ExperimentConfig;
use evbounds::data::Dataset;
use evbounds::harness::{self, Setup};
use evbounds::{Error, Result};

/// Exit code for a result whose theorem hypotheses do not all hold, under `--strict`.
const EXIT_HYPOTHESIS: u8 = 4;

#[derive(Parser)]
#[command(name = "evbounds", version, about = "Two-sided bounds on the log marginal likelihood of GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pseudo-true parameter of the model family under the configured truth.
    PseudoTrue(Common),
    /// Curvature certificate over the localization ellipsoid; `--csv` writes H.
    Curvature(Common),
    /// Constant C and failure probability for the empirical process.
    ProcessConstants(Common),
    /// Independent estimate of the log evidence for one simulated dataset.
    Oracle(Common),
    /// Bounds for one simulated dataset; `--csv` writes one flat row.
    Bounds(Common),
    /// Replicate-level coverage of the bounds against the oracle.
    Coverage(Common),
    /// Growth of log|H| and of the bounds along `n_grid`.
    BicScan(Common),
    /// Posterior mass of the localization ellipsoid along `n_grid`.
    Concentration(Common),
    /// Certified ordering of candidate models on shared data (repeat `--config`).
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Write a CSV report here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the simulated dataset (`oracle`, `bounds`) here.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `n_replicates`.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Exit with status 4 when a hypothesis of the theorem is not verified.
    #[arg(long)]
    strict: bool,
}

impl Common {
    fn configs(&self) -> Result<Vec<ExperimentConfig>> {
        self.config
            .iter()
            .map(|p| {
                let mut cfg = ExperimentConfig::load(p)?;
                if let Some(s) = self.seed {
                    cfg.master_seed = s;
                }
                if let Some(r) = self.replicates {
                    cfg.n_replicates = r;
                }
                Ok(cfg)
            })
            .collect()
    }

    fn single(&self) -> Result<ExperimentConfig> {
        let mut cfgs = self.configs()?;
        if cfgs.len() != 1 {
            return Err(Error::Config("this subcommand takes exactly one --config".into()));
        }
        Ok(cfgs.remove(0))
    }

    fn csv_path(&self, cfg: &ExperimentConfig) -> Option<PathBuf> {
        self.csv.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// JSON of `value` without its per-row table, which goes to the CSV instead.
fn print_summary<T: Serialize>(value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("rows");
    }
    print_json(&v)
}

fn single_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    harness::prepare(cfg, cfg.n, cfg.dimension(cfg.n), 0)
}

fn single_dataset(setup: &Setup, a: &Common) -> Result<Dataset> {
    let ds = harness::draw_dataset(setup, 0, 0)?;
    if let Some(path) = &a.data {
        ds.write_csv(create(path)?)?;
    }
    Ok(ds)
}

/// Whether the command's result is fully certified; `None` when not applicable.
fn run(command: &Command) -> Result<Option<bool>> {
    match command {
        Command::PseudoTrue(a) => {
            let cfg = a.single()?;
            let truth = harness::prepare_truth(&cfg, cfg.n, cfg.dimension(cfg.n), 0)?;
            print_json(&json!({
                "beta_star": truth.fit.beta_star,
                "grad_norm": truth.fit.grad_norm,
                "tol_grad": truth.fit.tol_grad,
                "iterations": truth.fit.iterations,
                "converged": truth.fit.converged,
                "objective": truth.fit.objective,
            }))?;
            Ok(None)
        }
        Command::Curvature(a) => {
            let cfg = a.single()?;
            let setup = single_setup(&cfg)?;
            if let Some(path) = a.csv_path(&cfg) {
                let mut w = csv::Writer::from_writer(create(&path)?);
                for row in setup.cert.h.row_iter() {
                    w.write_record(row.iter().map(|v| v.to_string()))?;
                }
                w.flush()?;
            }
            print_json(&json!({
                "c": setup.cert.c,
                "c_in_range": setup.cert.c_in_range(),
                "intervals": setup.cert.intervals,
                "u_sq": setup.cert.u_sq,
                "v_sq": setup.cert.v_sq,
                "assumption1": setup.assumption1,
            }))?;
            Ok(Some(setup.cert.c_in_range() && setup.assumption1_held().unwrap_or(true)))
        }
        Command::ProcessConstants(a) => {
            let cfg = a.single()?;
            let setup = single_setup(&cfg)?;
            print_json(&setup.process)?;
            Ok(Some(setup.process.delta_tilde_in_range()))
        }
        Command::Oracle(a) => {
            let cfg = a.single()?;
            let setup = single_setup(&cfg)?;
            let ds = single_dataset(&setup, a)?;
            match setup.oracle(&ds.y, 0, 0)? {
                Some(est) => print_json(&est)?,
                None => return Err(Error::Config("oracle is set to none".into())),
            }
            Ok(None)
        }
        Command::Bounds(a) => {
            let cfg = a.single()?;
            let setup = single_setup(&cfg)?;
            let ds = single_dataset(&setup, a)?;
            let report = setup.bounds(&ds.y, 0, 0)?;
            if let Some(path) = a.csv_path(&cfg) {
                let mut w = csv::Writer::from_writer(create(&path)?);
                w.write_record(CSV_HEADER)?;
                w.write_record(report.csv_record())?;
                w.flush()?;
            }
            print_json(&report)?;
            Ok(Some(report.theorem_certified))
        }
        Command::Coverage(a) => {
            let cfg = a.single()?;
            let report = harness::run_coverage(&cfg)?;
            if let Some(path) = a.csv_path(&cfg) {
                harness::write_coverage_csv(&report, create(&path)?)?;
            }
            print_summary(&report)?;
            Ok(Some(report.theorem_certified))
        }
        Command::BicScan(a) => {
            let cfg = a.single()?;
            let scan = harness::run_bic_scan(&cfg, &cfg.n_grid)?;
            if let Some(path) = a.csv_path(&cfg) {
                harness::write_bic_csv(&scan, create(&path)?)?;
            }
            print_json(&scan)?;
            Ok(None)
        }
        Command::Concentration(a) => {
            let cfg = a.single()?;
            let report = harness::run_concentration(&cfg)?;
            if let Some(path) = a.csv_path(&cfg) {
                harness::write_concentration_csv(&report, create(&path)?)?;
            }
            print_summary(&report)?;
            Ok(None)
        }
        Command::Compare(a) => {
            let cfgs = a.configs()?;
            let report = harness::run_model_compare(&cfgs)?;
            if let Some(path) = a.csv.clone() {
                harness::write_compare_csv(&report, create(&path)?)?;
            }
            print_json(&report)?;
            Ok(Some(report.candidates.iter().all(|c| c.theorem_certified)))
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::PseudoTrue(a)
        | Command::Curvature(a)
        | Command::ProcessConstants(a)
        | Command::Oracle(a)
        | Command::Bounds(a)
        | Command::Coverage(a)
        | Command::BicScan(a)
        | Command::Concentration(a)
        | Command::Compare(a) => a,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = common(&cli.command);
    if let Some(jobs) = opts.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli.command) {
        Ok(Some(false)) if opts.strict => {
            eprintln!("error: a hypothesis of the theorem is not verified for this configuration");
            ExitCode::from(EXIT_HYPOTHESIS)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
