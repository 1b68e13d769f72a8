use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairmatch::experiment::{
    sweep_lambda, sweep_theta, write_csv, Algorithm, Pipeline, RunParams, Strategy, SweepReport,
};
use fairmatch::{DelimiterFormat, Error};

/// Stock-constrained top-l recommendation experiments.
#[derive(Debug, Parser)]
#[command(name = "fairmatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter and split a rating log, caching the result under --workdir.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run a single scorer x strategy experiment.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// CSV report path (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Recommendation lists, one `user: item,item,...` line per user.
        #[arg(long)]
        recommendations: Option<PathBuf>,
        /// Stock volumes, one `item q` line per item (constrained strategies).
        #[arg(long)]
        stocks: Option<PathBuf>,
    },
    /// Greedy strategy over an inclusive theta grid.
    SweepTheta {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 0.0)]
        theta_from: f64,
        #[arg(long, default_value_t = 1.0)]
        theta_to: f64,
        #[arg(long, default_value_t = 0.1)]
        theta_step: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// RP3 over an inclusive lambda grid.
    SweepLambda {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 0.1)]
        lambda_from: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_to: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda_step: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the min-cost flow network as `from to cap cost` lines.
    DumpNetwork {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Tab,
    DoubleColon,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    P3,
    Rp3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Regular,
    Greedy,
    Mcmf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Rating log (`user item rating timestamp` per line).
    #[arg(long, required_unless_present = "workdir")]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Tab)]
    format: FormatArg,
    #[arg(long, default_value_t = 3)]
    threshold: u8,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Cache directory. `ingest` writes it; other commands read it when
    /// --dataset is absent.
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long, value_enum, default_value_t = AlgorithmArg::P3)]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::Regular)]
    strategy: StrategyArg,
    /// Normalization exponent (greedy only).
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Popularity exponent (rp3 only).
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Recommendation list length.
    #[arg(long, default_value_t = 20)]
    l: usize,
    /// Reserved; the pipeline is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ParamArgs {
    fn to_params(&self) -> RunParams {
        RunParams {
            algorithm: match self.algorithm {
                AlgorithmArg::P3 => Algorithm::P3,
                AlgorithmArg::Rp3 => Algorithm::Rp3,
            },
            strategy: match self.strategy {
                StrategyArg::Regular => Strategy::Regular,
                StrategyArg::Greedy => Strategy::Greedy,
                StrategyArg::Mcmf => Strategy::Mcmf,
            },
            theta: self.theta,
            lambda: self.lambda,
            l: self.l,
        }
    }
}

/// Exit statuses: usage 1, data 2, evaluation 3.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_) => 1,
        Error::Evaluation(_) => 3,
        _ => 2,
    }
}

fn stage(err: &Error) -> &'static str {
    match err {
        Error::Parse { .. } | Error::EmptyDataset { .. } | Error::Split { .. } => "data",
        Error::Io(_) => "io",
        Error::Parameter(_) => "configuration",
        Error::Constraint(_) => "constraints",
        Error::Network(_) => "flow",
        Error::Evaluation(_) => "evaluation",
    }
}

fn load(data: &DataArgs) -> Result<Pipeline, Error> {
    if !(data.ratio > 0.0 && data.ratio < 1.0) {
        return Err(Error::Parameter(format!(
            "split ratio {} outside (0, 1)",
            data.ratio
        )));
    }
    let format = match data.format {
        FormatArg::Tab => DelimiterFormat::Tab,
        FormatArg::DoubleColon => DelimiterFormat::DoubleColon,
    };
    match (&data.dataset, &data.workdir) {
        (Some(path), _) => Pipeline::load(path, format, data.threshold, data.ratio),
        (None, Some(dir)) => Pipeline::read_cache(dir),
        (None, None) => Err(Error::Parameter(
            "either --dataset or --workdir is required".into(),
        )),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes to `path`, or stdout when absent.
fn with_output(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), Error>,
) -> Result<(), Error> {
    match path {
        Some(path) => {
            let mut out = create(path)?;
            write(&mut out)?;
            out.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn report_sweep(sweep: &SweepReport, param: &str, report: Option<&Path>) -> Result<(), Error> {
    with_output(report, |out| write_csv(out, &sweep.rows))?;
    let best = &sweep.rows[sweep.best_precision];
    let value = match param {
        "theta" => best.theta,
        _ => best.lambda,
    }
    .unwrap_or_default();
    eprintln!(
        "best precision {:.6} at {param} = {value} (row {})",
        best.precision,
        sweep.best_precision + 1
    );
    Ok(())
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Ingest { data } => {
            let dir = data
                .workdir
                .clone()
                .ok_or_else(|| Error::Parameter("ingest needs --workdir".into()))?;
            if data.dataset.is_none() {
                return Err(Error::Parameter("ingest needs --dataset".into()));
            }
            let pipeline = load(&data)?;
            pipeline.write_cache(&dir)?;
            let split = pipeline.split();
            eprintln!(
                "cached {} users, {} items, {} train / {} probe interactions in {}",
                split.train.n_users(),
                split.train.n_items(),
                split.train.nnz(),
                split.probe.nnz(),
                dir.display()
            );
        }
        Command::Run {
            data,
            params,
            report,
            recommendations,
            stocks,
        } => {
            let run_params = params.to_params();
            run_params.validate()?;
            let pipeline = load(&data)?;
            let outcome = pipeline.run(&run_params)?;
            with_output(report.as_deref(), |out| {
                write_csv(out, std::slice::from_ref(&outcome.report))
            })?;
            if let Some(path) = recommendations {
                let mut out = create(&path)?;
                outcome
                    .recommendations
                    .write_lists(&mut out, &pipeline.split().train)?;
                out.flush()?;
            }
            if let Some(path) = stocks {
                let q = match outcome.stocks {
                    Some(q) => q,
                    None => pipeline.stocks(run_params.l)?,
                };
                let mut out = create(&path)?;
                let items = pipeline.split().train.items();
                for (j, v) in q.volumes().iter().enumerate() {
                    writeln!(out, "{} {v}", items.external(j as u32))?;
                }
                out.flush()?;
            }
        }
        Command::SweepTheta {
            data,
            params,
            theta_from,
            theta_to,
            theta_step,
            report,
        } => {
            let base = params.to_params();
            base.validate()?;
            let pipeline = load(&data)?;
            let sweep = sweep_theta(&pipeline, &base, theta_from, theta_to, theta_step)?;
            report_sweep(&sweep, "theta", report.as_deref())?;
        }
        Command::SweepLambda {
            data,
            params,
            lambda_from,
            lambda_to,
            lambda_step,
            report,
        } => {
            let base = params.to_params();
            base.validate()?;
            let pipeline = load(&data)?;
            let sweep = sweep_lambda(&pipeline, &base, lambda_from, lambda_to, lambda_step)?;
            report_sweep(&sweep, "lambda", report.as_deref())?;
        }
        Command::DumpNetwork {
            data,
            params,
            output,
        } => {
            let pipeline = load(&data)?;
            let net = pipeline.network(&params.to_params())?;
            with_output(output.as_deref(), |out| net.write_edge_list(out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fairmatch: {} stage failed: {err}", stage(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
