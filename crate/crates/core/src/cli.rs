//! Command-line front end.
//!
//! Exit codes: 0 success, 2 semantic error, 3 input or parse error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::fit::{fit, FitConfig};
use crate::io::{format_real, write_data, DataCsv, IoError, ModelFile, ReportFile};
use crate::loglin::{LogLinearModel, SAMPLER_RNG};
use crate::select::{chi2_p_value, degrees_of_freedom, deviance_g2, free_parameters, pearson_x2, srm_select};
use crate::space::{empirical_risk, Alphabet, Dataset};
use crate::vc::{h_k, is_vacuous, phi, PenaltyConfig, Prior};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SEMANTIC: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "loglin-srm", version, about = "Log-linear model selection by structural risk minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a k-factor model with probability floor lambda.
    Fit(FitArgs),
    /// Select (k, lambda) by minimal guaranteed risk.
    Select(SelectArgs),
    /// Draw a seeded sample from a model.
    Generate(GenerateArgs),
    /// Evaluate the risk bound without data.
    Bound(BoundArgs),
    /// Classical goodness-of-fit statistics of a model on data.
    Test(TestArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Data CSV.
    pub data: PathBuf,
    /// Category counts, e.g. `2,3,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphabet: Vec<usize>,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphabet: Vec<usize>,
    #[arg(long)]
    pub max_k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub ladder_base: f64,
    #[arg(long, default_value_t = 4)]
    pub ladder_depth: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub count: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphabet: Vec<usize>,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Sample size.
    #[arg(long)]
    pub l: u64,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::TooLarge { .. } | Error::Scale(_) => EXIT_INPUT,
            _ => EXIT_SEMANTIC,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(e) => e.into(),
            other => Failure::input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Select(a) => cmd_select(a, stdout),
        Command::Generate(a) => cmd_generate(a, stdout),
        Command::Bound(a) => cmd_bound(a, stdout),
        Command::Test(a) => cmd_test(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.msg);
            f.code
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn check_output(path: &Path) -> CmdResult {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(Failure::input(format!(
            "{}: output directory does not exist",
            path.display()
        ))),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Reads a data file whose header names the variables of a declared alphabet.
fn load_declared(path: &Path, sizes: &[usize]) -> Result<Dataset, Failure> {
    let csv = DataCsv::parse(open(path)?)?;
    if csv.names.len() != sizes.len() {
        return Err(Failure::input(format!(
            "--alphabet declares {} variables but {} has {} columns",
            sizes.len(),
            path.display(),
            csv.names.len()
        )));
    }
    let alphabet = Alphabet::with_names(sizes, csv.names.clone())?;
    Ok(csv.to_dataset(&alphabet)?)
}

fn load_model(path: &Path) -> Result<(ModelFile, LogLinearModel), Failure> {
    let file = ModelFile::read(open(path)?)?;
    let model = file.clone().into_model()?;
    Ok((file, model))
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> CmdResult {
    check_output(&a.out)?;
    let d = load_declared(&a.data, &a.alphabet)?;
    let result = fit(&d, a.k, a.lambda, &FitConfig::default())?;
    let mut w = create(&a.out)?;
    ModelFile::from_model(&result.model).write(&mut w)?;
    w.flush()?;
    writeln!(out, "r_emp={}", format_real(result.r_emp))?;
    writeln!(out, "min_log_prob={}", format_real(result.model.min_log_prob()?))?;
    writeln!(out, "iterations={}", result.iterations)?;
    writeln!(out, "converged={}", result.converged)?;
    writeln!(out, "active_floor_states={}", result.active_floor_states)?;
    Ok(())
}

fn cmd_select(a: &SelectArgs, out: &mut dyn Write) -> CmdResult {
    check_output(&a.out)?;
    let d = load_declared(&a.data, &a.alphabet)?;
    let cfg = PenaltyConfig {
        eta: a.eta,
        ladder_base: a.ladder_base,
        ladder_depth: a.ladder_depth,
        prior: Prior::Geometric,
    };
    let report = srm_select(&d, a.max_k, &cfg, &FitConfig::default())?;
    let file = ReportFile::from_report(&report, d.alphabet());
    let mut w = create(&a.out)?;
    file.write(&mut w)?;
    w.flush()?;
    match report.winner_record() {
        Some(r) => writeln!(
            out,
            "winner k={} n={} guaranteed_risk={}",
            r.k,
            r.n,
            format_real(r.guaranteed_risk)
        )?,
        None => return Err(Failure::from(Error::domain("every grid point failed; see the report"))),
    }
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> CmdResult {
    check_output(&a.out)?;
    let (file, model) = load_model(&a.model)?;
    if !file.normalized {
        return Err(Error::Unnormalized { log_z: model.log_z() }.into());
    }
    let d = model.sample(a.count, a.seed)?;
    let mut w = create(&a.out)?;
    write_data(&mut w, &d)?;
    w.flush()?;
    writeln!(out, "count={}", d.total())?;
    writeln!(out, "seed={}", a.seed)?;
    writeln!(out, "rng={SAMPLER_RNG}")?;
    Ok(())
}

fn cmd_bound(a: &BoundArgs, out: &mut dyn Write) -> CmdResult {
    let alphabet = Alphabet::from_sizes(&a.alphabet)?;
    let h = h_k(&alphabet, a.k)?;
    let value = phi(a.k, a.lambda, a.eta, a.l, &alphabet)?;
    writeln!(out, "h_k={h}")?;
    writeln!(out, "phi={}", format_real(value))?;
    writeln!(out, "vacuous={}", is_vacuous(value, a.lambda))?;
    Ok(())
}

fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> CmdResult {
    let (_, model) = load_model(&a.model)?;
    let alphabet = model.alphabet();
    let d = DataCsv::parse(open(&a.data)?)?.to_dataset(alphabet)?;
    let table = model.to_table()?;
    let x2 = pearson_x2(&d, &table)?;
    let g2 = deviance_g2(&d, &table)?;
    let df = degrees_of_freedom(alphabet, model.k())?;
    let free = free_parameters(alphabet, model.k())?;
    let aic = empirical_risk(&d, &table)? + free as f64 / d.total() as f64;
    writeln!(out, "x2={}", format_real(x2))?;
    writeln!(out, "g2={}", format_real(g2))?;
    writeln!(out, "df={}", df.df)?;
    writeln!(out, "x2_p={}", format_real(chi2_p_value(x2, df.df)?))?;
    writeln!(out, "g2_p={}", format_real(chi2_p_value(g2, df.df)?))?;
    writeln!(out, "aic={}", format_real(aic))?;
    if df.over_parameterized {
        writeln!(out, "note=model has no residual degrees of freedom")?;
    }
    Ok(())
}
