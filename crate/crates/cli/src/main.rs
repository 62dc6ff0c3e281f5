use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_rational::BigRational;
use serde::Serialize;
use serde_json::json;

use meixner::chaos::{check_axioms, check_n_meixner, operators_from_moments, ChaosScalar};
use meixner::classify::{classify, marginal_params_1d, DEFAULT_CLASSIFY_TOL};
use meixner::dist3::{CanonicalGamma3, Sampler};
use meixner::integrability::{necessary_conditions, DEFAULT_OBSTRUCTION_TOL};
use meixner::io::read_spec;
use meixner::moments::multi_indices_up_to;
use meixner::tensor::validate_lcc;
use meixner::verify::{full_suite, Profile, SuiteInput, VerifyConfig, DEFAULT_SEED};
use meixner::{MeixnerSpec, MomentTable, MultiIndex, Scalar};

const TENSOR_FORMAT: &str = "\
Tensor files are JSON objects:
  {\"dimension\": d,
   \"alpha\": [{\"index\": [i, j, k], \"value\": x}, ...],
   \"beta\": [[...], ...],   optional, defaults to the identity
   \"mean\": [...]}          optional, defaults to zeros
Indices are 0-based. Unlisted triples are zero; permutations of one triple
may repeat but must agree. NaN and infinite values are rejected.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 bad input.
Errors are written to stderr as {\"error\": kind, \"message\": text}.";

const SAMPLE_CHUNK: usize = 1 << 16;

#[derive(Parser, Debug)]
#[command(name = "meixner", version, about = "Moments, integrability checks, classification and sampling for 1-Meixner random vectors", after_help = TENSOR_FORMAT)]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Consistency conditions and integrability identities.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OBSTRUCTION_TOL)]
        tol: f64,
    },
    /// Reduce a d = 3 tensor to canonical form.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CLASSIFY_TOL)]
        tol: f64,
    },
    /// Joint moments E[X^i].
    #[command(group(ArgGroup::new("which").required(true).args(["index", "max_degree"])))]
    Moments {
        #[arg(long)]
        input: PathBuf,
        /// Exponent counts, one per coordinate, e.g. 1,1,1 for E[X0 X1 X2].
        #[arg(long)]
        index: Option<String>,
        /// Every multi-index up to this total degree.
        #[arg(long)]
        max_degree: Option<usize>,
        #[arg(long, value_enum, default_value_t = Mode::Float)]
        mode: Mode,
        #[arg(long, value_enum, default_value_t = JsonFormat::Json)]
        format: JsonFormat,
    },
    /// Closed-form Laplace transform of the canonical law.
    Laplace {
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
        /// Point s1,s2,s3.
        #[arg(long, allow_negative_numbers = true)]
        at: String,
    },
    /// Stream draws, one point per row.
    #[command(group(ArgGroup::new("law").required(true).args(["a", "case2"])))]
    Sample {
        /// Canonical parameter in (0, 1].
        #[arg(long)]
        a: Option<f64>,
        /// Independent components with these third-moment parameters.
        #[arg(long, allow_negative_numbers = true)]
        case2: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SampleFormat::Jsonl)]
        format: SampleFormat,
    },
    /// Chaos decomposition from moments and commutation checks.
    Oracle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, value_enum, default_value_t = Mode::Float)]
        mode: Mode,
        #[arg(long, value_enum, default_value_t = OracleCheck::Axioms)]
        check: OracleCheck,
        /// Defaults to 1e-8 for axioms and 1e-7 for the fits.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run every applicable cross-check and write a report.
    #[command(group(ArgGroup::new("target").required(true).args(["input", "a"])))]
    Verify {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Canonical tensor with this parameter.
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
        #[arg(long, value_enum, default_value_t = ProfileArg::Quick)]
        profile: ProfileArg,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Include wall-clock times (output is then not reproducible).
        #[arg(long)]
        timings: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Float,
    Exact,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum JsonFormat {
    Json,
    Jsonl,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SampleFormat {
    Jsonl,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum OracleCheck {
    Axioms,
    Meixner1,
    Meixner2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProfileArg {
    Quick,
    Full,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Input(meixner::Error),
    Io(io::Error),
}

impl From<meixner::Error> for CliError {
    fn from(e: meixner::Error) -> Self {
        CliError::Input(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

/// Whether every check of the command passed.
type Outcome = std::result::Result<bool, CliError>;

fn parse_floats<const N: usize>(flag: &str, text: &str) -> std::result::Result<[f64; N], CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--{flag}: {e}")))?;
    <[f64; N]>::try_from(values)
        .map_err(|v| CliError::Usage(format!("--{flag} needs {N} values, got {}", v.len())))
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

fn validate(out: &mut dyn Write, input: &Path, tol: f64) -> Outcome {
    let spec = read_spec(input)?;
    let lcc = validate_lcc(&spec, false);
    let obstructions = necessary_conditions(&spec.alpha, tol);
    let passed = lcc.passed && obstructions.passed;
    write_json(
        out,
        &json!({"passed": passed, "lcc": lcc, "obstructions": obstructions}),
    )?;
    Ok(passed)
}

fn classify_cmd(out: &mut dyn Write, input: &Path, tol: f64) -> Outcome {
    let spec = read_spec(input)?;
    if !spec.is_normalized() {
        return Err(meixner::Error::InvalidInput(
            "classification needs beta = I and mean 0".into(),
        )
        .into());
    }
    let c = classify(&spec.alpha, tol)?;
    write_json(out, &c)?;
    Ok(!c.is_rejected())
}

#[derive(Serialize)]
struct MomentRow {
    index: Vec<u32>,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<String>,
}

fn moment_rows<S: Scalar + ToString>(
    spec: &MeixnerSpec,
    indices: &[MultiIndex],
    exact: bool,
) -> std::result::Result<Vec<MomentRow>, CliError> {
    let mut tbl = MomentTable::<S>::new(spec)?;
    let top = indices.iter().map(MultiIndex::length).max().unwrap_or(0);
    tbl.fill_to_degree(top)?;
    indices
        .iter()
        .map(|idx| {
            let v = tbl.moment(idx)?;
            Ok(MomentRow {
                index: idx.counts().to_vec(),
                value: v.to_f64(),
                exact: exact.then(|| v.to_string()),
            })
        })
        .collect()
}

fn moments(
    out: &mut dyn Write,
    input: &Path,
    index: Option<&str>,
    max_degree: Option<usize>,
    mode: Mode,
    format: JsonFormat,
) -> Outcome {
    let spec = read_spec(input)?;
    let d = spec.dimension();
    let indices = match (index, max_degree) {
        (Some(text), _) => {
            let idx = MultiIndex::parse(text)?;
            if idx.dimension() != d {
                return Err(meixner::Error::DimensionMismatch {
                    expected: d,
                    got: idx.dimension(),
                }
                .into());
            }
            vec![idx]
        }
        (None, Some(n)) => multi_indices_up_to(d, n),
        (None, None) => unreachable!("clap enforces one of --index, --max-degree"),
    };
    let rows = match mode {
        Mode::Float => moment_rows::<f64>(&spec, &indices, false)?,
        Mode::Exact => moment_rows::<BigRational>(&spec, &indices, true)?,
    };
    match format {
        JsonFormat::Json => write_json(out, &rows)?,
        JsonFormat::Jsonl => {
            for row in &rows {
                serde_json::to_writer(&mut *out, row).map_err(io::Error::other)?;
                writeln!(out)?;
            }
        }
    }
    Ok(true)
}

fn laplace(out: &mut dyn Write, a: f64, at: &str) -> Outcome {
    let law = CanonicalGamma3::new(a)?;
    let s = parse_floats::<3>("at", at)?;
    let in_domain = law.in_domain(s);
    let value = if in_domain { Some(law.laplace(s)?) } else { None };
    write_json(
        out,
        &json!({"a": a, "at": s, "in_domain": in_domain, "value": value}),
    )?;
    Ok(true)
}

fn sample(
    out: &mut dyn Write,
    a: Option<f64>,
    case2: Option<&str>,
    n: usize,
    seed: u64,
    format: SampleFormat,
) -> Outcome {
    let sampler = match (a, case2) {
        (Some(a), _) => CanonicalGamma3::new(a)?.sampler(),
        (None, Some(text)) => {
            let b = parse_floats::<3>("case2", text)?;
            Sampler::product(b.map(marginal_params_1d), DMatrix::identity(3, 3))?
        }
        (None, None) => unreachable!("clap enforces one of --a, --case2"),
    };
    let chunks = (0..n).step_by(SAMPLE_CHUNK).map(|start| {
        sampler.sample_range(seed, start as u64, SAMPLE_CHUNK.min(n - start))
    });
    match format {
        SampleFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["x0", "x1", "x2"])?;
            for draws in chunks {
                for x in &draws {
                    w.serialize(x)?;
                }
            }
            w.flush()?;
        }
        SampleFormat::Jsonl => {
            for draws in chunks {
                for x in &draws {
                    serde_json::to_writer(&mut *out, x).map_err(io::Error::other)?;
                    writeln!(out)?;
                }
            }
        }
    }
    Ok(true)
}

fn oracle_report<S: ChaosScalar>(
    spec: &MeixnerSpec,
    degree: usize,
    check: OracleCheck,
) -> std::result::Result<(serde_json::Value, f64), CliError> {
    let mut tbl = MomentTable::<S>::new(spec)?;
    let (_, ops) = operators_from_moments(&mut tbl, degree)?;
    let cap = |drop: usize| {
        degree.checked_sub(drop).ok_or_else(|| {
            meixner::Error::Truncation(format!("degree {degree} is too small for {check:?}"))
        })
    };
    Ok(match check {
        OracleCheck::Axioms => {
            let r = check_axioms(&ops, cap(2)?)?;
            (serde_json::to_value(&r).map_err(io::Error::other)?, r.max_residual)
        }
        OracleCheck::Meixner1 => {
            let r = check_n_meixner(&ops, 1, cap(1)?)?;
            (serde_json::to_value(&r).map_err(io::Error::other)?, r.max_residual)
        }
        OracleCheck::Meixner2 => {
            let r = check_n_meixner(&ops, 2, cap(2)?)?;
            (serde_json::to_value(&r).map_err(io::Error::other)?, r.max_residual)
        }
    })
}

fn oracle(
    out: &mut dyn Write,
    input: &Path,
    degree: usize,
    mode: Mode,
    check: OracleCheck,
    tol: Option<f64>,
) -> Outcome {
    let spec = read_spec(input)?;
    let tol = tol.unwrap_or(match check {
        OracleCheck::Axioms => 1e-8,
        OracleCheck::Meixner1 | OracleCheck::Meixner2 => 1e-7,
    });
    let (report, residual) = match mode {
        Mode::Float => oracle_report::<f64>(&spec, degree, check)?,
        Mode::Exact => oracle_report::<BigRational>(&spec, degree, check)?,
    };
    let passed = residual <= tol;
    let mode = match mode {
        Mode::Float => "float",
        Mode::Exact => "exact",
    };
    write_json(
        out,
        &json!({
            "check": check,
            "mode": mode,
            "degree": degree,
            "tolerance": tol,
            "passed": passed,
            "report": report,
        }),
    )?;
    Ok(passed)
}

fn verify(
    out: &mut dyn Write,
    input: Option<&Path>,
    a: Option<f64>,
    profile: ProfileArg,
    seed: u64,
    timings: bool,
) -> Outcome {
    let target = match (input, a) {
        (Some(path), _) => SuiteInput::Spec(read_spec(path)?),
        (None, Some(a)) => SuiteInput::Canonical(a),
        (None, None) => unreachable!("clap enforces one of --input, --a"),
    };
    let config = VerifyConfig {
        profile: match profile {
            ProfileArg::Quick => Profile::Quick,
            ProfileArg::Full => Profile::Full,
        },
        seed,
        record_timings: timings,
        ..VerifyConfig::default()
    };
    let report = full_suite(&target, &config);
    write_json(out, &report)?;
    Ok(report.passed)
}

fn dispatch(cli: Cli) -> Outcome {
    let mut out: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            meixner::Error::InvalidInput(format!("{}: {e}", path.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out = out.as_mut();
    let passed = match cli.command {
        Command::Validate { input, tol } => validate(out, &input, tol),
        Command::Classify { input, tol } => classify_cmd(out, &input, tol),
        Command::Moments {
            input,
            index,
            max_degree,
            mode,
            format,
        } => moments(out, &input, index.as_deref(), max_degree, mode, format),
        Command::Laplace { a, at } => laplace(out, a, &at),
        Command::Sample {
            a,
            case2,
            n,
            seed,
            format,
        } => sample(out, a, case2.as_deref(), n, seed, format),
        Command::Oracle {
            input,
            degree,
            mode,
            check,
            tol,
        } => oracle(out, &input, degree, mode, check, tol),
        Command::Verify {
            input,
            a,
            profile,
            seed,
            timings,
        } => verify(out, input.as_deref(), a, profile, seed, timings),
    }?;
    out.flush()?;
    Ok(passed)
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message}));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            report_error("UsageError", e.render().to_string().trim());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            report_error("UsageError", &msg);
            ExitCode::from(2)
        }
        Err(CliError::Input(e)) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(CliError::Io(e)) => {
            report_error("IoError", &e.to_string());
            ExitCode::from(3)
        }
    }
}
