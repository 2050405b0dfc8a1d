//! `normwalk` — measures of ±1 sequences, distribution sampling, and
//! polytope exit-probability experiments from the command line.
//!
//! Machine-readable JSON goes to stdout, human summaries to stderr.
//! Exit codes are a stable contract for CI: 0 success, 1 property
//! failure, 2 parse error, 3 domain error, 4 I/O error.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use normwalk_core::error::Error as CoreError;
use normwalk_core::measures::{
    correlation_measure, min_normality_exhaustive, normality_measure, normality_measure_oracle,
    well_distribution_measure,
};
use normwalk_core::restricted::{restricted_normality_measure, BlockScheme};
use normwalk_core::sequence::{parse_sequence, SeedSpec, SequenceFormat};
use normwalk_core::stats::{ks_distance, sample_distribution, Ecdf, MeasureKind};
use normwalk_core::walk::{simulate_lattice_exit, simulate_wiener_exit, WeightTable};
use normwalk_core::{DeviationReport, Witness};

mod verify;

const EXIT_PROPERTY_FAILURE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "normwalk",
    version,
    about = "Pseudorandomness measures of ±1 sequences and the lattice-walk/polytope machinery behind their limit distribution"
)]
struct Cli {
    /// Base seed for all randomized commands. The environment variable
    /// NORMWALK_SEED, when set, overrides this flag.
    #[arg(long, global = true, default_value_t = 20240601)]
    seed: u64,

    /// Worker threads (default: machine parallelism). Never affects
    /// numeric output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    ZeroOne,
    PlusMinus,
}

impl From<FormatArg> for SequenceFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::ZeroOne => SequenceFormat::ZeroOne,
            FormatArg::PlusMinus => SequenceFormat::PlusMinus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Normality,
    Restricted,
    Welldist,
    Correlation,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Normality,
    Restricted,
    Welldist,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lattice,
    Gaussian,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a measure for each sequence in a file (one per line).
    Measure {
        /// Input path, or '-' for stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::ZeroOne)]
        format: FormatArg,
        #[arg(long, value_enum, default_value_t = MeasureArg::Normality)]
        measure: MeasureArg,
        /// Block length for the restricted measure.
        #[arg(long)]
        d: Option<u32>,
        /// Order for the correlation measure.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Truncate lines to the largest multiple of d instead of failing.
        #[arg(long)]
        truncate: bool,
    },
    /// Sample a normalized measure distribution into an ECDF CSV.
    Sample {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: Option<u32>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Estimate the exit probability of the walk from P^(t).
    Exitprob {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Grid steps for the Gaussian route.
        #[arg(long, default_value_t = 512)]
        steps: usize,
        /// Sequence length for the lattice route (multiple of d).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the cross-checking property suites.
    Verify {
        /// Sequence length scale for randomized suites.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Random cases per suite.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Kolmogorov–Smirnov distance between two ECDF CSV files.
    Compare { a: PathBuf, b: PathBuf },
    /// Exhaustive minimum of the normality measure over {−1,1}^N.
    Minsearch {
        #[arg(long)]
        n: usize,
    },
}

fn witness_json(witness: &Witness) -> serde_json::Value {
    match witness {
        Witness::Normality { k, pattern, m } => json!({
            "kind": "pattern",
            "k": k,
            "pattern": pattern.render(),
            "pattern_code": pattern.code(),
            "m": m,
        }),
        Witness::WellDistribution { m, a, b } => json!({
            "kind": "progression",
            "m": m,
            "a": a,
            "b": b,
        }),
        Witness::Correlation { m, lags } => json!({
            "kind": "lags",
            "m": m,
            "lags": lags.lags(),
        }),
    }
}

fn report_json(name: &str, n: usize, report: &DeviationReport) -> serde_json::Value {
    json!({
        "measure": name,
        "n": n,
        "value_num": report.value_num(),
        "value_den": report.value_den(),
        "value_float": report.value_f64(),
        "witness": witness_json(report.witness()),
    })
}

enum CmdError {
    Core(CoreError),
    /// parse failure in an input file, with 1-based line number
    InputParse { line: usize, inner: CoreError },
    PropertyFailure,
}

impl From<CoreError> for CmdError {
    fn from(e: CoreError) -> Self {
        CmdError::Core(e)
    }
}

fn exit_code_for(err: &CmdError) -> u8 {
    match err {
        CmdError::PropertyFailure => EXIT_PROPERTY_FAILURE,
        CmdError::InputParse { .. } => EXIT_PARSE,
        CmdError::Core(core) => match core {
            CoreError::Parse { .. } => EXIT_PARSE,
            CoreError::Io(_) => EXIT_IO,
            CoreError::InvalidLength(_) | CoreError::Domain(_) | CoreError::Resource(_) => {
                EXIT_DOMAIN
            }
        },
    }
}

fn describe(err: &CmdError) -> String {
    match err {
        CmdError::PropertyFailure => "one or more property suites failed".to_string(),
        CmdError::InputParse { line, inner } => format!("input line {line}: {inner}"),
        CmdError::Core(core) => core.to_string(),
    }
}

fn cmd_measure(
    input: &PathBuf,
    format: SequenceFormat,
    measure: MeasureArg,
    d: Option<u32>,
    k: usize,
    truncate: bool,
) -> Result<(), CmdError> {
    let reader: Box<dyn BufRead> = if input.as_os_str() == "-" {
        Box::new(BufReader::new(std::io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(input).map_err(CoreError::from)?))
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut measured = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(CoreError::from)?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let seq = parse_sequence(&line, format)
            .map_err(|inner| CmdError::InputParse { line: lineno, inner })?;
        let mut record = match measure {
            MeasureArg::Normality => report_json("normality", seq.len(), &normality_measure(&seq)?),
            MeasureArg::Welldist => {
                report_json("welldist", seq.len(), &well_distribution_measure(&seq)?)
            }
            MeasureArg::Correlation => {
                let mut v = report_json("correlation", seq.len(), &correlation_measure(&seq, k)?);
                v["k"] = json!(k);
                v
            }
            MeasureArg::Restricted => {
                let d = d.ok_or_else(|| {
                    CoreError::Domain("--measure restricted needs --d".to_string())
                })?;
                let scheme = BlockScheme::new(d)?;
                let seq = if seq.len() % d as usize == 0 {
                    seq
                } else if truncate {
                    let keep = seq.len() - seq.len() % d as usize;
                    if keep == 0 {
                        return Err(CmdError::Core(CoreError::Domain(format!(
                            "line {lineno}: length {} is shorter than d = {d}",
                            seq.len()
                        ))));
                    }
                    seq.prefix(keep)?
                } else {
                    return Err(CmdError::Core(CoreError::Domain(format!(
                        "line {lineno}: length {} is not a multiple of d = {d} (pass --truncate to cut)",
                        seq.len()
                    ))));
                };
                let mut v =
                    report_json("restricted", seq.len(), &restricted_normality_measure(&seq, scheme)?);
                v["d"] = json!(d);
                v
            }
        };
        record["line"] = json!(lineno);
        writeln!(out, "{record}").map_err(CoreError::from)?;
        measured += 1;
    }
    eprintln!("measured {measured} sequence(s)");
    Ok(())
}

fn cmd_sample(
    kind: KindArg,
    n: usize,
    d: Option<u32>,
    samples: usize,
    output: &PathBuf,
    seed: SeedSpec,
) -> Result<(), CmdError> {
    let kind = match kind {
        KindArg::Normality => MeasureKind::Normality,
        KindArg::Restricted => MeasureKind::Restricted,
        KindArg::Welldist => MeasureKind::WellDistribution,
    };
    let ecdf = sample_distribution(kind, n, d, samples, seed)?;
    let file = File::create(output).map_err(CoreError::from)?;
    ecdf.write_csv(BufWriter::new(file))?;
    let qs: Vec<String> = [0.01, 0.25, 0.5, 0.75, 0.99]
        .iter()
        .map(|&p| format!("{}%: {:.4}", (p * 100.0) as u32, ecdf.quantile(p)))
        .collect();
    eprintln!(
        "wrote {} samples of {}/sqrt(N) at N = {n} to {}; quantiles {}",
        ecdf.len(),
        kind.name(),
        output.display(),
        qs.join(", ")
    );
    Ok(())
}

fn cmd_exitprob(
    method: MethodArg,
    d: u32,
    t: f64,
    samples: usize,
    steps: usize,
    n: Option<usize>,
    seed: SeedSpec,
) -> Result<(), CmdError> {
    let table = WeightTable::build(d)?;
    let (label, est) = match method {
        MethodArg::Gaussian => (
            "gaussian",
            simulate_wiener_exit(&table, t, steps, samples, seed)?,
        ),
        MethodArg::Lattice => {
            let n = n.ok_or_else(|| {
                CoreError::Domain("--method lattice needs --n (sequence length)".to_string())
            })?;
            ("lattice", simulate_lattice_exit(&table, t, n, samples, seed)?)
        }
    };
    println!(
        "{}",
        json!({
            "d": d,
            "t": t,
            "method": label,
            "estimate": est.estimate,
            "stderr": est.stderr,
            "samples": est.samples,
            "steps": est.steps,
        })
    );
    eprintln!(
        "{label} exit estimate {:.4} +/- {:.4} ({} exits / {} paths)",
        est.estimate, est.stderr, est.exits, est.samples
    );
    Ok(())
}

fn cmd_verify(n: usize, samples: usize, seed: SeedSpec) -> Result<(), CmdError> {
    let outcomes = verify::run_all(n, samples, seed)?;
    let all_pass = outcomes.iter().all(|o| o.pass);
    println!("{}", serde_json::to_string(&outcomes).expect("serializable"));
    for o in &outcomes {
        eprintln!(
            "{} {} ({} cases{})",
            if o.pass { "PASS" } else { "FAIL" },
            o.suite,
            o.cases,
            o.detail.as_ref().map(|d| format!("; {d}")).unwrap_or_default()
        );
    }
    if all_pass {
        Ok(())
    } else {
        Err(CmdError::PropertyFailure)
    }
}

fn cmd_compare(a: &PathBuf, b: &PathBuf) -> Result<(), CmdError> {
    let ea = Ecdf::read_csv(BufReader::new(File::open(a).map_err(CoreError::from)?))?;
    let eb = Ecdf::read_csv(BufReader::new(File::open(b).map_err(CoreError::from)?))?;
    let ks = ks_distance(&ea, &eb)?;
    println!(
        "{}",
        json!({
            "ks": ks,
            "samples_a": ea.len(),
            "samples_b": eb.len(),
        })
    );
    Ok(())
}

fn cmd_minsearch(n: usize) -> Result<(), CmdError> {
    let (value, witness) = min_normality_exhaustive(n)?;
    // the witness must reproduce the minimum through the reference path
    let check = normality_measure_oracle(&witness)?;
    if check.value() != value {
        return Err(CmdError::Core(CoreError::Domain(
            "minimum not reproduced by oracle on witness".to_string(),
        )));
    }
    println!(
        "{}",
        json!({
            "n": n,
            "value_num": *value.numer(),
            "value_den": *value.denom(),
            "value_float": *value.numer() as f64 / *value.denom() as f64,
            "witness": witness.render(SequenceFormat::PlusMinus),
            "witness_bits": witness.render(SequenceFormat::ZeroOne),
        })
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CmdError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CoreError::Domain(format!("thread pool: {e}")))?;
    }
    let base_seed = match std::env::var("NORMWALK_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| CoreError::Domain(format!("NORMWALK_SEED must be a u64, got {v:?}")))?,
        Err(_) => cli.seed,
    };
    let seed = SeedSpec::new(base_seed, 0);
    match cli.command {
        Command::Measure {
            input,
            format,
            measure,
            d,
            k,
            truncate,
        } => cmd_measure(&input, format.into(), measure, d, k, truncate),
        Command::Sample {
            kind,
            n,
            d,
            samples,
            output,
        } => cmd_sample(kind, n, d, samples, &output, seed),
        Command::Exitprob {
            method,
            d,
            t,
            samples,
            steps,
            n,
        } => cmd_exitprob(method, d, t, samples, steps, n, seed),
        Command::Verify { n, samples } => cmd_verify(n, samples, seed),
        Command::Compare { a, b } => cmd_compare(&a, &b),
        Command::Minsearch { n } => cmd_minsearch(n),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code_for(&err))
        }
    }
}
