//! The `sigstream` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::json;

use crate::conformance::{calibrate_threshold, ConformanceModel};
use crate::distribution::{expected_signature, ses_features, SesConfig};
use crate::error::{Result, SigError};
use crate::io::{read_measure_dir, read_stream, read_stream_dir, stream_to_csv_string, stream_to_json, TensorDoc};
use crate::kernel::{gram_with, KernelMode, PdeOptions};
use crate::logode::{solve_cde, uniform_partition, LinearField, DEFAULT_SUBSTEPS};
use crate::parallel::Exec;
use crate::signature::{log_signature, signature_tensor};
use crate::stream::{cumulative_sum, invisibility_reset, lead_lag, time_augment, Stream, TimeMode};
use crate::tensor::{sigkeys, TruncatedTensor};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_DIMENSION: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_DOMAIN: i32 = 6;
pub const EXIT_NUMERIC: i32 = 7;

const CHAIN_HELP: &str = "Comma-separated transforms applied left to right:
  leadlag[:DELAY[:PASTS[:pause|nopause]]]   defaults 1:1:pause
  time[:abs|diff]                           default abs
  invreset                                  invisibility reset
  cumsum                                    cumulative sum
Example: cumsum,leadlag:1:1:pause,time:abs";

#[derive(Parser, Debug)]
#[command(name = "sigstream", version, about = "Path signatures and signature methods for data streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pde,
    Truncated,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, help = "Transform chain (see --help)", long_help = CHAIN_HELP)]
    pub transform: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = Mode::Pde)]
    pub mode: Mode,
    /// Truncation depth for `--mode truncated`.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Dyadic refinement level for `--mode pde`.
    #[arg(long, default_value_t = 2)]
    pub lambda: u32,
    /// Scale applied to both streams.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the words indexing signature coefficients.
    Keys { dim: usize, depth: usize },
    /// Signature of a stream (CSV or JSON).
    Sig {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Log-signature of a stream.
    Logsig {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a transform chain and print the resulting stream.
    Transform {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Signature kernel of two streams.
    Kernel {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Signature kernel Gram matrix of streams (files or directories).
    Gram {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Solve a linear CDE driven by a stream with the log-ODE method.
    Logode {
        input: PathBuf,
        /// JSON file `{"matrices": [[[..]..]..], "z0": [..]}`.
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Number of equal log-ODE intervals.
        #[arg(long, default_value_t = 1)]
        intervals: usize,
        #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
        substeps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Expected signature of a directory of streams.
    ExpectedSig {
        dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Signature of the pathwise expected signature of a measure.
    Ses {
        dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        inner_depth: usize,
        #[arg(long, default_value_t = 2)]
        outer_depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Variance-norm conformance scoring.
    #[command(subcommand)]
    Conformance(ConformanceCommand),
}

#[derive(Subcommand, Debug)]
pub enum ConformanceCommand {
    /// Fit a model on a corpus and write it to `--model`.
    Fit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score streams against a saved model.
    Score {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Threshold of conformance from a seeded half split of a corpus.
    Calibrate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

/// One step of a transform chain.
#[derive(Clone, Debug, PartialEq)]
pub enum TransformSpec {
    LeadLag { delay: usize, pasts: usize, pause: bool },
    Time(TimeMode),
    InvisibilityReset,
    CumulativeSum,
}

impl FromStr for TransformSpec {
    type Err = SigError;

    fn from_str(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let bad = || SigError::parse(format!("unknown transform {spec:?}"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| SigError::parse(format!("bad count {s:?} in {spec:?}")));
        match parts.as_slice() {
            ["leadlag", rest @ ..] if rest.len() <= 3 => Ok(TransformSpec::LeadLag {
                delay: rest.first().map(|s| int(s)).transpose()?.unwrap_or(1),
                pasts: rest.get(1).map(|s| int(s)).transpose()?.unwrap_or(1),
                pause: match rest.get(2) {
                    None | Some(&"pause") => true,
                    Some(&"nopause") => false,
                    Some(_) => return Err(bad()),
                },
            }),
            ["time"] | ["time", "abs"] => Ok(TransformSpec::Time(TimeMode::Absolute)),
            ["time", "diff"] => Ok(TransformSpec::Time(TimeMode::Difference)),
            ["invreset"] => Ok(TransformSpec::InvisibilityReset),
            ["cumsum"] => Ok(TransformSpec::CumulativeSum),
            _ => Err(bad()),
        }
    }
}

impl TransformSpec {
    pub fn apply(&self, s: &Stream) -> Result<Stream> {
        match *self {
            TransformSpec::LeadLag { delay, pasts, pause } => lead_lag(s, delay, pasts, pause),
            TransformSpec::Time(mode) => time_augment(s, None, mode),
            TransformSpec::InvisibilityReset => invisibility_reset(s),
            TransformSpec::CumulativeSum => Ok(cumulative_sum(s)),
        }
    }
}

pub fn parse_chain(chain: &str) -> Result<Vec<TransformSpec>> {
    chain.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

fn apply_chain(chain: &[TransformSpec], mut s: Stream) -> Result<Stream> {
    for t in chain {
        s = t.apply(&s)?;
    }
    Ok(s)
}

fn load_streams(inputs: &[PathBuf], chain: &[TransformSpec]) -> Result<Vec<Stream>> {
    let mut out = Vec::new();
    for path in inputs {
        if path.is_dir() {
            out.extend(read_stream_dir(path)?);
        } else {
            out.push(read_stream(path)?);
        }
    }
    out.into_iter().map(|s| apply_chain(chain, s)).collect()
}

fn chain_of(common: &Common) -> Result<Vec<TransformSpec>> {
    common.transform.as_deref().map(parse_chain).transpose().map(Option::unwrap_or_default)
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 {
        Err(SigError::domain("depth must be at least 1"))
    } else {
        Ok(())
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn csv_line(values: impl IntoIterator<Item = String>) -> String {
    let mut line = values.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn tensor_output(t: &TruncatedTensor, format: Format) -> Result<String> {
    let doc = TensorDoc::new(t)?;
    Ok(match format {
        Format::Json => serde_json::to_string(&doc).expect("tensor serializes") + "\n",
        Format::Csv => {
            let header = csv_line(doc.keys.iter().map(|k| format!("\"{k}\"")));
            header + &csv_line(doc.coefficients.iter().map(|&c| num(c)))
        }
    })
}

fn matrix_output(name: &str, m: &DMatrix<f64>, format: Format) -> String {
    match format {
        Format::Json => {
            let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
            json!({ name: rows }).to_string() + "\n"
        }
        Format::Csv => m.row_iter().map(|r| csv_line(r.iter().map(|&x| num(x)))).collect(),
    }
}

#[derive(Deserialize)]
struct FieldDoc {
    matrices: Vec<Vec<Vec<f64>>>,
    z0: Vec<f64>,
}

fn read_field(path: &Path) -> Result<(LinearField, DVector<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| SigError::io(path, e))?;
    let doc: FieldDoc = serde_json::from_str(&text).map_err(|e| SigError::parse(format!("field JSON: {e}")))?;
    let matrices = doc
        .matrices
        .iter()
        .map(|rows| {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(SigError::dim("field matrices must be square"));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((LinearField::new(matrices)?, DVector::from_vec(doc.z0)))
}

fn kernel_mode(k: &KernelArgs) -> Result<KernelMode> {
    if !(k.scale.is_finite()) {
        return Err(SigError::domain("scale must be finite"));
    }
    match k.mode {
        Mode::Truncated => {
            check_depth(k.depth)?;
            Ok(KernelMode::Truncated { depth: k.depth })
        }
        Mode::Pde => Ok(KernelMode::Pde(PdeOptions {
            lambda: k.lambda,
            scale: k.scale,
        })),
    }
}

fn scaled_for(k: &KernelArgs, streams: Vec<Stream>) -> Vec<Stream> {
    if k.mode == Mode::Truncated && k.scale != 1.0 {
        streams.iter().map(|s| s.scaled(k.scale)).collect()
    } else {
        streams
    }
}

fn score_value(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

/// Runs a parsed command and returns the document to print.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Keys { dim, depth } => Ok(sigkeys(*dim, *depth)? + "\n"),
        Command::Sig { input, depth, common } => {
            check_depth(*depth)?;
            let s = load_streams(std::slice::from_ref(input), &chain_of(common)?)?.remove(0);
            tensor_output(&signature_tensor(&s, *depth), common.format)
        }
        Command::Logsig { input, depth, common } => {
            check_depth(*depth)?;
            let s = load_streams(std::slice::from_ref(input), &chain_of(common)?)?.remove(0);
            tensor_output(&log_signature(&s, *depth)?, common.format)
        }
        Command::Transform { input, common } => {
            let s = load_streams(std::slice::from_ref(input), &chain_of(common)?)?.remove(0);
            Ok(match common.format {
                Format::Json => stream_to_json(&s).to_string() + "\n",
                Format::Csv => stream_to_csv_string(&s),
            })
        }
        Command::Kernel { x, y, kernel, common } => {
            let mode = kernel_mode(kernel)?;
            let streams = scaled_for(kernel, load_streams(&[x.clone(), y.clone()], &chain_of(common)?)?);
            let value = mode.eval(&streams[0], &streams[1])?;
            Ok(match common.format {
                Format::Json => json!({ "kernel": value }).to_string() + "\n",
                Format::Csv => num(value) + "\n",
            })
        }
        Command::Gram {
            inputs,
            kernel,
            sequential,
            common,
        } => {
            let mode = kernel_mode(kernel)?;
            let streams = scaled_for(kernel, load_streams(inputs, &chain_of(common)?)?);
            let exec = if *sequential { Exec::Sequential } else { Exec::default() };
            let g = gram_with(&streams, mode, exec)?;
            Ok(matrix_output("gram", &g, common.format))
        }
        Command::Logode {
            input,
            field,
            depth,
            intervals,
            substeps,
            common,
        } => {
            check_depth(*depth)?;
            if *intervals == 0 {
                return Err(SigError::domain("need at least one interval"));
            }
            let (f, z0) = read_field(field)?;
            let s = load_streams(std::slice::from_ref(input), &chain_of(common)?)?.remove(0);
            let partition = uniform_partition(&s, *intervals);
            let sol = solve_cde(&z0, &f, &s, &partition, *depth, *substeps)?;
            Ok(match common.format {
                Format::Json => {
                    let states: Vec<Vec<f64>> = sol.states.iter().map(|z| z.iter().copied().collect()).collect();
                    json!({ "times": sol.times, "states": states }).to_string() + "\n"
                }
                Format::Csv => sol
                    .times
                    .iter()
                    .zip(&sol.states)
                    .map(|(t, z)| csv_line(std::iter::once(num(*t)).chain(z.iter().map(|&x| num(x)))))
                    .collect(),
            })
        }
        Command::ExpectedSig { dir, depth, common } => {
            check_depth(*depth)?;
            let mu = read_measure_dir(dir)?;
            tensor_output(&expected_signature(&mu, *depth), common.format)
        }
        Command::Ses {
            dir,
            inner_depth,
            outer_depth,
            common,
        } => {
            check_depth(*inner_depth)?;
            check_depth(*outer_depth)?;
            let mu = read_measure_dir(dir)?;
            let features = ses_features(
                &mu,
                &SesConfig {
                    inner_depth: *inner_depth,
                    outer_depth: *outer_depth,
                    grid: None,
                },
            )?;
            Ok(match common.format {
                Format::Json => json!({ "features": features }).to_string() + "\n",
                Format::Csv => csv_line(features.iter().map(|&x| num(x))),
            })
        }
        Command::Conformance(cmd) => conformance(cmd),
    }
}

fn conformance(cmd: &ConformanceCommand) -> Result<String> {
    match cmd {
        ConformanceCommand::Fit {
            inputs,
            depth,
            model,
            common,
        } => {
            check_depth(*depth)?;
            let corpus = load_streams(inputs, &chain_of(common)?)?;
            let m = ConformanceModel::fit(&corpus, *depth)?;
            m.save(model)?;
            Ok(match common.format {
                Format::Json => json!({
                    "model": model.display().to_string(),
                    "corpus": m.corpus_len(),
                    "features": m.dim(),
                    "rank": m.rank(),
                })
                .to_string()
                    + "\n",
                Format::Csv => csv_line([m.corpus_len(), m.dim(), m.rank()].map(|x| x.to_string())),
            })
        }
        ConformanceCommand::Score { inputs, model, common } => {
            let m = ConformanceModel::load(model)?;
            let queries = load_streams(inputs, &chain_of(common)?)?;
            let scores = m.conformance_batch(&queries, Exec::default())?;
            Ok(match common.format {
                Format::Json => {
                    let rows: Vec<_> = scores
                        .iter()
                        .map(|s| json!({ "score": score_value(s.value), "nearest": s.nearest_index }))
                        .collect();
                    json!({ "scores": rows }).to_string() + "\n"
                }
                Format::Csv => scores
                    .iter()
                    .map(|s| csv_line([num(s.value), s.nearest_index.to_string()]))
                    .collect(),
            })
        }
        ConformanceCommand::Calibrate {
            inputs,
            depth,
            seed,
            common,
        } => {
            check_depth(*depth)?;
            let corpus = load_streams(inputs, &chain_of(common)?)?;
            let r = calibrate_threshold(&corpus, *depth, *seed)?;
            Ok(match common.format {
                Format::Json => json!({ "threshold": score_value(r) }).to_string() + "\n",
                Format::Csv => num(r) + "\n",
            })
        }
    }
}

pub fn exit_code(err: &SigError) -> i32 {
    match err {
        SigError::Parse(_) => EXIT_PARSE,
        SigError::Dimension(_) => EXIT_DIMENSION,
        SigError::Io { .. } => EXIT_IO,
        SigError::Domain(_) => EXIT_DOMAIN,
        SigError::Overflow(_) => EXIT_NUMERIC,
    }
}

/// Parses `args`, runs the command and writes its output. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(doc) => {
            let _ = out.write_all(doc.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "sigstream: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_grammar() {
        assert_eq!(
            parse_chain("leadlag,time:diff").unwrap(),
            vec![
                TransformSpec::LeadLag {
                    delay: 1,
                    pasts: 1,
                    pause: true
                },
                TransformSpec::Time(TimeMode::Difference)
            ]
        );
        assert_eq!(
            parse_chain("leadlag:2:3:nopause").unwrap()[0],
            TransformSpec::LeadLag {
                delay: 2,
                pasts: 3,
                pause: false
            }
        );
        assert_eq!(parse_chain("").unwrap(), vec![]);
        assert!(parse_chain("leadlag:x").is_err());
        assert!(parse_chain("leadlag:1:1:maybe").is_err());
        assert!(parse_chain("spline").is_err());
    }

    #[test]
    fn keys_and_usage() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["sigstream", "keys", "1", "2"], &mut out, &mut err), 0);
        assert_eq!(String::from_utf8(out).unwrap(), "() (1) (1,1)\n");
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["sigstream", "frobnicate"], &mut out, &mut err), EXIT_USAGE);
        assert!(!err.is_empty());
    }
}
