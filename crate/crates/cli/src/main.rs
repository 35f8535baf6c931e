//! `flarecheck`: consistency and query verification for wildfire detectors.
//!
//! Exit codes: 0 = property holds (UNSAT / consistent), 1 = violated (SAT /
//! inconsistent), 2 = bad input, 3 = unknown (budget exhausted).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flarecheck::boxes::{
    scan_dataset_consistency, verify_global_consistency, verify_query, Budget, GlobalVerdict, InputBox, SearchOptions,
    Verdict,
};
use flarecheck::lang::{parse_query, QuerySource};
use flarecheck::network::Network;
use flarecheck::planting::{
    generate_background, generate_signal, BackgroundParams, EpsRange, Scene, SceneSet, SignalParams,
};
use flarecheck::pwl::{verify_local_consistency, ConsistencyVerdict};
use flarecheck::Tensor;
use serde::Serialize;

const HOLDS: u8 = 0;
const VIOLATED: u8 = 1;
const INPUT_ERROR: u8 = 2;
const UNKNOWN: u8 = 3;

#[derive(Parser)]
#[command(name = "flarecheck", version, about = "Verify that wildfire detection networks are consistent")]
#[command(after_help = "Exit codes: 0 holds / UNSAT / consistent, 1 violated / SAT / inconsistent, \
                        2 input error, 3 unknown (budget exhausted).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a network on one input tensor.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Fire threshold on the network output (the sigmoid score when the
        /// network has a sigmoid head).
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Search a box for an input satisfying a query's postcondition.
    ///
    /// The postcondition describes a violation: SAT means the property is
    /// violated (exit 1), UNSAT means it holds (exit 0).
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Decide consistency exactly for one signal and background.
    Consistency {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[command(flatten)]
        eps: EpsArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check consistency over boxes of signals and backgrounds.
    ///
    /// Boxes come either from --signal/--background files (boxes
    /// `{"shape", "lo", "hi"}` or single tensors) or from the hulls of a
    /// scene set's signals and backgrounds.
    Global {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with_all = ["signal", "background"])]
        scenes: Option<PathBuf>,
        #[arg(long, requires = "background")]
        signal: Option<PathBuf>,
        #[arg(long, requires = "signal")]
        background: Option<PathBuf>,
        #[command(flatten)]
        eps: EpsArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check every signal/background pair of a scene set exactly.
    Scan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[command(flatten)]
        eps: EpsArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a seeded synthetic scene set.
    Simulate {
        /// Tensor shape, e.g. `2,5,5` (frames, rows, cols).
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        signals: usize,
        #[arg(long, default_value_t = 10)]
        backgrounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        eps_min: f64,
        #[arg(long, default_value_t = 1.0)]
        eps_max: f64,
        /// Blob standard deviation in pixels.
        #[arg(long, default_value_t = 0.8)]
        radius: f64,
        /// Magnitude ratio between consecutive frames.
        #[arg(long, default_value_t = 1.5)]
        growth: f64,
        /// Moving-average half-width of the backgrounds.
        #[arg(long, default_value_t = 1)]
        smoothness: usize,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EpsArgs {
    /// Lowest intensity (defaults to the scene set's range, else 0).
    #[arg(long)]
    eps_min: Option<f64>,
    /// Highest intensity (defaults to the scene set's range, else 1).
    #[arg(long)]
    eps_max: Option<f64>,
}

impl EpsArgs {
    fn resolve(&self, fallback: EpsRange) -> Result<EpsRange> {
        Ok(EpsRange::new(
            self.eps_min.unwrap_or(fallback.lo()),
            self.eps_max.unwrap_or(fallback.hi()),
        )?)
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 10_000)]
    max_splits: usize,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SearchArgs {
    fn options(&self) -> Result<SearchOptions> {
        if self.max_splits == 0 {
            bail!("--max-splits must be positive");
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            bail!("--timeout must be a positive number of seconds");
        }
        Ok(SearchOptions {
            budget: Budget {
                max_splits: self.max_splits,
                timeout: Duration::from_secs_f64(self.timeout),
            },
            seed: self.seed,
            ..Default::default()
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl OutputArgs {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn json(&self, value: &impl Serialize) -> Result<()> {
        if self.format == Format::Csv {
            bail!("CSV output is only available for scan");
        }
        self.emit(&(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn load_model(path: &Path) -> Result<Network> {
    Network::from_path(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_tensor(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing tensor {}", path.display()))
}

/// A box file, or a tensor file taken as a single-point box.
fn load_box(path: &Path) -> Result<InputBox> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("lo").is_some() {
        serde_json::from_value(value).with_context(|| format!("parsing box {}", path.display()))
    } else {
        let t: Tensor = serde_json::from_value(value).with_context(|| format!("parsing tensor {}", path.display()))?;
        Ok(InputBox::point(&t))
    }
}

fn load_scenes(path: &Path) -> Result<SceneSet> {
    SceneSet::from_path(path).with_context(|| format!("loading scene set {}", path.display()))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Eval {
            model,
            input,
            delta,
            output,
        } => {
            let net = load_model(&model)?;
            let x = load_tensor(&input)?;
            let c = net.classify(&x, delta)?;
            #[derive(Serialize)]
            struct Report {
                logit: f64,
                score: f64,
                label: flarecheck::network::Label,
                delta: f64,
            }
            output.json(&Report {
                logit: c.logit,
                score: c.score,
                label: c.label,
                delta,
            })?;
            Ok(HOLDS)
        }
        Command::Verify {
            model,
            query,
            search,
            output,
        } => {
            let net = load_model(&model)?;
            let source = QuerySource::from_path(&query).with_context(|| format!("reading query {}", query.display()))?;
            let q = parse_query(&source, net.input_shape()).with_context(|| format!("parsing {}", query.display()))?;
            let verdict = verify_query(&net, &q, &search.options()?)?;
            eprintln!("note: the postcondition describes a violation; SAT means the property is violated");
            output.json(&verdict)?;
            Ok(match verdict {
                Verdict::Unsat => HOLDS,
                Verdict::Sat { .. } => VIOLATED,
                Verdict::Unknown { .. } => UNKNOWN,
            })
        }
        Command::Consistency {
            model,
            signal,
            background,
            eps,
            output,
        } => {
            let net = load_model(&model)?;
            let scene = Scene::new(load_tensor(&signal)?, load_tensor(&background)?, eps.resolve(EpsRange::default())?)?;
            let report = verify_local_consistency(&net, &scene, &Default::default())?;
            output.json(&report)?;
            Ok(match report.verdict {
                ConsistencyVerdict::Consistent => HOLDS,
                ConsistencyVerdict::Inconsistent { .. } => VIOLATED,
            })
        }
        Command::Global {
            model,
            scenes,
            signal,
            background,
            eps,
            search,
            output,
        } => {
            let net = load_model(&model)?;
            let (signal_box, background_box, range) = match (scenes, signal, background) {
                (Some(path), _, _) => {
                    let set = load_scenes(&path)?;
                    (
                        InputBox::hull(set.signals())?,
                        InputBox::hull(set.backgrounds())?,
                        eps.resolve(set.eps_range())?,
                    )
                }
                (None, Some(s), Some(b)) => (load_box(&s)?, load_box(&b)?, eps.resolve(EpsRange::default())?),
                _ => bail!("give either --scenes or both --signal and --background"),
            };
            let verdict = verify_global_consistency(&net, &signal_box, &background_box, range, &search.options()?)?;
            eprintln!("note: signal and background sets are checked as boxes (per-dimension intervals)");
            output.json(&verdict)?;
            Ok(match verdict {
                GlobalVerdict::Holds => HOLDS,
                GlobalVerdict::Violated { .. } => VIOLATED,
                GlobalVerdict::Unknown { .. } => UNKNOWN,
            })
        }
        Command::Scan {
            model,
            scenes,
            eps,
            output,
        } => {
            let net = load_model(&model)?;
            let mut set = load_scenes(&scenes)?;
            if eps.eps_min.is_some() || eps.eps_max.is_some() {
                set = SceneSet::new(set.signals().to_vec(), set.backgrounds().to_vec(), eps.resolve(set.eps_range())?)?;
            }
            let report = scan_dataset_consistency(&net, &set, &Default::default())?;
            match output.format {
                Format::Csv => output.emit(&report.to_csv()?)?,
                Format::Json => output.json(&report)?,
            }
            eprintln!(
                "{} pairs, consistent fraction {}, {} inconsistent, {} errors",
                report.pairs.len(),
                report.consistent_fraction,
                report.inconsistent(),
                report.errors
            );
            Ok(if report.inconsistent() > 0 {
                VIOLATED
            } else if report.errors > 0 {
                UNKNOWN
            } else {
                HOLDS
            })
        }
        Command::Simulate {
            shape,
            signals,
            backgrounds,
            seed,
            eps_min,
            eps_max,
            radius,
            growth,
            smoothness,
            amplitude,
            out,
        } => {
            let range = EpsRange::new(eps_min, eps_max)?;
            let signal_params = SignalParams {
                center: None,
                radius,
                growth,
            };
            let background_params = BackgroundParams { smoothness, amplitude };
            // independent streams for signals and backgrounds
            let s = (0..signals as u64)
                .map(|i| generate_signal(seed.wrapping_mul(1_000_003).wrapping_add(2 * i), &shape, signal_params))
                .collect::<flarecheck::Result<Vec<_>>>()?;
            let b = (0..backgrounds as u64)
                .map(|i| {
                    generate_background(seed.wrapping_mul(1_000_003).wrapping_add(2 * i + 1), &shape, background_params)
                })
                .collect::<flarecheck::Result<Vec<_>>>()?;
            let set = SceneSet::new(s, b, range)?;
            let text = set.to_json_string() + "\n";
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(HOLDS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
