use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use debias_core::data::{generate, save_dataset, GenConfig};
use debias_core::debias::{Method, Scheme};
use debias_runner::artifacts::{run_vcae, train_biased};
use debias_runner::oracle::write_oracle_report;
use debias_runner::output::create_dir;
use debias_runner::{
    oracle_check, report, run_experiment, run_sweep, OracleCounts, RunConfig, SweepAxis,
};

#[derive(Parser)]
#[command(
    name = "debias",
    version,
    about = "Debiasing experiments by inverse-conditional weighting"
)]
struct Cli {
    /// Worker threads for seeds and sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset directory.
    Generate(GenerateArgs),
    /// Train the GCE biased classifier.
    TrainBiased(RunArgs),
    /// Run a debiasing configuration over its seeds.
    Debias(RunArgs),
    /// Exact enumeration checks of the bound and identities.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the VCAE and dump latents and weights.
    Vcae(RunArgs),
    /// Sweep γ or T_bias.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Final-epoch mean ± std of finished runs.
    Report {
        /// Run directories containing metrics.csv.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Gamma,
    TBias,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "two-factor")]
    kind: Kind,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 10000)]
    samples: usize,
    /// Fraction of bias-conflicting samples.
    #[arg(long, default_value_t = 0.01)]
    bc_ratio: f64,
    /// Generate an unbiased set instead.
    #[arg(long)]
    unbiased: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    TwoFactor,
    ColoredGlyphs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t_bias: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .with_context(|| format!("unknown {what} {s:?}"))
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut c = RunConfig::from_path(&self.config)?;
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(g) = self.gamma {
            c.pipeline.gamma = g;
        }
        if let Some(t) = self.t_bias {
            c.pipeline.t_bias = t;
        }
        if let Some(t) = self.tau {
            c.pipeline.gce.tau = t;
        }
        if let Some(m) = &self.method {
            c.pipeline.method = parse_enum::<Method>("method", m)?;
        }
        if let Some(s) = &self.scheme {
            c.pipeline.scheme = parse_enum::<Scheme>("scheme", s)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate(a) => {
            let mut g = match a.kind {
                Kind::TwoFactor => GenConfig::two_factor(a.classes, a.samples, a.bc_ratio, a.seed),
                Kind::ColoredGlyphs => {
                    GenConfig::colored_glyphs(a.classes, a.samples, a.bc_ratio, a.seed)
                }
            };
            if a.unbiased {
                g = g.unbiased(a.samples, a.seed);
            }
            let ds = generate(&g)?;
            create_dir(&a.out)?;
            save_dataset(&ds, &a.out)?;
            let mut w = debias_runner::output::csv_writer(&a.out.join("labels.csv"))?;
            w.write_record(["index", "label", "bias", "aligned"])?;
            let bias = ds.bias().unwrap_or(&[]);
            for i in 0..ds.len() {
                w.write_record([
                    i.to_string(),
                    ds.labels()[i].to_string(),
                    bias.get(i).map(|b| b.to_string()).unwrap_or_default(),
                    u8::from(ds.aligned()[i]).to_string(),
                ])?;
            }
            w.flush()?;
        }
        Cmd::TrainBiased(a) => train_biased(&a.load()?, &a.out)?,
        Cmd::Debias(a) => {
            let s = run_experiment(&a.load()?, &a.out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Cmd::OracleCheck { seed, out } => {
            let r = oracle_check(seed, OracleCounts::default())?;
            write_oracle_report(&r, &out)?;
            println!(
                "bound min slack {:e}, invariant max gap {:e}, equivalence max {:e}, identity max {:e}",
                r.bound_min_slack, r.invariant_max_gap, r.equivalence_max, r.identity_max
            );
            if !r.passed {
                bail!(
                    "oracle check failed; see {}",
                    out.join("oracle_check.json").display()
                );
            }
        }
        Cmd::Vcae(a) => run_vcae(&a.load()?, &a.out)?,
        Cmd::Sweep { run, axis, values } => {
            let base = run.load()?;
            let axis = match axis {
                Axis::Gamma => SweepAxis::Gamma(
                    values
                        .iter()
                        .map(|v| v.parse().with_context(|| format!("gamma {v:?}")))
                        .collect::<Result<_>>()?,
                ),
                Axis::TBias => SweepAxis::TBias(
                    values
                        .iter()
                        .map(|v| v.parse().with_context(|| format!("t_bias {v:?}")))
                        .collect::<Result<_>>()?,
                ),
            };
            create_dir(&run.out)?;
            run_sweep(&base, &axis, &run.out)?;
        }
        Cmd::Report { runs, out } => report::report(&runs, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
