use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use stratdisc_core::discrepancy::l2_sq_warnock;
use stratdisc_core::expectation::{expected_l2_sq, in_improvement_region, total_gain};
use stratdisc_core::experiments::{
    predict_vs_table, run_table, ExperimentConfig, PartitionSelector, TABLE1_REPLICATIONS,
    TABLE2_REPLICATIONS,
};
use stratdisc_core::io::{read_points_csv, write_points_csv};
use stratdisc_core::partitions::PairPosition;
use stratdisc_core::sampling::stratified_sample;

const VERSION: &str = env!("STRATDISC_VERSION");

/// Exit status for invalid partitions or inputs.
const EXIT_VALIDATION: u8 = 2;
/// Exit status for `table --check` tolerance failures.
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "stratdisc", version = VERSION, about = "Expected L2-discrepancy of stratified samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact expected squared L2-discrepancy of a partition.
    Expected(PartitionArgs),
    /// Monte-Carlo estimate of the expected squared L2-discrepancy.
    Simulate(SimulateArgs),
    /// One stratified sample as CSV.
    Sample(SampleArgs),
    /// Squared L2-discrepancy of a point CSV.
    Warnock(WarnockArgs),
    /// Per-site gains from triangulating every second column.
    Gain(GridArgs),
    /// Improvement-region membership on the pair-position grid.
    Tmap(GridArgs),
    /// Reproduce a reference table.
    Table(TableArgs),
    /// Compare analytic predictions with a reference table.
    Predict(TableArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Output {
    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn emit(&self, text: &str) -> anyhow::Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
            None => {
                io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

#[derive(Args)]
struct PartitionArgs {
    /// jittered, p00, p01, p10, p11, toprow, all, or file:<path>
    #[arg(long, default_value = "jittered")]
    partition: PartitionSelector,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    partition: PartitionArgs,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    partition: PartitionArgs,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct WarnockArgs {
    /// Point CSV; `-` reads stdin.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TableArgs {
    /// Reference table, 1 or 2.
    #[arg(long = "table", default_value_t = 1)]
    which: u8,
    /// Replications per cell; defaults to the reference's own count.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Exit with status 3 if any cell misses its tolerance.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    output: Output,
}

impl TableArgs {
    fn reps(&self) -> usize {
        self.reps.unwrap_or(match self.which {
            2 => TABLE2_REPLICATIONS,
            _ => TABLE1_REPLICATIONS,
        })
    }

    fn header(&self, command: &str) -> String {
        format!(
            "# stratdisc {VERSION} {command} table={} reps={} seed={} workers={}\n",
            self.which,
            self.reps(),
            self.seed,
            self.workers
        )
    }

    fn config(&self) -> Value {
        json!({"table": self.which, "reps": self.reps(), "seed": self.seed, "workers": self.workers})
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err
                .downcast_ref::<stratdisc_core::Error>()
                .is_some_and(stratdisc_core::Error::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { 1 })
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Expected(args) => {
            let partition = args.partition.build(args.m, args.d)?;
            let result = expected_l2_sq(&partition)?;
            let text = match args.output.format(Format::Json) {
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&result)?),
                Format::Text => format!("{:.15e}\n", result.value),
                Format::Csv => {
                    let mut out = String::from("stratum,q,q2\n");
                    for (i, (q, q2)) in result.per_stratum_q.iter().zip(&result.per_stratum_q2).enumerate() {
                        out.push_str(&format!("{i},{q:.17e},{q2:.17e}\n"));
                    }
                    out
                }
            };
            args.output.emit(&text)?;
        }
        Command::Simulate(args) => {
            let p = &args.partition;
            let config = ExperimentConfig {
                partition: p.partition.clone(),
                m: p.m,
                d: p.d,
                replications: args.reps,
                seed: args.seed,
                workers: args.workers,
            };
            let estimate = config.run()?;
            let analytic = expected_l2_sq(&config.partition.build(p.m, p.d)?)?.value;
            let z = estimate.z_score(analytic);
            let selector = match &p.partition {
                PartitionSelector::Named(name) => name.to_string(),
                PartitionSelector::File(path) => format!("file:{}", path.display()),
            };
            let header = format!(
                "# stratdisc {VERSION} simulate partition={selector} m={} d={} reps={} seed={} workers={}\n",
                p.m, p.d, args.reps, args.seed, args.workers
            );
            let text = match p.output.format(Format::Text) {
                Format::Json => format!(
                    "{}\n",
                    serde_json::to_string_pretty(&json!({
                        "version": VERSION,
                        "config": {"partition": selector, "m": p.m, "d": p.d, "reps": args.reps,
                                   "seed": args.seed, "workers": args.workers},
                        "estimate": estimate,
                        "analytic": analytic,
                        "z": z,
                    }))?
                ),
                Format::Csv => format!(
                    "{header}mean,stderr,std_dev,reps,seed,analytic,z\n{:.15e},{:.6e},{:.6e},{},{},{:.15e},{:.4}\n",
                    estimate.mean, estimate.stderr, estimate.std_dev, estimate.replications, estimate.seed, analytic, z
                ),
                Format::Text => format!(
                    "{header}mean      {:.12e}\nstderr    {:.4e}\nanalytic  {:.12e}\nz         {:+.3}\n",
                    estimate.mean, estimate.stderr, analytic, z
                ),
            };
            p.output.emit(&text)?;
        }
        Command::Sample(args) => {
            let p = &args.partition;
            if p.output.format(Format::Csv) != Format::Csv {
                bail!("sample writes CSV only");
            }
            let partition = p.partition.build(p.m, p.d)?;
            let sample = stratified_sample(&partition, args.seed)?;
            let mut buf = Vec::new();
            write_points_csv(&sample, &mut buf)?;
            p.output.emit(std::str::from_utf8(&buf)?)?;
        }
        Command::Warnock(args) => {
            let points = if args.input.as_os_str() == "-" {
                read_points_csv(io::stdin().lock())?
            } else {
                let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
                read_points_csv(file)?
            };
            let value = l2_sq_warnock(&points)?;
            let text = match args.output.format(Format::Text) {
                Format::Json => format!("{}\n", json!({"value": value, "n": points.len(), "d": points.dim()})),
                Format::Csv => format!("n,d,l2_sq\n{},{},{value:.17e}\n", points.len(), points.dim()),
                Format::Text => format!("{value:.17e}\n"),
            };
            args.output.emit(&text)?;
        }
        Command::Gain(args) => {
            let report = total_gain(args.m)?;
            let text = match args.output.format(Format::Csv) {
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&report)?),
                _ => {
                    let mut out = String::from("z1,z2,in_T,delta\n");
                    for s in &report.sites {
                        out.push_str(&format!("{},{},{},{:.17e}\n", s.z1, s.z2, u8::from(s.in_region), s.delta));
                    }
                    out.push_str(&format!(
                        "\ntotal,{:.17e}\nimproving_sites,{}\nupper_bound,{:.17e}\nlower_bound,{:.17e}\nlower_bound_sites,{}\n",
                        report.total,
                        report.improving_sites().count(),
                        report.upper_bound,
                        report.lower_bound,
                        report.lower_bound_sites
                    ));
                    out
                }
            };
            args.output.emit(&text)?;
        }
        Command::Tmap(args) => {
            let m = args.m;
            if m < 2 {
                bail!(stratdisc_core::Error::InvalidParameter(format!("tmap needs m ≥ 2, got {m}")));
            }
            // Rows are j (vertical offset), columns i (horizontal offset).
            let mut out = String::from("j");
            for i in 0..m - 1 {
                out.push_str(&format!(",{i}"));
            }
            out.push('\n');
            for j in 0..m {
                out.push_str(&j.to_string());
                for i in 0..m - 1 {
                    out.push_str(if in_improvement_region(m, PairPosition::new(i, j)) { ",1" } else { ",0" });
                }
                out.push('\n');
            }
            args.output.emit(&out)?;
        }
        Command::Table(args) => {
            let report = run_table(args.which, args.reps(), args.seed, args.workers)?;
            let text = match args.output.format(Format::Text) {
                Format::Json => format!(
                    "{}\n",
                    serde_json::to_string_pretty(&json!({"version": VERSION, "config": args.config(), "report": report}))?
                ),
                Format::Csv => args.header("table") + &report.to_csv(),
                Format::Text => args.header("table") + &report.to_text(),
            };
            args.output.emit(&text)?;
            if args.check {
                let failures = report.failures();
                for failure in &failures {
                    eprintln!("check failed: {failure}");
                }
                if !failures.is_empty() {
                    return Ok(ExitCode::from(EXIT_CHECK));
                }
            }
        }
        Command::Predict(args) => {
            let report = predict_vs_table(args.which, args.reps(), args.seed, args.workers)?;
            let text = match args.output.format(Format::Text) {
                Format::Json => format!(
                    "{}\n",
                    serde_json::to_string_pretty(&json!({"version": VERSION, "config": args.config(), "report": report}))?
                ),
                Format::Csv => args.header("predict") + &report.to_csv(),
                Format::Text => args.header("predict") + &report.to_text(),
            };
            args.output.emit(&text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
