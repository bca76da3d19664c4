use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xeblab::analytic::{Formula, FormulaParams};
use xeblab::harness::{self, Experiment, ExperimentConfig};
use xeblab::spoofer::{spoof_distribution, truncate, Partition, PartitionStrategy};
use xeblab::{
    xeb_empirical, xeb_exact, Architecture, BitString, Circuit, Error, Result, SeedSpec, StateVector,
    StreamTag, XebConvention,
};

/// Largest register whose full probability table is written as CSV.
const MAX_TABLE_QUBITS: usize = 16;
/// Largest register the spoof summary simulates exactly for its XEB column.
const MAX_SUMMARY_QUBITS: usize = 20;

#[derive(Parser)]
#[command(
    name = "xeblab",
    version,
    about = "Random-circuit sampling, XEB spoofing and Brownian-circuit moments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one random circuit in the text format.
    Generate(GenerateArgs),
    /// Simulate a circuit; write its probability table or samples.
    Simulate(SimulateArgs),
    /// Run the disjoint-subsystem spoofer on a circuit.
    Spoof(SpoofArgs),
    /// Score samples against a circuit, or run the XEB ensemble experiment.
    Xeb(XebArgs),
    /// Fourth-moment statistics, all-to-all circuits with greedy partitions.
    Fig1(ExperimentArgs),
    /// Fourth-moment statistics, brickwork circuits with block partitions.
    Fig2(ExperimentArgs),
    /// Brownian Monte Carlo against the analytic references.
    Brownian(BrownianArgs),
    /// Exponential fits to return probabilities.
    PorterThomas(PorterThomasArgs),
    /// Evaluate a closed-form expression.
    Analytic(AnalyticArgs),
}

/// Flags shared by the ensemble experiments. Each one overrides the
/// matching config key.
#[derive(Args)]
struct Common {
    /// Qubit counts, e.g. `16` or `16-20` or `12,16`.
    #[arg(long)]
    n: Option<String>,
    /// Depths, same list syntax as `--n`.
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override, applied after everything else.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    depth: usize,
    /// all-to-all, brick1d-periodic or brick1d-open
    #[arg(long, default_value = "all-to-all")]
    arch: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance index within the seeded ensemble.
    #[arg(long, default_value_t = 0)]
    instance: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Circuit file written by `generate`.
    #[arg(long)]
    circuit: PathBuf,
    /// Draw this many bitstrings instead of writing the table.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpoofArgs {
    #[arg(long)]
    circuit: PathBuf,
    /// greedy or blockR
    #[arg(long, default_value = "greedy")]
    partition: String,
    /// Use this partition (one subset per line) instead of computing one.
    #[arg(long)]
    partition_in: Option<PathBuf>,
    /// Write the partition used.
    #[arg(long)]
    partition_out: Option<PathBuf>,
    /// Draw this many spoofed bitstrings instead of printing a summary.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct XebArgs {
    /// Circuit to score `--samples-file` against.
    #[arg(long, requires = "samples_file")]
    circuit: Option<PathBuf>,
    /// One bitstring per line, qubit 0 first.
    #[arg(long, requires = "circuit")]
    samples_file: Option<PathBuf>,
    /// plain or minus-one
    #[arg(long, default_value = "plain")]
    convention: String,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct BrownianArgs {
    #[arg(long)]
    n: Option<String>,
    #[arg(long = "J")]
    coupling: Option<f64>,
    /// Total times, comma separated.
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    /// full, disjoint:K[:A] or onedesign:MU
    #[arg(long)]
    variant: Option<String>,
    /// k1, k2 or overlap; comma separated for several.
    #[arg(long)]
    stat: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct PorterThomasArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Also write every return probability.
    #[arg(long)]
    samples_out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long)]
    formula: String,
    #[arg(long)]
    n: usize,
    /// Product of coupling and time.
    #[arg(long)]
    jt: f64,
    /// Moment order.
    #[arg(long, conflicts_with = "c")]
    k: Option<u32>,
    /// Overlap order; same slot as `--k`.
    #[arg(long)]
    c: Option<u32>,
    /// Number of subsets.
    #[arg(long = "K", default_value_t = 1)]
    subsets: usize,
    /// Hamming weight of the target bitstring.
    #[arg(long, default_value_t = 0)]
    hx: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceGuard(_) | Error::SubsetTooLarge { .. } | Error::UnsupportedQubitCount { .. } => 3,
        Error::Config(_) | Error::InvalidParameter(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Simulate(a) => simulate(a),
        Command::Spoof(a) => spoof(a),
        Command::Xeb(a) => xeb(a),
        Command::Fig1(a) => run_experiment(experiment_config(Experiment::Fig1, &a)?),
        Command::Fig2(a) => run_experiment(experiment_config(Experiment::Fig2, &a)?),
        Command::Brownian(a) => brownian(a),
        Command::PorterThomas(a) => {
            let mut config = experiment_config(Experiment::PorterThomas, &a.experiment)?;
            if let Some(p) = a.samples_out {
                config.samples_out = Some(p);
            }
            run_experiment(config)
        }
        Command::Analytic(a) => analytic(a),
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn read_circuit(path: &Path) -> Result<Circuit> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Circuit::from_text(&text)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let arch: Architecture = a.arch.parse()?;
    let circuit = harness::ensemble_circuit(arch, a.n, a.depth, a.seed, a.instance as usize)?;
    write_output(a.out.as_deref(), circuit.to_text().as_bytes())
}

fn bitstring_lines(samples: &[BitString]) -> Vec<u8> {
    samples.iter().map(|s| format!("{s}\n")).collect::<String>().into_bytes()
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let circuit = read_circuit(&a.circuit)?;
    let state = StateVector::run_circuit(&circuit)?;
    if let Some(m) = a.samples {
        let mut rng = SeedSpec::new(a.seed, 0, StreamTag::Measurement).rng();
        return write_output(a.out.as_deref(), &bitstring_lines(&state.sample_bitstrings(m, &mut rng)));
    }
    let n = circuit.n();
    if n > MAX_TABLE_QUBITS {
        return Err(Error::ResourceGuard(format!(
            "probability tables are written for at most {MAX_TABLE_QUBITS} qubits, got {n}"
        )));
    }
    let table = state.output_distribution();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bitstring", "p"])?;
    for (i, p) in table.probs().iter().enumerate() {
        let x = BitString::new(n, i as u64)?;
        w.write_record([x.to_string(), format!("{p:?}")])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_output(a.out.as_deref(), &bytes)
}

fn spoof(a: SpoofArgs) -> Result<()> {
    let circuit = read_circuit(&a.circuit)?;
    let partition = match &a.partition_in {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let p = Partition::from_text(&text)?;
            if p.n() != circuit.n() {
                return Err(Error::DimensionMismatch { left: p.n(), right: circuit.n() });
            }
            p
        }
        None => harness::make_partition(&circuit, a.partition.parse::<PartitionStrategy>()?)?,
    };
    if let Some(path) = &a.partition_out {
        fs::write(path, partition.to_text())?;
    }
    let disjoint = truncate(&circuit, &partition)?;
    let dist = spoof_distribution(&disjoint)?;
    if let Some(m) = a.samples {
        let sampler = dist.sampler();
        let mut rng = SeedSpec::new(a.seed, 0, StreamTag::Measurement).rng();
        let samples: Vec<_> = (0..m).map(|_| sampler.sample(&mut rng)).collect();
        return write_output(a.out.as_deref(), &bitstring_lines(&samples));
    }
    let mut summary = format!(
        "strategy {}\nsubsets {}\nlargest_subset {}\nremoved_gates {}\nkept_gates {}\n",
        partition.strategy(),
        partition.k(),
        partition.largest_subset(),
        disjoint.removed_gates(),
        disjoint.kept_gates()
    );
    if circuit.n() <= MAX_SUMMARY_QUBITS {
        let q = StateVector::run_circuit(&circuit)?.output_distribution();
        let score = xeb_exact(&q, &dist.full_table()?, XebConvention::Plain)?;
        summary.push_str(&format!("xeb {score:?}\n"));
    }
    write_output(a.out.as_deref(), summary.as_bytes())
}

fn xeb(a: XebArgs) -> Result<()> {
    let convention: XebConvention = a.convention.parse()?;
    if let (Some(circuit), Some(samples)) = (&a.circuit, &a.samples_file) {
        let circuit = read_circuit(circuit)?;
        let text = fs::read_to_string(samples)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", samples.display())))?;
        let samples = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<BitString>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(s) = samples.iter().find(|s| s.n() != circuit.n()) {
            return Err(Error::DimensionMismatch { left: s.n(), right: circuit.n() });
        }
        let q = StateVector::run_circuit(&circuit)?.output_distribution();
        let score = xeb_empirical(&q, &samples, convention)?;
        return write_output(a.experiment.common.out.as_deref(), format!("{score:?}\n").as_bytes());
    }
    let mut config = experiment_config(Experiment::XebScores, &a.experiment)?;
    config.convention = convention;
    run_experiment(config)
}

fn brownian(a: BrownianArgs) -> Result<()> {
    let mut config = base_config(Experiment::BrownianValidation, a.config.as_deref())?;
    let mut overrides = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push(format!("{k}={v}"));
        }
    };
    push("n", a.n);
    push("J", a.coupling.map(|v| v.to_string()));
    push("T", a.t);
    push("dt", a.dt.map(|v| v.to_string()));
    push("trajectories", a.trajectories.map(|v| v.to_string()));
    push("variant", a.variant);
    push("stats", a.stat);
    push("seed", a.seed.map(|v| v.to_string()));
    push("workers", a.workers.map(|v| v.to_string()));
    push("out", a.out.map(|p| p.display().to_string()));
    overrides.extend(a.set);
    config.apply_overrides(overrides.iter().map(String::as_str))?;
    run_experiment(config)
}

fn analytic(a: AnalyticArgs) -> Result<()> {
    let formula: Formula = a.formula.parse()?;
    let params =
        FormulaParams { n: a.n, jt: a.jt, order: a.k.or(a.c).unwrap_or(1), subsets: a.subsets, hx: a.hx };
    let (value, ln) = formula.evaluate(&params)?;
    println!("value {value:e}");
    println!("ln {ln:?}");
    Ok(())
}

fn base_config(experiment: Experiment, path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::defaults(experiment),
    };
    if config.experiment != experiment {
        return Err(Error::Config(format!("config file is for {}, not {experiment}", config.experiment)));
    }
    Ok(config)
}

fn experiment_config(experiment: Experiment, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut config = base_config(experiment, a.config.as_deref())?;
    let c = &a.common;
    let mut overrides = Vec::new();
    if let Some(v) = &c.n {
        overrides.push(format!("n={v}"));
    }
    if let Some(v) = &c.depth {
        overrides.push(format!("depth={v}"));
    }
    if let Some(v) = c.instances {
        overrides.push(format!("instances={v}"));
    }
    if let Some(v) = c.seed {
        overrides.push(format!("seed={v}"));
    }
    if let Some(v) = c.workers {
        overrides.push(format!("workers={v}"));
    }
    if let Some(v) = &c.out {
        overrides.push(format!("out={}", v.display()));
    }
    overrides.extend(a.set.iter().cloned());
    config.apply_overrides(overrides.iter().map(String::as_str))?;
    Ok(config)
}

fn run_experiment(config: ExperimentConfig) -> Result<()> {
    harness::run(&config)?.write(&config)
}
