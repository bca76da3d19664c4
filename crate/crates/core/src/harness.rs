//! Experiment orchestration: flat key=value configs, deterministic parallel
//! fan-out over instances and CSV emission.
//!
//! Every instance derives its randomness from `(seed, coordinates, index)`
//! and per-instance results are collected in index order, so the CSV bytes
//! do not depend on the worker count.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    discrete_bounds, kth_moment_largen, porter_thomas_b, pq_overlap_finite, return_prob_exact, Spectrum,
};
use crate::brownian::{
    estimate_overlap, trajectory_probabilities, BrownianConfig, Variant, MIN_TRAJECTORIES,
};
use crate::circuit::{
    derive_seed, gen_all_to_all, gen_brick1d, Architecture, BitString, Circuit, SeedSpec, StreamTag,
};
use crate::error::{Error, Result};
use crate::spoofer::{
    block_partition, greedy_partition, spoof_distribution, truncate, Partition, PartitionStrategy,
};
use crate::statevector::{ProbTable, StateVector};
use crate::xeb::{
    aggregate, porter_thomas_fit, quantum_fourth_stat, spoof_fourth_stat, write_stat_rows, xeb_exact,
    EnsembleStat, StatRow, XebConvention,
};

/// Default cap on projected peak memory.
pub const DEFAULT_MEMORY_CAP_MIB: u64 = 4096;
/// Largest register for the discrete-circuit experiments unless raised.
pub const DEFAULT_MAX_N: usize = 20;

const NOT_APPLICABLE: &str = "none";

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Experiment {
    Fig1,
    Fig2,
    XebScores,
    BrownianValidation,
    PorterThomas,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Fig1,
        Experiment::Fig2,
        Experiment::XebScores,
        Experiment::BrownianValidation,
        Experiment::PorterThomas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::XebScores => "xeb-scores",
            Experiment::BrownianValidation => "brownian-validation",
            Experiment::PorterThomas => "porter-thomas",
        }
    }

    /// Statistic names accepted in the `stats` list, in emission order.
    pub fn known_stats(self) -> &'static [&'static str] {
        match self {
            Experiment::Fig1 | Experiment::Fig2 => &["quantum_fourth", "spoof_fourth"],
            Experiment::XebScores => &["xeb_quantum", "xeb_spoof", "xeb_uniform", "bounds"],
            Experiment::BrownianValidation => &["k1", "k2", "overlap"],
            Experiment::PorterThomas => &["discrete", "brownian"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Everything an experiment run needs. Fields that an experiment does not
/// use are ignored by it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub architecture: Architecture,
    pub n_values: Vec<usize>,
    pub depths: Vec<usize>,
    pub times: Vec<f64>,
    pub instances: usize,
    pub partitions: Vec<PartitionStrategy>,
    pub stats: Vec<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Raw per-instance values (Porter–Thomas only).
    pub samples_out: Option<PathBuf>,
    pub workers: usize,
    pub memory_cap_mib: u64,
    pub max_n: usize,
    pub coupling: f64,
    pub dt: f64,
    pub trajectories: usize,
    pub variant: Variant,
    pub convention: XebConvention,
    /// Register sizes for the Brownian half of the Porter–Thomas experiment.
    pub brownian_n: Vec<usize>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            architecture: Architecture::AllToAll,
            n_values: vec![16],
            depths: vec![5, 6, 7, 8],
            times: vec![0.1, 0.3],
            instances: 200,
            partitions: vec![PartitionStrategy::Greedy],
            stats: experiment.known_stats().iter().map(|s| s.to_string()).collect(),
            seed: 0,
            out: None,
            samples_out: None,
            workers: std::thread::available_parallelism().map_or(1, |w| w.get()),
            memory_cap_mib: DEFAULT_MEMORY_CAP_MIB,
            max_n: DEFAULT_MAX_N,
            coupling: 1.0,
            dt: 1e-3,
            trajectories: 10_000,
            variant: Variant::Full,
            convention: XebConvention::Plain,
            brownian_n: vec![8],
        };
        match experiment {
            Experiment::Fig1 => {}
            Experiment::Fig2 => {
                c.architecture = Architecture::Brick1D { periodic: true };
                c.partitions = [5, 10, 15].map(|size| PartitionStrategy::Block { size }).to_vec();
            }
            Experiment::XebScores => {
                c.depths = vec![3];
                c.instances = 500;
            }
            Experiment::BrownianValidation => {
                c.n_values = vec![2, 4, 6];
                c.stats = vec!["k1".into()];
            }
            Experiment::PorterThomas => {
                c.n_values = vec![12];
                c.depths = vec![30];
                c.times = vec![0.2];
                c.instances = 2000;
                c.trajectories = 2000;
            }
        }
        c
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// skipped; `experiment` must be present and selects the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let experiment = pairs
            .iter()
            .find(|(_, k, _)| k == "experiment")
            .ok_or_else(|| Error::Config("missing key \"experiment\"".into()))?
            .2
            .parse()?;
        let mut config = Self::defaults(experiment);
        for (line, k, v) in &pairs {
            config.set(k, v).map_err(|e| Error::Config(format!("line {line}: {}", config_msg(e))))?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key; used for both file entries and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {
                let e: Experiment = value.parse()?;
                if e != self.experiment {
                    return Err(Error::Config(format!(
                        "experiment is {}, cannot change it to {e}",
                        self.experiment
                    )));
                }
            }
            "architecture" => self.architecture = value.parse()?,
            "n" => self.n_values = parse_usize_list(value)?,
            "depth" => self.depths = parse_usize_list(value)?,
            "T" => self.times = parse_float_list(value)?,
            "instances" => self.instances = parse_scalar(key, value)?,
            "partition" => self.partitions = split_list(value).map(str::parse).collect::<Result<_>>()?,
            "stats" => self.stats = split_list(value).map(String::from).collect(),
            "seed" => self.seed = parse_scalar(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "samples_out" => self.samples_out = Some(PathBuf::from(value)),
            "workers" => self.workers = parse_scalar(key, value)?,
            "memory_cap_mib" => self.memory_cap_mib = parse_scalar(key, value)?,
            "max_n" => self.max_n = parse_scalar(key, value)?,
            "J" => self.coupling = parse_scalar(key, value)?,
            "dt" => self.dt = parse_scalar(key, value)?,
            "trajectories" => self.trajectories = parse_scalar(key, value)?,
            "variant" => self.variant = value.parse()?,
            "convention" => self.convention = value.parse()?,
            "brownian_n" => self.brownian_n = parse_usize_list(value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Config(config_msg(e)))?;
        }
        Ok(())
    }

    /// Structural checks, then the resource guard.
    pub fn validate(&self) -> Result<()> {
        let e = self.experiment;
        if self.n_values.is_empty() {
            return Err(Error::Config("n range is empty".into()));
        }
        let uses_depth = matches!(e, Experiment::Fig1 | Experiment::Fig2 | Experiment::XebScores)
            || (e == Experiment::PorterThomas && self.wants("discrete"));
        if uses_depth && self.depths.is_empty() {
            return Err(Error::Config("depth range is empty".into()));
        }
        let uses_time =
            e == Experiment::BrownianValidation || (e == Experiment::PorterThomas && self.wants("brownian"));
        if uses_time && self.times.is_empty() {
            return Err(Error::Config("T range is empty".into()));
        }
        if self.instances < 2 {
            return Err(Error::Config(format!("instances must be at least 2, got {}", self.instances)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.stats.is_empty() {
            return Err(Error::Config("stats list is empty".into()));
        }
        for s in &self.stats {
            if !e.known_stats().contains(&s.as_str()) {
                return Err(Error::Config(format!(
                    "statistic {s:?} is not produced by {e} (known: {})",
                    e.known_stats().join(",")
                )));
            }
        }
        match e {
            Experiment::Fig1 | Experiment::Fig2 | Experiment::XebScores => {
                if e == Experiment::Fig1 && self.architecture != Architecture::AllToAll {
                    return Err(Error::Config("fig1 needs the all-to-all architecture".into()));
                }
                if self.architecture == Architecture::Custom {
                    return Err(Error::Config("cannot generate custom-architecture circuits".into()));
                }
                if self.partitions.is_empty() {
                    return Err(Error::Config("partition list is empty".into()));
                }
                if self.partitions.contains(&PartitionStrategy::Custom) {
                    return Err(Error::Config("custom partitions are not generated by the harness".into()));
                }
            }
            Experiment::BrownianValidation => {
                if self.trajectories < MIN_TRAJECTORIES {
                    return Err(Error::Config(format!(
                        "trajectories must be at least {MIN_TRAJECTORIES}, got {}",
                        self.trajectories
                    )));
                }
                for &n in &self.n_values {
                    for &t in &self.times {
                        self.brownian(n, t, 0).validate()?;
                    }
                }
                if self.wants("overlap") && !matches!(self.variant, Variant::Disjoint { .. }) {
                    return Err(Error::Config("the overlap statistic needs variant = disjoint:K".into()));
                }
                if self.wants("k1") && matches!(self.variant, Variant::OneDesign { .. }) {
                    return Err(Error::Config(
                        "no exact first-moment reference for the onedesign variant".into(),
                    ));
                }
            }
            Experiment::PorterThomas => {
                if self.architecture == Architecture::Custom {
                    return Err(Error::Config("cannot generate custom-architecture circuits".into()));
                }
                if self.wants("brownian") {
                    if self.brownian_n.is_empty() {
                        return Err(Error::Config("brownian_n range is empty".into()));
                    }
                    for &n in &self.brownian_n {
                        for &t in &self.times {
                            self.brownian(n, t, 0).validate()?;
                        }
                    }
                }
            }
        }
        if let Some(out) = &self.out {
            check_writable(out)?;
        }
        if let Some(out) = &self.samples_out {
            check_writable(out)?;
        }
        self.check_resources()
    }

    fn wants(&self, stat: &str) -> bool {
        self.stats.iter().any(|s| s == stat)
    }

    fn discrete_n(&self) -> Vec<usize> {
        match self.experiment {
            Experiment::BrownianValidation => Vec::new(),
            Experiment::PorterThomas if !self.wants("discrete") => Vec::new(),
            _ => self.n_values.clone(),
        }
    }

    /// Projected peak memory in bytes: per-worker dense tables plus the
    /// per-instance value buffers.
    pub fn projected_memory_bytes(&self) -> u128 {
        let workers = self.workers as u128;
        let table = |n: usize| 1u128 << n.min(100);
        let discrete = self.discrete_n().into_iter().max().map_or(0, |n| workers * 32 * table(n));
        let brownian_n = match self.experiment {
            Experiment::BrownianValidation => self.n_values.iter().max().copied(),
            Experiment::PorterThomas if self.wants("brownian") => self.brownian_n.iter().max().copied(),
            _ => None,
        };
        let brownian = brownian_n.map_or(0, |n| workers * 32 * table(n) + 8 * self.trajectories as u128);
        discrete.max(brownian) + 8 * self.instances as u128
    }

    fn check_resources(&self) -> Result<()> {
        if let Some(&n) = self.discrete_n().iter().max() {
            if n > self.max_n {
                return Err(Error::ResourceGuard(format!(
                    "n = {n} exceeds the desk cap max_n = {}",
                    self.max_n
                )));
            }
        }
        let need = self.projected_memory_bytes();
        let cap = self.memory_cap_mib as u128 * (1 << 20);
        if need > cap {
            return Err(Error::ResourceGuard(format!(
                "projected memory {} MiB exceeds the cap of {} MiB",
                need.div_ceil(1 << 20),
                self.memory_cap_mib
            )));
        }
        Ok(())
    }

    fn brownian(&self, n: usize, t: f64, seed: u64) -> BrownianConfig {
        BrownianConfig {
            n,
            j: self.coupling,
            t,
            dt: self.dt,
            variant: self.variant,
            trajectories: self.trajectories,
            seed,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.workers)))
    }
}

fn config_msg(e: Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidParameter(m) => m,
        other => other.to_string(),
    }
}

fn check_writable(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Error::Config(format!("output directory {} does not exist", parent.display())));
    }
    if path.is_dir() {
        return Err(Error::Config(format!("output path {} is a directory", path.display())));
    }
    Ok(())
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

/// Comma-separated integers and inclusive `a-b` ranges, e.g. `5-8,10`.
pub fn parse_usize_list(value: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad integer list {value:?}"));
    let mut out = Vec::new();
    for item in split_list(value) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) =
                    (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

pub fn parse_float_list(value: &str) -> Result<Vec<f64>> {
    split_list(value)
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad number list {value:?}"))))
        .collect()
}

// ---------------------------------------------------------------------------
// Per-instance pipelines

fn arch_code(arch: Architecture) -> u64 {
    match arch {
        Architecture::AllToAll => 0,
        Architecture::Brick1D { periodic: true } => 1,
        Architecture::Brick1D { periodic: false } => 2,
        Architecture::Custom => 3,
    }
}

/// Instance `index` of the `(architecture, n, d)` ensemble.
pub fn ensemble_circuit(
    arch: Architecture,
    n: usize,
    depth: usize,
    seed: u64,
    index: usize,
) -> Result<Circuit> {
    let base = derive_seed(seed, &[arch_code(arch), n as u64, depth as u64]);
    let spec = SeedSpec::new(base, index as u64, StreamTag::Gates);
    match arch {
        Architecture::AllToAll => gen_all_to_all(n, depth, spec),
        Architecture::Brick1D { periodic } => gen_brick1d(n, depth, periodic, spec),
        Architecture::Custom => Err(Error::Config("cannot generate custom-architecture circuits".into())),
    }
}

pub fn make_partition(circuit: &Circuit, strategy: PartitionStrategy) -> Result<Partition> {
    match strategy {
        PartitionStrategy::Greedy => Ok(greedy_partition(circuit)),
        PartitionStrategy::Block { size } => block_partition(circuit.n(), size),
        PartitionStrategy::Custom => Err(Error::Config("custom partitions must be supplied".into())),
    }
}

/// The spoofer's full output table for `circuit` under `strategy`.
pub fn spoof_table(circuit: &Circuit, strategy: PartitionStrategy) -> Result<ProbTable> {
    let partition = make_partition(circuit, strategy)?;
    spoof_distribution(&truncate(circuit, &partition)?)?.full_table()
}

/// Runs `f` on every instance index inside the worker pool; results come
/// back in index order.
fn fan_out<T: Send>(
    pool: &rayon::ThreadPool,
    instances: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    pool.install(|| (0..instances).into_par_iter().map(f).collect())
}

fn stat_row(
    stat: &EnsembleStat,
    arch: Architecture,
    n: usize,
    depth_or_t: f64,
    partition: &str,
    convention: &str,
) -> StatRow {
    StatRow {
        stat_name: stat.name.clone(),
        architecture: arch.to_string(),
        n,
        depth_or_t,
        partition: partition.to_string(),
        instances: stat.count(),
        mean: stat.mean,
        stderr: stat.stderr,
        convention: convention.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Fourth-moment experiments

/// Per-instance fourth-moment statistics: the quantum value, then one
/// spoofer value per partition strategy.
fn fourth_moment_rows(config: &ExperimentConfig) -> Result<Vec<StatRow>> {
    config.validate()?;
    let pool = config.pool()?;
    let arch = config.architecture;
    let mut rows = Vec::new();
    for &n in &config.n_values {
        for &d in &config.depths {
            let per_instance = fan_out(&pool, config.instances, |i| {
                let circuit = ensemble_circuit(arch, n, d, config.seed, i)?;
                let q = StateVector::run_circuit(&circuit)?.output_distribution();
                let spoof = if config.wants("spoof_fourth") {
                    config
                        .partitions
                        .iter()
                        .map(|&s| spoof_fourth_stat(&q, &spoof_table(&circuit, s)?))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                Ok((quantum_fourth_stat(&q), spoof))
            })?;
            if config.wants("quantum_fourth") {
                let values = per_instance.iter().map(|(v, _)| *v).collect();
                let stat = aggregate("quantum_fourth", values)?;
                rows.push(stat_row(&stat, arch, n, d as f64, NOT_APPLICABLE, NOT_APPLICABLE));
            }
            if config.wants("spoof_fourth") {
                for (p, strategy) in config.partitions.iter().enumerate() {
                    let values = per_instance.iter().map(|(_, s)| s[p]).collect();
                    let stat = aggregate("spoof_fourth", values)?;
                    rows.push(stat_row(&stat, arch, n, d as f64, &strategy.to_string(), NOT_APPLICABLE));
                }
            }
        }
    }
    Ok(rows)
}

/// Quantum and greedy-spoofer fourth-moment statistics on all-to-all circuits.
pub fn run_fig1(config: &ExperimentConfig) -> Result<Vec<StatRow>> {
    expect_experiment(config, Experiment::Fig1)?;
    fourth_moment_rows(config)
}

/// The same statistics on brickwork circuits with block partitions.
pub fn run_fig2(config: &ExperimentConfig) -> Result<Vec<StatRow>> {
    expect_experiment(config, Experiment::Fig2)?;
    fourth_moment_rows(config)
}

fn expect_experiment(config: &ExperimentConfig, e: Experiment) -> Result<()> {
    if config.experiment != e {
        return Err(Error::Config(format!("config is for {}, not {e}", config.experiment)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// XEB scores

/// Instance means of `XEB(U,U)`, `XEB(U,A)` and the uniform control, plus
/// the analytic lower bounds as rows with zero instances.
pub fn run_xeb_scores(config: &ExperimentConfig) -> Result<Vec<StatRow>> {
    expect_experiment(config, Experiment::XebScores)?;
    config.validate()?;
    let pool = config.pool()?;
    let arch = config.architecture;
    let conv = config.convention;
    let conv_name = conv.to_string();
    let mut rows = Vec::new();
    for &n in &config.n_values {
        let uniform = ProbTable::uniform(n)?;
        for &d in &config.depths {
            let per_instance = fan_out(&pool, config.instances, |i| {
                let circuit = ensemble_circuit(arch, n, d, config.seed, i)?;
                let q = StateVector::run_circuit(&circuit)?.output_distribution();
                let spoof = if config.wants("xeb_spoof") {
                    config
                        .partitions
                        .iter()
                        .map(|&s| xeb_exact(&q, &spoof_table(&circuit, s)?, conv))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                Ok((xeb_exact(&q, &q, conv)?, spoof, xeb_exact(&q, &uniform, conv)?))
            })?;
            if config.wants("xeb_quantum") {
                let stat = aggregate("xeb_quantum", per_instance.iter().map(|r| r.0).collect())?;
                rows.push(stat_row(&stat, arch, n, d as f64, NOT_APPLICABLE, &conv_name));
            }
            if config.wants("xeb_spoof") {
                for (p, strategy) in config.partitions.iter().enumerate() {
                    let stat = aggregate("xeb_spoof", per_instance.iter().map(|r| r.1[p]).collect())?;
                    rows.push(stat_row(&stat, arch, n, d as f64, &strategy.to_string(), &conv_name));
                }
            }
            if config.wants("xeb_uniform") {
                let stat = aggregate("xeb_uniform", per_instance.iter().map(|r| r.2).collect())?;
                rows.push(stat_row(&stat, arch, n, d as f64, "uniform", &conv_name));
            }
            if config.wants("bounds") {
                let b = discrete_bounds(n, d as u32);
                for (name, value, partition) in [
                    ("bound_quantum_lower", b.quantum_lower, NOT_APPLICABLE),
                    ("bound_quantum_lower_alt", b.quantum_lower_alt, NOT_APPLICABLE),
                    ("bound_spoofer_lower", b.spoofer_lower, "greedy"),
                ] {
                    rows.push(StatRow {
                        stat_name: name.into(),
                        architecture: arch.to_string(),
                        n,
                        depth_or_t: d as f64,
                        partition: partition.into(),
                        instances: 0,
                        mean: value,
                        stderr: 0.0,
                        convention: XebConvention::Plain.to_string(),
                    });
                }
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Brownian validation

pub const BROWNIAN_COLUMNS: [&str; 12] = [
    "stat_name",
    "n",
    "J",
    "T",
    "dt",
    "variant",
    "trajectories",
    "estimate",
    "stderr",
    "analytic",
    "z_score",
    "pass",
];

/// Monte Carlo estimate against its analytic reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianRow {
    pub stat_name: String,
    pub n: usize,
    #[serde(rename = "J")]
    pub coupling: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    pub variant: String,
    pub trajectories: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Exact first moment of `q(0^n)` for the full or disjoint variant. Each
/// disjoint block is itself a full model on `M` qubits with coupling
/// rescaled by `A² M / n`.
fn first_moment_reference(config: &BrownianConfig) -> f64 {
    let jt = config.j * config.t;
    match config.variant {
        Variant::Disjoint { subsets, amplification } => {
            let m = config.n / subsets;
            let block_jt = amplification * amplification * jt * m as f64 / config.n as f64;
            return_prob_exact(m, block_jt).powi(subsets as i32)
        }
        _ => return_prob_exact(config.n, jt),
    }
}

fn brownian_row(
    config: &BrownianConfig,
    name: &str,
    stat: &EnsembleStat,
    analytic: f64,
    tol: f64,
) -> BrownianRow {
    let diff = stat.mean - analytic;
    BrownianRow {
        stat_name: name.into(),
        n: config.n,
        coupling: config.j,
        t: config.t,
        dt: config.dt,
        variant: config.variant.to_string(),
        trajectories: stat.count(),
        estimate: stat.mean,
        stderr: stat.stderr,
        analytic,
        z_score: if stat.stderr > 0.0 { diff / stat.stderr } else { 0.0 },
        pass: diff.abs() <= tol,
    }
}

/// `E[q(0^n)]`, `E[q(0^n)²]` and the spoofer overlap against their analytic
/// references. `k1` and `overlap` pass within 3 SE; `k2` compares with a
/// large-n formula and allows `max(3 SE, 5/n relative)`.
pub fn run_brownian_validation(config: &ExperimentConfig) -> Result<Vec<BrownianRow>> {
    expect_experiment(config, Experiment::BrownianValidation)?;
    config.validate()?;
    let pool = config.pool()?;
    let mut rows = Vec::new();
    for &n in &config.n_values {
        for &t in &config.times {
            let seed = derive_seed(config.seed, &[n as u64, t.to_bits()]);
            let bc = config.brownian(n, t, seed);
            let target = BitString::zeros(n);
            if config.wants("k1") || config.wants("k2") {
                let probs = pool.install(|| trajectory_probabilities(&bc, target))?;
                if config.wants("k1") {
                    let stat = aggregate("k1", probs.clone())?;
                    let analytic = first_moment_reference(&bc);
                    rows.push(brownian_row(&bc, "k1", &stat, analytic, 3.0 * stat.stderr));
                }
                if config.wants("k2") {
                    let stat = aggregate("k2", probs.iter().map(|p| p * p).collect())?;
                    let analytic = kth_moment_largen(n, bc.j * t, 2, 0);
                    let tol = (3.0 * stat.stderr).max(5.0 / n as f64 * analytic.abs());
                    rows.push(brownian_row(&bc, "k2", &stat, analytic, tol));
                }
            }
            if config.wants("overlap") {
                let Variant::Disjoint { subsets, amplification } = bc.variant else {
                    unreachable!("checked in validate")
                };
                let stat = pool.install(|| estimate_overlap(&bc, target))?;
                let analytic =
                    pq_overlap_finite(n, bc.j * t, amplification, &vec![0; subsets], Spectrum::Exact);
                rows.push(brownian_row(&bc, "overlap", &stat, analytic, 3.0 * stat.stderr));
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Porter–Thomas

pub const PORTER_THOMAS_COLUMNS: [&str; 11] = [
    "source",
    "n",
    "depth_or_T",
    "J",
    "instances",
    "rate",
    "rate_over_dim",
    "ks_statistic",
    "p_value",
    "analytic_rate",
    "reject_1pct",
];

/// Exponential fit to the return probabilities of one ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PorterThomasRow {
    /// Architecture token, or `brownian`.
    pub source: String,
    pub n: usize,
    #[serde(rename = "depth_or_T")]
    pub depth_or_t: f64,
    /// Coupling scale; empty for discrete circuits.
    #[serde(rename = "J")]
    pub coupling: Option<f64>,
    pub instances: usize,
    pub rate: f64,
    pub rate_over_dim: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub analytic_rate: f64,
    pub reject_1pct: bool,
}

pub const SAMPLE_COLUMNS: [&str; 5] = ["source", "n", "depth_or_T", "instance", "p"];

/// One return probability `p(0^n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub source: String,
    pub n: usize,
    #[serde(rename = "depth_or_T")]
    pub depth_or_t: f64,
    pub instance: usize,
    pub p: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PorterThomasReport {
    pub fits: Vec<PorterThomasRow>,
    pub samples: Vec<SampleRow>,
}

impl PorterThomasReport {
    fn push(
        &mut self,
        source: &str,
        n: usize,
        depth_or_t: f64,
        coupling: Option<f64>,
        values: Vec<f64>,
        analytic_rate: f64,
    ) -> Result<()> {
        let fit = porter_thomas_fit(&values)?;
        self.fits.push(PorterThomasRow {
            source: source.into(),
            n,
            depth_or_t,
            coupling,
            instances: fit.count,
            rate: fit.rate,
            rate_over_dim: fit.rate / (n as f64).exp2(),
            ks_statistic: fit.ks_statistic,
            p_value: fit.p_value,
            analytic_rate,
            reject_1pct: fit.p_value < 0.01,
        });
        self.samples.extend(values.into_iter().enumerate().map(|(instance, p)| SampleRow {
            source: source.into(),
            n,
            depth_or_t,
            instance,
            p,
        }));
        Ok(())
    }
}

/// Exponential fits to `p(0^n)` over deep discrete circuits (reference rate
/// `2^n`) and over Brownian trajectories (reference rate from the
/// effective-dimension formula).
pub fn run_porter_thomas(config: &ExperimentConfig) -> Result<PorterThomasReport> {
    expect_experiment(config, Experiment::PorterThomas)?;
    config.validate()?;
    let pool = config.pool()?;
    let mut report = PorterThomasReport::default();
    if config.wants("discrete") {
        let arch = config.architecture;
        for &n in &config.n_values {
            for &d in &config.depths {
                let target = BitString::zeros(n);
                let values = fan_out(&pool, config.instances, |i| {
                    let circuit = ensemble_circuit(arch, n, d, config.seed, i)?;
                    Ok(StateVector::run_circuit(&circuit)?.probability(target))
                })?;
                report.push(&arch.to_string(), n, d as f64, None, values, (n as f64).exp2())?;
            }
        }
    }
    if config.wants("brownian") {
        for &n in &config.brownian_n {
            for &t in &config.times {
                let seed = derive_seed(config.seed, &[n as u64, t.to_bits()]);
                let bc = config.brownian(n, t, seed);
                let values = pool.install(|| trajectory_probabilities(&bc, BitString::zeros(n)))?;
                let analytic = porter_thomas_b(n, bc.j * t);
                report.push("brownian", n, t, Some(bc.j), values, analytic)?;
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Output

/// Rows produced by one experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Report {
    Stats(Vec<StatRow>),
    Brownian(Vec<BrownianRow>),
    PorterThomas(PorterThomasReport),
}

pub fn run(config: &ExperimentConfig) -> Result<Report> {
    Ok(match config.experiment {
        Experiment::Fig1 => Report::Stats(run_fig1(config)?),
        Experiment::Fig2 => Report::Stats(run_fig2(config)?),
        Experiment::XebScores => Report::Stats(run_xeb_scores(config)?),
        Experiment::BrownianValidation => Report::Brownian(run_brownian_validation(config)?),
        Experiment::PorterThomas => Report::PorterThomas(run_porter_thomas(config)?),
    })
}

fn write_rows<W: io::Write, T: Serialize>(writer: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: io::Read, T: for<'de> Deserialize<'de>>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(header.iter().copied()) {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header {headers:?}") });
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub fn write_brownian_rows<W: io::Write>(writer: W, rows: &[BrownianRow]) -> Result<()> {
    write_rows(writer, &BROWNIAN_COLUMNS, rows)
}

pub fn read_brownian_rows<R: io::Read>(reader: R) -> Result<Vec<BrownianRow>> {
    read_rows(reader, &BROWNIAN_COLUMNS)
}

pub fn write_porter_thomas_rows<W: io::Write>(writer: W, rows: &[PorterThomasRow]) -> Result<()> {
    write_rows(writer, &PORTER_THOMAS_COLUMNS, rows)
}

pub fn read_porter_thomas_rows<R: io::Read>(reader: R) -> Result<Vec<PorterThomasRow>> {
    read_rows(reader, &PORTER_THOMAS_COLUMNS)
}

pub fn write_sample_rows<W: io::Write>(writer: W, rows: &[SampleRow]) -> Result<()> {
    write_rows(writer, &SAMPLE_COLUMNS, rows)
}

pub fn read_sample_rows<R: io::Read>(reader: R) -> Result<Vec<SampleRow>> {
    read_rows(reader, &SAMPLE_COLUMNS)
}

impl Report {
    /// The main CSV as bytes.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match self {
            Report::Stats(rows) => write_stat_rows(&mut buf, rows)?,
            Report::Brownian(rows) => write_brownian_rows(&mut buf, rows)?,
            Report::PorterThomas(r) => write_porter_thomas_rows(&mut buf, &r.fits)?,
        }
        Ok(buf)
    }

    /// Writes the main CSV to `config.out` (stdout when unset) and, for
    /// Porter–Thomas, the raw values to `config.samples_out` when set.
    pub fn write(&self, config: &ExperimentConfig) -> Result<()> {
        let bytes = self.to_csv()?;
        match &config.out {
            Some(path) => fs::write(path, bytes)?,
            None => io::Write::write_all(&mut io::stdout().lock(), &bytes)?,
        }
        if let (Report::PorterThomas(r), Some(path)) = (self, &config.samples_out) {
            let mut buf = Vec::new();
            write_sample_rows(&mut buf, &r.samples)?;
            fs::write(path, buf)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            n_values: vec![6],
            depths: vec![3],
            instances: 8,
            workers: 2,
            ..ExperimentConfig::defaults(experiment)
        }
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_usize_list("5-8").unwrap(), vec![5, 6, 7, 8]);
        assert_eq!(parse_usize_list("16, 18,20-21").unwrap(), vec![16, 18, 20, 21]);
        assert!(parse_usize_list("8-5").is_err());
        assert!(parse_usize_list("x").is_err());
        assert_eq!(parse_float_list("0.1,0.3").unwrap(), vec![0.1, 0.3]);
    }

    #[test]
    fn parse_config_text() {
        let text = "# fig 1 at desk scale\nexperiment = fig1\nn = 10-12\ndepth=5,8\n\ninstances = 20 # small\nseed = 7\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.experiment, Experiment::Fig1);
        assert_eq!(c.n_values, vec![10, 11, 12]);
        assert_eq!(c.depths, vec![5, 8]);
        assert_eq!(c.instances, 20);
        assert_eq!(c.seed, 7);
        assert_eq!(c.partitions, vec![PartitionStrategy::Greedy]);

        assert!(ExperimentConfig::parse("n = 4").is_err());
        let err = ExperimentConfig::parse("experiment = fig1\ncolour = red").unwrap_err();
        assert_eq!(err.to_string(), "configuration error: line 2: unknown key \"colour\"");
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::defaults(Experiment::Fig2);
        c.apply_overrides(["partition=block4,block8", "workers=3"]).unwrap();
        assert_eq!(c.partitions.len(), 2);
        assert_eq!(c.workers, 3);
        assert!(c.apply_overrides(["experiment=fig1"]).is_err());
        assert!(c.apply_overrides(["workers"]).is_err());
    }

    #[test]
    fn validation() {
        let ok = small(Experiment::Fig1);
        assert!(ok.validate().is_ok());
        assert!(ExperimentConfig { instances: 1, ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { depths: vec![], ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { stats: vec!["k1".into()], ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { architecture: Architecture::Brick1D { periodic: true }, ..ok.clone() }
            .validate()
            .is_err());
        let missing = PathBuf::from("/definitely/not/here/out.csv");
        assert!(matches!(
            ExperimentConfig { out: Some(missing), ..ok.clone() }.validate(),
            Err(Error::Config(_))
        ));
        let bv = small(Experiment::BrownianValidation);
        assert!(ExperimentConfig { stats: vec!["overlap".into()], ..bv.clone() }.validate().is_err());
    }

    #[test]
    fn resource_guard_messages_are_deterministic() {
        let c = ExperimentConfig { n_values: vec![24], ..small(Experiment::Fig1) };
        let e = c.validate().unwrap_err();
        assert!(matches!(e, Error::ResourceGuard(_)));
        assert_eq!(e.to_string(), "resource guard: n = 24 exceeds the desk cap max_n = 20");

        let c = ExperimentConfig {
            n_values: vec![20],
            workers: 8,
            memory_cap_mib: 64,
            ..small(Experiment::Fig1)
        };
        assert_eq!(
            c.validate().unwrap_err().to_string(),
            "resource guard: projected memory 257 MiB exceeds the cap of 64 MiB"
        );
    }

    #[test]
    fn fig1_rows_and_worker_independence() {
        let c = small(Experiment::Fig1);
        let rows = run_fig1(&c).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].stat_name, "quantum_fourth");
        assert_eq!(rows[1].partition, "greedy");
        let one = Report::Stats(run_fig1(&ExperimentConfig { workers: 1, ..c.clone() }).unwrap());
        assert_eq!(one.to_csv().unwrap(), Report::Stats(rows).to_csv().unwrap());
    }

    #[test]
    fn whole_register_block_matches_quantum() {
        let c = ExperimentConfig {
            partitions: vec![PartitionStrategy::Block { size: 6 }],
            ..small(Experiment::Fig2)
        };
        let rows = run_fig2(&c).unwrap();
        assert_eq!(rows[0].mean, rows[1].mean);
    }

    #[test]
    fn xeb_rows() {
        let rows = run_xeb_scores(&small(Experiment::XebScores)).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.stat_name.as_str()).collect();
        assert_eq!(
            names,
            [
                "xeb_quantum",
                "xeb_spoof",
                "xeb_uniform",
                "bound_quantum_lower",
                "bound_quantum_lower_alt",
                "bound_spoofer_lower"
            ]
        );
        assert!((rows[2].mean - 1.0).abs() <= 1e-12);
        assert!(rows[0].mean > 1.0);
    }

    #[test]
    fn disjoint_first_moment_reference_factorises() {
        let bc = BrownianConfig { variant: Variant::disjoint(2), ..BrownianConfig::new(6, 0.4) };
        let direct =
            pq_overlap_finite(6, 0.4, 2f64.sqrt(), &[0, 0], Spectrum::Exact) / return_prob_exact(6, 0.4);
        assert!((first_moment_reference(&bc) / direct - 1.0).abs() <= 1e-12);
        let full = BrownianConfig::new(6, 0.4);
        assert_eq!(first_moment_reference(&full), return_prob_exact(6, 0.4));
    }
}
