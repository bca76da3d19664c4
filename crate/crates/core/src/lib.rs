//! Random circuit sampling, a disjoint-subsystem spoofer, XEB statistics and
//! Brownian-circuit moment formulas with a Monte Carlo cross-check.

pub mod analytic;
pub mod brownian;
pub mod circuit;
pub mod error;
pub mod harness;
mod numeric;
pub mod spoofer;
pub mod statevector;
pub mod xeb;

pub use brownian::{BrownianConfig, Variant};
pub use circuit::{
    derive_seed, gen_all_to_all, gen_brick1d, haar_u4, Architecture, BitString, Circuit, Gate, Pauli,
    PauliPair, SeedSpec, StreamTag,
};
pub use error::{Error, Result};
pub use harness::{run, Experiment, ExperimentConfig, Report};
pub use spoofer::{
    block_partition, greedy_partition, greedy_partition_traced, spoof_distribution, spoof_sample, truncate,
    DisjointCircuit, GreedyTrace, Partition, PartitionStrategy, SpoofDistribution,
};
pub use statevector::{ProbTable, Sampler, StateVector};
pub use xeb::{
    aggregate, porter_thomas_fit, quantum_fourth_stat, sample_complexity_m, spoof_fourth_stat, xeb_empirical,
    xeb_exact, EnsembleStat, PorterThomasFit, StatRow, XebConvention,
};
