//! Trotterized Monte Carlo simulation of Brownian circuits.
//!
//! Each time step sweeps the pairs `j < k` and Pauli labels `α, β ∈ {x,y,z}`
//! in lexicographic order and applies `exp(-iθ σ_j^α σ_k^β)` with an
//! independent Gaussian angle of variance `J dt / n`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::circuit::{BitString, Pauli, PauliPair, SeedSpec, StreamTag};
use crate::error::{Error, Result};
use crate::statevector::StateVector;
use crate::xeb::{aggregate, EnsembleStat};

/// Largest register the trajectory simulator accepts.
pub const MAX_BROWNIAN_QUBITS: usize = 14;
/// Cap on time steps per trajectory.
pub const MAX_STEPS: usize = 10_000_000;
pub const MIN_TRAJECTORIES: usize = 100;

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Variant {
    /// All-to-all couplings.
    Full,
    /// Only couplings inside `subsets` contiguous equal blocks, amplified.
    Disjoint { subsets: usize, amplification: f64 },
    /// Full couplings plus single-qubit noise of variance `mu · dt` per
    /// qubit, label and step.
    OneDesign { mu: f64 },
}

impl Variant {
    /// Disjoint variant with the default amplification `sqrt(K)`.
    pub fn disjoint(subsets: usize) -> Self {
        Variant::Disjoint { subsets, amplification: (subsets as f64).sqrt() }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::Disjoint { subsets, amplification } => {
                if (amplification - (*subsets as f64).sqrt()).abs() < 1e-15 {
                    write!(f, "disjoint:{subsets}")
                } else {
                    write!(f, "disjoint:{subsets}:{amplification}")
                }
            }
            Variant::OneDesign { mu } => write!(f, "onedesign:{mu}"),
        }
    }
}

/// Parses `full`, `disjoint:K`, `disjoint:K:A` or `onedesign:MU`.
impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown Brownian variant {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["full"] => Ok(Variant::Full),
            ["disjoint", k] => Ok(Variant::disjoint(k.parse().map_err(|_| bad())?)),
            ["disjoint", k, a] => Ok(Variant::Disjoint {
                subsets: k.parse().map_err(|_| bad())?,
                amplification: a.parse().map_err(|_| bad())?,
            }),
            ["onedesign", mu] => Ok(Variant::OneDesign { mu: mu.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct BrownianConfig {
    pub n: usize,
    /// Coupling scale `J`.
    pub j: f64,
    /// Total evolution time `T`.
    pub t: f64,
    pub dt: f64,
    pub variant: Variant,
    pub trajectories: usize,
    pub seed: u64,
}

impl BrownianConfig {
    pub fn new(n: usize, t: f64) -> Self {
        Self { n, j: 1.0, t, dt: 1e-3, variant: Variant::Full, trajectories: 10_000, seed: 0 }
    }

    pub fn steps(&self) -> usize {
        (self.t / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if self.n > MAX_BROWNIAN_QUBITS {
            return Err(Error::ResourceGuard(format!(
                "Brownian simulation limited to {MAX_BROWNIAN_QUBITS} qubits, got {}",
                self.n
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return bad(format!("T must be non-negative, got {}", self.t));
        }
        if !(self.j >= 0.0) || !self.j.is_finite() {
            return bad(format!("J must be non-negative, got {}", self.j));
        }
        if self.t / self.dt > MAX_STEPS as f64 {
            return Err(Error::ResourceGuard(format!(
                "{} steps exceeds the cap of {MAX_STEPS}",
                self.t / self.dt
            )));
        }
        match self.variant {
            Variant::Full => {}
            Variant::Disjoint { subsets, amplification } => {
                if subsets == 0 || self.n % subsets != 0 {
                    return bad(format!("subset count {subsets} must divide n = {}", self.n));
                }
                if !(amplification >= 0.0) {
                    return bad(format!("amplification must be non-negative, got {amplification}"));
                }
            }
            Variant::OneDesign { mu } => {
                if !(mu >= 0.0) {
                    return bad(format!("single-qubit rate must be non-negative, got {mu}"));
                }
            }
        }
        Ok(())
    }

    /// Standard deviation of a two-qubit coupling angle, `sqrt(J dt / n)`.
    pub fn pair_angle_std(&self) -> f64 {
        (self.j * self.dt / self.n as f64).sqrt()
    }

    fn block_of(&self, q: usize) -> usize {
        match self.variant {
            Variant::Disjoint { subsets, .. } => q / (self.n / subsets),
            _ => 0,
        }
    }
}

/// Source of the Gaussian rotation angles. Swappable for tests.
pub trait NoiseSource {
    /// Draws an angle with mean zero and standard deviation `std`.
    fn angle(&mut self, std: f64) -> f64;
}

pub struct GaussianNoise<R>(pub R);

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    fn angle(&mut self, std: f64) -> f64 {
        let z: f64 = self.0.sample(StandardNormal);
        std * z
    }
}

/// Every angle is zero.
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn angle(&mut self, _std: f64) -> f64 {
        0.0
    }
}

/// Wraps another source and keeps every angle it hands out.
pub struct RecordingNoise<N> {
    pub inner: N,
    pub angles: Vec<f64>,
}

impl<N> RecordingNoise<N> {
    pub fn new(inner: N) -> Self {
        Self { inner, angles: Vec::new() }
    }
}

impl<N: NoiseSource> NoiseSource for RecordingNoise<N> {
    fn angle(&mut self, std: f64) -> f64 {
        let a = self.inner.angle(std);
        self.angles.push(a);
        a
    }
}

/// Row action of each two-qubit Pauli product: `P[r][col] = phase`, one
/// nonzero per row.
#[derive(Clone, Copy)]
struct PauliRows {
    col: [usize; 4],
    phase: [Complex64; 4],
}

fn pauli_rows() -> [PauliRows; 9] {
    let mut out = [PauliRows { col: [0; 4], phase: [Complex64::new(0.0, 0.0); 4] }; 9];
    let mut i = 0;
    for alpha in Pauli::XYZ {
        for beta in Pauli::XYZ {
            let m = PauliPair(alpha, beta).matrix();
            for r in 0..4 {
                let c = (0..4).find(|&c| m[(r, c)].norm_sqr() > 0.5).expect("Pauli row is nonzero");
                out[i].col[r] = c;
                out[i].phase[r] = m[(r, c)];
            }
            i += 1;
        }
    }
    out
}

/// `exp(−iθ_8 P_8) ⋯ exp(−iθ_0 P_0)` over the nine products in `(α, β)`
/// lexicographic order, i.e. the same sequence as applying them one by one.
fn pair_unitary(rows: &[PauliRows; 9], thetas: &[f64; 9]) -> Matrix4<Complex64> {
    let mut m = Matrix4::<Complex64>::identity();
    for (p, &theta) in rows.iter().zip(thetas) {
        let (s, c) = theta.sin_cos();
        let prev = m;
        for r in 0..4 {
            let coef = Complex64::new(0.0, -s) * p.phase[r];
            for col in 0..4 {
                m[(r, col)] = prev[(r, col)] * c + coef * prev[(p.col[r], col)];
            }
        }
    }
    m
}

/// One first-order Trotter step of length `dt`.
pub fn brownian_step<N: NoiseSource + ?Sized>(
    state: &mut StateVector,
    config: &BrownianConfig,
    noise: &mut N,
) -> Result<()> {
    let rows = pauli_rows();
    let n = config.n;
    let std = config.pair_angle_std();
    for j in 0..n {
        for k in j + 1..n {
            let scale = match config.variant {
                Variant::Disjoint { amplification, .. } => {
                    if config.block_of(j) != config.block_of(k) {
                        continue;
                    }
                    amplification
                }
                _ => 1.0,
            };
            let thetas: [f64; 9] = std::array::from_fn(|_| scale * noise.angle(std));
            state.apply_two_qubit_matrix(j, k, &pair_unitary(&rows, &thetas))?;
        }
    }
    if let Variant::OneDesign { mu } = config.variant {
        let std = (mu * config.dt).sqrt();
        for q in 0..n {
            for alpha in Pauli::XYZ {
                state.apply_single_qubit_pauli_rotation(q, alpha, noise.angle(std))?;
            }
        }
    }
    Ok(())
}

fn trajectory_rng(config: &BrownianConfig, index: usize) -> rand_chacha::ChaCha8Rng {
    SeedSpec::new(config.seed, index as u64, StreamTag::Noise).rng()
}

/// One realisation of `U|0^n>`, determined by `(seed, index)`.
pub fn simulate_trajectory(config: &BrownianConfig, index: usize) -> Result<StateVector> {
    config.validate()?;
    let mut noise = GaussianNoise(trajectory_rng(config, index));
    let mut state = StateVector::new_zero(config.n)?;
    for _ in 0..config.steps() {
        brownian_step(&mut state, config, &mut noise)?;
    }
    Ok(state)
}

/// `q(target)` for every trajectory, in trajectory order.
pub fn trajectory_probabilities(config: &BrownianConfig, target: BitString) -> Result<Vec<f64>> {
    config.validate()?;
    check_target(config, target)?;
    (0..config.trajectories)
        .into_par_iter()
        .map(|i| Ok(simulate_trajectory(config, i)?.probability(target)))
        .collect()
}

fn check_target(config: &BrownianConfig, target: BitString) -> Result<()> {
    if target.n() != config.n {
        return Err(Error::DimensionMismatch { left: target.n(), right: config.n });
    }
    Ok(())
}

fn check_trajectories(config: &BrownianConfig) -> Result<()> {
    if config.trajectories < MIN_TRAJECTORIES {
        return Err(Error::TooFewValues { needed: MIN_TRAJECTORIES, got: config.trajectories });
    }
    Ok(())
}

/// Monte Carlo estimate of `E[q(target)^k]`.
pub fn estimate_moment(config: &BrownianConfig, k: u32, target: BitString) -> Result<EnsembleStat> {
    check_trajectories(config)?;
    let values = trajectory_probabilities(config, target)?.into_iter().map(|p| p.powi(k as i32)).collect();
    aggregate(format!("moment_k{k}"), values)
}

/// One step for a pair of states driven by the same couplings: `u` gets all
/// pairs, `v` only intra-block pairs with amplified angles.
fn overlap_step<N: NoiseSource + ?Sized>(
    u: &mut StateVector,
    v: &mut StateVector,
    config: &BrownianConfig,
    amplification: f64,
    noise: &mut N,
) -> Result<()> {
    let rows = pauli_rows();
    let n = config.n;
    let std = config.pair_angle_std();
    for j in 0..n {
        for k in j + 1..n {
            let thetas: [f64; 9] = std::array::from_fn(|_| noise.angle(std));
            u.apply_two_qubit_matrix(j, k, &pair_unitary(&rows, &thetas))?;
            if config.block_of(j) == config.block_of(k) {
                let amplified = thetas.map(|t| amplification * t);
                v.apply_two_qubit_matrix(j, k, &pair_unitary(&rows, &amplified))?;
            }
        }
    }
    Ok(())
}

/// `(U|0^n>, V|0^n>)` for one trajectory of the disjoint variant.
pub fn simulate_overlap_pair(config: &BrownianConfig, index: usize) -> Result<(StateVector, StateVector)> {
    config.validate()?;
    let Variant::Disjoint { amplification, .. } = config.variant else {
        return Err(Error::InvalidParameter(format!(
            "overlap estimation needs the disjoint variant, got {}",
            config.variant
        )));
    };
    let mut noise = GaussianNoise(trajectory_rng(config, index));
    let mut u = StateVector::new_zero(config.n)?;
    let mut v = StateVector::new_zero(config.n)?;
    for _ in 0..config.steps() {
        overlap_step(&mut u, &mut v, config, amplification, &mut noise)?;
    }
    Ok((u, v))
}

/// Monte Carlo estimate of `E[q_U(target) q_V(target)]`.
pub fn estimate_overlap(config: &BrownianConfig, target: BitString) -> Result<EnsembleStat> {
    config.validate()?;
    check_trajectories(config)?;
    check_target(config, target)?;
    let values = (0..config.trajectories)
        .into_par_iter()
        .map(|i| {
            let (u, v) = simulate_overlap_pair(config, i)?;
            Ok(u.probability(target) * v.probability(target))
        })
        .collect::<Result<Vec<f64>>>()?;
    aggregate("overlap", values)
}
