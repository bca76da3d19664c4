//! Dense statevector simulation and categorical sampling.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::Rng;

use crate::circuit::{BitString, Circuit, Gate, Pauli};
use crate::error::{Error, Result};

/// Largest register held as a dense vector (2^30 amplitudes, 16 GiB).
pub const MAX_QUBITS: usize = 30;

#[derive(Clone, PartialEq, Debug)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

/// Calls `f` on every index in `0..dim` that is zero on the bits of
/// `support` (one or two bits), in increasing order.
#[inline(always)]
fn for_each_base(dim: usize, support: usize, mut f: impl FnMut(usize)) {
    let lo = support & support.wrapping_neg();
    let hi = support ^ lo;
    if hi == 0 {
        for a in (0..dim).step_by(2 * lo) {
            for z in a..a + lo {
                f(z);
            }
        }
    } else {
        for a in (0..dim).step_by(2 * hi) {
            for b in (a..a + hi).step_by(2 * lo) {
                for z in b..b + lo {
                    f(z);
                }
            }
        }
    }
}

/// Bit masks describing a Pauli string `P` with `P|y> = phase(y) |y ^ flip>`.
///
/// `phase(y) = i^{#Y} (-1)^{popcount(y & sign)}` where `sign` covers the Y
/// and Z positions (from `Y|0> = i|1>`, `Y|1> = -i|0>`).
#[derive(Clone, Copy, Debug)]
struct PauliMasks {
    flip: usize,
    sign: usize,
    /// `i^{#Y}`
    y_phase: Complex64,
}

impl PauliMasks {
    fn new(terms: &[(usize, Pauli)]) -> Self {
        let (mut flip, mut sign, mut ys) = (0usize, 0usize, 0u32);
        for &(q, p) in terms {
            let b = 1usize << q;
            match p {
                Pauli::I => {}
                Pauli::X => flip |= b,
                Pauli::Y => {
                    flip |= b;
                    sign |= b;
                    ys += 1;
                }
                Pauli::Z => sign |= b,
            }
        }
        let y_phase = match ys % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        Self { flip, sign, y_phase }
    }

    #[inline]
    fn phase(&self, y: usize) -> Complex64 {
        if (y & self.sign).count_ones() & 1 == 1 {
            -self.y_phase
        } else {
            self.y_phase
        }
    }
}

impl StateVector {
    pub fn new_zero(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::UnsupportedQubitCount { n, max: MAX_QUBITS });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Wraps raw amplitudes; the length must be `2^n` for some supported `n`.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::InvalidParameter(format!("amplitude count {len} is not 2^n")));
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return Err(Error::UnsupportedQubitCount { n, max: MAX_QUBITS });
        }
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, x: BitString) -> Complex64 {
        self.amps[x.index()]
    }

    pub fn probability(&self, x: BitString) -> f64 {
        self.amps[x.index()].norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n {
            Err(Error::QubitOutOfRange { index: q, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Applies the gate's 4×4 matrix on the ordered pair `(a, b)`, with
    /// local index `2 * bit_a + bit_b`.
    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        self.apply_two_qubit_matrix(gate.qubits.0, gate.qubits.1, &gate.matrix)
    }

    /// Applies a 4x4 matrix to qubits `(a, b)`; `a` is the high local bit.
    pub fn apply_two_qubit_matrix(&mut self, a: usize, b: usize, m: &Matrix4<Complex64>) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(Error::RepeatedQubit(a));
        }
        let (ma, mb) = (1usize << a, 1usize << b);
        let offsets = [0, mb, ma, ma | mb];
        let rows: [[Complex64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
        for_each_base(self.amps.len(), ma | mb, |base| {
            let v = offsets.map(|o| self.amps[base | o]);
            for (row, &o) in rows.iter().zip(&offsets) {
                self.amps[base | o] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
            }
        });
        Ok(())
    }

    /// Runs `circuit` on `|0^n>`.
    pub fn run_circuit(circuit: &Circuit) -> Result<Self> {
        let mut state = Self::new_zero(circuit.n())?;
        for gate in circuit.gates() {
            state.apply_gate(gate)?;
        }
        Ok(state)
    }

    /// `ψ ← cos θ ψ − i sin θ P ψ` for a Pauli string `P` supported on the
    /// bits of `offsets` (all subsets of the support, as basis offsets).
    ///
    /// The register splits into blocks `base | offset` where `base` has zeros
    /// on the support. Inside a block `P` maps offset `o` to `o ^ flip`, so
    /// each output amplitude mixes exactly two inputs of the same block.
    fn apply_pauli_rotation<const L: usize>(&mut self, masks: PauliMasks, offsets: [usize; L], theta: f64) {
        let (s, c) = theta.sin_cos();
        let mis = Complex64::new(0.0, -s);
        let mut partner = [0usize; L];
        let mut coef = [Complex64::new(0.0, 0.0); L];
        for (i, &o) in offsets.iter().enumerate() {
            let p = o ^ masks.flip;
            partner[i] = offsets.iter().position(|&x| x == p).expect("flip inside support");
            // (Pψ)[o] = phase(p) ψ[p]
            coef[i] = mis * masks.phase(p);
        }
        let support = offsets[L - 1];
        for_each_base(self.amps.len(), support, |base| {
            let mut v = [Complex64::new(0.0, 0.0); L];
            for i in 0..L {
                v[i] = self.amps[base | offsets[i]];
            }
            for i in 0..L {
                self.amps[base | offsets[i]] = v[i] * c + coef[i] * v[partner[i]];
            }
        });
    }

    /// Applies `exp(−iθ σ_j^α σ_k^β)`.
    pub fn apply_two_qubit_pauli_rotation(
        &mut self,
        j: usize,
        k: usize,
        alpha: Pauli,
        beta: Pauli,
        theta: f64,
    ) -> Result<()> {
        self.check_qubit(j)?;
        self.check_qubit(k)?;
        if j == k {
            return Err(Error::RepeatedQubit(j));
        }
        let offsets = [0, 1 << j, 1 << k, (1 << j) | (1 << k)];
        self.apply_pauli_rotation(PauliMasks::new(&[(j, alpha), (k, beta)]), offsets, theta);
        Ok(())
    }

    /// Applies `exp(−iθ σ_j^α)`.
    pub fn apply_single_qubit_pauli_rotation(&mut self, j: usize, alpha: Pauli, theta: f64) -> Result<()> {
        self.check_qubit(j)?;
        self.apply_pauli_rotation(PauliMasks::new(&[(j, alpha)]), [0, 1 << j], theta);
        Ok(())
    }

    pub fn output_distribution(&self) -> ProbTable {
        ProbTable { n: self.n, probs: self.amps.iter().map(|a| a.norm_sqr()).collect() }
    }

    pub fn sample_bitstrings<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<BitString> {
        self.output_distribution().sampler().sample_many(count, rng)
    }
}

/// A probability table over `2^n` bitstrings, indexed by basis index.
#[derive(Clone, PartialEq, Debug)]
pub struct ProbTable {
    n: usize,
    probs: Vec<f64>,
}

impl ProbTable {
    /// Checks length, non-negativity and normalisation (to 1e-9).
    pub fn from_probs(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::UnsupportedQubitCount { n, max: MAX_QUBITS });
        }
        if probs.len() != 1 << n {
            return Err(Error::DimensionMismatch { left: probs.len(), right: 1 << n });
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(Self { n, probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        let dim = 1usize << n.min(MAX_QUBITS);
        Self::from_probs(n, vec![1.0 / dim as f64; dim])
    }

    pub fn point_mass(x: BitString) -> Result<Self> {
        let n = x.n();
        if n > MAX_QUBITS {
            return Err(Error::UnsupportedQubitCount { n, max: MAX_QUBITS });
        }
        let mut probs = vec![0.0; 1 << n];
        probs[x.index()] = 1.0;
        Self::from_probs(n, probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: BitString) -> f64 {
        self.probs[x.index()]
    }

    pub fn sampler(&self) -> Sampler {
        let mut acc = 0.0;
        let cdf = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Sampler { n: self.n, cdf }
    }
}

/// Inverse-CDF sampler over a probability table.
#[derive(Clone, Debug)]
pub struct Sampler {
    n: usize,
    cdf: Vec<f64>,
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BitString {
        let total = *self.cdf.last().expect("nonempty table");
        let u: f64 = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        BitString::from_index(self.n, idx)
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<BitString> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}
