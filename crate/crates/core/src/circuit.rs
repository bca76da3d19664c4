//! Circuits, bitstrings, Haar-random two-qubit gates and deterministic seeding.
//!
//! Qubit indices are 0-based. Qubit 0 is the least significant bit of a basis
//! index. A two-qubit gate on the ordered pair `(a, b)` acts on the local basis
//! `|bit_a bit_b>`, i.e. local index `2 * bit_a + bit_b`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance used when checking stored gate matrices for unitarity.
pub const UNITARITY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Bitstrings

/// An `n`-bit computational basis label. Bit `q` is qubit `q`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct BitString {
    n: u8,
    bits: u64,
}

impl BitString {
    pub const MAX_BITS: usize = 64;

    pub fn new(n: usize, bits: u64) -> Result<Self> {
        if n == 0 || n > Self::MAX_BITS {
            return Err(Error::UnsupportedQubitCount { n, max: Self::MAX_BITS });
        }
        if n < 64 && bits >> n != 0 {
            return Err(Error::InvalidParameter(format!("bit pattern {bits:#x} does not fit in {n} bits")));
        }
        Ok(Self { n: n as u8, bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(n, 0).expect("qubit count in range")
    }

    /// Builds a bitstring from a basis index without range checks beyond `n`.
    pub(crate) fn from_index(n: usize, index: usize) -> Self {
        debug_assert!(n <= Self::MAX_BITS);
        Self { n: n as u8, bits: index as u64 }
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn index(&self) -> usize {
        self.bits as usize
    }

    pub fn bit(&self, qubit: usize) -> bool {
        (self.bits >> qubit) & 1 == 1
    }

    pub fn hamming_weight(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Parity of the bitwise AND.
    pub fn dot(&self, other: &BitString) -> u8 {
        ((self.bits & other.bits).count_ones() & 1) as u8
    }

    pub fn complement(&self) -> Self {
        let mask = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
        Self { n: self.n, bits: !self.bits & mask }
    }
}

/// Renders qubit 0 first.
impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n() {
            f.write_str(if self.bit(q) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        for (q, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << q,
                _ => return Err(Error::InvalidParameter(format!("not a bitstring: {s:?}"))),
            }
        }
        BitString::new(s.len(), bits)
    }
}

// ---------------------------------------------------------------------------
// Paulis

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    pub const XYZ: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Matrix2<Complex64> {
        match self {
            Pauli::I => Matrix2::new(C1, C0, C0, C1),
            Pauli::X => Matrix2::new(C0, C1, C1, C0),
            Pauli::Y => Matrix2::new(C0, -CI, CI, C0),
            Pauli::Z => Matrix2::new(C1, C0, C0, -C1),
        }
    }
}

impl FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" => Ok(Pauli::I),
            "X" | "x" => Ok(Pauli::X),
            "Y" | "y" => Ok(Pauli::Y),
            "Z" | "z" => Ok(Pauli::Z),
            _ => Err(Error::InvalidParameter(format!("unknown Pauli {s:?}"))),
        }
    }
}

/// A two-qubit Pauli `first ⊗ second`, with `first` on the high local bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PauliPair(pub Pauli, pub Pauli);

impl PauliPair {
    pub fn is_identity(&self) -> bool {
        self.0 == Pauli::I && self.1 == Pauli::I
    }

    pub fn matrix(&self) -> Matrix4<Complex64> {
        let a = self.0.matrix();
        let b = self.1.matrix();
        Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
    }

    pub fn all() -> impl Iterator<Item = PauliPair> {
        Pauli::ALL.into_iter().flat_map(|a| Pauli::ALL.into_iter().map(move |b| PauliPair(a, b)))
    }
}

// ---------------------------------------------------------------------------
// Haar sampling

/// Draws a 4×4 unitary from the Haar measure on U(4).
///
/// A Ginibre matrix is QR-factored and each column of Q is multiplied by the
/// phase of the matching diagonal entry of R, so that the effective R has a
/// positive real diagonal. Without that phase correction the result is not
/// Haar distributed.
pub fn haar_u4<R: Rng + ?Sized>(rng: &mut R) -> Matrix4<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let ginibre = Matrix4::from_fn(|_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..4 {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { C1 };
        for i in 0..4 {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Largest entrywise deviation of `U†U` from the identity.
pub fn unitarity_defect(u: &Matrix4<Complex64>) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst = 0.0f64;
    for r in 0..4 {
        for c in 0..4 {
            let target = if r == c { C1 } else { C0 };
            worst = worst.max((prod[(r, c)] - target).norm());
        }
    }
    worst
}

fn kron4(a: &Matrix4<Complex64>, b: &Matrix4<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(16, 16, |r, c| a[(r / 4, c / 4)] * b[(r % 4, c % 4)])
}

/// Monte Carlo estimate of `E[U P U†]` over Haar-random `U`.
pub fn pauli_first_moment<R: Rng + ?Sized>(p: PauliPair, samples: usize, rng: &mut R) -> Matrix4<Complex64> {
    let pm = p.matrix();
    if p.is_identity() {
        return pm;
    }
    let mut acc = Matrix4::<Complex64>::zeros();
    for _ in 0..samples.max(1) {
        let u = haar_u4(rng);
        acc += u * pm * u.adjoint();
    }
    acc / Complex64::from(samples.max(1) as f64)
}

/// Monte Carlo estimate of `E[(U⊗U)(P⊗P)(U†⊗U†)]` over Haar-random `U`.
///
/// Returns the exact 16×16 identity when `P = I⊗I`.
pub fn pauli_conjugation_moment<R: Rng + ?Sized>(
    p: PauliPair,
    samples: usize,
    rng: &mut R,
) -> DMatrix<Complex64> {
    if p.is_identity() {
        return DMatrix::identity(16, 16);
    }
    let pm = p.matrix();
    let mut acc = DMatrix::<Complex64>::zeros(16, 16);
    for _ in 0..samples.max(1) {
        let u = haar_u4(rng);
        let m = u * pm * u.adjoint();
        acc += kron4(&m, &m);
    }
    acc / Complex64::from(samples.max(1) as f64)
}

/// The exact second-moment value `(1/15) Σ_{Q ≠ I⊗I} Q⊗Q`.
pub fn pauli_twirl_target() -> DMatrix<Complex64> {
    let mut acc = DMatrix::<Complex64>::zeros(16, 16);
    for q in PauliPair::all().filter(|q| !q.is_identity()) {
        let m = q.matrix();
        acc += kron4(&m, &m);
    }
    acc / Complex64::from(15.0)
}

// ---------------------------------------------------------------------------
// Seeding

/// Labels the independent random streams derived from one master seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
#[repr(u8)]
pub enum StreamTag {
    Gates = 1,
    Measurement = 2,
    Noise = 3,
    Auxiliary = 4,
}

/// Identifies one random stream: `(master seed, ensemble member, purpose)`.
///
/// The stream is a ChaCha8 generator keyed by the master seed with the
/// 64-bit stream id `tag << 56 | instance_index`, so distinct instances and
/// tags never share keystream.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub instance_index: u64,
    pub stream_tag: StreamTag,
}

const INSTANCE_MASK: u64 = (1 << 56) - 1;

impl SeedSpec {
    pub fn new(master_seed: u64, instance_index: u64, stream_tag: StreamTag) -> Self {
        Self { master_seed, instance_index, stream_tag }
    }

    pub fn with_tag(self, stream_tag: StreamTag) -> Self {
        Self { stream_tag, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let stream = ((self.stream_tag as u64) << 56) | (self.instance_index & INSTANCE_MASK);
        rng.set_stream(stream);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds ensemble coordinates (e.g. `n`, depth) into a master seed.
pub fn derive_seed(master_seed: u64, coords: &[u64]) -> u64 {
    let mut state = master_seed;
    let mut out = splitmix64(&mut state);
    for &c in coords {
        state ^= c.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out = splitmix64(&mut state);
    }
    out
}

// ---------------------------------------------------------------------------
// Circuits

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Architecture {
    AllToAll,
    Brick1D {
        periodic: bool,
    },
    /// Arbitrary gate placement, e.g. a truncated circuit.
    Custom,
}

impl Architecture {
    pub fn token(&self) -> &'static str {
        match self {
            Architecture::AllToAll => "all-to-all",
            Architecture::Brick1D { periodic: true } => "brick1d-periodic",
            Architecture::Brick1D { periodic: false } => "brick1d-open",
            Architecture::Custom => "custom",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-to-all" | "alltoall" => Ok(Architecture::AllToAll),
            "brick1d-periodic" | "brick1d" => Ok(Architecture::Brick1D { periodic: true }),
            "brick1d-open" => Ok(Architecture::Brick1D { periodic: false }),
            "custom" => Ok(Architecture::Custom),
            _ => Err(Error::InvalidParameter(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Gate {
    pub layer: usize,
    pub qubits: (usize, usize),
    pub matrix: Matrix4<Complex64>,
}

impl Gate {
    pub fn touches(&self, q: usize) -> bool {
        self.qubits.0 == q || self.qubits.1 == q
    }
}

/// A layered circuit of two-qubit gates.
///
/// Gates are stored sorted by `(layer, first qubit)`, which is also the order
/// in which they are applied.
#[derive(Clone, PartialEq, Debug)]
pub struct Circuit {
    n: usize,
    depth: usize,
    architecture: Architecture,
    gates: Vec<Gate>,
}

impl Circuit {
    /// Checks qubit indices, layer indices and gate unitarity, then sorts.
    pub fn new(n: usize, depth: usize, architecture: Architecture, mut gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            let (a, b) = g.qubits;
            for q in [a, b] {
                if q >= n {
                    return Err(Error::QubitOutOfRange { index: q, n });
                }
            }
            if a == b {
                return Err(Error::RepeatedQubit(a));
            }
            if g.layer >= depth {
                return Err(Error::InvalidCircuit(format!("gate layer {} outside depth {depth}", g.layer)));
            }
            let defect = unitarity_defect(&g.matrix);
            if defect > UNITARITY_TOL {
                return Err(Error::InvalidCircuit(format!(
                    "gate on ({a},{b}) in layer {} is not unitary (defect {defect:e})",
                    g.layer
                )));
            }
        }
        gates.sort_by_key(|g| (g.layer, g.qubits.0));
        Ok(Self { n, depth, architecture, gates })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Gates of each layer, `depth` entries (possibly empty).
    pub fn layers(&self) -> Vec<&[Gate]> {
        let mut out = Vec::with_capacity(self.depth);
        let mut start = 0;
        for layer in 0..self.depth {
            let len = self.gates[start..].iter().take_while(|g| g.layer == layer).count();
            out.push(&self.gates[start..start + len]);
            start += len;
        }
        out
    }

    /// Checks the layer-structure invariants of the generated architectures.
    pub fn validate_layout(&self) -> Result<()> {
        for (i, layer) in self.layers().into_iter().enumerate() {
            let mut seen = vec![false; self.n];
            for g in layer {
                for q in [g.qubits.0, g.qubits.1] {
                    if seen[q] {
                        return Err(Error::InvalidCircuit(format!("qubit {q} acted on twice in layer {i}")));
                    }
                    seen[q] = true;
                }
            }
            let expected = match self.architecture {
                Architecture::AllToAll | Architecture::Brick1D { periodic: true } => self.n / 2,
                Architecture::Brick1D { periodic: false } => {
                    if i % 2 == 0 {
                        self.n / 2
                    } else {
                        self.n / 2 - 1
                    }
                }
                Architecture::Custom => continue,
            };
            if layer.len() != expected {
                return Err(Error::InvalidCircuit(format!(
                    "layer {i} has {} gates, expected {expected}",
                    layer.len()
                )));
            }
            if self.architecture == Architecture::AllToAll && seen.iter().any(|s| !s) {
                return Err(Error::InvalidCircuit(format!("layer {i} leaves a qubit idle")));
            }
            if let Architecture::Brick1D { .. } = self.architecture {
                for g in layer {
                    let (a, b) = g.qubits;
                    if (a + 1) % self.n != b && (b + 1) % self.n != a {
                        return Err(Error::InvalidCircuit(format!(
                            "brickwork gate ({a},{b}) is not nearest-neighbour"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Serialises to the line format: header `n d architecture`, then one
    /// line `layer j k m00re m00im ... m33re m33im` per gate (row-major).
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = format!("{} {} {}\n", self.n, self.depth, self.architecture);
        for g in &self.gates {
            write!(s, "{} {} {}", g.layer, g.qubits.0, g.qubits.1).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    let z = g.matrix[(r, c)];
                    write!(s, " {:?} {:?}", z.re, z.im).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
        let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(perr(hline, "header must be `n d architecture`".into()));
        }
        let n: usize = fields[0].parse().map_err(|e| perr(hline, format!("bad n: {e}")))?;
        let depth: usize = fields[1].parse().map_err(|e| perr(hline, format!("bad depth: {e}")))?;
        let architecture: Architecture = fields[2].parse()?;
        let mut gates = Vec::new();
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 + 32 {
                return Err(perr(ln, format!("expected 35 fields, found {}", toks.len())));
            }
            let idx = |i: usize| -> Result<usize> {
                toks[i].parse().map_err(|e| perr(ln, format!("bad integer {:?}: {e}", toks[i])))
            };
            let layer = idx(0)?;
            let qubits = (idx(1)?, idx(2)?);
            let mut vals = [0.0f64; 32];
            for (v, t) in vals.iter_mut().zip(&toks[3..]) {
                *v = t.parse().map_err(|e| perr(ln, format!("bad float {t:?}: {e}")))?;
            }
            let matrix = Matrix4::from_fn(|r, c| {
                let k = 2 * (4 * r + c);
                Complex64::new(vals[k], vals[k + 1])
            });
            gates.push(Gate { layer, qubits, matrix });
        }
        Circuit::new(n, depth, architecture, gates)
    }
}

fn check_even(n: usize, depth: usize) -> Result<()> {
    if n % 2 != 0 {
        return Err(Error::OddQubitCount(n));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 qubits, got {n}")));
    }
    if depth < 1 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    Ok(())
}

/// Depth-`d` all-to-all circuit: each layer pairs qubits by an independent
/// uniform permutation and places Haar-random gates on consecutive pairs.
pub fn gen_all_to_all(n: usize, depth: usize, seed: SeedSpec) -> Result<Circuit> {
    check_even(n, depth)?;
    let mut rng = seed.with_tag(StreamTag::Gates).rng();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut gates = Vec::with_capacity(depth * n / 2);
    for layer in 0..depth {
        perm.shuffle(&mut rng);
        for pair in perm.chunks_exact(2) {
            let matrix = haar_u4(&mut rng);
            gates.push(Gate { layer, qubits: (pair[0], pair[1]), matrix });
        }
    }
    Circuit::new(n, depth, Architecture::AllToAll, gates)
}

/// Depth-`d` 1D brickwork: even layers on bonds `(0,1),(2,3),…`, odd layers
/// on `(1,2),(3,4),…` plus `(n-1,0)` when periodic.
pub fn gen_brick1d(n: usize, depth: usize, periodic: bool, seed: SeedSpec) -> Result<Circuit> {
    check_even(n, depth)?;
    let mut rng = seed.with_tag(StreamTag::Gates).rng();
    let mut gates = Vec::with_capacity(depth * n / 2);
    for layer in 0..depth {
        let bonds: Vec<(usize, usize)> = if layer % 2 == 0 {
            (0..n / 2).map(|m| (2 * m, 2 * m + 1)).collect()
        } else {
            let count = if periodic { n / 2 } else { n / 2 - 1 };
            (0..count).map(|m| (2 * m + 1, (2 * m + 2) % n)).collect()
        };
        for qubits in bonds {
            gates.push(Gate { layer, qubits, matrix: haar_u4(&mut rng) });
        }
    }
    Circuit::new(n, depth, Architecture::Brick1D { periodic }, gates)
}
