//! The disjoint-subsystem spoofer: partition the qubits, drop every gate that
//! straddles two subsets, simulate each subset on its own and sample from the
//! product of the subset distributions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::circuit::{Architecture, BitString, Circuit, Gate};
use crate::error::{Error, Result};
use crate::statevector::{ProbTable, Sampler, StateVector, MAX_QUBITS};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PartitionStrategy {
    Greedy,
    Block { size: usize },
    Custom,
}

impl fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionStrategy::Greedy => f.write_str("greedy"),
            PartitionStrategy::Block { size } => write!(f, "block{size}"),
            PartitionStrategy::Custom => f.write_str("custom"),
        }
    }
}

impl FromStr for PartitionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(PartitionStrategy::Greedy),
            "custom" => Ok(PartitionStrategy::Custom),
            _ => s
                .strip_prefix("block")
                .and_then(|r| r.parse().ok())
                .filter(|&size| size > 0)
                .map(|size| PartitionStrategy::Block { size })
                .ok_or_else(|| Error::InvalidParameter(format!("unknown partition strategy {s:?}"))),
        }
    }
}

/// Disjoint subsets covering `0..n`. Each subset is sorted ascending.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Partition {
    n: usize,
    subsets: Vec<Vec<usize>>,
    strategy: PartitionStrategy,
}

impl Partition {
    pub fn new(n: usize, mut subsets: Vec<Vec<usize>>, strategy: PartitionStrategy) -> Result<Self> {
        let mut owner = vec![false; n];
        for s in &mut subsets {
            if s.is_empty() {
                return Err(Error::InvalidPartition("empty subset".into()));
            }
            s.sort_unstable();
            for &q in s.iter() {
                if q >= n {
                    return Err(Error::QubitOutOfRange { index: q, n });
                }
                if owner[q] {
                    return Err(Error::InvalidPartition(format!("qubit {q} appears twice")));
                }
                owner[q] = true;
            }
        }
        if let Some(q) = owner.iter().position(|o| !o) {
            return Err(Error::InvalidPartition(format!("qubit {q} is not covered")));
        }
        Ok(Self { n, subsets, strategy })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn strategy(&self) -> PartitionStrategy {
        self.strategy
    }

    pub fn largest_subset(&self) -> usize {
        self.subsets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Subset index of every qubit.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n];
        for (i, s) in self.subsets.iter().enumerate() {
            for &q in s {
                owner[q] = i;
            }
        }
        owner
    }

    /// One line per subset, space-separated global qubit indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.subsets {
            let line: Vec<String> = s.iter().map(|q| q.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut subsets = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let subset = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|e| Error::Parse { line: ln + 1, msg: format!("{t:?}: {e}") })
                })
                .collect::<Result<Vec<_>>>()?;
            subsets.push(subset);
        }
        let n = subsets.iter().map(Vec::len).sum();
        Partition::new(n, subsets, PartitionStrategy::Custom)
    }
}

/// What the greedy partitioner did, for checking its guarantees.
#[derive(Clone, Debug, Default)]
pub struct GreedyTrace {
    /// Chosen qubits in selection order.
    pub anchors: Vec<usize>,
    /// `{i} ∪ nbrs(i)` for each anchor.
    pub anchor_sets: Vec<Vec<usize>>,
    /// Qubits removed from the live set at each selection (the 2-hop ball).
    pub removed: Vec<Vec<usize>>,
    /// Qubits in no anchor set, emitted as singletons.
    pub leftovers: Vec<usize>,
}

/// Interaction graph of the whole circuit: `j` and `k` are neighbours if any
/// gate in any layer acts on both.
pub fn interaction_neighbours(circuit: &Circuit) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); circuit.n()];
    for g in circuit.gates() {
        let (a, b) = g.qubits;
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    for v in &mut nbrs {
        v.sort_unstable();
        v.dedup();
    }
    nbrs
}

pub fn greedy_partition(circuit: &Circuit) -> Partition {
    greedy_partition_traced(circuit).0
}

/// Repeatedly takes the smallest live qubit `i`, emits `{i} ∪ nbrs(i)` and
/// removes the 2-hop neighbourhood of `i` from the live set. Qubits in no
/// emitted set become singletons.
pub fn greedy_partition_traced(circuit: &Circuit) -> (Partition, GreedyTrace) {
    let n = circuit.n();
    let nbrs = interaction_neighbours(circuit);
    let mut live = vec![true; n];
    let mut covered = vec![false; n];
    let mut trace = GreedyTrace::default();
    let mut subsets = Vec::new();

    while let Some(i) = live.iter().position(|&l| l) {
        let mut p = vec![i];
        p.extend_from_slice(&nbrs[i]);
        p.sort_unstable();

        let mut ball = p.clone();
        for &j in &nbrs[i] {
            ball.extend_from_slice(&nbrs[j]);
        }
        ball.sort_unstable();
        ball.dedup();
        let removed: Vec<usize> = ball.into_iter().filter(|&q| live[q]).collect();
        for &q in &removed {
            live[q] = false;
        }
        for &q in &p {
            covered[q] = true;
        }
        trace.anchors.push(i);
        trace.anchor_sets.push(p.clone());
        trace.removed.push(removed);
        subsets.push(p);
    }
    for q in (0..n).filter(|&q| !covered[q]) {
        trace.leftovers.push(q);
        subsets.push(vec![q]);
    }
    let partition =
        Partition::new(n, subsets, PartitionStrategy::Greedy).expect("greedy anchor sets are disjoint");
    (partition, trace)
}

/// `⌈n/r⌉` contiguous blocks of size `r`; the last may be smaller.
pub fn block_partition(n: usize, r: usize) -> Result<Partition> {
    if r == 0 || r > n {
        return Err(Error::InvalidParameter(format!("block size {r} outside 1..={n}")));
    }
    let subsets = (0..n).step_by(r).map(|s| (s..(s + r).min(n)).collect()).collect();
    Partition::new(n, subsets, PartitionStrategy::Block { size: r })
}

/// A circuit with all cross-subset gates removed, split into per-subset
/// circuits on locally relabelled qubits (ascending global index).
#[derive(Clone, Debug)]
pub struct DisjointCircuit {
    partition: Partition,
    truncated: Circuit,
    subcircuits: Vec<Circuit>,
    removed_gates: usize,
}

pub fn truncate(circuit: &Circuit, partition: &Partition) -> Result<DisjointCircuit> {
    if circuit.n() != partition.n() {
        return Err(Error::DimensionMismatch { left: circuit.n(), right: partition.n() });
    }
    let owner = partition.owners();
    let mut local = vec![0; partition.n()];
    for s in partition.subsets() {
        for (i, &q) in s.iter().enumerate() {
            local[q] = i;
        }
    }
    let mut kept = Vec::new();
    let mut per_subset: Vec<Vec<Gate>> = vec![Vec::new(); partition.k()];
    for g in circuit.gates() {
        let (a, b) = g.qubits;
        if owner[a] != owner[b] {
            continue;
        }
        kept.push(g.clone());
        per_subset[owner[a]].push(Gate { layer: g.layer, qubits: (local[a], local[b]), matrix: g.matrix });
    }
    let removed_gates = circuit.gates().len() - kept.len();
    let truncated = Circuit::new(circuit.n(), circuit.depth(), Architecture::Custom, kept)?;
    let subcircuits = partition
        .subsets()
        .iter()
        .zip(per_subset)
        .map(|(s, gates)| Circuit::new(s.len(), circuit.depth(), Architecture::Custom, gates))
        .collect::<Result<Vec<_>>>()?;
    Ok(DisjointCircuit { partition: partition.clone(), truncated, subcircuits, removed_gates })
}

impl DisjointCircuit {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// The truncated circuit on all `n` qubits.
    pub fn as_circuit(&self) -> &Circuit {
        &self.truncated
    }

    pub fn subcircuits(&self) -> &[Circuit] {
        &self.subcircuits
    }

    pub fn kept_gates(&self) -> usize {
        self.truncated.gates().len()
    }

    pub fn removed_gates(&self) -> usize {
        self.removed_gates
    }
}

/// The product distribution `A(x) = Π_ℓ q_ℓ(x restricted to subset ℓ)`.
#[derive(Clone, Debug)]
pub struct SpoofDistribution {
    n: usize,
    subsets: Vec<Vec<usize>>,
    tables: Vec<ProbTable>,
}

pub fn spoof_distribution(disjoint: &DisjointCircuit) -> Result<SpoofDistribution> {
    let tables = disjoint
        .subcircuits
        .iter()
        .map(|c| {
            if c.n() > MAX_QUBITS {
                return Err(Error::SubsetTooLarge { size: c.n(), max: MAX_QUBITS });
            }
            Ok(StateVector::run_circuit(c)?.output_distribution())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpoofDistribution {
        n: disjoint.partition.n(),
        subsets: disjoint.partition.subsets().to_vec(),
        tables,
    })
}

fn gather(x: u64, subset: &[usize]) -> usize {
    subset.iter().enumerate().fold(0, |acc, (i, &q)| acc | ((((x >> q) & 1) as usize) << i))
}

impl SpoofDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn subset_tables(&self) -> &[ProbTable] {
        &self.tables
    }

    pub fn eval(&self, x: BitString) -> f64 {
        self.subsets.iter().zip(&self.tables).map(|(s, t)| t.probs()[gather(x.bits(), s)]).product()
    }

    /// The full `2^n` table; only for `n ≤ 30`.
    pub fn full_table(&self) -> Result<ProbTable> {
        if self.n > MAX_QUBITS {
            return Err(Error::UnsupportedQubitCount { n: self.n, max: MAX_QUBITS });
        }
        // Outer product built one subset at a time.
        let mut probs = vec![1.0f64; 1 << self.n];
        for (s, t) in self.subsets.iter().zip(&self.tables) {
            for (x, p) in probs.iter_mut().enumerate() {
                *p *= t.probs()[gather(x as u64, s)];
            }
        }
        ProbTable::from_probs(self.n, probs)
    }

    pub fn sampler(&self) -> SpoofSampler {
        SpoofSampler {
            n: self.n,
            subsets: self.subsets.clone(),
            samplers: self.tables.iter().map(ProbTable::sampler).collect(),
        }
    }
}

pub struct SpoofSampler {
    n: usize,
    subsets: Vec<Vec<usize>>,
    samplers: Vec<Sampler>,
}

impl SpoofSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BitString {
        let mut bits = 0u64;
        for (s, sampler) in self.subsets.iter().zip(&self.samplers) {
            let z = sampler.sample(rng).bits();
            for (i, &q) in s.iter().enumerate() {
                bits |= ((z >> i) & 1) << q;
            }
        }
        BitString::new(self.n, bits).expect("bits within n")
    }
}

pub fn spoof_sample<R: Rng + ?Sized>(
    disjoint: &DisjointCircuit,
    count: usize,
    rng: &mut R,
) -> Result<Vec<BitString>> {
    let sampler = spoof_distribution(disjoint)?.sampler();
    Ok((0..count).map(|_| sampler.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{gen_all_to_all, haar_u4, SeedSpec, StreamTag};

    fn seed(i: u64) -> SeedSpec {
        SeedSpec::new(21, i, StreamTag::Gates)
    }

    fn custom(n: usize, depth: usize, pairs: &[(usize, usize, usize)]) -> Circuit {
        let mut rng = seed(99).rng();
        let gates = pairs
            .iter()
            .map(|&(layer, a, b)| Gate { layer, qubits: (a, b), matrix: haar_u4(&mut rng) })
            .collect();
        Circuit::new(n, depth, Architecture::Custom, gates).unwrap()
    }

    #[test]
    fn greedy_hand_traces() {
        let c = custom(4, 1, &[(0, 0, 1), (0, 2, 3)]);
        assert_eq!(greedy_partition(&c).subsets(), &[vec![0, 1], vec![2, 3]]);
        let c = custom(4, 1, &[(0, 0, 2), (0, 1, 3)]);
        assert_eq!(greedy_partition(&c).subsets(), &[vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn greedy_chain_leaves_singleton() {
        // Chain 0-1-2-3-4-5. Anchor 0 takes {0,1} and kills {0,1,2}. Qubit 2
        // is dead but uncovered, so anchor 3 still takes it, and kills 5.
        let c = custom(6, 2, &[(0, 0, 1), (0, 2, 3), (0, 4, 5), (1, 1, 2), (1, 3, 4)]);
        let (p, trace) = greedy_partition_traced(&c);
        assert_eq!(trace.anchors, vec![0, 3]);
        assert_eq!(p.subsets(), &[vec![0, 1], vec![2, 3, 4], vec![5]]);
        assert_eq!(trace.leftovers, vec![5]);
    }

    #[test]
    fn blocks() {
        let sizes = |r| block_partition(16, r).unwrap().subsets().iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(sizes(5), vec![5, 5, 5, 1]);
        assert_eq!(sizes(16), vec![16]);
        assert_eq!(sizes(1), vec![1; 16]);
        assert!(block_partition(4, 0).is_err());
        assert!(block_partition(4, 5).is_err());
        for s in ["greedy", "block5", "custom"] {
            assert_eq!(s.parse::<PartitionStrategy>().unwrap().to_string(), s);
        }
        assert!("block0".parse::<PartitionStrategy>().is_err());
        assert!("blocks".parse::<PartitionStrategy>().is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]], PartitionStrategy::Custom).is_err());
        assert!(Partition::new(3, vec![vec![0, 1]], PartitionStrategy::Custom).is_err());
        assert!(Partition::new(3, vec![vec![0, 1], vec![3]], PartitionStrategy::Custom).is_err());
        let p = Partition::new(3, vec![vec![2, 0], vec![1]], PartitionStrategy::Custom).unwrap();
        assert_eq!(p.subsets(), &[vec![0, 2], vec![1]]);
        let back = Partition::from_text(&p.to_text()).unwrap();
        assert_eq!(back.subsets(), p.subsets());
    }

    #[test]
    fn truncation_hand_trace() {
        let c = custom(4, 2, &[(0, 0, 1), (0, 2, 3), (1, 1, 2)]);
        let p = block_partition(4, 2).unwrap();
        let d = truncate(&c, &p).unwrap();
        assert_eq!(d.removed_gates(), 1);
        assert_eq!(d.kept_gates(), 2);
        assert!(d.as_circuit().gates().iter().all(|g| g.qubits != (1, 2)));
        assert_eq!(d.subcircuits()[1].gates()[0].qubits, (0, 1));
    }

    #[test]
    fn trivial_partitions() {
        let c = gen_all_to_all(6, 3, seed(1)).unwrap();
        let whole = Partition::new(6, vec![(0..6).collect()], PartitionStrategy::Custom).unwrap();
        let d = truncate(&c, &whole).unwrap();
        assert_eq!(d.removed_gates(), 0);
        let a = spoof_distribution(&d).unwrap().full_table().unwrap();
        let q = StateVector::run_circuit(&c).unwrap().output_distribution();
        for (x, y) in a.probs().iter().zip(q.probs()) {
            assert!((x - y).abs() <= 1e-12);
        }

        let singles = block_partition(6, 1).unwrap();
        let d = truncate(&c, &singles).unwrap();
        assert_eq!(d.kept_gates(), 0);
        let a = spoof_distribution(&d).unwrap();
        assert_eq!(a.eval(BitString::zeros(6)), 1.0);
        let xs = spoof_sample(&d, 20, &mut seed(2).rng()).unwrap();
        assert!(xs.iter().all(|x| x.bits() == 0));
    }

    #[test]
    fn product_matches_global_truncated_simulation() {
        for (i, n) in [4usize, 8, 12].into_iter().enumerate() {
            let c = gen_all_to_all(n, 3, seed(10 + i as u64)).unwrap();
            let p = greedy_partition(&c);
            let d = truncate(&c, &p).unwrap();
            let a = spoof_distribution(&d).unwrap();
            let global = StateVector::run_circuit(d.as_circuit()).unwrap().output_distribution();
            let full = a.full_table().unwrap();
            for x in 0..1usize << n {
                let bx = BitString::new(n, x as u64).unwrap();
                assert!((a.eval(bx) - global.probs()[x]).abs() <= 1e-10);
                assert!((full.probs()[x] - global.probs()[x]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn truncation_is_idempotent() {
        let c = gen_all_to_all(10, 4, seed(3)).unwrap();
        let p = greedy_partition(&c);
        let once = truncate(&c, &p).unwrap();
        let twice = truncate(once.as_circuit(), &p).unwrap();
        assert_eq!(twice.removed_gates(), 0);
        assert_eq!(twice.kept_gates(), once.kept_gates());
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = gen_all_to_all(8, 2, seed(4)).unwrap();
        let d = truncate(&c, &greedy_partition(&c)).unwrap();
        let a = spoof_sample(&d, 40, &mut seed(5).rng()).unwrap();
        let b = spoof_sample(&d, 40, &mut seed(5).rng()).unwrap();
        assert_eq!(a, b);
    }
}
