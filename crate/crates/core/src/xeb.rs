//! XEB scores, fourth-moment statistics, Porter–Thomas fits and ensemble
//! aggregation.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::BitString;
use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::statevector::ProbTable;

/// Whether an XEB score is reported as `2^n Σ a q` or `2^n Σ a q − 1`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum XebConvention {
    #[default]
    Plain,
    MinusOne,
}

impl XebConvention {
    fn offset(self) -> f64 {
        match self {
            XebConvention::Plain => 0.0,
            XebConvention::MinusOne => 1.0,
        }
    }
}

impl fmt::Display for XebConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XebConvention::Plain => "plain",
            XebConvention::MinusOne => "minus-one",
        })
    }
}

impl FromStr for XebConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(XebConvention::Plain),
            "minus-one" => Ok(XebConvention::MinusOne),
            _ => Err(Error::InvalidParameter(format!("unknown XEB convention {s:?}"))),
        }
    }
}

fn check_same(q: &ProbTable, a: &ProbTable) -> Result<()> {
    if q.n() != a.n() {
        return Err(Error::DimensionMismatch { left: q.n(), right: a.n() });
    }
    Ok(())
}

fn dim(n: usize) -> f64 {
    (n as f64).exp2()
}

/// `2^n Σ_x a(x) q(x)` (minus one under [`XebConvention::MinusOne`]).
pub fn xeb_exact(q: &ProbTable, a: &ProbTable, convention: XebConvention) -> Result<f64> {
    check_same(q, a)?;
    let d = dim(q.n());
    let s = neumaier_sum(q.probs().iter().zip(a.probs()).map(|(q, a)| (d * q) * a));
    Ok(s - convention.offset())
}

/// `2^n · mean_j q(x_j)` over the given samples.
pub fn xeb_empirical(q: &ProbTable, samples: &[BitString], convention: XebConvention) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    if let Some(x) = samples.iter().find(|x| x.n() != q.n()) {
        return Err(Error::DimensionMismatch { left: x.n(), right: q.n() });
    }
    let d = dim(q.n());
    let mean = neumaier_sum(samples.iter().map(|&x| d * q.get(x))) / samples.len() as f64;
    Ok(mean - convention.offset())
}

/// `2^{3n} Σ_x q(x)^4`, accumulated as `2^{-n} Σ (2^n q)^4` so the terms
/// stay O(1) at any `n`.
pub fn quantum_fourth_stat(q: &ProbTable) -> f64 {
    let d = dim(q.n());
    neumaier_sum(q.probs().iter().map(|p| (d * p).powi(4))) / d
}

/// `2^{3n} Σ_x a(x)^2 q(x)^2`, with the same rescaling.
pub fn spoof_fourth_stat(q: &ProbTable, a: &ProbTable) -> Result<f64> {
    check_same(q, a)?;
    let d = dim(q.n());
    Ok(neumaier_sum(q.probs().iter().zip(a.probs()).map(|(q, a)| (d * q * d * a).powi(2))) / d)
}

const SAMPLE_COMPLEXITY_BASE: f64 = 180_000.0;

/// `⌈180000 (1+3e^{-24JT})^n / (1+e^{-24JT})^{2n}⌉`, evaluated in log space.
pub fn sample_complexity_m(n: usize, jt: f64) -> Result<u64> {
    if !(jt >= 0.0) {
        return Err(Error::InvalidParameter(format!("JT must be non-negative, got {jt}")));
    }
    let e = (-24.0 * jt).exp();
    let log_m = SAMPLE_COMPLEXITY_BASE.ln() + n as f64 * ((3.0 * e).ln_1p() - 2.0 * e.ln_1p());
    if log_m >= (u64::MAX as f64).ln() {
        return Err(Error::InvalidParameter(format!("sample count exp({log_m}) does not fit in 64 bits")));
    }
    Ok(ceil_with_slack(log_m.exp()))
}

/// Direct-power evaluation of [`sample_complexity_m`], for cross-checking.
pub fn sample_complexity_m_direct(n: usize, jt: f64) -> f64 {
    let e = (-24.0 * jt).exp();
    let n = n as i32;
    SAMPLE_COMPLEXITY_BASE * (1.0 + 3.0 * e).powi(n) / (1.0 + e).powi(2 * n)
}

/// Ceiling that does not round an exact integer up because of the last bit.
fn ceil_with_slack(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PorterThomasFit {
    /// Maximum-likelihood exponential rate `1/mean`.
    pub rate: f64,
    /// Kolmogorov–Smirnov distance against `Exp(rate)`.
    pub ks_statistic: f64,
    /// Asymptotic Kolmogorov p-value of `sqrt(N)·D`.
    pub p_value: f64,
    pub count: usize,
}

pub const PORTER_THOMAS_MIN_VALUES: usize = 100;

pub fn porter_thomas_fit(values: &[f64]) -> Result<PorterThomasFit> {
    if values.len() < PORTER_THOMAS_MIN_VALUES {
        return Err(Error::TooFewValues { needed: PORTER_THOMAS_MIN_VALUES, got: values.len() });
    }
    if let Some(&v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveValue(v));
    }
    let count = values.len();
    let nf = count as f64;
    let rate = nf / neumaier_sum(values.iter().copied());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks_statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = -(-rate * x).exp_m1();
            ((i + 1) as f64 / nf - cdf).max(cdf - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let p_value = kolmogorov_survival(nf.sqrt() * ks_statistic);
    Ok(PorterThomasFit { rate, ks_statistic, p_value, count })
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form, converges fast for small λ.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Per-instance values with their mean and one standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStat {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n−1 denominator) over `sqrt(count)`.
    pub stderr: f64,
}

impl EnsembleStat {
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

pub fn aggregate(name: impl Into<String>, values: Vec<f64>) -> Result<EnsembleStat> {
    let count = values.len();
    if count < 2 {
        return Err(Error::TooFewValues { needed: 2, got: count });
    }
    let nf = count as f64;
    let mean = neumaier_sum(values.iter().copied()) / nf;
    let var = neumaier_sum(values.iter().map(|v| (v - mean).powi(2))) / (nf - 1.0);
    let stderr = (var / nf).sqrt();
    Ok(EnsembleStat { name: name.into(), values, mean, stderr })
}

/// One row of the ensemble-statistics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub stat_name: String,
    pub architecture: String,
    pub n: usize,
    #[serde(rename = "depth_or_T")]
    pub depth_or_t: f64,
    pub partition: String,
    pub instances: usize,
    pub mean: f64,
    pub stderr: f64,
    pub convention: String,
}

pub const STAT_COLUMNS: [&str; 9] = [
    "stat_name",
    "architecture",
    "n",
    "depth_or_T",
    "partition",
    "instances",
    "mean",
    "stderr",
    "convention",
];

pub fn write_stat_rows<W: io::Write>(writer: W, rows: &[StatRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(STAT_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stat_rows<R: io::Read>(reader: R) -> Result<Vec<StatRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(STAT_COLUMNS) {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header {headers:?}") });
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<StatRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{gen_all_to_all, SeedSpec, StreamTag};
    use crate::statevector::StateVector;
    use rand::Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn rng(i: u64) -> rand_chacha::ChaCha8Rng {
        SeedSpec::new(31, i, StreamTag::Auxiliary).rng()
    }

    fn deep_q(n: usize, seed: u64) -> ProbTable {
        let c = gen_all_to_all(n, 12, SeedSpec::new(seed, 0, StreamTag::Gates)).unwrap();
        StateVector::run_circuit(&c).unwrap().output_distribution()
    }

    #[test]
    fn xeb_reference_values() {
        let q = deep_q(6, 1);
        let u = ProbTable::uniform(6).unwrap();
        assert!((xeb_exact(&q, &u, XebConvention::Plain).unwrap() - 1.0).abs() < 1e-12);
        assert!((xeb_exact(&u, &q, XebConvention::Plain).unwrap() - 1.0).abs() < 1e-12);
        assert!(xeb_exact(&q, &u, XebConvention::MinusOne).unwrap().abs() < 1e-12);
        let x = BitString::new(6, 5).unwrap();
        let pm = ProbTable::point_mass(x).unwrap();
        assert_eq!(xeb_exact(&pm, &pm, XebConvention::Plain).unwrap(), 64.0);
        assert!(xeb_exact(&q, &ProbTable::uniform(5).unwrap(), XebConvention::Plain).is_err());
    }

    #[test]
    fn argmax_point_mass_is_optimal() {
        let q = deep_q(6, 2);
        let best = q.probs().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let pm = ProbTable::point_mass(BitString::new(6, best as u64).unwrap()).unwrap();
        let top = xeb_exact(&q, &pm, XebConvention::Plain).unwrap();
        for a in [q.clone(), ProbTable::uniform(6).unwrap()] {
            assert!(xeb_exact(&q, &a, XebConvention::Plain).unwrap() <= top);
        }
    }

    #[test]
    fn empirical_xeb_small_cases() {
        let u = ProbTable::uniform(3).unwrap();
        let xs: Vec<BitString> = (0..8).map(|i| BitString::new(3, i).unwrap()).collect();
        assert!((xeb_empirical(&u, &xs, XebConvention::Plain).unwrap() - 1.0).abs() < 1e-15);
        assert!(xeb_empirical(&u, &[], XebConvention::Plain).is_err());
    }

    #[test]
    fn empirical_xeb_converges_to_self_score() {
        let q = deep_q(4, 3);
        let exact = xeb_exact(&q, &q, XebConvention::Plain).unwrap();
        let sampler = q.sampler();
        let mut r = rng(0);
        let m = 1_000_000;
        let d = 16.0;
        let vals: Vec<f64> = (0..m).map(|_| d * q.get(sampler.sample(&mut r))).collect();
        let stat = aggregate("xeb", vals).unwrap();
        assert!((stat.mean - exact).abs() <= 3.0 * stat.stderr, "{} vs {exact}", stat.mean);
    }

    #[test]
    fn fourth_stats() {
        let u = ProbTable::uniform(8).unwrap();
        assert!((quantum_fourth_stat(&u) - 1.0).abs() < 1e-12);
        let pm = ProbTable::point_mass(BitString::zeros(5)).unwrap();
        assert_eq!(quantum_fourth_stat(&pm), 32f64.powi(3));

        let q = deep_q(6, 4);
        assert!((spoof_fourth_stat(&q, &q).unwrap() - quantum_fourth_stat(&q)).abs() < 1e-10);
        let d = 64f64;
        let self_score: f64 = q.probs().iter().map(|p| p * p).sum::<f64>() * d;
        assert!((spoof_fourth_stat(&q, &ProbTable::uniform(6).unwrap()).unwrap() - self_score).abs() < 1e-10);
        let expected = d.powi(3) * q.probs()[0].powi(2);
        assert!((spoof_fourth_stat(&q, &pm_n(6)).unwrap() - expected).abs() < 1e-9 * expected);
    }

    fn pm_n(n: usize) -> ProbTable {
        ProbTable::point_mass(BitString::zeros(n)).unwrap()
    }

    #[test]
    fn rescaled_fourth_stat_matches_direct_sum() {
        for n in [4, 10, 16] {
            let q = deep_q(n, 5 + n as u64);
            let direct: f64 = (n as f64 * 3.0).exp2() * q.probs().iter().map(|p| p.powi(4)).sum::<f64>();
            let rel = (quantum_fourth_stat(&q) - direct).abs() / direct;
            assert!(rel <= 1e-9, "n={n} rel={rel}");
        }
    }

    #[test]
    fn sample_complexity_paths_agree() {
        assert_eq!(sample_complexity_m(0, 0.3).unwrap(), 180_000);
        assert_eq!(sample_complexity_m(50, 100.0).unwrap(), 180_000);
        let direct = sample_complexity_m_direct(10, 0.05);
        let logged = sample_complexity_m(10, 0.05).unwrap();
        assert_eq!(logged, direct.ceil() as u64);
        let e = (-1.2f64).exp();
        let by_hand = 180_000.0 * (1.0 + 3.0 * e).powi(10) / (1.0 + e).powi(20);
        assert!((direct - by_hand).abs() <= 1e-12 * by_hand);
        assert!(sample_complexity_m(1_000_000, 0.01).is_err());
        assert!(sample_complexity_m(3, -1.0).is_err());
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let b = 1024.0;
        let exp = Exp::new(b).unwrap();
        let mut r = rng(1);
        let vals: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut r)).collect();
        let fit = porter_thomas_fit(&vals).unwrap();
        assert!((fit.rate / b - 1.0).abs() <= 0.03);
        assert!(fit.p_value > 0.01);
    }

    #[test]
    fn constant_values_are_rejected_by_ks() {
        let fit = porter_thomas_fit(&[0.25; 200]).unwrap();
        assert!(fit.ks_statistic > 0.5);
        assert!(fit.p_value < 1e-6);
        assert!(porter_thomas_fit(&[1.0; 99]).is_err());
        let mut bad = vec![1.0; 150];
        bad[3] = 0.0;
        assert!(matches!(porter_thomas_fit(&bad), Err(Error::NonPositiveValue(_))));
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Standard critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        // Both series agree where they meet.
        let a = kolmogorov_survival(1.1799999);
        let b = kolmogorov_survival(1.18);
        assert!((a - b).abs() < 1e-6);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn aggregate_reference_values() {
        let s = aggregate("a", vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.stderr), (1.0, 0.0));
        let s = aggregate("a", vec![0.0, 2.0]).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-15 && (s.stderr - 1.0).abs() < 1e-15);
        assert!(aggregate("a", vec![1.0]).is_err());

        let mut r = rng(2);
        let vals: Vec<f64> = (0..2000).map(|_| r.sample(StandardNormal)).collect();
        let s = aggregate("g", vals).unwrap();
        assert!(s.mean.abs() <= 0.07);
        assert!((s.stderr - 0.022).abs() <= 0.003);
    }

    #[test]
    fn stat_rows_round_trip() {
        let rows = vec![StatRow {
            stat_name: "quantum_fourth".into(),
            architecture: "all-to-all".into(),
            n: 12,
            depth_or_t: 8.0,
            partition: "greedy".into(),
            instances: 200,
            mean: 23.5,
            stderr: 0.25,
            convention: "plain".into(),
        }];
        let mut buf = Vec::new();
        write_stat_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("stat_name,architecture,n,depth_or_T,partition,instances,mean,stderr,convention\n"));
        assert_eq!(read_stat_rows(buf.as_slice()).unwrap(), rows);
        assert!(read_stat_rows("a,b\n1,2\n".as_bytes()).is_err());
    }
}
