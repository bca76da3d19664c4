//! Closed-form moments of Brownian-circuit output distributions.
//!
//! `jt` is the dimensionless product of coupling scale and evolution time.
//! Throughout, `u = e^{-12 jt}` and `v = u² = e^{-24 jt}`. Every positive
//! formula has a `_ln` variant returning its natural log. The plain variant
//! exponentiates it, so results underflow gracefully instead of producing
//! `inf * 0` artefacts.
//!
//! Functions take plain arguments and assume valid ranges (`jt ≥ 0`,
//! `hx ≤ n`, `k, c ≥ 1`, `1 ≤ subsets ≤ n`). [`Formula::evaluate`] is the
//! checked entry point.

use std::fmt;
use std::str::FromStr;

use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, neumaier_sum};

const LN2: f64 = std::f64::consts::LN_2;

/// `ln(1 - e^{-12 jt})`
fn ln_one_minus_u(jt: f64) -> f64 {
    (-(-12.0 * jt).exp_m1()).ln()
}

/// `ln(1 + e^{-12 jt})`
fn ln_one_plus_u(jt: f64) -> f64 {
    (-12.0 * jt).exp().ln_1p()
}

/// `e^{-24 jt}`
fn v(jt: f64) -> f64 {
    (-24.0 * jt).exp()
}

/// `exponent · ln(base)` with `0 · ln 0 = 0`.
fn pow_ln(exponent: f64, ln_base: f64) -> f64 {
    if exponent == 0.0 {
        0.0
    } else {
        exponent * ln_base
    }
}

/// Which quadratic spectrum is used in the exact finite-n sums.
///
/// `Exact` has eigenvalue `4J z (3n - 2z - 1)/n` over Hamming weight `z`.
/// `SpoofSection` is the variant without the `-1`, used by the
/// disjoint-subsystem overlap.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Spectrum {
    #[default]
    Exact,
    SpoofSection,
}

impl Spectrum {
    fn offset(self) -> f64 {
        match self {
            Spectrum::Exact => 1.0,
            Spectrum::SpoofSection => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Exact finite-n sums

/// `E[q(0^n)] = 2^{-n} Σ_w C(n,w) exp(-4 jt w(3n-2w-1)/n)`.
pub fn return_prob_exact(n: usize, jt: f64) -> f64 {
    return_prob_exact_ln(n, jt).exp()
}

pub fn return_prob_exact_ln(n: usize, jt: f64) -> f64 {
    let nf = n as f64;
    let terms: Vec<f64> = (0..=n)
        .map(|w| {
            let wf = w as f64;
            ln_binomial(n as u64, w as u64) - 4.0 * jt * wf * (3.0 * nf - 2.0 * wf - 1.0) / nf
        })
        .collect();
    -nf * LN2 + log_sum_exp(&terms)
}

/// Largest register for which the signed weight-class coefficients are
/// computed exactly in 128-bit integers.
const EXACT_COEFF_MAX: usize = 120;

fn binomial_rows(n: usize) -> Vec<Vec<i128>> {
    let mut rows: Vec<Vec<i128>> = vec![vec![1]];
    for m in 1..=n {
        let prev = &rows[m - 1];
        let row = (0..=m)
            .map(|k| {
                let a = if k > 0 { prev[k - 1] } else { 0 };
                let b = if k < m { prev[k] } else { 0 };
                a + b
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// `c_w = Σ_z (-1)^{x·z}` over `z` of weight `w`, for `|x| = hx`.
fn signed_weight_counts(m: usize, hx: usize) -> Vec<f64> {
    if m <= EXACT_COEFF_MAX {
        let rows = binomial_rows(m);
        (0..=m)
            .map(|w| {
                let mut c: i128 = 0;
                for a in w.saturating_sub(m - hx)..=w.min(hx) {
                    let t = rows[hx][a] * rows[m - hx][w - a];
                    c += if a % 2 == 0 { t } else { -t };
                }
                c as f64
            })
            .collect()
    } else {
        (0..=m)
            .map(|w| {
                neumaier_sum((w.saturating_sub(m - hx)..=w.min(hx)).map(|a| {
                    let mag = (ln_binomial(hx as u64, a as u64)
                        + ln_binomial((m - hx) as u64, (w - a) as u64))
                    .exp();
                    if a % 2 == 0 {
                        mag
                    } else {
                        -mag
                    }
                }))
            })
            .collect()
    }
}

/// `2^{-m} Σ_{z ∈ {0,1}^m} (-1)^{x·z} exp(-rate |z| (3m - 2|z| - offset))`.
fn signed_spectrum_sum(m: usize, hx: usize, rate: f64, offset: f64) -> f64 {
    let mf = m as f64;
    let counts = signed_weight_counts(m, hx);
    let s = neumaier_sum(counts.iter().enumerate().map(|(w, &c)| {
        let wf = w as f64;
        c * (-rate * wf * (3.0 * mf - 2.0 * wf - offset)).exp()
    }));
    s * (-mf).exp2()
}

/// `E[q(x)]` for any `x` of Hamming weight `hx`, exact at every `n`.
pub fn transition_prob_exact(n: usize, jt: f64, hx: usize, spectrum: Spectrum) -> f64 {
    signed_spectrum_sum(n, hx, 4.0 * jt / n as f64, spectrum.offset())
}

/// Finite-size overlap `E[q_U(x) A_U(x)]` for `K` equal subsets of
/// `M = n/K` qubits with coupling amplification `amplification`.
///
/// Product of the whole-system transition sum and one sum per subset with
/// rate `4 A² jt / n` on `M` qubits. `subset_weights[ℓ]` is the Hamming
/// weight of `x` restricted to subset `ℓ`. With [`Spectrum::Exact`] each
/// factor is an exact transition probability (a one-qubit subset contributes
/// exactly 1). [`Spectrum::SpoofSection`] drops the `-1` in every factor.
pub fn pq_overlap_finite(
    n: usize,
    jt: f64,
    amplification: f64,
    subset_weights: &[usize],
    spectrum: Spectrum,
) -> f64 {
    let k = subset_weights.len();
    let m = n / k;
    let hx: usize = subset_weights.iter().sum();
    let nf = n as f64;
    let off = spectrum.offset();
    let full = signed_spectrum_sum(n, hx, 4.0 * jt / nf, off);
    let a2 = amplification * amplification;
    subset_weights
        .iter()
        .map(|&h| signed_spectrum_sum(m, h, 4.0 * a2 * jt / nf, off))
        .fold(full, |acc, f| acc * f)
}

// ---------------------------------------------------------------------------
// Large-n forms

/// `E[q(x)^k] ≈ (k!/2^{kn}) (1-u)^{k hx} (1+u)^{k(n-hx)}`.
pub fn kth_moment_largen(n: usize, jt: f64, k: u32, hx: usize) -> f64 {
    kth_moment_largen_ln(n, jt, k, hx).exp()
}

pub fn kth_moment_largen_ln(n: usize, jt: f64, k: u32, hx: usize) -> f64 {
    let kf = k as f64;
    ln_factorial(k as u64) - kf * n as f64 * LN2
        + pow_ln(kf * hx as f64, ln_one_minus_u(jt))
        + pow_ln(kf * (n - hx) as f64, ln_one_plus_u(jt))
}

/// `ln((1-u)^p + (1+u)^p)`
fn ln_binomial_pair(jt: f64, p: f64) -> f64 {
    log_sum_exp(&[pow_ln(p, ln_one_minus_u(jt)), pow_ln(p, ln_one_plus_u(jt))])
}

/// `Σ_x E[q(x)^k] ≈ (k!/2^{kn}) [(1-u)^k + (1+u)^k]^n`.
pub fn kth_moment_sum(n: usize, jt: f64, k: u32) -> f64 {
    kth_moment_sum_ln(n, jt, k).exp()
}

pub fn kth_moment_sum_ln(n: usize, jt: f64, k: u32) -> f64 {
    let nf = n as f64;
    ln_factorial(k as u64) - k as f64 * nf * LN2 + nf * ln_binomial_pair(jt, k as f64)
}

/// `E[XEB(U,U)] = 2 (1+v)^n`.
pub fn xeb_quantum_expect(n: usize, jt: f64) -> f64 {
    xeb_quantum_expect_ln(n, jt).exp()
}

pub fn xeb_quantum_expect_ln(n: usize, jt: f64) -> f64 {
    LN2 + n as f64 * v(jt).ln_1p()
}

/// Small-`v` expansion `1 + 2n v`, in the minus-one score convention.
pub fn xeb_quantum_expect_expansion(n: usize, jt: f64) -> f64 {
    1.0 + 2.0 * n as f64 * v(jt)
}

/// `Σ_x E[q(x)^3] = (3!/2^{2n}) (1+3v)^n`.
pub fn third_moment(n: usize, jt: f64) -> f64 {
    third_moment_ln(n, jt).exp()
}

pub fn third_moment_ln(n: usize, jt: f64) -> f64 {
    let nf = n as f64;
    6f64.ln() - 2.0 * nf * LN2 + nf * (3.0 * v(jt)).ln_1p()
}

/// `E[(Σ_x q(x)^2)^2] = (4!/2^{2n}) (1+v)^{2n}`.
pub fn fourth_moment(n: usize, jt: f64) -> f64 {
    fourth_moment_ln(n, jt).exp()
}

pub fn fourth_moment_ln(n: usize, jt: f64) -> f64 {
    let nf = n as f64;
    24f64.ln() - 2.0 * nf * LN2 + 2.0 * nf * v(jt).ln_1p()
}

/// `(E[Σ q²])² / (4 E[(Σ q²)²])`; the second moment is the `k = 2` sum.
pub fn paley_zygmund_ratio(n: usize, jt: f64) -> f64 {
    (2.0 * kth_moment_sum_ln(n, jt, 2) - 4f64.ln() - fourth_moment_ln(n, jt)).exp()
}

/// `2^{3n} Σ_x E[q(x)^4] = 4! (1 + 6v + v²)^n`.
pub fn quantum_fourth_sum(n: usize, jt: f64) -> f64 {
    quantum_fourth_sum_ln(n, jt).exp()
}

pub fn quantum_fourth_sum_ln(n: usize, jt: f64) -> f64 {
    let v = v(jt);
    24f64.ln() + n as f64 * (6.0 * v + v * v).ln_1p()
}

/// Spoofer overlap `E[q(x)^c A(x)^c] ≈ ((c!)^{1+K}/2^{2cn}) (1-u)^{2c hx} (1+u)^{2c(n-hx)}`.
pub fn spoofer_overlap(n: usize, jt: f64, subsets: usize, c: u32, hx: usize) -> f64 {
    spoofer_overlap_ln(n, jt, subsets, c, hx).exp()
}

pub fn spoofer_overlap_ln(n: usize, jt: f64, subsets: usize, c: u32, hx: usize) -> f64 {
    let cf = c as f64;
    (1 + subsets) as f64 * ln_factorial(c as u64) - 2.0 * cf * n as f64 * LN2
        + pow_ln(2.0 * cf * hx as f64, ln_one_minus_u(jt))
        + pow_ln(2.0 * cf * (n - hx) as f64, ln_one_plus_u(jt))
}

/// `Σ_x` of [`spoofer_overlap`]: `((c!)^{1+K}/2^{2cn}) [(1-u)^{2c} + (1+u)^{2c}]^n`.
pub fn spoofer_overlap_sum(n: usize, jt: f64, subsets: usize, c: u32) -> f64 {
    spoofer_overlap_sum_ln(n, jt, subsets, c).exp()
}

pub fn spoofer_overlap_sum_ln(n: usize, jt: f64, subsets: usize, c: u32) -> f64 {
    let (cf, nf) = (c as f64, n as f64);
    (1 + subsets) as f64 * ln_factorial(c as u64) - 2.0 * cf * nf * LN2 + nf * ln_binomial_pair(jt, 2.0 * cf)
}

/// `E[A(x)^k] ≈ ((k!)^K/2^{kn}) (1-u)^{k hx} (1+u)^{k(n-hx)}` for the
/// product of `K` independent subset distributions.
pub fn disjoint_moment(n: usize, jt: f64, subsets: usize, k: u32, hx: usize) -> f64 {
    disjoint_moment_ln(n, jt, subsets, k, hx).exp()
}

pub fn disjoint_moment_ln(n: usize, jt: f64, subsets: usize, k: u32, hx: usize) -> f64 {
    kth_moment_largen_ln(n, jt, k, hx) + (subsets as f64 - 1.0) * ln_factorial(k as u64)
}

pub fn disjoint_moment_sum(n: usize, jt: f64, subsets: usize, k: u32) -> f64 {
    disjoint_moment_sum_ln(n, jt, subsets, k).exp()
}

pub fn disjoint_moment_sum_ln(n: usize, jt: f64, subsets: usize, k: u32) -> f64 {
    kth_moment_sum_ln(n, jt, k) + (subsets as f64 - 1.0) * ln_factorial(k as u64)
}

/// Long-time variances of the per-bitstring score terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceLimits {
    /// `(2^{1+K} - 1) / 2^{4n}`
    pub spoofer: f64,
    /// `2^{1+K} / 2^{4n}`
    pub spoofer_approx: f64,
    /// `(4! - 4) / 2^{4n} = 20 / 2^{4n}`
    pub quantum: f64,
}

pub fn variance_limits(n: usize, subsets: usize) -> VarianceLimits {
    let scale = (-4.0 * n as f64 * LN2).exp();
    let big = ((1 + subsets) as f64).exp2();
    VarianceLimits { spoofer: (big - 1.0) * scale, spoofer_approx: big * scale, quantum: 20.0 * scale }
}

/// Effective Porter–Thomas dimension `2^n (1+u)^{-n}`.
pub fn porter_thomas_b(n: usize, jt: f64) -> f64 {
    porter_thomas_b_ln(n, jt).exp()
}

pub fn porter_thomas_b_ln(n: usize, jt: f64) -> f64 {
    n as f64 * (LN2 - ln_one_plus_u(jt))
}

/// Overlap under strong single-qubit scrambling:
/// `((c!)^{1+K}/2^{2cn}) (1 + c(2c-1)/3 · v)^n`, independent of `x`.
pub fn onedesign_overlap(n: usize, jt: f64, c: u32, subsets: usize) -> f64 {
    onedesign_overlap_ln(n, jt, c, subsets).exp()
}

pub fn onedesign_overlap_ln(n: usize, jt: f64, c: u32, subsets: usize) -> f64 {
    let cf = c as f64;
    (1 + subsets) as f64 * ln_factorial(c as u64) - 2.0 * cf * n as f64 * LN2
        + n as f64 * (cf * (2.0 * cf - 1.0) / 3.0 * v(jt)).ln_1p()
}

/// Minus-one convention score of the scrambled spoofer, `(1 + v/3)^n - 1`.
pub fn onedesign_xeb(n: usize, jt: f64) -> f64 {
    (n as f64 * (v(jt) / 3.0).ln_1p()).exp_m1()
}

/// Bounds on expected scores of depth-`d` all-to-all circuits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteBounds {
    /// `2^{(1/3)(1/5)^d n}`
    pub quantum_lower: f64,
    /// `(1 + (1/15)^d)^{n/(d²+1)}`
    pub spoofer_lower: f64,
    /// `(1 + (1/3)(2/5)^d)^n`
    pub quantum_lower_alt: f64,
}

pub fn discrete_bounds(n: usize, d: u32) -> DiscreteBounds {
    let (nf, df) = (n as f64, d as f64);
    DiscreteBounds {
        quantum_lower: (LN2 * nf * 0.2f64.powi(d as i32) / 3.0).exp(),
        spoofer_lower: (nf / (df * df + 1.0) * (1.0 / 15f64).powi(d as i32).ln_1p()).exp(),
        quantum_lower_alt: (nf * (0.4f64.powi(d as i32) / 3.0).ln_1p()).exp(),
    }
}

// ---------------------------------------------------------------------------
// Checked dispatch

/// Named formulas for command-line evaluation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Formula {
    ReturnProbExact,
    TransitionProbExact,
    TransitionProbSpoofSpectrum,
    KthMomentLargeN,
    KthMomentSum,
    XebQuantumExpect,
    ThirdMoment,
    FourthMoment,
    QuantumFourthSum,
    SpooferOverlap,
    SpooferOverlapSum,
    DisjointMoment,
    DisjointMomentSum,
    PorterThomasB,
    OneDesignOverlap,
}

impl Formula {
    pub const ALL: [Formula; 15] = [
        Formula::ReturnProbExact,
        Formula::TransitionProbExact,
        Formula::TransitionProbSpoofSpectrum,
        Formula::KthMomentLargeN,
        Formula::KthMomentSum,
        Formula::XebQuantumExpect,
        Formula::ThirdMoment,
        Formula::FourthMoment,
        Formula::QuantumFourthSum,
        Formula::SpooferOverlap,
        Formula::SpooferOverlapSum,
        Formula::DisjointMoment,
        Formula::DisjointMomentSum,
        Formula::PorterThomasB,
        Formula::OneDesignOverlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Formula::ReturnProbExact => "return-prob",
            Formula::TransitionProbExact => "transition-prob",
            Formula::TransitionProbSpoofSpectrum => "transition-prob-nominus",
            Formula::KthMomentLargeN => "kth-moment",
            Formula::KthMomentSum => "kth-moment-sum",
            Formula::XebQuantumExpect => "xeb-quantum",
            Formula::ThirdMoment => "third-moment",
            Formula::FourthMoment => "fourth-moment",
            Formula::QuantumFourthSum => "quantum-fourth-sum",
            Formula::SpooferOverlap => "spoofer-overlap",
            Formula::SpooferOverlapSum => "spoofer-overlap-sum",
            Formula::DisjointMoment => "disjoint-moment",
            Formula::DisjointMomentSum => "disjoint-moment-sum",
            Formula::PorterThomasB => "porter-thomas-b",
            Formula::OneDesignOverlap => "onedesign-overlap",
        }
    }

    /// Returns `(value, ln value)`. Signed results report `ln |value|`.
    pub fn evaluate(self, p: &FormulaParams) -> Result<(f64, f64)> {
        p.validate()?;
        let (n, jt, hx) = (p.n, p.jt, p.hx);
        let k = p.order;
        let s = p.subsets;
        let ln = match self {
            Formula::ReturnProbExact => return_prob_exact_ln(n, jt),
            Formula::TransitionProbExact => {
                let v = transition_prob_exact(n, jt, hx, Spectrum::Exact);
                return Ok((v, v.abs().ln()));
            }
            Formula::TransitionProbSpoofSpectrum => {
                let v = transition_prob_exact(n, jt, hx, Spectrum::SpoofSection);
                return Ok((v, v.abs().ln()));
            }
            Formula::KthMomentLargeN => kth_moment_largen_ln(n, jt, k, hx),
            Formula::KthMomentSum => kth_moment_sum_ln(n, jt, k),
            Formula::XebQuantumExpect => xeb_quantum_expect_ln(n, jt),
            Formula::ThirdMoment => third_moment_ln(n, jt),
            Formula::FourthMoment => fourth_moment_ln(n, jt),
            Formula::QuantumFourthSum => quantum_fourth_sum_ln(n, jt),
            Formula::SpooferOverlap => spoofer_overlap_ln(n, jt, s, k, hx),
            Formula::SpooferOverlapSum => spoofer_overlap_sum_ln(n, jt, s, k),
            Formula::DisjointMoment => disjoint_moment_ln(n, jt, s, k, hx),
            Formula::DisjointMomentSum => disjoint_moment_sum_ln(n, jt, s, k),
            Formula::PorterThomasB => porter_thomas_b_ln(n, jt),
            Formula::OneDesignOverlap => onedesign_overlap_ln(n, jt, k, s),
        };
        Ok((ln.exp(), ln))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formula::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Formula::ALL.iter().map(|f| f.name()).collect();
            Error::InvalidParameter(format!("unknown formula {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Parameters for [`Formula::evaluate`]. `order` is the moment order (`k`
/// or `c`), `subsets` the subset count `K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormulaParams {
    pub n: usize,
    pub jt: f64,
    pub order: u32,
    pub subsets: usize,
    pub hx: usize,
}

impl FormulaParams {
    pub fn new(n: usize, jt: f64) -> Self {
        Self { n, jt, order: 1, subsets: 1, hx: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.jt >= 0.0) || !self.jt.is_finite() {
            return bad(format!("JT must be finite and non-negative, got {}", self.jt));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.hx > self.n {
            return bad(format!("Hamming weight {} exceeds n = {}", self.hx, self.n));
        }
        if self.order == 0 {
            return bad("moment order must be at least 1".into());
        }
        if self.subsets == 0 || self.subsets > self.n {
            return bad(format!("subset count {} outside 1..={}", self.subsets, self.n));
        }
        Ok(())
    }
}
