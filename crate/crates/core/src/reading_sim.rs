//! Reading as sequential Bayesian updating over a finite noisy channel.
//!
//! A reader fixating word `w*` draws samples `e ~ p(e | w*)` i.i.d., updates a
//! posterior over the lexicon after each one, and moves on once the posterior
//! entropy is at most `phi`. Finite output alphabets keep every expectation
//! exactly computable, so the information identities behind the closed-form
//! sample-count prediction `k ≈ (H(W) − phi) / I(W; E)` can be checked
//! directly.
//!
//! Exact expectations over `k` samples enumerate *multisets* of symbols
//! (samples are exchangeable given `w`), weighted by their multinomial
//! probability. The chain-rule check enumerates ordered sequences instead, so
//! the two routes stay independent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes_channel::Posterior;
use crate::glyphs::Condition;
use crate::info;
use crate::lexicon::Lexicon;
use crate::seeds::{self, Stream};

/// Largest number of outcomes (multisets or sequences) enumerated exactly.
pub const ENUMERATION_BUDGET: u64 = 1_000_000;
pub const DEFAULT_MAX_K: usize = 10_000;
/// Draws used by expected-mode simulation once exact enumeration is over budget.
pub const FALLBACK_MONTE_CARLO_DRAWS: usize = 4_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("fidelity must be in (0, 1], got {0}")]
    InvalidFidelity(f64),
    #[error("a channel needs at least 2 words, got {0}")]
    TooFewWords(usize),
    #[error("symbol {0:?} has zero probability under the current posterior")]
    ImpossibleEvidence(String),
    #[error("symbol index {0} is outside the output alphabet")]
    UnknownSymbol(usize),
    #[error("word {0:?} is not in the channel's lexicon")]
    UnknownWord(String),
    #[error("posterior belongs to a different lexicon")]
    LexiconMismatch,
    #[error("exact enumeration needs {needed} outcomes (budget {limit}); use MonteCarlo instead")]
    Budget { needed: u64, limit: u64 },
    #[error("sample-count prediction is undefined when I(W;E) = {mi} <= 0")]
    UndefinedPrediction { mi: f64 },
    #[error("invalid threshold phi = {0}")]
    InvalidThreshold(f64),
    #[error("{0}")]
    InvalidArgument(String),
}

/// `p(e | w)` over a finite output alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    words: Lexicon,
    outputs: Vec<String>,
    /// Row per word, column per symbol.
    cond_pmf: Vec<Vec<f64>>,
}

impl DiscreteChannel {
    pub fn new(words: Lexicon, outputs: Vec<String>, cond_pmf: Vec<Vec<f64>>) -> Result<Self, SimError> {
        if outputs.is_empty() {
            return Err(SimError::InvalidChannel("empty output alphabet".into()));
        }
        if cond_pmf.len() != words.len() {
            return Err(SimError::InvalidChannel(format!(
                "{} rows for {} words",
                cond_pmf.len(),
                words.len()
            )));
        }
        for (i, row) in cond_pmf.iter().enumerate() {
            if row.len() != outputs.len() {
                return Err(SimError::InvalidChannel(format!(
                    "row {:?} has {} entries for {} symbols",
                    words.word(i),
                    row.len(),
                    outputs.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(SimError::InvalidChannel(format!("row {:?} has a negative entry", words.word(i))));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(SimError::InvalidChannel(format!("row {:?} sums to {s}", words.word(i))));
            }
        }
        Ok(Self {
            words,
            outputs,
            cond_pmf,
        })
    }

    /// Empirical channel from `(true word, recognized word)` pairs, with
    /// additive smoothing. Output alphabet = the lexicon's words; words with no
    /// pairs get a uniform row.
    pub fn from_confusions<'a, I>(words: Lexicon, pairs: I, smoothing: f64) -> Result<Self, SimError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        if smoothing < 0.0 {
            return Err(SimError::InvalidArgument("smoothing must be >= 0".into()));
        }
        let n = words.len();
        let mut counts = vec![vec![0.0; n]; n];
        for (t, r) in pairs {
            let i = words.index_of(t).ok_or_else(|| SimError::UnknownWord(t.to_string()))?;
            let j = words.index_of(r).ok_or_else(|| SimError::UnknownWord(r.to_string()))?;
            counts[i][j] += 1.0;
        }
        let rows = counts
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum::<f64>() + smoothing * n as f64;
                if total <= 0.0 {
                    vec![1.0 / n as f64; n]
                } else {
                    let mut r: Vec<f64> = row.iter().map(|c| (c + smoothing) / total).collect();
                    info::normalize(&mut r);
                    r
                }
            })
            .collect();
        let outputs = words.words().map(str::to_string).collect();
        Self::new(words, outputs, rows)
    }

    pub fn words(&self) -> &Lexicon {
        &self.words
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn row(&self, word_index: usize) -> &[f64] {
        &self.cond_pmf[word_index]
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.outputs.iter().position(|s| s == symbol)
    }

    fn sample(&self, word_index: usize, rng: &mut ChaCha8Rng) -> usize {
        sample_index(&self.cond_pmf[word_index], rng)
    }
}

fn sample_index(pmf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(pmf.len() - 1)
}

/// Output alphabet = word identities; `p(e = w | w) = fidelity`, the rest
/// spread uniformly over the other symbols.
pub fn make_symmetric_channel(lex: &Lexicon, fidelity: f64) -> Result<DiscreteChannel, SimError> {
    let n = lex.len();
    if n < 2 {
        return Err(SimError::TooFewWords(n));
    }
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(SimError::InvalidFidelity(fidelity));
    }
    let off = (1.0 - fidelity) / (n - 1) as f64;
    let rows = (0..n)
        .map(|i| (0..n).map(|j| if i == j { fidelity } else { off }).collect())
        .collect();
    DiscreteChannel::new(lex.clone(), lex.words().map(str::to_string).collect(), rows)
}

/// Exact I(W; E) = Σ p(w) p(e|w) ln(p(e|w) / p(e)).
pub fn channel_mi(ch: &DiscreteChannel) -> f64 {
    let prior = ch.words.probs();
    let m = ch.outputs.len();
    let marginal: Vec<f64> = (0..m)
        .map(|j| prior.iter().zip(&ch.cond_pmf).map(|(p, row)| p * row[j]).sum())
        .collect();
    let mut mi = 0.0;
    for (p, row) in prior.iter().zip(&ch.cond_pmf) {
        for (j, &pe) in row.iter().enumerate() {
            if pe > 0.0 {
                mi += p * pe * (pe / marginal[j]).ln();
            }
        }
    }
    mi
}

/// One step of Bayes' rule: `q'(w) ∝ q(w) p(e | w)`.
pub fn bayes_update(q: &Posterior, ch: &DiscreteChannel, e: usize) -> Result<Posterior, SimError> {
    if q.lexicon_id() != ch.words.id() || q.probs().len() != ch.words.len() {
        return Err(SimError::LexiconMismatch);
    }
    if e >= ch.outputs.len() {
        return Err(SimError::UnknownSymbol(e));
    }
    let mut next: Vec<f64> = q.probs().iter().zip(&ch.cond_pmf).map(|(p, row)| p * row[e]).collect();
    if info::normalize(&mut next) <= 0.0 {
        return Err(SimError::ImpossibleEvidence(ch.outputs[e].clone()));
    }
    Ok(Posterior::from_raw(q.lexicon_id(), next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectationMethod {
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of multisets of size `k` over `m` symbols.
pub fn multiset_count(m: usize, k: usize) -> u64 {
    binomial((k + m - 1) as u64, (m - 1) as u64)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// E over E₁..E_k of H(W | E₁..E_k), samples i.i.d. given W, W from the prior.
pub fn expected_posterior_entropy(ch: &DiscreteChannel, k: usize, method: ExpectationMethod) -> Result<f64, SimError> {
    let prior = ch.words.probs();
    if k == 0 {
        return Ok(info::entropy(&prior));
    }
    match method {
        ExpectationMethod::Exact => {
            let m = ch.outputs.len();
            let needed = multiset_count(m, k);
            if needed > ENUMERATION_BUDGET {
                return Err(SimError::Budget {
                    needed,
                    limit: ENUMERATION_BUDGET,
                });
            }
            let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
            let log_pmf: Vec<Vec<f64>> = (0..m)
                .map(|j| ch.cond_pmf.iter().map(|row| row[j].ln()).collect())
                .collect();
            let mut acc = MultisetAcc {
                log_pmf: &log_pmf,
                ln_fact: (0..=k).map(ln_factorial).collect(),
                total: 0.0,
                mass: 0.0,
            };
            acc.walk(0, k, log_prior, 0.0);
            // acc.mass should be 1; dividing guards against accumulated rounding
            Ok(acc.total / acc.mass)
        }
        ExpectationMethod::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(SimError::InvalidArgument("MonteCarlo needs at least one draw".into()));
            }
            let sum: f64 = (0..draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = seeds::rng(seeds::item_seed(seed, i as u64), Stream::MonteCarlo);
                    let w = sample_index(&prior, &mut rng);
                    let mut q = prior.clone();
                    for _ in 0..k {
                        let e = ch.sample(w, &mut rng);
                        for (qi, row) in q.iter_mut().zip(&ch.cond_pmf) {
                            *qi *= row[e];
                        }
                        info::normalize(&mut q);
                    }
                    info::entropy(&q)
                })
                .sum();
            Ok(sum / draws as f64)
        }
    }
}

struct MultisetAcc<'a> {
    log_pmf: &'a [Vec<f64>],
    ln_fact: Vec<f64>,
    total: f64,
    mass: f64,
}

impl MultisetAcc<'_> {
    /// `log_joint[w]` = ln p(w) + Σ c_j ln p(e_j | w) for the counts chosen so far;
    /// `ln_coef` accumulates −Σ ln c_j!.
    fn walk(&mut self, symbol: usize, remaining: usize, log_joint: Vec<f64>, ln_coef: f64) {
        let m = self.log_pmf.len();
        if symbol == m - 1 {
            let mut lj = log_joint;
            if remaining > 0 {
                for (l, &lp) in lj.iter_mut().zip(&self.log_pmf[symbol]) {
                    *l += remaining as f64 * lp;
                }
            }
            let ln_coef = ln_coef - self.ln_fact[remaining] + self.ln_fact[self.ln_fact.len() - 1];
            self.leaf(&lj, ln_coef);
            return;
        }
        for c in 0..=remaining {
            let mut lj = log_joint.clone();
            if c > 0 {
                for (l, &lp) in lj.iter_mut().zip(&self.log_pmf[symbol]) {
                    *l += c as f64 * lp;
                }
            }
            self.walk(symbol + 1, remaining - c, lj, ln_coef - self.ln_fact[c]);
        }
    }

    fn leaf(&mut self, log_joint: &[f64], ln_coef: f64) {
        let max = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return;
        }
        let mut w: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
        let z = info::normalize(&mut w);
        let p = (ln_coef + max + z.ln()).exp();
        self.mass += p;
        self.total += p * info::entropy(&w);
    }
}

/// I(W; E₁..E_k) by enumerating every ordered length-`k` sequence:
/// Σ_{w,s} p(w) p(s|w) ln(p(s|w) / p(s)).
pub fn joint_sequence_mi(ch: &DiscreteChannel, k: usize) -> Result<f64, SimError> {
    let m = ch.outputs.len();
    let needed = (m as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
    if needed > ENUMERATION_BUDGET {
        return Err(SimError::Budget {
            needed,
            limit: ENUMERATION_BUDGET,
        });
    }
    let prior = ch.words.probs();
    let n = prior.len();
    let mut seq = vec![0usize; k];
    let mut mi = 0.0;
    loop {
        let cond: Vec<f64> = (0..n)
            .map(|w| seq.iter().map(|&e| ch.cond_pmf[w][e]).product())
            .collect();
        let ps: f64 = prior.iter().zip(&cond).map(|(p, c)| p * c).sum();
        for (p, &c) in prior.iter().zip(&cond) {
            if c > 0.0 {
                mi += p * c * (c / ps).ln();
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(mi);
            }
            seq[pos] += 1;
            if seq[pos] < m {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRuleReport {
    pub k: usize,
    /// I(W; E₁..E_k), exact.
    pub joint_mi: f64,
    /// k · I(W; E).
    pub additive_mi: f64,
    pub residual: f64,
}

/// Compares the exact joint information of `k` i.i.d.-given-`w` samples with
/// `k` times the single-sample information.
pub fn verify_chain_rule(ch: &DiscreteChannel, k: usize) -> Result<ChainRuleReport, SimError> {
    if k > 3 {
        return Err(SimError::InvalidArgument(format!("chain-rule check supports k <= 3, got {k}")));
    }
    let joint_mi = if k == 0 { 0.0 } else { joint_sequence_mi(ch, k)? };
    let additive_mi = k as f64 * channel_mi(ch);
    Ok(ChainRuleReport {
        k,
        joint_mi,
        additive_mi,
        residual: (joint_mi - additive_mi).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KPrediction {
    pub k: f64,
    /// `phi >= h_w`: no samples are needed.
    pub threshold_pre_satisfied: bool,
}

/// `(h_w − phi) / mi`.
pub fn predicted_k(h_w: f64, phi: f64, mi: f64) -> Result<KPrediction, SimError> {
    if !(phi >= 0.0) {
        return Err(SimError::InvalidThreshold(phi));
    }
    if phi >= h_w {
        return Ok(KPrediction {
            k: 0.0,
            threshold_pre_satisfied: phi > h_w,
        });
    }
    if !(mi > 0.0) {
        return Err(SimError::UndefinedPrediction { mi });
    }
    Ok(KPrediction {
        k: (h_w - phi) / mi,
        threshold_pre_satisfied: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMode {
    /// Draw samples from `p(· | w*)` and stop on the realized posterior entropy.
    Realized,
    /// Stop at the first `k` whose expected posterior entropy is `<= phi`.
    Expected,
}

impl SimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Realized => "Realized",
            SimMode::Expected => "Expected",
        }
    }
}

impl std::str::FromStr for SimMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Realized" | "realized" => Ok(SimMode::Realized),
            "Expected" | "expected" => Ok(SimMode::Expected),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub true_word: String,
    pub threshold_phi: f64,
    pub mode: SimMode,
    pub samples: Vec<usize>,
    /// Entry `i` is the entropy after `i + 1` samples.
    pub entropy_path: Vec<f64>,
    pub k: usize,
    /// Stopped at `max_k` without reaching the threshold.
    pub truncated: bool,
    /// The prior entropy was already `<= phi`; `k = 0`.
    pub threshold_pre_satisfied: bool,
    pub final_posterior: Posterior,
}

impl SimulationTrace {
    pub fn final_entropy(&self, h_w: f64) -> f64 {
        self.entropy_path.last().copied().unwrap_or(h_w)
    }

    /// Information gained from the first sample, `H(W) − H(W | e₁)`
    /// (expected over `e₁` in `Expected` mode). Zero when no sample was drawn.
    pub fn first_sample_ig(&self, h_w: f64) -> f64 {
        self.entropy_path.first().map_or(0.0, |h| h_w - h)
    }
}

/// Simulates reading `w_star` until posterior entropy `<= phi` or `max_k` samples.
pub fn simulate_read(
    w_star: &str,
    ch: &DiscreteChannel,
    phi: f64,
    mode: SimMode,
    rng_seed: u64,
    max_k: usize,
) -> Result<SimulationTrace, SimError> {
    let wi = ch.words.index_of(w_star).ok_or_else(|| SimError::UnknownWord(w_star.to_string()))?;
    if !(phi >= 0.0) {
        return Err(SimError::InvalidThreshold(phi));
    }
    if max_k == 0 {
        return Err(SimError::InvalidArgument("max_k must be >= 1".into()));
    }
    let prior = Posterior::prior(&ch.words);
    let h_w = prior.entropy();
    let mut trace = SimulationTrace {
        true_word: w_star.to_string(),
        threshold_phi: phi,
        mode,
        samples: Vec::new(),
        entropy_path: Vec::new(),
        k: 0,
        truncated: false,
        threshold_pre_satisfied: false,
        final_posterior: prior.clone(),
    };
    if h_w <= phi {
        trace.threshold_pre_satisfied = true;
        return Ok(trace);
    }
    match mode {
        SimMode::Realized => {
            let mut rng = seeds::rng(rng_seed, Stream::Simulation);
            let mut q = prior;
            loop {
                let e = ch.sample(wi, &mut rng);
                q = bayes_update(&q, ch, e)?;
                let h = q.entropy();
                trace.samples.push(e);
                trace.entropy_path.push(h);
                trace.k += 1;
                if h <= phi {
                    break;
                }
                if trace.k >= max_k {
                    trace.truncated = true;
                    break;
                }
            }
            trace.final_posterior = q;
        }
        SimMode::Expected => {
            if channel_mi(ch) <= 1e-15 {
                // no information: the expected entropy never moves
                trace.entropy_path = vec![h_w; max_k];
                trace.k = max_k;
                trace.truncated = true;
                return Ok(trace);
            }
            loop {
                let k = trace.k + 1;
                let h = match expected_posterior_entropy(ch, k, ExpectationMethod::Exact) {
                    Ok(h) => h,
                    Err(SimError::Budget { .. }) => expected_posterior_entropy(
                        ch,
                        k,
                        ExpectationMethod::MonteCarlo {
                            draws: FALLBACK_MONTE_CARLO_DRAWS,
                            seed: rng_seed,
                        },
                    )?,
                    Err(e) => return Err(e),
                };
                trace.entropy_path.push(h);
                trace.k = k;
                if h <= phi {
                    break;
                }
                if k >= max_k {
                    trace.truncated = true;
                    break;
                }
            }
        }
    }
    Ok(trace)
}

/// Simulated reading record with lexical covariates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadingRecord {
    pub word: String,
    pub condition: Condition,
    pub rt_ms: f64,
    pub ig_nats: f64,
    pub log_freq: f64,
    pub length: usize,
    pub surprisal_nats: f64,
    pub contextual_entropy_nats: Option<f64>,
    pub subject: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeLink {
    pub alpha_ms_per_sample: f64,
    pub intercept_ms: f64,
    pub noise_sd_ms: f64,
}

impl Default for TimeLink {
    fn default() -> Self {
        Self {
            alpha_ms_per_sample: 30.0,
            intercept_ms: 100.0,
            noise_sd_ms: 20.0,
        }
    }
}

/// `rt = intercept + alpha · k + N(0, noise_sd)`, clamped at 1 ms.
///
/// `ig_nats` is the information gained from the first sample; covariates come
/// from `lex` (`log_freq = ln p(w)`, `surprisal = −ln p(w)`, length in chars).
pub fn generate_reading_times(
    traces: &[SimulationTrace],
    lex: &Lexicon,
    condition: Condition,
    link: TimeLink,
    seed: u64,
) -> Result<Vec<ReadingRecord>, SimError> {
    if !(link.alpha_ms_per_sample > 0.0) {
        return Err(SimError::InvalidArgument("alpha_ms_per_sample must be > 0".into()));
    }
    if !(link.noise_sd_ms >= 0.0) {
        return Err(SimError::InvalidArgument("noise_sd_ms must be >= 0".into()));
    }
    let h_w = lex.entropy();
    let normal = rand_distr::Normal::new(0.0, link.noise_sd_ms).expect("sd checked");
    traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = lex.prob(&t.true_word).map_err(|_| SimError::UnknownWord(t.true_word.clone()))?;
            let mut rng = seeds::rng(seeds::item_seed(seed, i as u64), Stream::ReadingTimes);
            let noise = if link.noise_sd_ms > 0.0 {
                rand_distr::Distribution::sample(&normal, &mut rng)
            } else {
                0.0
            };
            let rt = (link.intercept_ms + link.alpha_ms_per_sample * t.k as f64 + noise).max(1.0);
            Ok(ReadingRecord {
                word: t.true_word.clone(),
                condition,
                rt_ms: rt,
                ig_nats: t.first_sample_ig(h_w),
                log_freq: p.ln(),
                length: t.true_word.chars().count(),
                surprisal_nats: -p.ln(),
                contextual_entropy_nats: None,
                subject: None,
            })
        })
        .collect()
}
