//! Exact statevector simulation of the QAOA ansatz.
//!
//! The state is `Π_k [e^{-iβ_k Σ X_i} e^{-iγ_k C}] H^{⊗n} |0^n⟩` with
//! `C = Σ w_ij Z_i Z_j`. The cost layer is a diagonal phase multiply against
//! the cached cost diagonal and the mixer is a sweep of single-qubit
//! `RX(2β)` rotations, so no operator matrix is ever materialized.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::problem::{BruteForceResult, QuboProblem};
use crate::seeding;
use crate::{Error, Result};

pub const STATEVECTOR_MAX_N: usize = 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::LengthMismatch { expected: gamma.len(), got: beta.len() });
        }
        if gamma.is_empty() {
            return Err(Error::InvalidArgument("QAOA depth must be at least 1".into()));
        }
        Ok(Self { gamma, beta })
    }

    pub fn zeros(p: usize) -> Self {
        Self { gamma: vec![0.0; p], beta: vec![0.0; p] }
    }

    /// Split a flat `[γ_1..γ_p, β_1..β_p]` vector.
    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() % 2 == 1 {
            return Err(Error::InvalidArgument(format!(
                "flat parameter vector must have even positive length, got {}",
                x.len()
            )));
        }
        let p = x.len() / 2;
        Ok(Self { gamma: x[..p].to_vec(), beta: x[p..].to_vec() })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.gamma.iter().chain(&self.beta).copied().collect()
    }

    pub fn depth(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone)]
pub struct Statevector {
    n: usize,
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    pub fn uniform(n: usize) -> Self {
        let dim = 1usize << n;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Self { n, amplitudes: vec![a; dim] }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1usize << n];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self { n, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("amplitude count {dim} is not a power of two")));
        }
        Ok(Self { n: dim.trailing_zeros() as usize, amplitudes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Multiply by `e^{-iγ d_x}` elementwise.
    pub(crate) fn apply_diagonal_phase(&mut self, diagonal: &[f64], gamma: f64) {
        for (a, &d) in self.amplitudes.iter_mut().zip(diagonal) {
            *a *= Complex64::from_polar(1.0, -gamma * d);
        }
    }

    /// `e^{-iβ X}` on qubit `q`.
    pub(crate) fn apply_rx(&mut self, q: usize, beta: f64) {
        let (s, c) = beta.sin_cos();
        let mis = Complex64::new(0.0, -s);
        let bit = 1usize << q;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = a0 * c + a1 * mis;
                self.amplitudes[i | bit] = a0 * mis + a1 * c;
            }
        }
    }

    /// Mixer layer `e^{-iβ Σ X_i}`.
    pub(crate) fn apply_mixer(&mut self, beta: f64) {
        for q in 0..self.n {
            self.apply_rx(q, beta);
        }
    }
}

fn check_size(problem: &QuboProblem, what: &'static str, max: usize) -> Result<()> {
    if problem.n() > max {
        return Err(Error::TooLarge { what, n: problem.n(), max });
    }
    Ok(())
}

pub fn build_state(problem: &QuboProblem, params: &QaoaParams) -> Result<Statevector> {
    check_size(problem, "statevector simulation", STATEVECTOR_MAX_N)?;
    let diag = problem.cost_diagonal();
    let mut state = Statevector::uniform(problem.n());
    for (&g, &b) in params.gamma.iter().zip(&params.beta) {
        state.apply_diagonal_phase(diag, g);
        state.apply_mixer(b);
    }
    Ok(state)
}

/// `⟨ψ|C|ψ⟩` for a state already built against `problem`.
pub fn state_expectation(problem: &QuboProblem, state: &Statevector) -> Result<f64> {
    if state.n != problem.n() {
        return Err(Error::LengthMismatch { expected: problem.n(), got: state.n });
    }
    Ok(state.amplitudes.iter().zip(problem.cost_diagonal()).map(|(a, d)| a.norm_sqr() * d).sum())
}

pub fn exact_expectation(problem: &QuboProblem, params: &QaoaParams) -> Result<f64> {
    let state = build_state(problem, params)?;
    state_expectation(problem, &state)
}

/// Finite-shot measurement record.
///
/// Serialized as `{"m": int, "counts": {bitstring: int}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSample {
    n: usize,
    m: u64,
    counts: BTreeMap<usize, u64>,
}

#[derive(Serialize, Deserialize)]
struct ShotSampleFile {
    m: u64,
    counts: BTreeMap<String, u64>,
}

impl ShotSample {
    pub fn from_counts(n: usize, counts: BTreeMap<usize, u64>) -> Result<Self> {
        let m: u64 = counts.values().sum();
        if m == 0 {
            return Err(Error::InvalidArgument("shot sample must contain at least one shot".into()));
        }
        if let Some(&k) = counts.keys().next_back() {
            if k >> n != 0 {
                return Err(Error::InvalidArgument(format!("outcome {k} out of range for {n} qubits")));
            }
        }
        Ok(Self { n, m, counts })
    }

    /// Counts from a dense per-outcome histogram.
    pub fn from_histogram(n: usize, histogram: &[u64]) -> Result<Self> {
        let counts = histogram.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect();
        Self::from_counts(n, counts)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    pub fn count_of(&self, bitstring: &str) -> Result<u64> {
        Ok(self.counts.get(&bits::bitstring_to_index(bitstring)?).copied().unwrap_or(0))
    }

    /// Empirical frequencies as a dense vector of length `2^n`.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; 1usize << self.n];
        for (&k, &c) in &self.counts {
            f[k] = c as f64 / self.m as f64;
        }
        f
    }

    pub fn to_json(&self) -> Result<String> {
        let counts = self.counts.iter().map(|(&k, &c)| (bits::index_to_bitstring(k, self.n), c)).collect();
        Ok(serde_json::to_string_pretty(&ShotSampleFile { m: self.m, counts })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ShotSampleFile = serde_json::from_str(s)?;
        let n = f
            .counts
            .keys()
            .next()
            .map(|k| k.len())
            .ok_or_else(|| Error::InvalidArgument("shot sample has no outcomes".into()))?;
        let mut counts = BTreeMap::new();
        for (k, c) in f.counts {
            if k.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: k.len() });
            }
            if c > 0 {
                *counts.entry(bits::bitstring_to_index(&k)?).or_insert(0) += c;
            }
        }
        let sample = Self::from_counts(n, counts)?;
        if sample.m != f.m {
            return Err(Error::InvalidArgument(format!("counts sum to {} but m = {}", sample.m, f.m)));
        }
        Ok(sample)
    }
}

/// Draw `m` i.i.d. outcomes from a probability vector by inverse CDF.
pub fn sample_distribution(probabilities: &[f64], m: u64, seed: u64) -> Result<ShotSample> {
    if m == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    let dim = probabilities.len();
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("distribution length {dim} is not a power of two")));
    }
    let mut cdf = Vec::with_capacity(dim);
    let mut acc = 0.0;
    for &p in probabilities {
        acc += p.max(0.0);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidArgument("distribution has no mass".into()));
    }
    let mut rng = seeding::rng(seed);
    let mut hist = vec![0u64; dim];
    for _ in 0..m {
        let u = rng.random::<f64>() * acc;
        let k = cdf.partition_point(|&c| c <= u).min(dim - 1);
        hist[k] += 1;
    }
    ShotSample::from_histogram(dim.trailing_zeros() as usize, &hist)
}

pub fn sample_bitstrings(state: &Statevector, m: u64, seed: u64) -> Result<ShotSample> {
    sample_distribution(&state.probabilities(), m, seed)
}

/// Shot estimator `(1/m) Σ_shots C(z_shot)`.
pub fn shot_estimate(problem: &QuboProblem, sample: &ShotSample) -> Result<f64> {
    if sample.n != problem.n() {
        return Err(Error::LengthMismatch { expected: problem.n(), got: sample.n });
    }
    let total: f64 = sample.counts.iter().map(|(&k, &c)| c as f64 * problem.value_of_index(k)).sum();
    Ok(total / sample.m as f64)
}

/// Expectation of `C` under a (quasi-)distribution over basis states.
pub fn distribution_expectation(problem: &QuboProblem, dist: &[f64]) -> Result<f64> {
    if dist.len() != 1usize << problem.n() {
        return Err(Error::LengthMismatch { expected: 1usize << problem.n(), got: dist.len() });
    }
    Ok(dist.iter().zip(problem.cost_diagonal()).map(|(p, d)| p * d).sum())
}

/// Probability mass on the optimal bitstrings of `oracle`.
pub fn success_ratio_distribution(dist: &[f64], oracle: &BruteForceResult) -> f64 {
    oracle.optimal_states.iter().filter_map(|&i| dist.get(i)).sum()
}

pub fn success_ratio_state(state: &Statevector, oracle: &BruteForceResult) -> f64 {
    oracle.optimal_states.iter().filter_map(|&i| state.amplitudes.get(i)).map(|a| a.norm_sqr()).sum()
}

pub fn success_ratio_sample(sample: &ShotSample, oracle: &BruteForceResult) -> f64 {
    let hits: u64 = oracle.optimal_states.iter().filter_map(|i| sample.counts.get(i)).sum();
    hits as f64 / sample.m as f64
}
