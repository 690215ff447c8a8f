//! Density-matrix simulation of the QAOA circuit under gate noise.
//!
//! Every `Z_i Z_j` interaction of the cost layer counts as one two-qubit gate
//! and is followed by a two-qubit depolarizing channel. Single-qubit layers
//! are ideal. Folding by an odd factor `f` replaces each interaction `U` by
//! `U (U† U)^{(f-1)/2}` with a channel after every application, which leaves
//! the logical circuit unchanged while multiplying the gate error.
//!
//! Readout error is a classical per-qubit bit flip applied at measurement.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::problem::QuboProblem;
use crate::seeding;
use crate::simulator::{sample_distribution, QaoaParams, ShotSample};
use crate::{Error, Result};

pub const DENSITY_MAX_N: usize = 10;

/// Per-qubit readout flip probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutError {
    /// P(read 1 | prepared 0)
    pub p01: f64,
    /// P(read 0 | prepared 1)
    pub p10: f64,
}

impl ReadoutError {
    pub const IDEAL: Self = Self { p01: 0.0, p10: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Depolarizing probability after each two-qubit interaction.
    pub two_qubit_depol: f64,
    /// One entry per qubit; a single entry applies to every qubit.
    #[serde(default)]
    pub readout: Vec<ReadoutError>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { two_qubit_depol: 0.01, readout: vec![ReadoutError { p01: 0.1, p10: 0.1 }] }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { two_qubit_depol: 0.0, readout: Vec::new() }
    }

    pub fn uniform(two_qubit_depol: f64, p01: f64, p10: f64) -> Self {
        Self { two_qubit_depol, readout: vec![ReadoutError { p01, p10 }] }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let in_range = |x: f64| (0.0..1.0).contains(&x);
        if !in_range(self.two_qubit_depol) {
            return Err(Error::InvalidNoise(format!(
                "two_qubit_depol = {} outside [0, 1)",
                self.two_qubit_depol
            )));
        }
        if self.readout.len() > 1 && self.readout.len() != n {
            return Err(Error::InvalidNoise(format!(
                "readout has {} entries for {n} qubits",
                self.readout.len()
            )));
        }
        for (q, r) in self.readout.iter().enumerate() {
            if !in_range(r.p01) || !in_range(r.p10) {
                return Err(Error::InvalidNoise(format!("qubit {q} readout ({}, {}) outside [0, 1)", r.p01, r.p10)));
            }
        }
        Ok(())
    }

    pub fn readout_for(&self, q: usize) -> ReadoutError {
        match self.readout.len() {
            0 => ReadoutError::IDEAL,
            1 => self.readout[0],
            _ => self.readout[q],
        }
    }
}

/// Odd gate-folding factor (1, 3, 5, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FoldFactor(u32);

impl FoldFactor {
    pub const ONE: Self = Self(1);

    pub fn new(value: u32) -> Result<Self> {
        if value % 2 == 1 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("fold factor must be an odd positive integer, got {value}")))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for FoldFactor {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FoldFactor> for u32 {
    fn from(f: FoldFactor) -> u32 {
        f.0
    }
}

/// Row-major `2^n × 2^n` density matrix.
#[derive(Debug, Clone)]
pub struct DensityState {
    n: usize,
    dim: usize,
    rho: Vec<Complex64>,
}

impl DensityState {
    /// `|+⟩⟨+|^{⊗n}`.
    pub fn plus_state(n: usize) -> Self {
        let dim = 1usize << n;
        Self { n, dim, rho: vec![Complex64::new(1.0 / dim as f64, 0.0); dim * dim] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.rho[a * self.dim + b]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|a| self.get(a, a)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.get(a, a).re).collect()
    }

    /// Largest `|ρ_ab - conj(ρ_ba)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.dim {
            for b in a..self.dim {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue, via the Hermitian eigensolver.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(a, b));
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `ρ → U ρ U†` for the diagonal `U = e^{-iθ Z_i Z_j}`.
    fn apply_zz(&mut self, i: usize, j: usize, theta: f64) {
        let mask = (1usize << i) | (1usize << j);
        let sign = |x: usize| if (x & mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        // Only s_a - s_b ∈ {-2, 0, 2} occurs.
        let up = Complex64::from_polar(1.0, -2.0 * theta);
        let down = up.conj();
        for a in 0..self.dim {
            let sa = sign(a);
            let row = &mut self.rho[a * self.dim..(a + 1) * self.dim];
            for (b, v) in row.iter_mut().enumerate() {
                let d = sa - sign(b);
                if d > 0.0 {
                    *v *= up;
                } else if d < 0.0 {
                    *v *= down;
                }
            }
        }
    }

    /// `ρ → (1-p) ρ + p · Tr_ij(ρ) ⊗ I/4`.
    fn depolarize_pair(&mut self, i: usize, j: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let (bi, bj) = (1usize << i, 1usize << j);
        let mask = bi | bj;
        let patterns = [0, bi, bj, bi | bj];
        let dim = self.dim;
        for a in (0..dim).filter(|a| a & mask == 0) {
            for b in (0..dim).filter(|b| b & mask == 0) {
                let traced: Complex64 = patterns.iter().map(|&k| self.rho[(a | k) * dim + (b | k)]).sum();
                for &k1 in &patterns {
                    for &k2 in &patterns {
                        let v = &mut self.rho[(a | k1) * dim + (b | k2)];
                        *v *= 1.0 - p;
                        if k1 == k2 {
                            *v += traced * (p / 4.0);
                        }
                    }
                }
            }
        }
    }

    /// `ρ → R ρ R†` with `R = e^{-iβX}` on qubit `q`.
    fn apply_rx(&mut self, q: usize, beta: f64) {
        let (s, c) = beta.sin_cos();
        let mis = Complex64::new(0.0, -s);
        let pis = Complex64::new(0.0, s);
        let bit = 1usize << q;
        let dim = self.dim;
        // Left multiplication mixes row pairs.
        for a in (0..dim).filter(|a| a & bit == 0) {
            for b in 0..dim {
                let r0 = self.rho[a * dim + b];
                let r1 = self.rho[(a | bit) * dim + b];
                self.rho[a * dim + b] = r0 * c + r1 * mis;
                self.rho[(a | bit) * dim + b] = r0 * mis + r1 * c;
            }
        }
        // Right multiplication by R† mixes column pairs.
        for a in 0..dim {
            let row = &mut self.rho[a * dim..(a + 1) * dim];
            for b in (0..dim).filter(|b| b & bit == 0) {
                let c0 = row[b];
                let c1 = row[b | bit];
                row[b] = c0 * c + c1 * pis;
                row[b | bit] = c0 * pis + c1 * c;
            }
        }
    }
}

/// Final density matrix of the folded noisy circuit.
pub fn noisy_state(
    problem: &QuboProblem,
    params: &QaoaParams,
    noise: &NoiseModel,
    fold: FoldFactor,
) -> Result<DensityState> {
    let n = problem.n();
    if n > DENSITY_MAX_N {
        return Err(Error::TooLarge { what: "density-matrix simulation", n, max: DENSITY_MAX_N });
    }
    noise.validate(n)?;
    let p = noise.two_qubit_depol;
    let repeats = (fold.value() - 1) / 2;
    let mut rho = DensityState::plus_state(n);
    for (&g, &b) in params.gamma.iter().zip(&params.beta) {
        for e in problem.graph().edges() {
            let theta = g * e.w;
            rho.apply_zz(e.i, e.j, theta);
            rho.depolarize_pair(e.i, e.j, p);
            for _ in 0..repeats {
                rho.apply_zz(e.i, e.j, -theta);
                rho.depolarize_pair(e.i, e.j, p);
                rho.apply_zz(e.i, e.j, theta);
                rho.depolarize_pair(e.i, e.j, p);
            }
        }
        for q in 0..n {
            rho.apply_rx(q, b);
        }
    }
    Ok(rho)
}

/// `Tr(ρ C)` of the folded noisy circuit, before readout.
pub fn noisy_expectation(
    problem: &QuboProblem,
    params: &QaoaParams,
    noise: &NoiseModel,
    fold: FoldFactor,
) -> Result<f64> {
    let rho = noisy_state(problem, params, noise, fold)?;
    Ok(rho.diagonal().iter().zip(problem.cost_diagonal()).map(|(p, c)| p * c).sum())
}

/// Exact action of the local readout channel on a distribution over `2^n`
/// outcomes.
pub fn apply_readout_channel(probabilities: &[f64], noise: &NoiseModel) -> Result<Vec<f64>> {
    let dim = probabilities.len();
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("distribution length {dim} is not a power of two")));
    }
    let n = dim.trailing_zeros() as usize;
    noise.validate(n)?;
    let mut out = probabilities.to_vec();
    for q in 0..n {
        let r = noise.readout_for(q);
        let bit = 1usize << q;
        for i in (0..dim).filter(|i| i & bit == 0) {
            let (p0, p1) = (out[i], out[i | bit]);
            out[i] = (1.0 - r.p01) * p0 + r.p10 * p1;
            out[i | bit] = r.p01 * p0 + (1.0 - r.p10) * p1;
        }
    }
    Ok(out)
}

/// Flip each bit of each shot independently according to the readout model.
fn push_through_readout(sample: &ShotSample, noise: &NoiseModel, seed: u64) -> Result<ShotSample> {
    let n = sample.n();
    let mut rng = seeding::rng(seed);
    let mut hist = vec![0u64; 1usize << n];
    for (&outcome, &count) in sample.counts() {
        for _ in 0..count {
            let mut read = outcome;
            for q in 0..n {
                let r = noise.readout_for(q);
                let flip = if outcome >> q & 1 == 0 { r.p01 } else { r.p10 };
                if flip > 0.0 && rng.random::<f64>() < flip {
                    read ^= 1 << q;
                }
            }
            hist[read] += 1;
        }
    }
    ShotSample::from_histogram(n, &hist)
}

/// Sample the noisy circuit's diagonal, then apply per-qubit readout flips.
pub fn sample_noisy(
    problem: &QuboProblem,
    params: &QaoaParams,
    noise: &NoiseModel,
    fold: FoldFactor,
    m: u64,
    seed: u64,
) -> Result<ShotSample> {
    let rho = noisy_state(problem, params, noise, fold)?;
    let ideal = sample_distribution(&rho.diagonal(), m, seeding::derive(&[seed, 0]))?;
    push_through_readout(&ideal, noise, seeding::derive(&[seed, 1]))
}

/// Calibration run: prepare basis state `index` exactly and measure `m` times
/// through the readout channel.
pub fn sample_prepared(n: usize, index: usize, noise: &NoiseModel, m: u64, seed: u64) -> Result<ShotSample> {
    noise.validate(n)?;
    if index >> n != 0 {
        return Err(Error::InvalidArgument(format!("basis index {index} out of range for {n} qubits")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    let ideal = ShotSample::from_counts(n, [(index, m)].into())?;
    push_through_readout(&ideal, noise, seed)
}
