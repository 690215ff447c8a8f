//! Gaussian-process regression with a Matérn-5/2 ARD kernel.
//!
//! Inputs live in the unit cube; targets are standardized to zero mean and
//! unit variance before fitting and de-standardized on prediction.
//! Hyperparameters are trained by Adam ascent on the log marginal likelihood
//! in log-parameter space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Kernel hyperparameters, stored as logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    log_sigma_v: f64,
    log_lengthscales: Vec<f64>,
    log_sigma_n: f64,
}

impl KernelParams {
    /// `sigma_n` may be zero (noise-free interpolation).
    pub fn new(sigma_v: f64, lengthscales: Vec<f64>, sigma_n: f64) -> Result<Self> {
        if !(sigma_v > 0.0) || lengthscales.is_empty() || lengthscales.iter().any(|&l| !(l > 0.0)) || !(sigma_n >= 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "kernel params need sigma_v > 0, lengthscales > 0, sigma_n >= 0; got {sigma_v}, {lengthscales:?}, {sigma_n}"
            )));
        }
        Ok(Self {
            log_sigma_v: sigma_v.ln(),
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_sigma_n: sigma_n.ln(),
        })
    }

    /// Default starting point for a `dim`-dimensional fit.
    pub fn default_for(dim: usize) -> Self {
        Self::new(1.0, vec![0.2; dim], 0.1).expect("static defaults are valid")
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn sigma_v(&self) -> f64 {
        self.log_sigma_v.exp()
    }

    pub fn sigma_n(&self) -> f64 {
        self.log_sigma_n.exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    /// `[log σ_v, log l_1, ..., log l_D, log σ_n]`.
    pub fn to_log_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.log_sigma_v);
        v.extend(&self.log_lengthscales);
        v.push(self.log_sigma_n);
        v
    }

    pub fn from_log_vector(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self { log_sigma_v: v[0], log_lengthscales: v[1..=d].to_vec(), log_sigma_n: v[d + 1] }
    }
}

/// Matérn-5/2 kernel `σ_v² (1 + √5 r + 5/3 r²) exp(-√5 r)` with the ARD
/// distance `r² = Σ_d (x_d - x'_d)² / l_d²`.
pub fn matern52(x: &[f64], x2: &[f64], params: &KernelParams) -> f64 {
    debug_assert_eq!(x.len(), x2.len());
    let inv_l: Vec<f64> = params.log_lengthscales.iter().map(|l| (-l).exp()).collect();
    matern52_scaled(x, x2, &inv_l, params.sigma_v().powi(2))
}

#[inline]
fn scaled_distance(x: &[f64], x2: &[f64], inv_l: &[f64]) -> f64 {
    x.iter().zip(x2).zip(inv_l).map(|((a, b), il)| ((a - b) * il).powi(2)).sum::<f64>().sqrt()
}

#[inline]
fn matern52_scaled(x: &[f64], x2: &[f64], inv_l: &[f64], variance: f64) -> f64 {
    let r = scaled_distance(x, x2, inv_l);
    variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

/// Clamping box for hyperparameters (in natural units, standardized targets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub sigma_v: (f64, f64),
    pub sigma_n: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self { lengthscale: (0.005, 10.0), sigma_v: (0.05, 20.0), sigma_n: (1e-6, 1.0) }
    }
}

impl HyperBounds {
    fn clamp(&self, v: &mut [f64]) {
        let d = v.len() - 2;
        let c = |x: f64, (lo, hi): (f64, f64)| x.clamp(lo.ln(), hi.ln());
        v[0] = c(v[0], self.sigma_v);
        for l in &mut v[1..=d] {
            *l = c(*l, self.lengthscale);
        }
        v[d + 1] = c(v[d + 1], self.sigma_n);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub bounds: HyperBounds,
    /// Tie all lengthscales together.
    pub isotropic: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { steps: 50, learning_rate: 0.1, bounds: HyperBounds::default(), isotropic: false }
    }
}

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    /// Row-major `N × D`.
    train_x: Vec<f64>,
    /// Squared coordinate differences of every pair `b < a`, `D` per pair,
    /// pairs ordered `(1,0), (2,0), (2,1), ...`.
    pair_d2: Arc<Vec<f64>>,
    /// Scaled distance `r` and `exp(-√5 r)` per pair under `params`.
    pair_r: Vec<f64>,
    pair_e: Vec<f64>,
    /// Standardized targets.
    train_y: DVector<f64>,
    y_mean: f64,
    y_std: f64,
    params: KernelParams,
    /// Lower Cholesky factor of `K + (σ_n² + jitter) I`.
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

struct Factorized {
    pair_r: Vec<f64>,
    pair_e: Vec<f64>,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Factorize without training.
    pub fn new(train_x: &[Vec<f64>], train_y: &[f64], params: KernelParams) -> Result<Self> {
        Self::build(train_x, train_y, params, true)
    }

    /// Like [`GpModel::new`] but with targets used as given (zero prior mean,
    /// unit scale).
    pub fn new_unstandardized(train_x: &[Vec<f64>], train_y: &[f64], params: KernelParams) -> Result<Self> {
        Self::build(train_x, train_y, params, false)
    }

    fn build(train_x: &[Vec<f64>], train_y: &[f64], params: KernelParams, standardize: bool) -> Result<Self> {
        let dim = params.dim();
        if train_x.is_empty() {
            return Err(Error::InvalidArgument("GP needs at least one training point".into()));
        }
        if train_x.len() != train_y.len() {
            return Err(Error::LengthMismatch { expected: train_x.len(), got: train_y.len() });
        }
        if let Some(row) = train_x.iter().find(|r| r.len() != dim) {
            return Err(Error::LengthMismatch { expected: dim, got: row.len() });
        }
        let (y_mean, y_std) = if standardize {
            let n = train_y.len() as f64;
            let mean = train_y.iter().sum::<f64>() / n;
            let var = train_y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            (mean, if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        let ys = DVector::from_iterator(train_y.len(), train_y.iter().map(|y| (y - y_mean) / y_std));
        let flat: Vec<f64> = train_x.iter().flatten().copied().collect();
        let mut pair_d2 = Vec::with_capacity(train_x.len() * train_x.len().saturating_sub(1) / 2 * dim);
        for a in 0..train_x.len() {
            for b in 0..a {
                pair_d2.extend(train_x[a].iter().zip(&train_x[b]).map(|(u, v)| (u - v) * (u - v)));
            }
        }
        let f = factorize(&pair_d2, dim, &ys, &params)?;
        Ok(Self {
            dim,
            train_x: flat,
            pair_d2: Arc::new(pair_d2),
            pair_r: f.pair_r,
            pair_e: f.pair_e,
            train_y: ys,
            y_mean,
            y_std,
            params,
            chol_l: f.chol_l,
            alpha: f.alpha,
            jitter: f.jitter,
        })
    }

    /// Maximize the log marginal likelihood starting from `init`.
    ///
    /// Returns the best parameters visited, so the final likelihood is never
    /// below the initial one.
    pub fn fit(train_x: &[Vec<f64>], train_y: &[f64], init: KernelParams, config: &FitConfig) -> Result<Self> {
        let mut init_vec = init.to_log_vector();
        config.bounds.clamp(&mut init_vec);
        if config.isotropic {
            let d = init_vec.len() - 2;
            let mean = init_vec[1..=d].iter().sum::<f64>() / d as f64;
            init_vec[1..=d].iter_mut().for_each(|l| *l = mean);
        }
        let mut model = Self::new(train_x, train_y, KernelParams::from_log_vector(&init_vec))?;
        let mut best_lml = model.log_marginal_likelihood();
        let mut best = model.clone();
        let mut theta = init_vec;
        let k = theta.len();
        let (mut m1, mut m2) = (vec![0.0; k], vec![0.0; k]);
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        for t in 1..=config.steps {
            let mut grad = model.lml_gradient();
            if config.isotropic {
                let d = k - 2;
                let g: f64 = grad[1..=d].iter().sum();
                grad[1..=d].iter_mut().for_each(|x| *x = g);
            }
            for i in 0..k {
                m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
                m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
                let mh = m1[i] / (1.0 - b1.powi(t as i32));
                let vh = m2[i] / (1.0 - b2.powi(t as i32));
                theta[i] += config.learning_rate * mh / (vh.sqrt() + eps);
            }
            config.bounds.clamp(&mut theta);
            match model.with_params(KernelParams::from_log_vector(&theta)) {
                Ok(next) => model = next,
                Err(_) => break,
            }
            let lml = model.log_marginal_likelihood();
            if lml > best_lml {
                best_lml = lml;
                best = model.clone();
            }
        }
        Ok(best)
    }

    /// Same data, new hyperparameters.
    pub fn with_params(&self, params: KernelParams) -> Result<Self> {
        let f = factorize(&self.pair_d2, self.dim, &self.train_y, &params)?;
        Ok(Self {
            dim: self.dim,
            train_x: self.train_x.clone(),
            pair_d2: Arc::clone(&self.pair_d2),
            pair_r: f.pair_r,
            pair_e: f.pair_e,
            train_y: self.train_y.clone(),
            y_mean: self.y_mean,
            y_std: self.y_std,
            params,
            chol_l: f.chol_l,
            alpha: f.alpha,
            jitter: f.jitter,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.train_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_std(&self) -> f64 {
        self.y_std
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.train_x[i * self.dim..(i + 1) * self.dim]
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let out = self.predict_batch(&[x.to_vec()]);
        out[0]
    }

    /// Posterior `(mean, variance)` for each row, de-standardized, variance
    /// floored at zero.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        self.predict_batch_raw(xs)
            .into_iter()
            .map(|(mu, var)| (self.y_mean + self.y_std * mu, self.y_std * self.y_std * var.max(0.0)))
            .collect()
    }

    /// Standardized-space mean and unfloored variance.
    pub fn predict_batch_raw(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let n = self.len();
        let m = xs.len();
        if m == 0 {
            return Vec::new();
        }
        let inv_l: Vec<f64> = self.params.log_lengthscales.iter().map(|l| (-l).exp()).collect();
        let sv2 = self.params.sigma_v().powi(2);
        let kstar = DMatrix::from_fn(n, m, |i, j| matern52_scaled(self.row(i), &xs[j], &inv_l, sv2));
        let means = kstar.tr_mul(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&kstar)
            .expect("cholesky factor has a positive diagonal");
        (0..m).map(|j| (means[j], sv2 - v.column(j).norm_squared())).collect()
    }

    /// `-½ yᵀK⁻¹y - ½ log|K| - (N/2) log 2π` on the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let log_det_half: f64 = self.chol_l.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.train_y.dot(&self.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Gradient of the log marginal likelihood with respect to
    /// `[log σ_v, log l_1..D, log σ_n]`, via `½ tr((ααᵀ - K⁻¹) ∂K)`.
    pub fn lml_gradient(&self) -> Vec<f64> {
        let n = self.len();
        let d = self.dim;
        let kinv = cholesky_inverse(&self.chol_l);
        let inv_l: Vec<f64> = self.params.log_lengthscales.iter().map(|l| (-l).exp()).collect();
        let sv2 = self.params.sigma_v().powi(2);
        let sn2 = self.params.sigma_n().powi(2);
        let mut grad = vec![0.0; d + 2];
        let inv_l2: Vec<f64> = inv_l.iter().map(|v| v * v).collect();
        let mut pair = 0;
        for a in 0..n {
            // Diagonal: kernel value σ_v², no lengthscale dependence.
            let w_aa = self.alpha[a] * self.alpha[a] - kinv[a * n + a];
            grad[0] += 0.5 * w_aa * 2.0 * sv2;
            grad[d + 1] += 0.5 * w_aa * 2.0 * sn2;
            for b in 0..a {
                let (r, e) = (self.pair_r[pair], self.pair_e[pair]);
                let d2 = &self.pair_d2[pair * d..(pair + 1) * d];
                pair += 1;
                let kval = sv2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
                let dl_common = sv2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
                // Off-diagonal pairs appear twice in the trace.
                let w = self.alpha[a] * self.alpha[b] - kinv[a * n + b];
                grad[0] += w * 2.0 * kval;
                let wd = w * dl_common;
                for k in 0..d {
                    grad[1 + k] += wd * d2[k] * inv_l2[k];
                }
            }
        }
        grad
    }
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// `(L Lᵀ)⁻¹` from the lower Cholesky factor, row-major. Only the lower
/// triangle (`[a * n + b]` with `b <= a`) is filled.
fn cholesky_inverse(chol_l: &DMatrix<f64>) -> Vec<f64> {
    let n = chol_l.nrows();
    let l: Vec<f64> = (0..n * n).map(|k| chol_l[(k / n, k % n)]).collect();
    // u[j * n + k] = (L⁻¹)[k][j], nonzero for k >= j.
    let mut u = vec![0.0; n * n];
    for j in 0..n {
        u[j * n + j] = 1.0 / l[j * n + j];
        for i in j + 1..n {
            let li = &l[i * n + j..i * n + i];
            let uj = &u[j * n + j..j * n + i];
            u[j * n + i] = -dot(li, uj) / l[i * n + i];
        }
    }
    let mut kinv = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            kinv[a * n + b] = dot(&u[a * n + a..a * n + n], &u[b * n + a..b * n + n]);
        }
    }
    kinv
}

fn factorize(pair_d2: &[f64], dim: usize, ys: &DVector<f64>, params: &KernelParams) -> Result<Factorized> {
    let n = ys.len();
    let inv_l2: Vec<f64> = params.log_lengthscales.iter().map(|l| (-2.0 * l).exp()).collect();
    let sv2 = params.sigma_v().powi(2);
    let sn2 = params.sigma_n().powi(2);
    let pairs = n * n.saturating_sub(1) / 2;
    let (mut pair_r, mut pair_e) = (Vec::with_capacity(pairs), Vec::with_capacity(pairs));
    let mut base = DMatrix::<f64>::zeros(n, n);
    let mut pair = 0;
    for a in 0..n {
        base[(a, a)] = sv2 + sn2;
        for b in 0..a {
            let d2 = &pair_d2[pair * dim..(pair + 1) * dim];
            pair += 1;
            let r = dot(d2, &inv_l2).sqrt();
            let e = (-SQRT5 * r).exp();
            let k = sv2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
            pair_r.push(r);
            pair_e.push(e);
            base[(a, b)] = k;
            base[(b, a)] = k;
        }
    }
    let mut jitter = 0.0;
    loop {
        let mut k = base.clone();
        for a in 0..n {
            k[(a, a)] += jitter;
        }
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(ys);
            if alpha.iter().all(|v| v.is_finite()) {
                return Ok(Factorized { pair_r, pair_e, chol_l: chol.l(), alpha, jitter });
            }
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * 1.000_001 {
            return Err(Error::Cholesky { jitter: JITTER_MAX });
        }
    }
}
