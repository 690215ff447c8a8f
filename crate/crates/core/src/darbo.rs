//! Double adaptive-region Bayesian optimization.
//!
//! The optimizer works in normalized coordinates `x ∈ [0,1]^D`, mapped
//! affinely onto angles in `[-π, π]^D` (see [`to_params`]). Two regions
//! constrain each proposal:
//!
//! - the *trust region*, a box around the incumbent whose base side length
//!   `L` doubles after `τ_s` consecutive successes, halves after `τ_f`
//!   consecutive failures and is rescaled by 16 when it reaches `L_min`;
//! - the *search region*, either the restricted box `A` (angles in
//!   `[-π/2, π/2]`, i.e. `[0.25, 0.75]^D`) or the full box `B`, switching
//!   after `κ_s` consecutive failures.
//!
//! Each step fits a GP on the trust-region-local history, recenters at the
//! observed point with the best posterior mean, and queries the UCB maximizer
//! over candidates drawn from the intersection of the two regions.
//!
//! Externally the objective is minimized; internally the GP models `-y` and
//! UCB is maximized.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::OptimizerTrace;
use crate::seeding;
use crate::simulator::QaoaParams;
use crate::surrogate::{FitConfig, GpModel, KernelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchRegion {
    /// Restricted box, angles in `[-π/2, π/2]`.
    A,
    /// Full box, angles in `[-π, π]`.
    B,
}

impl SearchRegion {
    /// Per-dimension bounds in normalized coordinates.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            SearchRegion::A => (0.25, 0.75),
            SearchRegion::B => (0.0, 1.0),
        }
    }

    pub fn other(self) -> Self {
        match self {
            SearchRegion::A => SearchRegion::B,
            SearchRegion::B => SearchRegion::A,
        }
    }

    pub fn contains(self, x: &[f64]) -> bool {
        let (lo, hi) = self.bounds();
        x.iter().all(|&v| (lo..=hi).contains(&v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Switch between `A` and `B` on the failure counter.
    Adaptive,
    PinnedA,
    PinnedB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustRegionMode {
    Adaptive,
    /// Trust region fixed to the whole unit cube (plain BO).
    FullBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustRegionShape {
    /// Side lengths proportional to the fitted lengthscales, geometric mean `L`.
    Ard,
    Isotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarboConfig {
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "Lmin")]
    pub l_min: f64,
    #[serde(rename = "Lmax")]
    pub l_max: f64,
    pub tau_s: u32,
    pub tau_f: u32,
    pub kappa_s: u32,
    pub ucb_beta: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Low-discrepancy candidates per step; defaults to `min(5000, 200 D)`.
    pub candidates: Option<usize>,
    /// Perturbation candidates around the incumbent; defaults to
    /// `min(2500, 100 D)`.
    pub perturbation_candidates: Option<usize>,
    pub region_mode: RegionMode,
    pub trust_region: TrustRegionMode,
    pub tr_shape: TrustRegionShape,
    /// Reset `L` to `L0` whenever the search region switches.
    pub reset_length_on_switch: bool,
    /// Cap on GP training points (nearest to the trust-region center).
    pub max_fit_points: usize,
    /// Refit hyperparameters from defaults every this many steps.
    pub refit_every: usize,
    pub fit: FitConfig,
}

impl Default for DarboConfig {
    fn default() -> Self {
        Self {
            l0: 1.6,
            l_min: 2f64.powi(-10),
            l_max: 3.2,
            tau_s: 3,
            tau_f: 10,
            kappa_s: 4,
            ucb_beta: 0.2,
            max_iter: 1000,
            seed: 0,
            candidates: None,
            perturbation_candidates: None,
            region_mode: RegionMode::Adaptive,
            trust_region: TrustRegionMode::Adaptive,
            tr_shape: TrustRegionShape::Ard,
            reset_length_on_switch: false,
            max_fit_points: 96,
            refit_every: 50,
            fit: FitConfig::default(),
        }
    }
}

impl DarboConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.l_min > 0.0 && self.l_min < self.l0 && self.l0 <= self.l_max) {
            errs.push(format!("need 0 < Lmin < L0 <= Lmax, got {}, {}, {}", self.l_min, self.l0, self.l_max));
        }
        if self.tau_s == 0 || self.tau_f == 0 || self.kappa_s == 0 {
            errs.push("tau_s, tau_f and kappa_s must be positive".into());
        }
        if !(self.ucb_beta >= 0.0) {
            errs.push(format!("ucb_beta must be non-negative, got {}", self.ucb_beta));
        }
        if self.max_fit_points < 2 {
            errs.push("max_fit_points must be at least 2".into());
        }
        if self.refit_every == 0 {
            errs.push("refit_every must be positive".into());
        }
        errs
    }

    pub fn ld_candidates(&self, dim: usize) -> usize {
        self.candidates.unwrap_or((200 * dim).min(5000))
    }

    pub fn perturbation_count(&self, dim: usize) -> usize {
        self.perturbation_candidates.unwrap_or((100 * dim).min(2500))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionState {
    pub length: f64,
    pub successes: u32,
    pub failures: u32,
    pub center: Vec<f64>,
}

impl TrustRegionState {
    pub fn new(length: f64, center: Vec<f64>) -> Self {
        Self { length, successes: 0, failures: 0, center }
    }

    /// Count a success or failure and resize.
    pub fn update(&mut self, improved: bool, cfg: &DarboConfig) {
        if improved {
            self.successes += 1;
            self.failures = 0;
        } else {
            self.failures += 1;
            self.successes = 0;
        }
        if self.successes >= cfg.tau_s {
            self.length = cfg.l_max.min(2.0 * self.length);
            self.successes = 0;
        } else if self.failures >= cfg.tau_f {
            self.length /= 2.0;
            self.failures = 0;
        }
        if self.length <= cfg.l_min {
            self.length *= 16.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegionState {
    pub active: SearchRegion,
    pub switch_counter: u32,
}

impl SearchRegionState {
    pub fn new(active: SearchRegion) -> Self {
        Self { active, switch_counter: 0 }
    }

    /// Returns whether the region switched.
    pub fn update(&mut self, improved: bool, kappa_s: u32) -> bool {
        if improved {
            self.switch_counter = 0;
            return false;
        }
        self.switch_counter += 1;
        if self.switch_counter >= kappa_s {
            self.active = self.active.other();
            self.switch_counter = 0;
            true
        } else {
            false
        }
    }
}

/// Normalized coordinates to QAOA angles: `θ = -π + 2π x`, first half `γ`.
///
/// Coordinates outside `[0, 1]` are clipped with a warning.
pub fn to_params(x: &[f64]) -> Result<QaoaParams> {
    let angles: Vec<f64> = x
        .iter()
        .map(|&v| {
            let c = v.clamp(0.0, 1.0);
            if c != v {
                log::warn!("normalized coordinate {v} clipped to {c}");
            }
            -PI + 2.0 * PI * c
        })
        .collect();
    QaoaParams::from_flat(&angles)
}

pub fn from_params(params: &QaoaParams) -> Vec<f64> {
    params.to_flat().iter().map(|&a| (a + PI) / (2.0 * PI)).collect()
}

/// Axis-aligned box `[lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| (*l..=*h).contains(v))
    }

    pub fn intersect(&self, other: &Bounds) -> Option<Bounds> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(l, h)| l <= h).then_some(Bounds { lo, hi })
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.lo).zip(&self.hi).map(|((v, l), h)| v.clamp(*l, *h)).collect()
    }
}

/// Trust-region box around `center`, clipped to the unit cube.
pub fn trust_region_box(center: &[f64], length: f64, lengthscales: Option<&[f64]>, shape: TrustRegionShape) -> Bounds {
    let dim = center.len();
    let weights: Vec<f64> = match (shape, lengthscales) {
        (TrustRegionShape::Ard, Some(ls)) => {
            let log_mean = ls.iter().map(|l| l.ln()).sum::<f64>() / dim as f64;
            ls.iter().map(|l| l / log_mean.exp()).collect()
        }
        _ => vec![1.0; dim],
    };
    let lo = center.iter().zip(&weights).map(|(c, w)| (c - length * w / 2.0).max(0.0)).collect();
    let hi = center.iter().zip(&weights).map(|(c, w)| (c + length * w / 2.0).min(1.0)).collect();
    Bounds { lo, hi }
}

/// Indices of history points used for the surrogate fit.
///
/// Points inside `tr_box` (or all points when `tr_box` is `None` or holds
/// fewer than `dim + 1` of them), truncated to the `max_points` nearest to
/// `center`. Returned in ascending history order.
pub fn select_fit_indices(
    xs: &[Vec<f64>],
    tr_box: Option<&Bounds>,
    center: &[f64],
    max_points: usize,
) -> Vec<usize> {
    let dim = center.len();
    let mut idx: Vec<usize> = match tr_box {
        Some(b) => (0..xs.len()).filter(|&i| b.contains(&xs[i])).collect(),
        None => (0..xs.len()).collect(),
    };
    if idx.len() < dim + 1 {
        idx = (0..xs.len()).collect();
    }
    if idx.len() > max_points {
        let dist = |i: usize| xs[i].iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
        idx.truncate(max_points);
        idx.sort_unstable();
    }
    idx
}

/// Fit the surrogate on `-y`, falling back to default hyperparameters when
/// the warm start fails.
pub fn fit_surrogate(xs: &[Vec<f64>], ys: &[f64], warm: Option<&KernelParams>, fit: &FitConfig) -> Result<GpModel> {
    let dim = xs[0].len();
    let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
    let init = warm.cloned().unwrap_or_else(|| KernelParams::default_for(dim));
    match GpModel::fit(xs, &neg, init, fit) {
        Ok(m) => Ok(m),
        Err(e) if warm.is_some() => {
            log::debug!("warm-started GP fit failed ({e}); retrying from defaults");
            GpModel::fit(xs, &neg, KernelParams::default_for(dim), fit)
        }
        Err(e) => Err(e),
    }
}

/// Index (into `xs`) of the point with the smallest posterior mean of `y`,
/// i.e. the largest mean of the `-y` surrogate. Falls back to the smallest
/// observed `y` when the model produces non-finite predictions.
pub fn posterior_incumbent(model: &GpModel, xs: &[Vec<f64>], ys: &[f64]) -> (usize, f64) {
    let preds = model.predict_batch(xs);
    if preds.iter().all(|(mu, _)| mu.is_finite()) {
        let (i, mu) = preds
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, &(mu, _))| if mu > bm { (i, mu) } else { (bi, bm) });
        (i, -mu)
    } else {
        let i = ys.iter().enumerate().fold(0, |b, (i, y)| if *y < ys[b] { i } else { b });
        (i, ys[i])
    }
}

fn kronecker_alphas(dim: usize) -> Vec<f64> {
    // Generalized golden ratio: unique positive root of x^(d+1) = x + 1.
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (1..=dim).map(|k| (1.0 / phi).powi(k as i32).fract()).collect()
}

/// Candidate set inside `bounds`: a randomly shifted Kronecker sequence plus
/// perturbations of `center` on a random subset of coordinates.
pub fn generate_candidates(
    bounds: &Bounds,
    center: &[f64],
    n_ld: usize,
    n_perturb: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let dim = center.len();
    let alphas = kronecker_alphas(dim);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let span: Vec<f64> = bounds.lo.iter().zip(&bounds.hi).map(|(l, h)| h - l).collect();
    let mut out = Vec::with_capacity(n_ld + n_perturb);
    for i in 1..=n_ld {
        out.push(
            (0..dim)
                .map(|d| bounds.lo[d] + span[d] * (shift[d] + i as f64 * alphas[d]).fract())
                .collect(),
        );
    }
    let anchor = bounds.clamp(center);
    let prob = (20.0 / dim as f64).min(1.0);
    for _ in 0..n_perturb {
        let mut x = anchor.clone();
        let mut mask: Vec<bool> = (0..dim).map(|_| rng.random::<f64>() < prob).collect();
        if !mask.iter().any(|&m| m) {
            mask[rng.random_range(0..dim)] = true;
        }
        for d in 0..dim {
            if mask[d] {
                x[d] = bounds.lo[d] + span[d] * rng.random::<f64>();
            }
        }
        out.push(x);
    }
    out
}

/// Index of the UCB maximizer `μ + β σ` (first on ties).
pub fn ucb_argmax(predictions: &[(f64, f64)], beta: f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &(mu, var)) in predictions.iter().enumerate() {
        let a = mu + beta * var.max(0.0).sqrt();
        if a > best.1 {
            best = (i, a);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

/// What happened in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub x: Vec<f64>,
    pub y: f64,
    pub improved: bool,
    /// Posterior-mean incumbent the trust region was centered on.
    pub incumbent: Vec<f64>,
    pub incumbent_prediction: f64,
    pub tr_length: f64,
    pub region: SearchRegion,
    pub fit_points: usize,
}

/// Optimizer state for one run.
#[derive(Debug, Clone)]
pub struct Darbo {
    config: DarboConfig,
    dim: usize,
    history: Vec<Observation>,
    tr: TrustRegionState,
    sr: SearchRegionState,
    best_y: f64,
    kernel: Option<KernelParams>,
    iteration: usize,
    initial_count: usize,
}

impl Darbo {
    /// Draw `x0 ~ U[0,1)^D` from the seed, evaluate it and set up the regions.
    pub fn init<F>(dim: usize, config: DarboConfig, objective: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let mut rng = seeding::rng_for(&[config.seed, u64::MAX]);
        let x0: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self::init_at(x0, config, objective)
    }

    /// Start from a given normalized point.
    pub fn init_at<F>(x0: Vec<f64>, config: DarboConfig, mut objective: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let dim = x0.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let x0 = Bounds::cube(dim, 0.0, 1.0).clamp(&x0);
        let y0 = objective(&x0)?;
        let active = match config.region_mode {
            RegionMode::PinnedB => SearchRegion::B,
            RegionMode::Adaptive | RegionMode::PinnedA => SearchRegion::A,
        };
        Ok(Self {
            tr: TrustRegionState::new(config.l0, x0.clone()),
            sr: SearchRegionState::new(active),
            config,
            dim,
            history: vec![Observation { x: x0, y: y0 }],
            best_y: y0,
            kernel: None,
            iteration: 0,
            initial_count: 1,
        })
    }

    pub fn config(&self) -> &DarboConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn trust_region(&self) -> &TrustRegionState {
        &self.tr
    }

    pub fn search_region(&self) -> &SearchRegionState {
        &self.sr
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn initial_count(&self) -> usize {
        self.initial_count
    }

    pub fn best_observed(&self) -> f64 {
        self.best_y
    }

    pub fn kernel_params(&self) -> Option<&KernelParams> {
        self.kernel.as_ref()
    }

    fn current_tr_box(&self) -> Option<Bounds> {
        match self.config.trust_region {
            TrustRegionMode::FullBox => None,
            TrustRegionMode::Adaptive => {
                let ls = self.kernel.as_ref().map(|k| k.lengthscales());
                Some(trust_region_box(&self.tr.center, self.tr.length, ls.as_deref(), self.config.tr_shape))
            }
        }
    }

    /// Fit the local surrogate on the current history.
    fn fit_local(&self, warm: Option<&KernelParams>) -> Result<(Vec<usize>, GpModel)> {
        let xs: Vec<Vec<f64>> = self.history.iter().map(|o| o.x.clone()).collect();
        let tr_box = self.current_tr_box();
        let idx = select_fit_indices(&xs, tr_box.as_ref(), &self.tr.center, self.config.max_fit_points);
        let fx: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let fy: Vec<f64> = idx.iter().map(|&i| self.history[i].y).collect();
        let model = fit_surrogate(&fx, &fy, warm, &self.config.fit)?;
        Ok((idx, model))
    }

    /// Posterior-mean incumbent over the local fit data.
    pub fn incumbent(&self) -> Result<(Vec<f64>, f64)> {
        if self.history.len() == 1 {
            return Ok((self.history[0].x.clone(), self.history[0].y));
        }
        let (idx, model) = self.fit_local(self.kernel.as_ref())?;
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| self.history[i].x.clone()).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| self.history[i].y).collect();
        let (k, pred) = posterior_incumbent(&model, &xs, &ys);
        Ok((xs[k].clone(), pred))
    }

    /// Incumbent mapped to QAOA angles.
    pub fn incumbent_params(&self) -> Result<(QaoaParams, f64)> {
        let (x, pred) = self.incumbent()?;
        Ok((to_params(&x)?, pred))
    }

    /// One BO iteration: fit, recenter, propose, evaluate, update regions.
    ///
    /// On objective failure the error is returned and the state is untouched.
    pub fn step<F>(&mut self, mut objective: F) -> Result<StepReport>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let cfg = &self.config;
        let refit = self.iteration % cfg.refit_every == 0;
        let warm = if refit { None } else { self.kernel.as_ref() };
        let (idx, model) = self.fit_local(warm)?;
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| self.history[i].x.clone()).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| self.history[i].y).collect();
        let (k, incumbent_prediction) = posterior_incumbent(&model, &xs, &ys);
        let center = xs[k].clone();
        let lengthscales = model.params().lengthscales();

        let mut tr = self.tr.clone();
        tr.center = center.clone();
        let region_box = {
            let (lo, hi) = self.sr.active.bounds();
            Bounds::cube(self.dim, lo, hi)
        };
        let candidate_box = match cfg.trust_region {
            TrustRegionMode::FullBox => region_box.clone(),
            TrustRegionMode::Adaptive => {
                let tr_box = trust_region_box(&center, tr.length, Some(&lengthscales), cfg.tr_shape);
                match tr_box.intersect(&region_box) {
                    Some(b) => b,
                    None => {
                        // No overlap: the trust region becomes the search region.
                        let (lo, hi) = self.sr.active.bounds();
                        tr.center = vec![(lo + hi) / 2.0; self.dim];
                        tr.length = hi - lo;
                        tr.successes = 0;
                        tr.failures = 0;
                        region_box.clone()
                    }
                }
            }
        };

        let mut rng = seeding::rng_for(&[cfg.seed, self.iteration as u64]);
        let candidates = generate_candidates(
            &candidate_box,
            &center,
            cfg.ld_candidates(self.dim),
            cfg.perturbation_count(self.dim),
            &mut rng,
        );
        let preds = model.predict_batch(&candidates);
        let pick = ucb_argmax(&preds, cfg.ucb_beta);
        let x = candidates[pick].clone();

        let y = objective(&x)?;
        if !y.is_finite() {
            return Err(Error::Objective(format!("objective returned {y}")));
        }

        let improved = y < self.best_y;
        tr.update(improved, cfg);
        let mut sr = self.sr.clone();
        if cfg.region_mode == RegionMode::Adaptive && sr.update(improved, cfg.kappa_s) && cfg.reset_length_on_switch {
            tr.length = cfg.l0;
        }

        let report = StepReport {
            x: x.clone(),
            y,
            improved,
            incumbent: center,
            incumbent_prediction,
            tr_length: tr.length,
            region: sr.active,
            fit_points: idx.len(),
        };
        self.tr = tr;
        self.sr = sr;
        self.kernel = Some(model.params().clone());
        self.history.push(Observation { x, y });
        self.best_y = self.best_y.min(y);
        self.iteration += 1;
        Ok(report)
    }

    /// [`Darbo::step`] with an objective over QAOA angles.
    pub fn step_qaoa<F>(&mut self, mut objective: F) -> Result<StepReport>
    where
        F: FnMut(&QaoaParams) -> Result<f64>,
    {
        self.step(|x| objective(&to_params(x)?))
    }

    /// Run until `max_iter` steps have been taken.
    pub fn run<F>(&mut self, mut objective: F) -> Result<Vec<StepReport>>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let mut reports = Vec::new();
        while self.iteration < self.config.max_iter {
            reports.push(self.step(&mut objective)?);
        }
        Ok(reports)
    }
}

/// Run DARBO from the normalized point `x0` for `evaluations` objective calls
/// (the initial point included). The trace is recorded in angle space and its
/// final entry carries the posterior-mean incumbent.
pub fn minimize<F>(mut objective: F, x0: &[f64], config: DarboConfig, evaluations: u64) -> Result<OptimizerTrace>
where
    F: FnMut(&QaoaParams) -> Result<f64>,
{
    if evaluations == 0 {
        return Err(Error::InvalidArgument("evaluation budget must be positive".into()));
    }
    let mut d = Darbo::init_at(x0.to_vec(), config, |x| objective(&to_params(x)?))?;
    let mut trace = OptimizerTrace::default();
    trace.push(d.history()[0].y, to_params(&d.history()[0].x)?.to_flat());
    for _ in 1..evaluations {
        let r = d.step_qaoa(&mut objective)?;
        trace.push(r.y, to_params(&r.incumbent)?.to_flat());
    }
    let (params, _) = d.incumbent_params()?;
    trace.params_final = params.to_flat();
    trace.set_last_incumbent(trace.params_final.clone());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DarboConfig {
        DarboConfig::default()
    }

    #[test]
    fn trust_region_doubles_after_three_successes() {
        let mut tr = TrustRegionState::new(1.6, vec![0.5]);
        for _ in 0..3 {
            tr.update(true, &cfg());
        }
        assert_eq!(tr.length, 3.2);
        assert_eq!((tr.successes, tr.failures), (0, 0));
        for _ in 0..3 {
            tr.update(true, &cfg());
        }
        assert_eq!(tr.length, 3.2);
    }

    #[test]
    fn trust_region_halves_after_ten_failures() {
        let mut tr = TrustRegionState::new(1.6, vec![0.5]);
        for i in 0..10 {
            assert_eq!(tr.length, 1.6, "changed early at failure {i}");
            tr.update(false, &cfg());
        }
        assert_eq!(tr.length, 0.8);
    }

    #[test]
    fn trust_region_rescales_at_minimum() {
        let mut tr = TrustRegionState::new(2f64.powi(-9), vec![0.5]);
        for _ in 0..10 {
            tr.update(false, &cfg());
        }
        assert_eq!(tr.length, 2f64.powi(-6));
    }

    #[test]
    fn search_region_switches_after_four_failures() {
        let mut sr = SearchRegionState::new(SearchRegion::A);
        for _ in 0..3 {
            assert!(!sr.update(false, 4));
        }
        assert!(sr.update(false, 4));
        assert_eq!(sr, SearchRegionState { active: SearchRegion::B, switch_counter: 0 });
        for _ in 0..4 {
            sr.update(false, 4);
        }
        assert_eq!(sr.active, SearchRegion::A);
    }

    #[test]
    fn success_resets_switch_counter() {
        let mut sr = SearchRegionState::new(SearchRegion::A);
        for _ in 0..3 {
            sr.update(false, 4);
        }
        sr.update(true, 4);
        assert_eq!(sr, SearchRegionState { active: SearchRegion::A, switch_counter: 0 });
    }

    #[test]
    fn param_mapping() {
        let p = to_params(&[0.5; 4]).unwrap();
        assert_eq!(p, QaoaParams::zeros(2));
        let p = to_params(&[0.0; 2]).unwrap();
        assert_eq!(p.gamma, vec![-PI]);
        assert_eq!(p.beta, vec![-PI]);
        let x = vec![0.1, 0.7, 0.33, 0.9];
        let back = from_params(&to_params(&x).unwrap());
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        // Clipped, not rejected.
        assert_eq!(to_params(&[1.5, -0.2]).unwrap().gamma, vec![PI]);
        // Region A is the middle half of the normalized box.
        let a = to_params(&[0.25, 0.75]).unwrap();
        assert!((a.gamma[0] + PI / 2.0).abs() < 1e-15 && (a.beta[0] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ucb_prefers_exploration_bonus() {
        let preds = [(1.0, 4.0), (1.3, 0.01)];
        // 1 + 0.2·2 = 1.4 against 1.3 + 0.2·0.1 = 1.32
        assert_eq!(ucb_argmax(&preds, 0.2), 0);
        assert_eq!(ucb_argmax(&[(0.1, 0.0), (0.5, 0.0), (0.2, 0.0)], 0.2), 1);
    }

    #[test]
    fn candidates_respect_bounds() {
        let b = Bounds { lo: vec![0.0, 0.25], hi: vec![0.001, 0.3] };
        let mut rng = seeding::rng(1);
        let c = generate_candidates(&b, &[0.9, 0.9], 200, 100, &mut rng);
        assert_eq!(c.len(), 300);
        assert!(c.iter().all(|x| b.contains(x)));
    }

    #[test]
    fn tr_box_shape() {
        let b = trust_region_box(&[0.5, 0.5], 0.4, Some(&[1.0, 4.0]), TrustRegionShape::Ard);
        // weights 0.5 and 2 (geometric mean 2)
        assert!((b.hi[0] - b.lo[0] - 0.2).abs() < 1e-12);
        assert!((b.hi[1] - b.lo[1] - 0.8).abs() < 1e-12);
        let iso = trust_region_box(&[0.0, 1.0], 0.4, Some(&[1.0, 4.0]), TrustRegionShape::Isotropic);
        assert_eq!(iso, Bounds { lo: vec![0.0, 0.8], hi: vec![0.2, 1.0] });
    }

    #[test]
    fn fit_selection_falls_back_to_all() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.9, 0.9]];
        let b = Bounds::cube(2, 0.0, 0.1);
        assert_eq!(select_fit_indices(&xs, Some(&b), &[0.0, 0.0], 10), vec![0, 1, 2]);
        assert_eq!(select_fit_indices(&xs, None, &[1.0, 1.0], 2), vec![1, 2]);
    }

    #[test]
    fn init_is_seeded_and_evaluated_once() {
        let mut calls = 0;
        let d = Darbo::init(4, DarboConfig { seed: 9, ..cfg() }, |_| {
            calls += 1;
            Ok(1.0)
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(d.history().len(), 1);
        assert_eq!(d.trust_region().length, 1.6);
        assert_eq!(d.search_region().active, SearchRegion::A);
        let again = Darbo::init(4, DarboConfig { seed: 9, ..cfg() }, |_| Ok(1.0)).unwrap();
        assert_eq!(d.history()[0].x, again.history()[0].x);
        assert!(d.history()[0].x.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn failed_objective_leaves_state_untouched() {
        let mut d = Darbo::init(2, cfg(), |x| Ok(x[0])).unwrap();
        d.step(|x| Ok(x[0] + x[1])).unwrap();
        let before = (d.history().to_vec(), d.trust_region().clone(), d.search_region().clone(), d.iteration());
        assert!(d.step(|_| Err(Error::Objective("boom".into()))).is_err());
        let after = (d.history().to_vec(), d.trust_region().clone(), d.search_region().clone(), d.iteration());
        assert_eq!(before, after);
    }

    #[test]
    fn single_point_incumbent() {
        let d = Darbo::init(3, cfg(), |_| Ok(2.0)).unwrap();
        let (x, y) = d.incumbent().unwrap();
        assert_eq!(x, d.history()[0].x);
        assert_eq!(y, 2.0);
    }
}
