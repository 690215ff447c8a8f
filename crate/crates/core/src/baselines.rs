//! Reference optimizers: SPSA, Nelder-Mead and Adam on finite-difference
//! gradients.
//!
//! All of them minimize an objective over a flat parameter vector and record
//! every objective call in an [`OptimizerTrace`], so trajectories from
//! different optimizers share one evaluation axis.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding;
use crate::{Error, Result};

/// Per-evaluation record of one optimization run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerTrace {
    /// Cumulative evaluation count after each query (1, 2, 3, ...).
    pub evals: Vec<u64>,
    /// Running minimum of `raw`.
    pub objective: Vec<f64>,
    /// Value returned by each query.
    pub raw: Vec<f64>,
    /// The optimizer's current solution estimate after each query.
    pub incumbents: Vec<Vec<f64>>,
    pub params_final: Vec<f64>,
}

impl OptimizerTrace {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn best(&self) -> Option<f64> {
        self.objective.last().copied()
    }

    pub fn push(&mut self, value: f64, incumbent: Vec<f64>) {
        let best = self.objective.last().map_or(value, |b| b.min(value));
        self.evals.push(self.raw.len() as u64 + 1);
        self.raw.push(value);
        self.objective.push(best);
        self.incumbents.push(incumbent);
    }

    /// Replace the incumbent recorded for the latest query.
    pub fn set_last_incumbent(&mut self, incumbent: Vec<f64>) {
        if let Some(last) = self.incumbents.last_mut() {
            *last = incumbent;
        }
    }
}

fn check_x0(x0: &[f64]) -> Result<()> {
    if x0.is_empty() {
        return Err(Error::InvalidArgument("starting point must have at least one coordinate".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("starting point must be finite".into()));
    }
    Ok(())
}

fn checked<F>(objective: &mut F, x: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let y = objective(x)?;
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Objective(format!("objective returned {y}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    /// Stability constant in `a_k = a / (k + 1 + A)^alpha`.
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lower: f64,
    pub upper: f64,
    pub budget: u64,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self { a: 0.01, c: 0.01, big_a: 50.0, alpha: 0.602, gamma: 0.101, lower: 0.0, upper: 2.0 * PI, budget: 1000, seed: 0 }
    }
}

/// Simultaneous-perturbation stochastic approximation.
///
/// Two evaluations per iteration at `θ ± c_k Δ` with Rademacher `Δ`; iterates
/// and query points are projected onto `[lower, upper]^D`.
pub fn spsa_minimize<F>(mut objective: F, x0: &[f64], config: &SpsaConfig) -> Result<OptimizerTrace>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_x0(x0)?;
    if !(config.lower < config.upper) {
        return Err(Error::InvalidArgument("SPSA bounds must satisfy lower < upper".into()));
    }
    let project = |v: f64| v.clamp(config.lower, config.upper);
    let mut rng = seeding::rng_for(&[config.seed, 0x5B5A]);
    let mut theta: Vec<f64> = x0.iter().map(|&v| project(v)).collect();
    let mut trace = OptimizerTrace::default();
    let iterations = config.budget / 2;
    for k in 0..iterations {
        let ak = config.a / (k as f64 + 1.0 + config.big_a).powf(config.alpha);
        let ck = config.c / (k as f64 + 1.0).powf(config.gamma);
        let delta: Vec<f64> = (0..theta.len()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| project(t + ck * d)).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| project(t - ck * d)).collect();
        let yp = checked(&mut objective, &plus)?;
        trace.push(yp, theta.clone());
        let ym = checked(&mut objective, &minus)?;
        let diff = (yp - ym) / (2.0 * ck);
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t = project(*t - ak * diff * d);
        }
        trace.push(ym, theta.clone());
    }
    trace.params_final = theta;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Relative perturbation of each coordinate for the initial simplex.
    pub initial_step: f64,
    /// Absolute perturbation used for coordinates that are zero.
    pub zero_step: f64,
    pub budget: u64,
    /// Optional early stop when both the simplex diameter and value spread
    /// fall below these tolerances.
    pub xatol: Option<f64>,
    pub fatol: Option<f64>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.05,
            zero_step: 0.00025,
            budget: 1000,
            xatol: None,
            fatol: None,
        }
    }
}

/// Budget-capped downhill simplex.
pub fn nelder_mead_minimize<F>(mut objective: F, x0: &[f64], config: &NelderMeadConfig) -> Result<OptimizerTrace>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_x0(x0)?;
    let dim = x0.len();
    let mut trace = OptimizerTrace::default();
    let budget = config.budget as usize;

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for d in 0..dim {
        let mut v = x0.to_vec();
        v[d] = if v[d] != 0.0 { (1.0 + config.initial_step) * v[d] } else { config.zero_step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = Vec::with_capacity(dim + 1);
    for v in &simplex {
        if trace.len() >= budget {
            break;
        }
        values.push(checked(&mut objective, v)?);
        trace.push(values[values.len() - 1], simplex[argmin(&values)].clone());
    }
    if values.len() < dim + 1 {
        trace.params_final = simplex[argmin(&values)].clone();
        return Ok(trace);
    }

    let mut order: Vec<usize> = (0..=dim).collect();
    'outer: while trace.len() < budget {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[dim], order[dim - 1]);
        if let (Some(xt), Some(ft)) = (config.xatol, config.fatol) {
            let xspread = order[1..]
                .iter()
                .flat_map(|&i| simplex[i].iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let fspread = order[1..].iter().map(|&i| (values[i] - values[best]).abs()).fold(0.0, f64::max);
            if xspread <= xt && fspread <= ft {
                break;
            }
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|d| order[..dim].iter().map(|&i| simplex[i][d]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(config.reflection);
        let fr = checked(&mut objective, &xr)?;
        let mut shrink = false;
        if fr < values[best] {
            trace.push(fr, xr.clone());
            if trace.len() >= budget {
                accept(&mut simplex, &mut values, worst, xr, fr);
                break;
            }
            let xe = along(config.reflection * config.expansion);
            let fe = checked(&mut objective, &xe)?;
            if fe < fr {
                trace.push(fe, xe.clone());
                accept(&mut simplex, &mut values, worst, xe, fe);
            } else {
                trace.push(fe, xr.clone());
                accept(&mut simplex, &mut values, worst, xr, fr);
            }
        } else if fr < values[second] {
            trace.push(fr, simplex[best].clone());
            accept(&mut simplex, &mut values, worst, xr, fr);
        } else {
            trace.push(fr, simplex[best].clone());
            if trace.len() >= budget {
                break;
            }
            if fr < values[worst] {
                let xc = along(config.reflection * config.contraction);
                let fc = checked(&mut objective, &xc)?;
                trace.push(fc, if fc < values[best] { xc.clone() } else { simplex[best].clone() });
                if fc <= fr {
                    accept(&mut simplex, &mut values, worst, xc, fc);
                } else {
                    shrink = true;
                }
            } else {
                let xcc = along(-config.contraction);
                let fcc = checked(&mut objective, &xcc)?;
                trace.push(fcc, if fcc < values[best] { xcc.clone() } else { simplex[best].clone() });
                if fcc < values[worst] {
                    accept(&mut simplex, &mut values, worst, xcc, fcc);
                } else {
                    shrink = true;
                }
            }
        }
        if shrink {
            let anchor = simplex[best].clone();
            for &i in &order[1..] {
                if trace.len() >= budget {
                    break 'outer;
                }
                simplex[i] = anchor.iter().zip(&simplex[i]).map(|(a, v)| a + config.shrink * (v - a)).collect();
                values[i] = checked(&mut objective, &simplex[i])?;
                let b = argmin(&values);
                trace.push(values[i], simplex[b].clone());
            }
        }
    }
    let b = argmin(&values);
    trace.params_final = simplex[b].clone();
    trace.set_last_incumbent(simplex[b].clone());
    Ok(trace)
}

fn argmin(values: &[f64]) -> usize {
    values.iter().enumerate().fold(0, |b, (i, v)| if *v < values[b] { i } else { b })
}

fn accept(simplex: &mut [Vec<f64>], values: &mut [f64], i: usize, x: Vec<f64>, f: f64) {
    simplex[i] = x;
    values[i] = f;
}

pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Central-difference step in angle units; [`DEFAULT_FD_STEP`] when unset.
    pub fd_step: Option<f64>,
    pub budget: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            decay_rate: 0.9,
            decay_steps: 500.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            fd_step: None,
            budget: 1000,
        }
    }
}

impl AdamConfig {
    /// `lr(t) = lr0 · decay^(t / steps)`.
    pub fn learning_rate_at(&self, t: u64) -> f64 {
        self.learning_rate * self.decay_rate.powf(t as f64 / self.decay_steps)
    }
}

/// Central-difference gradient; `2 D` evaluations.
pub fn central_difference_gradient<F>(mut objective: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for d in 0..x.len() {
        probe[d] = x[d] + h;
        let fp = checked(&mut objective, &probe)?;
        probe[d] = x[d] - h;
        let fm = checked(&mut objective, &probe)?;
        probe[d] = x[d];
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Adam on central-difference gradients.
///
/// Each iteration evaluates the objective at the iterate and at `2 D` probe
/// points, i.e. `4p + 1` evaluations for a depth-`p` QAOA vector.
pub fn adam_fd_minimize<F>(mut objective: F, x0: &[f64], config: &AdamConfig) -> Result<OptimizerTrace>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_x0(x0)?;
    let dim = x0.len();
    let h = config.fd_step.unwrap_or(DEFAULT_FD_STEP);
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let per_iter = 2 * dim as u64 + 1;
    let iterations = config.budget / per_iter;
    let mut x = x0.to_vec();
    let (mut m, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    let mut trace = OptimizerTrace::default();
    for t in 0..iterations {
        let y = checked(&mut objective, &x)?;
        trace.push(y, x.clone());
        let mut probe = x.clone();
        let mut grad = Vec::with_capacity(dim);
        for d in 0..dim {
            probe[d] = x[d] + h;
            let fp = checked(&mut objective, &probe)?;
            trace.push(fp, x.clone());
            probe[d] = x[d] - h;
            let fm = checked(&mut objective, &probe)?;
            trace.push(fm, x.clone());
            probe[d] = x[d];
            grad.push((fp - fm) / (2.0 * h));
        }
        let lr = config.learning_rate_at(t);
        let step = t as i32 + 1;
        for d in 0..dim {
            m[d] = config.beta1 * m[d] + (1.0 - config.beta1) * grad[d];
            v[d] = config.beta2 * v[d] + (1.0 - config.beta2) * grad[d] * grad[d];
            let mh = m[d] / (1.0 - config.beta1.powi(step));
            let vh = v[d] / (1.0 - config.beta2.powi(step));
            x[d] -= lr * mh / (vh.sqrt() + config.epsilon);
        }
        trace.set_last_incumbent(x.clone());
    }
    trace.params_final = x;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(x: &[f64]) -> Result<f64> {
        Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum())
    }

    #[test]
    fn spsa_two_evals_per_iteration() {
        let mut calls = 0;
        let cfg = SpsaConfig { budget: 11, ..Default::default() };
        let t = spsa_minimize(
            |x| {
                calls += 1;
                bowl(x)
            },
            &[1.5; 3],
            &cfg,
        )
        .unwrap();
        assert_eq!(calls, 10);
        assert_eq!(t.evals, (1..=10).collect::<Vec<u64>>());
    }

    #[test]
    fn spsa_stays_in_bounds() {
        let cfg = SpsaConfig { a: 50.0, c: 2.0, budget: 200, ..Default::default() };
        let t = spsa_minimize(|x| Ok(-x.iter().sum::<f64>()), &[6.0, 0.1], &cfg).unwrap();
        for x in t.incumbents.iter().chain([&t.params_final]) {
            assert!(x.iter().all(|v| (0.0..=2.0 * PI).contains(v)), "{x:?}");
        }
        assert!(t.params_final.iter().all(|&v| v == 2.0 * PI));
    }

    #[test]
    fn nelder_mead_constant_runs_to_budget() {
        let t = nelder_mead_minimize(|_| Ok(3.0), &[0.2, 0.4], &NelderMeadConfig { budget: 57, ..Default::default() }).unwrap();
        assert_eq!(t.len(), 57);
        assert!(t.objective.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn nelder_mead_initial_simplex() {
        let mut seen = Vec::new();
        nelder_mead_minimize(
            |x| {
                seen.push(x.to_vec());
                bowl(x)
            },
            &[2.0, 0.0],
            &NelderMeadConfig { budget: 3, ..Default::default() },
        )
        .unwrap();
        assert_eq!(seen, vec![vec![2.0, 0.0], vec![2.1, 0.0], vec![2.0, 0.00025]]);
    }

    #[test]
    fn adam_schedule() {
        let cfg = AdamConfig::default();
        assert!((cfg.learning_rate_at(500) - 0.009).abs() < 1e-15);
        assert_eq!(cfg.learning_rate_at(0), 0.01);
    }

    #[test]
    fn adam_eval_accounting() {
        for p in 1..=3 {
            let cfg = AdamConfig { budget: 100, ..Default::default() };
            let t = adam_fd_minimize(bowl, &vec![0.3; 2 * p], &cfg).unwrap();
            let per = 4 * p as u64 + 1;
            assert_eq!(t.len() as u64, 100 / per * per);
        }
    }

    #[test]
    fn objective_errors_propagate() {
        let fail = |_: &[f64]| -> Result<f64> { Err(Error::Objective("x".into())) };
        assert!(spsa_minimize(fail, &[0.0], &SpsaConfig::default()).is_err());
        assert!(nelder_mead_minimize(fail, &[0.0], &NelderMeadConfig::default()).is_err());
        assert!(adam_fd_minimize(fail, &[0.0], &AdamConfig::default()).is_err());
        assert!(spsa_minimize(|_| Ok(f64::NAN), &[0.0], &SpsaConfig::default()).is_err());
        assert!(adam_fd_minimize(bowl, &[], &AdamConfig::default()).is_err());
    }
}
