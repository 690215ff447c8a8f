//! Readout-error mitigation and zero-noise extrapolation.
//!
//! Confusion matrices are column-stochastic with `M[read][prepared]`.
//! Mitigation applies `M^{-1}` to a measured distribution; the result is a
//! quasi-distribution that sums to one but may have small negative entries.
//! Expectations are taken on the quasi-distribution directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::simulator::ShotSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfusionMode {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ConfusionSpec {
    /// One `[[P(0|0), P(0|1)], [P(1|0), P(1|1)]]` block per qubit.
    Local { local: Vec<[[f64; 2]; 2]> },
    /// Full `2^n × 2^n` matrix, row = read outcome, column = prepared state.
    Global { global: Vec<Vec<f64>> },
}

impl ConfusionSpec {
    pub fn identity_local(n: usize) -> Self {
        ConfusionSpec::Local { local: vec![[[1.0, 0.0], [0.0, 1.0]]; n] }
    }

    /// Local spec from per-qubit `(p01, p10)` flip probabilities.
    pub fn from_flip_rates(rates: &[(f64, f64)]) -> Self {
        ConfusionSpec::Local { local: rates.iter().map(|&(p01, p10)| [[1.0 - p01, p10], [p01, 1.0 - p10]]).collect() }
    }

    pub fn n(&self) -> usize {
        match self {
            ConfusionSpec::Local { local } => local.len(),
            ConfusionSpec::Global { global } => global.len().trailing_zeros() as usize,
        }
    }

    /// Column sums equal one and entries lie in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        let check_col = |col: &mut dyn Iterator<Item = f64>| {
            let mut sum = 0.0;
            for v in col {
                if !(0.0..=1.0).contains(&v) {
                    return false;
                }
                sum += v;
            }
            (sum - 1.0).abs() < 1e-9
        };
        match self {
            ConfusionSpec::Local { local } => {
                for (q, m) in local.iter().enumerate() {
                    for c in 0..2 {
                        if !check_col(&mut (0..2).map(|r| m[r][c])) {
                            return bad(format!("qubit {q} column {c} is not stochastic"));
                        }
                    }
                }
            }
            ConfusionSpec::Global { global } => {
                let dim = global.len();
                if dim == 0 || !dim.is_power_of_two() || global.iter().any(|r| r.len() != dim) {
                    return bad(format!("global confusion matrix must be square with power-of-two size, got {dim} rows"));
                }
                for c in 0..dim {
                    if !check_col(&mut (0..dim).map(|r| global[r][c])) {
                        return bad(format!("column {c} is not stochastic"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Forward map `M p`.
    pub fn apply(&self, probabilities: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(probabilities.len())?;
        match self {
            ConfusionSpec::Local { local } => {
                Ok(apply_local(probabilities, local.iter().map(|m| [[m[0][0], m[0][1]], [m[1][0], m[1][1]]])))
            }
            ConfusionSpec::Global { global } => {
                Ok((0..global.len()).map(|r| global[r].iter().zip(probabilities).map(|(a, b)| a * b).sum()).collect())
            }
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        let expected = 1usize << self.n();
        if len != expected {
            return Err(Error::LengthMismatch { expected, got: len });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Apply a tensor product of 2×2 matrices (qubit `q` acts on index bit `q`).
fn apply_local(v: &[f64], blocks: impl Iterator<Item = [[f64; 2]; 2]>) -> Vec<f64> {
    let mut out = v.to_vec();
    let dim = out.len();
    for (q, m) in blocks.enumerate() {
        let bit = 1usize << q;
        for i in (0..dim).filter(|i| i & bit == 0) {
            let (a, b) = (out[i], out[i | bit]);
            out[i] = m[0][0] * a + m[0][1] * b;
            out[i | bit] = m[1][0] * a + m[1][1] * b;
        }
    }
    out
}

/// Estimate a confusion spec from calibration runs.
///
/// Each entry pairs a prepared basis-state index with the sample measured
/// after preparing it. Local mode pools every run marginally per qubit and
/// needs each qubit prepared in both 0 and 1 at least once (all-zeros plus
/// all-ones suffices). Global mode needs all `2^n` preparations.
pub fn learn_confusion(calibration: &[(usize, ShotSample)], mode: ConfusionMode) -> Result<ConfusionSpec> {
    let n = calibration
        .first()
        .map(|(_, s)| s.n())
        .ok_or_else(|| Error::Calibration("no calibration runs".into()))?;
    for (prep, s) in calibration {
        if s.n() != n {
            return Err(Error::Calibration(format!("mixed qubit counts {} and {n}", s.n())));
        }
        if prep >> n != 0 {
            return Err(Error::Calibration(format!("prepared state {prep} out of range for {n} qubits")));
        }
    }
    match mode {
        ConfusionMode::Local => {
            // [qubit][prepared bit] -> (shots, shots read as 1)
            let mut tallies = vec![[(0u64, 0u64); 2]; n];
            for (prep, s) in calibration {
                for (&outcome, &c) in s.counts() {
                    for (q, t) in tallies.iter_mut().enumerate() {
                        let entry = &mut t[prep >> q & 1];
                        entry.0 += c;
                        entry.1 += (outcome >> q & 1) as u64 * c;
                    }
                }
            }
            let mut local = Vec::with_capacity(n);
            for (q, t) in tallies.iter().enumerate() {
                if t[0].0 == 0 || t[1].0 == 0 {
                    return Err(Error::Calibration(format!(
                        "qubit {q} needs preparations in both 0 and 1 (e.g. all-zeros and all-ones)"
                    )));
                }
                let p01 = t[0].1 as f64 / t[0].0 as f64;
                let p10 = (t[1].0 - t[1].1) as f64 / t[1].0 as f64;
                local.push([[1.0 - p01, p10], [p01, 1.0 - p10]]);
            }
            Ok(ConfusionSpec::Local { local })
        }
        ConfusionMode::Global => {
            let dim = 1usize << n;
            let mut hist = vec![vec![0u64; dim]; dim];
            for (prep, s) in calibration {
                for (&outcome, &c) in s.counts() {
                    hist[*prep][outcome] += c;
                }
            }
            let mut global = vec![vec![0.0; dim]; dim];
            for (col, h) in hist.iter().enumerate() {
                let total: u64 = h.iter().sum();
                if total == 0 {
                    return Err(Error::Calibration(format!(
                        "global mode needs all {dim} basis preparations; missing state {col}"
                    )));
                }
                for (row, &c) in h.iter().enumerate() {
                    global[row][col] = c as f64 / total as f64;
                }
            }
            Ok(ConfusionSpec::Global { global })
        }
    }
}

/// Apply the inverse confusion map to a distribution.
pub fn mitigate_readout(probabilities: &[f64], spec: &ConfusionSpec) -> Result<Vec<f64>> {
    spec.check_dim(probabilities.len())?;
    match spec {
        ConfusionSpec::Local { local } => {
            let mut inverses = Vec::with_capacity(local.len());
            for (q, m) in local.iter().enumerate() {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-12 {
                    return Err(Error::SingularConfusion(format!("qubit {q} has p01 + p10 = 1")));
                }
                inverses.push([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]);
            }
            Ok(apply_local(probabilities, inverses.into_iter()))
        }
        ConfusionSpec::Global { global } => {
            let dim = global.len();
            let m = DMatrix::from_fn(dim, dim, |r, c| global[r][c]);
            let lu = m.lu();
            let rhs = DVector::from_column_slice(probabilities);
            let solution = lu
                .solve(&rhs)
                .filter(|x| x.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::SingularConfusion("global confusion matrix is not invertible".into()))?;
            Ok(solution.iter().copied().collect())
        }
    }
}

pub fn mitigate_counts(sample: &ShotSample, spec: &ConfusionSpec) -> Result<Vec<f64>> {
    mitigate_readout(&sample.frequencies(), spec)
}

/// Euclidean projection of a quasi-distribution onto the probability simplex.
///
/// Only for reporting frequencies; expectations use the unprojected vector.
pub fn project_to_simplex(quasi: &[f64]) -> Vec<f64> {
    let mut sorted = quasi.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    quasi.iter().map(|&v| (v - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZneOrder {
    Linear,
    Quadratic,
}

impl ZneOrder {
    pub fn degree(self) -> usize {
        match self {
            ZneOrder::Linear => 1,
            ZneOrder::Quadratic => 2,
        }
    }

    /// Linear for depth 1, quadratic for deeper circuits.
    pub fn for_depth(p: usize) -> Self {
        if p <= 1 {
            ZneOrder::Linear
        } else {
            ZneOrder::Quadratic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZneSeries {
    pub factors: Vec<u32>,
    pub values: Vec<f64>,
    pub order: ZneOrder,
}

impl ZneSeries {
    pub fn validate(&self) -> Result<()> {
        if self.factors.len() != self.values.len() {
            return Err(Error::LengthMismatch { expected: self.factors.len(), got: self.values.len() });
        }
        if self.factors.first() != Some(&1) {
            return Err(Error::InvalidArgument("fold factors must start at 1".into()));
        }
        if self.factors.windows(2).any(|w| w[1] <= w[0]) || self.factors.iter().any(|f| f % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "fold factors must be odd and strictly increasing, got {:?}",
                self.factors
            )));
        }
        let need = self.order.degree() + 1;
        if self.factors.len() < need {
            return Err(Error::InvalidArgument(format!(
                "{:?} extrapolation needs at least {need} points, got {}",
                self.order,
                self.factors.len()
            )));
        }
        Ok(())
    }
}

/// Least-squares polynomial fit in the fold factor, evaluated at zero.
pub fn zne_extrapolate(series: &ZneSeries) -> Result<f64> {
    series.validate()?;
    let xs: Vec<f64> = series.factors.iter().map(|&f| f64::from(f)).collect();
    let ys = &series.values;
    let degree = series.order.degree();
    if xs.len() == degree + 1 {
        // Exactly determined: Lagrange interpolation at zero.
        return Ok((0..xs.len())
            .map(|i| {
                let w: f64 = (0..xs.len()).filter(|&j| j != i).map(|j| xs[j] / (xs[j] - xs[i])).product();
                w * ys[i]
            })
            .sum());
    }
    if degree == 1 {
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        return Ok(my - sxy / sxx * mx);
    }
    let a = DMatrix::from_fn(xs.len(), degree + 1, |r, c| xs[r].powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let coeffs = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("extrapolation fit failed: {e}")))?;
    Ok(coeffs[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_sim::{apply_readout_channel, sample_prepared, NoiseModel};

    fn series(values: &[f64], order: ZneOrder) -> ZneSeries {
        ZneSeries { factors: vec![1, 3, 5], values: values.to_vec(), order }
    }

    #[test]
    fn linear_extrapolation_of_exact_line() {
        let v = zne_extrapolate(&series(&[0.9, 0.7, 0.5], ZneOrder::Linear)).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn quadratic_extrapolation_three_points() {
        let v = zne_extrapolate(&series(&[0.9, 0.7, 0.3], ZneOrder::Quadratic)).unwrap();
        assert!((v - 0.925).abs() < 1e-12, "{v}");
    }

    #[test]
    fn constant_series_extrapolates_to_itself() {
        for order in [ZneOrder::Linear, ZneOrder::Quadratic] {
            let v = zne_extrapolate(&series(&[-1.25; 3], order)).unwrap();
            assert!((v + 1.25).abs() < 1e-12);
        }
        let long = ZneSeries { factors: vec![1, 3, 5, 7], values: vec![2.0; 4], order: ZneOrder::Quadratic };
        assert!((zne_extrapolate(&long).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extrapolation_validation() {
        let short = ZneSeries { factors: vec![1, 3], values: vec![1.0, 0.5], order: ZneOrder::Quadratic };
        assert!(zne_extrapolate(&short).is_err());
        let two = ZneSeries { factors: vec![1, 3], values: vec![1.0, 0.5], order: ZneOrder::Linear };
        assert!((zne_extrapolate(&two).unwrap() - 1.25).abs() < 1e-12);
        let unordered = ZneSeries { factors: vec![1, 5, 3], values: vec![0.0; 3], order: ZneOrder::Linear };
        assert!(zne_extrapolate(&unordered).is_err());
        let no_one = ZneSeries { factors: vec![3, 5], values: vec![0.0; 2], order: ZneOrder::Linear };
        assert!(zne_extrapolate(&no_one).is_err());
        let mismatched = ZneSeries { factors: vec![1, 3, 5], values: vec![0.0; 2], order: ZneOrder::Linear };
        assert!(zne_extrapolate(&mismatched).is_err());
    }

    #[test]
    fn depth_selects_order() {
        assert_eq!(ZneOrder::for_depth(1), ZneOrder::Linear);
        assert_eq!(ZneOrder::for_depth(2), ZneOrder::Quadratic);
    }

    #[test]
    fn noiseless_calibration_gives_identity() {
        let noise = NoiseModel::noiseless();
        let cal: Vec<_> = [0usize, 0b111].iter().map(|&p| (p, sample_prepared(3, p, &noise, 100, 0).unwrap())).collect();
        assert_eq!(learn_confusion(&cal, ConfusionMode::Local).unwrap(), ConfusionSpec::identity_local(3));
    }

    #[test]
    fn learns_known_flip_rates() {
        let noise = NoiseModel::uniform(0.0, 0.1, 0.2);
        let m = 100_000;
        let cal: Vec<_> =
            [0usize, 0b11].iter().enumerate().map(|(k, &p)| (p, sample_prepared(2, p, &noise, m, k as u64).unwrap())).collect();
        let ConfusionSpec::Local { local } = learn_confusion(&cal, ConfusionMode::Local).unwrap() else {
            panic!("expected local spec");
        };
        let s01 = (0.1 * 0.9 / m as f64).sqrt();
        let s10 = (0.2 * 0.8 / m as f64).sqrt();
        for blk in local {
            assert!((blk[1][0] - 0.1).abs() < 3.0 * s01);
            assert!((blk[0][1] - 0.2).abs() < 3.0 * s10);
        }
    }

    #[test]
    fn global_matches_tensor_product_of_locals() {
        let noise = NoiseModel::uniform(0.0, 0.1, 0.2);
        let m = 100_000;
        let cal: Vec<_> = (0..4usize).map(|p| (p, sample_prepared(2, p, &noise, m, 40 + p as u64).unwrap())).collect();
        let ConfusionSpec::Global { global } = learn_confusion(&cal, ConfusionMode::Global).unwrap() else {
            panic!("expected global spec");
        };
        let exact = ConfusionSpec::from_flip_rates(&[(0.1, 0.2), (0.1, 0.2)]);
        for col in 0..4 {
            let mut e = vec![0.0; 4];
            e[col] = 1.0;
            let expected = exact.apply(&e).unwrap();
            for row in 0..4 {
                // Entries are binomial frequencies; 5σ at worst-case variance.
                assert!((global[row][col] - expected[row]).abs() < 5.0 * (0.25 / m as f64).sqrt());
            }
        }
    }

    #[test]
    fn calibration_errors() {
        let noise = NoiseModel::noiseless();
        let only_zero = vec![(0usize, sample_prepared(2, 0, &noise, 10, 0).unwrap())];
        assert!(matches!(learn_confusion(&only_zero, ConfusionMode::Local), Err(Error::Calibration(_))));
        assert!(matches!(learn_confusion(&only_zero, ConfusionMode::Global), Err(Error::Calibration(_))));
        assert!(matches!(learn_confusion(&[], ConfusionMode::Local), Err(Error::Calibration(_))));
    }

    #[test]
    fn exact_round_trip() {
        let noise = NoiseModel::uniform(0.0, 0.07, 0.12);
        let ideal = [0.1, 0.2, 0.3, 0.05, 0.05, 0.1, 0.15, 0.05];
        let noisy = apply_readout_channel(&ideal, &noise).unwrap();
        let spec = ConfusionSpec::from_flip_rates(&[(0.07, 0.12); 3]);
        let back = mitigate_readout(&noisy, &spec).unwrap();
        for (a, b) in back.iter().zip(&ideal) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_spec_is_noop() {
        let d = [0.25, 0.5, 0.125, 0.125];
        assert_eq!(mitigate_readout(&d, &ConfusionSpec::identity_local(2)).unwrap(), d.to_vec());
    }

    #[test]
    fn singular_spec_is_rejected() {
        let spec = ConfusionSpec::from_flip_rates(&[(0.4, 0.6)]);
        assert!(matches!(mitigate_readout(&[0.5, 0.5], &spec), Err(Error::SingularConfusion(_))));
        let global = ConfusionSpec::Global { global: vec![vec![0.5, 0.5], vec![0.5, 0.5]] };
        assert!(matches!(mitigate_readout(&[0.5, 0.5], &global), Err(Error::SingularConfusion(_))));
    }

    #[test]
    fn simplex_projection() {
        let p = project_to_simplex(&[1.1, -0.05, -0.05]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(project_to_simplex(&[0.25, 0.75]), vec![0.25, 0.75]);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = ConfusionSpec::from_flip_rates(&[(0.1, 0.2), (0.0, 0.05)]);
        let json = spec.to_json().unwrap();
        assert!(json.contains("\"mode\": \"local\""));
        assert_eq!(ConfusionSpec::from_json(&json).unwrap(), spec);
        assert!(ConfusionSpec::from_json(r#"{"mode":"local","local":[[[0.5,0.0],[0.6,1.0]]]}"#).is_err());
    }
}
