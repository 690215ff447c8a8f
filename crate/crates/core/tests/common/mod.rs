//! Independent reference constructions shared by integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use qaoa_darbo::problem::{QuboProblem, WeightedGraph};
use qaoa_darbo::simulator::QaoaParams;

/// QAOA state by explicit 2^n × 2^n matrix products.
pub fn dense_state(problem: &QuboProblem, params: &QaoaParams) -> DVector<Complex64> {
    let n = problem.n();
    let dim = 1usize << n;
    let cost: Vec<f64> = (0..dim)
        .map(|idx| {
            problem
                .graph()
                .edges()
                .iter()
                .map(|e| {
                    let zi = if idx >> e.i & 1 == 0 { 1.0 } else { -1.0 };
                    let zj = if idx >> e.j & 1 == 0 { 1.0 } else { -1.0 };
                    e.w * zi * zj
                })
                .sum()
        })
        .collect();
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let hadamard = DMatrix::from_row_slice(2, 2, &[h, h, h, -h]);
    let kron_all = |m: &DMatrix<Complex64>| (1..n).fold(m.clone(), |acc, _| acc.kronecker(m));
    let mut zero = DVector::from_element(dim, Complex64::new(0.0, 0.0));
    zero[0] = Complex64::new(1.0, 0.0);
    let mut psi = kron_all(&hadamard) * zero;
    for (&g, &b) in params.gamma.iter().zip(&params.beta) {
        let uc = DMatrix::from_diagonal(&DVector::from_iterator(dim, cost.iter().map(|c| Complex64::from_polar(1.0, -g * c))));
        let (c, s) = (Complex64::new(b.cos(), 0.0), Complex64::new(0.0, -b.sin()));
        let rx = DMatrix::from_row_slice(2, 2, &[c, s, s, c]);
        psi = kron_all(&rx) * (uc * psi);
    }
    psi
}

/// `<ψ|H_C|ψ>` with `H_C` built as a dense diagonal matrix.
pub fn dense_expectation(problem: &QuboProblem, params: &QaoaParams) -> f64 {
    let psi = dense_state(problem, params);
    let hc = DMatrix::from_diagonal(&DVector::from_iterator(
        psi.len(),
        problem.cost_diagonal().iter().map(|&c| Complex64::new(c, 0.0)),
    ));
    (psi.adjoint() * hc * &psi)[(0, 0)].re
}

/// Erdős–Rényi-style graph with uniform weights in [-1, 1), never empty.
pub fn random_graph(n: usize, rng: &mut impl Rng) -> QuboProblem {
    loop {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.6 {
                    edges.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        if !edges.is_empty() {
            return QuboProblem::new(WeightedGraph::new(n, edges).unwrap());
        }
    }
}

pub fn random_params(p: usize, rng: &mut impl Rng) -> QaoaParams {
    let mut draw = || (0..p).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
    QaoaParams::new(draw(), draw()).unwrap()
}
