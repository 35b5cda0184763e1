#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use taylor_sdp::model::{parse_problem, NonlinearModel, Problem};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn infinite(name: &str) -> NonlinearModel {
    match parse_problem(fixture(name)).expect("fixture parses") {
        Problem::Infinite(m) => m,
        Problem::Finite(_) => panic!("{name} is a finite-horizon fixture"),
    }
}

pub fn dlqgb() -> NonlinearModel {
    infinite("dlqgb.json")
}

pub fn pendulum() -> NonlinearModel {
    infinite("pendulum.json")
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Nodes and weights of the probabilists' Gauss–Hermite rule (weights sum to
/// one), from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite(points: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(points, points, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let weights = (0..points).map(|i| eig.eigenvectors[(0, i)].powi(2)).collect();
    (eig.eigenvalues.iter().copied().collect(), weights)
}

/// Minimizer and minimum of a unimodal function on [lo, hi].
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    let u = 0.5 * (lo + hi);
    (u, f(u))
}

/// Scalar problem with quadratic dynamics and noise terms, a cubic running
/// cost and a cubic terminal cost, over two stages.
pub const SCALAR_NONLINEAR: &str = r#"{
  "n": 1, "m": 1, "r": 1,
  "F": 0.8, "G": 1.0, "Q": 1.0, "R": 1.0, "S": 0.1,
  "C": [0.2], "D": [0.1],
  "f_hot": [[{"x": [2], "u": [0], "coeff": 0.3}, {"x": [1], "u": [1], "coeff": 0.2}]],
  "gamma_hot": [[[{"x": [2], "u": [0], "coeff": 0.1}]]],
  "l_hot": [{"x": [3], "u": [0], "coeff": 0.1}],
  "horizon": 2,
  "terminal_cost": [{"x": [2], "u": [0], "coeff": 0.75}, {"x": [3], "u": [0], "coeff": 0.2}]
}"#;

/// The same problem evaluated numerically: one Bellman step by quadrature in
/// w and golden-section search in u.
pub struct ScalarBellman {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ScalarBellman {
    pub fn new(points: usize) -> Self {
        let (nodes, weights) = gauss_hermite(points);
        Self { nodes, weights }
    }

    fn stage_cost(x: f64, u: f64) -> f64 {
        0.5 * (x * x + 0.2 * x * u + u * u) + 0.1 * x.powi(3)
    }

    fn next(x: f64, u: f64, w: f64) -> f64 {
        let f = 0.8 * x + u + 0.3 * x * x + 0.2 * x * u;
        let g = 0.2 * x + 0.1 * u + 0.1 * x * x;
        f + w * g
    }

    pub fn terminal(z: f64) -> f64 {
        0.75 * z * z + 0.2 * z.powi(3)
    }

    /// min_u l(x,u) + E{v(x⁺)}.
    pub fn step(&self, x: f64, v: &dyn Fn(f64) -> f64) -> f64 {
        let objective = |u: f64| {
            let expected: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(w, wt)| wt * v(Self::next(x, u, *w)))
                .sum();
            Self::stage_cost(x, u) + expected
        };
        let span = 3.0 * x.abs() + 1e-12;
        golden_section(objective, -span, span).1
    }

    /// Optimal cost with two stages to go.
    pub fn value(&self, x: f64) -> f64 {
        let v1 = |z: f64| self.step(z, &Self::terminal);
        self.step(x, &v1)
    }
}
