//! Problem data: the linear-quadratic core, higher-order Taylor terms, and
//! finite-horizon stage data, plus checks of the standard LQR assumptions.

mod json;

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

pub use json::{parse_problem, parse_problem_str, problem_to_json};

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{MultiPoly, PolyVector, VarCounts};

/// Asymmetry (relative, Frobenius) tolerated and silently removed on ingest.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative singular-value threshold for the PBH rank tests.
pub const PBH_RANK_TOL: f64 = 1e-9;

/// Linear dynamics, quadratic cost and bilinear noise channels:
///
/// ```text
/// x⁺ = F x + G u + Σ_k w_k (C_k x + D_k u),   cost ½(x'Qx + 2x'Su + u'Ru)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LqgbProblem {
    /// F, n×n.
    pub transition: DMatrix<f64>,
    /// G, n×m.
    pub input: DMatrix<f64>,
    /// Q, n×n symmetric.
    pub state_weight: DMatrix<f64>,
    /// S, n×m.
    pub cross_weight: DMatrix<f64>,
    /// R, m×m symmetric.
    pub input_weight: DMatrix<f64>,
    /// C_k, one n×n matrix per noise channel.
    pub state_noise: Vec<DMatrix<f64>>,
    /// D_k, one n×m matrix per noise channel.
    pub input_noise: Vec<DMatrix<f64>>,
}

impl LqgbProblem {
    /// Checks dimensions and finiteness and symmetrizes Q and R. Asymmetry
    /// above [`SYMMETRY_TOL`] (relative) is rejected.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        transition: DMatrix<f64>,
        input: DMatrix<f64>,
        state_weight: DMatrix<f64>,
        cross_weight: Option<DMatrix<f64>>,
        input_weight: DMatrix<f64>,
        state_noise: Vec<DMatrix<f64>>,
        input_noise: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = transition.nrows();
        let m = input.ncols();
        let cross_weight = cross_weight.unwrap_or_else(|| DMatrix::zeros(n, m));
        let expect = |name: &str, a: &DMatrix<f64>, rows: usize, cols: usize| -> Result<()> {
            if a.shape() != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "{name} is {}×{}, expected {rows}×{cols}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        expect("F", &transition, n, n)?;
        expect("G", &input, n, m)?;
        expect("Q", &state_weight, n, n)?;
        expect("S", &cross_weight, n, m)?;
        expect("R", &input_weight, m, m)?;
        if state_noise.len() != input_noise.len() {
            return Err(Error::Dimension(format!(
                "{} C blocks but {} D blocks",
                state_noise.len(),
                input_noise.len()
            )));
        }
        for (k, (c, d)) in state_noise.iter().zip(&input_noise).enumerate() {
            expect(&format!("C[{k}]"), c, n, n)?;
            expect(&format!("D[{k}]"), d, n, m)?;
        }
        for (name, a) in [("Q", &state_weight), ("R", &input_weight)] {
            let asym = linalg::relative_asymmetry(a);
            if asym > SYMMETRY_TOL {
                return Err(Error::Invariant(format!(
                    "{name} is not symmetric (relative asymmetry {asym:e})"
                )));
            }
        }
        Ok(Self {
            state_weight: linalg::symmetrize(&state_weight),
            input_weight: linalg::symmetrize(&input_weight),
            transition,
            input,
            cross_weight,
            state_noise,
            input_noise,
        })
    }

    pub fn n(&self) -> usize {
        self.transition.nrows()
    }

    pub fn m(&self) -> usize {
        self.input.ncols()
    }

    pub fn channels(&self) -> usize {
        self.state_noise.len()
    }

    pub fn vars(&self) -> VarCounts {
        VarCounts::new(self.n(), self.m(), self.channels())
    }

    pub fn is_noiseless(&self) -> bool {
        self.state_noise
            .iter()
            .chain(&self.input_noise)
            .all(|a| a.iter().all(|&v| v == 0.0))
    }

    /// The same problem with every noise channel removed.
    pub fn without_noise(&self) -> Self {
        Self {
            state_noise: Vec::new(),
            input_noise: Vec::new(),
            ..self.clone()
        }
    }

    /// The same problem with every noise coefficient multiplied by `factor`.
    pub fn with_noise_scaled(&self, factor: f64) -> Self {
        Self {
            state_noise: self.state_noise.iter().map(|c| c * factor).collect(),
            input_noise: self.input_noise.iter().map(|d| d * factor).collect(),
            ..self.clone()
        }
    }

    /// The block cost matrix [Q S; S' R].
    pub fn cost_block(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut b = DMatrix::zeros(n + m, n + m);
        b.view_mut((0, 0), (n, n)).copy_from(&self.state_weight);
        b.view_mut((0, n), (n, m)).copy_from(&self.cross_weight);
        b.view_mut((n, 0), (m, n)).copy_from(&self.cross_weight.transpose());
        b.view_mut((n, n), (m, m)).copy_from(&self.input_weight);
        b
    }
}

/// Nonlinear problem given by Taylor data around the origin. The linear and
/// quadratic parts live in `base`; the higher-order parts are polynomials
/// over `(x, u)` in the variable space of `base.vars()`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearModel {
    pub base: LqgbProblem,
    /// Degree ≥ 2 terms of the dynamics, one polynomial per state.
    pub f_hot: PolyVector,
    /// Degree ≥ 2 terms of each noise coefficient vector.
    pub gamma_hot: Vec<PolyVector>,
    /// Degree ≥ 3 terms of the running cost.
    pub l_hot: MultiPoly,
    /// Degree through which the Taylor data are valid; `None` means the
    /// polynomials are exact.
    pub max_degree: Option<u32>,
}

impl NonlinearModel {
    /// A model with no higher-order terms.
    pub fn linear_quadratic(base: LqgbProblem) -> Self {
        let vars = base.vars();
        Self {
            f_hot: PolyVector::zeros(vars, base.n()),
            gamma_hot: vec![PolyVector::zeros(vars, base.n()); base.channels()],
            l_hot: MultiPoly::zero(vars),
            max_degree: None,
            base,
        }
    }

    pub fn new(
        base: LqgbProblem,
        f_hot: PolyVector,
        gamma_hot: Vec<PolyVector>,
        l_hot: MultiPoly,
        max_degree: Option<u32>,
    ) -> Result<Self> {
        let vars = base.vars();
        let n = base.n();
        if f_hot.len() != n || f_hot.vars() != vars {
            return Err(Error::Dimension(format!(
                "f_hot must have {n} components over {vars:?}"
            )));
        }
        if gamma_hot.len() != base.channels() {
            return Err(Error::Dimension(format!(
                "gamma_hot has {} channels, expected {}",
                gamma_hot.len(),
                base.channels()
            )));
        }
        if gamma_hot.iter().any(|g| g.len() != n || g.vars() != vars) {
            return Err(Error::Dimension(format!(
                "each gamma_hot channel must have {n} components over {vars:?}"
            )));
        }
        if l_hot.vars() != vars {
            return Err(Error::Dimension("l_hot variable space mismatch".into()));
        }
        let check = |name: &str, p: &MultiPoly, min: u32| -> Result<()> {
            if p.has_noise() {
                return Err(Error::Invariant(format!("{name} contains noise variables")));
            }
            if let Some(d) = p.min_degree() {
                if d < min {
                    return Err(Error::Invariant(format!(
                        "{name} has a term of degree {d} (minimum {min})"
                    )));
                }
            }
            Ok(())
        };
        for (i, p) in f_hot.iter().enumerate() {
            check(&format!("f_hot[{i}]"), p, 2)?;
        }
        for (k, g) in gamma_hot.iter().enumerate() {
            for (i, p) in g.iter().enumerate() {
                check(&format!("gamma_hot[{k}][{i}]"), p, 2)?;
            }
        }
        check("l_hot", &l_hot, 3)?;
        Ok(Self {
            base,
            f_hot,
            gamma_hot,
            l_hot,
            max_degree,
        })
    }

    pub fn vars(&self) -> VarCounts {
        self.base.vars()
    }

    pub fn is_linear_quadratic(&self) -> bool {
        self.f_hot.is_zero() && self.gamma_hot.iter().all(PolyVector::is_zero) && self.l_hot.is_zero()
    }

    /// Largest degree present in the higher-order data (1 when there is none).
    pub fn hot_degree(&self) -> u32 {
        let dyn_deg = self
            .f_hot
            .iter()
            .chain(self.gamma_hot.iter().flat_map(PolyVector::iter))
            .filter_map(MultiPoly::degree)
            .max()
            .unwrap_or(1);
        let cost_deg = self.l_hot.degree().map_or(1, |d| d - 1);
        dyn_deg.max(cost_deg)
    }

    /// Full dynamics `f(x,u) = Fx + Gu + f_hot`.
    pub fn dynamics(&self) -> PolyVector {
        linear_plus(&self.base.transition, &self.base.input, &self.f_hot)
    }

    /// Full noise coefficient vector `γ_k(x,u) = C_k x + D_k u + γ_k_hot`.
    pub fn noise_channel(&self, k: usize) -> PolyVector {
        linear_plus(&self.base.state_noise[k], &self.base.input_noise[k], &self.gamma_hot[k])
    }

    /// Full running cost `l(x,u) = ½(x'Qx + 2x'Su + u'Ru) + l_hot`.
    pub fn running_cost(&self) -> MultiPoly {
        let b = &self.base;
        let vars = self.vars();
        let (n, m) = (b.n(), b.m());
        let mut terms = Vec::new();
        let total = vars.total();
        let mut push = |i: usize, j: usize, c: f64| {
            let mut e = vec![0u16; total];
            e[i] += 1;
            e[j] += 1;
            terms.push((e, c));
        };
        for i in 0..n {
            for j in 0..n {
                push(i, j, 0.5 * b.state_weight[(i, j)]);
            }
            for j in 0..m {
                push(i, n + j, b.cross_weight[(i, j)]);
            }
        }
        for i in 0..m {
            for j in 0..m {
                push(n + i, n + j, 0.5 * b.input_weight[(i, j)]);
            }
        }
        let quad = MultiPoly::from_terms(vars, terms).expect("well-formed exponents");
        &quad + &self.l_hot
    }
}

fn linear_plus(state: &DMatrix<f64>, input: &DMatrix<f64>, hot: &PolyVector) -> PolyVector {
    let vars = hot.vars();
    let comps = (0..state.nrows())
        .map(|i| {
            let xs: Vec<f64> = state.row(i).iter().copied().collect();
            let us: Vec<f64> = input.row(i).iter().copied().collect();
            let lin = &MultiPoly::linear_in_x(vars, &xs) + &MultiPoly::linear_in_u(vars, &us);
            &lin + &hot[i]
        })
        .collect();
    PolyVector::new(vars, comps).expect("shared variable space")
}

/// Stage data of a finite-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Stages {
    /// The same data at every stage.
    Constant(Box<NonlinearModel>),
    /// One entry per stage t = 0..T−1.
    Varying(Vec<NonlinearModel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingModel {
    pub horizon: usize,
    pub stages: Stages,
    /// π_T over the state variables; its quadratic part is ½x'P_T x.
    pub terminal_cost: MultiPoly,
}

impl TimeVaryingModel {
    pub fn new(horizon: usize, stages: Stages, terminal_cost: MultiPoly) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Invariant("horizon must be at least 1".into()));
        }
        let first = match &stages {
            Stages::Constant(m) => m.as_ref(),
            Stages::Varying(v) => {
                if v.len() != horizon {
                    return Err(Error::Dimension(format!(
                        "{} stages for horizon {horizon}",
                        v.len()
                    )));
                }
                &v[0]
            }
        };
        let vars = first.vars();
        if let Stages::Varying(v) = &stages {
            if v.iter().any(|s| s.vars() != vars) {
                return Err(Error::Dimension("stage dimensions differ".into()));
            }
        }
        if terminal_cost.vars() != vars {
            return Err(Error::Dimension("terminal cost variable space mismatch".into()));
        }
        if terminal_cost.has_noise() || terminal_cost.has_control() {
            return Err(Error::Invariant("terminal cost must depend on x only".into()));
        }
        if let Some(d) = terminal_cost.min_degree() {
            if d < 2 {
                return Err(Error::Invariant(format!(
                    "terminal cost has a term of degree {d} (minimum 2)"
                )));
            }
        }
        Ok(Self {
            horizon,
            stages,
            terminal_cost,
        })
    }

    /// Constant stages copied from an infinite-horizon model.
    pub fn constant(model: NonlinearModel, horizon: usize, terminal_cost: MultiPoly) -> Result<Self> {
        Self::new(horizon, Stages::Constant(Box::new(model)), terminal_cost)
    }

    pub fn stage(&self, t: usize) -> &NonlinearModel {
        match &self.stages {
            Stages::Constant(m) => m,
            Stages::Varying(v) => &v[t],
        }
    }

    pub fn vars(&self) -> VarCounts {
        self.stage(0).vars()
    }

    /// P_T, the kernel of the quadratic part of the terminal cost.
    pub fn terminal_kernel(&self) -> DMatrix<f64> {
        let vars = self.vars();
        let n = vars.n;
        let mut p = DMatrix::zeros(n, n);
        for (mono, c) in self.terminal_cost.homogeneous_part(2).terms() {
            let idx: Vec<usize> = mono
                .exponents()
                .iter()
                .enumerate()
                .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
                .collect();
            let (i, j) = (idx[0], idx[1]);
            if i == j {
                p[(i, i)] = 2.0 * c;
            } else {
                p[(i, j)] = c;
                p[(j, i)] = c;
            }
        }
        p
    }
}

/// A parsed problem file.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Infinite(NonlinearModel),
    Finite(TimeVaryingModel),
}

impl Problem {
    pub fn vars(&self) -> VarCounts {
        match self {
            Problem::Infinite(m) => m.vars(),
            Problem::Finite(t) => t.vars(),
        }
    }

    /// The (first-stage) linear-quadratic data.
    pub fn base(&self) -> &LqgbProblem {
        match self {
            Problem::Infinite(m) => &m.base,
            Problem::Finite(t) => &t.stage(0).base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    /// No check failed (warnings allowed).
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<20} {:?}: {}", c.name, c.status, c.detail)?;
        }
        Ok(())
    }
}

pub const CHECK_COST_PSD: &str = "cost_psd";
pub const CHECK_INPUT_WEIGHT_PD: &str = "input_weight_pd";
pub const CHECK_STABILIZABLE: &str = "stabilizable";
pub const CHECK_DETECTABLE: &str = "detectable";

/// Checks the standard LQR assumptions. Failures of the cost conditions are
/// warnings only: with multiplicative noise the lifted cost can become
/// definite even when the nominal one is not.
pub fn validate(problem: &LqgbProblem, tol: f64) -> ValidationReport {
    let mut checks = Vec::with_capacity(4);

    let block = problem.cost_block();
    let block_min = linalg::min_symmetric_eigenvalue(&block);
    let block_scale = linalg::spectral_norm(&block).max(1.0);
    checks.push(Check {
        name: CHECK_COST_PSD,
        status: if block_min >= -tol * block_scale {
            CheckStatus::Pass
        } else {
            CheckStatus::Warn
        },
        detail: format!("min eigenvalue of [Q S; S' R] = {block_min:e}"),
    });

    let r = &problem.input_weight;
    let r_min = linalg::min_symmetric_eigenvalue(r);
    let r_scale = linalg::spectral_norm(r);
    checks.push(Check {
        name: CHECK_INPUT_WEIGHT_PD,
        status: if r.is_empty() || (r_min > tol * r_scale && r_min > 0.0) {
            CheckStatus::Pass
        } else {
            CheckStatus::Warn
        },
        detail: format!("min eigenvalue of R = {r_min:e}"),
    });

    let f = &problem.transition;
    let n = problem.n();
    let unstable: Vec<Complex64> = linalg::eigenvalues(f)
        .into_iter()
        .filter(|l| l.norm() >= 1.0 - 1e-8)
        .collect();

    let g = &problem.input;
    let bad_ctrl = unstable.iter().copied().find(|&l| {
        let mut pencil = DMatrix::<Complex64>::zeros(n, n + problem.m());
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted(f, l));
        pencil.view_mut((0, n), (n, problem.m())).copy_from(&linalg::to_complex(g));
        linalg::complex_rank(&pencil, PBH_RANK_TOL) < n
    });
    checks.push(pbh_check(CHECK_STABILIZABLE, bad_ctrl, "[F − λI, G]"));

    let q_half = linalg::psd_sqrt(&problem.state_weight);
    let bad_obs = unstable.iter().copied().find(|&l| {
        let mut pencil = DMatrix::<Complex64>::zeros(2 * n, n);
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted(f, l));
        pencil.view_mut((n, 0), (n, n)).copy_from(&linalg::to_complex(&q_half));
        linalg::complex_rank(&pencil, PBH_RANK_TOL) < n
    });
    checks.push(pbh_check(CHECK_DETECTABLE, bad_obs, "[F − λI; Q^½]"));

    ValidationReport { checks }
}

fn shifted(f: &DMatrix<f64>, l: Complex64) -> DMatrix<Complex64> {
    let mut a = linalg::to_complex(f);
    for i in 0..a.nrows() {
        a[(i, i)] -= l;
    }
    a
}

fn pbh_check(name: &'static str, bad: Option<Complex64>, pencil: &str) -> Check {
    match bad {
        None => Check {
            name,
            status: CheckStatus::Pass,
            detail: format!("{pencil} has full rank at every eigenvalue with |λ| ≥ 1"),
        },
        Some(l) => Check {
            name,
            status: CheckStatus::Fail,
            detail: format!("{pencil} loses rank at λ = {:.6}{:+.6}i", l.re, l.im),
        },
    }
}
