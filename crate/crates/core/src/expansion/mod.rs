//! Taylor expansion of the optimal cost π and optimal feedback κ.
//!
//! At stage degree d the cost equation is expanded to degree d+1 and solved
//! for π^[d+1] through the [`CostOperator`]; the gradient condition is then
//! expanded to degree d and solved for κ^[d]. Both equations are produced by
//! composing the model polynomials, taking Gaussian expectations and reading
//! off homogeneous parts, so no degree-specific formula is transcribed.

mod finite;
mod operator;
mod residual;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LqgbProblem, NonlinearModel};
use crate::par::Execution;
use crate::poly::{MultiPoly, PolyVector, VarCounts};
use crate::riccati::{self, DEFAULT_MAX_ITER, DEFAULT_TOL};

pub use finite::{expand_finite, FiniteHorizonExpansion};
pub use operator::{build_cost_operator, CostOperator, RESONANCE_TOL};
pub use residual::{dp_residual, dp_residual_with, fit_slope, ResidualReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpandOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub execution: Execution,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            execution: Execution::default(),
        }
    }
}

/// π(x) = ½x'Px + π^[3](x) + … + π^[d+1](x) and κ(x) = Kx + κ^[2](x) + … + κ^[d](x).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyExpansion {
    pub vars: VarCounts,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// π^[3], π^[4], …; entry i has degree i + 3.
    pub pi_terms: Vec<MultiPoly>,
    /// κ^[2], κ^[3], …; entry i has degree i + 2.
    pub kappa_terms: Vec<PolyVector>,
}

impl PolicyExpansion {
    /// The quadratic/linear part only.
    pub fn quadratic(vars: VarCounts, p: DMatrix<f64>, k: DMatrix<f64>) -> Self {
        Self {
            vars,
            p,
            k,
            pi_terms: Vec::new(),
            kappa_terms: Vec::new(),
        }
    }

    /// Degree d of the feedback expansion (the cost is known through d+1).
    pub fn degree(&self) -> u32 {
        self.kappa_terms.len() as u32 + 1
    }

    /// Highest degree of the cost expansion.
    pub fn cost_degree(&self) -> u32 {
        self.pi_terms.len() as u32 + 2
    }

    pub fn pi_term(&self, degree: u32) -> Option<&MultiPoly> {
        degree.checked_sub(3).and_then(|i| self.pi_terms.get(i as usize))
    }

    pub fn kappa_term(&self, degree: u32) -> Option<&PolyVector> {
        degree.checked_sub(2).and_then(|i| self.kappa_terms.get(i as usize))
    }

    /// π through degree `through` (capped at what has been computed).
    pub fn cost_through(&self, through: u32) -> MultiPoly {
        cost_poly(self.vars, &self.p, &self.pi_terms, through)
    }

    pub fn cost(&self) -> MultiPoly {
        self.cost_through(self.cost_degree())
    }

    /// κ through degree `through` (capped at what has been computed).
    pub fn feedback_through(&self, through: u32) -> PolyVector {
        feedback_poly(self.vars, &self.k, &self.kappa_terms, through)
    }

    pub fn feedback(&self) -> PolyVector {
        self.feedback_through(self.degree())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "degree": self.degree(),
            "P": linalg::to_rows(&self.p),
            "K": linalg::to_rows(&self.k),
            "pi_terms": pi_terms_json(&self.pi_terms),
            "kappa_terms": kappa_terms_json(&self.kappa_terms),
        })
    }
}

impl Serialize for PolicyExpansion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

pub(crate) fn pi_terms_json(terms: &[MultiPoly]) -> Value {
    Value::Array(
        terms
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = i as u32 + 3;
                json!({
                    "degree": d,
                    "coefficients": p.coeff_vector(d).expect("homogeneous in x"),
                    "terms": p.to_records(),
                })
            })
            .collect(),
    )
}

pub(crate) fn kappa_terms_json(terms: &[PolyVector]) -> Value {
    Value::Array(
        terms
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let d = i as u32 + 2;
                let coeffs: Vec<Vec<f64>> = v.iter().map(|c| c.coeff_vector(d).expect("homogeneous in x")).collect();
                let records: Vec<_> = v.iter().map(MultiPoly::to_records).collect();
                json!({ "degree": d, "coefficients": coeffs, "terms": records })
            })
            .collect(),
    )
}

pub(crate) fn cost_poly(vars: VarCounts, p: &DMatrix<f64>, pi_terms: &[MultiPoly], through: u32) -> MultiPoly {
    let mut out = MultiPoly::quadratic_form(vars, p);
    for (i, t) in pi_terms.iter().enumerate() {
        if i as u32 + 3 <= through {
            out = &out + t;
        }
    }
    out
}

pub(crate) fn feedback_poly(vars: VarCounts, k: &DMatrix<f64>, kappa_terms: &[PolyVector], through: u32) -> PolyVector {
    let mut comps = PolyVector::linear_map(vars, k).into_components();
    for (i, t) in kappa_terms.iter().enumerate() {
        if i as u32 + 2 <= through {
            for (c, ti) in comps.iter_mut().zip(t.iter()) {
                *c = &*c + ti;
            }
        }
    }
    PolyVector::new(vars, comps).expect("shared variable space")
}

/// Substitution (x, u, w) ↦ (x, κ(x), w).
pub(crate) fn feedback_substitution(vars: VarCounts, kappa: &PolyVector) -> PolyVector {
    let comps = (0..vars.total())
        .map(|v| {
            if v >= vars.n && v < vars.n + vars.m {
                kappa[v - vars.n].clone()
            } else {
                MultiPoly::var(vars, v)
            }
        })
        .collect();
    PolyVector::new(vars, comps).expect("shared variable space")
}

/// Substitution (x, u, w) ↦ (z, u, w).
pub(crate) fn state_substitution(vars: VarCounts, z: &PolyVector) -> PolyVector {
    let comps = (0..vars.total())
        .map(|v| if v < vars.n { z[v].clone() } else { MultiPoly::var(vars, v) })
        .collect();
    PolyVector::new(vars, comps).expect("shared variable space")
}

/// Closed-loop pieces of one stage under a polynomial feedback: the next
/// state z = f(x,κ) + Σ w_k γ_k(x,κ) and the control Jacobian of z, all
/// truncated at `trunc`.
pub(crate) struct ClosedLoop {
    pub z: PolyVector,
    /// ∂z_i/∂u_j along the feedback, indexed `[j][i]`.
    pub dz_du: Vec<Vec<MultiPoly>>,
    /// ∂l/∂u_j along the feedback.
    pub dl_du: Vec<MultiPoly>,
    /// l(x, κ(x)), one degree beyond the truncation of z.
    pub cost: MultiPoly,
}

impl ClosedLoop {
    pub fn new(model: &NonlinearModel, kappa: &PolyVector, trunc: u32) -> Result<Self> {
        let vars = model.vars();
        let (n, m, r) = (vars.n, vars.m, vars.r);
        let subst = feedback_substitution(vars, kappa);
        let f = model.dynamics();
        let channels: Vec<PolyVector> = (0..r).map(|k| model.noise_channel(k)).collect();
        let noise: Vec<MultiPoly> = (0..r).map(|k| MultiPoly::var(vars, vars.w(k))).collect();

        let compose = |p: &MultiPoly| p.compose(&subst, Some(trunc));

        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = compose(&f[i])?;
            for (ch, w) in channels.iter().zip(&noise) {
                acc = &acc + &(w * &compose(&ch[i])?);
            }
            z.push(acc);
        }
        let mut dz_du = Vec::with_capacity(m);
        for j in 0..m {
            let uj = vars.u(j);
            let mut col = Vec::with_capacity(n);
            for i in 0..n {
                let mut acc = compose(&f[i].partial_derivative(uj))?;
                for (ch, w) in channels.iter().zip(&noise) {
                    acc = &acc + &(w * &compose(&ch[i].partial_derivative(uj))?);
                }
                col.push(acc);
            }
            dz_du.push(col);
        }
        let l = model.running_cost();
        let dl_du = (0..m)
            .map(|j| compose(&l.partial_derivative(vars.u(j))))
            .collect::<Result<_>>()?;
        let cost = l.compose(&subst, Some(trunc + 1))?;
        Ok(Self {
            z: PolyVector::new(vars, z)?,
            dz_du,
            dl_du,
            cost,
        })
    }

    /// E{π(z)} + l(x, κ(x)) through degree `through`.
    pub fn bellman(&self, pi: &MultiPoly, through: u32) -> Result<MultiPoly> {
        let vars = pi.vars();
        let composed = pi.compose(&state_substitution(vars, &self.z), Some(through))?;
        Ok(&composed.gaussian_expectation()? + &self.cost.truncate(through))
    }

    /// Degree-`degree` part of E{π(z)} + l(x, κ(x)).
    pub fn cost_rhs(&self, pi: &MultiPoly, degree: u32) -> Result<MultiPoly> {
        Ok(self.bellman(pi, degree)?.homogeneous_part(degree))
    }

    /// Degree-`degree` part of the gradient condition
    /// E{∂π/∂x(z) ∂z/∂u} + ∂l/∂u, one polynomial per control.
    pub fn gradient(&self, pi: &MultiPoly, degree: u32) -> Result<Vec<MultiPoly>> {
        let vars = pi.vars();
        let subst = state_substitution(vars, &self.z);
        let grads: Vec<MultiPoly> = (0..vars.n)
            .map(|i| pi.partial_derivative(vars.x(i)).compose(&subst, Some(degree)))
            .collect::<Result<_>>()?;
        self.dz_du
            .iter()
            .zip(&self.dl_du)
            .map(|(col, dl)| {
                let mut acc = dl.homogeneous_part(degree);
                for (g, dz) in grads.iter().zip(col) {
                    let prod = g.mul_truncated(dz, Some(degree))?;
                    acc = &acc + &prod.gaussian_expectation()?.homogeneous_part(degree);
                }
                Ok(acc)
            })
            .collect()
    }
}

/// R + G'PG + Σ D_k'PD_k for the value kernel `p` of the next step.
pub(crate) fn feedback_hessian(problem: &LqgbProblem, p: &DMatrix<f64>) -> DMatrix<f64> {
    let g = &problem.input;
    let mut m = &problem.input_weight + g.transpose() * p * g;
    for d in &problem.input_noise {
        m += d.transpose() * p * d;
    }
    linalg::symmetrize(&m)
}

/// κ^[d] = −M⁻¹ b, solved coefficient by coefficient.
pub(crate) fn solve_feedback_coefficients(
    m: &DMatrix<f64>,
    b: &[MultiPoly],
    degree: u32,
    stage: Option<usize>,
) -> Result<PolyVector> {
    let vars = b[0].vars();
    let m_inv = linalg::guarded_inverse(m).ok_or(Error::SingularInnerMatrix { stage })?;
    let coeffs: Vec<Vec<f64>> = b.iter().map(|p| p.coeff_vector(degree)).collect::<Result<_>>()?;
    let len = coeffs.first().map_or(0, Vec::len);
    let mc = m.nrows();
    let rhs = DMatrix::from_fn(mc, len, |j, c| coeffs[j][c]);
    let sol = -(m_inv * rhs);
    let comps = (0..mc)
        .map(|j| {
            let row: Vec<f64> = sol.row(j).iter().copied().collect();
            MultiPoly::from_coeff_vector(vars, degree, &row)
        })
        .collect::<Result<_>>()?;
    PolyVector::new(vars, comps)
}

pub(crate) fn check_model_degree(model: &NonlinearModel, d: u32) -> Result<()> {
    match model.max_degree {
        Some(available) if d > available => Err(Error::DegreeExceedsModel {
            requested: d,
            available,
        }),
        _ => Ok(()),
    }
}

fn check_state(state: &PolicyExpansion, d: u32, cost_known: u32, feedback_known: u32) -> Result<()> {
    if state.cost_degree() != cost_known || state.degree() != feedback_known {
        return Err(Error::Invariant(format!(
            "stage {d} needs π through degree {cost_known} and κ through degree {feedback_known}, have {} and {}",
            state.cost_degree(),
            state.degree()
        )));
    }
    Ok(())
}

/// π^[d+1] from the degree-(d+1) cost equation; `state` must hold π through
/// degree d and κ through degree d−1.
pub fn solve_cost_degree(
    state: &PolicyExpansion,
    model: &NonlinearModel,
    d: u32,
    exec: Execution,
) -> Result<MultiPoly> {
    check_state(state, d, d, d - 1)?;
    check_model_degree(model, d)?;
    let closed = ClosedLoop::new(model, &state.feedback(), d)?;
    let op = build_cost_operator(&model.base, &state.k, d + 1, exec)?;
    op.solve(&closed.cost_rhs(&state.cost(), d + 1)?)
}

/// κ^[d] from the degree-d gradient condition; `state` must hold π through
/// degree d+1 and κ through degree d−1.
pub fn solve_feedback_degree(state: &PolicyExpansion, model: &NonlinearModel, d: u32) -> Result<PolyVector> {
    check_state(state, d, d + 1, d - 1)?;
    check_model_degree(model, d)?;
    let closed = ClosedLoop::new(model, &state.feedback(), d)?;
    let b = closed.gradient(&state.cost(), d)?;
    solve_feedback_coefficients(&feedback_hessian(&model.base, &state.p), &b, d, None)
}

/// Solves the SDARE for the quadratic part, then alternates cost and
/// feedback solves for stage degrees 2..=`degree`.
pub fn expand_infinite(model: &NonlinearModel, degree: u32, tol: f64) -> Result<PolicyExpansion> {
    expand_infinite_with(
        model,
        degree,
        &ExpandOptions {
            tol,
            ..ExpandOptions::default()
        },
    )
}

pub fn expand_infinite_with(model: &NonlinearModel, degree: u32, opts: &ExpandOptions) -> Result<PolicyExpansion> {
    if degree == 0 {
        return Err(Error::Invariant("expansion degree must be at least 1".into()));
    }
    check_model_degree(model, degree)?;
    let sol = riccati::solve_sdare(&model.base, opts.tol, opts.max_iter)?;
    let mut state = PolicyExpansion::quadratic(model.vars(), sol.p, sol.k);
    for d in 2..=degree {
        let closed = ClosedLoop::new(model, &state.feedback(), d).map_err(|e| e.context(format!("degree {d}")))?;
        let op = build_cost_operator(&model.base, &state.k, d + 1, opts.execution)?;
        let rhs = closed.cost_rhs(&state.cost(), d + 1)?;
        let pi_next = op.solve(&rhs).map_err(|e| e.context(format!("cost term of degree {}", d + 1)))?;
        state.pi_terms.push(pi_next);

        let b = closed.gradient(&state.cost(), d)?;
        let kappa = solve_feedback_coefficients(&feedback_hessian(&model.base, &state.p), &b, d, None)
            .map_err(|e| e.context(format!("feedback term of degree {d}")))?;
        state.kappa_terms.push(kappa);
    }
    Ok(state)
}
