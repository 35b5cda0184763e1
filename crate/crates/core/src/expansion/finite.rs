use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use super::{
    check_model_degree, cost_poly, feedback_hessian, feedback_poly, kappa_terms_json, pi_terms_json,
    solve_feedback_coefficients, ClosedLoop, PolicyExpansion,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::TimeVaryingModel;
use crate::poly::{MultiPoly, PolyVector, VarCounts};
use crate::riccati;

/// Time-indexed Taylor expansions π(t,·), κ(t,·) of a finite-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonExpansion {
    pub vars: VarCounts,
    pub degree: u32,
    /// P(0), …, P(T).
    pub p_seq: Vec<DMatrix<f64>>,
    /// K(0), …, K(T−1).
    pub k_seq: Vec<DMatrix<f64>>,
    /// π^[3..d+1](t,·) for t = 0..=T.
    pub pi_terms: Vec<Vec<MultiPoly>>,
    /// κ^[2..d](t,·) for t = 0..T.
    pub kappa_terms: Vec<Vec<PolyVector>>,
}

impl FiniteHorizonExpansion {
    pub fn horizon(&self) -> usize {
        self.k_seq.len()
    }

    /// The stage-t expansion as a [`PolicyExpansion`] (t < T).
    pub fn at(&self, t: usize) -> PolicyExpansion {
        PolicyExpansion {
            vars: self.vars,
            p: self.p_seq[t].clone(),
            k: self.k_seq[t].clone(),
            pi_terms: self.pi_terms[t].clone(),
            kappa_terms: self.kappa_terms[t].clone(),
        }
    }

    pub fn cost_at(&self, t: usize) -> MultiPoly {
        cost_poly(self.vars, &self.p_seq[t], &self.pi_terms[t], self.degree + 1)
    }

    pub fn feedback_at(&self, t: usize) -> PolyVector {
        feedback_poly(self.vars, &self.k_seq[t], &self.kappa_terms[t], self.degree)
    }

    pub fn to_json(&self) -> Value {
        let stages: Vec<Value> = (0..=self.horizon())
            .map(|t| {
                let kappa = self.kappa_terms.get(t).map_or(Value::Null, |k| kappa_terms_json(k));
                json!({ "t": t, "pi_terms": pi_terms_json(&self.pi_terms[t]), "kappa_terms": kappa })
            })
            .collect();
        json!({
            "degree": self.degree,
            "horizon": self.horizon(),
            "P_seq": self.p_seq.iter().map(linalg::to_rows).collect::<Vec<_>>(),
            "K_seq": self.k_seq.iter().map(linalg::to_rows).collect::<Vec<_>>(),
            "stages": stages,
        })
    }
}

impl Serialize for FiniteHorizonExpansion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

/// Backward sweep from the terminal cost. At each stage the feedback terms
/// come from the gradient condition against π(t+1,·), then π(t,·) is the
/// truncated Bellman update; no linear solve over coefficients is needed.
pub fn expand_finite(model: &TimeVaryingModel, degree: u32) -> Result<FiniteHorizonExpansion> {
    if degree == 0 {
        return Err(Error::Invariant("expansion degree must be at least 1".into()));
    }
    let horizon = model.horizon;
    let vars = model.vars();
    let sdrde = riccati::solve_sdrde(model, &model.terminal_kernel())?;

    let mut pi_terms = vec![Vec::new(); horizon + 1];
    let mut kappa_terms = vec![Vec::new(); horizon];
    pi_terms[horizon] = (3..=degree + 1).map(|j| model.terminal_cost.homogeneous_part(j)).collect();

    for t in (0..horizon).rev() {
        let stage = model.stage(t);
        check_model_degree(stage, degree).map_err(|e| e.context(format!("stage {t}")))?;
        let p_next = &sdrde.p_seq[t + 1];
        let pi_next = cost_poly(vars, p_next, &pi_terms[t + 1], degree + 1);
        let hessian = feedback_hessian(&stage.base, p_next);

        let mut terms: Vec<PolyVector> = Vec::with_capacity(degree as usize - 1);
        for j in 2..=degree {
            let kappa = feedback_poly(vars, &sdrde.k_seq[t], &terms, j - 1);
            let closed = ClosedLoop::new(stage, &kappa, j)?;
            let b = closed.gradient(&pi_next, j)?;
            terms.push(solve_feedback_coefficients(&hessian, &b, j, Some(t))?);
        }
        let kappa = feedback_poly(vars, &sdrde.k_seq[t], &terms, degree);
        let closed = ClosedLoop::new(stage, &kappa, degree)?;
        let updated = closed.bellman(&pi_next, degree + 1)?;
        pi_terms[t] = (3..=degree + 1).map(|j| updated.homogeneous_part(j)).collect();
        kappa_terms[t] = terms;
    }

    Ok(FiniteHorizonExpansion {
        vars,
        degree,
        p_seq: sdrde.p_seq,
        k_seq: sdrde.k_seq,
        pi_terms,
        kappa_terms,
    })
}
