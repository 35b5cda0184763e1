//! Riccati equations for bilinear-noise LQ problems.
//!
//! * [`solve_dare`]: deterministic discrete-time ARE with cross term, by the
//!   structure-preserving doubling algorithm (fixed-point fallback).
//! * [`solve_sdare`]: the stochastic ARE, solved by repeatedly lifting the
//!   noise terms into Q, R, S and re-solving a deterministic DARE.
//! * [`solve_sdrde`]: the finite-horizon stochastic Riccati recursion, run
//!   backward from the terminal kernel.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows};
use crate::model::{LqgbProblem, TimeVaryingModel};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

/// ‖P_(τ)‖ beyond this multiple of ‖P_(0)‖ counts as divergence.
pub const DIVERGENCE_GROWTH: f64 = 1e12;
/// Consecutive increases of ‖P_(τ) − P_(τ−1)‖ that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 25;

/// Smallest relative residual demanded of a DARE solution; below this the
/// check would be measuring rounding in the Riccati map itself.
const RESIDUAL_FLOOR: f64 = 1e-13;

/// Iteration cap of the fixed-point fallback inside the DARE solver.
const FALLBACK_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DareMethod {
    Doubling,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DareSolution {
    #[serde(rename = "P", serialize_with = "serde_rows::matrix")]
    pub p: DMatrix<f64>,
    #[serde(rename = "K", serialize_with = "serde_rows::matrix")]
    pub k: DMatrix<f64>,
    pub closed_loop_spectral_radius: f64,
    pub iterations: usize,
    pub method: DareMethod,
    /// ‖P − (F'PF + Q − (F'PG+S)(R+G'PG)⁻¹(G'PF+S'))‖₂.
    pub residual: f64,
}

/// The deterministic ingredients of one DARE solve.
struct DareData<'a> {
    f: &'a DMatrix<f64>,
    g: &'a DMatrix<f64>,
    q: &'a DMatrix<f64>,
    r: &'a DMatrix<f64>,
    s: &'a DMatrix<f64>,
}

impl DareData<'_> {
    /// K = −(R + G'PG)⁻¹(G'PF + S').
    fn gain(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (f, g) = (self.f, self.g);
        let inner = self.r + g.transpose() * p * g;
        let inv = linalg::guarded_inverse(&inner).ok_or(Error::SingularInnerMatrix { stage: None })?;
        Ok(-(inv * (g.transpose() * p * f + self.s.transpose())))
    }

    /// One application of the Riccati map.
    fn riccati_map(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (f, g) = (self.f, self.g);
        let k = self.gain(p)?;
        let cross = f.transpose() * p * g + self.s;
        Ok(linalg::symmetrize(&(f.transpose() * p * f + self.q + cross * k)))
    }

    fn solve(&self, tol: f64, max_iter: usize) -> Result<(DMatrix<f64>, usize, DareMethod)> {
        if let Some(r_inv) = linalg::guarded_inverse(self.r) {
            if let Some((p, it)) = self.doubling(&r_inv, tol, max_iter) {
                return Ok((p, it, DareMethod::Doubling));
            }
        }
        self.fixed_point(tol)
    }

    /// Structure-preserving doubling on the data with the cross term removed.
    /// Returns `None` when an inner inverse is ill-conditioned or the
    /// iteration stalls, so the caller can fall back.
    fn doubling(&self, r_inv: &DMatrix<f64>, tol: f64, max_iter: usize) -> Option<(DMatrix<f64>, usize)> {
        let (f, g, s) = (self.f, self.g, self.s);
        let n = f.nrows();
        let mut a = f - g * r_inv * s.transpose();
        let mut gg = linalg::symmetrize(&(g * r_inv * g.transpose()));
        let mut h = linalg::symmetrize(&(self.q - s * r_inv * s.transpose()));
        let eye = DMatrix::<f64>::identity(n, n);
        for it in 1..=max_iter {
            let w = &eye + &gg * &h;
            let w_inv = linalg::guarded_inverse(&w)?;
            let w_inv_a = &w_inv * &a;
            let h_next = linalg::symmetrize(&(&h + a.transpose() * &h * &w_inv_a));
            let g_next = linalg::symmetrize(&(&gg + &a * &w_inv * &gg * a.transpose()));
            let a_next = &a * &w_inv_a;
            if h_next.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let change = linalg::spectral_norm(&(&h_next - &h));
            let scale = linalg::spectral_norm(&h_next);
            h = h_next;
            gg = g_next;
            a = a_next;
            if change <= tol * scale || scale == 0.0 {
                return Some((h, it));
            }
        }
        None
    }

    fn fixed_point(&self, tol: f64) -> Result<(DMatrix<f64>, usize, DareMethod)> {
        let mut p = match linalg::guarded_inverse(self.r) {
            Some(r_inv) => linalg::symmetrize(&(self.q - self.s * r_inv * self.s.transpose())),
            None => self.q.clone(),
        };
        for it in 1..=FALLBACK_MAX_ITER {
            let next = self.riccati_map(&p)?;
            if next.iter().any(|v| !v.is_finite()) {
                break;
            }
            let change = linalg::spectral_norm(&(&next - &p));
            let scale = linalg::spectral_norm(&next);
            p = next;
            if change <= tol * scale || scale == 0.0 {
                return Ok((p, it, DareMethod::FixedPoint));
            }
        }
        Err(Error::NotConverged {
            max_iter: FALLBACK_MAX_ITER,
        })
    }

    fn finish(&self, tol: f64, max_iter: usize) -> Result<DareSolution> {
        let (p, iterations, method) = self.solve(tol, max_iter)?;
        let k = self.gain(&p)?;
        let radius = linalg::spectral_radius(&(self.f + self.g * &k));
        if radius >= 1.0 {
            return Err(Error::NotStabilizing {
                spectral_radius: radius,
            });
        }
        let residual = linalg::spectral_norm(&(&p - self.riccati_map(&p)?));
        let bound = tol.max(RESIDUAL_FLOOR) * linalg::spectral_norm(&p);
        if residual > bound {
            return Err(Error::InaccurateSolution { residual, bound });
        }
        Ok(DareSolution {
            p,
            k,
            closed_loop_spectral_radius: radius,
            iterations,
            method,
            residual,
        })
    }
}

/// Solves P = F'PF + Q − (F'PG+S)(R+G'PG)⁻¹(G'PF+S') for the stabilizing P,
/// ignoring the noise channels of `problem`.
pub fn solve_dare(problem: &LqgbProblem, tol: f64, max_iter: usize) -> Result<DareSolution> {
    DareData {
        f: &problem.transition,
        g: &problem.input,
        q: &problem.state_weight,
        r: &problem.input_weight,
        s: &problem.cross_weight,
    }
    .finish(tol, max_iter)
}

/// Q, R, S with the noise terms of `p` folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

impl LiftedCost {
    /// Q + Σ C'PC, R + Σ D'PD, S + Σ C'PD.
    pub fn new(problem: &LqgbProblem, p: &DMatrix<f64>) -> Self {
        let mut q = problem.state_weight.clone();
        let mut r = problem.input_weight.clone();
        let mut s = problem.cross_weight.clone();
        for (c, d) in problem.state_noise.iter().zip(&problem.input_noise) {
            q += c.transpose() * p * c;
            r += d.transpose() * p * d;
            s += c.transpose() * p * d;
        }
        Self {
            q: linalg::symmetrize(&q),
            r: linalg::symmetrize(&r),
            s,
        }
    }

    /// The block matrix [Q S; S' R].
    pub fn block(&self) -> DMatrix<f64> {
        let (n, m) = (self.q.nrows(), self.r.nrows());
        let mut b = DMatrix::zeros(n + m, n + m);
        b.view_mut((0, 0), (n, n)).copy_from(&self.q);
        b.view_mut((0, n), (n, m)).copy_from(&self.s);
        b.view_mut((n, 0), (m, n)).copy_from(&self.s.transpose());
        b.view_mut((n, n), (m, m)).copy_from(&self.r);
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdareSolution {
    #[serde(rename = "P", serialize_with = "serde_rows::matrix")]
    pub p: DMatrix<f64>,
    #[serde(rename = "K", serialize_with = "serde_rows::matrix")]
    pub k: DMatrix<f64>,
    /// Outer iterations performed (τ at convergence).
    pub iterations: usize,
    /// ‖P_(τ) − P_(τ−1)‖₂ for τ = 1, 2, ….
    pub trace: Vec<f64>,
    /// Larger of the two SDARE residuals.
    pub residual: f64,
    pub cost_residual: f64,
    pub gain_residual: f64,
    pub closed_loop_spectral_radius: f64,
    /// P_(0), P_(1), …, P_(τ).
    #[serde(skip)]
    pub iterates: Vec<DMatrix<f64>>,
}

impl SdareSolution {
    pub fn closed_loop_eigenvalues(&self, problem: &LqgbProblem) -> Vec<Complex64> {
        closed_loop_eigenvalues(problem, &self.k)
    }
}

/// Eigenvalues of F + GK.
pub fn closed_loop_eigenvalues(problem: &LqgbProblem, k: &DMatrix<f64>) -> Vec<Complex64> {
    linalg::eigenvalues(&(&problem.transition + &problem.input * k))
}

/// Solves the stochastic ARE by iterating deterministic DARE solves on the
/// lifted cost data, starting from the noiseless solution.
pub fn solve_sdare(problem: &LqgbProblem, tol: f64, max_iter: usize) -> Result<SdareSolution> {
    let initial = solve_dare(problem, tol, max_iter).map_err(|e| e.context("noiseless DARE"))?;
    let norm0 = linalg::spectral_norm(&initial.p);
    let mut iterates = vec![initial.p];
    let mut trace = Vec::new();
    let mut streak = 0usize;

    for tau in 1..=max_iter {
        let prev = iterates.last().unwrap();
        let lifted = LiftedCost::new(problem, prev);
        let data = DareData {
            f: &problem.transition,
            g: &problem.input,
            q: &lifted.q,
            r: &lifted.r,
            s: &lifted.s,
        };
        let (p, _, _) = match data.solve(tol, max_iter) {
            Ok(sol) => sol,
            Err(e) => {
                let norm = linalg::spectral_norm(prev);
                if norm > DIVERGENCE_GROWTH.sqrt() * norm0 {
                    return Err(Error::IterationDiverged { iteration: tau, norm });
                }
                return Err(e.context(format!("lifted DARE at step {tau}")));
            }
        };
        let norm = linalg::spectral_norm(&p);
        let change = linalg::spectral_norm(&(&p - prev));
        if !norm.is_finite() || (norm0 > 0.0 && norm > DIVERGENCE_GROWTH * norm0) {
            return Err(Error::IterationDiverged { iteration: tau, norm });
        }
        if trace.last().is_some_and(|&last| change > last) {
            streak += 1;
            if streak >= DIVERGENCE_WINDOW {
                return Err(Error::IterationDiverged { iteration: tau, norm });
            }
        } else {
            streak = 0;
        }
        trace.push(change);
        let converged = change <= tol * norm;
        let k = if converged { Some(data.gain(&p)?) } else { None };
        iterates.push(p);
        if let Some(k) = k {
            let p = iterates.last().unwrap().clone();
            let (cost_residual, gain_residual) = sdare_residual(&p, &k, problem)?;
            let radius = linalg::spectral_radius(&(&problem.transition + &problem.input * &k));
            return Ok(SdareSolution {
                p,
                k,
                iterations: tau,
                trace,
                residual: cost_residual.max(gain_residual),
                cost_residual,
                gain_residual,
                closed_loop_spectral_radius: radius,
                iterates,
            });
        }
    }
    Err(Error::NotConverged { max_iter })
}

/// M = R + G'PG + Σ D'PD and N = G'PF + S' + Σ D'PC, so that the optimal
/// gain is K = −M⁻¹N.
fn gain_terms(problem: &LqgbProblem, p: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let g = &problem.input;
    let mut m = &problem.input_weight + g.transpose() * p * g;
    let mut n = g.transpose() * p * &problem.transition + problem.cross_weight.transpose();
    for (c, d) in problem.state_noise.iter().zip(&problem.input_noise) {
        m += d.transpose() * p * d;
        n += d.transpose() * p * c;
    }
    (linalg::symmetrize(&m), n)
}

/// Right-hand side of the cost equation:
/// Q + K'S' + SK + K'RK + (F+GK)'P(F+GK) + Σ (C+DK)'P(C+DK).
fn cost_map(problem: &LqgbProblem, p: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let s = &problem.cross_weight;
    let a = &problem.transition + &problem.input * k;
    let mut out = &problem.state_weight
        + k.transpose() * s.transpose()
        + s * k
        + k.transpose() * &problem.input_weight * k
        + a.transpose() * p * &a;
    for (c, d) in problem.state_noise.iter().zip(&problem.input_noise) {
        let b = c + d * k;
        out += b.transpose() * p * &b;
    }
    linalg::symmetrize(&out)
}

/// Spectral-norm residuals of the two SDARE equations at (P, K).
pub fn sdare_residual(p: &DMatrix<f64>, k: &DMatrix<f64>, problem: &LqgbProblem) -> Result<(f64, f64)> {
    let cost = linalg::spectral_norm(&(p - cost_map(problem, p, k)));
    let (m, n) = gain_terms(problem, p);
    let m_inv = linalg::guarded_inverse(&m).ok_or(Error::SingularInnerMatrix { stage: None })?;
    let gain = linalg::spectral_norm(&(k + m_inv * n));
    Ok((cost, gain))
}

/// (F+GK)'PG + S + K'R + Σ (C+DK)'PD, which vanishes at any SDARE solution.
pub fn gain_cancellation(p: &DMatrix<f64>, k: &DMatrix<f64>, problem: &LqgbProblem) -> DMatrix<f64> {
    let g = &problem.input;
    let a = &problem.transition + g * k;
    let mut out = a.transpose() * p * g + &problem.cross_weight + k.transpose() * &problem.input_weight;
    for (c, d) in problem.state_noise.iter().zip(&problem.input_noise) {
        out += (c + d * k).transpose() * p * d;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdrdeSolution {
    /// P(0), …, P(T).
    #[serde(rename = "P_seq", serialize_with = "serde_rows::matrices")]
    pub p_seq: Vec<DMatrix<f64>>,
    /// K(0), …, K(T−1).
    #[serde(rename = "K_seq", serialize_with = "serde_rows::matrices")]
    pub k_seq: Vec<DMatrix<f64>>,
}

impl SdrdeSolution {
    pub fn horizon(&self) -> usize {
        self.k_seq.len()
    }
}

/// One backward step: (K(t), P(t)) from P(t+1).
pub(crate) fn sdrde_step(
    stage: &LqgbProblem,
    p_next: &DMatrix<f64>,
    t: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = gain_terms(stage, p_next);
    let m_inv = linalg::guarded_inverse(&m).ok_or(Error::SingularInnerMatrix { stage: Some(t) })?;
    let k = -(m_inv * n);
    let p = cost_map(stage, p_next, &k);
    Ok((k, p))
}

/// Runs the stochastic Riccati difference equations backward from
/// P(T) = `terminal`.
pub fn solve_sdrde(model: &TimeVaryingModel, terminal: &DMatrix<f64>) -> Result<SdrdeSolution> {
    let horizon = model.horizon;
    let n = model.vars().n;
    if terminal.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "terminal kernel is {}×{}, expected {n}×{n}",
            terminal.nrows(),
            terminal.ncols()
        )));
    }
    let mut p_seq = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut k_seq = vec![DMatrix::zeros(0, 0); horizon];
    p_seq[horizon] = terminal.clone();
    for t in (0..horizon).rev() {
        let (k, p) = sdrde_step(&model.stage(t).base, &p_seq[t + 1], t)?;
        k_seq[t] = k;
        p_seq[t] = p;
    }
    Ok(SdrdeSolution { p_seq, k_seq })
}
