use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::LqgbProblem;
use crate::par::{self, Execution};
use crate::poly::{basis_size, monomials_of_degree, MultiPoly, PolyVector, VarCounts};

/// Below this ratio σ_min / σ_max the cost operator is treated as resonant.
pub const RESONANCE_TOL: f64 = 1e-10;

/// The map p ↦ p − E{p((F+GK)x + Σ w_k (C_k+D_kK)x)} on homogeneous
/// polynomials of one degree, in graded-lex coefficient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CostOperator {
    pub degree: u32,
    pub matrix: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl CostOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_resonant(&self) -> bool {
        !(self.sigma_min > RESONANCE_TOL * self.sigma_max)
    }

    /// Solves `L p = rhs` for the homogeneous polynomial `p`.
    pub fn solve(&self, rhs: &MultiPoly) -> Result<MultiPoly> {
        if self.is_resonant() {
            return Err(Error::OperatorSingular {
                degree: self.degree,
                sigma_min: self.sigma_min,
            });
        }
        let b = DVector::from_vec(rhs.coeff_vector(self.degree)?);
        let x = self
            .matrix
            .clone()
            .lu()
            .solve(&b)
            .ok_or(Error::OperatorSingular {
                degree: self.degree,
                sigma_min: self.sigma_min,
            })?;
        MultiPoly::from_coeff_vector(rhs.vars(), self.degree, x.as_slice())
    }

    /// Applies the operator to a homogeneous polynomial of its degree.
    pub fn apply(&self, p: &MultiPoly) -> Result<MultiPoly> {
        let c = DVector::from_vec(p.coeff_vector(self.degree)?);
        MultiPoly::from_coeff_vector(p.vars(), self.degree, (&self.matrix * c).as_slice())
    }
}

/// x ↦ (F+GK)x + Σ w_k (C_k+D_kK)x as a substitution for every variable
/// (controls and noises map to themselves).
pub(crate) fn closed_loop_linear_map(problem: &LqgbProblem, k: &DMatrix<f64>, vars: VarCounts) -> PolyVector {
    let a = &problem.transition + &problem.input * k;
    let mut comps: Vec<MultiPoly> = PolyVector::linear_map(vars, &a).into_components();
    for (ch, (c, d)) in problem.state_noise.iter().zip(&problem.input_noise).enumerate() {
        let b = c + d * k;
        let w = MultiPoly::var(vars, vars.w(ch));
        for (i, row) in PolyVector::linear_map(vars, &b).iter().enumerate() {
            comps[i] = &comps[i] + &(&w * row);
        }
    }
    comps.extend((vars.n..vars.total()).map(|v| MultiPoly::var(vars, v)));
    PolyVector::new(vars, comps).expect("shared variable space")
}

/// Assembles the cost operator on homogeneous polynomials of `degree` in x,
/// one column per basis monomial.
pub fn build_cost_operator(
    problem: &LqgbProblem,
    k: &DMatrix<f64>,
    degree: u32,
    exec: Execution,
) -> Result<CostOperator> {
    let vars = problem.vars();
    let n = vars.n;
    let basis = monomials_of_degree(n, degree);
    let dim = basis_size(n, degree);
    let subst = closed_loop_linear_map(problem, k, vars);
    let tail = vars.total() - n;

    let columns = par::map_indexed(exec, dim, |j| -> Result<Vec<f64>> {
        let mut exps = basis[j].clone();
        exps.extend(std::iter::repeat_n(0, tail));
        let p = MultiPoly::monomial(vars, exps, 1.0)?;
        let image = p.compose(&subst, None)?.gaussian_expectation()?;
        let mut col = image.homogeneous_part(degree).coeff_vector(degree)?;
        col.iter_mut().for_each(|v| *v = -*v);
        col[j] += 1.0;
        Ok(col)
    });
    let mut matrix = DMatrix::zeros(dim, dim);
    for (j, col) in columns.into_iter().enumerate() {
        matrix.set_column(j, &DVector::from_vec(col?));
    }
    let sv = matrix.clone().singular_values();
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CostOperator {
        degree,
        matrix,
        sigma_min,
        sigma_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_noiseless_operator() {
        let a: f64 = 0.7;
        let prob = LqgbProblem::new(scalar(a), scalar(0.0), scalar(1.0), None, scalar(1.0), vec![], vec![]).unwrap();
        let op = build_cost_operator(&prob, &scalar(0.0), 3, Execution::Sequential).unwrap();
        assert_eq!(op.dim(), 1);
        assert!((op.matrix[(0, 0)] - (1.0 - a.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn scalar_noisy_operator() {
        let (a, c): (f64, f64) = (0.6, 0.3);
        let prob =
            LqgbProblem::new(scalar(a), scalar(0.0), scalar(1.0), None, scalar(1.0), vec![scalar(c)], vec![scalar(0.0)]).unwrap();
        let op = build_cost_operator(&prob, &scalar(0.0), 3, Execution::Sequential).unwrap();
        let expected = 1.0 - (a.powi(3) + 3.0 * a * c * c);
        assert!((op.matrix[(0, 0)] - expected).abs() < 1e-15);

        // scalar closed form for the cubic cost term
        let rho = 0.25;
        let rhs = MultiPoly::monomial(prob.vars(), vec![3, 0, 0], rho).unwrap();
        let sol = op.solve(&rhs).unwrap();
        assert!((sol.coeff(&[3, 0, 0]) - rho / expected).abs() < 1e-15);
    }

    #[test]
    fn resonance_is_reported() {
        let prob = LqgbProblem::new(scalar(1.0), scalar(0.0), scalar(1.0), None, scalar(1.0), vec![], vec![]).unwrap();
        let op = build_cost_operator(&prob, &scalar(0.0), 3, Execution::Sequential).unwrap();
        assert!(op.is_resonant());
        let rhs = MultiPoly::monomial(prob.vars(), vec![3, 0], 1.0).unwrap();
        assert!(matches!(op.solve(&rhs), Err(Error::OperatorSingular { degree: 3, .. })));
    }

    #[test]
    fn execution_policies_agree() {
        let prob = LqgbProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            None,
            scalar(1.0),
            vec![DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, 0.1])],
            vec![DMatrix::from_row_slice(2, 1, &[0.0, 0.1])],
        )
        .unwrap();
        let k = DMatrix::from_row_slice(1, 2, &[-0.1, -0.3]);
        let a = build_cost_operator(&prob, &k, 4, Execution::Sequential).unwrap();
        let b = build_cost_operator(&prob, &k, 4, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
