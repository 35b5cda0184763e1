use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::PolicyExpansion;
use crate::model::NonlinearModel;
use crate::par::{self, Execution};
use crate::poly::{CompiledPoly, MultiPoly, PolyVector};

/// Maximum dynamic-programming residuals over sampled states, per radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// max |π(x) − E{π(z)} − l(x,κ(x))| per radius.
    pub cost: Vec<f64>,
    /// max ‖E{∂π/∂x(z) ∂z/∂u} + ∂l/∂u‖ per radius.
    pub gradient: Vec<f64>,
    /// Log-log slope of `cost` against the radii.
    pub cost_slope: Option<f64>,
    pub gradient_slope: Option<f64>,
}

impl ResidualReport {
    /// The smaller of the two slopes. A correct degree-d expansion keeps it at
    /// least d+1; dropping any term pulls it below.
    pub fn detection_slope(&self) -> Option<f64> {
        Some(self.cost_slope?.min(self.gradient_slope?))
    }
}

/// Least-squares slope of ln(value) against ln(radius); `None` if any value
/// is not positive or fewer than two radii are given.
pub fn fit_slope(radii: &[f64], values: &[f64]) -> Option<f64> {
    if radii.len() < 2 || radii.len() != values.len() || values.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Uniform directions on the unit sphere in R^n.
fn directions(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| loop {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|a| a / norm).collect();
            }
        })
        .collect()
}

struct Evaluator {
    pi: MultiPoly,
    /// Homogeneous parts of π, composed one at a time so that coefficient
    /// pruning stays relative to each part's own scale.
    pi_parts: Vec<MultiPoly>,
    /// Homogeneous parts of ∂π/∂x_i, as `[i][part]`.
    dpi_parts: Vec<Vec<MultiPoly>>,
    kappa: Vec<CompiledPoly>,
    f: Vec<CompiledPoly>,
    gamma: Vec<Vec<CompiledPoly>>,
    /// ∂f_i/∂u_j as `[j][i]`.
    df_du: Vec<Vec<CompiledPoly>>,
    /// ∂γ_{k,i}/∂u_j as `[k][j][i]`.
    dgamma_du: Vec<Vec<Vec<CompiledPoly>>>,
    l: CompiledPoly,
    dl_du: Vec<CompiledPoly>,
}

fn compile_all(v: &PolyVector) -> Vec<CompiledPoly> {
    v.iter().map(CompiledPoly::new).collect()
}

impl Evaluator {
    fn new(expansion: &PolicyExpansion, model: &NonlinearModel) -> Self {
        let vars = model.vars();
        let pi = expansion.cost();
        let f = model.dynamics();
        let channels: Vec<PolyVector> = (0..vars.r).map(|k| model.noise_channel(k)).collect();
        let du = |v: &PolyVector| -> Vec<Vec<CompiledPoly>> {
            (0..vars.m)
                .map(|j| v.iter().map(|p| CompiledPoly::new(&p.partial_derivative(vars.u(j)))).collect())
                .collect()
        };
        let l = model.running_cost();
        let parts = |p: &MultiPoly| -> Vec<MultiPoly> {
            (0..=p.degree().unwrap_or(0))
                .map(|j| p.homogeneous_part(j))
                .filter(|q| !q.is_zero())
                .collect()
        };
        Self {
            pi_parts: parts(&pi),
            dpi_parts: (0..vars.n).map(|i| parts(&pi.partial_derivative(vars.x(i)))).collect(),
            pi,
            kappa: compile_all(&expansion.feedback()),
            f: compile_all(&f),
            gamma: channels.iter().map(compile_all).collect(),
            df_du: du(&f),
            dgamma_du: channels.iter().map(du).collect(),
            dl_du: (0..vars.m).map(|j| CompiledPoly::new(&l.partial_derivative(vars.u(j)))).collect(),
            l: CompiledPoly::new(&l),
        }
    }

    /// (cost residual, gradient residual) at state `x`.
    fn residuals(&self, x: &[f64]) -> (f64, f64) {
        let vars = self.pi.vars();
        let (n, m) = (vars.n, vars.m);
        let mut point = vec![0.0; vars.total()];
        point[..n].copy_from_slice(x);
        for j in 0..m {
            point[n + j] = self.kappa[j].evaluate(&point);
        }
        let eval = |ps: &[CompiledPoly]| -> Vec<f64> { ps.iter().map(|p| p.evaluate(&point)).collect() };

        // z = a + Σ_k w_k b_k as a polynomial in the noise variables
        let a = eval(&self.f);
        let b: Vec<Vec<f64>> = self.gamma.iter().map(|g| eval(g)).collect();
        let noise: Vec<MultiPoly> = (0..vars.r).map(|k| MultiPoly::var(vars, vars.w(k))).collect();
        let affine = |c: f64, slopes: &mut dyn Iterator<Item = f64>| -> MultiPoly {
            let mut p = MultiPoly::constant(vars, c);
            for (s, w) in slopes.zip(&noise) {
                if s != 0.0 {
                    p = &p + &w.scale(s);
                }
            }
            p
        };
        let subst = PolyVector::new(
            vars,
            (0..vars.total())
                .map(|v| {
                    if v < n {
                        affine(a[v], &mut b.iter().map(|bk| bk[v]))
                    } else {
                        MultiPoly::var(vars, v)
                    }
                })
                .collect(),
        )
        .expect("shared variable space");
        let origin = vec![0.0; vars.total()];
        let expect = |p: &MultiPoly| -> f64 {
            p.gaussian_expectation()
                .expect("noise exponents within range")
                .evaluate(&origin)
        };

        let compose = |q: &MultiPoly| q.compose(&subst, None).expect("substitution length");
        let pi_z: f64 = self.pi_parts.iter().map(|q| expect(&compose(q))).sum();
        let cost = self.pi.evaluate(&point) - pi_z - self.l.evaluate(&point);

        let grads: Vec<Vec<MultiPoly>> = self.dpi_parts.iter().map(|qs| qs.iter().map(compose).collect()).collect();
        let mut grad_sq = 0.0;
        for j in 0..m {
            let df = eval(&self.df_du[j]);
            let dg: Vec<Vec<f64>> = self.dgamma_du.iter().map(|c| eval(&c[j])).collect();
            let mut total = self.dl_du[j].evaluate(&point);
            for (i, gs) in grads.iter().enumerate() {
                let factor = affine(df[i], &mut dg.iter().map(|dk| dk[i]));
                total += gs.iter().map(|g| expect(&(g * &factor))).sum::<f64>();
            }
            grad_sq += total * total;
        }
        (cost.abs(), grad_sq.sqrt())
    }
}

/// Evaluates both dynamic-programming equations at `samples` states on each
/// sphere ‖x‖ = radius (the same seeded directions for every radius) and fits
/// the decay rate of the worst residual.
pub fn dp_residual(
    expansion: &PolicyExpansion,
    model: &NonlinearModel,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> ResidualReport {
    dp_residual_with(expansion, model, radii, samples, seed, Execution::default())
}

pub fn dp_residual_with(
    expansion: &PolicyExpansion,
    model: &NonlinearModel,
    radii: &[f64],
    samples: usize,
    seed: u64,
    exec: Execution,
) -> ResidualReport {
    let ev = Evaluator::new(expansion, model);
    let dirs = directions(model.vars().n, samples, seed);
    let mut cost = Vec::with_capacity(radii.len());
    let mut gradient = Vec::with_capacity(radii.len());
    for &radius in radii {
        let per_sample = par::map_indexed(exec, samples, |s| {
            let x: Vec<f64> = dirs[s].iter().map(|d| d * radius).collect();
            ev.residuals(&x)
        });
        cost.push(per_sample.iter().map(|r| r.0).fold(0.0, f64::max));
        gradient.push(per_sample.iter().map(|r| r.1).fold(0.0, f64::max));
    }
    ResidualReport {
        radii: radii.to_vec(),
        samples,
        seed,
        cost_slope: fit_slope(radii, &cost),
        gradient_slope: fit_slope(radii, &gradient),
        cost,
        gradient,
    }
}
