//! Monte Carlo estimates of the accumulated cost of a polynomial feedback law.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::{FiniteHorizonExpansion, PolicyExpansion};
use crate::model::{NonlinearModel, TimeVaryingModel};
use crate::par::{self, pairwise_sum, Execution};
use crate::poly::{CompiledPoly, PolyVector};

pub const DEFAULT_COST_CAP: f64 = 1e9;

/// The feedback law driving the simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    Stationary(PolicyExpansion),
    TimeVarying(FiniteHorizonExpansion),
}

impl Feedback {
    fn degree(&self) -> u32 {
        match self {
            Feedback::Stationary(e) => e.degree(),
            Feedback::TimeVarying(e) => e.degree,
        }
    }
}

/// The system being simulated.
#[derive(Debug, Clone, Copy)]
pub enum SimModel<'a> {
    Stationary(&'a NonlinearModel),
    TimeVarying(&'a TimeVaryingModel),
}

impl<'a> From<&'a NonlinearModel> for SimModel<'a> {
    fn from(m: &'a NonlinearModel) -> Self {
        SimModel::Stationary(m)
    }
}

impl<'a> From<&'a TimeVaryingModel> for SimModel<'a> {
    fn from(m: &'a TimeVaryingModel) -> Self {
        SimModel::TimeVarying(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub feedback: Feedback,
    /// Use κ only through this degree; `None` uses every computed term.
    pub feedback_degree: Option<u32>,
    /// Paths whose running cost exceeds this are counted as diverged.
    pub cost_cap: f64,
    pub keep_paths: bool,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(x0: Vec<f64>, horizon: usize, samples: usize, seed: u64, feedback: Feedback) -> Self {
        Self {
            x0,
            horizon,
            samples,
            seed,
            feedback,
            feedback_degree: None,
            cost_cap: DEFAULT_COST_CAP,
            keep_paths: false,
            execution: Execution::default(),
        }
    }

    pub fn truncated(mut self, degree: u32) -> Self {
        self.feedback_degree = Some(degree);
        self
    }

    fn effective_degree(&self) -> u32 {
        let full = self.feedback.degree();
        self.feedback_degree.map_or(full, |d| d.min(full))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    /// Mean over the paths that stayed below the cost cap (NaN if none did).
    pub mean_cost: f64,
    pub std_error: f64,
    pub diverged_fraction: f64,
    pub samples: usize,
    pub feedback_degree: u32,
    /// Cost of every path in index order; `None` marks a diverged path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_path_costs: Option<Vec<Option<f64>>>,
}

struct CompiledStage {
    f: Vec<CompiledPoly>,
    gamma: Vec<Vec<CompiledPoly>>,
    l: CompiledPoly,
}

impl CompiledStage {
    fn new(model: &NonlinearModel) -> Self {
        let compile = |v: &PolyVector| v.iter().map(CompiledPoly::new).collect::<Vec<_>>();
        Self {
            f: compile(&model.dynamics()),
            gamma: (0..model.vars().r).map(|k| compile(&model.noise_channel(k))).collect(),
            l: CompiledPoly::new(&model.running_cost()),
        }
    }
}

/// Everything a path needs, compiled once.
struct Plan {
    n: usize,
    m: usize,
    r: usize,
    stages: Vec<CompiledStage>,
    /// One entry when the law is stationary.
    feedback: Vec<Vec<CompiledPoly>>,
    terminal: Option<CompiledPoly>,
}

impl Plan {
    fn new(config: &SimConfig, model: SimModel<'_>) -> Result<Self> {
        let (vars, max_degree) = match model {
            SimModel::Stationary(m) => (m.vars(), m.max_degree),
            SimModel::TimeVarying(tv) => {
                let lowest = (0..tv.horizon).filter_map(|t| tv.stage(t).max_degree).min();
                (tv.vars(), lowest)
            }
        };
        if config.samples == 0 || config.horizon == 0 {
            return Err(Error::Invariant("samples and horizon must be at least 1".into()));
        }
        if !(config.cost_cap > 0.0) {
            return Err(Error::Invariant(format!("cost cap must be positive, got {}", config.cost_cap)));
        }
        if config.x0.len() != vars.n {
            return Err(Error::Dimension(format!("x0 has length {}, state dimension is {}", config.x0.len(), vars.n)));
        }
        let degree = config.effective_degree();
        if let Some(available) = max_degree {
            if degree > available {
                return Err(Error::DegreeExceedsModel {
                    requested: degree,
                    available,
                });
            }
        }

        let (stages, terminal) = match model {
            SimModel::Stationary(m) => (vec![CompiledStage::new(m)], None),
            SimModel::TimeVarying(tv) => {
                if config.horizon > tv.horizon {
                    return Err(Error::Invariant(format!(
                        "simulation horizon {} exceeds the model horizon {}",
                        config.horizon, tv.horizon
                    )));
                }
                let stages = match &tv.stages {
                    crate::model::Stages::Constant(m) => vec![CompiledStage::new(m)],
                    crate::model::Stages::Varying(v) => v.iter().map(CompiledStage::new).collect(),
                };
                // the terminal cost only applies when the run reaches T
                let terminal = (config.horizon == tv.horizon).then(|| CompiledPoly::new(&tv.terminal_cost));
                (stages, terminal)
            }
        };

        let compile = |v: PolyVector| v.iter().map(CompiledPoly::new).collect::<Vec<_>>();
        let feedback = match &config.feedback {
            Feedback::Stationary(e) => {
                if e.vars != vars {
                    return Err(Error::Dimension("feedback and model variable spaces differ".into()));
                }
                vec![compile(e.feedback_through(degree))]
            }
            Feedback::TimeVarying(e) => {
                if e.vars != vars {
                    return Err(Error::Dimension("feedback and model variable spaces differ".into()));
                }
                if e.horizon() < config.horizon {
                    return Err(Error::Invariant(format!(
                        "feedback covers {} stages, simulation needs {}",
                        e.horizon(),
                        config.horizon
                    )));
                }
                (0..config.horizon)
                    .map(|t| compile(e.at(t).feedback_through(degree)))
                    .collect()
            }
        };

        Ok(Self {
            n: vars.n,
            m: vars.m,
            r: vars.r,
            stages,
            feedback,
            terminal,
        })
    }

    /// Accumulated cost of one path, or `None` once it passes the cap.
    fn run_path(&self, config: &SimConfig, path: usize) -> Result<Option<f64>> {
        let (n, m, r) = (self.n, self.m, self.r);
        let mut noise = NoiseStream::new(config.seed, path);
        let mut point = vec![0.0; n + m + r];
        let mut next = vec![0.0; n];
        let mut w = vec![0.0; r];
        point[..n].copy_from_slice(&config.x0);
        let mut cost = 0.0;

        for t in 0..config.horizon {
            let stage = &self.stages[t.min(self.stages.len() - 1)];
            let kappa = &self.feedback[t.min(self.feedback.len() - 1)];
            for j in 0..m {
                point[n + j] = kappa[j].evaluate(&point);
            }
            cost += stage.l.evaluate(&point);
            if cost > config.cost_cap {
                return Ok(None);
            }
            noise.fill(&mut w);
            for i in 0..n {
                let mut v = stage.f[i].evaluate(&point);
                for (k, wk) in w.iter().enumerate() {
                    v += wk * stage.gamma[k][i].evaluate(&point);
                }
                next[i] = v;
            }
            if next.iter().any(|v| !v.is_finite()) || !cost.is_finite() {
                return Err(Error::NonFiniteState { path, step: t + 1 });
            }
            point[..n].copy_from_slice(&next);
        }
        if let Some(term) = &self.terminal {
            cost += term.evaluate(&point);
            if cost > config.cost_cap {
                return Ok(None);
            }
        }
        Ok(Some(cost))
    }
}

/// Standard normals for one path: draw t·r + k of ChaCha8 stream `path` under
/// key `seed` drives channel k at step t, so each path is reproducible no
/// matter which thread runs it.
struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    fn new(seed: u64, path: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self { rng }
    }

    fn fill(&mut self, out: &mut [f64]) {
        for w in out {
            *w = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Simulates `config.samples` closed-loop paths and summarizes their costs.
pub fn simulate<'a>(config: &SimConfig, model: impl Into<SimModel<'a>>) -> Result<SimResult> {
    let plan = Plan::new(config, model.into())?;
    let paths = par::map_indexed(config.execution, config.samples, |p| plan.run_path(config, p));
    let paths: Vec<Option<f64>> = paths.into_iter().collect::<Result<_>>()?;

    let kept: Vec<f64> = paths.iter().flatten().copied().collect();
    let count = kept.len();
    let (mean_cost, std_error) = if count == 0 {
        (f64::NAN, 0.0)
    } else {
        // shifted by the first path so that identical paths give exactly zero spread
        let shift = kept[0];
        let offsets: Vec<f64> = kept.iter().map(|c| c - shift).collect();
        let mean_offset = pairwise_sum(&offsets) / count as f64;
        let mean = shift + mean_offset;
        let se = if count > 1 {
            let dev: Vec<f64> = offsets.iter().map(|o| (o - mean_offset) * (o - mean_offset)).collect();
            (pairwise_sum(&dev) / (count - 1) as f64 / count as f64).sqrt()
        } else {
            0.0
        };
        (mean, se)
    };
    Ok(SimResult {
        mean_cost,
        std_error,
        diverged_fraction: (config.samples - count) as f64 / config.samples as f64,
        samples: config.samples,
        feedback_degree: config.effective_degree(),
        per_path_costs: config.keep_paths.then_some(paths),
    })
}

/// Simulates several feedback laws on common random numbers.
pub fn compare_policies<'a>(configs: &[SimConfig], model: impl Into<SimModel<'a>>) -> Result<Vec<SimResult>> {
    let model = model.into();
    let first = configs
        .first()
        .ok_or_else(|| Error::ConfigMismatch("no policies given".into()))?;
    for (i, c) in configs.iter().enumerate().skip(1) {
        let mut diffs = Vec::new();
        if c.x0 != first.x0 {
            diffs.push("x0");
        }
        if c.horizon != first.horizon {
            diffs.push("horizon");
        }
        if c.samples != first.samples {
            diffs.push("samples");
        }
        if c.seed != first.seed {
            diffs.push("seed");
        }
        if !diffs.is_empty() {
            return Err(Error::ConfigMismatch(format!("policy {i} differs in {}", diffs.join(", "))));
        }
    }
    configs.iter().map(|c| simulate(c, model)).collect()
}
