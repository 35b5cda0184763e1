//! JSON problem files.
//!
//! Matrices are nested row-major arrays (a bare number is accepted for 1×1).
//! Polynomials are arrays of `{"x": [...], "u": [...], "coeff": c}` records.
//! A file with a `"horizon"` field describes a finite-horizon problem; its
//! optional `"stages"` entries override the top-level data stage by stage.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LqgbProblem, NonlinearModel, Problem, Stages, TimeVaryingModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{MonomialRecord, MultiPoly, PolyVector, VarCounts};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum MatrixJson {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct StageJson {
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    f: Option<MatrixJson>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    g: Option<MatrixJson>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<MatrixJson>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r: Option<MatrixJson>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    s: Option<MatrixJson>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<MatrixJson>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f_hot: Option<Vec<Vec<MonomialRecord>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_hot: Option<Vec<Vec<Vec<MonomialRecord>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l_hot: Option<Vec<MonomialRecord>>,
}

impl StageJson {
    fn merged_over(&self, top: &StageJson) -> StageJson {
        StageJson {
            f: self.f.clone().or_else(|| top.f.clone()),
            g: self.g.clone().or_else(|| top.g.clone()),
            q: self.q.clone().or_else(|| top.q.clone()),
            r: self.r.clone().or_else(|| top.r.clone()),
            s: self.s.clone().or_else(|| top.s.clone()),
            c: self.c.clone().or_else(|| top.c.clone()),
            d: self.d.clone().or_else(|| top.d.clone()),
            f_hot: self.f_hot.clone().or_else(|| top.f_hot.clone()),
            gamma_hot: self.gamma_hot.clone().or_else(|| top.gamma_hot.clone()),
            l_hot: self.l_hot.clone().or_else(|| top.l_hot.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    n: usize,
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    f: Option<MatrixJson>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    g: Option<MatrixJson>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<MatrixJson>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r_weight: Option<MatrixJson>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    s: Option<MatrixJson>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<MatrixJson>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f_hot: Option<Vec<Vec<MonomialRecord>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_hot: Option<Vec<Vec<Vec<MonomialRecord>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l_hot: Option<Vec<MonomialRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stages: Option<Vec<StageJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal_cost: Option<Vec<MonomialRecord>>,
}

impl ProblemJson {
    fn top_level(&self) -> StageJson {
        StageJson {
            f: self.f.clone(),
            g: self.g.clone(),
            q: self.q.clone(),
            r: self.r_weight.clone(),
            s: self.s.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            f_hot: self.f_hot.clone(),
            gamma_hot: self.gamma_hot.clone(),
            l_hot: self.l_hot.clone(),
        }
    }

    fn with_top_level(mut self, data: StageJson) -> Self {
        self.f = data.f;
        self.g = data.g;
        self.q = data.q;
        self.r_weight = data.r;
        self.s = data.s;
        self.c = data.c;
        self.d = data.d;
        self.f_hot = data.f_hot;
        self.gamma_hot = data.gamma_hot;
        self.l_hot = data.l_hot;
        self
    }

    fn header(vars: VarCounts) -> Self {
        ProblemJson {
            description: None,
            n: vars.n,
            m: vars.m,
            r: Some(vars.r),
            f: None,
            g: None,
            q: None,
            r_weight: None,
            s: None,
            c: None,
            d: None,
            f_hot: None,
            gamma_hot: None,
            l_hot: None,
            max_degree: None,
            horizon: None,
            stages: None,
            terminal_cost: None,
        }
    }
}

pub fn parse_problem(path: impl AsRef<Path>) -> Result<Problem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_problem_str(&text)
}

pub fn parse_problem_str(text: &str) -> Result<Problem> {
    let raw: ProblemJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(raw)
}

fn build(raw: ProblemJson) -> Result<Problem> {
    let (n, m) = (raw.n, raw.m);
    let top = raw.top_level();
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    let r = match raw.r {
        Some(r) => r,
        None => {
            let mut r = 0;
            if let Some(c) = &top.c {
                r = c.len();
            }
            if let Some(d) = &top.d {
                r = r.max(d.len());
            }
            if let Some(s) = raw.stages.iter().flatten().find(|s| s.c.is_some() || s.d.is_some()) {
                r = r.max(s.c.as_ref().map_or(0, Vec::len)).max(s.d.as_ref().map_or(0, Vec::len));
            }
            r
        }
    };
    let vars = VarCounts::new(n, m, r);

    match raw.horizon {
        None => {
            if raw.stages.is_some() || raw.terminal_cost.is_some() {
                return Err(Error::Parse(
                    "\"stages\" and \"terminal_cost\" require \"horizon\"".into(),
                ));
            }
            Ok(Problem::Infinite(build_stage(&top, vars, raw.max_degree)?))
        }
        Some(horizon) => {
            let stages = match &raw.stages {
                None => Stages::Constant(Box::new(build_stage(&top, vars, raw.max_degree)?)),
                Some(list) => {
                    if list.len() != horizon {
                        return Err(Error::Dimension(format!(
                            "{} stages for horizon {horizon}",
                            list.len()
                        )));
                    }
                    Stages::Varying(
                        list.iter()
                            .enumerate()
                            .map(|(t, s)| {
                                build_stage(&s.merged_over(&top), vars, raw.max_degree)
                                    .map_err(|e| e.context(format!("stage {t}")))
                            })
                            .collect::<Result<_>>()?,
                    )
                }
            };
            let terminal_cost = match &raw.terminal_cost {
                Some(recs) => poly_x_only(vars, recs, "terminal_cost")?,
                None => MultiPoly::zero(vars),
            };
            Ok(Problem::Finite(TimeVaryingModel::new(horizon, stages, terminal_cost)?))
        }
    }
}

fn build_stage(data: &StageJson, vars: VarCounts, max_degree: Option<u32>) -> Result<NonlinearModel> {
    let VarCounts { n, m, r } = vars;
    let required = |v: &Option<MatrixJson>, name: &str, rows, cols| -> Result<DMatrix<f64>> {
        match v {
            Some(mj) => to_matrix(mj, name, rows, cols),
            None => Err(Error::Parse(format!("missing field \"{name}\""))),
        }
    };
    let f = required(&data.f, "F", n, n)?;
    let g = required(&data.g, "G", n, m)?;
    let q = required(&data.q, "Q", n, n)?;
    let rw = required(&data.r, "R", m, m)?;
    let s = data.s.as_ref().map(|s| to_matrix(s, "S", n, m)).transpose()?;
    let blocks = |v: &Option<Vec<MatrixJson>>, name: &str, cols| -> Result<Vec<DMatrix<f64>>> {
        match v {
            None => Ok(vec![DMatrix::zeros(n, cols); r]),
            Some(list) => {
                if list.len() != r {
                    return Err(Error::Dimension(format!(
                        "\"{name}\" has {} blocks, expected r = {r}",
                        list.len()
                    )));
                }
                list.iter()
                    .enumerate()
                    .map(|(k, mj)| to_matrix(mj, &format!("{name}[{k}]"), n, cols))
                    .collect()
            }
        }
    };
    let c = blocks(&data.c, "C", n)?;
    let d = blocks(&data.d, "D", m)?;
    let base = LqgbProblem::new(f, g, q, s, rw, c, d)?;

    let f_hot = match &data.f_hot {
        None => PolyVector::zeros(vars, n),
        Some(comps) => poly_vector(vars, comps, "f_hot")?,
    };
    let gamma_hot = match &data.gamma_hot {
        None => vec![PolyVector::zeros(vars, n); r],
        Some(chs) => {
            if chs.len() != r {
                return Err(Error::Dimension(format!(
                    "\"gamma_hot\" has {} channels, expected r = {r}",
                    chs.len()
                )));
            }
            chs.iter()
                .enumerate()
                .map(|(k, comps)| poly_vector(vars, comps, &format!("gamma_hot[{k}]")))
                .collect::<Result<_>>()?
        }
    };
    let l_hot = match &data.l_hot {
        None => MultiPoly::zero(vars),
        Some(recs) => poly(vars, recs, "l_hot")?,
    };
    NonlinearModel::new(base, f_hot, gamma_hot, l_hot, max_degree)
}

fn to_matrix(mj: &MatrixJson, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    match mj {
        MatrixJson::Scalar(v) => {
            if (rows, cols) != (1, 1) {
                return Err(Error::Dimension(format!(
                    "\"{name}\" given as a scalar, expected {rows}×{cols}"
                )));
            }
            Ok(DMatrix::from_element(1, 1, *v))
        }
        MatrixJson::Rows(data) => {
            let shape_ok = data.len() == rows && data.iter().all(|row| row.len() == cols);
            // an empty matrix may be written as []
            if !shape_ok && !(rows * cols == 0 && data.iter().all(Vec::is_empty)) {
                return Err(Error::Dimension(format!(
                    "\"{name}\" is not {rows}×{cols}"
                )));
            }
            Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
        }
    }
}

fn poly(vars: VarCounts, recs: &[MonomialRecord], name: &str) -> Result<MultiPoly> {
    if recs.iter().any(|r| !r.w.is_empty()) {
        return Err(Error::Invariant(format!("{name} may not contain noise exponents")));
    }
    MultiPoly::from_records(vars, recs).map_err(|e| e.context(name.to_string()))
}

fn poly_x_only(vars: VarCounts, recs: &[MonomialRecord], name: &str) -> Result<MultiPoly> {
    if recs.iter().any(|r| r.u.iter().any(|&e| e > 0)) {
        return Err(Error::Invariant(format!("{name} may depend on x only")));
    }
    poly(vars, recs, name)
}

fn poly_vector(vars: VarCounts, comps: &[Vec<MonomialRecord>], name: &str) -> Result<PolyVector> {
    if comps.len() != vars.n {
        return Err(Error::Dimension(format!(
            "\"{name}\" has {} components, expected n = {}",
            comps.len(),
            vars.n
        )));
    }
    let polys = comps
        .iter()
        .enumerate()
        .map(|(i, recs)| poly(vars, recs, &format!("{name}[{i}]")))
        .collect::<Result<_>>()?;
    PolyVector::new(vars, polys)
}

fn stage_to_json(model: &NonlinearModel) -> StageJson {
    let b = &model.base;
    let mat = |a: &DMatrix<f64>| MatrixJson::Rows(linalg::to_rows(a));
    StageJson {
        f: Some(mat(&b.transition)),
        g: Some(mat(&b.input)),
        q: Some(mat(&b.state_weight)),
        r: Some(mat(&b.input_weight)),
        s: Some(mat(&b.cross_weight)),
        c: Some(b.state_noise.iter().map(mat).collect()),
        d: Some(b.input_noise.iter().map(mat).collect()),
        f_hot: (!model.f_hot.is_zero())
            .then(|| model.f_hot.iter().map(MultiPoly::to_records).collect()),
        gamma_hot: (!model.gamma_hot.iter().all(PolyVector::is_zero)).then(|| {
            model
                .gamma_hot
                .iter()
                .map(|g| g.iter().map(MultiPoly::to_records).collect())
                .collect()
        }),
        l_hot: (!model.l_hot.is_zero()).then(|| model.l_hot.to_records()),
    }
}

/// Serializes a problem in the file format accepted by [`parse_problem`].
pub fn problem_to_json(problem: &Problem) -> Value {
    let vars = problem.vars();
    let header = ProblemJson::header(vars);
    let raw = match problem {
        Problem::Infinite(model) => ProblemJson {
            max_degree: model.max_degree,
            ..header.with_top_level(stage_to_json(model))
        },
        Problem::Finite(tv) => {
            let (data, stages) = match &tv.stages {
                Stages::Constant(m) => (stage_to_json(m), None),
                Stages::Varying(list) => (
                    StageJson::default(),
                    Some(list.iter().map(stage_to_json).collect()),
                ),
            };
            ProblemJson {
                max_degree: tv.stage(0).max_degree,
                horizon: Some(tv.horizon),
                stages,
                terminal_cost: (!tv.terminal_cost.is_zero()).then(|| tv.terminal_cost.to_records()),
                ..header.with_top_level(data)
            }
        }
    };
    serde_json::to_value(raw).expect("problem serializes")
}
