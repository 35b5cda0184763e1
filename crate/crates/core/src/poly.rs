//! Sparse multivariate polynomials over state `x`, control `u` and noise `w`
//! variables.
//!
//! Variables are laid out as `x₁..x_n, u₁..u_m, w₁..w_r`. The *degree* of a
//! monomial counts state and control exponents only: noise variables are
//! weightless, so truncation and homogeneous parts are taken in `(x, u)`.
//! A term such as `w₁² x₁³` therefore has degree 3 and survives until the
//! Gaussian expectation removes its noise factor.
//!
//! Terms are kept in a `BTreeMap` ordered by degree, then noise degree, then
//! descending lexicographic exponent order, so iteration (and every sum built
//! from it) is deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms whose magnitude falls below this fraction of the largest coefficient
/// are dropped after arithmetic.
pub const PRUNE_REL: f64 = 1e-14;

/// Largest noise exponent accepted by [`MultiPoly::gaussian_expectation`].
pub const MAX_NOISE_EXPONENT: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarCounts {
    pub n: usize,
    pub m: usize,
    pub r: usize,
}

impl VarCounts {
    pub fn new(n: usize, m: usize, r: usize) -> Self {
        Self { n, m, r }
    }

    pub fn total(&self) -> usize {
        self.n + self.m + self.r
    }

    pub fn x(&self, i: usize) -> usize {
        debug_assert!(i < self.n);
        i
    }

    pub fn u(&self, j: usize) -> usize {
        debug_assert!(j < self.m);
        self.n + j
    }

    pub fn w(&self, k: usize) -> usize {
        debug_assert!(k < self.r);
        self.n + self.m + k
    }

    fn weighted(&self) -> usize {
        self.n + self.m
    }
}

/// Exponent vector with cached degree data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    exps: Box<[u16]>,
    degree: u32,
    noise_degree: u32,
}

impl Monomial {
    fn new(exps: Box<[u16]>, vars: &VarCounts) -> Self {
        let split = vars.weighted();
        let degree = exps[..split].iter().map(|&e| e as u32).sum();
        let noise_degree = exps[split..].iter().map(|&e| e as u32).sum();
        Self {
            exps,
            degree,
            noise_degree,
        }
    }

    pub fn exponents(&self) -> &[u16] {
        &self.exps
    }

    /// Degree in the state and control variables.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn noise_degree(&self) -> u32 {
        self.noise_degree
    }

    fn product(&self, other: &Monomial) -> Monomial {
        let exps: Box<[u16]> = self
            .exps
            .iter()
            .zip(other.exps.iter())
            .map(|(a, b)| a + b)
            .collect();
        Monomial {
            exps,
            degree: self.degree + other.degree,
            noise_degree: self.noise_degree + other.noise_degree,
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then(self.noise_degree.cmp(&other.noise_degree))
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All exponent vectors of total degree `d` in `n` variables, in graded
/// lexicographic order (`x₁^d` first, `x_n^d` last).
pub fn monomials_of_degree(n: usize, d: u32) -> Vec<Vec<u16>> {
    fn rec(prefix: &mut Vec<u16>, remaining: usize, d: u32, out: &mut Vec<Vec<u16>>) {
        if remaining == 1 {
            prefix.push(d as u16);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=d).rev() {
            prefix.push(e as u16);
            rec(prefix, remaining - 1, d - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(&mut Vec::with_capacity(n), n, d, &mut out);
    out
}

/// Number of monomials of degree `d` in `n` variables, C(n+d−1, d).
pub fn basis_size(n: usize, d: u32) -> usize {
    if n == 0 {
        return usize::from(d == 0);
    }
    let mut acc: u128 = 1;
    for i in 1..=d as u128 {
        acc = acc * (n as u128 - 1 + i) / i;
    }
    acc as usize
}

/// (a−1)!! for even a, 0 for odd a: the a-th moment of a standard normal.
fn normal_moment(a: u32) -> f64 {
    if a % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut k = 1;
    while k < a {
        acc *= k as f64;
        k += 2;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    vars: VarCounts,
    terms: BTreeMap<Monomial, f64>,
}

impl MultiPoly {
    pub fn zero(vars: VarCounts) -> Self {
        Self {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: VarCounts, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(vec![0; vars.total()].into_boxed_slice(), c);
        p.canonicalize();
        p
    }

    /// The polynomial consisting of the single variable with flat index `idx`.
    pub fn var(vars: VarCounts, idx: usize) -> Self {
        let mut exps = vec![0u16; vars.total()];
        exps[idx] = 1;
        Self::monomial(vars, exps, 1.0).expect("index within range")
    }

    pub fn monomial(vars: VarCounts, exps: Vec<u16>, coeff: f64) -> Result<Self> {
        Self::from_terms(vars, std::iter::once((exps, coeff)))
    }

    /// Builds a polynomial from (exponents, coefficient) pairs; repeated
    /// exponents are summed.
    pub fn from_terms<I>(vars: VarCounts, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u16>, f64)>,
    {
        let mut p = Self::zero(vars);
        for (exps, c) in terms {
            if exps.len() != vars.total() {
                return Err(Error::VarMismatch(format!(
                    "exponent vector of length {} for {} variables",
                    exps.len(),
                    vars.total()
                )));
            }
            if !c.is_finite() {
                return Err(Error::Invariant("non-finite coefficient".into()));
            }
            p.add_term(exps.into_boxed_slice(), c);
        }
        p.canonicalize();
        Ok(p)
    }

    /// `Σ coeffs[i] x_i` over the state variables.
    pub fn linear_in_x(vars: VarCounts, coeffs: &[f64]) -> Self {
        Self::linear(vars, 0, coeffs)
    }

    /// `Σ coeffs[j] u_j` over the control variables.
    pub fn linear_in_u(vars: VarCounts, coeffs: &[f64]) -> Self {
        Self::linear(vars, vars.n, coeffs)
    }

    fn linear(vars: VarCounts, offset: usize, coeffs: &[f64]) -> Self {
        let mut p = Self::zero(vars);
        for (i, &c) in coeffs.iter().enumerate() {
            let mut exps = vec![0u16; vars.total()];
            exps[offset + i] = 1;
            p.add_term(exps.into_boxed_slice(), c);
        }
        p.canonicalize();
        p
    }

    /// `½ x'Px`.
    pub fn quadratic_form(vars: VarCounts, p: &nalgebra::DMatrix<f64>) -> Self {
        let mut out = Self::zero(vars);
        for i in 0..vars.n {
            for j in 0..vars.n {
                let mut exps = vec![0u16; vars.total()];
                exps[i] += 1;
                exps[j] += 1;
                out.add_term(exps.into_boxed_slice(), 0.5 * p[(i, j)]);
            }
        }
        out.canonicalize();
        out
    }

    pub fn vars(&self) -> VarCounts {
        self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical order as (exponents, coefficient).
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, exps: &[u16]) -> f64 {
        if exps.len() != self.vars.total() {
            return 0.0;
        }
        let key = Monomial::new(exps.into(), &self.vars);
        self.terms.get(&key).copied().unwrap_or(0.0)
    }

    /// Largest `(x, u)` degree among the terms; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    /// Smallest `(x, u)` degree among the terms.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().next().map(Monomial::degree)
    }

    pub fn has_noise(&self) -> bool {
        self.terms.keys().any(|m| m.noise_degree > 0)
    }

    pub fn has_control(&self) -> bool {
        let (n, m) = (self.vars.n, self.vars.m);
        self.terms
            .keys()
            .any(|mono| mono.exps[n..n + m].iter().any(|&e| e > 0))
    }

    fn add_term(&mut self, exps: Box<[u16]>, c: f64) {
        if c == 0.0 {
            return;
        }
        let key = Monomial::new(exps, &self.vars);
        *self.terms.entry(key).or_insert(0.0) += c;
    }

    fn add_mono(&mut self, key: Monomial, c: f64) {
        *self.terms.entry(key).or_insert(0.0) += c;
    }

    /// Restores canonical form: drops exact zeros and relative dust.
    fn canonicalize(&mut self) {
        let scale = self.terms.values().fold(0.0_f64, |acc, c| acc.max(c.abs()));
        let cutoff = PRUNE_REL * scale;
        self.terms.retain(|_, c| *c != 0.0 && c.abs() >= cutoff);
    }

    fn check_vars(&self, other: &MultiPoly) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::VarMismatch(format!(
                "{:?} vs {:?}",
                self.vars, other.vars
            )));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_mono(m.clone(), c);
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn checked_sub(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.checked_add(&other.scale(-1.0))
    }

    pub fn checked_mul(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.mul_truncated(other, None)
    }

    /// Product keeping only terms of degree ≤ `max_degree`.
    pub fn mul_truncated(&self, other: &MultiPoly, max_degree: Option<u32>) -> Result<MultiPoly> {
        self.check_vars(other)?;
        let mut out = MultiPoly::zero(self.vars);
        self.mul_into(other, max_degree, &mut out);
        out.canonicalize();
        Ok(out)
    }

    fn mul_into(&self, other: &MultiPoly, max_degree: Option<u32>, out: &mut MultiPoly) {
        let limit = max_degree.unwrap_or(u32::MAX);
        for (ma, &ca) in &self.terms {
            if ma.degree > limit {
                break;
            }
            for (mb, &cb) in &other.terms {
                if ma.degree + mb.degree > limit {
                    break;
                }
                out.add_mono(ma.product(mb), ca * cb);
            }
        }
    }

    pub fn scale(&self, s: f64) -> MultiPoly {
        if s == 0.0 {
            return MultiPoly::zero(self.vars);
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out.canonicalize();
        out
    }

    pub fn partial_derivative(&self, var: usize) -> MultiPoly {
        let mut out = MultiPoly::zero(self.vars);
        if var >= self.vars.total() {
            return out;
        }
        for (m, &c) in &self.terms {
            let e = m.exps[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.exps.clone();
            exps[var] -= 1;
            out.add_term(exps, c * e as f64);
        }
        out.canonicalize();
        out
    }

    /// Terms of degree exactly `d`.
    pub fn homogeneous_part(&self, d: u32) -> MultiPoly {
        self.filter(|m| m.degree == d)
    }

    /// Terms of degree ≤ `d`.
    pub fn truncate(&self, d: u32) -> MultiPoly {
        self.filter(|m| m.degree <= d)
    }

    fn filter(&self, keep: impl Fn(&Monomial) -> bool) -> MultiPoly {
        MultiPoly {
            vars: self.vars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Substitutes `subst[v]` for every variable `v` of `self`, discarding
    /// terms of degree above `truncate_at`. The result lives in the variable
    /// space of the substitutes.
    pub fn compose(&self, subst: &PolyVector, truncate_at: Option<u32>) -> Result<MultiPoly> {
        if subst.len() != self.vars.total() {
            return Err(Error::VarMismatch(format!(
                "{} substitutes for {} variables",
                subst.len(),
                self.vars.total()
            )));
        }
        let out_vars = subst.vars();
        let limit = truncate_at.unwrap_or(u32::MAX);
        let min_deg: Vec<Option<u32>> = subst.iter().map(MultiPoly::min_degree).collect();
        let mut powers: Vec<Vec<MultiPoly>> = subst
            .iter()
            .map(|s| vec![MultiPoly::constant(out_vars, 1.0), s.clone()])
            .collect();

        let mut out = MultiPoly::zero(out_vars);
        'terms: for (mono, &c) in &self.terms {
            // lower bound on the degree of every product of this term
            let mut floor: u32 = 0;
            for (v, &e) in mono.exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                match min_deg[v] {
                    None => continue 'terms,
                    Some(d) => floor = floor.saturating_add(d * e as u32),
                }
            }
            if floor > limit {
                continue;
            }
            let mut acc = MultiPoly::constant(out_vars, c);
            let mut remaining = floor;
            for (v, &e) in mono.exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let e = e as usize;
                while powers[v].len() <= e {
                    let next = powers[v]
                        .last()
                        .unwrap()
                        .mul_truncated(&subst[v], truncate_at)
                        .expect("substitutes share variables");
                    powers[v].push(next);
                }
                remaining -= min_deg[v].unwrap() * e as u32;
                let budget = limit.saturating_sub(remaining);
                acc = acc
                    .mul_truncated(&powers[v][e], Some(budget))
                    .expect("substitutes share variables");
                if acc.is_zero() {
                    continue 'terms;
                }
            }
            for (m, c) in acc.terms {
                out.add_mono(m, c);
            }
        }
        out.canonicalize();
        Ok(out)
    }

    /// Expectation over independent standard normal noise variables: every
    /// `∏ w_k^{a_k}` becomes `∏ (a_k − 1)!!` when all `a_k` are even, else 0.
    pub fn gaussian_expectation(&self) -> Result<MultiPoly> {
        let split = self.vars.weighted();
        let mut out = MultiPoly::zero(self.vars);
        for (m, &c) in &self.terms {
            if m.noise_degree == 0 {
                out.add_mono(m.clone(), c);
                continue;
            }
            let mut factor = 1.0;
            for &a in &m.exps[split..] {
                let a = a as u32;
                if a > MAX_NOISE_EXPONENT {
                    return Err(Error::DegreeTooHigh(a));
                }
                factor *= normal_moment(a);
            }
            if factor == 0.0 {
                continue;
            }
            let mut exps = m.exps.clone();
            exps[split..].iter_mut().for_each(|e| *e = 0);
            out.add_term(exps, c * factor);
        }
        out.canonicalize();
        Ok(out)
    }

    /// Coefficients of a degree-`d` homogeneous polynomial in `x`, in graded
    /// lexicographic order.
    pub fn coeff_vector(&self, d: u32) -> Result<Vec<f64>> {
        if self.has_noise() || self.has_control() {
            return Err(Error::NoiseOrControlPresent);
        }
        if self.terms.keys().any(|m| m.degree != d) {
            return Err(Error::NotHomogeneous(d));
        }
        let n = self.vars.n;
        let tail = self.vars.total() - n;
        Ok(monomials_of_degree(n, d)
            .into_iter()
            .map(|mut e| {
                e.extend(std::iter::repeat_n(0, tail));
                self.coeff(&e)
            })
            .collect())
    }

    pub fn from_coeff_vector(vars: VarCounts, d: u32, coeffs: &[f64]) -> Result<MultiPoly> {
        let basis = monomials_of_degree(vars.n, d);
        if basis.len() != coeffs.len() {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for degree {d}, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        let tail = vars.total() - vars.n;
        let mut out = MultiPoly::zero(vars);
        for (mut e, &c) in basis.into_iter().zip(coeffs) {
            e.extend(std::iter::repeat_n(0, tail));
            out.add_term(e.into_boxed_slice(), c);
        }
        out.canonicalize();
        Ok(out)
    }

    /// Value at a point given for all `n + m + r` variables.
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.vars.total());
        self.terms
            .iter()
            .map(|(m, &c)| {
                m.exps
                    .iter()
                    .zip(point)
                    .filter(|(&e, _)| e > 0)
                    .fold(c, |acc, (&e, &v)| acc * v.powi(e as i32))
            })
            .sum()
    }

    /// Re-embeds the polynomial in a larger variable space with the same `n`
    /// and `m` (noise variables are appended) or drops noise variables that do
    /// not occur.
    pub fn with_vars(&self, vars: VarCounts) -> Result<MultiPoly> {
        let mut out = MultiPoly::zero(vars);
        for (mono, &c) in &self.terms {
            let mut exps = vec![0u16; vars.total()];
            for (idx, &e) in mono.exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let target = self.remap_index(idx, &vars).ok_or_else(|| {
                    Error::VarMismatch(format!("variable {idx} has no counterpart in {vars:?}"))
                })?;
                exps[target] = e;
            }
            out.add_term(exps.into_boxed_slice(), c);
        }
        out.canonicalize();
        Ok(out)
    }

    fn remap_index(&self, idx: usize, to: &VarCounts) -> Option<usize> {
        let v = self.vars;
        if idx < v.n {
            (idx < to.n).then_some(idx)
        } else if idx < v.n + v.m {
            let j = idx - v.n;
            (j < to.m).then_some(to.n + j)
        } else {
            let k = idx - v.n - v.m;
            (k < to.r).then_some(to.n + to.m + k)
        }
    }

    pub fn to_records(&self) -> Vec<MonomialRecord> {
        let (n, m) = (self.vars.n, self.vars.m);
        self.terms
            .iter()
            .map(|(mono, &c)| MonomialRecord {
                x: mono.exps[..n].to_vec(),
                u: mono.exps[n..n + m].to_vec(),
                w: if mono.noise_degree == 0 {
                    Vec::new()
                } else {
                    mono.exps[n + m..].to_vec()
                },
                coeff: c,
            })
            .collect()
    }

    pub fn from_records(vars: VarCounts, records: &[MonomialRecord]) -> Result<MultiPoly> {
        let mut terms = Vec::with_capacity(records.len());
        for rec in records {
            let mut exps = Vec::with_capacity(vars.total());
            for (part, len, name) in [(&rec.x, vars.n, "x"), (&rec.u, vars.m, "u"), (&rec.w, vars.r, "w")] {
                if part.is_empty() {
                    exps.extend(std::iter::repeat_n(0, len));
                } else if part.len() == len {
                    exps.extend_from_slice(part);
                } else {
                    return Err(Error::Dimension(format!(
                        "monomial record has {} {name}-exponents, expected {len}",
                        part.len()
                    )));
                }
            }
            terms.push((exps, rec.coeff));
        }
        MultiPoly::from_terms(vars, terms)
    }
}

/// On-disk form of one polynomial term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialRecord {
    #[serde(default)]
    pub x: Vec<u16>,
    #[serde(default)]
    pub u: Vec<u16>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w: Vec<u16>,
    pub coeff: f64,
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    /// Panics on mismatched variable counts; use `checked_add` to recover.
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        self.checked_add(rhs).expect("variable counts match")
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        self.checked_sub(rhs).expect("variable counts match")
    }
}

impl Mul for &MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        self.checked_mul(rhs).expect("variable counts match")
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(-1.0)
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let (n, m) = (self.vars.n, self.vars.m);
        for (i, (mono, &c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
                write!(f, "{}", c.abs())?;
            } else {
                write!(f, "{c}")?;
            }
            for (idx, &e) in mono.exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (name, k) = if idx < n {
                    ('x', idx + 1)
                } else if idx < n + m {
                    ('u', idx - n + 1)
                } else {
                    ('w', idx - n - m + 1)
                };
                write!(f, "*{name}{k}")?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// A vector of polynomials over one shared variable space.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVector {
    vars: VarCounts,
    components: Vec<MultiPoly>,
}

impl PolyVector {
    pub fn new(vars: VarCounts, components: Vec<MultiPoly>) -> Result<Self> {
        if let Some(bad) = components.iter().find(|c| c.vars != vars) {
            return Err(Error::VarMismatch(format!("{:?} vs {vars:?}", bad.vars)));
        }
        Ok(Self { vars, components })
    }

    pub fn zeros(vars: VarCounts, len: usize) -> Self {
        Self {
            vars,
            components: vec![MultiPoly::zero(vars); len],
        }
    }

    /// The substitution that maps every variable to itself.
    pub fn identity(vars: VarCounts) -> Self {
        Self {
            vars,
            components: (0..vars.total()).map(|i| MultiPoly::var(vars, i)).collect(),
        }
    }

    /// `A x` for an `rows × n` matrix.
    pub fn linear_map(vars: VarCounts, a: &nalgebra::DMatrix<f64>) -> Self {
        let components = a
            .row_iter()
            .map(|row| MultiPoly::linear_in_x(vars, &row.iter().copied().collect::<Vec<_>>()))
            .collect();
        Self { vars, components }
    }

    pub fn vars(&self) -> VarCounts {
        self.vars
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiPoly> {
        self.components.iter()
    }

    pub fn components(&self) -> &[MultiPoly] {
        &self.components
    }

    pub fn into_components(self) -> Vec<MultiPoly> {
        self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(MultiPoly::is_zero)
    }

    pub fn checked_add(&self, other: &PolyVector) -> Result<PolyVector> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "vector lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        let components = self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| a.checked_add(b))
            .collect::<Result<_>>()?;
        PolyVector::new(self.vars, components)
    }

    pub fn compose(&self, subst: &PolyVector, truncate_at: Option<u32>) -> Result<PolyVector> {
        let components = self
            .iter()
            .map(|c| c.compose(subst, truncate_at))
            .collect::<Result<_>>()?;
        PolyVector::new(subst.vars, components)
    }

    pub fn homogeneous_part(&self, d: u32) -> PolyVector {
        PolyVector {
            vars: self.vars,
            components: self.iter().map(|c| c.homogeneous_part(d)).collect(),
        }
    }

    pub fn truncate(&self, d: u32) -> PolyVector {
        PolyVector {
            vars: self.vars,
            components: self.iter().map(|c| c.truncate(d)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> PolyVector {
        PolyVector {
            vars: self.vars,
            components: self.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> Vec<f64> {
        self.iter().map(|c| c.evaluate(point)).collect()
    }
}

impl std::ops::Index<usize> for PolyVector {
    type Output = MultiPoly;
    fn index(&self, i: usize) -> &MultiPoly {
        &self.components[i]
    }
}

/// Flattened polynomial for fast repeated numeric evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    coeffs: Vec<f64>,
    /// Term i uses `factors[ends[i-1]..ends[i]]`.
    ends: Vec<u32>,
    /// (variable, exponent) pairs with positive exponent.
    factors: Vec<(u32, u32)>,
}

impl CompiledPoly {
    pub fn new(p: &MultiPoly) -> Self {
        let mut coeffs = Vec::new();
        let mut ends = Vec::new();
        let mut factors = Vec::new();
        for (m, c) in p.terms() {
            coeffs.push(c);
            factors.extend(
                m.exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(v, &e)| (v as u32, e as u32)),
            );
            ends.push(factors.len() as u32);
        }
        Self { coeffs, ends, factors }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut start = 0;
        for (c, &end) in self.coeffs.iter().zip(&self.ends) {
            let mut t = *c;
            for &(v, e) in &self.factors[start..end as usize] {
                let x = point[v as usize];
                t *= match e {
                    1 => x,
                    2 => x * x,
                    _ => x.powi(e as i32),
                };
            }
            start = end as usize;
            acc += t;
        }
        acc
    }
}
