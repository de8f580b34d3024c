//! Margin-based maximum likelihood.
//!
//! With `ζ⁺ = λ + s_j − s_i` and `ζ⁻ = −λ + s_j − s_i` for a comparison of
//! `i` (left) against `j` (right), the outcome probabilities are
//!
//! ```text
//! P(y = +1) = 1 − Φ(ζ⁺)
//! P(y =  0) = Φ(ζ⁺) − Φ(ζ⁻)
//! P(y = −1) = Φ(ζ⁻)
//! ```
//!
//! and the objective is the summed negative log-probability of the observed
//! labels. Scores are identified only up to a common shift, so the solver
//! works in reduced coordinates `(λ, s₁, …, s_{n−1})` with `s_n = −Σ s_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparisons::{label_counts, Comparison, ComparisonDataset, Label};
use crate::links::LinkModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MleError {
    #[error("parameter vector has {got} scores but the dataset has {expected} items")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective is infinite at this parameter (an observed outcome has probability zero)")]
    InfiniteObjective,
    #[error("no feasible starting point found for the {0} model")]
    NoFeasibleStart(LinkModel),
    #[error("invalid parameter: {0}")]
    InvalidTheta(String),
}

/// Noise distribution inside the objective: a link model, or the uniform link
/// convolved with a logistic of scale `tau`.
///
/// The convolution keeps the density even and log-concave, so the smoothed
/// objective stays convex; it is used to approach the uniform optimum when
/// Newton stalls on that objective's kinks.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Noise {
    Link(LinkModel),
    SmoothUniform(f64),
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sigmoid_slope(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

impl Noise {
    #[inline]
    fn cdf(self, t: f64) -> f64 {
        match self {
            Noise::Link(m) => m.cdf_unchecked(t),
            Noise::SmoothUniform(tau) => {
                if t > 0.0 {
                    return 1.0 - self.cdf(-t);
                }
                0.5 * tau * (softplus((t + 1.0) / tau) - softplus((t - 1.0) / tau))
            }
        }
    }

    #[inline]
    fn sf(self, t: f64) -> f64 {
        self.cdf(-t)
    }

    #[inline]
    fn mass_between(self, lo: f64, hi: f64) -> f64 {
        match self {
            Noise::Link(m) => m.mass_between(lo, hi),
            Noise::SmoothUniform(_) if lo > 0.0 => self.sf(lo) - self.sf(hi),
            Noise::SmoothUniform(_) => self.cdf(hi) - self.cdf(lo),
        }
    }

    #[inline]
    fn pdf(self, t: f64) -> f64 {
        match self {
            Noise::Link(m) => m.pdf_unchecked(t),
            Noise::SmoothUniform(tau) => {
                let t = -t.abs();
                0.5 * (sigmoid((t + 1.0) / tau) - sigmoid((t - 1.0) / tau))
            }
        }
    }

    #[inline]
    fn pdf_prime(self, t: f64) -> f64 {
        match self {
            Noise::Link(m) => m.pdf_prime_unchecked(t),
            Noise::SmoothUniform(tau) => {
                let u = -t.abs();
                let v = (sigmoid_slope((u + 1.0) / tau) - sigmoid_slope((u - 1.0) / tau)) / (2.0 * tau);
                if t > 0.0 {
                    -v
                } else {
                    v
                }
            }
        }
    }
}

/// Full parameter `(λ, s)` with `Σ s = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub lambda: f64,
    pub scores: Vec<f64>,
}

impl Theta {
    /// Validating constructor: `λ ≥ 0` and scores summing to zero.
    pub fn new(lambda: f64, scores: Vec<f64>) -> Result<Self, MleError> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(MleError::InvalidTheta(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MleError::InvalidTheta("scores must be finite".into()));
        }
        let sum: f64 = scores.iter().sum();
        let scale = 1.0 + scores.iter().map(|s| s.abs()).sum::<f64>();
        if sum.abs() > 1e-9 * scale {
            return Err(MleError::InvalidTheta(format!("scores must sum to zero, sum is {sum}")));
        }
        Ok(Theta { lambda, scores })
    }

    /// Shifts `scores` to mean zero.
    pub fn centered(lambda: f64, mut scores: Vec<f64>) -> Self {
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        scores.iter_mut().for_each(|s| *s -= mean);
        Theta { lambda, scores }
    }

    pub fn n_items(&self) -> usize {
        self.scores.len()
    }

    pub fn to_reduced(&self) -> ReducedTheta {
        let n = self.scores.len();
        let mut v = DVector::zeros(n);
        v[0] = self.lambda;
        for i in 0..n.saturating_sub(1) {
            v[i + 1] = self.scores[i];
        }
        ReducedTheta(v)
    }
}

/// `(λ, s₁, …, s_{n−1})`; the last score is implied by the zero-sum constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTheta(pub DVector<f64>);

impl ReducedTheta {
    pub fn from_slice(v: &[f64]) -> Self {
        ReducedTheta(DVector::from_column_slice(v))
    }

    pub fn lambda(&self) -> f64 {
        self.0[0]
    }

    /// Number of items this vector parameterizes (equals its length).
    pub fn n_items(&self) -> usize {
        self.0.len()
    }

    /// Reconstitutes `s_n = −Σ_{i<n} s_i`.
    pub fn scores(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.iter().skip(1).copied().collect();
        let last = -s.iter().sum::<f64>();
        s.push(last);
        s
    }

    pub fn to_theta(&self) -> Theta {
        Theta {
            lambda: self.lambda(),
            scores: self.scores(),
        }
    }
}

/// Linear predictors of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zeta {
    pub plus: f64,
    pub minus: f64,
}

pub fn zeta(c: &Comparison, lambda: f64, scores: &[f64]) -> Zeta {
    let diff = scores[c.right.0] - scores[c.left.0];
    Zeta {
        plus: lambda + diff,
        minus: -lambda + diff,
    }
}

/// Derivatives of `−log P(y)` with respect to `(ζ⁺, ζ⁻)`.
#[derive(Debug, Clone, Copy)]
struct Term {
    d_plus: f64,
    d_minus: f64,
    d_pp: f64,
    d_mm: f64,
    d_pm: f64,
}

/// `None` when the observed outcome has zero probability.
#[inline]
fn outcome_nll(m: Noise, label: Label, z: Zeta) -> Option<f64> {
    let p = match label {
        Label::LeftPreferred => m.sf(z.plus),
        Label::Tie if z.plus < z.minus => return None,
        Label::Tie => m.mass_between(z.minus, z.plus),
        Label::RightPreferred => m.cdf(z.minus),
    };
    (p > 0.0).then(|| -p.ln())
}

#[inline]
fn outcome_term(m: Noise, label: Label, z: Zeta) -> Option<Term> {
    outcome_nll(m, label, z)?;
    let term = match label {
        Label::LeftPreferred => {
            let p = m.sf(z.plus);
            let r = m.pdf(z.plus) / p;
            Term {
                d_plus: r,
                d_minus: 0.0,
                d_pp: m.pdf_prime(z.plus) / p + r * r,
                d_mm: 0.0,
                d_pm: 0.0,
            }
        }
        Label::RightPreferred => {
            let p = m.cdf(z.minus);
            let r = m.pdf(z.minus) / p;
            Term {
                d_plus: 0.0,
                d_minus: -r,
                d_pp: 0.0,
                d_mm: -m.pdf_prime(z.minus) / p + r * r,
                d_pm: 0.0,
            }
        }
        Label::Tie => {
            let p = m.mass_between(z.minus, z.plus);
            let rp = m.pdf(z.plus) / p;
            let rm = m.pdf(z.minus) / p;
            Term {
                d_plus: -rp,
                d_minus: rm,
                d_pp: -m.pdf_prime(z.plus) / p + rp * rp,
                d_mm: m.pdf_prime(z.minus) / p + rm * rm,
                d_pm: -rp * rm,
            }
        }
    };
    Some(term)
}

fn check_dims(d: &ComparisonDataset, got: usize) -> Result<(), MleError> {
    if d.n_items() != got {
        return Err(MleError::DimensionMismatch {
            expected: d.n_items(),
            got,
        });
    }
    Ok(())
}

/// Negative log-likelihood at arbitrary `(λ, s)`; `+∞` when infeasible.
///
/// Scores need not be centered, the value is invariant to a common shift.
pub fn nll_at(d: &ComparisonDataset, m: LinkModel, lambda: f64, scores: &[f64]) -> Result<f64, MleError> {
    check_dims(d, scores.len())?;
    Ok(objective(d, Noise::Link(m), lambda, scores))
}

fn objective(d: &ComparisonDataset, m: Noise, lambda: f64, scores: &[f64]) -> f64 {
    // Neumaier summation: the line search compares values that differ by a
    // few ulps near the optimum, so the sum must not add its own noise.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for c in d.comparisons() {
        let Some(v) = outcome_nll(m, c.label, zeta(c, lambda, scores)) else {
            return f64::INFINITY;
        };
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

fn objective_reduced(d: &ComparisonDataset, m: Noise, theta: &ReducedTheta) -> f64 {
    objective(d, m, theta.lambda(), &theta.scores())
}

pub fn nll(d: &ComparisonDataset, m: LinkModel, theta: &Theta) -> Result<f64, MleError> {
    nll_at(d, m, theta.lambda, &theta.scores)
}

pub fn nll_reduced(d: &ComparisonDataset, m: LinkModel, theta: &ReducedTheta) -> Result<f64, MleError> {
    check_dims(d, theta.n_items())?;
    nll_at(d, m, theta.lambda(), &theta.scores())
}

/// Gradient and (optionally) Hessian in full coordinates `(λ, s₁, …, s_n)`.
fn full_derivatives(
    d: &ComparisonDataset,
    m: Noise,
    lambda: f64,
    scores: &[f64],
    with_hessian: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>), MleError> {
    let dim = scores.len() + 1;
    let mut g = DVector::zeros(dim);
    let mut h = with_hessian.then(|| DMatrix::zeros(dim, dim));
    for c in d.comparisons() {
        let t = outcome_term(m, c.label, zeta(c, lambda, scores)).ok_or(MleError::InfiniteObjective)?;
        let (i, j) = (c.left.0 + 1, c.right.0 + 1);
        // u⁺ = (1, x) and u⁻ = (−1, x) with x = e_j − e_i.
        let dx = t.d_plus + t.d_minus;
        g[0] += t.d_plus - t.d_minus;
        g[j] += dx;
        g[i] -= dx;
        if let Some(h) = h.as_mut() {
            // Hessian = a u⁺u⁺ᵀ + b u⁻u⁻ᵀ + c (u⁺u⁻ᵀ + u⁻u⁺ᵀ), expanded on the
            // three touched coordinates.
            let (a, b, cc) = (t.d_pp, t.d_mm, t.d_pm);
            let ll = a + b - 2.0 * cc;
            let lx = a - b;
            let xx = a + b + 2.0 * cc;
            h[(0, 0)] += ll;
            h[(0, j)] += lx;
            h[(j, 0)] += lx;
            h[(0, i)] -= lx;
            h[(i, 0)] -= lx;
            h[(j, j)] += xx;
            h[(i, i)] += xx;
            h[(i, j)] -= xx;
            h[(j, i)] -= xx;
        }
    }
    Ok((g, h))
}

/// Maps full-coordinate derivatives onto `(λ, s₁, …, s_{n−1})`.
fn reduce_gradient(g: &DVector<f64>) -> DVector<f64> {
    let last = g.len() - 1;
    DVector::from_fn(last, |k, _| if k == 0 { g[0] } else { g[k] - g[last] })
}

fn reduce_hessian(h: &DMatrix<f64>) -> DMatrix<f64> {
    let last = h.nrows() - 1;
    let dim = last;
    let mut r = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = match (a, b) {
                (0, 0) => h[(0, 0)],
                (0, b) => h[(0, b)] - h[(0, last)],
                (a, b) => h[(a, b)] - h[(a, last)] - h[(last, b)] + h[(last, last)],
            };
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    r
}

pub fn nll_grad(d: &ComparisonDataset, m: LinkModel, theta: &ReducedTheta) -> Result<DVector<f64>, MleError> {
    check_dims(d, theta.n_items())?;
    let (g, _) = full_derivatives(d, Noise::Link(m), theta.lambda(), &theta.scores(), false)?;
    Ok(reduce_gradient(&g))
}

pub fn nll_hessian(d: &ComparisonDataset, m: LinkModel, theta: &ReducedTheta) -> Result<DMatrix<f64>, MleError> {
    check_dims(d, theta.n_items())?;
    let (_, h) = full_derivatives(d, Noise::Link(m), theta.lambda(), &theta.scores(), true)?;
    Ok(reduce_hessian(&h.expect("requested")))
}

fn grad_and_hessian(
    d: &ComparisonDataset,
    m: Noise,
    theta: &ReducedTheta,
) -> Result<(DVector<f64>, DMatrix<f64>), MleError> {
    let (g, h) = full_derivatives(d, m, theta.lambda(), &theta.scores(), true)?;
    Ok((reduce_gradient(&g), reduce_hessian(&h.expect("requested"))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence threshold on the sup-norm of the gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound on λ; reached only on degenerate data.
    pub lambda_cap: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 200,
            lambda_cap: 1e3,
            armijo: 1e-4,
            backtrack: 0.5,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub nll: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// λ was held fixed (tie-free data, or pinned at a bound).
    pub lambda_fixed: bool,
    pub diagnostics: Vec<String>,
    /// Objective after each accepted Newton step, starting with the initial point.
    pub nll_trace: Vec<f64>,
}

/// Solves `H d = rhs` by Cholesky, adding diagonal jitter when `H` is not
/// numerically positive definite.
pub(crate) fn spd_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let dim = h.nrows().max(1) as f64;
    let mut jitter = 1e-10 * (1.0 + h.trace().abs() / dim);
    for _ in 0..8 {
        let mut hj = h.clone();
        for k in 0..h.nrows() {
            hj[(k, k)] += jitter;
        }
        if let Some(ch) = hj.cholesky() {
            return Some(ch.solve(rhs));
        }
        jitter *= 100.0;
    }
    None
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

/// Restriction of the reduced coordinates to the ones being optimized.
#[derive(Debug, Clone, Copy)]
struct Free {
    lambda: bool,
}

impl Free {
    fn grad(&self, g: DVector<f64>) -> DVector<f64> {
        if self.lambda {
            g
        } else {
            g.rows(1, g.len() - 1).into_owned()
        }
    }

    fn hess(&self, h: DMatrix<f64>) -> DMatrix<f64> {
        if self.lambda {
            h
        } else {
            let k = h.nrows() - 1;
            h.view((1, 1), (k, k)).into_owned()
        }
    }

    fn step(&self, x: &ReducedTheta, dir: &DVector<f64>, t: f64) -> ReducedTheta {
        let mut y = x.0.clone();
        let offset = usize::from(!self.lambda);
        for (k, v) in dir.iter().enumerate() {
            y[k + offset] += t * v;
        }
        ReducedTheta(y)
    }
}

/// Iterations in a row without measurable decrease before Newton gives up.
const STALL_LIMIT: usize = 8;

/// How a Newton run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    Converged,
    MaxIter,
    LineSearch,
    Stalled,
    Cap,
}

struct Run {
    x: ReducedTheta,
    f: f64,
    free: Free,
    grad_norm: f64,
    iterations: usize,
    stop: Stop,
}

/// Newton's method with Armijo backtracking from a feasible `x`, with `λ`
/// projected onto `[0, cap]`; hitting either end fixes `λ` from then on.
#[allow(clippy::too_many_arguments)]
fn newton(
    d: &ComparisonDataset,
    m: Noise,
    mut x: ReducedTheta,
    mut f: f64,
    mut free: Free,
    cfg: &SolverConfig,
    trace: &mut Vec<f64>,
    diagnostics: &mut Vec<String>,
) -> Result<Run, MleError> {
    let mut iterations = 0;
    let mut stalled = 0;
    let mut grad_norm;
    let stop = loop {
        let (g_red, h_red) = grad_and_hessian(d, m, &x)?;
        let g = free.grad(g_red);
        grad_norm = sup_norm(&g);
        if grad_norm <= cfg.tol {
            break Stop::Converged;
        }
        if iterations >= cfg.max_iter {
            break Stop::MaxIter;
        }
        if stalled >= STALL_LIMIT {
            break Stop::Stalled;
        }
        let h = free.hess(h_red);
        let neg_g = -&g;
        let mut dir = spd_solve(&h, &neg_g).unwrap_or_else(|| neg_g.clone());
        let mut slope = g.dot(&dir);
        if slope >= 0.0 || !slope.is_finite() {
            dir = neg_g;
            slope = -g.dot(&g);
        }

        // Decrease below this size is indistinguishable from rounding in f.
        let noise = 64.0 * f64::EPSILON * (1.0 + f.abs());
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=cfg.max_halvings {
            let mut cand = free.step(&x, &dir, t);
            let mut bound = None;
            if free.lambda {
                if cand.0[0] < 0.0 {
                    cand.0[0] = 0.0;
                    bound = Some(0.0);
                } else if cand.0[0] > cfg.lambda_cap {
                    cand.0[0] = cfg.lambda_cap;
                    bound = Some(cfg.lambda_cap);
                }
            }
            let fc = objective_reduced(d, m, &cand);
            let armijo = fc <= f + cfg.armijo * t * slope;
            let flat = t == 1.0 && -slope <= noise && fc <= f + noise;
            if fc.is_finite() && (armijo || flat) {
                accepted = Some((cand, fc, bound));
                break;
            }
            t *= cfg.backtrack;
        }

        let Some((cand, fc, bound)) = accepted else {
            log::debug!(
                "line search found no acceptable step after {} halvings (iteration {iterations}, gradient sup-norm {grad_norm:.3e})",
                cfg.max_halvings
            );
            break Stop::LineSearch;
        };
        stalled = if f - fc > noise { 0 } else { stalled + 1 };
        x = cand;
        f = fc.min(f);
        trace.push(f);
        iterations += 1;
        match bound {
            Some(b) if b == 0.0 => {
                free.lambda = false;
                diagnostics.push(format!("lambda projected to 0 at iteration {}; continuing on scores", trace.len() - 1));
            }
            Some(_) => {
                let msg = format!("lambda reached the lambda cap {} at iteration {}", cfg.lambda_cap, trace.len() - 1);
                log::warn!("{msg}");
                diagnostics.push(msg);
                free.lambda = false;
                let (g, _) = full_derivatives(d, m, x.lambda(), &x.scores(), false)?;
                grad_norm = sup_norm(&free.grad(reduce_gradient(&g)));
                break Stop::Cap;
            }
            None => {}
        }
    };
    Ok(Run {
        x,
        f,
        free,
        grad_norm,
        iterations,
        stop,
    })
}

/// Follows the smoothed-uniform optimum as the smoothing scale shrinks,
/// starting from `x`. Returns the point with the lowest exact objective, if
/// any beats `f_exact`.
fn uniform_continuation(
    d: &ComparisonDataset,
    x: &ReducedTheta,
    f_exact: f64,
    free: Free,
    cfg: &SolverConfig,
) -> Result<Option<(ReducedTheta, Free, usize)>, MleError> {
    let exact = Noise::Link(LinkModel::Uniform);
    let mut best: Option<(ReducedTheta, Free, usize)> = None;
    let mut best_f = f_exact;
    let mut cur = (x.clone(), free);
    let mut iterations = 0;
    for k in 1..=9 {
        let noise = Noise::SmoothUniform(10f64.powi(-k));
        let f0 = objective_reduced(d, noise, &cur.0);
        if !f0.is_finite() {
            break;
        }
        let run = newton(d, noise, cur.0.clone(), f0, cur.1, cfg, &mut Vec::new(), &mut Vec::new())?;
        iterations += run.iterations;
        let fe = objective_reduced(d, exact, &run.x);
        if fe < best_f {
            best_f = fe;
            best = Some((run.x.clone(), run.free, iterations));
        }
        cur = (run.x, run.free);
    }
    Ok(best)
}

/// Newton's method with Armijo backtracking on the reduced parameterization.
///
/// For the uniform link the objective has kinks where a predictor crosses
/// ±1; when Newton stalls there, a smoothing continuation relocates the
/// optimum and exact Newton polishes it.
pub fn fit(d: &ComparisonDataset, m: LinkModel, cfg: &SolverConfig) -> Result<FitResult, MleError> {
    let n = d.n_items();
    let counts = label_counts(d);
    let mut diagnostics = Vec::new();

    let components = d.components();
    if components.len() > 1 {
        let msg = format!(
            "comparison graph is disconnected ({} components: {}); relative offsets between components are fixed only by the zero-sum constraint",
            components.len(),
            components
                .iter()
                .map(|c| format!("{c:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        log::warn!("{msg}");
        diagnostics.push(msg);
    }

    if counts.ties == d.len() {
        let msg = format!(
            "all {} labels are ties: the margin is unbounded above and was held at the lambda cap {}",
            d.len(),
            cfg.lambda_cap
        );
        log::warn!("{msg}");
        diagnostics.push(msg);
        let theta = Theta {
            lambda: cfg.lambda_cap,
            scores: vec![0.0; n],
        };
        let value = nll(d, m, &theta)?;
        return Ok(FitResult {
            theta_hat: theta,
            nll: value,
            grad_norm: f64::NAN,
            iterations: 0,
            converged: false,
            lambda_fixed: true,
            diagnostics,
            nll_trace: vec![value],
        });
    }

    let free = Free { lambda: counts.ties > 0 };
    if !free.lambda {
        diagnostics.push("no tie labels: lambda fixed at 0 and scores fitted alone".into());
    }

    let starts: &[f64] = match (free.lambda, m) {
        (false, _) => &[0.0],
        (true, LinkModel::Uniform) => &[0.5, 0.25, 0.1],
        (true, _) => &[1.0, 0.5, 0.25],
    };
    let link = Noise::Link(m);
    let (x, f) = starts
        .iter()
        .map(|&lambda0| ReducedTheta(DVector::from_fn(n, |k, _| if k == 0 { lambda0 } else { 0.0 })))
        .map(|cand| {
            let f0 = objective_reduced(d, link, &cand);
            (cand, f0)
        })
        .find(|(_, f0)| f0.is_finite())
        .ok_or(MleError::NoFeasibleStart(m))?;

    let mut trace = vec![f];
    let mut run = newton(d, link, x, f, free, cfg, &mut trace, &mut diagnostics)?;
    let mut iterations = run.iterations;

    if m == LinkModel::Uniform && matches!(run.stop, Stop::Stalled | Stop::LineSearch | Stop::MaxIter) {
        if let Some((x, free, k)) = uniform_continuation(d, &run.x, run.f, run.free, cfg)? {
            iterations += k;
            let f_smooth = objective_reduced(d, link, &x);
            trace.push(f_smooth);
            let polish = newton(d, link, x, f_smooth, free, cfg, &mut trace, &mut diagnostics)?;
            diagnostics.push(format!(
                "uniform link: Newton stalled at a kink (nll {:.9}); smoothing continuation moved it to nll {:.9}",
                run.f, polish.f
            ));
            iterations += polish.iterations;
            run = polish;
        }
    }

    match run.stop {
        Stop::MaxIter => diagnostics.push(format!("reached max_iter = {} without convergence", cfg.max_iter)),
        Stop::LineSearch => diagnostics.push(format!(
            "line search found no acceptable step after {} halvings (gradient sup-norm {:.3e})",
            cfg.max_halvings, run.grad_norm
        )),
        Stop::Stalled => diagnostics.push(format!(
            "no decrease in the objective for {STALL_LIMIT} iterations (gradient sup-norm {:.3e})",
            run.grad_norm
        )),
        Stop::Converged | Stop::Cap => {}
    }

    let mut theta_hat = run.x.to_theta();
    theta_hat.lambda = theta_hat.lambda.max(0.0);
    Ok(FitResult {
        theta_hat,
        nll: run.f,
        grad_norm: run.grad_norm,
        iterations,
        converged: run.stop == Stop::Converged,
        lambda_fixed: !run.free.lambda,
        diagnostics,
        nll_trace: trace,
    })
}
