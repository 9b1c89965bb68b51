//! The relaxed pairing LP and its logarithmic-barrier solver.
//!
//! Candidate pairs `(m, n)` with `m < n` are laid out row-major above the
//! diagonal, giving `K(2K-1)` variables. The relaxation reads
//!
//! ```text
//! maximize  r_s^T x
//! s.t.      A x <= u      (A = [I; -I; p^T], u = [b; 0; P])
//!           D x  = 1      (each user covered exactly once)
//! ```
//!
//! and is solved by the barrier method: for growing `t`, minimize
//! `g(x) = -t r_s^T x - sum_i ln(u_i - a_i^T x)` subject to `D x = 1` with
//! infeasible-start Newton steps and a backtracking line search on the KKT
//! residual norm.

use std::io::Write;

use crate::dense_linalg::{lu_factor, norm2, Matrix};
use crate::power_alloc::PairAllocation;
use crate::rate_model::rate_report;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Smallest line-search step before giving up.
pub const MIN_STEP: f64 = 1e-16;
/// Safety factor on the slack rounding error in the centering tolerance.
pub const SLACK_ROUNDING: f64 = 16.0;

/// Number of candidate pairs for `K` pairs.
pub fn num_candidates(k: usize) -> usize {
    k * (2 * k).saturating_sub(1)
}

/// 1-based position of pair `(m, n)`, `1 <= m < n <= 2K`, in the vectorized
/// LP.
pub fn vec_index(m: usize, n: usize, k: usize) -> Result<usize> {
    if !(1 <= m && m < n && n <= 2 * k) {
        return Err(Error::invalid(format!(
            "pair ({m}, {n}) is not an ordered pair of users in 1..={}",
            2 * k
        )));
    }
    Ok((4 * k - m) * (m - 1) / 2 + n - m)
}

/// Inverse of [`vec_index`].
pub fn pair_of_index(index: usize, k: usize) -> Result<(usize, usize)> {
    if index == 0 || index > num_candidates(k) {
        return Err(Error::invalid(format!(
            "index {index} outside 1..={}",
            num_candidates(k)
        )));
    }
    let mut start = 0;
    for m in 1..2 * k {
        let row_len = 2 * k - m;
        if index <= start + row_len {
            return Ok((m, m + index - start));
        }
        start += row_len;
    }
    unreachable!("index was range-checked")
}

/// Vectorized pairing LP.
#[derive(Debug, Clone)]
pub struct LpData {
    pub k: usize,
    /// Secrecy rate per candidate pair.
    pub r_s: Vec<f64>,
    /// Pair power per candidate pair.
    pub p: Vec<f64>,
    /// Upper bounds on the fractional assignment.
    pub b: Vec<f64>,
    /// Right-hand side of the power row.
    pub power_cap: f64,
    /// `[I; -I; p^T]`.
    pub a: Matrix,
    /// `[b; 0; power_cap]`.
    pub u: Vec<f64>,
    /// User-pair incidence matrix, `2K x K(2K-1)`.
    pub d: Matrix,
}

impl LpData {
    pub fn from_parts(k: usize, r_s: Vec<f64>, p: Vec<f64>, b: Vec<f64>, power_cap: f64) -> Result<Self> {
        let n = num_candidates(k);
        if k == 0 || r_s.len() != n || p.len() != n || b.len() != n {
            return Err(Error::invalid(format!(
                "LP vectors must have length K(2K-1) = {n}"
            )));
        }
        if r_s.iter().chain(&p).any(|v| !v.is_finite()) || p.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("rates and powers must be finite, powers >= 0"));
        }
        if b.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::invalid("every bound b_i must lie in (0, 1]"));
        }
        if !(power_cap.is_finite() && power_cap > 0.0) {
            return Err(Error::invalid("power cap must be positive"));
        }

        let rows = 2 * n + 1;
        let mut a = Matrix::zeros(rows, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(n + i, i)] = -1.0;
            a[(2 * n, i)] = p[i];
        }
        let mut u = b.clone();
        u.extend(std::iter::repeat(0.0).take(n));
        u.push(power_cap);

        let mut d = Matrix::zeros(2 * k, n);
        for j in 0..n {
            let (m, nn) = pair_of_index(j + 1, k)?;
            d[(m - 1, j)] = 1.0;
            d[(nn - 1, j)] = 1.0;
        }
        Ok(LpData { k, r_s, p, b, power_cap, a, u, d })
    }

    pub fn num_vars(&self) -> usize {
        self.r_s.len()
    }

    pub fn num_users(&self) -> usize {
        2 * self.k
    }

    pub fn num_inequalities(&self) -> usize {
        2 * self.num_vars() + 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.r_s.iter().zip(x).map(|(r, v)| r * v).sum()
    }

    /// Slacks `u - A x`, computed from the known structure of `A`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_vars();
        let mut s = Vec::with_capacity(2 * n + 1);
        s.extend(self.b.iter().zip(x).map(|(b, v)| b - v));
        s.extend_from_slice(x);
        s.push(self.power_cap - self.p.iter().zip(x).map(|(p, v)| p * v).sum::<f64>());
        s
    }

    /// `D x` from the known structure of `D`.
    pub fn coverage(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_users()];
        let mut j = 0;
        for m in 0..self.num_users() {
            for n in m + 1..self.num_users() {
                out[m] += x[j];
                out[n] += x[j];
                j += 1;
            }
        }
        out
    }

    /// `D^T w` from the known structure of `D`.
    pub fn coverage_transpose(&self, w: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_vars());
        for m in 0..self.num_users() {
            for n in m + 1..self.num_users() {
                out.push(w[m] + w[n]);
            }
        }
        out
    }

    /// A strictly interior starting point `theta * 1`.
    pub fn interior_start(&self) -> Vec<f64> {
        let min_b = self.b.iter().cloned().fold(f64::INFINITY, f64::min);
        let p_sum: f64 = self.p.iter().sum();
        let power_ratio = if p_sum > 0.0 { self.power_cap / p_sum } else { f64::INFINITY };
        let theta = 0.5 * min_b.min(power_ratio).min(1.0 / (2 * self.k - 1) as f64);
        vec![theta; self.num_vars()]
    }

    /// Blend `(1 - lambda) x_match + lambda / (2K - 1)` of an integral
    /// matching with the uniform fractional matching. Both satisfy
    /// `D x = 1`, so the blend does too. `lambda` is chosen to keep the power
    /// row strictly slack. Returns `None` if no blend is strictly interior.
    pub fn matching_start(&self, x_match: &[f64]) -> Option<Vec<f64>> {
        if self.k < 2 || x_match.len() != self.num_vars() {
            return None;
        }
        let uniform = 1.0 / (2 * self.k - 1) as f64;
        let power_match: f64 = self.p.iter().zip(x_match).map(|(p, x)| p * x).sum();
        let power_uniform: f64 = uniform * self.p.iter().sum::<f64>();
        let mut lambda: f64 = 0.5;
        if power_uniform > power_match {
            let room = self.power_cap - power_match;
            if room <= 0.0 {
                return None;
            }
            lambda = lambda.min(0.5 * room / (power_uniform - power_match));
        }
        let x: Vec<f64> = x_match.iter().map(|&v| (1.0 - lambda) * v + lambda * uniform).collect();
        strictly_interior(self, &x).then_some(x)
    }
}

/// Upper bound of a candidate: the smaller of the two NOMA/OMA rate ratios,
/// capped at 1. A zero OMA rate makes its ratio vacuous.
pub fn rate_ratio_bound(alloc: &PairAllocation, noise: f64) -> Result<f64> {
    let r = rate_report(&alloc.pair, alloc.p_far, alloc.p_near, noise)?;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    Ok(ratio(r.rate_far, r.oma_far).min(ratio(r.rate_near, r.oma_near)).min(1.0))
}

/// Assembles the LP from allocations of every candidate pair, listed in
/// [`vec_index`] order.
pub fn build_lp(scenario: &Scenario, candidates: &[PairAllocation], power_cap: f64) -> Result<LpData> {
    let k = scenario.num_pairs();
    if candidates.len() != num_candidates(k) {
        return Err(Error::invalid(format!(
            "{} candidate allocations for {} candidate pairs",
            candidates.len(),
            num_candidates(k)
        )));
    }
    let mut r_s = Vec::with_capacity(candidates.len());
    let mut p = Vec::with_capacity(candidates.len());
    let mut b = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        if c.pair.ids() != pair_of_index(i + 1, k)? {
            return Err(Error::invalid(format!(
                "candidate {} is pair {:?}, expected {:?}",
                i + 1,
                c.pair.ids(),
                pair_of_index(i + 1, k)?
            )));
        }
        r_s.push(c.secrecy);
        p.push(c.p_pair);
        b.push(rate_ratio_bound(c, scenario.noise_power)?);
    }
    LpData::from_parts(k, r_s, p, b, power_cap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    /// Initial barrier parameter `t0`.
    pub t0: f64,
    /// Growth factor `xi` of `t`.
    pub xi: f64,
    /// Stop once `K(2K-1)/t < epsilon`.
    pub epsilon: f64,
    /// Residual tolerance of each centering, relative to
    /// `max(1, t * max|r_s|)`.
    pub rho: f64,
    /// Sufficient-decrease fraction of the line search.
    pub zeta: f64,
    /// Backtracking factor of the line search.
    pub tau: f64,
    pub max_newton: usize,
    pub max_centerings: usize,
    /// Record one trace row per Newton iteration.
    pub trace: bool,
}

impl Default for BarrierParams {
    fn default() -> Self {
        BarrierParams {
            t0: 1.0,
            xi: 10.0,
            epsilon: 1e-3,
            rho: 1e-8,
            zeta: 0.1,
            tau: 0.5,
            max_newton: 200,
            max_centerings: 100,
            trace: false,
        }
    }
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t0 > 0.0
            && self.t0.is_finite()
            && self.xi > 1.0
            && self.xi.is_finite()
            && self.epsilon > 0.0
            && self.rho > 0.0
            && self.zeta > 0.0
            && self.zeta < 0.5
            && self.tau > 0.0
            && self.tau < 1.0
            && self.max_newton > 0
            && self.max_centerings > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid barrier parameters {self:?}")))
        }
    }
}

/// Current iterate of the barrier method.
#[derive(Debug, Clone)]
pub struct BarrierState {
    pub x: Vec<f64>,
    /// Multipliers of `D x = 1`.
    pub w: Vec<f64>,
    pub t: f64,
    /// Reciprocal slacks `1 / (u_i - a_i^T x)`.
    pub y: Vec<f64>,
    pub n_lp: usize,
    pub newton_iterations: usize,
    pub line_search_steps: usize,
}

impl BarrierState {
    pub fn new(lp: &LpData, x: Vec<f64>, w: Vec<f64>, t: f64) -> Result<Self> {
        if x.len() != lp.num_vars() || w.len() != lp.num_users() {
            return Err(Error::invalid("iterate dimensions do not match the LP"));
        }
        let y = reciprocal_slacks(lp, &x)?;
        Ok(BarrierState {
            x,
            w,
            t,
            y,
            n_lp: 0,
            newton_iterations: 0,
            line_search_steps: 0,
        })
    }

    pub fn min_slack(&self) -> f64 {
        self.y.iter().map(|y| 1.0 / y).fold(f64::INFINITY, f64::min)
    }
}

fn reciprocal_slacks(lp: &LpData, x: &[f64]) -> Result<Vec<f64>> {
    lp.slacks(x)
        .into_iter()
        .enumerate()
        .map(|(row, s)| {
            if s > 0.0 && s.is_finite() {
                Ok(1.0 / s)
            } else {
                Err(Error::InteriorViolation { row, slack: s })
            }
        })
        .collect()
}

fn strictly_interior(lp: &LpData, x: &[f64]) -> bool {
    lp.slacks(x).iter().all(|&s| s > 0.0)
}

/// `g(x) = -t r_s^T x - sum ln(slack)`.
pub fn barrier_value(lp: &LpData, x: &[f64], t: f64) -> Result<f64> {
    let y = reciprocal_slacks(lp, x)?;
    Ok(-t * lp.objective(x) + y.iter().map(|y| y.ln()).sum::<f64>())
}

fn gradient(lp: &LpData, t: f64, y: &[f64]) -> Vec<f64> {
    let n = lp.num_vars();
    let y_power = y[2 * n];
    (0..n)
        .map(|i| -t * lp.r_s[i] + y[i] - y[n + i] + lp.p[i] * y_power)
        .collect()
}

/// Gradient `-t r_s + A^T y` and Hessian `A^T diag(y)^2 A` of the barrier
/// objective.
pub fn barrier_gradient_hessian(lp: &LpData, state: &BarrierState) -> Result<(Vec<f64>, Matrix)> {
    let y = reciprocal_slacks(lp, &state.x)?;
    let n = lp.num_vars();
    let mut h = Matrix::zeros(n, n);
    fill_hessian(lp, &y, &mut h, 0);
    Ok((gradient(lp, state.t, &y), h))
}

/// Writes the Hessian into the top-left `n x n` block of `target` starting at
/// column offset `col0`.
fn fill_hessian(lp: &LpData, y: &[f64], target: &mut Matrix, col0: usize) {
    let n = lp.num_vars();
    let yp2 = y[2 * n] * y[2 * n];
    for i in 0..n {
        let row = target.row_mut(i);
        let scaled = yp2 * lp.p[i];
        if scaled != 0.0 {
            for (h, pj) in row[col0..col0 + n].iter_mut().zip(&lp.p) {
                *h = scaled * pj;
            }
        } else {
            row[col0..col0 + n].iter_mut().for_each(|h| *h = 0.0);
        }
        row[col0 + i] += y[i] * y[i] + y[n + i] * y[n + i];
    }
}

/// KKT residual `(grad g + D^T w, D x - 1)` and its Euclidean norm.
pub fn residual(lp: &LpData, state: &BarrierState) -> Result<(Vec<f64>, f64)> {
    let y = reciprocal_slacks(lp, &state.x)?;
    let r = residual_at(lp, &state.x, &state.w, state.t, &y);
    let norm = norm2(&r);
    Ok((r, norm))
}

fn residual_at(lp: &LpData, x: &[f64], w: &[f64], t: f64, y: &[f64]) -> Vec<f64> {
    let mut r = gradient(lp, t, y);
    for (ri, dw) in r.iter_mut().zip(lp.coverage_transpose(w)) {
        *ri += dw;
    }
    r.extend(lp.coverage(x).into_iter().map(|c| c - 1.0));
    r
}

/// Solves the KKT system
///
/// ```text
/// [H  D^T] [dx   ]     [grad g ]
/// [D  0  ] [w+dw ] = - [D x - 1]
/// ```
///
/// and returns `(dx, dw)`.
pub fn newton_step(lp: &LpData, state: &BarrierState) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = lp.num_vars();
    let users = lp.num_users();
    let dim = n + users;
    let y = reciprocal_slacks(lp, &state.x)?;
    let mut kkt = Matrix::zeros(dim, dim);
    fill_hessian(lp, &y, &mut kkt, 0);
    // Symmetric scaling diag(s) K diag(s) with s_i = 1 / sqrt(H_ii) on the
    // x block, so the Hessian block has a unit diagonal.
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / kkt[(i, i)].sqrt()).collect();
    for i in 0..n {
        let row = kkt.row_mut(i);
        for (h, sj) in row[..n].iter_mut().zip(&scale) {
            *h *= scale[i] * sj;
        }
    }
    let mut j = 0;
    for m in 0..users {
        for nn in m + 1..users {
            kkt[(j, n + m)] = scale[j];
            kkt[(j, n + nn)] = scale[j];
            kkt[(n + m, j)] = scale[j];
            kkt[(n + nn, j)] = scale[j];
            j += 1;
        }
    }
    let mut rhs: Vec<f64> = gradient(lp, state.t, &y)
        .into_iter()
        .zip(&scale)
        .map(|(g, s)| -g * s)
        .collect();
    rhs.extend(lp.coverage(&state.x).into_iter().map(|c| 1.0 - c));

    let singular = || Error::SingularSystem {
        t: state.t,
        iteration: state.newton_iterations,
        min_slack: state.min_slack(),
    };
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(singular());
    }
    let factors = lu_factor(&kkt).map_err(|e| match e {
        Error::SingularMatrix { .. } => singular(),
        other => other,
    })?;
    let sol = factors.solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let dx = sol[..n].iter().zip(&scale).map(|(z, s)| z * s).collect();
    let dw = sol[n..].iter().zip(&state.w).map(|(wn, w)| wn - w).collect();
    Ok((dx, dw))
}

/// Outcome of one backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub step: f64,
    /// Residual norm at the accepted point.
    pub residual: f64,
    /// Trial points evaluated.
    pub evaluations: usize,
}

/// Backtracks from `s = 1` by `tau` until the trial point is strictly
/// interior and `||J(trial)|| <= (1 - zeta s) ||J||`. The decrease must also
/// be strict in floating point, which matters once `zeta s` drops below the
/// machine epsilon.
pub fn line_search(
    lp: &LpData,
    state: &BarrierState,
    dx: &[f64],
    dw: &[f64],
    params: &BarrierParams,
) -> Result<LineSearch> {
    let current = norm2(&residual_at(lp, &state.x, &state.w, state.t, &state.y));
    let mut s = 1.0;
    let mut evaluations = 0;
    let mut trial_x = vec![0.0; dx.len()];
    let mut trial_w = vec![0.0; dw.len()];
    loop {
        if s < MIN_STEP {
            return Err(Error::LineSearchFailure {
                min_step: MIN_STEP,
                residual: current,
            });
        }
        evaluations += 1;
        for ((tx, x), d) in trial_x.iter_mut().zip(&state.x).zip(dx) {
            *tx = x + s * d;
        }
        if strictly_interior(lp, &trial_x) {
            for ((tw, w), d) in trial_w.iter_mut().zip(&state.w).zip(dw) {
                *tw = w + s * d;
            }
            let y = reciprocal_slacks(lp, &trial_x)?;
            let norm = norm2(&residual_at(lp, &trial_x, &trial_w, state.t, &y));
            if norm <= (1.0 - params.zeta * s) * current && (norm < current || current == 0.0) {
                return Ok(LineSearch {
                    step: s,
                    residual: norm,
                    evaluations,
                });
            }
        }
        s *= params.tau;
    }
}

/// One row of the Newton trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub centering: usize,
    pub t: f64,
    /// Residual norm after the step.
    pub residual: f64,
    pub step: f64,
    pub min_slack: f64,
}

/// Iteration counts of one barrier solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BarrierDiagnostics {
    /// Number of increases of `t`.
    pub n_lp: usize,
    /// Newton iterations of each centering, in order.
    pub newton_per_centering: Vec<usize>,
    /// Accepted steps with `s < 1`.
    pub damped_steps: usize,
    /// Accepted steps with `s = 1`.
    pub full_steps: usize,
    pub line_search_evaluations: usize,
    pub final_t: f64,
    pub final_residual: f64,
    pub trace: Vec<TraceRow>,
}

impl BarrierDiagnostics {
    pub fn newton_iterations(&self) -> usize {
        self.newton_per_centering.iter().sum()
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "centering,t,residual,step,min_slack")?;
        for r in &self.trace {
            writeln!(out, "{},{:e},{:e},{:e},{:e}", r.centering, r.t, r.residual, r.step, r.min_slack)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub objective: f64,
    pub diagnostics: BarrierDiagnostics,
}

/// Number of `t` updates the barrier loop performs before the gap proxy
/// `m / t` drops below `epsilon`, i.e. `ceil(log(m / (epsilon t0)) / log xi)`
/// clipped at zero.
pub fn predicted_outer_iterations(m: usize, epsilon: f64, t0: f64, xi: f64) -> usize {
    let r = (m as f64 / (epsilon * t0)).ln() / xi.ln();
    if r <= 0.0 {
        0
    } else {
        r.ceil() as usize
    }
}

/// Inner stopping tolerance: `rho` relative to the largest term of the
/// dual residual at the current iterate, but never below the rounding error
/// of the slacks `u_i - a_i^T x`, which is about `eps |u_i| / s_i` relative.
fn centering_tolerance(lp: &LpData, params: &BarrierParams, state: &BarrierState) -> f64 {
    let n = lp.num_vars();
    let y_power = state.y[2 * n];
    let scale = (0..n).fold(1.0f64, |acc, i| {
        acc.max(state.t * lp.r_s[i].abs())
            .max(state.y[i])
            .max(state.y[n + i])
            .max(lp.p[i] * y_power)
    });
    let rounding = lp
        .u
        .iter()
        .zip(&state.y)
        .fold(0.0f64, |acc, (u, y)| acc.max(u.abs() * y));
    params.rho.max(SLACK_ROUNDING * f64::EPSILON * rounding) * scale
}

/// Runs the barrier method from [`LpData::interior_start`].
pub fn barrier_solve(lp: &LpData, params: &BarrierParams) -> Result<BarrierSolution> {
    barrier_solve_from(lp, params, lp.interior_start())
}

/// Runs the barrier method from a strictly interior `x0`; `x0` need not
/// satisfy `D x = 1`.
pub fn barrier_solve_from(lp: &LpData, params: &BarrierParams, x0: Vec<f64>) -> Result<BarrierSolution> {
    params.validate()?;
    let mut diag = BarrierDiagnostics::default();
    if lp.k == 1 {
        // The single pair is forced; D has rank one and the KKT matrix is
        // singular, so no Newton step is taken.
        let x = vec![1.0];
        diag.final_t = params.t0;
        return Ok(BarrierSolution {
            objective: lp.objective(&x),
            x,
            w: vec![0.0; 2],
            diagnostics: diag,
        });
    }

    let m = num_candidates(lp.k);
    let mut state = BarrierState::new(lp, x0, vec![0.0; lp.num_users()], params.t0)?;
    for centering in 0.. {
        if centering == params.max_centerings {
            return Err(Error::Convergence(format!(
                "barrier method did not reach gap {:e} within {} centerings",
                params.epsilon, params.max_centerings
            )));
        }
        let steps = center(lp, &mut state, params, centering, &mut diag)?;
        diag.newton_per_centering.push(steps);
        if (m as f64) / state.t < params.epsilon {
            break;
        }
        state.t *= params.xi;
        state.n_lp += 1;
    }
    diag.n_lp = state.n_lp;
    diag.final_t = state.t;
    diag.final_residual = residual(lp, &state)?.1;
    Ok(BarrierSolution {
        objective: lp.objective(&state.x),
        x: state.x,
        w: state.w,
        diagnostics: diag,
    })
}

/// Newton iterations at fixed `t` until the residual is within tolerance.
fn center(
    lp: &LpData,
    state: &mut BarrierState,
    params: &BarrierParams,
    centering: usize,
    diag: &mut BarrierDiagnostics,
) -> Result<usize> {
    let mut steps = 0;
    loop {
        let tol = centering_tolerance(lp, params, state);
        let (r, norm) = residual(lp, state)?;
        let primal = norm2(&r[lp.num_vars()..]);
        if norm <= tol && primal <= params.rho {
            return Ok(steps);
        }
        if steps == params.max_newton {
            return Err(Error::Convergence(format!(
                "centering at t = {:e} stalled with residual {norm:e} after {steps} Newton steps",
                state.t
            )));
        }
        let (dx, dw) = newton_step(lp, state)?;
        let ls = line_search(lp, state, &dx, &dw, params)?;
        for (x, d) in state.x.iter_mut().zip(&dx) {
            *x += ls.step * d;
        }
        for (w, d) in state.w.iter_mut().zip(&dw) {
            *w += ls.step * d;
        }
        state.y = reciprocal_slacks(lp, &state.x)?;
        steps += 1;
        state.newton_iterations += 1;
        state.line_search_steps += ls.evaluations;
        diag.line_search_evaluations += ls.evaluations;
        if ls.step < 1.0 {
            diag.damped_steps += 1;
        } else {
            diag.full_steps += 1;
        }
        if params.trace {
            diag.trace.push(TraceRow {
                centering,
                t: state.t,
                residual: ls.residual,
                step: ls.step,
                min_slack: state.min_slack(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lp(k: usize, seed: u64) -> LpData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = num_candidates(k);
        let r_s = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.1)).collect();
        let b = (0..n).map(|_| rng.gen_range(0.9..1.0)).collect();
        let cap = 0.1 * k as f64;
        LpData::from_parts(k, r_s, p, b, cap).unwrap()
    }

    fn interior_state(lp: &LpData, seed: u64, t: f64) -> BarrierState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = lp.interior_start();
        let x = x0.iter().map(|v| v * rng.gen_range(0.5..1.5)).collect();
        let w = (0..lp.num_users()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        BarrierState::new(lp, x, w, t).unwrap()
    }

    #[test]
    fn vec_index_examples() {
        assert_eq!(vec_index(1, 2, 1).unwrap(), 1);
        assert_eq!(vec_index(1, 2, 5).unwrap(), 1);
        assert_eq!(vec_index(2, 3, 2).unwrap(), 4);
        assert_eq!(vec_index(3, 4, 2).unwrap(), 6);
        assert!(vec_index(2, 2, 2).is_err());
        assert!(vec_index(3, 2, 2).is_err());
        assert!(vec_index(1, 5, 2).is_err());
    }

    #[test]
    fn index_round_trip_follows_enumeration() {
        for k in 1..8 {
            let mut expected = 1;
            for m in 1..=2 * k {
                for n in m + 1..=2 * k {
                    assert_eq!(vec_index(m, n, k).unwrap(), expected);
                    assert_eq!(pair_of_index(expected, k).unwrap(), (m, n));
                    expected += 1;
                }
            }
            assert_eq!(expected - 1, num_candidates(k));
            assert!(pair_of_index(expected, k).is_err());
        }
    }

    #[test]
    fn lp_structure() {
        let lp = LpData::from_parts(1, vec![1.0], vec![0.5], vec![1.0], 1.0).unwrap();
        assert_eq!((lp.a.rows(), lp.a.cols()), (3, 1));
        assert_eq!((lp.d.rows(), lp.d.cols()), (2, 1));
        assert_eq!(lp.d.as_slice(), &[1.0, 1.0]);

        let lp = random_lp(3, 1);
        for j in 0..lp.num_vars() {
            let col: f64 = (0..lp.d.rows()).map(|i| lp.d[(i, j)]).sum();
            assert_eq!(col, 2.0);
        }
        let x: Vec<f64> = (0..lp.num_vars()).map(|i| 0.01 * i as f64).collect();
        assert_eq!(lp.coverage(&x), lp.d.mul_vec(&x).unwrap());
        let w = [1.0, -2.0, 3.0, 0.5, 0.0, 4.0];
        assert_eq!(lp.coverage_transpose(&w), lp.d.tr_mul_vec(&w).unwrap());
        let dense: Vec<f64> = lp.u.iter().zip(lp.a.mul_vec(&x).unwrap()).map(|(u, ax)| u - ax).collect();
        assert_eq!(lp.slacks(&x), dense);
    }

    #[test]
    fn invalid_lp_data_rejected() {
        assert!(LpData::from_parts(2, vec![1.0; 5], vec![1.0; 6], vec![1.0; 6], 1.0).is_err());
        assert!(LpData::from_parts(1, vec![1.0], vec![1.0], vec![0.0], 1.0).is_err());
        assert!(LpData::from_parts(1, vec![1.0], vec![1.0], vec![1.5], 1.0).is_err());
        assert!(LpData::from_parts(1, vec![1.0], vec![-1.0], vec![1.0], 1.0).is_err());
        assert!(LpData::from_parts(1, vec![1.0], vec![1.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn interior_start_is_strict() {
        for k in 1..6 {
            let lp = random_lp(k, k as u64);
            assert!(lp.slacks(&lp.interior_start()).iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for k in [1, 2] {
            let lp = random_lp(k, 3);
            let st = interior_state(&lp, 4, 2.5);
            let (g, _) = barrier_gradient_hessian(&lp, &st).unwrap();
            for i in 0..lp.num_vars() {
                let h = 1e-6 * st.x[i];
                let mut xp = st.x.clone();
                let mut xm = st.x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (barrier_value(&lp, &xp, st.t).unwrap() - barrier_value(&lp, &xm, st.t).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn hessian_matches_dense_formula_and_finite_differences() {
        for k in [1, 2] {
            let lp = random_lp(k, 5);
            let st = interior_state(&lp, 6, 1.0);
            let (_, h) = barrier_gradient_hessian(&lp, &st).unwrap();
            let n = lp.num_vars();
            // A^T diag(y)^2 A from the dense A.
            for i in 0..n {
                for j in 0..n {
                    let dense: f64 = (0..lp.a.rows()).map(|r| lp.a[(r, i)] * st.y[r] * st.y[r] * lp.a[(r, j)]).sum();
                    assert!((dense - h[(i, j)]).abs() <= 1e-12 * dense.abs().max(1.0));
                }
            }
            for j in 0..n {
                let step = 1e-6 * st.x[j];
                let mut plus = st.clone();
                let mut minus = st.clone();
                plus.x[j] += step;
                minus.x[j] -= step;
                let (gp, _) = barrier_gradient_hessian(&lp, &plus).unwrap();
                let (gm, _) = barrier_gradient_hessian(&lp, &minus).unwrap();
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * step);
                    assert!((fd - h[(i, j)]).abs() <= 1e-5 * h[(i, j)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn linear_term_scales_with_t() {
        let lp = random_lp(2, 7);
        let st = interior_state(&lp, 8, 1.0);
        let mut st2 = st.clone();
        st2.t = 2.0;
        let (g1, _) = barrier_gradient_hessian(&lp, &st).unwrap();
        let (g2, _) = barrier_gradient_hessian(&lp, &st2).unwrap();
        let mut s0 = st.clone();
        s0.t = 0.0;
        let (g0, _) = barrier_gradient_hessian(&lp, &s0).unwrap();
        for i in 0..lp.num_vars() {
            let lin1 = g1[i] - g0[i];
            let lin2 = g2[i] - g0[i];
            assert!((lin2 - 2.0 * lin1).abs() <= 1e-12 * lin1.abs().max(1.0));
        }
    }

    #[test]
    fn residual_matches_independent_recomputation() {
        let lp = random_lp(1, 9);
        let st = interior_state(&lp, 10, 3.0);
        let x = st.x[0];
        let (b, p, cap, r) = (lp.b[0], lp.p[0], lp.power_cap, lp.r_s[0]);
        let dual = -3.0 * r + 1.0 / (b - x) - 1.0 / x + p / (cap - p * x) + st.w[0] + st.w[1];
        let primal = x - 1.0;
        let expect = (dual * dual + 2.0 * primal * primal).sqrt();
        let (_, norm) = residual(&lp, &st).unwrap();
        assert!((norm - expect).abs() <= 1e-12 * expect);

        let lp = random_lp(2, 11);
        let mut st = interior_state(&lp, 12, 1.0);
        st.x = vec![0.3, 0.2, 0.5, 0.5, 0.2, 0.3];
        st.y = reciprocal_slacks(&lp, &st.x).unwrap();
        let (r, _) = residual(&lp, &st).unwrap();
        assert!(r[lp.num_vars()..].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn interior_violation_reported() {
        let lp = random_lp(2, 13);
        assert!(matches!(
            BarrierState::new(&lp, vec![0.0; 6], vec![0.0; 4], 1.0),
            Err(Error::InteriorViolation { .. })
        ));
    }

    #[test]
    fn newton_step_matches_explicit_inverse() {
        // Gauss-Jordan inverse of the assembled KKT matrix.
        let lp = random_lp(2, 14);
        let st = interior_state(&lp, 15, 2.0);
        let n = lp.num_vars();
        let dim = n + lp.num_users();
        let (g, h) = barrier_gradient_hessian(&lp, &st).unwrap();
        let mut aug = vec![vec![0.0; 2 * dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                aug[i][j] = if i < n && j < n {
                    h[(i, j)]
                } else if i < n {
                    lp.d[(j - n, i)]
                } else if j < n {
                    lp.d[(i - n, j)]
                } else {
                    0.0
                };
            }
            aug[i][dim + i] = 1.0;
        }
        for c in 0..dim {
            let piv = (c..dim).max_by(|&a, &b| aug[a][c].abs().partial_cmp(&aug[b][c].abs()).unwrap()).unwrap();
            aug.swap(c, piv);
            let d = aug[c][c];
            aug[c].iter_mut().for_each(|v| *v /= d);
            for r in 0..dim {
                if r != c {
                    let f = aug[r][c];
                    let pivot_row = aug[c].clone();
                    aug[r].iter_mut().zip(pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        rhs.extend(lp.coverage(&st.x).iter().map(|c| 1.0 - c));
        let sol: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| aug[i][dim + j] * rhs[j]).sum()).collect();
        let (dx, dw) = newton_step(&lp, &st).unwrap();
        let scale = norm2(&sol);
        for i in 0..n {
            assert!((dx[i] - sol[i]).abs() <= 1e-8 * scale);
        }
        for i in 0..lp.num_users() {
            assert!((dw[i] + st.w[i] - sol[n + i]).abs() <= 1e-8 * scale);
        }
    }

    /// K = 2 point with an exactly zero residual: `x` covers every user
    /// once, and the rates cancel the barrier gradient with `w = 0`.
    fn exact_center() -> (LpData, BarrierState) {
        let x = vec![0.5, 0.25, 0.25, 0.25, 0.25, 0.5];
        let b = vec![1.0, 0.75, 0.75, 0.75, 0.75, 1.0];
        let r_s = vec![0.0, -2.0, -2.0, -2.0, -2.0, 0.0];
        let lp = LpData::from_parts(2, r_s, vec![0.0; 6], b, 1.0).unwrap();
        let st = BarrierState::new(&lp, x, vec![0.0; 4], 1.0).unwrap();
        (lp, st)
    }

    #[test]
    fn newton_step_vanishes_at_exact_center() {
        let (lp, st) = exact_center();
        assert_eq!(residual(&lp, &st).unwrap().1, 0.0);
        let (dx, dw) = newton_step(&lp, &st).unwrap();
        assert!(norm2(&dx) <= 1e-12 && norm2(&dw) <= 1e-12);
    }

    #[test]
    fn zero_direction_accepted_immediately() {
        let (lp, st) = exact_center();
        let ls = line_search(&lp, &st, &[0.0; 6], &[0.0; 4], &BarrierParams::default()).unwrap();
        assert_eq!((ls.step, ls.evaluations), (1.0, 1));
    }

    #[test]
    fn newton_step_small_after_centering() {
        let lp = random_lp(2, 16);
        let params = BarrierParams {
            epsilon: 1.0,
            rho: 1e-12,
            ..BarrierParams::default()
        };
        let sol = barrier_solve(&lp, &params).unwrap();
        let st = BarrierState::new(&lp, sol.x.clone(), sol.w.clone(), sol.diagnostics.final_t).unwrap();
        let (dx, _) = newton_step(&lp, &st).unwrap();
        assert!(norm2(&dx) <= 1e-8);
    }

    #[test]
    fn zero_direction_rejected_off_center() {
        let lp = random_lp(2, 18);
        let st = BarrierState::new(&lp, lp.interior_start(), vec![0.0; 4], 1.0).unwrap();
        let r = line_search(&lp, &st, &[0.0; 6], &[0.0; 4], &BarrierParams::default());
        assert!(matches!(r, Err(Error::LineSearchFailure { .. })));
    }

    #[test]
    fn damped_phase_from_far_start() {
        let lp = random_lp(3, 17);
        let st = BarrierState::new(&lp, lp.interior_start(), vec![0.0; lp.num_users()], 1e4).unwrap();
        let (dx, dw) = newton_step(&lp, &st).unwrap();
        let ls = line_search(&lp, &st, &dx, &dw, &BarrierParams::default()).unwrap();
        assert!(ls.step < 1.0);
        let mut trial = st.x.clone();
        trial.iter_mut().zip(&dx).for_each(|(x, d)| *x += ls.step * d);
        assert!(lp.slacks(&trial).iter().all(|&s| s > 0.0));
    }

    #[test]
    fn single_pair_is_forced() {
        let lp = LpData::from_parts(1, vec![2.5], vec![0.1], vec![1.0], 1.0).unwrap();
        let sol = barrier_solve(&lp, &BarrierParams::default()).unwrap();
        assert_eq!(sol.x, vec![1.0]);
        assert_eq!(sol.objective, 2.5);
    }

    #[test]
    fn solution_is_feasible_and_trace_monotone() {
        for (k, seed) in [(2, 20), (3, 21), (4, 22)] {
            let lp = random_lp(k, seed);
            let params = BarrierParams {
                trace: true,
                ..BarrierParams::default()
            };
            let sol = barrier_solve(&lp, &params).unwrap();
            let cov = lp.coverage(&sol.x);
            assert!(cov.iter().all(|c| (c - 1.0).abs() <= 1e-6));
            assert!(sol.x.iter().zip(&lp.b).all(|(x, b)| *x >= 0.0 && *x <= b + 1e-8));
            assert!(sol.diagnostics.trace.iter().all(|r| r.min_slack > 0.0));
            for w in sol.diagnostics.trace.windows(2) {
                if w[0].centering == w[1].centering {
                    assert!(w[1].residual < w[0].residual);
                }
            }
            assert_eq!(
                sol.diagnostics.n_lp,
                predicted_outer_iterations(lp.num_vars(), params.epsilon, params.t0, params.xi)
            );
            let mut csv = Vec::new();
            sol.diagnostics.write_trace_csv(&mut csv).unwrap();
            assert_eq!(
                String::from_utf8(csv).unwrap().lines().count(),
                sol.diagnostics.trace.len() + 1
            );
        }
    }

    #[test]
    fn matching_start_is_feasible() {
        let lp = random_lp(3, 30);
        let m = crate::rounding::all_perfect_matchings(6).unwrap();
        for p in m {
            let x = p.to_vector();
            let power: f64 = lp.p.iter().zip(&x).map(|(a, b)| a * b).sum();
            match lp.matching_start(&x) {
                Some(x0) => {
                    assert!(lp.slacks(&x0).iter().all(|&s| s > 0.0));
                    assert!(lp.coverage(&x0).iter().all(|c| (c - 1.0).abs() < 1e-12));
                    let sol = barrier_solve_from(&lp, &BarrierParams::default(), x0).unwrap();
                    let sx = crate::baselines::simplex_solve(&lp).unwrap();
                    assert!((sol.objective - sx.objective).abs() <= 1e-4 * sx.objective.abs());
                }
                None => assert!(power >= lp.power_cap),
            }
        }
    }

    #[test]
    fn predicted_count_examples() {
        assert_eq!(predicted_outer_iterations(6, 1e-3, 1.0, 10.0), 4);
        assert_eq!(predicted_outer_iterations(6, 100.0, 1.0, 10.0), 0);
        assert_eq!(predicted_outer_iterations(28, 1e-2, 0.5, 4.0), 7);
    }

    #[test]
    fn kkt_singularity_surfaces_as_error() {
        let lp = LpData::from_parts(1, vec![1.0], vec![0.0], vec![1.0], 1.0).unwrap();
        let st = BarrierState::new(&lp, vec![0.5], vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(newton_step(&lp, &st), Err(Error::SingularSystem { .. })));
    }
}
