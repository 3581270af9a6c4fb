//! Optimality measures and residual checks of the descent analysis.
//!
//! The residual checks are pure functions of a recorded trace, so they can be
//! rerun offline on a saved run.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::{feasibility_gap, ConsensusProblem, SmoothComponent, SolverState};
use crate::prox::prox_l1_ball;
use crate::stepsize::{self, Curvature};
use crate::trace::{IterationTrace, Snapshot};
use crate::Vector;

/// `x - prox_{h + ball}(x - sum_k grad g_k(x))`, with unit prox weight.
/// Vanishes exactly at stationary points.
pub fn proximal_gradient(problem: &ConsensusProblem, x: &Vector) -> Vector {
    let step = x - problem.smooth_gradient(x);
    x - prox_l1_ball(&step, problem.l1_weight(), problem.radius())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimality {
    /// Relative consensus gap `max_k |x_k - x| / |x|`.
    pub feas_gap: f64,
    pub prox_grad_norm: f64,
    /// `feas_gap + prox_grad_norm`.
    pub e: f64,
}

pub fn measure(problem: &ConsensusProblem, x: &Vector, locals: &[Vector]) -> Optimality {
    let feas_gap = feasibility_gap(x, locals).relative;
    let prox_grad_norm = proximal_gradient(problem, x).norm();
    Optimality {
        feas_gap,
        prox_grad_norm,
        e: feas_gap + prox_grad_norm,
    }
}

/// The stopping measure `e` of the master state.
pub fn optimality_measure(problem: &ConsensusProblem, state: &SolverState) -> f64 {
    measure(problem, &state.x, &state.locals).e
}

/// Local models of the augmented Lagrangian in `x_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogates {
    /// Exact: uses `g_k(x_k)`.
    pub lower: f64,
    /// Linearizes `g_k` at the anchor.
    pub upper: f64,
    /// Linearizes at the anchor's value but with the stale gradient.
    pub stale_upper: f64,
}

/// Evaluates the three surrogates at `xk` for anchor `x`, multiplier `y` and
/// the stored (possibly stale) gradient.
pub fn surrogates(
    component: &dyn SmoothComponent,
    xk: &Vector,
    x: &Vector,
    y: &Vector,
    stale_grad: &Vector,
    rho: f64,
) -> Surrogates {
    let d = xk - x;
    let shared = y.dot(&d) + 0.5 * rho * d.norm_squared();
    let gx = component.value(x);
    Surrogates {
        lower: component.value(xk) + shared,
        upper: gx + component.gradient(x).dot(&d) + shared,
        stale_upper: gx + stale_grad.dot(&d) + shared,
    }
}

/// Surrogates of component `k` at the state's own `x_k`, `x`, `y_k` and
/// stored gradient.
pub fn surrogate_values(
    problem: &ConsensusProblem,
    state: &SolverState,
    rho: &[f64],
    k: usize,
) -> Result<Surrogates> {
    problem.check_state(state)?;
    check_dim(problem.num_components(), rho.len())?;
    if k >= problem.num_components() {
        return Err(Error::InvalidArgument(format!(
            "component {k} out of range for {} components",
            problem.num_components()
        )));
    }
    Ok(surrogates(
        problem.component(k),
        &state.locals[k],
        &state.x,
        &state.duals[k],
        &state.stored_grads[k],
        rho[k],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualTolerances {
    /// Relative to `1 + |y_k|`.
    pub dual_identity: f64,
    pub dual_difference: f64,
    /// Relative to `1 + |L(t)|`.
    pub descent: f64,
    /// Relative to `1 + |L(1)| + |L(t)|`.
    pub telescoped: f64,
    pub lower_bound: f64,
}

impl Default for ResidualTolerances {
    fn default() -> Self {
        ResidualTolerances {
            dual_identity: 1e-9,
            dual_difference: 1e-9,
            descent: 1e-9,
            telescoped: 1e-6,
            lower_bound: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    Skipped,
}

/// Outcome of one inequality checked over a trace.
///
/// `worst_slack` is the largest value of `lhs - rhs` (tolerance included)
/// seen; the check passes when it is nonpositive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub checked: usize,
    /// Iterations where the inequality failed.
    pub failed_at: Vec<usize>,
    pub worst_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            status: CheckStatus::Skipped,
            checked: 0,
            failed_at: Vec::new(),
            worst_slack: None,
            note: None,
        }
    }

    fn skipped(name: &str, note: String) -> Self {
        CheckResult {
            note: Some(note),
            ..Self::new(name)
        }
    }

    fn observe(&mut self, iter: usize, slack: f64) {
        self.checked += 1;
        // NaN counts as a failure
        if !(slack <= 0.0) {
            self.failed_at.push(iter);
        }
        self.worst_slack = Some(match self.worst_slack {
            Some(w) if !(slack > w) && !slack.is_nan() => w,
            _ => slack,
        });
    }

    fn finish(mut self) -> Self {
        self.status = if self.checked == 0 {
            CheckStatus::Skipped
        } else if self.failed_at.is_empty() {
            CheckStatus::Passed
        } else {
            CheckStatus::Failed
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub checks: Vec<CheckResult>,
}

impl ResidualReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Failed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Failed)
    }
}

/// `L(t+1) <= L(t) + tol (1 + |L(t)|)` over consecutive records. Needs no
/// snapshots.
pub fn descent_check(trace: &IterationTrace, tol: f64) -> CheckResult {
    let records: Vec<_> = trace.all_records().collect();
    let mut descent = CheckResult::new(DESCENT);
    for w in records.windows(2) {
        let (prev, next) = (w[0].lagrangian, w[1].lagrangian);
        descent.observe(w[1].iter, next - prev - tol * (1.0 + prev.abs()));
    }
    descent.finish()
}

pub const DUAL_IDENTITY: &str = "dual_identity";
pub const DUAL_DIFFERENCE: &str = "dual_difference";
pub const DESCENT: &str = "descent";
pub const TELESCOPED_DESCENT: &str = "telescoped_descent";
pub const LOWER_BOUND: &str = "lower_bound";

/// Checks the iterate-level inequalities of the convergence analysis on a
/// recorded run.
///
/// `delay_bounds` are the `T_k` the stepsizes were certified for (zero for
/// the synchronous method). The trace must carry state snapshots. Checks that
/// need `max_k T_k + 1` iterations of history are skipped on shorter traces.
pub fn lemma_residuals(
    problem: &ConsensusProblem,
    trace: &IterationTrace,
    rho: &[f64],
    delay_bounds: &[usize],
    tol: &ResidualTolerances,
) -> Result<ResidualReport> {
    let k_count = problem.num_components();
    check_dim(k_count, rho.len())?;
    check_dim(k_count, delay_bounds.len())?;
    if trace.snapshots.is_empty() {
        return Err(Error::InvalidArgument(
            "trace has no state snapshots; record the run with snapshots enabled".into(),
        ));
    }
    let snaps = &trace.snapshots;
    for s in snaps {
        check_dim(problem.dim(), s.x.len())?;
        check_dim(k_count, s.duals.len())?;
        check_dim(k_count, s.stale_index.len())?;
    }
    let xs: Vec<Vector> = snaps.iter().map(Snapshot::x).collect();
    let first_iter = snaps[0].iter;
    let x_at =
        |iter: usize| -> Option<&Vector> { iter.checked_sub(first_iter).and_then(|i| xs.get(i)) };

    let t_max = delay_bounds.iter().copied().max().unwrap_or(0);
    let lipschitz = problem.lipschitz();

    let mut checks = Vec::new();

    // grad g_k(x^{[t](k)}) + y_k = 0
    let mut identity = CheckResult::new(DUAL_IDENTITY);
    for s in snaps {
        let mut worst = f64::NEG_INFINITY;
        let mut any = false;
        for k in 0..k_count {
            let Some(stale_x) = x_at(s.stale_index[k]) else {
                continue;
            };
            let y = s.dual(k);
            let residual = (problem.component(k).gradient(stale_x) + &y).norm();
            worst = worst.max(residual - tol.dual_identity * (1.0 + y.norm()));
            any = true;
        }
        if any {
            identity.observe(s.iter, worst);
        }
    }
    checks.push(identity.finish());

    // |y_k^{t+1} - y_k^t|^2 <= L_k^2 (T_k+1) sum_{i=0}^{T_k} |x^{t+1-i} - x^{t-i}|^2
    if snaps.len() < t_max + 2 {
        checks.push(CheckResult::skipped(
            DUAL_DIFFERENCE,
            format!(
                "needs at least {} recorded states, have {}",
                t_max + 2,
                snaps.len()
            ),
        ));
    } else {
        let mut dd = CheckResult::new(DUAL_DIFFERENCE);
        // step[j] = |x^{first+j+1} - x^{first+j}|^2
        let steps: Vec<f64> = xs
            .windows(2)
            .map(|w| (&w[1] - &w[0]).norm_squared())
            .collect();
        for j in 0..steps.len() {
            let mut worst = f64::NEG_INFINITY;
            let mut any = false;
            for k in 0..k_count {
                let t = delay_bounds[k];
                // history before the first recorded state is only known to
                // be zero when the trace starts at iteration 1
                if j < t && first_iter > 1 {
                    continue;
                }
                let history: f64 = (0..=t)
                    .filter_map(|i| j.checked_sub(i))
                    .map(|i| steps[i])
                    .sum();
                let lhs = (snaps[j + 1].dual(k) - snaps[j].dual(k)).norm_squared();
                let rhs = lipschitz[k].powi(2) * (t + 1) as f64 * history + tol.dual_difference;
                worst = worst.max(lhs - rhs);
                any = true;
            }
            if any {
                dd.observe(snaps[j + 1].iter, worst);
            }
        }
        checks.push(dd.finish());
    }

    let records: Vec<_> = trace.all_records().collect();
    let lag: Vec<f64> = records.iter().map(|r| r.lagrangian).collect();

    checks.push(descent_check(trace, tol.descent));

    // L(1) - L(t+1) >= sum_i sum_k [(rho_k - 7 L_k)/2 |dx_k|^2 + alpha_k |dx|^2]
    if lag.len() != snaps.len() {
        checks.push(CheckResult::skipped(
            TELESCOPED_DESCENT,
            "record and snapshot counts differ".into(),
        ));
    } else {
        let mut tele = CheckResult::new(TELESCOPED_DESCENT);
        let alphas: Vec<f64> = (0..k_count)
            .map(|k| stepsize::alpha(rho[k], lipschitz[k], delay_bounds[k], Curvature::General))
            .collect::<Result<_>>()?;
        let alpha_sum: f64 = alphas.iter().sum();
        let mut bound = 0.0;
        for j in 0..snaps.len() - 1 {
            let dx = (&xs[j + 1] - &xs[j]).norm_squared();
            bound += alpha_sum * dx;
            for k in 0..k_count {
                let dxk = (snaps[j + 1].local(k) - snaps[j].local(k)).norm_squared();
                bound += 0.5 * (rho[k] - 7.0 * lipschitz[k]) * dxk;
            }
            let decrease = lag[0] - lag[j + 1];
            let slack = tol.telescoped * (1.0 + lag[0].abs() + lag[j + 1].abs());
            tele.observe(snaps[j + 1].iter, bound - decrease - slack);
        }
        checks.push(tele.finish());
    }

    // L(t) >= min f - diam^2 * sum_k L_k / 2
    let f_best = records
        .iter()
        .map(|r| r.objective)
        .fold(f64::INFINITY, f64::min);
    let floor =
        f_best - problem.diameter().powi(2) * lipschitz.iter().sum::<f64>() / 2.0 - tol.lower_bound;
    let mut lower = CheckResult::new(LOWER_BOUND);
    for r in &records {
        lower.observe(r.iter, floor - r.lagrangian);
    }
    checks.push(lower.finish());

    Ok(ResidualReport { checks })
}
