//! Async-PADMM, its incremental variant, and the synchronous baselines, plus
//! the run driver that couples them to the network simulator.
//!
//! One master iteration maps state `t` to state `t + 1`:
//!
//! 1. `x^{t+1} = prox(v, lambda / sum rho_k)` over the ball, where
//!    `v = (sum_k rho_k x_k^t + sum_k y_k^t) / sum_k rho_k`;
//! 2. gradients that arrived replace the stored ones and their staleness
//!    indices;
//! 3. `x_k^{t+1} = x^{t+1} - (stored_k + y_k^t) / rho_k`;
//! 4. `y_k^{t+1} = y_k^t + rho_k (x_k^{t+1} - x^{t+1})`.
//!
//! Step 4 leaves `y_k^{t+1} = -stored_k` up to rounding. That identity is not
//! used as a shortcut; the diagnostics check it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::diagnostics;
use crate::error::{check_dim, Error, Result};
use crate::problem::{random_unit, ConsensusProblem, LocalSolver, SolverState};
use crate::prox::prox_l1_ball;
use crate::simnet::{ComputeModel, GradientMessage, NetworkModel, SimStats, Simulator};
use crate::stepsize::{self, StepsizeCertificate};
use crate::trace::{IterationRecord, IterationTrace, Snapshot};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AsyncPadmm,
    SyncPadmm,
    SyncAdmm,
    AsyncPadmmIncrementalVariant,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::AsyncPadmm,
        Algorithm::SyncPadmm,
        Algorithm::SyncAdmm,
        Algorithm::AsyncPadmmIncrementalVariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AsyncPadmm => "async_padmm",
            Algorithm::SyncPadmm => "sync_padmm",
            Algorithm::SyncAdmm => "sync_admm",
            Algorithm::AsyncPadmmIncrementalVariant => "async_padmm_incremental_variant",
        }
    }

    pub fn is_synchronous(self) -> bool {
        matches!(self, Algorithm::SyncPadmm | Algorithm::SyncAdmm)
    }

    /// Staleness bounds the stepsizes must be certified for. The synchronous
    /// methods always apply fresh gradients.
    pub fn certification_bounds(self, delay_bounds: &[usize]) -> Vec<usize> {
        if self.is_synchronous() {
            vec![0; delay_bounds.len()]
        } else {
            delay_bounds.to_vec()
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown algorithm `{s}` (expected one of {})",
                    Algorithm::ALL.map(Algorithm::name).join(", ")
                ))
            })
    }
}

/// Penalty parameters: `"auto"`, one number for every component, or a list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RhoRepr", into = "RhoRepr")]
pub enum RhoSpec {
    #[default]
    Auto,
    Uniform(f64),
    PerComponent(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RhoKeyword {
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RhoRepr {
    Keyword(RhoKeyword),
    Uniform(f64),
    PerComponent(Vec<f64>),
}

impl From<RhoRepr> for RhoSpec {
    fn from(r: RhoRepr) -> Self {
        match r {
            RhoRepr::Keyword(RhoKeyword::Auto) => RhoSpec::Auto,
            RhoRepr::Uniform(v) => RhoSpec::Uniform(v),
            RhoRepr::PerComponent(v) => RhoSpec::PerComponent(v),
        }
    }
}

impl From<RhoSpec> for RhoRepr {
    fn from(r: RhoSpec) -> Self {
        match r {
            RhoSpec::Auto => RhoRepr::Keyword(RhoKeyword::Auto),
            RhoSpec::Uniform(v) => RhoRepr::Uniform(v),
            RhoSpec::PerComponent(v) => RhoRepr::PerComponent(v),
        }
    }
}

/// Staleness bounds `T_k`: one value for all components, or a list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelayBounds {
    Uniform(usize),
    PerComponent(Vec<usize>),
}

impl Default for DelayBounds {
    fn default() -> Self {
        DelayBounds::Uniform(0)
    }
}

impl DelayBounds {
    pub fn resolve(&self, components: usize) -> Result<Vec<usize>> {
        match self {
            DelayBounds::Uniform(t) => Ok(vec![*t; components]),
            DelayBounds::PerComponent(ts) => {
                check_dim(components, ts.len())?;
                Ok(ts.clone())
            }
        }
    }

    pub fn max(&self) -> usize {
        match self {
            DelayBounds::Uniform(t) => *t,
            DelayBounds::PerComponent(ts) => ts.iter().copied().max().unwrap_or(0),
        }
    }
}

impl fmt::Display for DelayBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayBounds::Uniform(t) => write!(f, "{t}"),
            DelayBounds::PerComponent(ts) => {
                let parts: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
                f.write_str(&parts.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enforcement {
    /// Abort as soon as a staleness bound is exceeded.
    #[default]
    Enforce,
    /// Count violations and keep going.
    Observe,
}

/// Starting point `x^1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Seeded uniformly random direction on the sphere of radius `r`.
    #[default]
    Random,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub rho: RhoSpec,
    /// Run even when a stepsize certificate is infeasible.
    pub force: bool,
    pub max_iters: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub delay_bounds: DelayBounds,
    pub enforcement: Enforcement,
    pub init: Init,
    /// Length of the master's wait window in simulated time units.
    pub window: f64,
    pub network: NetworkModel,
    pub compute: ComputeModel,
    /// Keep full iterates in the trace (needed for offline residual checks).
    pub record_snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::AsyncPadmm,
            rho: RhoSpec::Auto,
            force: false,
            max_iters: 5000,
            epsilon: 1e-3,
            seed: 0,
            delay_bounds: DelayBounds::default(),
            enforcement: Enforcement::Enforce,
            init: Init::Random,
            window: 1.0,
            network: NetworkModel::perfect(),
            compute: ComputeModel::default(),
            record_snapshots: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.window > 0.0) || !self.window.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "window must be positive, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// A gradient as applied by the master.
#[derive(Debug, Clone, PartialEq)]
pub struct FreshGradient {
    pub component: usize,
    /// Master iteration of the x copy it was evaluated at.
    pub x_index: usize,
    pub gradient: Vector,
}

impl From<GradientMessage> for FreshGradient {
    fn from(m: GradientMessage) -> Self {
        FreshGradient {
            component: m.worker,
            x_index: m.x_index,
            gradient: m.gradient,
        }
    }
}

/// Exact minimizer of the augmented Lagrangian in `x` with all other blocks
/// fixed.
pub fn x_update(problem: &ConsensusProblem, state: &SolverState, rho: &[f64]) -> Vector {
    let total: f64 = rho.iter().sum();
    let mut v = Vector::zeros(problem.dim());
    for ((xk, yk), &r) in state.locals.iter().zip(&state.duals).zip(rho) {
        v += xk * r + yk;
    }
    v /= total;
    prox_l1_ball(&v, problem.l1_weight() / total, problem.radius())
}

fn check_inputs(problem: &ConsensusProblem, state: &SolverState, rho: &[f64]) -> Result<()> {
    problem.check_state(state)?;
    check_dim(problem.num_components(), rho.len())?;
    if let Some(r) = rho.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "rho must be positive, got {r}"
        )));
    }
    Ok(())
}

fn record_gradients(
    problem: &ConsensusProblem,
    state: &mut SolverState,
    collected: &[FreshGradient],
) -> Result<()> {
    for g in collected {
        if g.component >= problem.num_components() {
            return Err(Error::InvalidArgument(format!(
                "gradient from unknown component {}",
                g.component
            )));
        }
        check_dim(problem.dim(), g.gradient.len())?;
        state.stored_grads[g.component] = g.gradient.clone();
        state.stale_index[g.component] = g.x_index;
    }
    Ok(())
}

/// Fails with the first component whose gradient would be more than its
/// bound behind iteration `next_t`.
pub fn check_staleness(stale_index: &[usize], next_t: usize, delay_bounds: &[usize]) -> Result<()> {
    for (k, (&s, &bound)) in stale_index.iter().zip(delay_bounds).enumerate() {
        let staleness = next_t.saturating_sub(s);
        if staleness > bound {
            return Err(Error::StalenessViolation {
                iteration: next_t,
                component: k,
                staleness,
                bound,
            });
        }
    }
    Ok(())
}

/// Steps 3 and 4 for the components selected by `update`, then advances `t`.
fn finish_iteration(
    state: &mut SolverState,
    x_new: Vector,
    rho: &[f64],
    update: impl Fn(usize) -> bool,
) {
    for (k, &r) in rho.iter().enumerate() {
        if !update(k) {
            continue;
        }
        let xk = &x_new - (&state.stored_grads[k] + &state.duals[k]) / r;
        let yk = &state.duals[k] + (&xk - &x_new) * r;
        state.locals[k] = xk;
        state.duals[k] = yk;
    }
    state.x = x_new;
    state.t += 1;
}

/// One Async-PADMM iteration with the gradients in `collected`.
pub fn async_padmm_iteration(
    problem: &ConsensusProblem,
    state: &SolverState,
    rho: &[f64],
    collected: &[FreshGradient],
) -> Result<SolverState> {
    check_inputs(problem, state, rho)?;
    let x_new = x_update(problem, state, rho);
    let mut next = state.clone();
    record_gradients(problem, &mut next, collected)?;
    finish_iteration(&mut next, x_new, rho, |_| true);
    Ok(next)
}

/// Like [`async_padmm_iteration`], but only components in `collected`
/// update `x_k` and `y_k`; the rest carry theirs over.
pub fn incremental_variant_iteration(
    problem: &ConsensusProblem,
    state: &SolverState,
    rho: &[f64],
    collected: &[FreshGradient],
) -> Result<SolverState> {
    check_inputs(problem, state, rho)?;
    let x_new = x_update(problem, state, rho);
    let mut next = state.clone();
    record_gradients(problem, &mut next, collected)?;
    let mut selected = vec![false; problem.num_components()];
    for g in collected {
        selected[g.component] = true;
    }
    finish_iteration(&mut next, x_new, rho, |k| selected[k]);
    Ok(next)
}

/// Proximal ADMM with every gradient evaluated at the new `x`.
pub fn sync_padmm_iteration(
    problem: &ConsensusProblem,
    state: &SolverState,
    rho: &[f64],
) -> Result<SolverState> {
    check_inputs(problem, state, rho)?;
    let x_new = x_update(problem, state, rho);
    let mut next = state.clone();
    for (k, c) in problem.components().iter().enumerate() {
        next.stored_grads[k] = c.gradient(&x_new);
        next.stale_index[k] = state.t + 1;
    }
    finish_iteration(&mut next, x_new, rho, |_| true);
    Ok(next)
}

/// Builds the exact local solvers for classical ADMM.
pub fn local_solvers(problem: &ConsensusProblem, rho: &[f64]) -> Result<Vec<Box<dyn LocalSolver>>> {
    check_dim(problem.num_components(), rho.len())?;
    problem
        .components()
        .iter()
        .zip(rho)
        .enumerate()
        .map(|(k, (c, &r))| {
            c.local_solver(r).map_err(|e| match e {
                Error::InfeasibleStepsize { rho, reason, .. } => Error::InfeasibleStepsize {
                    component: k,
                    rho,
                    reason,
                },
                Error::NoLocalSolver(_) => Error::NoLocalSolver(k),
                other => other,
            })
        })
        .collect()
}

fn admm_step(
    problem: &ConsensusProblem,
    state: &mut SolverState,
    rho: &[f64],
    x_new: Vector,
    solvers: &[Box<dyn LocalSolver>],
) {
    for (k, c) in problem.components().iter().enumerate() {
        let xk = solvers[k].solve(&x_new, &state.duals[k]);
        let yk = &state.duals[k] + (&xk - &x_new) * rho[k];
        state.stored_grads[k] = c.gradient(&xk);
        state.stale_index[k] = state.t + 1;
        state.locals[k] = xk;
        state.duals[k] = yk;
    }
    state.x = x_new;
    state.t += 1;
}

/// Classical ADMM: each `x_k` minimizes its augmented Lagrangian term exactly.
pub fn sync_admm_iteration(
    problem: &ConsensusProblem,
    state: &SolverState,
    rho: &[f64],
) -> Result<SolverState> {
    check_inputs(problem, state, rho)?;
    let solvers = local_solvers(problem, rho)?;
    let x_new = x_update(problem, state, rho);
    let mut next = state.clone();
    admm_step(problem, &mut next, rho, x_new, &solvers);
    Ok(next)
}

/// Default penalties: the smallest certified value times 1.01. Classical ADMM
/// additionally keeps `rho_k >= 7 L_k`.
pub fn auto_rho(
    problem: &ConsensusProblem,
    algorithm: Algorithm,
    delay_bounds: &[usize],
) -> Result<Vec<f64>> {
    let bounds = algorithm.certification_bounds(delay_bounds);
    problem
        .components()
        .iter()
        .zip(&bounds)
        .map(|(c, &t)| {
            let l = c.lipschitz();
            if algorithm == Algorithm::SyncAdmm {
                let certified = stepsize::min_rho(l, 0, c.curvature(), 1e-9 * l)?;
                Ok(1.01 * certified.max(7.0 * l))
            } else {
                stepsize::default_rho(l, t, c.curvature())
            }
        })
        .collect()
}

pub fn resolve_rho(
    problem: &ConsensusProblem,
    config: &RunConfig,
    delay_bounds: &[usize],
) -> Result<Vec<f64>> {
    let k = problem.num_components();
    let rho = match &config.rho {
        RhoSpec::Auto => return auto_rho(problem, config.algorithm, delay_bounds),
        RhoSpec::Uniform(r) => vec![*r; k],
        RhoSpec::PerComponent(rs) => {
            check_dim(k, rs.len())?;
            rs.clone()
        }
    };
    if let Some(r) = rho.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rho must be positive and finite, got {r}"
        )));
    }
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    StalenessViolation {
        iteration: usize,
        component: usize,
        staleness: usize,
        bound: usize,
    },
    InfeasibleStepsize {
        component: usize,
        detail: String,
    },
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::StalenessViolation { .. } => "staleness_violation",
            Termination::InfeasibleStepsize { .. } => "infeasible_stepsize",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::StalenessViolation {
                iteration,
                component,
                staleness,
                bound,
            } => write!(
                f,
                "staleness violation at iteration {iteration}: component {component} is {staleness} iterations stale (bound {bound})"
            ),
            Termination::InfeasibleStepsize { component, detail } => {
                write!(f, "infeasible stepsize for component {component}: {detail}")
            }
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub termination: Termination,
    /// Completed master iterations.
    pub iterations: usize,
    pub final_e: f64,
    pub trace: IterationTrace,
    pub state: SolverState,
    pub rho: Vec<f64>,
    pub delay_bounds: Vec<usize>,
    /// Bounds the certificates were issued for.
    pub certified_bounds: Vec<usize>,
    pub certificates: Vec<StepsizeCertificate>,
    /// Component-iterations over the staleness bound (observe mode).
    pub staleness_violations: usize,
    pub network: SimStats,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn initial_point(problem: &ConsensusProblem, init: Init, seed: u64) -> Vector {
    match init {
        Init::Zero => Vector::zeros(problem.dim()),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // keep the draw independent of the network's random stream
            rng.set_stream(1);
            random_unit(&mut rng, problem.dim()) * problem.radius()
        }
    }
}

fn make_record(
    problem: &ConsensusProblem,
    state: &SolverState,
    rho: &[f64],
    sim_time: f64,
    set_size: usize,
) -> Result<IterationRecord> {
    let opt = diagnostics::measure(problem, &state.x, &state.locals);
    Ok(IterationRecord {
        iter: state.t,
        sim_time,
        lagrangian: problem.augmented_lagrangian(state, rho)?,
        objective: problem.objective(&state.x)?,
        feas_gap: opt.feas_gap,
        prox_grad_norm: opt.prox_grad_norm,
        e: opt.e,
        set_size,
    })
}

/// A synchronous round in progress: `x` was broadcast at iteration `index`
/// and the master waits for every worker's gradient at it.
struct Round {
    index: usize,
    x: Vector,
    grads: Vec<Option<Vector>>,
}

/// Runs `config.algorithm` on `problem` inside the simulated network until
/// `e < epsilon`, the iteration budget is spent, or a staleness bound is
/// violated under enforcement.
///
/// Every master iteration lasts one wait window. The synchronous methods
/// broadcast once per round and sit idle (state unchanged) until all `K`
/// gradients of that round have arrived.
pub fn run(problem: &ConsensusProblem, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let k_count = problem.num_components();
    let delay_bounds = config.delay_bounds.resolve(k_count)?;
    let certified_bounds = config.algorithm.certification_bounds(&delay_bounds);
    let rho = resolve_rho(problem, config, &delay_bounds)?;
    let certificates: Vec<StepsizeCertificate> = problem
        .components()
        .iter()
        .zip(&rho)
        .zip(&certified_bounds)
        .map(|((c, &r), &t)| stepsize::certify(c.lipschitz(), t, r, c.curvature()))
        .collect::<Result<_>>()?;

    let mut state = SolverState::new(problem, initial_point(problem, config.init, config.seed))?;
    let mut trace = IterationTrace {
        initial: Some(make_record(problem, &state, &rho, 0.0, 0)?),
        ..IterationTrace::default()
    };
    if config.record_snapshots {
        trace.snapshots.push(Snapshot::capture(&state));
    }

    let infeasible = |termination: Termination, trace: IterationTrace, state: SolverState| {
        Ok(RunOutcome {
            final_e: trace.last().map_or(f64::NAN, |r| r.e),
            termination,
            iterations: 0,
            trace,
            state,
            rho: rho.clone(),
            delay_bounds: delay_bounds.clone(),
            certified_bounds: certified_bounds.clone(),
            certificates: certificates.clone(),
            staleness_violations: 0,
            network: SimStats::default(),
        })
    };

    if !config.force {
        if let Some((k, cert)) = certificates.iter().enumerate().find(|(_, c)| !c.feasible) {
            let detail = cert.failure_reason().unwrap_or_default();
            return infeasible(
                Termination::InfeasibleStepsize {
                    component: k,
                    detail,
                },
                trace,
                state,
            );
        }
    }
    let solvers = if config.algorithm == Algorithm::SyncAdmm {
        match local_solvers(problem, &rho) {
            Ok(s) => s,
            Err(Error::InfeasibleStepsize {
                component, reason, ..
            }) => {
                return infeasible(
                    Termination::InfeasibleStepsize {
                        component,
                        detail: reason,
                    },
                    trace,
                    state,
                );
            }
            Err(e) => return Err(e),
        }
    } else {
        Vec::new()
    };

    let compute = config.compute.resolve(&delay_bounds)?;
    let mut sim = Simulator::new(
        problem.components().to_vec(),
        &config.network,
        compute,
        config.seed,
    )?;

    let mut termination = Termination::MaxIters;
    let mut violations = 0;
    let mut round: Option<Round> = None;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let t1 = state.t + 1;
        let set_size = match config.algorithm {
            Algorithm::AsyncPadmm | Algorithm::AsyncPadmmIncrementalVariant => {
                let x_new = x_update(problem, &state, &rho);
                sim.broadcast_x(x_new.clone(), t1);
                let collected: Vec<FreshGradient> = sim
                    .master_collect(config.window)
                    .into_iter()
                    .map(FreshGradient::from)
                    .collect();

                let mut stale = state.stale_index.clone();
                for g in &collected {
                    stale[g.component] = g.x_index;
                }
                match check_staleness(&stale, t1, &delay_bounds) {
                    Ok(()) => {}
                    Err(Error::StalenessViolation {
                        iteration,
                        component,
                        staleness,
                        bound,
                    }) if config.enforcement == Enforcement::Enforce => {
                        termination = Termination::StalenessViolation {
                            iteration,
                            component,
                            staleness,
                            bound,
                        };
                        break;
                    }
                    Err(Error::StalenessViolation { .. }) => {
                        violations += (0..k_count)
                            .filter(|&k| t1.saturating_sub(stale[k]) > delay_bounds[k])
                            .count();
                    }
                    Err(e) => return Err(e),
                }

                record_gradients(problem, &mut state, &collected)?;
                if config.algorithm == Algorithm::AsyncPadmm {
                    finish_iteration(&mut state, x_new, &rho, |_| true);
                } else {
                    let mut selected = vec![false; k_count];
                    for g in &collected {
                        selected[g.component] = true;
                    }
                    finish_iteration(&mut state, x_new, &rho, |k| selected[k]);
                }
                collected.len()
            }
            Algorithm::SyncPadmm | Algorithm::SyncAdmm => {
                let current = round.get_or_insert_with(|| {
                    let x_new = x_update(problem, &state, &rho);
                    sim.broadcast_x(x_new.clone(), t1);
                    Round {
                        index: t1,
                        x: x_new,
                        grads: vec![None; k_count],
                    }
                });
                for m in sim.master_collect(config.window) {
                    if m.x_index == current.index {
                        current.grads[m.worker] = Some(m.gradient);
                    }
                }
                if current.grads.iter().all(Option::is_some) {
                    let Round { x, grads, .. } = round.take().expect("round in progress");
                    if config.algorithm == Algorithm::SyncPadmm {
                        for (k, g) in grads.into_iter().enumerate() {
                            state.stored_grads[k] = g.expect("checked above");
                            state.stale_index[k] = t1;
                        }
                        finish_iteration(&mut state, x, &rho, |_| true);
                    } else {
                        admm_step(problem, &mut state, &rho, x, &solvers);
                    }
                    k_count
                } else {
                    state.t += 1;
                    0
                }
            }
        };
        iterations += 1;

        let record = make_record(problem, &state, &rho, sim.now(), set_size)?;
        let e = record.e;
        trace.records.push(record);
        if config.record_snapshots {
            trace.snapshots.push(Snapshot::capture(&state));
        }
        if e < config.epsilon {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(RunOutcome {
        final_e: trace.last().map_or(f64::NAN, |r| r.e),
        termination,
        iterations,
        trace,
        state,
        rho,
        delay_bounds,
        certified_bounds,
        certificates,
        staleness_violations: violations,
        network: sim.stats().clone(),
    })
}
