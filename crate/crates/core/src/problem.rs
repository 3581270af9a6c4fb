//! Consensus problems `min sum_k g_k(x) + lambda*|x|_1  s.t. |x|_2 <= r` and the
//! master's iterate state.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::stepsize::Curvature;
use crate::Vector;

/// One smooth term `g_k`, owned by worker `k`.
pub trait SmoothComponent: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    /// Gradient Lipschitz constant `L_k`.
    fn lipschitz(&self) -> f64;
    fn curvature(&self) -> Curvature;

    /// Exact solver for `argmin_z g(z) + <y, z - a> + rho/2 |z - a|^2`, needed
    /// only by the classical (non-linearized) ADMM baseline.
    fn local_solver(&self, rho: f64) -> Result<Box<dyn LocalSolver>> {
        let _ = rho;
        Err(Error::NoLocalSolver(0))
    }
}

pub trait LocalSolver: Send + Sync {
    fn solve(&self, anchor: &Vector, dual: &Vector) -> Vector;
}

/// `g(z) = 0.5 * z' Q z` with a symmetric `Q`.
#[derive(Debug, Clone)]
pub struct QuadraticComponent {
    hessian: DMatrix<f64>,
    lipschitz: f64,
    curvature: Curvature,
    degenerate: bool,
}

impl QuadraticComponent {
    /// Concave term `-0.5 |B z|^2` built from a data matrix `B`.
    ///
    /// `L = lambda_max(B'B)` comes from power iteration. An all-zero `B` has no
    /// positive Lipschitz constant; `L` is then floored at machine epsilon and
    /// the component is flagged degenerate.
    pub fn from_data(data: &DMatrix<f64>) -> Self {
        let gram = data.transpose() * data;
        let top = power_iteration(&gram, 1e-12, 100_000);
        let degenerate = !(top > f64::EPSILON);
        QuadraticComponent {
            hessian: -gram,
            lipschitz: if degenerate { f64::EPSILON } else { top },
            curvature: Curvature::Concave,
            degenerate,
        }
    }

    /// General symmetric quadratic; `L` is the spectral norm of `Q`.
    pub fn new(hessian: DMatrix<f64>, curvature: Curvature) -> Result<Self> {
        if !hessian.is_square() {
            return Err(Error::InvalidArgument("hessian must be square".into()));
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * hessian.amax().max(1.0) {
            return Err(Error::InvalidArgument("hessian must be symmetric".into()));
        }
        let squared = &hessian * &hessian;
        let top = power_iteration(&squared, 1e-14, 100_000).max(0.0).sqrt();
        let degenerate = !(top > f64::EPSILON);
        Ok(QuadraticComponent {
            hessian,
            lipschitz: if degenerate { f64::EPSILON } else { top },
            curvature,
            degenerate,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// True when the data were all zero and `L` was floored.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

impl SmoothComponent for QuadraticComponent {
    fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x))
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.hessian * x
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// Solves `(Q + rho I) z = rho a - y`; requires `Q + rho I` positive definite.
    fn local_solver(&self, rho: f64) -> Result<Box<dyn LocalSolver>> {
        let n = self.dim();
        let shifted = &self.hessian + DMatrix::identity(n, n) * rho;
        match Cholesky::new(shifted) {
            Some(factor) => Ok(Box::new(QuadraticSolver { factor, rho })),
            None => Err(Error::InfeasibleStepsize {
                component: 0,
                rho,
                reason: "local subproblem is not strongly convex (rho must exceed L)".into(),
            }),
        }
    }
}

struct QuadraticSolver {
    factor: Cholesky<f64, nalgebra::Dyn>,
    rho: f64,
}

impl LocalSolver for QuadraticSolver {
    fn solve(&self, anchor: &Vector, dual: &Vector) -> Vector {
        self.factor.solve(&(anchor * self.rho - dual))
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Stops when the Rayleigh quotient changes by less than `rel_tol` relative.
/// The start vector is fixed (a low-discrepancy perturbation of the all-ones
/// vector) so results are reproducible.
pub fn power_iteration(matrix: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 0.0;
    }
    let golden = 0.618_033_988_749_894_9;
    let mut v = Vector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * golden).fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = matrix * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// `min sum_k g_k(x) + l1_weight*|x|_1` over the ball of radius `radius`.
#[derive(Debug, Clone)]
pub struct ConsensusProblem {
    dim: usize,
    components: Vec<Arc<dyn SmoothComponent>>,
    l1_weight: f64,
    radius: f64,
}

impl ConsensusProblem {
    pub fn new(
        dim: usize,
        components: Vec<Arc<dyn SmoothComponent>>,
        l1_weight: f64,
        radius: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if components.is_empty() {
            return Err(Error::InvalidArgument("need at least one component".into()));
        }
        if !(l1_weight >= 0.0) || !l1_weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "l1 weight must be finite and nonnegative, got {l1_weight}"
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        for (k, c) in components.iter().enumerate() {
            check_dim(dim, c.dim())?;
            if !(c.lipschitz() > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "component {k} has nonpositive Lipschitz constant {}",
                    c.lipschitz()
                )));
            }
        }
        Ok(ConsensusProblem {
            dim,
            components,
            l1_weight,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Arc<dyn SmoothComponent>] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &dyn SmoothComponent {
        self.components[k].as_ref()
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1_weight
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Only used for the augmented Lagrangian lower bound.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn lipschitz(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.lipschitz()).collect()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.norm() <= self.radius * (1.0 + 1e-12)
    }

    /// `sum_k g_k(x) + lambda*|x|_1`. Membership in the ball is not checked.
    pub fn objective(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let smooth: f64 = self.components.iter().map(|c| c.value(x)).sum();
        Ok(smooth + self.l1_weight * x.lp_norm(1))
    }

    /// `sum_k grad g_k(x)`.
    pub fn smooth_gradient(&self, x: &Vector) -> Vector {
        let mut total = Vector::zeros(self.dim);
        for c in &self.components {
            total += c.gradient(x);
        }
        total
    }

    pub fn augmented_lagrangian(&self, state: &SolverState, rho: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        check_dim(self.num_components(), rho.len())?;
        let mut total = self.l1_weight * state.x.lp_norm(1);
        for (k, c) in self.components.iter().enumerate() {
            let diff = &state.locals[k] - &state.x;
            total += c.value(&state.locals[k])
                + state.duals[k].dot(&diff)
                + 0.5 * rho[k] * diff.norm_squared();
        }
        Ok(total)
    }

    pub fn check_state(&self, state: &SolverState) -> Result<()> {
        check_dim(self.dim, state.x.len())?;
        check_dim(self.num_components(), state.locals.len())?;
        check_dim(self.num_components(), state.duals.len())?;
        for k in 0..self.num_components() {
            check_dim(self.dim, state.locals[k].len())?;
            check_dim(self.dim, state.duals[k].len())?;
        }
        Ok(())
    }

    /// Worst relative error between each analytic gradient and a central
    /// finite difference along random directions, at random interior points.
    pub fn gradient_probe<R: Rng>(&self, rng: &mut R, probes: usize) -> f64 {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for c in &self.components {
            for _ in 0..probes {
                let x = random_in_ball(rng, self.dim, 0.5 * self.radius);
                let d = random_unit(rng, self.dim);
                let fd = (c.value(&(&x + h * &d)) - c.value(&(&x - h * &d))) / (2.0 * h);
                let exact = c.gradient(&x).dot(&d);
                let scale = exact.abs().max(c.lipschitz() * x.norm()).max(1e-12);
                worst = worst.max((fd - exact).abs() / scale);
            }
        }
        worst
    }

    /// Largest ratio `|grad g_k(a) - grad g_k(b)| / (L_k |a - b|)` over random
    /// pairs in the feasible set; at most 1 when every `L_k` is valid.
    pub fn lipschitz_probe<R: Rng>(&self, rng: &mut R, pairs: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.components {
            for _ in 0..pairs {
                let a = random_in_ball(rng, self.dim, self.radius);
                let b = random_in_ball(rng, self.dim, self.radius);
                let gap = (&a - &b).norm();
                if gap == 0.0 {
                    continue;
                }
                let ratio = (c.gradient(&a) - c.gradient(&b)).norm() / (c.lipschitz() * gap);
                worst = worst.max(ratio);
            }
        }
        worst
    }
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

pub(crate) fn random_in_ball<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vector {
    let u: f64 = rng.random();
    random_unit(rng, n) * (radius * u.powf(1.0 / n as f64))
}

/// Master-side iterate at master iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: usize,
    pub x: Vector,
    /// Local copies `x_k`.
    pub locals: Vec<Vector>,
    /// Multipliers `y_k`.
    pub duals: Vec<Vector>,
    /// Cached `grad g_k(x^{[t](k)})`.
    pub stored_grads: Vec<Vector>,
    /// `[t](k)`: master iteration of the x copy behind each stored gradient.
    pub stale_index: Vec<usize>,
}

impl SolverState {
    /// Iteration-1 state at consensus: `x_k = x`, stored gradients evaluated at
    /// `x` and `y_k = -grad g_k(x)`, so the dual identity holds from the start.
    pub fn new(problem: &ConsensusProblem, x: Vector) -> Result<Self> {
        check_dim(problem.dim(), x.len())?;
        if !problem.contains(&x) {
            return Err(Error::InvalidArgument(
                "initial point lies outside the feasible ball".into(),
            ));
        }
        let stored_grads: Vec<Vector> = problem
            .components()
            .iter()
            .map(|c| c.gradient(&x))
            .collect();
        let duals = stored_grads.iter().map(|g| -g).collect();
        let k = problem.num_components();
        Ok(SolverState {
            t: 1,
            locals: vec![x.clone(); k],
            x,
            duals,
            stored_grads,
            stale_index: vec![1; k],
        })
    }

    pub fn num_components(&self) -> usize {
        self.locals.len()
    }

    pub fn feasibility_gap(&self) -> FeasibilityGap {
        feasibility_gap(&self.x, &self.locals)
    }
}

/// Consensus violation `max_k |x_k - x|`, absolute and relative to `|x|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityGap {
    pub absolute: f64,
    /// Equals `absolute` when `x = 0`.
    pub relative: f64,
}

pub fn feasibility_gap(x: &Vector, locals: &[Vector]) -> FeasibilityGap {
    let absolute = locals.iter().map(|xk| (xk - x).norm()).fold(0.0, f64::max);
    let norm = x.norm();
    let relative = if norm > 0.0 {
        absolute / norm
    } else {
        absolute
    };
    FeasibilityGap { absolute, relative }
}
