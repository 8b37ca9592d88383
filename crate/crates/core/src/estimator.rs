//! l1-regularized node-conditional maximum likelihood.
//!
//! Each node is regressed on all others by minimizing
//! `l(theta(s)) + lambda * ||weights||_1` subject to the family's sign and
//! interval constraints. The intercept is unpenalized. The solver is an
//! accelerated proximal gradient method with backtracking, a monotone
//! safeguard and an adaptive momentum restart; every returned iterate is
//! feasible and carries a KKT certificate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::families::{DomainConstraint, EdgeSign, FamilySpec};
use crate::model::{dot, other_node, NodeParams, NodeProblem, SampleMatrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    pub max_iters: usize,
    /// Convergence threshold on the KKT gap.
    pub tol: T,
    /// Step shrink factor in the backtracking line search.
    pub backtrack: T,
    pub initial_step: T,
    /// Warm start each fit of a lambda path from the previous solution.
    pub warm_start: bool,
    /// Keep the objective value of every iteration in [`NeighborhoodFit::trace`].
    pub record_trace: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: T::lit(1e-7),
            backtrack: T::lit(0.5),
            initial_step: T::one(),
            warm_start: true,
            record_trace: false,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidArgument("solver tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return Err(Error::InvalidArgument("backtrack factor must lie in (0, 1)".into()));
        }
        if !(self.initial_step > T::zero()) {
            return Err(Error::InvalidArgument("initial step must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of one node-conditional problem.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodFit<T> {
    pub s: usize,
    pub p: usize,
    pub intercept: T,
    /// Weight on every other node, ordered by node index with `s` skipped.
    pub weights: Vec<T>,
    pub lambda: T,
    pub objective: T,
    pub kkt_gap: T,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<T>,
}

impl<T: Scalar> NeighborhoodFit<T> {
    /// Nonzero `(node, weight)` pairs.
    pub fn edge_weights(&self) -> Vec<(usize, T)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(|(k, &w)| (other_node(self.s, k), w))
            .collect()
    }

    /// Weight on node `t`; zero for `t == s`.
    pub fn weight_to(&self, t: usize) -> T {
        match t.cmp(&self.s) {
            std::cmp::Ordering::Less => self.weights[t],
            std::cmp::Ordering::Greater => self.weights[t - 1],
            std::cmp::Ordering::Equal => T::zero(),
        }
    }

    pub fn active_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != T::zero()).count()
    }

    pub fn params(&self) -> NodeParams<T> {
        NodeParams {
            intercept: self.intercept,
            weights: self.weights.clone(),
        }
    }
}

/// Proximal map of `tau * |.|`: `sign(z) * max(|z| - tau, 0)`.
#[inline]
pub fn soft_threshold<T: Scalar>(z: T, tau: T) -> T {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        T::zero()
    }
}

/// Largest violation of the optimality conditions of the penalized,
/// constrained problem, given the loss gradient (intercept first).
pub fn kkt_gap<T: Scalar>(grad: &[T], params: &NodeParams<T>, lambda: T, constraint: &DomainConstraint<T>) -> T {
    let g0 = grad[0];
    let b = params.intercept;
    let mut gap = if constraint.node_lower == Some(b) && constraint.node_upper == Some(b) {
        T::zero()
    } else if constraint.node_lower == Some(b) {
        (-g0).max(T::zero())
    } else if constraint.node_upper == Some(b) {
        g0.max(T::zero())
    } else {
        g0.abs()
    };
    for (&g, &w) in grad[1..].iter().zip(&params.weights) {
        let v = if w > T::zero() {
            (g + lambda).abs()
        } else if w < T::zero() {
            (g - lambda).abs()
        } else {
            match constraint.edge_sign {
                EdgeSign::Free => (g.abs() - lambda).max(T::zero()),
                EdgeSign::NonPositive => (g - lambda).max(T::zero()),
                EdgeSign::NonNegative => (-g - lambda).max(T::zero()),
            }
        };
        gap = gap.max(v);
    }
    gap
}

fn penalty<T: Scalar>(params: &NodeParams<T>, lambda: T) -> T {
    lambda * params.weights.iter().map(|w| w.abs()).sum::<T>()
}

fn project<T: Scalar>(params: &mut NodeParams<T>, constraint: &DomainConstraint<T>) {
    params.intercept = constraint.project_node(params.intercept);
    for w in &mut params.weights {
        *w = constraint.edge_sign.project(*w);
    }
}

/// Minimizes the loss over the intercept with the weights held fixed, by
/// safeguarded Newton steps kept inside the node bounds. Updates `eta` and
/// returns the new loss; the loss never increases.
fn refine_intercept<T: Scalar>(
    problem: &NodeProblem<'_, T>,
    constraint: &DomainConstraint<T>,
    x: &mut NodeParams<T>,
    eta: &mut [T],
    mut f: T,
    tol: T,
) -> Result<T> {
    let mut trial = vec![T::zero(); eta.len()];
    for _ in 0..50 {
        let (g, h) = problem.intercept_derivatives(eta)?;
        let at_lower = constraint.node_lower.is_some_and(|lo| x.intercept <= lo) && g > T::zero();
        let at_upper = constraint.node_upper.is_some_and(|hi| x.intercept >= hi) && g < T::zero();
        if g.abs() <= tol || at_lower || at_upper || !(h > T::zero()) {
            break;
        }
        let mut delta = -g / h;
        let mut accepted = false;
        for _ in 0..60 {
            let b = constraint.project_node(x.intercept + delta);
            let shift = b - x.intercept;
            if shift == T::zero() {
                break;
            }
            for (t, &e) in trial.iter_mut().zip(eta.iter()) {
                *t = e + shift;
            }
            if let Ok(f_new) = problem.nll_from_eta(&trial) {
                if f_new <= f {
                    x.intercept = b;
                    eta.copy_from_slice(&trial);
                    f = f_new;
                    accepted = true;
                    break;
                }
            }
            delta = delta * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Ok(f)
}

/// Minimizer of the intercept-only loss, moved into the node bounds.
pub fn intercept_only<T: Scalar>(problem: &NodeProblem<'_, T>, constraint: &DomainConstraint<T>) -> T {
    let col = problem.data().column(problem.node());
    let mean = col.iter().copied().sum::<T>() / T::from_usize_lossy(col.len());
    constraint.project_node(problem.family().eta_for_mean(mean))
}

/// Smallest lambda at which the all-zero weight vector is optimal, with the
/// intercept at its intercept-only optimum.
pub fn lambda_max<T: Scalar>(problem: &NodeProblem<'_, T>, constraint: &DomainConstraint<T>) -> Result<T> {
    let mut start = NodeParams::zeros(problem.dim());
    start.intercept = intercept_only(problem, constraint);
    let g = problem.gradient(&start)?;
    let edge = &g[1..];
    let signed = edge.iter().fold(T::zero(), |m, &v| {
        let bind = match constraint.edge_sign {
            EdgeSign::Free => v.abs(),
            EdgeSign::NonPositive => v,
            EdgeSign::NonNegative => -v,
        };
        m.max(bind)
    });
    if signed > T::zero() {
        return Ok(signed);
    }
    let unsigned = edge.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    Ok(if unsigned > T::zero() { unsigned } else { T::epsilon().sqrt() })
}

/// Geometric grid from `lambda_max` down to `ratio * lambda_max`, `count` points.
pub fn lambda_grid<T: Scalar>(
    problem: &NodeProblem<'_, T>,
    constraint: &DomainConstraint<T>,
    count: usize,
    ratio: T,
) -> Result<Vec<T>> {
    geometric_grid(lambda_max(problem, constraint)?, count, ratio)
}

pub fn geometric_grid<T: Scalar>(top: T, count: usize, ratio: T) -> Result<Vec<T>> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!("lambda grid needs count >= 2, got {count}")));
    }
    if !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::InvalidArgument(format!("lambda grid ratio must be in (0,1), got {ratio}")));
    }
    let last = T::from_usize_lossy(count - 1);
    Ok((0..count)
        .map(|k| {
            if k == 0 {
                top
            } else if k == count - 1 {
                top * ratio
            } else {
                top * ratio.powf(T::from_usize_lossy(k) / last)
            }
        })
        .collect())
}

/// `c * sqrt(kappa1) * sqrt(log p / n)`.
pub fn theory_lambda<T: Scalar>(n: usize, p: usize, kappa1: T, c: T) -> T {
    let n = T::from_usize_lossy(n);
    let p = T::from_usize_lossy(p);
    c * kappa1.sqrt() * (p.ln() / n).sqrt()
}

/// `(2 - alpha) / alpha`, the incoherence factor in the lower bound on lambda.
pub fn incoherence_factor<T: Scalar>(alpha: T) -> T {
    (T::lit(2.0) - alpha) / alpha
}

/// Fits node `s` starting from the intercept-only solution.
pub fn fit_neighborhood<T: Scalar>(
    data: &SampleMatrix<T>,
    s: usize,
    lambda: T,
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
    opts: &SolverOptions<T>,
) -> Result<NeighborhoodFit<T>> {
    let problem = NodeProblem::new(*family, data, s)?;
    solve(&problem, lambda, constraint, opts, None)
}

/// Solves a prepared node problem, optionally from `start`.
pub fn solve<T: Scalar>(
    problem: &NodeProblem<'_, T>,
    lambda: T,
    constraint: &DomainConstraint<T>,
    opts: &SolverOptions<T>,
    start: Option<&NodeParams<T>>,
) -> Result<NeighborhoodFit<T>> {
    opts.validate()?;
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let dim = problem.dim();
    let n = problem.n();
    let s = problem.node();

    let fallback = || {
        let mut x = NodeParams::zeros(dim);
        x.intercept = intercept_only(problem, constraint);
        x
    };
    let mut x = match start {
        Some(st) if st.weights.len() == dim - 1 => {
            let mut x = st.clone();
            project(&mut x, constraint);
            x
        }
        _ => fallback(),
    };
    let mut eta_x = problem.eta(&x);
    let mut f_x = match problem.nll_from_eta(&eta_x) {
        Ok(v) => v,
        Err(_) => {
            x = fallback();
            problem.eta_into(&x, &mut eta_x);
            problem.nll_from_eta(&eta_x)?
        }
    };
    f_x = refine_intercept(problem, constraint, &mut x, &mut eta_x, f_x, opts.tol * T::lit(0.1))?;
    let mut obj_x = f_x + penalty(&x, lambda);
    let mut grad_x = vec![T::zero(); dim];
    problem.gradient_from_eta(&eta_x, &mut grad_x)?;

    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(obj_x);
    }
    let mut gap = kkt_gap(&grad_x, &x, lambda, constraint);
    let mut step = opts.initial_step;
    let min_step = T::lit(1e-14);
    let inv_n = T::one() / T::from_usize_lossy(n);
    let means: Vec<T> = (0..dim - 1)
        .map(|k| problem.feature(k).iter().copied().sum::<T>() * inv_n)
        .collect();
    // Rounding error of an n-term loss sum.
    let slack = T::epsilon() * T::lit(8.0) * T::from_usize_lossy(n).sqrt().max(T::one());
    let mut momentum = T::one();

    let mut y = x.clone();
    let mut eta_y = eta_x.clone();
    let mut f_y = f_x;
    let mut grad_y = grad_x.clone();

    let mut z = x.clone();
    let mut eta_z = vec![T::zero(); n];
    let mut iterations = 0;
    // True while y coincides with x, i.e. the next step is a plain prox step.
    let mut y_is_x = true;
    let mut grow = false;

    while gap > opts.tol && iterations < opts.max_iters {
        iterations += 1;

        // Backtracking on the quadratic upper model around y.
        if y_is_x && grow {
            // After a successful plain prox step, try a longer step again;
            // accelerated steps keep the step nonincreasing.
            step = (step / opts.backtrack).min(opts.initial_step);
        }
        let step_before = step;
        let mut saw_feasible = false;
        let f_z = loop {
            // Step in centered coordinates, where the intercept follows the
            // weights so the sample mean of eta is preserved. When that would
            // push the intercept out of its bounds, step in raw coordinates.
            let centered_y = y.intercept + dot(&y.weights, &means);
            let mut centered = true;
            for (k, zw) in z.weights.iter_mut().enumerate() {
                let g = grad_y[k + 1] - means[k] * grad_y[0];
                *zw = constraint.edge_sign.project(soft_threshold(y.weights[k] - step * g, step * lambda));
            }
            let b = centered_y - step * grad_y[0] - dot(&z.weights, &means);
            if constraint.node_ok(b) {
                z.intercept = b;
            } else {
                centered = false;
                for (k, zw) in z.weights.iter_mut().enumerate() {
                    let raw = soft_threshold(y.weights[k] - step * grad_y[k + 1], step * lambda);
                    *zw = constraint.edge_sign.project(raw);
                }
                z.intercept = constraint.project_node(y.intercept - step * grad_y[0]);
            }
            problem.eta_into(&z, &mut eta_z);
            if let Ok(f_z) = problem.nll_from_eta(&eta_z) {
                saw_feasible = true;
                let (mut lin, mut sq) = if centered {
                    let db = z.intercept + dot(&z.weights, &means) - centered_y;
                    (grad_y[0] * db, db * db)
                } else {
                    let db = z.intercept - y.intercept;
                    (grad_y[0] * db, db * db)
                };
                for k in 0..dim - 1 {
                    let d = z.weights[k] - y.weights[k];
                    let g = if centered { grad_y[k + 1] - means[k] * grad_y[0] } else { grad_y[k + 1] };
                    lin = lin + g * d;
                    sq = sq + d * d;
                }
                let model = f_y + lin + sq / (T::lit(2.0) * step);
                if f_z <= model + slack * (T::one() + f_y.abs()) {
                    break Some(f_z);
                }
            }
            step = step * opts.backtrack;
            if step < min_step {
                if !saw_feasible {
                    return Err(Error::LineSearch { node: s });
                }
                break None;
            }
        };
        // The decrease test is lost in rounding: restart from x, or stop if already there.
        let Some(f_z) = f_z else {
            if y_is_x {
                break;
            }
            step = step_before;
            momentum = T::one();
            y_is_x = true;
            y.clone_from(&x);
            eta_y.clone_from(&eta_x);
            f_y = f_x;
            grad_y.clone_from(&grad_x);
            continue;
        };

        let obj_z = f_z + penalty(&z, lambda);
        let prev = x.clone();
        // A prox step from x that passed the sufficient-decrease test cannot
        // increase the objective; comparisons that say otherwise are roundoff.
        let roundoff = T::epsilon() * T::lit(16.0) * (T::one() + obj_x.abs());
        let improved = obj_z <= obj_x || (y_is_x && obj_z <= obj_x + roundoff);
        if improved {
            std::mem::swap(&mut x, &mut z);
            std::mem::swap(&mut eta_x, &mut eta_z);
            f_x = refine_intercept(problem, constraint, &mut x, &mut eta_x, f_z, opts.tol * T::lit(0.1))?;
            obj_x = f_x + penalty(&x, lambda);
            problem.gradient_from_eta(&eta_x, &mut grad_x)?;
            gap = kkt_gap(&grad_x, &x, lambda, constraint);
        }
        if opts.record_trace {
            trace.push(obj_x);
        }
        // A rejected plain step means the step passed the decrease test only
        // within rounding: shorten it.
        grow = improved && y_is_x;
        if !improved && y_is_x {
            step = step * opts.backtrack;
            if step < min_step {
                break;
            }
        }
        if gap <= opts.tol {
            break;
        }

        // Momentum with restart when the prox step failed to decrease the objective.
        let next = if improved {
            let t_next = (T::one() + (T::one() + T::lit(4.0) * momentum * momentum).sqrt()) / T::lit(2.0);
            let beta = (momentum - T::one()) / t_next;
            momentum = t_next;
            Some(beta)
        } else {
            momentum = T::one();
            None
        };
        match next {
            Some(beta) if beta > T::zero() => {
                y_is_x = false;
                y.intercept = x.intercept + beta * (x.intercept - prev.intercept);
                for k in 0..dim - 1 {
                    y.weights[k] = x.weights[k] + beta * (x.weights[k] - prev.weights[k]);
                }
                project(&mut y, constraint);
                problem.eta_into(&y, &mut eta_y);
                match problem.nll_from_eta(&eta_y) {
                    Ok(v) => {
                        f_y = v;
                        problem.gradient_from_eta(&eta_y, &mut grad_y)?;
                    }
                    Err(_) => {
                        momentum = T::one();
                        y_is_x = true;
                        y.clone_from(&x);
                        eta_y.clone_from(&eta_x);
                        f_y = f_x;
                        grad_y.clone_from(&grad_x);
                    }
                }
            }
            _ => {
                y_is_x = true;
                y.clone_from(&x);
                eta_y.clone_from(&eta_x);
                f_y = f_x;
                grad_y.clone_from(&grad_x);
            }
        }
    }

    Ok(NeighborhoodFit {
        s,
        p: dim,
        intercept: x.intercept,
        weights: x.weights,
        lambda,
        objective: obj_x,
        kkt_gap: gap,
        iterations,
        converged: gap <= opts.tol,
        trace,
    })
}

/// Fits along a decreasing lambda path, warm starting when enabled.
pub fn fit_path<T: Scalar>(
    problem: &NodeProblem<'_, T>,
    constraint: &DomainConstraint<T>,
    lambdas: &[T],
    opts: &SolverOptions<T>,
) -> Result<Vec<NeighborhoodFit<T>>> {
    let mut fits: Vec<NeighborhoodFit<T>> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let start = if opts.warm_start {
            fits.last().map(|f| f.params())
        } else {
            None
        };
        fits.push(solve(problem, lambda, constraint, opts, start.as_ref())?);
    }
    Ok(fits)
}

/// Fits every node at one lambda; nodes are solved in parallel.
pub fn fit_all_nodes<T: Scalar>(
    data: &SampleMatrix<T>,
    lambda: T,
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
    opts: &SolverOptions<T>,
) -> Result<Vec<NeighborhoodFit<T>>> {
    (0..data.p())
        .into_par_iter()
        .map(|s| fit_neighborhood(data, s, lambda, family, constraint, opts))
        .collect()
}

/// Fits every node along a shared lambda path; result is indexed `[lambda][node]`.
pub fn fit_all_nodes_path<T: Scalar>(
    data: &SampleMatrix<T>,
    lambdas: &[T],
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
    opts: &SolverOptions<T>,
) -> Result<Vec<Vec<NeighborhoodFit<T>>>> {
    let per_node: Vec<Vec<NeighborhoodFit<T>>> = (0..data.p())
        .into_par_iter()
        .map(|s| {
            let problem = NodeProblem::new(*family, data, s)?;
            fit_path(&problem, constraint, lambdas, opts)
        })
        .collect::<Result<_>>()?;
    Ok((0..lambdas.len())
        .map(|k| per_node.iter().map(|fits| fits[k].clone()).collect())
        .collect())
}

/// Largest per-node `lambda_max` over all nodes.
pub fn graph_lambda_max<T: Scalar>(
    data: &SampleMatrix<T>,
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
) -> Result<T> {
    let mut top = T::zero();
    for s in 0..data.p() {
        let problem = NodeProblem::new(*family, data, s)?;
        top = top.max(lambda_max(&problem, constraint)?);
    }
    Ok(top)
}
