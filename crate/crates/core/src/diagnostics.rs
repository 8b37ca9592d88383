//! Finite-sample analogues of the sparsistency conditions: Fisher-information
//! eigenvalues, incoherence, moment and tail checks. Everything here is
//! reported, never enforced.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::families::FamilyKind;
use crate::model::{JointPmf, NodeParams, NodeProblem, PairwiseModel, SampleMatrix};
use crate::scalar::Scalar;

/// Below this smallest eigenvalue the support block is treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

/// Fisher information of node `s` at the true parameters: the Hessian of the
/// node loss over `(intercept, weights)`.
pub fn fisher_info<T: Scalar>(model: &PairwiseModel<T>, data: &SampleMatrix<T>, s: usize) -> Result<DMatrix<f64>> {
    let problem = NodeProblem::new(*model.family(), data, s)?;
    let h = problem.hessian(&NodeParams::from_model(model, s))?;
    let d = problem.dim();
    Ok(DMatrix::from_fn(d, d, |i, j| h[i * d + j].as_f64()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub node: usize,
    /// Coordinates of the support block: 0 is the intercept, `k + 1` the k-th other node.
    pub support: Vec<usize>,
    pub degree: usize,
    pub degree_bound: usize,
    pub lambda_min_qss: f64,
    pub lambda_max_qss: f64,
    /// `lambda_max_qss / lambda_min_qss`; infinite when singular.
    pub condition_number: f64,
    /// Largest eigenvalue of the empirical second moment of the other nodes.
    pub lambda_max_empirical: f64,
    /// `max_{t not in S} || Q_tS Q_SS^{-1} ||_1` over the penalized support
    /// coordinates; zero when every node is a neighbor.
    pub incoherence: f64,
    pub alpha_implied: f64,
    pub singular: bool,
}

/// Evaluates the eigenvalue and incoherence conditions for node `s`, with
/// the support given by the intercept and the true neighbors of `s`.
pub fn check_conditions<T: Scalar>(
    model: &PairwiseModel<T>,
    data: &SampleMatrix<T>,
    s: usize,
    degree_bound: usize,
) -> Result<ConditionReport> {
    let q = fisher_info(model, data, s)?;
    let d = q.nrows();
    let p = model.p();
    let neighbors: Vec<usize> = model.neighbors(s).iter().map(|&(t, _)| t).collect();
    let coord = |t: usize| if t < s { t + 1 } else { t };
    let mut support = vec![0];
    support.extend(neighbors.iter().map(|&t| coord(t)));
    support.sort_unstable();
    let rest: Vec<usize> = (1..d).filter(|k| !support.contains(k)).collect();

    let qss = q.select_rows(&support).select_columns(&support);
    let eig = SymmetricEigen::new(qss.clone()).eigenvalues;
    let lambda_min_qss = eig.min();
    let lambda_max_qss = eig.max();
    let singular = lambda_min_qss < SINGULAR_THRESHOLD;

    let incoherence = if rest.is_empty() {
        0.0
    } else if singular {
        f64::INFINITY
    } else {
        let qsr = q.select_rows(&support).select_columns(&rest);
        let sol = qss
            .lu()
            .solve(&qsr)
            .ok_or_else(|| Error::InvalidArgument(format!("support block of node {s} is not invertible")))?;
        // Column j of `sol` is (Q_SS)^{-1} Q_{S,t}, i.e. the transposed row
        // Q_tS (Q_SS)^{-1}. Row 0 is the unpenalized intercept, whose sign
        // entry is zero, so it does not enter the l1 norm.
        sol.column_iter()
            .map(|c| c.iter().skip(1).map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };

    let others: Vec<usize> = (0..p).filter(|&t| t != s).collect();
    let n = data.n() as f64;
    let m = others.len();
    let second = DMatrix::from_fn(m, m, |i, j| {
        let a = data.column(others[i]);
        let b = data.column(others[j]);
        a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum::<f64>() / n
    });
    let lambda_max_empirical = if m == 0 {
        0.0
    } else {
        SymmetricEigen::new(second).eigenvalues.max()
    };

    Ok(ConditionReport {
        node: s,
        support,
        degree: neighbors.len(),
        degree_bound,
        lambda_min_qss,
        lambda_max_qss,
        condition_number: if singular { f64::INFINITY } else { lambda_max_qss / lambda_min_qss },
        lambda_max_empirical,
        incoherence,
        alpha_implied: 1.0 - incoherence,
        singular,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeTail {
    pub node: usize,
    pub mean_square: f64,
    pub max_abs: f64,
    /// Fraction of row blocks whose mean of `x^2` is at least `delta`.
    pub block_exceedance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    pub nodes: Vec<NodeTail>,
    pub delta: f64,
    pub blocks: usize,
    /// `4 log max(n, p)`.
    pub xi1_bound: f64,
    /// Every sample satisfies `|x| <= xi1_bound`.
    pub xi1_holds: bool,
}

/// Moment and maximum checks per node; rows are split into `blocks`
/// contiguous blocks for the exceedance fraction.
pub fn tail_checks<T: Scalar>(data: &SampleMatrix<T>, delta: f64, blocks: usize) -> Result<TailReport> {
    let n = data.n();
    let p = data.p();
    if blocks == 0 || blocks > n.max(1) {
        return Err(Error::InvalidArgument(format!("blocks must lie in 1..={n}, got {blocks}")));
    }
    let xi1_bound = 4.0 * (n.max(p) as f64).ln();
    let nodes: Vec<NodeTail> = (0..p)
        .map(|j| {
            let col = data.column(j);
            let sq: Vec<f64> = col.iter().map(|x| x.as_f64().powi(2)).collect();
            let max_abs = col.iter().map(|x| x.as_f64().abs()).fold(0.0, f64::max);
            let exceed = (0..blocks)
                .filter(|&b| {
                    let lo = b * n / blocks;
                    let hi = (b + 1) * n / blocks;
                    let mean = sq[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                    mean >= delta
                })
                .count();
            NodeTail {
                node: j,
                mean_square: if n == 0 { 0.0 } else { sq.iter().sum::<f64>() / n as f64 },
                max_abs,
                block_exceedance: exceed as f64 / blocks as f64,
            }
        })
        .collect();
    let xi1_holds = nodes.iter().all(|t| t.max_abs <= xi1_bound);
    Ok(TailReport {
        nodes,
        delta,
        blocks,
        xi1_bound,
        xi1_holds,
    })
}

/// Moment and curvature constants of the joint distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct KappaEstimates {
    /// Largest node sample mean.
    pub kappa_m: f64,
    /// Largest node sample second moment.
    pub kappa_v: f64,
    /// `max_{|u| <= 1} d^2 A / d theta_s^2` at `theta_s + u`, over nodes; the
    /// variance of `x_s` under the exactly enumerated tilted distribution.
    pub kappa_h_joint: Option<f64>,
    /// `max_u d^2 Abar_s / d eta^2`, the variance of `x_s^2` under the tilt
    /// `exp(u x_s^2)`. Only tilts that keep the distribution normalizable are
    /// used: all of `[-1, 1]` for binary data, `[-1, 0]` for counts.
    pub kappa_h_bar: Option<f64>,
}

/// Points in `[-1, 1]` (or the admissible part) at which tilted variances are evaluated.
const TILT_POINTS: usize = 41;

/// Empirical moments from `data`; curvature constants by exact enumeration
/// for discrete families at `p <= 3` (`None` otherwise).
pub fn kappa_estimates<T: Scalar>(model: &PairwiseModel<T>, data: &SampleMatrix<T>, value_cap: u32) -> Result<KappaEstimates> {
    let n = data.n().max(1) as f64;
    let mut kappa_m = f64::NEG_INFINITY;
    let mut kappa_v = f64::NEG_INFINITY;
    for j in 0..data.p() {
        let col = data.column(j);
        kappa_m = kappa_m.max(col.iter().map(|x| x.as_f64()).sum::<f64>() / n);
        kappa_v = kappa_v.max(col.iter().map(|x| x.as_f64().powi(2)).sum::<f64>() / n);
    }
    let bar_range = match model.family().kind {
        FamilyKind::Ising => Some((-1.0, 1.0)),
        FamilyKind::Poisson => Some((-1.0, 0.0)),
        _ => None,
    };
    let (kappa_h_joint, kappa_h_bar) = match bar_range {
        Some(range) if model.p() <= 3 => {
            let pmf = model.exact_joint_pmf(value_cap)?;
            let mut joint = f64::NEG_INFINITY;
            let mut bar = f64::NEG_INFINITY;
            for s in 0..model.p() {
                joint = joint.max(max_tilted_variance(&pmf, s, (-1.0, 1.0), |x| x, |x| x));
                bar = bar.max(max_tilted_variance(&pmf, s, range, |x| x * x, |x| x * x));
            }
            (Some(joint), Some(bar))
        }
        _ => (None, None),
    };
    Ok(KappaEstimates {
        kappa_m,
        kappa_v,
        kappa_h_joint,
        kappa_h_bar,
    })
}

/// `max_u Var_u[g(x_s)]` where the state weights are tilted by `exp(u tilt(x_s))`.
fn max_tilted_variance<T: Scalar>(
    pmf: &JointPmf<T>,
    s: usize,
    range: (f64, f64),
    tilt: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
) -> f64 {
    let logp: Vec<f64> = pmf.probs.iter().map(|p| p.as_f64().ln()).collect();
    let xs: Vec<f64> = pmf.states.iter().map(|st| f64::from(st[s])).collect();
    (0..TILT_POINTS)
        .map(|k| {
            let u = range.0 + (range.1 - range.0) * k as f64 / (TILT_POINTS - 1) as f64;
            let logw: Vec<f64> = logp.iter().zip(&xs).map(|(l, &x)| l + u * tilt(x)).collect();
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = w.iter().sum();
            let mean = w.iter().zip(&xs).map(|(w, &x)| w * g(x)).sum::<f64>() / z;
            w.iter().zip(&xs).map(|(w, &x)| w * (g(x) - mean).powi(2)).sum::<f64>() / z
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `node,quantity,value` rows; graph-wide quantities use node `all`.
pub fn format_report_csv(
    conditions: &[ConditionReport],
    tails: Option<&TailReport>,
    kappas: Option<&KappaEstimates>,
) -> String {
    let mut out = String::from("node,quantity,value\n");
    for r in conditions {
        let rows: [(&str, f64); 8] = [
            ("degree", r.degree as f64),
            ("lambda_min_qss", r.lambda_min_qss),
            ("lambda_max_qss", r.lambda_max_qss),
            ("condition_number", r.condition_number),
            ("lambda_max_empirical", r.lambda_max_empirical),
            ("incoherence", r.incoherence),
            ("alpha_implied", r.alpha_implied),
            ("singular", if r.singular { 1.0 } else { 0.0 }),
        ];
        for (name, v) in rows {
            let _ = writeln!(out, "{},{name},{v}", r.node);
        }
    }
    if let Some(t) = tails {
        for nt in &t.nodes {
            let _ = writeln!(out, "{},mean_square,{}", nt.node, nt.mean_square);
            let _ = writeln!(out, "{},max_abs,{}", nt.node, nt.max_abs);
            let _ = writeln!(out, "{},block_exceedance,{}", nt.node, nt.block_exceedance);
        }
        let _ = writeln!(out, "all,xi1_bound,{}", t.xi1_bound);
        let _ = writeln!(out, "all,xi1_holds,{}", u8::from(t.xi1_holds));
    }
    if let Some(k) = kappas {
        let _ = writeln!(out, "all,kappa_m,{}", k.kappa_m);
        let _ = writeln!(out, "all,kappa_v,{}", k.kappa_v);
        if let Some(v) = k.kappa_h_joint {
            let _ = writeln!(out, "all,kappa_h_joint,{v}");
        }
        if let Some(v) = k.kappa_h_bar {
            let _ = writeln!(out, "all,kappa_h_bar,{v}");
        }
    }
    out
}
