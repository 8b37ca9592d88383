//! Regularization selection by subsample edge stability (StARS).

use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{fit_all_nodes_path, geometric_grid, graph_lambda_max, SolverOptions};
use crate::families::{DomainConstraint, FamilySpec};
use crate::model::SampleMatrix;
use crate::recovery::{stitch, StitchRule};
use crate::sampler::chain_rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct StarsConfig<T> {
    /// Number of subsamples.
    pub subsamples: usize,
    /// Rows per subsample; `None` means `floor(10 sqrt(n))`, capped at `n`.
    pub subsample_size: Option<usize>,
    /// Instability threshold.
    pub beta: T,
    /// Decreasing lambda grid; `None` builds a geometric grid from the largest
    /// lambda max over the full sample and every subsample.
    pub lambdas: Option<Vec<T>>,
    pub grid_count: usize,
    pub grid_ratio: T,
    pub rule: StitchRule,
    pub seed: u64,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for StarsConfig<T> {
    fn default() -> Self {
        Self {
            subsamples: 20,
            subsample_size: None,
            beta: T::lit(0.05),
            lambdas: None,
            grid_count: 20,
            grid_ratio: T::lit(0.05),
            rule: StitchRule::Or,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl<T: Scalar> StarsConfig<T> {
    pub fn resolved_subsample_size(&self, n: usize) -> usize {
        self.subsample_size
            .unwrap_or_else(|| (10.0 * (n as f64).sqrt()).floor() as usize)
            .min(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstabilityPoint<T> {
    pub lambda: T,
    pub instability: T,
    /// Running maximum of the instability from the sparsest end of the grid.
    pub monotone: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarsResult<T> {
    pub lambda_star: T,
    pub index: usize,
    pub curve: Vec<InstabilityPoint<T>>,
    /// False when no grid point met the threshold; `lambda_star` is then the
    /// most regularized grid value.
    pub stable: bool,
    pub subsample_indices: Vec<Vec<usize>>,
}

/// Instability of an edge selected with frequency `freq`: `2 freq (1 - freq)`.
#[inline]
pub fn edge_instability<T: Scalar>(freq: T) -> T {
    T::lit(2.0) * freq * (T::one() - freq)
}

/// Chooses lambda as the least regularized grid value whose monotonized
/// total instability stays at or below `beta`.
pub fn stars_select<T: Scalar>(
    data: &SampleMatrix<T>,
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
    config: &StarsConfig<T>,
) -> Result<StarsResult<T>> {
    let n = data.n();
    let p = data.p();
    if n < 20 {
        return Err(Error::InvalidArgument(format!("stability selection needs n >= 20, got {n}")));
    }
    if p < 2 {
        return Err(Error::InvalidArgument("stability selection needs p >= 2".into()));
    }
    if !(config.beta > T::zero() && config.beta < T::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 0.5), got {}", config.beta)));
    }
    if config.subsamples == 0 {
        return Err(Error::InvalidArgument("need at least one subsample".into()));
    }
    let b = config.resolved_subsample_size(n);
    if b == 0 {
        return Err(Error::InvalidArgument("subsample size must be positive".into()));
    }
    let subsample_indices: Vec<Vec<usize>> = (0..config.subsamples)
        .map(|k| {
            let mut rng = chain_rng(config.seed, k as u64);
            let mut idx = sample(&mut rng, n, b).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    let subsamples: Vec<SampleMatrix<T>> = subsample_indices.iter().map(|idx| data.select_rows(idx)).collect();

    let lambdas = match &config.lambdas {
        Some(l) => {
            if l.is_empty() || l.windows(2).any(|w| w[1] > w[0]) || l.iter().any(|&v| !(v > T::zero())) {
                return Err(Error::InvalidArgument("lambda grid must be positive and decreasing".into()));
            }
            l.clone()
        }
        None => {
            // Start where every subsample graph is empty, so the curve starts at zero.
            let mut top = graph_lambda_max(data, family, constraint)?;
            for sub in &subsamples {
                top = top.max(graph_lambda_max(sub, family, constraint)?);
            }
            geometric_grid(top, config.grid_count, config.grid_ratio)?
        }
    };

    let pairs = p * (p - 1) / 2;
    let pair_index = |s: usize, t: usize| s * p - s * (s + 1) / 2 + (t - s - 1);
    // selected[k][lambda][pair]
    let selected: Vec<Vec<Vec<bool>>> = subsamples
        .par_iter()
        .map(|sub| {
            let path = fit_all_nodes_path(sub, &lambdas, family, constraint, &config.solver)?;
            path.iter()
                .map(|fits| {
                    let edges = stitch(fits, p, config.rule)?;
                    let mut row = vec![false; pairs];
                    for (s, t) in edges {
                        row[pair_index(s, t)] = true;
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let total = T::from_usize_lossy(config.subsamples);
    let mut curve = Vec::with_capacity(lambdas.len());
    let mut running = T::zero();
    for (j, &lambda) in lambdas.iter().enumerate() {
        let mut sum = T::zero();
        for e in 0..pairs {
            let hits = selected.iter().filter(|sub| sub[j][e]).count();
            sum = sum + edge_instability(T::from_usize_lossy(hits) / total);
        }
        let instability = sum / T::from_usize_lossy(pairs);
        running = running.max(instability);
        curve.push(InstabilityPoint {
            lambda,
            instability,
            monotone: running,
        });
    }

    let chosen = curve.iter().rposition(|pt| pt.monotone <= config.beta);
    let (index, stable) = match chosen {
        Some(i) => (i, true),
        None => (0, false),
    };
    Ok(StarsResult {
        lambda_star: lambdas[index],
        index,
        curve,
        stable,
        subsample_indices,
    })
}

/// `lambda,D,D_monotone` rows.
pub fn format_curve_csv<T: Scalar>(curve: &[InstabilityPoint<T>]) -> String {
    let mut out = String::from("lambda,D,D_monotone\n");
    for pt in curve {
        let _ = writeln!(
            out,
            "{},{},{}",
            pt.lambda.as_f64(),
            pt.instability.as_f64(),
            pt.monotone.as_f64()
        );
    }
    out
}
