//! Pairwise exponential-family graphical models, sample matrices and the
//! node-conditional negative log-likelihood.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::families::{check_domain, DomainConstraint, FamilyKind, FamilySpec, FamilyTag};
use crate::scalar::Scalar;

/// Undirected edge set; every pair is stored as `(min, max)`.
pub type EdgeSet = BTreeSet<(usize, usize)>;

/// Normalizes an unordered pair to `(min, max)`.
#[inline]
pub fn edge_key(s: usize, t: usize) -> (usize, usize) {
    if s < t {
        (s, t)
    } else {
        (t, s)
    }
}

/// Symmetric sparse edge weights, sorted by `(s, t)` with `s < t`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap<T> {
    entries: Vec<((usize, usize), T)>,
}

impl<T: Scalar> EdgeMap<T> {
    /// Builds the map from `(s, t, weight)` triples in either orientation.
    /// Self-edges, out-of-range nodes and duplicate pairs are rejected.
    pub fn from_triples(p: usize, triples: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut entries: Vec<((usize, usize), T)> = Vec::new();
        for (s, t, w) in triples {
            if s == t {
                return Err(Error::InvalidArgument(format!("self-edge ({s},{s})")));
            }
            if s >= p || t >= p {
                return Err(Error::InvalidArgument(format!(
                    "edge ({s},{t}) out of range for p = {p}"
                )));
            }
            entries.push((edge_key(s, t), w));
        }
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!("duplicate edge {:?}", w[0].0)));
        }
        Ok(Self { entries })
    }

    /// Weight of `(s, t)` in either orientation; zero when absent.
    pub fn get(&self, s: usize, t: usize) -> T {
        let key = edge_key(s, t);
        self.entries
            .binary_search_by(|e| e.0.cmp(&key))
            .map(|i| self.entries[i].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.entries.iter().map(|&((s, t), w)| (s, t, w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A pairwise graphical model with node-conditionals from one family.
#[derive(Clone, Debug)]
pub struct PairwiseModel<T> {
    family: FamilySpec<T>,
    constraint: DomainConstraint<T>,
    node_params: Vec<T>,
    edges: EdgeMap<T>,
    adjacency: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> PairwiseModel<T> {
    /// Builds a model, rejecting parameters outside `constraint`.
    pub fn new(
        family: FamilySpec<T>,
        constraint: DomainConstraint<T>,
        node_params: Vec<T>,
        edges: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let model = Self::new_unchecked(family, constraint, node_params, edges)?;
        let violations = check_domain(&model.node_params, model.edges.iter(), &family, &constraint);
        if !violations.is_empty() {
            return Err(Error::Infeasible {
                family: family.name(),
                violations,
            });
        }
        Ok(model)
    }

    /// Builds a model without the domain check; structural checks still apply.
    pub fn new_unchecked(
        family: FamilySpec<T>,
        constraint: DomainConstraint<T>,
        node_params: Vec<T>,
        edges: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let p = node_params.len();
        if p == 0 {
            return Err(Error::InvalidArgument("model needs at least one node".into()));
        }
        let edges = EdgeMap::from_triples(p, edges)?;
        let mut adjacency = vec![Vec::new(); p];
        for (s, t, w) in edges.iter() {
            adjacency[s].push((t, w));
            adjacency[t].push((s, w));
        }
        for a in &mut adjacency {
            a.sort_by_key(|&(t, _)| t);
        }
        Ok(Self {
            family,
            constraint,
            node_params,
            edges,
            adjacency,
        })
    }

    pub fn p(&self) -> usize {
        self.node_params.len()
    }

    pub fn family(&self) -> &FamilySpec<T> {
        &self.family
    }

    pub fn constraint(&self) -> &DomainConstraint<T> {
        &self.constraint
    }

    pub fn node_params(&self) -> &[T] {
        &self.node_params
    }

    pub fn edges(&self) -> &EdgeMap<T> {
        &self.edges
    }

    /// Stored neighbors of `s` with their weights, sorted by node.
    pub fn neighbors(&self, s: usize) -> &[(usize, T)] {
        &self.adjacency[s]
    }

    pub fn edge_set(&self) -> EdgeSet {
        self.edges.iter().map(|(s, t, _)| (s, t)).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Row-major dense `p x p` matrix of edge weights, zero diagonal.
    pub fn dense_theta(&self) -> Vec<T> {
        let p = self.p();
        let mut m = vec![T::zero(); p * p];
        for (s, t, w) in self.edges.iter() {
            m[s * p + t] = w;
            m[t * p + s] = w;
        }
        m
    }

    /// `theta_s + sum_t theta_st x_t` over the stored neighbors of `s`.
    #[inline]
    pub fn canonical_param(&self, s: usize, x: &[T]) -> T {
        self.adjacency[s]
            .iter()
            .fold(self.node_params[s], |acc, &(t, w)| acc + w * x[t])
    }

    /// Unnormalized log-density including the base measure.
    fn log_weight(&self, x: &[T]) -> T {
        let mut e = T::zero();
        for (s, &xs) in x.iter().enumerate() {
            e = e + self.node_params[s] * xs + self.base_measure(xs);
        }
        for (s, t, w) in self.edges.iter() {
            e = e + w * x[s] * x[t];
        }
        e
    }

    fn base_measure(&self, x: T) -> T {
        match self.family.kind {
            FamilyKind::Poisson => -ln_factorial(x),
            FamilyKind::Gaussian { sigma } => -x * x / (T::lit(2.0) * sigma * sigma),
            FamilyKind::Ising | FamilyKind::Exponential => T::zero(),
        }
    }

    /// Joint log-partition `A(theta)` by enumeration (discrete families),
    /// closed form (Gaussian) or quadrature (exponential).
    ///
    /// `value_cap` is the largest value enumerated per Poisson node. The
    /// returned `tail_bound` bounds the relative mass left outside the
    /// enumerated box or quadrature domain.
    pub fn exact_log_partition(&self, value_cap: u32) -> Result<ExactLogPartition<T>> {
        match self.family.kind {
            FamilyKind::Ising | FamilyKind::Poisson => {
                let states = self.enumerate_states(value_cap)?;
                let logw: Vec<T> = states.iter().map(|x| self.log_weight(x)).collect();
                let value = log_sum_exp(&logw);
                let tail_bound = self.poisson_tail_bound(value_cap, value);
                Ok(ExactLogPartition { value, tail_bound })
            }
            FamilyKind::Gaussian { sigma } => self.gaussian_log_partition(sigma),
            FamilyKind::Exponential => self.exponential_log_partition(),
        }
    }

    /// Exact probability table for discrete families (truncated and
    /// renormalized for Poisson).
    pub fn exact_joint_pmf(&self, value_cap: u32) -> Result<JointPmf<T>> {
        if !self.family.support().is_discrete() {
            return Err(Error::InvalidArgument(format!(
                "exact pmf requires a discrete family, got {}",
                self.family.name()
            )));
        }
        let states = self.enumerate_states(value_cap)?;
        let logw: Vec<T> = states.iter().map(|x| self.log_weight(x)).collect();
        let log_z = log_sum_exp(&logw);
        let probs = logw.iter().map(|&l| (l - log_z).exp()).collect();
        let tail_bound = self.poisson_tail_bound(value_cap, log_z);
        Ok(JointPmf {
            states: states
                .into_iter()
                .map(|x| x.into_iter().map(|v| v.to_u32().unwrap_or(0)).collect())
                .collect(),
            probs,
            tail_bound,
        })
    }

    fn enumerate_states(&self, value_cap: u32) -> Result<Vec<Vec<T>>> {
        let p = self.p();
        let levels = match self.family.kind {
            FamilyKind::Ising => {
                if p > 12 {
                    return Err(Error::TooLarge(format!("ising enumeration needs p <= 12, got {p}")));
                }
                2usize
            }
            FamilyKind::Poisson => {
                if p > 4 {
                    return Err(Error::TooLarge(format!("poisson enumeration needs p <= 4, got {p}")));
                }
                let levels = value_cap as usize + 1;
                if levels.checked_pow(p as u32).is_none_or(|n| n > MAX_POISSON_STATES) {
                    return Err(Error::TooLarge(format!(
                        "{levels}^{p} poisson states exceed {MAX_POISSON_STATES}"
                    )));
                }
                if let Some((s, t, w)) = self.edges.iter().find(|e| e.2 > T::zero()) {
                    return Err(Error::NotNormalizable(format!(
                        "poisson edge ({s},{t}) has positive weight {w}"
                    )));
                }
                levels
            }
            _ => unreachable!("continuous families are not enumerated"),
        };
        let total = levels.pow(p as u32);
        let mut states = Vec::with_capacity(total);
        for mut code in 0..total {
            let mut x = vec![T::zero(); p];
            for v in x.iter_mut() {
                *v = T::from_usize_lossy(code % levels);
                code /= levels;
            }
            states.push(x);
        }
        Ok(states)
    }

    // With nonpositive edges every joint weight is dominated by the product of
    // independent Poisson weights exp(theta_s x_s) / x_s!, so the mass outside
    // the box is at most sum_s tail_s * prod_{t != s} exp(exp(theta_t)).
    fn poisson_tail_bound(&self, value_cap: u32, log_z_trunc: T) -> T {
        if !matches!(self.family.kind, FamilyKind::Poisson) {
            return T::zero();
        }
        let rates: Vec<f64> = self.node_params.iter().map(|t| t.as_f64().exp()).collect();
        let log_full: f64 = rates.iter().sum();
        let mut bound = 0.0;
        for &mu in &rates {
            let log_tail = log_poisson_upper_tail(mu, value_cap);
            bound += (log_tail + log_full - log_z_trunc.as_f64()).exp();
        }
        T::lit(bound)
    }

    fn gaussian_log_partition(&self, sigma: T) -> Result<ExactLogPartition<T>> {
        let p = self.p();
        if p > 64 {
            return Err(Error::TooLarge(format!("gaussian closed form limited to p <= 64, got {p}")));
        }
        let s2 = sigma.as_f64().powi(2);
        let mut k = DMatrix::<f64>::identity(p, p) / s2;
        for (s, t, w) in self.edges.iter() {
            k[(s, t)] -= w.as_f64() / s2;
            k[(t, s)] -= w.as_f64() / s2;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::NotNormalizable("gaussian precision is not positive definite".into()))?;
        let b = DVector::from_iterator(p, self.node_params.iter().map(|t| t.as_f64() / s2));
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let quad = b.dot(&chol.solve(&b));
        let value = 0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det + 0.5 * quad;
        Ok(ExactLogPartition {
            value: T::lit(value),
            tail_bound: T::zero(),
        })
    }

    // The last coordinate integrates in closed form (1 / rate); the remaining
    // ones use composite Simpson on [0, EXPONENTIAL_BOX].
    fn exponential_log_partition(&self) -> Result<ExactLogPartition<T>> {
        let p = self.p();
        if p > 3 {
            return Err(Error::TooLarge(format!("exponential quadrature limited to p <= 3, got {p}")));
        }
        let theta: Vec<f64> = self.node_params.iter().map(|t| t.as_f64()).collect();
        if let Some(s) = theta.iter().position(|&t| t <= 0.0) {
            return Err(Error::NotNormalizable(format!(
                "exponential node {s} has nonpositive rate {}",
                theta[s]
            )));
        }
        if let Some((s, t, w)) = self.edges.iter().find(|e| e.2 < T::zero()) {
            return Err(Error::NotNormalizable(format!(
                "exponential edge ({s},{t}) has negative weight {w}"
            )));
        }
        let last = p - 1;
        let w: Vec<f64> = (0..p)
            .flat_map(|s| (0..p).map(move |t| (s, t)))
            .map(|(s, t)| if s == t { 0.0 } else { self.edges.get(s, t).as_f64() })
            .collect();
        let inner = |x: &[f64]| -> f64 {
            // x holds the first p - 1 coordinates
            let mut expo = 0.0;
            let mut rate = theta[last];
            for (s, &xs) in x.iter().enumerate() {
                expo -= theta[s] * xs;
                rate += w[s * p + last] * xs;
                for (t, &xt) in x.iter().enumerate().skip(s + 1) {
                    expo -= w[s * p + t] * xs * xt;
                }
            }
            expo.exp() / rate
        };
        let (nodes, weights) = simpson_rule(EXPONENTIAL_BOX, EXPONENTIAL_INTERVALS);
        let z = match p {
            1 => 1.0 / theta[0],
            2 => nodes
                .iter()
                .zip(&weights)
                .map(|(&a, &wa)| wa * inner(&[a]))
                .sum(),
            _ => {
                let mut acc = 0.0;
                for (&a, &wa) in nodes.iter().zip(&weights) {
                    for (&b, &wb) in nodes.iter().zip(&weights) {
                        acc += wa * wb * inner(&[a, b]);
                    }
                }
                acc
            }
        };
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NotNormalizable("exponential quadrature diverged".into()));
        }
        // Independent-rate envelope: outside the box along axis s the mass is
        // at most exp(-theta_s L) prod_t 1/theta_t.
        let envelope: f64 = theta.iter().map(|t| 1.0 / t).product();
        let tail: f64 = theta[..last]
            .iter()
            .map(|t| (-t * EXPONENTIAL_BOX).exp())
            .sum::<f64>()
            * envelope
            / z;
        Ok(ExactLogPartition {
            value: T::lit(z.ln()),
            tail_bound: T::lit(tail),
        })
    }
}

const MAX_POISSON_STATES: usize = 31 * 31 * 31 * 31;
const EXPONENTIAL_BOX: f64 = 40.0;
const EXPONENTIAL_INTERVALS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactLogPartition<T> {
    pub value: T,
    /// Upper bound on the relative mass outside the evaluated domain.
    pub tail_bound: T,
}

/// Exact probability table over enumerated states.
#[derive(Clone, Debug)]
pub struct JointPmf<T> {
    pub states: Vec<Vec<u32>>,
    pub probs: Vec<T>,
    pub tail_bound: T,
}

impl<T: Scalar> JointPmf<T> {
    pub fn probability(&self, state: &[u32]) -> T {
        self.states
            .iter()
            .position(|s| s == state)
            .map(|i| self.probs[i])
            .unwrap_or_else(T::zero)
    }
}

fn simpson_rule(upper: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(intervals.is_multiple_of(2));
    let h = upper / intervals as f64;
    let nodes = (0..=intervals).map(|k| k as f64 * h).collect();
    let weights = (0..=intervals)
        .map(|k| {
            let c = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

pub(crate) fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

pub(crate) fn ln_factorial<T: Scalar>(x: T) -> T {
    let k = x.to_u64().unwrap_or(0);
    T::lit(ln_factorial_u64(k))
}

fn ln_factorial_u64(k: u64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    if k < 64 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    // Stirling series, accurate to ~1e-15 relative for k >= 64.
    let x = k as f64;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
}

/// `log sum_{x > cap} mu^x / x!`.
fn log_poisson_upper_tail(mu: f64, cap: u32) -> f64 {
    let mut terms = Vec::new();
    let mut x = cap as u64 + 1;
    let mut log_term = x as f64 * mu.ln() - ln_factorial_u64(x);
    loop {
        terms.push(log_term);
        x += 1;
        let next = log_term + mu.ln() - (x as f64).ln();
        if (x as f64) > mu && next < terms[0] - 50.0 {
            break;
        }
        log_term = next;
    }
    log_sum_exp(&terms)
}

/// An `n x p` observation matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix<T> {
    family: FamilyTag,
    n: usize,
    p: usize,
    columns: Vec<T>,
}

impl<T: Scalar> SampleMatrix<T> {
    /// Builds the matrix from rows, checking every value against the family support.
    pub fn from_rows(family: FamilyTag, rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut columns = vec![T::zero(); n * p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} values, expected {p}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                columns[j * n + i] = v;
            }
        }
        Self::from_columns(family, n, p, columns)
    }

    /// Builds the matrix from column-major storage of length `n * p`.
    pub fn from_columns(family: FamilyTag, n: usize, p: usize, columns: Vec<T>) -> Result<Self> {
        if columns.len() != n * p {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for {n} x {p}, got {}",
                n * p,
                columns.len()
            )));
        }
        let support = family.support();
        if let Some(k) = columns.iter().position(|&v| !support.contains(v)) {
            return Err(Error::Support {
                path: String::new(),
                row: k % n.max(1),
                column: k / n.max(1),
                value: columns[k].as_f64(),
                family: family.name(),
            });
        }
        Ok(Self {
            family,
            n,
            p,
            columns,
        })
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.columns[j * self.n + i]
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[T] {
        &self.columns[j * self.n..(j + 1) * self.n]
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.p).map(|j| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        (0..self.n).map(|i| self.row(i))
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let mut columns = Vec::with_capacity(m * self.p);
        for j in 0..self.p {
            let col = self.column(j);
            columns.extend(indices.iter().map(|&i| col[i]));
        }
        Self {
            family: self.family,
            n: m,
            p: self.p,
            columns,
        }
    }
}

/// Parameters of one node-conditional regression: an intercept and one
/// weight per other node, ordered by node index with `s` skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeParams<T> {
    pub intercept: T,
    pub weights: Vec<T>,
}

impl<T: Scalar> NodeParams<T> {
    pub fn zeros(p: usize) -> Self {
        Self {
            intercept: T::zero(),
            weights: vec![T::zero(); p.saturating_sub(1)],
        }
    }

    /// Flattened coordinates: intercept first, then the weights.
    pub fn to_vec(&self) -> Vec<T> {
        std::iter::once(self.intercept)
            .chain(self.weights.iter().copied())
            .collect()
    }

    pub fn from_slice(v: &[T]) -> Self {
        Self {
            intercept: v[0],
            weights: v[1..].to_vec(),
        }
    }

    /// True node-conditional parameters of `s` under `model`.
    pub fn from_model(model: &PairwiseModel<T>, s: usize) -> Self {
        let weights = (0..model.p())
            .filter(|&t| t != s)
            .map(|t| model.edges().get(s, t))
            .collect();
        Self {
            intercept: model.node_params()[s],
            weights,
        }
    }
}

/// Maps a weight coordinate of node `s` back to the node it multiplies.
#[inline]
pub fn other_node(s: usize, k: usize) -> usize {
    if k < s {
        k
    } else {
        k + 1
    }
}

/// The node-conditional negative log-likelihood of node `s`,
/// `(1/n) sum_i [-T(x_is) eta_i + D(eta_i)]` with
/// `eta_i = intercept + sum_t w_t x_it`. The base measure is dropped, so
/// values are comparable only on fixed data.
#[derive(Clone, Debug)]
pub struct NodeProblem<'a, T> {
    family: FamilySpec<T>,
    data: &'a SampleMatrix<T>,
    s: usize,
    target: Vec<T>,
    inv_n: T,
}

impl<'a, T: Scalar> NodeProblem<'a, T> {
    pub fn new(family: FamilySpec<T>, data: &'a SampleMatrix<T>, s: usize) -> Result<Self> {
        if s >= data.p() {
            return Err(Error::InvalidArgument(format!("node {s} out of range for p = {}", data.p())));
        }
        if data.n() == 0 {
            return Err(Error::InvalidArgument("empty sample matrix".into()));
        }
        if data.family() != family.tag() {
            return Err(Error::InvalidArgument(format!(
                "data family {} does not match {}",
                data.family(),
                family.name()
            )));
        }
        let target = data.column(s).iter().map(|&x| family.statistic(x)).collect();
        Ok(Self {
            family,
            data,
            s,
            target,
            inv_n: T::from_usize_lossy(data.n()).recip(),
        })
    }

    pub fn node(&self) -> usize {
        self.s
    }

    pub fn family(&self) -> &FamilySpec<T> {
        &self.family
    }

    pub fn data(&self) -> &SampleMatrix<T> {
        self.data
    }

    /// Number of coordinates including the intercept.
    pub fn dim(&self) -> usize {
        self.data.p()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Column multiplying weight coordinate `k`.
    #[inline]
    pub fn feature(&self, k: usize) -> &[T] {
        self.data.column(other_node(self.s, k))
    }

    /// Writes `eta_i` for every sample into `out`.
    pub fn eta_into(&self, params: &NodeParams<T>, out: &mut [T]) {
        out.fill(params.intercept);
        for (k, &w) in params.weights.iter().enumerate() {
            if w != T::zero() {
                for (e, &x) in out.iter_mut().zip(self.feature(k)) {
                    *e = *e + w * x;
                }
            }
        }
    }

    pub fn eta(&self, params: &NodeParams<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n()];
        self.eta_into(params, &mut out);
        out
    }

    /// Loss from precomputed canonical parameters.
    pub fn nll_from_eta(&self, eta: &[T]) -> Result<T> {
        let mut acc = T::zero();
        for (&e, &y) in eta.iter().zip(&self.target) {
            self.family.check_eta(e)?;
            acc = acc - y * e + self.family.log_partition_unchecked(e);
        }
        Ok(acc * self.inv_n)
    }

    pub fn nll(&self, params: &NodeParams<T>) -> Result<T> {
        self.nll_from_eta(&self.eta(params))
    }

    /// Gradient (intercept first) from precomputed canonical parameters.
    pub fn gradient_from_eta(&self, eta: &[T], out: &mut [T]) -> Result<()> {
        let n = self.n();
        let mut resid = vec![T::zero(); n];
        for ((r, &e), &y) in resid.iter_mut().zip(eta).zip(&self.target) {
            self.family.check_eta(e)?;
            *r = self.family.d1_unchecked(e) - y;
        }
        out[0] = resid.iter().copied().sum::<T>() * self.inv_n;
        for k in 0..self.dim() - 1 {
            out[k + 1] = dot(&resid, self.feature(k)) * self.inv_n;
        }
        Ok(())
    }

    /// First and second derivative of the loss along the intercept.
    pub fn intercept_derivatives(&self, eta: &[T]) -> Result<(T, T)> {
        let mut g = T::zero();
        let mut h = T::zero();
        for (&e, &y) in eta.iter().zip(&self.target) {
            self.family.check_eta(e)?;
            g = g + self.family.d1_unchecked(e) - y;
            h = h + self.family.d2_unchecked(e);
        }
        Ok((g * self.inv_n, h * self.inv_n))
    }

    pub fn gradient(&self, params: &NodeParams<T>) -> Result<Vec<T>> {
        let mut g = vec![T::zero(); self.dim()];
        self.gradient_from_eta(&self.eta(params), &mut g)?;
        Ok(g)
    }

    /// Row-major Hessian `(1/n) sum_i D''(eta_i) z_i z_i^T`, `z_i = (1, x_i without s)`.
    pub fn hessian(&self, params: &NodeParams<T>) -> Result<Vec<T>> {
        let eta = self.eta(params);
        let mut weight = Vec::with_capacity(eta.len());
        for &e in &eta {
            self.family.check_eta(e)?;
            weight.push(self.family.d2_unchecked(e) * self.inv_n);
        }
        let d = self.dim();
        let ones = vec![T::one(); self.n()];
        let col = |k: usize| -> &[T] {
            if k == 0 {
                &ones
            } else {
                self.feature(k - 1)
            }
        };
        let mut h = vec![T::zero(); d * d];
        for a in 0..d {
            let ca = col(a);
            for b in a..d {
                let cb = col(b);
                let v = weight
                    .iter()
                    .zip(ca)
                    .zip(cb)
                    .fold(T::zero(), |acc, ((&w, &x), &y)| acc + w * x * y);
                h[a * d + b] = v;
                h[b * d + a] = v;
            }
        }
        Ok(h)
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
