//! Univariate exponential families used as node-conditional distributions.
//!
//! Each family is described through the log-partition function `D(eta)` of its
//! node-conditional density `exp{T(x) eta + C(x) - D(eta)}` together with the
//! first three derivatives. The sufficient statistic `T` is `x` for the
//! Ising and Poisson families, `x / sigma^2` for the Gaussian and `-x` for the
//! exponential family. The exponential family is parameterised by its rate,
//! so stored parameters are the (nonnegative) rate contributions.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default rate floor for exponential node parameters.
pub const DEFAULT_EXPONENTIAL_A0: f64 = 0.05;
/// Default cap on Poisson node parameters.
pub const DEFAULT_POISSON_A0: f64 = 2.5;
/// Default largest canonical parameter at which `exp(eta)` is evaluated.
pub const DEFAULT_ETA_MAX: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilyKind<T> {
    Gaussian { sigma: T },
    Ising,
    Poisson,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    Gaussian,
    Ising,
    Poisson,
    Exponential,
}

impl FamilyTag {
    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Gaussian => "gaussian",
            FamilyTag::Ising => "ising",
            FamilyTag::Poisson => "poisson",
            FamilyTag::Exponential => "exponential",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Some(FamilyTag::Gaussian),
            "ising" | "bernoulli" => Some(FamilyTag::Ising),
            "poisson" => Some(FamilyTag::Poisson),
            "exponential" => Some(FamilyTag::Exponential),
            _ => None,
        }
    }

    pub fn support(self) -> Support {
        match self {
            FamilyTag::Gaussian => Support::Reals,
            FamilyTag::Ising => Support::Binary01,
            FamilyTag::Poisson => Support::NonnegativeIntegers,
            FamilyTag::Exponential => Support::NonnegativeReals,
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Reals,
    Binary01,
    NonnegativeIntegers,
    NonnegativeReals,
}

impl Support {
    pub fn contains<T: Scalar>(self, x: T) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            Support::Reals => true,
            Support::Binary01 => x == T::zero() || x == T::one(),
            Support::NonnegativeIntegers => x >= T::zero() && x.fract() == T::zero(),
            Support::NonnegativeReals => x >= T::zero(),
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, Support::Binary01 | Support::NonnegativeIntegers)
    }
}

/// A univariate exponential family together with its numeric overflow policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilySpec<T> {
    pub kind: FamilyKind<T>,
    /// Poisson canonical parameters above this value raise [`Error::Overflow`].
    pub eta_max: T,
}

impl<T: Scalar> FamilySpec<T> {
    pub fn gaussian(sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self::with_kind(FamilyKind::Gaussian { sigma }))
    }

    pub fn ising() -> Self {
        Self::with_kind(FamilyKind::Ising)
    }

    pub fn poisson() -> Self {
        Self::with_kind(FamilyKind::Poisson)
    }

    pub fn exponential() -> Self {
        Self::with_kind(FamilyKind::Exponential)
    }

    /// Family with default settings (unit Gaussian variance).
    pub fn from_tag(tag: FamilyTag) -> Self {
        match tag {
            FamilyTag::Gaussian => Self::with_kind(FamilyKind::Gaussian { sigma: T::one() }),
            FamilyTag::Ising => Self::ising(),
            FamilyTag::Poisson => Self::poisson(),
            FamilyTag::Exponential => Self::exponential(),
        }
    }

    fn with_kind(kind: FamilyKind<T>) -> Self {
        Self {
            kind,
            eta_max: T::lit(DEFAULT_ETA_MAX),
        }
    }

    pub fn tag(&self) -> FamilyTag {
        match self.kind {
            FamilyKind::Gaussian { .. } => FamilyTag::Gaussian,
            FamilyKind::Ising => FamilyTag::Ising,
            FamilyKind::Poisson => FamilyTag::Poisson,
            FamilyKind::Exponential => FamilyTag::Exponential,
        }
    }

    pub fn name(&self) -> &'static str {
        self.tag().name()
    }

    pub fn support(&self) -> Support {
        self.tag().support()
    }

    /// Gaussian standard deviation, `1` for every other family.
    pub fn sigma(&self) -> T {
        match self.kind {
            FamilyKind::Gaussian { sigma } => sigma,
            _ => T::one(),
        }
    }

    /// Whether `eta` lies in the natural parameter space.
    pub fn in_eta_domain(&self, eta: T) -> bool {
        match self.kind {
            FamilyKind::Exponential => eta > T::zero() && eta.is_finite(),
            _ => eta.is_finite(),
        }
    }

    /// Checks the domain and, for Poisson, the overflow cap.
    #[inline]
    pub fn check_eta(&self, eta: T) -> Result<()> {
        if !self.in_eta_domain(eta) {
            return Err(Error::Domain {
                family: self.name(),
                eta: eta.as_f64(),
            });
        }
        if matches!(self.kind, FamilyKind::Poisson) && eta > self.eta_max {
            return Err(Error::Overflow {
                family: self.name(),
                eta: eta.as_f64(),
            });
        }
        Ok(())
    }

    /// Sufficient statistic `T(x)` paired with the canonical parameter.
    #[inline]
    pub fn statistic(&self, x: T) -> T {
        match self.kind {
            FamilyKind::Gaussian { sigma } => x / (sigma * sigma),
            FamilyKind::Exponential => -x,
            FamilyKind::Ising | FamilyKind::Poisson => x,
        }
    }

    /// Node-conditional log-partition `D(eta)`.
    pub fn log_partition(&self, eta: T) -> Result<T> {
        self.check_eta(eta)?;
        Ok(self.log_partition_unchecked(eta))
    }

    pub fn d1(&self, eta: T) -> Result<T> {
        self.check_eta(eta)?;
        Ok(self.d1_unchecked(eta))
    }

    pub fn d2(&self, eta: T) -> Result<T> {
        self.check_eta(eta)?;
        Ok(self.d2_unchecked(eta))
    }

    pub fn d3(&self, eta: T) -> Result<T> {
        self.check_eta(eta)?;
        Ok(self.d3_unchecked(eta))
    }

    #[inline]
    pub(crate) fn log_partition_unchecked(&self, eta: T) -> T {
        match self.kind {
            FamilyKind::Gaussian { sigma } => eta * eta / (T::lit(2.0) * sigma * sigma),
            FamilyKind::Ising => softplus(eta),
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Exponential => -eta.ln(),
        }
    }

    #[inline]
    pub(crate) fn d1_unchecked(&self, eta: T) -> T {
        match self.kind {
            FamilyKind::Gaussian { sigma } => eta / (sigma * sigma),
            FamilyKind::Ising => sigmoid(eta),
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Exponential => -eta.recip(),
        }
    }

    #[inline]
    pub(crate) fn d2_unchecked(&self, eta: T) -> T {
        match self.kind {
            FamilyKind::Gaussian { sigma } => (sigma * sigma).recip(),
            FamilyKind::Ising => {
                let m = sigmoid(eta);
                m * (T::one() - m)
            }
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Exponential => (eta * eta).recip(),
        }
    }

    #[inline]
    pub(crate) fn d3_unchecked(&self, eta: T) -> T {
        match self.kind {
            FamilyKind::Gaussian { .. } => T::zero(),
            FamilyKind::Ising => {
                let m = sigmoid(eta);
                m * (T::one() - m) * (T::one() - T::lit(2.0) * m)
            }
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Exponential => -T::lit(2.0) / (eta * eta * eta),
        }
    }

    /// Mean of `X` (not of the statistic) under canonical parameter `eta`.
    pub fn mean(&self, eta: T) -> Result<T> {
        self.check_eta(eta)?;
        Ok(match self.kind {
            FamilyKind::Gaussian { .. } => eta,
            FamilyKind::Ising => sigmoid(eta),
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Exponential => eta.recip(),
        })
    }

    /// Inverse of [`FamilySpec::mean`]; degenerate means are clamped to `|eta| <= 30`.
    pub fn eta_for_mean(&self, mean: T) -> T {
        let cap = T::lit(30.0);
        let eta = match self.kind {
            FamilyKind::Gaussian { .. } => mean,
            FamilyKind::Ising => (mean / (T::one() - mean)).ln(),
            FamilyKind::Poisson => mean.ln(),
            FamilyKind::Exponential => mean.recip(),
        };
        if eta.is_nan() {
            T::zero()
        } else {
            eta.max(-cap).min(cap)
        }
    }

    /// Bounds `(kappa1, kappa3)` on `|D''|` and `|D'''|` over the constrained region.
    pub fn kappa_bounds(&self, constraint: &DomainConstraint<T>) -> (T, T) {
        match self.kind {
            FamilyKind::Gaussian { sigma } => ((sigma * sigma).recip(), T::zero()),
            FamilyKind::Ising => (T::lit(0.25), T::lit(0.25)),
            FamilyKind::Exponential => {
                let a0 = constraint.a0;
                ((a0 * a0).recip(), T::lit(2.0) / (a0 * a0 * a0))
            }
            FamilyKind::Poisson => {
                let k = (constraint.a0 + T::one()).exp();
                (k, k)
            }
        }
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSign {
    Free,
    NonPositive,
    NonNegative,
}

impl EdgeSign {
    #[inline]
    pub fn admits<T: Scalar>(self, w: T) -> bool {
        match self {
            EdgeSign::Free => true,
            EdgeSign::NonPositive => w <= T::zero(),
            EdgeSign::NonNegative => w >= T::zero(),
        }
    }

    #[inline]
    pub fn project<T: Scalar>(self, w: T) -> T {
        match self {
            EdgeSign::Free => w,
            EdgeSign::NonPositive => w.min(T::zero()),
            EdgeSign::NonNegative => w.max(T::zero()),
        }
    }
}

/// Parameter region on which the joint model is normalizable and the
/// derivative bounds hold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainConstraint<T> {
    /// Inclusive lower bound on every node parameter.
    pub node_lower: Option<T>,
    /// Inclusive upper bound on every node parameter.
    pub node_upper: Option<T>,
    pub edge_sign: EdgeSign,
    pub a0: T,
}

impl<T: Scalar> DomainConstraint<T> {
    pub fn default_for(family: &FamilySpec<T>) -> Self {
        match family.kind {
            FamilyKind::Exponential => Self::exponential(T::lit(DEFAULT_EXPONENTIAL_A0)),
            FamilyKind::Poisson => Self::poisson(T::lit(DEFAULT_POISSON_A0)),
            FamilyKind::Gaussian { .. } | FamilyKind::Ising => Self {
                node_lower: None,
                node_upper: None,
                edge_sign: EdgeSign::Free,
                a0: T::one(),
            },
        }
    }

    fn exponential(a0: T) -> Self {
        Self {
            node_lower: Some(a0),
            node_upper: None,
            edge_sign: EdgeSign::NonNegative,
            a0,
        }
    }

    fn poisson(a0: T) -> Self {
        Self {
            node_lower: None,
            node_upper: Some(a0),
            edge_sign: EdgeSign::NonPositive,
            a0,
        }
    }

    /// Default constraint for `family` with margin `a0`.
    pub fn with_a0(family: &FamilySpec<T>, a0: T) -> Result<Self> {
        if !(a0 > T::zero()) || !a0.is_finite() {
            return Err(Error::InvalidArgument(format!("a0 must be positive, got {a0}")));
        }
        Ok(match family.kind {
            FamilyKind::Exponential => Self::exponential(a0),
            FamilyKind::Poisson => Self::poisson(a0),
            _ => Self {
                a0,
                ..Self::default_for(family)
            },
        })
    }

    #[inline]
    pub fn project_node(&self, v: T) -> T {
        let mut v = v;
        if let Some(lo) = self.node_lower {
            v = v.max(lo);
        }
        if let Some(hi) = self.node_upper {
            v = v.min(hi);
        }
        v
    }

    #[inline]
    pub fn node_ok(&self, v: T) -> bool {
        self.node_lower.is_none_or(|lo| v >= lo) && self.node_upper.is_none_or(|hi| v <= hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NodeBelow { node: usize, value: f64, bound: f64 },
    NodeAbove { node: usize, value: f64, bound: f64 },
    EdgeSign { s: usize, t: usize, value: f64, required: EdgeSign },
    NonFinite { what: String },
    /// Gaussian precision matrix `I - Theta` is not positive definite.
    NotPositiveDefinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeBelow { node, value, bound } => {
                write!(f, "node {node} parameter {value} below lower bound {bound}")
            }
            Violation::NodeAbove { node, value, bound } => {
                write!(f, "node {node} parameter {value} above upper bound {bound}")
            }
            Violation::EdgeSign { s, t, value, required } => {
                write!(f, "edge ({s},{t}) weight {value} violates {required:?}")
            }
            Violation::NonFinite { what } => write!(f, "{what} is not finite"),
            Violation::NotPositiveDefinite => {
                f.write_str("gaussian precision matrix is not positive definite")
            }
        }
    }
}

/// Lists every parameter that falls outside `constraint`. Gaussian models
/// are additionally checked for a positive definite precision matrix.
pub fn check_domain<T: Scalar>(
    node_params: &[T],
    edges: impl IntoIterator<Item = (usize, usize, T)>,
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (s, &v) in node_params.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::NonFinite {
                what: format!("node {s} parameter"),
            });
            continue;
        }
        if let Some(lo) = constraint.node_lower {
            if v < lo {
                out.push(Violation::NodeBelow {
                    node: s,
                    value: v.as_f64(),
                    bound: lo.as_f64(),
                });
            }
        }
        if let Some(hi) = constraint.node_upper {
            if v > hi {
                out.push(Violation::NodeAbove {
                    node: s,
                    value: v.as_f64(),
                    bound: hi.as_f64(),
                });
            }
        }
    }
    let p = node_params.len();
    let gaussian = matches!(family.kind, FamilyKind::Gaussian { .. });
    let mut precision = gaussian.then(|| DMatrix::<f64>::identity(p, p));
    for (s, t, w) in edges {
        if !w.is_finite() {
            out.push(Violation::NonFinite {
                what: format!("edge ({s},{t}) weight"),
            });
            continue;
        }
        if !constraint.edge_sign.admits(w) {
            out.push(Violation::EdgeSign {
                s,
                t,
                value: w.as_f64(),
                required: constraint.edge_sign,
            });
        }
        if let Some(k) = precision.as_mut() {
            if s < p && t < p {
                k[(s, t)] -= w.as_f64();
                k[(t, s)] -= w.as_f64();
            }
        }
    }
    if let Some(k) = precision {
        if p > 0 && k.cholesky().is_none() {
            out.push(Violation::NotPositiveDefinite);
        }
    }
    out
}
