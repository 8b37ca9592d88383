//! Structure learning for pairwise Markov random fields whose node-conditional
//! distributions are univariate exponential families (Gaussian, Ising,
//! Poisson, exponential).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` deliberately rejects NaN

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod families;
pub mod io;
pub mod model;
pub mod recovery;
pub mod sampler;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FamilySpec64 = families::FamilySpec<f64>;
pub type FamilySpec32 = families::FamilySpec<f32>;
pub type DomainConstraint64 = families::DomainConstraint<f64>;
pub type DomainConstraint32 = families::DomainConstraint<f32>;
pub type PairwiseModel64 = model::PairwiseModel<f64>;
pub type PairwiseModel32 = model::PairwiseModel<f32>;
pub type SampleMatrix64 = model::SampleMatrix<f64>;
pub type SampleMatrix32 = model::SampleMatrix<f32>;
pub type NeighborhoodFit64 = estimator::NeighborhoodFit<f64>;
pub type NeighborhoodFit32 = estimator::NeighborhoodFit<f32>;
pub type SolverOptions64 = estimator::SolverOptions<f64>;
pub type SolverOptions32 = estimator::SolverOptions<f32>;
pub type GibbsConfig64 = sampler::GibbsConfig<f64>;
pub type GibbsConfig32 = sampler::GibbsConfig<f32>;
pub type StarsConfig64 = selection::StarsConfig<f64>;
pub type StarsConfig32 = selection::StarsConfig<f32>;
pub type ExperimentConfig64 = experiments::ExperimentConfig<f64>;
