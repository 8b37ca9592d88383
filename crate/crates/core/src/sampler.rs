//! Gibbs sampling from pairwise models and lattice graph generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::error::{Error, Result};
use crate::families::{DomainConstraint, FamilyKind, FamilySpec};
use crate::model::{PairwiseModel, SampleMatrix};
use crate::scalar::Scalar;

/// Largest Poisson mean the sampler will draw from.
pub const POISSON_MEAN_CAP: f64 = 1e6;

/// Generator used for every chain.
pub type ChainRng = ChaCha8Rng;

/// Mixes a sequence of words into one 64-bit seed (splitmix64 finalizer chain).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &part in parts {
        h ^= part;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Independent generator for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChainRng {
    ChainRng::seed_from_u64(derive_seed(&[seed, chain]))
}

#[derive(Clone, Debug, PartialEq)]
pub enum GibbsInit<T> {
    Zeros,
    /// Each node starts at the family mean under its node parameter, moved into the support.
    FamilyMean,
    Custom(Vec<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig<T> {
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: GibbsInit<T>,
}

impl<T> Default for GibbsConfig<T> {
    fn default() -> Self {
        Self {
            burn_in: 500,
            thin: 10,
            seed: 0,
            init: GibbsInit::FamilyMean,
        }
    }
}

/// One draw from the univariate family with canonical parameter `eta`.
pub fn conditional_draw<T: Scalar, R: Rng + ?Sized>(family: &FamilySpec<T>, eta: T, rng: &mut R) -> Result<T> {
    family.check_eta(eta)?;
    let e = eta.as_f64();
    let v = match family.kind {
        FamilyKind::Gaussian { sigma } => {
            let normal = Normal::new(e, sigma.as_f64())
                .map_err(|err| Error::InvalidArgument(format!("normal draw: {err}")))?;
            normal.sample(rng)
        }
        FamilyKind::Ising => {
            let prob = crate::families::sigmoid(e);
            if rng.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        }
        FamilyKind::Poisson => {
            let mean = e.exp();
            if mean > POISSON_MEAN_CAP {
                return Err(Error::Overflow {
                    family: family.name(),
                    eta: e,
                });
            }
            if mean < 1e-300 {
                0.0
            } else {
                Poisson::new(mean)
                    .map_err(|err| Error::InvalidArgument(format!("poisson draw: {err}")))?
                    .sample(rng)
            }
        }
        FamilyKind::Exponential => Exp::new(e)
            .map_err(|err| Error::InvalidArgument(format!("exponential draw: {err}")))?
            .sample(rng),
    };
    Ok(T::lit(v))
}

fn initial_state<T: Scalar>(model: &PairwiseModel<T>, init: &GibbsInit<T>) -> Result<Vec<T>> {
    let p = model.p();
    let family = model.family();
    let support = family.support();
    let state = match init {
        GibbsInit::Zeros => vec![T::zero(); p],
        GibbsInit::Custom(x) => {
            if x.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "initial state has {} values, expected {p}",
                    x.len()
                )));
            }
            x.clone()
        }
        GibbsInit::FamilyMean => model
            .node_params()
            .iter()
            .map(|&theta| {
                let m = family.mean(theta)?;
                Ok(match support {
                    crate::families::Support::Binary01 => {
                        if m >= T::lit(0.5) {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    crate::families::Support::NonnegativeIntegers => m.round(),
                    _ => m,
                })
            })
            .collect::<Result<_>>()?,
    };
    if let Some(j) = state.iter().position(|&v| !support.contains(v)) {
        return Err(Error::InvalidArgument(format!(
            "initial value {} for node {j} outside the {} support",
            state[j],
            family.name()
        )));
    }
    Ok(state)
}

/// Systematic-scan Gibbs sampler: `burn_in` sweeps, then one row every
/// `thin` sweeps. Each sweep updates nodes `0..p` in order.
pub fn gibbs_sample<T: Scalar>(model: &PairwiseModel<T>, n: usize, config: &GibbsConfig<T>) -> Result<SampleMatrix<T>> {
    gibbs_sample_chain(model, n, config, 0)
}

/// As [`gibbs_sample`], on the substream of chain `chain`.
pub fn gibbs_sample_chain<T: Scalar>(
    model: &PairwiseModel<T>,
    n: usize,
    config: &GibbsConfig<T>,
    chain: u64,
) -> Result<SampleMatrix<T>> {
    if config.thin == 0 {
        return Err(Error::InvalidArgument("thin must be at least 1".into()));
    }
    let p = model.p();
    let family = *model.family();
    let mut rng = chain_rng(config.seed, chain);
    let mut x = initial_state(model, &config.init)?;
    let mut columns = vec![T::zero(); n * p];

    let mut sweep_no = 0usize;
    let mut sweep = |x: &mut [T], rng: &mut ChainRng| -> Result<()> {
        for s in 0..p {
            let eta = model.canonical_param(s, x);
            x[s] = conditional_draw(&family, eta, rng).map_err(|e| Error::Sweep {
                sweep: sweep_no,
                source: Box::new(e),
            })?;
        }
        sweep_no += 1;
        Ok(())
    };

    for _ in 0..config.burn_in {
        sweep(&mut x, &mut rng)?;
    }
    for i in 0..n {
        for _ in 0..config.thin {
            sweep(&mut x, &mut rng)?;
        }
        for (j, &v) in x.iter().enumerate() {
            columns[j * n + i] = v;
        }
    }
    SampleMatrix::from_columns(family.tag(), n, p, columns)
}

/// Side length of a square lattice with `p` nodes.
pub fn lattice_side(p: usize) -> Result<usize> {
    let k = (p as f64).sqrt().round() as usize;
    if k < 2 || k * k != p {
        return Err(Error::NotSquare(p));
    }
    Ok(k)
}

/// Four-nearest-neighbor grid edges without wraparound; node `r * k + c`.
pub fn lattice_graph(p: usize) -> Result<Vec<(usize, usize)>> {
    let k = lattice_side(p)?;
    let mut edges = Vec::with_capacity(2 * k * (k - 1));
    for r in 0..k {
        for c in 0..k {
            let v = r * k + c;
            if c + 1 < k {
                edges.push((v, v + 1));
            }
            if r + 1 < k {
                edges.push((v, v + k));
            }
        }
    }
    Ok(edges)
}

/// Lattice model with identical node and edge parameters.
pub fn build_lattice_model<T: Scalar>(
    p: usize,
    family: FamilySpec<T>,
    theta_s: T,
    theta_st: T,
    constraint: DomainConstraint<T>,
) -> Result<PairwiseModel<T>> {
    let edges = lattice_graph(p)?;
    PairwiseModel::new(
        family,
        constraint,
        vec![theta_s; p],
        edges.into_iter().map(|(s, t)| (s, t, theta_st)),
    )
}
