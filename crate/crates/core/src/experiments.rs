//! Lattice recovery study: success probability of exact graph recovery as a
//! function of the sample size and of the rescaled sample size
//! `beta = n / (c log p)`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{fit_all_nodes, kkt_gap, theory_lambda, NeighborhoodFit, SolverOptions};
use crate::families::{DomainConstraint, FamilySpec, FamilyTag};
use crate::model::NodeProblem;
use crate::recovery::{recover, stitch, RecoveryReport, StitchRule};
use crate::sampler::{build_lattice_model, derive_seed, gibbs_sample, lattice_side, GibbsConfig};
use crate::scalar::Scalar;
use crate::selection::{stars_select, StarsConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaRule<T> {
    /// `lambda = c sqrt(kappa1) sqrt(log p / n)`.
    Theory { c: T },
    /// Picks `c` from `c_grid` by pilot runs on the smallest `p`, then applies the theory rule.
    Calibrated { c_grid: Vec<T>, pilot_replicates: usize },
    /// Stability selection on every trial's sample.
    Stars(StarsConfig<T>),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig<T> {
    pub family: FamilySpec<T>,
    pub constraint: DomainConstraint<T>,
    pub p_values: Vec<usize>,
    pub theta_s: T,
    pub theta_st: T,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub lambda_rule: LambdaRule<T>,
    pub rule: StitchRule,
    /// Burn-in, thinning and initialization; the seed is replaced per trial.
    pub gibbs: GibbsConfig<T>,
    pub solver: SolverOptions<T>,
    pub master_seed: u64,
    /// Constant `c` in `beta = n / (c log p)`.
    pub rescale_c: f64,
    pub output_dir: Option<PathBuf>,
}

impl<T: Scalar> ExperimentConfig<T> {
    /// Desk-scale Poisson lattice study: p in {16, 36, 64}, 20 replicates,
    /// n geometric from 200 to 6000.
    pub fn desk_poisson() -> Self {
        let family = FamilySpec::poisson();
        Self::desk(family, T::lit(2.0), T::lit(-0.1), vec![16, 36, 64])
    }

    /// Desk-scale exponential lattice study: p in {16, 36}.
    pub fn desk_exponential() -> Self {
        let family = FamilySpec::exponential();
        Self::desk(family, T::lit(0.1), T::one(), vec![16, 36])
    }

    fn desk(family: FamilySpec<T>, theta_s: T, theta_st: T, p_values: Vec<usize>) -> Self {
        Self {
            constraint: DomainConstraint::default_for(&family),
            family,
            p_values,
            theta_s,
            theta_st,
            n_grid: geometric_n_grid(200, 6000, 12),
            replicates: 20,
            lambda_rule: LambdaRule::Calibrated {
                c_grid: [0.25, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 2.8, 4.0].iter().map(|&c| T::lit(c)).collect(),
                pilot_replicates: 5,
            },
            rule: StitchRule::Or,
            gibbs: GibbsConfig::default(),
            solver: SolverOptions {
                tol: T::lit(1e-6),
                ..SolverOptions::default()
            },
            master_seed: 20_130_101,
            rescale_c: 1.0,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidArgument("n grid must be nonempty and positive".into()));
        }
        if !(self.rescale_c > 0.0) {
            return Err(Error::InvalidArgument("rescale constant must be positive".into()));
        }
        for &p in &self.p_values {
            lattice_side(p)?;
            build_lattice_model(p, self.family, self.theta_s, self.theta_st, self.constraint)?;
        }
        if let LambdaRule::Calibrated { c_grid, pilot_replicates } = &self.lambda_rule {
            if c_grid.is_empty() || *pilot_replicates == 0 {
                return Err(Error::InvalidArgument("calibration needs a c grid and pilot replicates".into()));
            }
        }
        Ok(())
    }
}

/// `count` sample sizes spaced geometrically from `lo` to `hi`, rounded to integers.
pub fn geometric_n_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![hi];
    }
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (count - 1) as f64);
    let mut out: Vec<usize> = (0..count)
        .map(|k| (lo as f64 * ratio.powi(k as i32)).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Outcome of one simulated recovery.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub family: FamilyTag,
    pub p: usize,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub lambda: f64,
    pub report: Option<RecoveryReport>,
    /// OR and AND stitching agree.
    pub rules_agree: bool,
    pub all_converged: bool,
    /// Largest KKT gap recomputed from scratch over the converged node fits.
    pub max_kkt_gap: f64,
    /// Every returned iterate satisfies the sign and node-bound constraints.
    pub feasible: bool,
    pub error: Option<String>,
    pub elapsed: Duration,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.exact_recovery())
    }

    /// Equality on every field except timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.family == other.family
            && self.p == other.p
            && self.n == other.n
            && self.replicate == other.replicate
            && self.seed == other.seed
            && self.lambda.to_bits() == other.lambda.to_bits()
            && self.report == other.report
            && self.rules_agree == other.rules_agree
            && self.all_converged == other.all_converged
            && self.max_kkt_gap.to_bits() == other.max_kkt_gap.to_bits()
            && self.feasible == other.feasible
            && self.error == other.error
    }
}

/// Seed of trial `(family, p, n, replicate)` under `master`.
pub fn trial_seed(master: u64, family: FamilyTag, p: usize, n: usize, replicate: usize) -> u64 {
    let code = match family {
        FamilyTag::Gaussian => 1,
        FamilyTag::Ising => 2,
        FamilyTag::Poisson => 3,
        FamilyTag::Exponential => 4,
    };
    derive_seed(&[master, code, p as u64, n as u64, replicate as u64])
}

const PILOT_SALT: u64 = 0x5049_4c4f_5400_0000;

/// Runs one trial with the theory constant `c` (ignored for the StARS rule).
pub fn run_trial<T: Scalar>(
    config: &ExperimentConfig<T>,
    p: usize,
    n: usize,
    replicate: usize,
    c: T,
) -> TrialRecord {
    run_trial_seeded(config, p, n, replicate, c, config.master_seed)
}

fn run_trial_seeded<T: Scalar>(
    config: &ExperimentConfig<T>,
    p: usize,
    n: usize,
    replicate: usize,
    c: T,
    master: u64,
) -> TrialRecord {
    let start = Instant::now();
    let family = config.family.tag();
    let seed = trial_seed(master, family, p, n, replicate);
    let mut record = TrialRecord {
        family,
        p,
        n,
        replicate,
        seed,
        lambda: f64::NAN,
        report: None,
        rules_agree: false,
        all_converged: false,
        max_kkt_gap: f64::NAN,
        feasible: false,
        error: None,
        elapsed: Duration::ZERO,
    };
    if let Err(e) = trial_body(config, p, n, c, seed, &mut record) {
        record.error = Some(
            Error::Trial {
                family: family.name(),
                p,
                n,
                replicate,
                source: Box::new(e),
            }
            .to_string(),
        );
    }
    record.elapsed = start.elapsed();
    record
}

fn trial_body<T: Scalar>(
    config: &ExperimentConfig<T>,
    p: usize,
    n: usize,
    c: T,
    seed: u64,
    record: &mut TrialRecord,
) -> Result<()> {
    let model = build_lattice_model(p, config.family, config.theta_s, config.theta_st, config.constraint)?;
    let gibbs = GibbsConfig {
        seed,
        ..config.gibbs.clone()
    };
    let data = gibbs_sample(&model, n, &gibbs)?;
    let lambda = match &config.lambda_rule {
        LambdaRule::Stars(stars) => {
            let stars = StarsConfig {
                seed: derive_seed(&[seed, 1]),
                ..stars.clone()
            };
            stars_select(&data, &config.family, &config.constraint, &stars)?.lambda_star
        }
        _ => {
            let (kappa1, _) = config.family.kappa_bounds(&config.constraint);
            theory_lambda(n, p, kappa1, c)
        }
    };
    record.lambda = lambda.as_f64();
    let fits = fit_all_nodes(&data, lambda, &config.family, &config.constraint, &config.solver)?;
    let (gap, feasible) = certify(&fits, &data, &config.family, &config.constraint)?;
    record.max_kkt_gap = gap;
    record.feasible = feasible;
    record.all_converged = fits.iter().all(|f| f.converged);
    let truth = model.edge_set();
    let report = recover(&fits, p, config.rule, &truth)?;
    record.rules_agree = stitch(&fits, p, StitchRule::Or)? == stitch(&fits, p, StitchRule::And)?;
    record.report = Some(report);
    Ok(())
}

/// Recomputes the KKT gap of every converged fit from a fresh gradient and
/// checks constraint feasibility of every fit.
pub fn certify<T: Scalar>(
    fits: &[NeighborhoodFit<T>],
    data: &crate::model::SampleMatrix<T>,
    family: &FamilySpec<T>,
    constraint: &DomainConstraint<T>,
) -> Result<(f64, bool)> {
    let mut worst = 0.0f64;
    let mut feasible = true;
    for fit in fits {
        let params = fit.params();
        feasible &= constraint.node_ok(params.intercept)
            && params.weights.iter().all(|&w| constraint.edge_sign.admits(w));
        if fit.converged {
            let problem = NodeProblem::new(*family, data, fit.s)?;
            let grad = problem.gradient(&params)?;
            worst = worst.max(kkt_gap(&grad, &params, fit.lambda, constraint).as_f64());
        }
    }
    Ok((worst, feasible))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuccessRow {
    pub family: FamilyTag,
    pub p: usize,
    pub n: usize,
    pub beta: f64,
    pub success_count: usize,
    pub replicates: usize,
    pub success_prob: f64,
    pub mean_hamming: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuccessTable {
    pub rows: Vec<SuccessRow>,
}

impl SuccessTable {
    /// Aggregates trial records into one row per `(p, n)`, ordered by `p` then `n`.
    pub fn from_records(records: &[TrialRecord], rescale_c: f64) -> Self {
        let mut keys: Vec<(FamilyTag, usize, usize)> = records.iter().map(|r| (r.family, r.p, r.n)).collect();
        keys.sort_by_key(|&(f, p, n)| (f.name(), p, n));
        keys.dedup();
        let rows = keys
            .into_iter()
            .map(|(family, p, n)| {
                let group: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.family == family && r.p == p && r.n == n)
                    .collect();
                let success_count = group.iter().filter(|r| r.success()).count();
                let hams: Vec<f64> = group
                    .iter()
                    .filter_map(|r| r.report.as_ref().map(|rep| rep.hamming() as f64))
                    .collect();
                let mean_hamming = if hams.is_empty() {
                    f64::NAN
                } else {
                    hams.iter().sum::<f64>() / hams.len() as f64
                };
                SuccessRow {
                    family,
                    p,
                    n,
                    beta: n as f64 / (rescale_c * (p as f64).ln()),
                    success_count,
                    replicates: group.len(),
                    success_prob: success_count as f64 / group.len() as f64,
                    mean_hamming,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn p_values(&self) -> Vec<usize> {
        let mut ps: Vec<usize> = self.rows.iter().map(|r| r.p).collect();
        ps.sort_unstable();
        ps.dedup();
        ps
    }

    /// Rows for one `p`, ordered by `n`.
    pub fn curve(&self, p: usize) -> Vec<&SuccessRow> {
        let mut rows: Vec<&SuccessRow> = self.rows.iter().filter(|r| r.p == p).collect();
        rows.sort_by_key(|r| r.n);
        rows
    }

    /// Smallest grid `n` whose success probability reaches `level`.
    pub fn n_at_level(&self, p: usize, level: f64) -> Option<usize> {
        self.curve(p).into_iter().find(|r| r.success_prob >= level).map(|r| r.n)
    }

    /// `max_p (n_level(p) / log p) / min_p (n_level(p) / log p)`; `None`
    /// when some `p` never reaches `level`.
    pub fn alignment_ratio(&self, level: f64) -> Option<f64> {
        let scaled: Option<Vec<f64>> = self
            .p_values()
            .into_iter()
            .map(|p| self.n_at_level(p, level).map(|n| n as f64 / (p as f64).ln()))
            .collect();
        let scaled = scaled?;
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        (min > 0.0).then(|| max / min)
    }

    /// Adjacent grid points where the success probability drops by more
    /// than `2 sqrt(0.25 / R)`, as `(p, n_before, n_after, drop)`.
    pub fn monotonicity_violations(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for p in self.p_values() {
            let curve = self.curve(p);
            for w in curve.windows(2) {
                let bound = 2.0 * (0.25 / w[0].replicates.min(w[1].replicates) as f64).sqrt();
                let drop = w[0].success_prob - w[1].success_prob;
                if drop > bound {
                    out.push((p, w[0].n, w[1].n, drop));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,p,n,beta,success_count,replicates,success_prob,mean_hamming\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.family, r.p, r.n, r.beta, r.success_count, r.replicates, r.success_prob, r.mean_hamming
            );
        }
        out
    }

    pub fn from_csv(path: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "family,p,n,beta,success_count,replicates,success_prob,mean_hamming" => {}
            _ => return Err(Error::parse(path, 1, 1, "missing success table header")),
        }
        let mut rows = Vec::new();
        for (k, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::parse(path, k + 1, 1, format!("expected 8 fields, got {}", f.len())));
            }
            let int = |i: usize| -> Result<usize> {
                f[i].parse()
                    .map_err(|_| Error::parse(path, k + 1, i + 1, format!("bad integer {:?}", f[i])))
            };
            let real = |i: usize| -> Result<f64> {
                f[i].parse()
                    .map_err(|_| Error::parse(path, k + 1, i + 1, format!("bad number {:?}", f[i])))
            };
            rows.push(SuccessRow {
                family: FamilyTag::parse(f[0])
                    .ok_or_else(|| Error::parse(path, k + 1, 1, format!("unknown family {:?}", f[0])))?,
                p: int(1)?,
                n: int(2)?,
                beta: real(3)?,
                success_count: int(4)?,
                replicates: int(5)?,
                success_prob: real(6)?,
                mean_hamming: real(7)?,
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub c: f64,
    /// `(c, summed pilot success probability over the n grid)`.
    pub scores: Vec<(f64, f64)>,
    pub pilot_p: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub table: SuccessTable,
    pub records: Vec<TrialRecord>,
    /// Theory constant used for lambda, when the rule is not StARS.
    pub lambda_c: Option<f64>,
    pub calibration: Option<Calibration>,
    pub failed_trials: usize,
}

/// Picks the theory constant maximizing pilot recovery on the smallest `p`.
/// Pilot trials use seeds disjoint from the main study.
pub fn calibrate_c<T: Scalar>(config: &ExperimentConfig<T>, c_grid: &[T], pilot_replicates: usize) -> Calibration {
    let pilot_p = config.p_values.iter().copied().min().unwrap_or(0);
    let master = derive_seed(&[config.master_seed, PILOT_SALT]);
    let jobs: Vec<(usize, usize, usize)> = (0..c_grid.len())
        .flat_map(|ci| {
            config
                .n_grid
                .iter()
                .flat_map(move |&n| (0..pilot_replicates).map(move |r| (ci, n, r)))
        })
        .collect();
    let wins: Vec<(usize, bool)> = jobs
        .par_iter()
        .map(|&(ci, n, r)| (ci, run_trial_seeded(config, pilot_p, n, r, c_grid[ci], master).success()))
        .collect();
    let scores: Vec<(f64, f64)> = c_grid
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let hits = wins.iter().filter(|(i, ok)| *i == ci && *ok).count();
            (c.as_f64(), hits as f64 / pilot_replicates as f64)
        })
        .collect();
    let best = scores
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, s| if s.1 > acc.1 { s } else { acc });
    Calibration {
        c: best.0,
        scores,
        pilot_p,
    }
}

/// Runs the full `(p, n, replicate)` grid and aggregates success rates.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig<T>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let (c, calibration) = match &config.lambda_rule {
        LambdaRule::Theory { c } => (Some(*c), None),
        LambdaRule::Calibrated { c_grid, pilot_replicates } => {
            let cal = calibrate_c(config, c_grid, *pilot_replicates);
            (Some(T::lit(cal.c)), Some(cal))
        }
        LambdaRule::Stars(_) => (None, None),
    };
    let jobs: Vec<(usize, usize, usize)> = config
        .p_values
        .iter()
        .flat_map(|&p| {
            config
                .n_grid
                .iter()
                .flat_map(move |&n| (0..config.replicates).map(move |r| (p, n, r)))
        })
        .collect();
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(p, n, r)| run_trial(config, p, n, r, c.unwrap_or_else(T::one)))
        .collect();
    let failed_trials = records.iter().filter(|r| r.error.is_some()).count();
    let table = SuccessTable::from_records(&records, config.rescale_c);
    Ok(ExperimentOutcome {
        table,
        records,
        lambda_c: c.map(Scalar::as_f64),
        calibration,
        failed_trials,
    })
}

/// Writes `success.csv`, `curves_raw.csv`, `curves_rescaled.csv` and one SVG per CSV.
pub fn emit_outputs(table: &SuccessTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut raw = String::from("p,n,success_prob\n");
    let mut rescaled = String::from("p,beta,success_prob\n");
    for p in table.p_values() {
        for r in table.curve(p) {
            let _ = writeln!(raw, "{},{},{}", r.p, r.n, r.success_prob);
            let _ = writeln!(rescaled, "{},{},{}", r.p, r.beta, r.success_prob);
        }
    }
    let series = |x: fn(&SuccessRow) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
        table
            .p_values()
            .into_iter()
            .map(|p| {
                (
                    format!("p = {p}"),
                    table.curve(p).into_iter().map(|r| (x(r), r.success_prob)).collect(),
                )
            })
            .collect()
    };
    let by_n = series(|r| r.n as f64);
    let by_beta = series(|r| r.beta);
    let files = [
        ("success.csv", table.to_csv()),
        ("success.svg", line_plot_svg("Exact recovery", "n", "success probability", &by_n)),
        ("curves_raw.csv", raw),
        ("curves_raw.svg", line_plot_svg("Exact recovery vs n", "n", "success probability", &by_n)),
        ("curves_rescaled.csv", rescaled),
        (
            "curves_rescaled.svg",
            line_plot_svg("Exact recovery vs rescaled n", "beta = n / (c log p)", "success probability", &by_beta),
        ),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Standalone SVG line chart; the y axis spans [0, 1].
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let xs: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).collect();
    let (mut x0, mut x1) = match (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ) {
        (a, b) if a.is_finite() && b.is_finite() => (a, b),
        _ => (0.0, 1.0),
    };
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#, top + ph);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + ph + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.2}</text>"#,
            left - 6.0,
            sy(fy) + 4.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            sy(fy),
            left + pw,
            sy(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            left + pw + 12.0,
            left + pw + 32.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw + 38.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
