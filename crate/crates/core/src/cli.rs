//! Command-line front end: `sample`, `fit`, `select`, `experiment`, `diagnose`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or domain error, 3 a solver
//! did not converge (outputs are still written).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{check_conditions, format_report_csv, kappa_estimates, tail_checks};
use crate::error::{Error, Result};
use crate::estimator::{fit_all_nodes, fit_all_nodes_path, geometric_grid, graph_lambda_max, NeighborhoodFit, SolverOptions};
use crate::experiments::{emit_outputs, run_experiment, ExperimentOutcome};
use crate::families::{DomainConstraint, FamilySpec, FamilyTag};
use crate::io::{
    format_fit_records, format_samples, parse_experiment_config, parse_model, read_samples, read_text,
    write_text, FitRecord,
};
use crate::model::{PairwiseModel, SampleMatrix};
use crate::recovery::{adjacency_json, format_edge_list, stitch_weighted, StitchRule};
use crate::sampler::{gibbs_sample, GibbsConfig, GibbsInit};
use crate::selection::{format_curve_csv, stars_select, StarsConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "expgraph", version, about = "Graph structure learning for exponential-family MRFs")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw Gibbs samples from a model file.
    Sample(SampleArgs),
    /// Fit every neighborhood at one lambda or along a grid, then stitch.
    Fit(FitArgs),
    /// Choose lambda by stability selection and report the graph.
    Select(SelectArgs),
    /// Run a lattice recovery study from a config file.
    Experiment(ExperimentArgs),
    /// Report the eigenvalue, incoherence, tail and curvature diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    /// Output TSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Node-conditional family; defaults to the one named in the sample header.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<FamilyTag>,
    /// Gaussian noise scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Node-parameter bound of the constrained families.
    #[arg(long)]
    pub a0: Option<f64>,
    /// Shift every column by its minimum before fitting.
    #[arg(long)]
    pub shift_nonneg: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, conflicts_with = "lambda_grid", required_unless_present = "lambda_grid")]
    pub lambda: Option<f64>,
    /// Geometric grid from the graph-wide lambda max, as `count:ratio`.
    #[arg(long, value_parser = parse_grid)]
    pub lambda_grid: Option<(usize, f64)>,
    #[arg(long, value_parser = parse_rule, default_value = "or")]
    pub rule: StitchRule,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_grid, default_value = "20:0.05")]
    pub lambda_grid: (usize, f64),
    #[arg(long, value_parser = parse_rule, default_value = "or")]
    pub rule: StitchRule,
    #[arg(long, default_value_t = 20)]
    pub subsamples: usize,
    #[arg(long)]
    pub subsample_size: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub shift_nonneg: bool,
    /// Degree bound d; defaults to the largest true degree.
    #[arg(long)]
    pub degree_bound: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 10)]
    pub blocks: usize,
    /// Largest count enumerated for the curvature constants.
    #[arg(long, default_value_t = 30)]
    pub cap: u32,
    /// Output CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_family(s: &str) -> std::result::Result<FamilyTag, String> {
    FamilyTag::parse(s).ok_or_else(|| format!("unknown family {s:?} (gaussian, ising, poisson, exponential)"))
}

fn parse_rule(s: &str) -> std::result::Result<StitchRule, String> {
    StitchRule::parse(s).ok_or_else(|| format!("unknown rule {s:?} (or, and)"))
}

fn parse_grid(s: &str) -> std::result::Result<(usize, f64), String> {
    let (c, r) = s.split_once(':').ok_or("expected count:ratio")?;
    let count = c.parse().map_err(|_| format!("bad count {c:?}"))?;
    let ratio: f64 = r.parse().map_err(|_| format!("bad ratio {r:?}"))?;
    if count < 2 || !(ratio > 0.0 && ratio < 1.0) {
        return Err("need count >= 2 and 0 < ratio < 1".into());
    }
    Ok((count, ratio))
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        // Fails only if a pool already exists (e.g. repeated in-process calls); the existing pool is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::LineSearch { .. } => EXIT_CONVERGENCE,
        Error::Trial { source, .. } | Error::Sweep { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

pub fn run(command: &Command) -> Result<i32> {
    match command {
        Command::Sample(a) => sample(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Experiment(a) => experiment(a),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn load_model(path: &Path) -> Result<PairwiseModel<f64>> {
    parse_model(&path.display().to_string(), &read_text(path)?)
}

fn sample(a: &SampleArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let config = GibbsConfig {
        burn_in: a.burn_in,
        thin: a.thin,
        seed: a.seed,
        init: GibbsInit::FamilyMean,
    };
    let data = gibbs_sample(&model, a.n, &config)?;
    let text = format_samples(&data, a.seed);
    match &a.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

struct Loaded {
    data: SampleMatrix<f64>,
    family: FamilySpec<f64>,
    constraint: DomainConstraint<f64>,
}

fn load_data(a: &DataArgs) -> Result<Loaded> {
    let data: SampleMatrix<f64> = read_samples(&a.data, a.family, a.shift_nonneg)?;
    let tag = data.family();
    let family = match (tag, a.sigma) {
        (FamilyTag::Gaussian, s) => FamilySpec::gaussian(s.unwrap_or(1.0))?,
        (_, Some(_)) => return Err(Error::InvalidArgument("--sigma applies to the gaussian family only".into())),
        (t, None) => FamilySpec::from_tag(t),
    };
    let constraint = match a.a0 {
        Some(a0) => DomainConstraint::with_a0(&family, a0)?,
        None => DomainConstraint::default_for(&family),
    };
    Ok(Loaded { data, family, constraint })
}

fn solver_options(a: &SolverArgs) -> Result<SolverOptions<f64>> {
    if !(a.tol > 0.0) || a.max_iters == 0 {
        return Err(Error::InvalidArgument("--tol must be positive and --max-iters at least 1".into()));
    }
    Ok(SolverOptions {
        tol: a.tol,
        max_iters: a.max_iters,
        ..SolverOptions::default()
    })
}

fn write_graph(dir: &Path, fits: &[NeighborhoodFit<f64>], p: usize, rule: StitchRule) -> Result<()> {
    let weighted = stitch_weighted(fits, p, rule)?;
    write_text(&dir.join("edges.tsv"), &format_edge_list(&weighted))?;
    write_text(&dir.join("graph.json"), &adjacency_json(p, &weighted.keys().copied().collect()))
}

fn convergence_code(fits: &[NeighborhoodFit<f64>]) -> i32 {
    let stalled: Vec<usize> = fits.iter().filter(|f| !f.converged).map(|f| f.s).collect();
    if stalled.is_empty() {
        EXIT_OK
    } else {
        eprintln!("warning: {} fit(s) hit the iteration limit (nodes {:?})", stalled.len(), stalled);
        EXIT_CONVERGENCE
    }
}

fn fit(a: &FitArgs) -> Result<i32> {
    let opts = solver_options(&a.solver)?;
    let Loaded { data, family, constraint } = load_data(&a.data)?;
    let p = data.p();
    if let Some(lambda) = a.lambda {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("--lambda must be nonnegative, got {lambda}")));
        }
        let fits = fit_all_nodes(&data, lambda, &family, &constraint, &opts)?;
        let records: Vec<FitRecord> = fits.iter().map(FitRecord::from_fit).collect();
        write_text(&a.out.join("fits.tsv"), &format_fit_records(&records))?;
        write_graph(&a.out, &fits, p, a.rule)?;
        return Ok(convergence_code(&fits));
    }
    let (count, ratio) = a.lambda_grid.expect("clap enforces --lambda or --lambda-grid");
    let top = graph_lambda_max(&data, &family, &constraint)?;
    let lambdas = geometric_grid(top, count, ratio)?;
    let path = fit_all_nodes_path(&data, &lambdas, &family, &constraint, &opts)?;
    let records: Vec<FitRecord> = path.iter().flatten().map(FitRecord::from_fit).collect();
    write_text(&a.out.join("fits.tsv"), &format_fit_records(&records))?;
    let mut edges = String::from("#lambda\ts\tt\tweight\n");
    for fits in &path {
        for ((s, t), w) in stitch_weighted(fits, p, a.rule)? {
            let _ = writeln!(edges, "{:.16e}\t{s}\t{t}\t{w}", fits[0].lambda);
        }
    }
    write_text(&a.out.join("path_edges.tsv"), &edges)?;
    let all: Vec<NeighborhoodFit<f64>> = path.into_iter().flatten().collect();
    Ok(convergence_code(&all))
}

fn select(a: &SelectArgs) -> Result<i32> {
    let opts = solver_options(&a.solver)?;
    let Loaded { data, family, constraint } = load_data(&a.data)?;
    let config = StarsConfig {
        subsamples: a.subsamples,
        subsample_size: a.subsample_size,
        beta: a.beta,
        lambdas: None,
        grid_count: a.lambda_grid.0,
        grid_ratio: a.lambda_grid.1,
        rule: a.rule,
        seed: a.seed,
        solver: opts,
    };
    let result = stars_select(&data, &family, &constraint, &config)?;
    write_text(&a.out.join("stars_curve.csv"), &format_curve_csv(&result.curve))?;
    write_text(
        &a.out.join("lambda.txt"),
        &format!(
            "lambda {:.16e}\nindex {}\nstable {}\n",
            result.lambda_star, result.index, result.stable
        ),
    )?;
    if !result.stable {
        eprintln!("warning: no grid point met the instability threshold; using the most regularized lambda");
    }
    let fits = fit_all_nodes(&data, result.lambda_star, &family, &constraint, &opts)?;
    let records: Vec<FitRecord> = fits.iter().map(FitRecord::from_fit).collect();
    write_text(&a.out.join("fits.tsv"), &format_fit_records(&records))?;
    write_graph(&a.out, &fits, data.p(), a.rule)?;
    Ok(convergence_code(&fits))
}

fn experiment(a: &ExperimentArgs) -> Result<i32> {
    let path = a.config.display().to_string();
    let mut config = parse_experiment_config(&path, &read_text(&a.config)?)?;
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(out) = &a.out {
        config.output_dir = Some(out.clone());
    }
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no output directory: pass --out or set output_dir".into()))?;
    let outcome = run_experiment(&config)?;
    emit_outputs(&outcome.table, &dir)?;
    write_text(&dir.join("trials.tsv"), &format_trials(&outcome))?;
    write_text(&dir.join("metadata.txt"), &format_metadata(&outcome))?;
    if outcome.failed_trials > 0 {
        eprintln!("warning: {} trial(s) failed; see trials.tsv", outcome.failed_trials);
        return Ok(EXIT_DATA);
    }
    Ok(EXIT_OK)
}

/// Per-trial outcomes without timing, so reruns are byte-identical.
pub fn format_trials(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from(
        "#family\tp\tn\treplicate\tseed\tlambda\tsuccess\thamming\trules_agree\tall_converged\tmax_kkt_gap\tfeasible\terror\n",
    );
    for r in &outcome.records {
        let hamming = r.report.as_ref().map_or("-".to_string(), |rep| rep.hamming().to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.16e}\t{}\t{}\t{}\t{}\t{:.6e}\t{}\t{}",
            r.family,
            r.p,
            r.n,
            r.replicate,
            r.seed,
            r.lambda,
            u8::from(r.success()),
            hamming,
            u8::from(r.rules_agree),
            u8::from(r.all_converged),
            r.max_kkt_gap,
            u8::from(r.feasible),
            r.error.as_deref().unwrap_or("-").replace(['\t', '\n'], " ")
        );
    }
    out
}

pub fn format_metadata(outcome: &ExperimentOutcome) -> String {
    let mut out = String::new();
    match outcome.lambda_c {
        Some(c) => {
            let _ = writeln!(out, "lambda_c {c}");
        }
        None => out.push_str("lambda_c stars\n"),
    }
    if let Some(cal) = &outcome.calibration {
        let _ = writeln!(out, "calibration_p {}", cal.pilot_p);
        for (c, score) in &cal.scores {
            let _ = writeln!(out, "calibration_score {c} {score}");
        }
    }
    let _ = writeln!(out, "trials {}", outcome.records.len());
    let _ = writeln!(out, "failed_trials {}", outcome.failed_trials);
    out
}

fn diagnose(a: &DiagnoseArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let data: SampleMatrix<f64> = read_samples(&a.data, Some(model.family().tag()), a.shift_nonneg)?;
    if data.p() != model.p() {
        return Err(Error::InvalidArgument(format!(
            "model has {} nodes but the data has {} columns",
            model.p(),
            data.p()
        )));
    }
    let d = a
        .degree_bound
        .unwrap_or_else(|| (0..model.p()).map(|s| model.neighbors(s).len()).max().unwrap_or(0));
    let conditions = (0..model.p())
        .map(|s| check_conditions(&model, &data, s, d))
        .collect::<Result<Vec<_>>>()?;
    let tails = tail_checks(&data, a.delta, a.blocks)?;
    let kappas = kappa_estimates(&model, &data, a.cap)?;
    let text = format_report_csv(&conditions, Some(&tails), Some(&kappas));
    match &a.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
