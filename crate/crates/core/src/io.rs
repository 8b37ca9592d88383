//! Text formats: model files, sample matrices, fit records and experiment
//! configs. Reals are written with 17 significant digits (or shortest
//! round-trip form for samples), so write -> read -> write is byte-exact.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimator::{NeighborhoodFit, SolverOptions};
use crate::experiments::{geometric_n_grid, ExperimentConfig, LambdaRule};
use crate::families::{DomainConstraint, FamilyKind, FamilySpec, FamilyTag, Support};
use crate::model::{PairwiseModel, SampleMatrix};
use crate::recovery::StitchRule;
use crate::sampler::{GibbsConfig, GibbsInit};
use crate::scalar::Scalar;
use crate::selection::StarsConfig;

/// Integer tolerance when reading count data.
pub const INTEGRALITY_TOL: f64 = 1e-9;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------- models

pub fn format_model<T: Scalar>(model: &PairwiseModel<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "family {}", model.family().name());
    let _ = writeln!(out, "p {}", model.p());
    let _ = writeln!(out, "a0 {}", real(model.constraint().a0.as_f64()));
    if let FamilyKind::Gaussian { sigma } = model.family().kind {
        let _ = writeln!(out, "sigma {}", real(sigma.as_f64()));
    }
    for (s, v) in model.node_params().iter().enumerate() {
        let _ = writeln!(out, "node {s} {}", real(v.as_f64()));
    }
    for (s, t, w) in model.edges().iter() {
        let _ = writeln!(out, "edge {s} {t} {}", real(w.as_f64()));
    }
    out
}

/// Parses a model file; the parameters must satisfy the family's domain constraint.
pub fn parse_model<T: Scalar>(path: &str, text: &str) -> Result<PairwiseModel<T>> {
    let mut family: Option<FamilyTag> = None;
    let mut p: Option<usize> = None;
    let mut a0: Option<f64> = None;
    let mut sigma: Option<f64> = None;
    let mut nodes: Vec<Option<T>> = Vec::new();
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            f.get(i)
                .ok_or_else(|| Error::parse(path, line_no, i + 1, "missing field"))?
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, i + 1, format!("bad number {:?}", f[i])))
        };
        let idx = |i: usize| -> Result<usize> {
            f.get(i)
                .ok_or_else(|| Error::parse(path, line_no, i + 1, "missing field"))?
                .parse::<usize>()
                .map_err(|_| Error::parse(path, line_no, i + 1, format!("bad index {:?}", f[i])))
        };
        let want = |n: usize| -> Result<()> {
            if f.len() == n {
                Ok(())
            } else {
                Err(Error::parse(path, line_no, 1, format!("`{}` takes {} fields, got {}", f[0], n - 1, f.len() - 1)))
            }
        };
        match f[0] {
            "family" => {
                want(2)?;
                family = Some(
                    FamilyTag::parse(f[1])
                        .ok_or_else(|| Error::parse(path, line_no, 2, format!("unknown family {:?}", f[1])))?,
                );
            }
            "p" => {
                want(2)?;
                let v = idx(1)?;
                nodes = vec![None; v];
                p = Some(v);
            }
            "a0" => {
                want(2)?;
                a0 = Some(num(1)?);
            }
            "sigma" => {
                want(2)?;
                sigma = Some(num(1)?);
            }
            "node" => {
                want(3)?;
                let s = idx(1)?;
                let slot = nodes
                    .get_mut(s)
                    .ok_or_else(|| Error::parse(path, line_no, 2, format!("node {s} outside 0..p (is `p` set?)")))?;
                if slot.is_some() {
                    return Err(Error::parse(path, line_no, 2, format!("node {s} given twice")));
                }
                *slot = Some(T::lit(num(2)?));
            }
            "edge" => {
                want(4)?;
                edges.push((idx(1)?, idx(2)?, T::lit(num(3)?)));
            }
            other => return Err(Error::parse(path, line_no, 1, format!("unknown key {other:?}"))),
        }
    }
    let tag = family.ok_or_else(|| Error::parse(path, 1, 1, "missing `family` line"))?;
    p.ok_or_else(|| Error::parse(path, 1, 1, "missing `p` line"))?;
    let fam = match tag {
        FamilyTag::Gaussian => FamilySpec::gaussian(T::lit(sigma.unwrap_or(1.0)))?,
        _ => FamilySpec::from_tag(tag),
    };
    let constraint = match a0 {
        Some(a) => DomainConstraint::with_a0(&fam, T::lit(a))?,
        None => DomainConstraint::default_for(&fam),
    };
    let node_params = nodes
        .into_iter()
        .enumerate()
        .map(|(s, v)| v.ok_or_else(|| Error::parse(path, 1, 1, format!("missing parameter for node {s}"))))
        .collect::<Result<Vec<T>>>()?;
    PairwiseModel::new(fam, constraint, node_params, edges)
}

// --------------------------------------------------------------- samples

/// Sample TSV: `#family p n seed`, then one tab-separated row per sample.
pub fn format_samples<T: Scalar>(data: &SampleMatrix<T>, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#{} {} {} {}", data.family(), data.p(), data.n(), seed);
    let discrete = data.family().support().is_discrete();
    let mut fields = Vec::with_capacity(data.p());
    for i in 0..data.n() {
        fields.clear();
        for j in 0..data.p() {
            let v = data.get(i, j).as_f64();
            fields.push(if discrete { format!("{}", v as i64) } else { format!("{v}") });
        }
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

/// Family named by a `#family p n seed` header, if present.
pub fn sample_header(text: &str) -> Option<(FamilyTag, usize, usize, u64)> {
    let first = text.lines().next()?.strip_prefix('#')?;
    let f: Vec<&str> = first.split_whitespace().collect();
    if f.len() != 4 {
        return None;
    }
    Some((FamilyTag::parse(f[0])?, f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?))
}

/// Parses a headered TSV/CSV of numerics into a sample matrix.
///
/// Lines starting with `#` are comments. A first data line with any
/// non-numeric field is taken as column names. Tabs, commas or runs of
/// spaces separate fields. Count data must be integral within
/// [`INTEGRALITY_TOL`] and is rounded. With `shift_nonneg`, every column is
/// replaced by `x - min(x)` before the support check.
pub fn ingest_matrix<T: Scalar>(path: &str, text: &str, family: FamilyTag, shift_nonneg: bool) -> Result<SampleMatrix<T>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_header = false;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.trim().parse::<f64>().ok()).collect();
        if rows.is_empty() && !saw_header && parsed.iter().any(Option::is_none) {
            saw_header = true;
            width = Some(fields.len());
            continue;
        }
        match width {
            Some(w) if w != fields.len() => {
                return Err(Error::parse(path, line_no, fields.len().min(w) + 1, format!("expected {w} fields, got {}", fields.len())));
            }
            _ => width = Some(fields.len()),
        }
        let mut row = Vec::with_capacity(fields.len());
        for (j, (v, f)) in parsed.into_iter().zip(&fields).enumerate() {
            let v = v.ok_or_else(|| Error::parse(path, line_no, j + 1, format!("not a number: {:?}", f.trim())))?;
            row.push(v);
        }
        rows.push((line_no, row));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, 1, "no data rows"));
    }
    let p = width.unwrap_or(0);
    if shift_nonneg {
        for j in 0..p {
            let min = rows.iter().map(|(_, r)| r[j]).fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                for (_, r) in &mut rows {
                    r[j] -= min;
                }
            }
        }
    }
    let support = family.support();
    let mut out = Vec::with_capacity(rows.len());
    for (line_no, row) in rows {
        let mut vals = Vec::with_capacity(p);
        for (j, v) in row.into_iter().enumerate() {
            let bad = || Error::Support {
                path: path.to_string(),
                row: line_no,
                column: j + 1,
                value: v,
                family: family.name(),
            };
            if !v.is_finite() {
                return Err(bad());
            }
            let v = match support {
                Support::NonnegativeIntegers | Support::Binary01 => {
                    let r = v.round();
                    if (v - r).abs() > INTEGRALITY_TOL {
                        return Err(bad());
                    }
                    r
                }
                _ => v,
            };
            if !support.contains(v) {
                return Err(bad());
            }
            vals.push(T::lit(v));
        }
        out.push(vals);
    }
    SampleMatrix::from_rows(family, &out)
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').collect()
    } else if line.contains(',') {
        line.split(',').collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Reads a sample file; the family comes from `family` or else from the
/// `#family p n seed` header.
pub fn read_samples<T: Scalar>(path: &Path, family: Option<FamilyTag>, shift_nonneg: bool) -> Result<SampleMatrix<T>> {
    let text = read_text(path)?;
    let name = path.display().to_string();
    let tag = match family.or_else(|| sample_header(&text).map(|h| h.0)) {
        Some(t) => t,
        None => return Err(Error::parse(&name, 1, 1, "family not given and no `#family p n seed` header")),
    };
    ingest_matrix(&name, &text, tag, shift_nonneg)
}

// ----------------------------------------------------------- fit records

/// One node's fit as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRecord {
    pub node: usize,
    pub lambda: f64,
    pub intercept: f64,
    pub edges: Vec<(usize, f64)>,
    pub kkt_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitRecord {
    pub fn from_fit<T: Scalar>(fit: &NeighborhoodFit<T>) -> Self {
        Self {
            node: fit.s,
            lambda: fit.lambda.as_f64(),
            intercept: fit.intercept.as_f64(),
            edges: fit.edge_weights().into_iter().map(|(t, w)| (t, w.as_f64())).collect(),
            kkt_gap: fit.kkt_gap.as_f64(),
            iterations: fit.iterations,
            converged: fit.converged,
        }
    }
}

const FIT_HEADER: &str = "#node\tlambda\tintercept\tkkt_gap\titerations\tconverged\tedges";

/// One line per fit; `edges` is `t:w` pairs joined by commas, or `-`.
pub fn format_fit_records(records: &[FitRecord]) -> String {
    let mut out = format!("{FIT_HEADER}\n");
    for r in records {
        let edges = if r.edges.is_empty() {
            "-".to_string()
        } else {
            r.edges
                .iter()
                .map(|(t, w)| format!("{t}:{}", real(*w)))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.node,
            real(r.lambda),
            real(r.intercept),
            real(r.kkt_gap),
            r.iterations,
            u8::from(r.converged),
            edges
        );
    }
    out
}

pub fn parse_fit_records(path: &str, text: &str) -> Result<Vec<FitRecord>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(Error::parse(path, line_no, 1, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::parse(path, line_no, i + 1, format!("bad number {:?}", f[i])))
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse()
                .map_err(|_| Error::parse(path, line_no, i + 1, format!("bad integer {:?}", f[i])))
        };
        let converged = match f[5] {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(path, line_no, 6, format!("bad flag {other:?}"))),
        };
        let edges = if f[6] == "-" {
            Vec::new()
        } else {
            f[6].split(',')
                .map(|pair| {
                    let (t, w) = pair
                        .split_once(':')
                        .ok_or_else(|| Error::parse(path, line_no, 7, format!("bad pair {pair:?}")))?;
                    Ok((
                        t.parse()
                            .map_err(|_| Error::parse(path, line_no, 7, format!("bad node {t:?}")))?,
                        w.parse()
                            .map_err(|_| Error::parse(path, line_no, 7, format!("bad weight {w:?}")))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?
        };
        out.push(FitRecord {
            node: int(0)?,
            lambda: num(1)?,
            intercept: num(2)?,
            edges,
            kkt_gap: num(3)?,
            iterations: int(4)?,
            converged,
        });
    }
    Ok(out)
}

// ------------------------------------------------------- experiment config

/// Flat `key = value` experiment file. Unset keys take the desk defaults
/// of the chosen family.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub family: String,
    /// `desk` (default) or `full`: p in {64, 100, 169, 225} with 50 replicates.
    pub scale: Option<String>,
    pub p_values: Option<Vec<usize>>,
    pub n_grid: Option<Vec<usize>>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub n_count: Option<usize>,
    pub replicates: Option<usize>,
    pub theta_s: Option<f64>,
    pub theta_st: Option<f64>,
    pub a0: Option<f64>,
    pub sigma: Option<f64>,
    /// `theory`, `calibrated` or `stars`.
    pub lambda_rule: Option<String>,
    pub lambda_c: Option<f64>,
    pub c_grid: Option<Vec<f64>>,
    pub pilot_replicates: Option<usize>,
    pub rule: Option<String>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub rescale_c: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub output_dir: Option<String>,
}

pub fn parse_experiment_config(path: &str, text: &str) -> Result<ExperimentConfig<f64>> {
    let file: ExperimentFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((1, 1));
        Error::parse(path, line, column, e.message().to_string())
    })?;
    experiment_from_file(path, &file)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn experiment_from_file(path: &str, f: &ExperimentFile) -> Result<ExperimentConfig<f64>> {
    let bad = |msg: String| Error::parse(path, 1, 1, msg);
    let tag = FamilyTag::parse(&f.family).ok_or_else(|| bad(format!("unknown family {:?}", f.family)))?;
    let mut cfg = match tag {
        FamilyTag::Poisson => ExperimentConfig::desk_poisson(),
        FamilyTag::Exponential => ExperimentConfig::desk_exponential(),
        FamilyTag::Gaussian | FamilyTag::Ising => {
            let mut c = ExperimentConfig::desk_poisson();
            c.family = FamilySpec::from_tag(tag);
            c.constraint = DomainConstraint::default_for(&c.family);
            c.theta_s = 0.0;
            c.theta_st = if tag == FamilyTag::Ising { 0.5 } else { 0.2 };
            c
        }
    };
    match f.scale.as_deref().unwrap_or("desk") {
        "desk" => {}
        "full" => {
            cfg.p_values = vec![64, 100, 169, 225];
            cfg.replicates = 50;
        }
        other => return Err(bad(format!("unknown scale {other:?}"))),
    }
    if let Some(sigma) = f.sigma {
        if tag != FamilyTag::Gaussian {
            return Err(bad("`sigma` applies to the gaussian family only".into()));
        }
        cfg.family = FamilySpec::gaussian(sigma)?;
        cfg.constraint = DomainConstraint::default_for(&cfg.family);
    }
    if let Some(a0) = f.a0 {
        cfg.constraint = DomainConstraint::with_a0(&cfg.family, a0)?;
    }
    if let Some(v) = &f.p_values {
        cfg.p_values = v.clone();
    }
    if let Some(v) = &f.n_grid {
        cfg.n_grid = v.clone();
    } else if f.n_min.is_some() || f.n_max.is_some() || f.n_count.is_some() {
        let lo = f.n_min.unwrap_or(200);
        let hi = f.n_max.unwrap_or(6000);
        if lo == 0 || hi < lo {
            return Err(bad(format!("need 0 < n_min <= n_max, got {lo} and {hi}")));
        }
        cfg.n_grid = geometric_n_grid(lo, hi, f.n_count.unwrap_or(12));
    }
    if let Some(v) = f.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = f.theta_s {
        cfg.theta_s = v;
    }
    if let Some(v) = f.theta_st {
        cfg.theta_st = v;
    }
    match f.lambda_rule.as_deref() {
        None => {
            if let Some(c) = f.lambda_c {
                cfg.lambda_rule = LambdaRule::Theory { c };
            }
        }
        Some("theory") => {
            cfg.lambda_rule = LambdaRule::Theory {
                c: f.lambda_c.ok_or_else(|| bad("`lambda_rule = \"theory\"` needs `lambda_c`".into()))?,
            }
        }
        Some("calibrated") => {
            if let LambdaRule::Calibrated { c_grid, pilot_replicates } = &mut cfg.lambda_rule {
                if let Some(g) = &f.c_grid {
                    *c_grid = g.clone();
                }
                if let Some(r) = f.pilot_replicates {
                    *pilot_replicates = r;
                }
            }
        }
        Some("stars") => {
            cfg.lambda_rule = LambdaRule::Stars(StarsConfig {
                solver: cfg.solver,
                ..StarsConfig::default()
            })
        }
        Some(other) => return Err(bad(format!("unknown lambda rule {other:?}"))),
    }
    if let Some(r) = &f.rule {
        cfg.rule = StitchRule::parse(r).ok_or_else(|| bad(format!("unknown stitching rule {r:?}")))?;
    }
    cfg.gibbs = GibbsConfig {
        burn_in: f.burn_in.unwrap_or(cfg.gibbs.burn_in),
        thin: f.thin.unwrap_or(cfg.gibbs.thin),
        seed: 0,
        init: GibbsInit::FamilyMean,
    };
    if let Some(s) = f.seed {
        cfg.master_seed = s;
    }
    if let Some(c) = f.rescale_c {
        cfg.rescale_c = c;
    }
    cfg.solver = SolverOptions {
        tol: f.tol.unwrap_or(cfg.solver.tol),
        max_iters: f.max_iters.unwrap_or(cfg.solver.max_iters),
        ..cfg.solver
    };
    if let LambdaRule::Stars(st) = &mut cfg.lambda_rule {
        st.solver = cfg.solver;
    }
    cfg.output_dir = f.output_dir.as_ref().map(Into::into);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trips_bytes() {
        let fam = FamilySpec::poisson();
        let model = PairwiseModel::new(
            fam,
            DomainConstraint::default_for(&fam),
            vec![2.0, 0.1 + 0.2, -1.0 / 3.0],
            vec![(0, 1, -0.1), (1, 2, -1e-300)],
        )
        .unwrap();
        let text = format_model(&model);
        let back: PairwiseModel<f64> = parse_model("m", &text).unwrap();
        assert_eq!(back.node_params(), model.node_params());
        assert_eq!(format_model(&back), text);
    }

    #[test]
    fn model_file_rejects_infeasible_and_malformed() {
        let text = "family poisson\np 2\nnode 0 1\nnode 1 1\nedge 0 1 0.5\n";
        assert!(matches!(parse_model::<f64>("m", text), Err(Error::Infeasible { .. })));
        let text = "family poisson\np 2\nnode 0 1\n";
        assert!(matches!(parse_model::<f64>("m", text), Err(Error::Parse { .. })));
        let text = "family poisson\np 2\nnode 0 x\nnode 1 1\n";
        match parse_model::<f64>("m", text) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ingests_integer_tsv() {
        let x: SampleMatrix<f64> = ingest_matrix("d", "a\tb\n1\t2\n3\t4\n0\t7\n", FamilyTag::Poisson, false).unwrap();
        assert_eq!((x.n(), x.p()), (3, 2));
        assert_eq!(x.column(1), &[2.0, 4.0, 7.0]);
    }

    #[test]
    fn negative_count_is_a_support_error() {
        let r = ingest_matrix::<f64>("d", "1\t2\n-1\t0\n", FamilyTag::Poisson, false);
        match r {
            Err(Error::Support { row, column, value, .. }) => {
                assert_eq!((row, column), (2, 1));
                assert_eq!(value, -1.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(ingest_matrix::<f64>("d", "1.5\n", FamilyTag::Poisson, false).is_err());
        let near: SampleMatrix<f64> = ingest_matrix("d", "2.0000000000001\n", FamilyTag::Poisson, false).unwrap();
        assert_eq!(near.get(0, 0), 2.0);
    }

    #[test]
    fn shift_makes_column_minimum_zero() {
        let x: SampleMatrix<f64> =
            ingest_matrix("d", "x,y\n-2.5,1\n0.5,3\n1,2\n", FamilyTag::Exponential, true).unwrap();
        assert_eq!(x.column(0).iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(x.column(1), &[0.0, 2.0, 1.0]);
        assert!(ingest_matrix::<f64>("d", "-2.5,1\n", FamilyTag::Exponential, false).is_err());
    }

    #[test]
    fn ragged_rows_report_line_and_column() {
        match ingest_matrix::<f64>("d", "# comment\n1 2 3\n4 5\n", FamilyTag::Gaussian, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match ingest_matrix::<f64>("d", "1,2\n3,abc\n", FamilyTag::Gaussian, false) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        assert!(ingest_matrix::<f64>("d", "", FamilyTag::Gaussian, false).is_err());
    }

    #[test]
    fn samples_round_trip_bytes() {
        let rows = vec![vec![0.1, -2.0, 1e-7], vec![3.25, 1.0 / 3.0, 5.0]];
        let x = SampleMatrix::from_rows(FamilyTag::Gaussian, &rows).unwrap();
        let text = format_samples(&x, 9);
        assert!(text.starts_with("#gaussian 3 2 9\n"));
        assert_eq!(sample_header(&text), Some((FamilyTag::Gaussian, 3, 2, 9)));
        let back: SampleMatrix<f64> = ingest_matrix("s", &text, FamilyTag::Gaussian, false).unwrap();
        assert_eq!(back, x);
        assert_eq!(format_samples(&back, 9), text);
    }

    #[test]
    fn fit_records_round_trip() {
        let recs = vec![
            FitRecord {
                node: 0,
                lambda: 0.1,
                intercept: -0.3,
                edges: vec![(2, 0.25), (3, -1.0 / 7.0)],
                kkt_gap: 1e-9,
                iterations: 17,
                converged: true,
            },
            FitRecord {
                node: 1,
                lambda: 0.1,
                intercept: 0.0,
                edges: vec![],
                kkt_gap: 0.0,
                iterations: 0,
                converged: false,
            },
        ];
        let text = format_fit_records(&recs);
        let back = parse_fit_records("f", &text).unwrap();
        assert_eq!(back, recs);
        assert_eq!(format_fit_records(&back), text);
    }

    #[test]
    fn experiment_config_overrides_defaults() {
        let text = "family = \"poisson\"\np_values = [16]\nn_grid = [100, 200]\nreplicates = 2\nlambda_rule = \"theory\"\nlambda_c = 2.0\nseed = 5\n";
        let cfg = parse_experiment_config("c", text).unwrap();
        assert_eq!(cfg.p_values, vec![16]);
        assert_eq!(cfg.n_grid, vec![100, 200]);
        assert_eq!(cfg.lambda_rule, LambdaRule::Theory { c: 2.0 });
        assert_eq!(cfg.master_seed, 5);
        assert!(matches!(
            parse_experiment_config("c", "family = \"poisson\"\nbogus = 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_experiment_config("c", "family = \"poisson\"\np_values = [15]\n").is_err());
    }
}
