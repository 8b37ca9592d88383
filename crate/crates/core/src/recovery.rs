//! Combining per-node neighborhoods into a graph and scoring it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::NeighborhoodFit;
use crate::model::{edge_key, EdgeSet};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum StitchRule {
    /// Edge present when either endpoint selects the other.
    #[default]
    Or,
    /// Edge present only when both endpoints select each other.
    And,
}

impl StitchRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "or" => Some(StitchRule::Or),
            "and" => Some(StitchRule::And),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StitchRule::Or => "or",
            StitchRule::And => "and",
        }
    }
}

fn by_node<T: Scalar>(fits: &[NeighborhoodFit<T>], p: usize) -> Result<Vec<&NeighborhoodFit<T>>> {
    let mut slots: Vec<Option<&NeighborhoodFit<T>>> = vec![None; p];
    for f in fits {
        if f.s < p {
            slots[f.s] = Some(f);
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(s, f)| f.ok_or(Error::MissingFit(s)))
        .collect()
}

/// Stitched edges with the mean of the nonzero endpoint weights.
pub fn stitch_weighted<T: Scalar>(
    fits: &[NeighborhoodFit<T>],
    p: usize,
    rule: StitchRule,
) -> Result<BTreeMap<(usize, usize), T>> {
    let fits = by_node(fits, p)?;
    let mut out = BTreeMap::new();
    for s in 0..p {
        for t in s + 1..p {
            let a = fits[s].weight_to(t);
            let b = fits[t].weight_to(s);
            let (za, zb) = (a != T::zero(), b != T::zero());
            let keep = match rule {
                StitchRule::Or => za || zb,
                StitchRule::And => za && zb,
            };
            if keep {
                let w = if za && zb {
                    (a + b) / T::lit(2.0)
                } else if za {
                    a
                } else {
                    b
                };
                out.insert((s, t), w);
            }
        }
    }
    Ok(out)
}

pub fn stitch<T: Scalar>(fits: &[NeighborhoodFit<T>], p: usize, rule: StitchRule) -> Result<EdgeSet> {
    Ok(stitch_weighted(fits, p, rule)?.into_keys().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Score {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub hamming: usize,
    pub exact_recovery: bool,
}

/// Compares an estimated edge set with the truth over `p` nodes.
pub fn score(estimated: &EdgeSet, truth: &EdgeSet, p: usize) -> Score {
    let norm = |e: &EdgeSet| -> EdgeSet {
        e.iter()
            .map(|&(s, t)| edge_key(s, t))
            .filter(|&(s, t)| s != t && t < p)
            .collect()
    };
    let est = norm(estimated);
    let tru = norm(truth);
    let tp = est.intersection(&tru).count();
    let fp = est.len() - tp;
    let fn_ = tru.len() - tp;
    Score {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        hamming: fp + fn_,
        exact_recovery: fp + fn_ == 0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryReport {
    pub estimated_edges: EdgeSet,
    pub rule: StitchRule,
    pub score: Score,
    pub per_node_neighborhoods: BTreeMap<usize, Vec<usize>>,
}

impl RecoveryReport {
    pub fn exact_recovery(&self) -> bool {
        self.score.exact_recovery
    }

    pub fn hamming(&self) -> usize {
        self.score.hamming
    }
}

/// Stitches `fits` under `rule` and scores against `truth`.
pub fn recover<T: Scalar>(
    fits: &[NeighborhoodFit<T>],
    p: usize,
    rule: StitchRule,
    truth: &EdgeSet,
) -> Result<RecoveryReport> {
    let estimated_edges = stitch(fits, p, rule)?;
    let per_node_neighborhoods = by_node(fits, p)?
        .into_iter()
        .map(|f| (f.s, f.edge_weights().into_iter().map(|(t, _)| t).collect()))
        .collect();
    Ok(RecoveryReport {
        score: score(&estimated_edges, truth, p),
        estimated_edges,
        rule,
        per_node_neighborhoods,
    })
}

/// Sorted `s t weight` lines.
pub fn format_edge_list<T: Scalar>(edges: &BTreeMap<(usize, usize), T>) -> String {
    let mut out = String::new();
    for (&(s, t), &w) in edges {
        let _ = writeln!(out, "{s}\t{t}\t{}", w.as_f64());
    }
    out
}

/// Parses `s t [weight]` lines; blank lines and `#` comments are skipped.
pub fn parse_edge_list(path: &str, text: &str) -> Result<Vec<(usize, usize, Option<f64>)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(path, k + 1, 1, "expected `s t [weight]`"));
        }
        let node = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| Error::parse(path, k + 1, i + 1, format!("bad node index {:?}", fields[i])))
        };
        let weight = match fields.get(2) {
            Some(w) => Some(
                w.parse::<f64>()
                    .map_err(|_| Error::parse(path, k + 1, 3, format!("bad weight {w:?}")))?,
            ),
            None => None,
        };
        out.push((node(0)?, node(1)?, weight));
    }
    Ok(out)
}

#[derive(Serialize)]
struct AdjacencyDoc {
    p: usize,
    edges: usize,
    adjacency: BTreeMap<usize, Vec<usize>>,
}

/// Minimal JSON adjacency document listing every node's neighbors.
pub fn adjacency_json(p: usize, edges: &EdgeSet) -> String {
    let mut adjacency: BTreeMap<usize, Vec<usize>> = (0..p).map(|s| (s, Vec::new())).collect();
    for &(s, t) in edges {
        adjacency.entry(s).or_default().push(t);
        adjacency.entry(t).or_default().push(s);
    }
    for v in adjacency.values_mut() {
        v.sort_unstable();
    }
    let doc = AdjacencyDoc {
        p,
        edges: edges.len(),
        adjacency,
    };
    serde_json::to_string_pretty(&doc).expect("adjacency serializes") + "\n"
}
