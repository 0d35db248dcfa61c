//! Node correspondence between a propositional graph and a knowledge graph.
//!
//! Labels shared by both graphs map to themselves. The remaining nodes are
//! paired by a maximum-weight bipartite matching over label similarities.
//! Propositional nodes left over when the knowledge side runs out map to
//! themselves with zero similarity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backends::{cosine, Embedder};
use crate::error::{Error, Result};
use crate::graph::Label;

/// Tolerance used when deciding whether a partial assignment can still reach the optimum.
const OPTIMUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Matched,
    Unmatched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedNode {
    pub target: Label,
    pub similarity: f64,
    pub kind: MatchKind,
}

impl AlignedNode {
    pub fn new(target: Label, similarity: f64, kind: MatchKind) -> Self {
        AlignedNode {
            target,
            similarity,
            kind,
        }
    }

    /// Contribution to the node score.
    pub fn score(&self) -> f64 {
        match self.kind {
            MatchKind::Exact => 1.0,
            MatchKind::Matched => self.similarity,
            MatchKind::Unmatched => 0.0,
        }
    }
}

/// Mapping from every propositional node to a knowledge-graph node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Alignment {
    mapping: BTreeMap<Label, AlignedNode>,
}

#[derive(Serialize, Deserialize)]
struct AlignmentEntry {
    source: Label,
    target: Label,
    similarity: f64,
    kind: MatchKind,
}

impl Alignment {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, AlignedNode)>) -> Self {
        Alignment {
            mapping: pairs.into_iter().collect(),
        }
    }

    pub fn identity(nodes: impl IntoIterator<Item = Label>) -> Self {
        Self::from_pairs(
            nodes
                .into_iter()
                .map(|n| (n.clone(), AlignedNode::new(n, 1.0, MatchKind::Exact))),
        )
    }

    pub fn target(&self, source: &Label) -> Option<&Label> {
        self.mapping.get(source).map(|a| &a.target)
    }

    pub fn get(&self, source: &Label) -> Option<&AlignedNode> {
        self.mapping.get(source)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &AlignedNode)> {
        self.mapping.iter()
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Sum of node-score contributions over all sources.
    pub fn total_similarity(&self) -> f64 {
        self.mapping.values().map(AlignedNode::score).sum()
    }

    pub fn count(&self, kind: MatchKind) -> usize {
        self.mapping.values().filter(|a| a.kind == kind).count()
    }
}

impl Serialize for Alignment {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.mapping.iter().map(|(source, a)| AlignmentEntry {
            source: source.clone(),
            target: a.target.clone(),
            similarity: a.similarity,
            kind: a.kind,
        }))
    }
}

impl<'de> Deserialize<'de> for Alignment {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<AlignmentEntry>::deserialize(deserializer)?;
        Ok(Alignment::from_pairs(entries.into_iter().map(|e| {
            (e.source, AlignedNode::new(e.target, e.similarity, e.kind))
        })))
    }
}

/// `V_P \ V_K` and `V_K \ V_P`.
pub fn residual_sets(
    pg_nodes: &BTreeSet<Label>,
    kg_nodes: &BTreeSet<Label>,
) -> (BTreeSet<Label>, BTreeSet<Label>) {
    (
        pg_nodes.difference(kg_nodes).cloned().collect(),
        kg_nodes.difference(pg_nodes).cloned().collect(),
    )
}

/// Similarities between residual propositional nodes (rows) and residual knowledge nodes (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    pub rows: Vec<Label>,
    pub cols: Vec<Label>,
    pub weights: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn new(rows: Vec<Label>, cols: Vec<Label>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != rows.len() || weights.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::Precondition("weight matrix shape does not match labels".into()));
        }
        if weights.iter().flatten().any(|w| !w.is_finite() || w.abs() > 1.0) {
            return Err(Error::Precondition("similarities must be finite and within [-1, 1]".into()));
        }
        Ok(WeightMatrix { rows, cols, weights })
    }

    /// Embed every label once and fill the matrix with cosine similarities.
    pub fn from_embedder(rows: Vec<Label>, cols: Vec<Label>, embedder: &dyn Embedder) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            let weights = vec![Vec::new(); rows.len()];
            return WeightMatrix::new(rows, cols, weights);
        }
        let texts: Vec<String> = rows.iter().chain(&cols).map(|l| l.raw().to_owned()).collect();
        let vectors = embedder.embed(&texts)?;
        let (row_vecs, col_vecs) = vectors.split_at(rows.len());
        let mut weights = Vec::with_capacity(rows.len());
        for (r, rv) in rows.iter().zip(row_vecs) {
            let mut line = Vec::with_capacity(cols.len());
            for (c, cv) in cols.iter().zip(col_vecs) {
                let w = match embedder.similarity_override(r.norm(), c.norm()) {
                    Some(w) => w,
                    None => cosine(rv, cv)?,
                };
                line.push(w);
            }
            weights.push(line);
        }
        WeightMatrix::new(rows, cols, weights)
    }
}

/// A maximum-weight matching: `(row, col)` pairs in row order and their summed weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Maximum-weight bipartite matching of size `min(rows, cols)`.
///
/// Among optimal matchings the lexicographically smallest sequence of
/// `(row, col)` pairs is returned.
pub fn solve_assignment(weights: &[Vec<f64>]) -> Assignment {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    debug_assert!(weights.iter().all(|r| r.len() == cols));

    let all_rows: Vec<usize> = (0..rows).collect();
    let all_cols: Vec<usize> = (0..cols).collect();
    let optimum = best_weight(weights, &all_rows, &all_cols);
    let needed_total = rows.min(cols);

    let mut pairs = Vec::with_capacity(needed_total);
    let mut fixed = 0.0;
    let mut free_cols = all_cols;
    for row in 0..rows {
        let needed = needed_total - pairs.len();
        if needed == 0 {
            break;
        }
        let rest: Vec<usize> = (row + 1..rows).collect();
        let mut chosen = None;
        if rest.len().min(free_cols.len() - 1) >= needed - 1 {
            for (k, &col) in free_cols.iter().enumerate() {
                let mut others = free_cols.clone();
                others.remove(k);
                let candidate = fixed + weights[row][col] + best_weight(weights, &rest, &others);
                if candidate >= optimum - OPTIMUM_TOLERANCE {
                    chosen = Some(k);
                    break;
                }
            }
        }
        if let Some(k) = chosen {
            let col = free_cols.remove(k);
            fixed += weights[row][col];
            pairs.push((row, col));
        }
    }

    let total = pairs.iter().map(|&(r, c)| weights[r][c]).sum();
    Assignment { pairs, total }
}

/// Optimal weight of a matching of size `min(|rows|, |cols|)` on a sub-matrix.
fn best_weight(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let transposed = rows.len() > cols.len();
    let (n, m) = if transposed {
        (cols.len(), rows.len())
    } else {
        (rows.len(), cols.len())
    };
    let cost = |i: usize, j: usize| -> f64 {
        if transposed {
            -weights[rows[j]][cols[i]]
        } else {
            -weights[rows[i]][cols[j]]
        }
    };
    let assignment = hungarian_min(n, m, cost);
    -assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost(i, j))
        .sum::<f64>()
}

/// Minimum-cost assignment of `n` rows into `m >= n` columns with potentials.
/// Returns the column of each row.
fn hungarian_min(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Align propositional nodes to knowledge nodes.
///
/// With a threshold, pairs whose similarity falls below it are forbidden:
/// they enter the matching with weight zero and are reported as unmatched.
pub fn align(
    pg_nodes: &BTreeSet<Label>,
    kg_nodes: &BTreeSet<Label>,
    embedder: &dyn Embedder,
    threshold: Option<f64>,
) -> Result<Alignment> {
    let (pg_rest, kg_rest) = residual_sets(pg_nodes, kg_nodes);
    let mut mapping: BTreeMap<Label, AlignedNode> = pg_nodes
        .intersection(kg_nodes)
        .map(|n| (n.clone(), AlignedNode::new(n.clone(), 1.0, MatchKind::Exact)))
        .collect();

    let rows: Vec<Label> = pg_rest.into_iter().collect();
    let cols: Vec<Label> = kg_rest.into_iter().collect();
    let matrix = WeightMatrix::from_embedder(rows, cols, embedder)?;
    let allowed = |w: f64| threshold.is_none_or(|t| w >= t);
    let effective: Vec<Vec<f64>> = matrix
        .weights
        .iter()
        .map(|line| line.iter().map(|&w| if allowed(w) { w } else { 0.0 }).collect())
        .collect();

    let solution = solve_assignment(&effective);
    for &(r, c) in &solution.pairs {
        let w = matrix.weights[r][c];
        if allowed(w) {
            mapping.insert(
                matrix.rows[r].clone(),
                AlignedNode::new(matrix.cols[c].clone(), w, MatchKind::Matched),
            );
        }
    }
    for row in &matrix.rows {
        mapping
            .entry(row.clone())
            .or_insert_with(|| AlignedNode::new(row.clone(), 0.0, MatchKind::Unmatched));
    }
    Ok(Alignment { mapping })
}
