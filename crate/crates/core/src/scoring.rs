//! Edge and node scores, answer selection and the per-item report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::Alignment;
use crate::error::Result;
use crate::graph::{RelationalGraph, Triplet};
use crate::kg::KgProvenance;
use crate::linking::LinkResult;

/// Absolute tolerance under which two scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifiedEdge {
    pub pg: Triplet,
    pub projected: Triplet,
}

/// The edge-score part of a verdict.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeVerdict {
    pub edge_score: f64,
    pub verified: Vec<VerifiedEdge>,
    pub unverified: Vec<Triplet>,
    pub pg_size: usize,
    pub kg_size: usize,
    pub empty_pg: bool,
    /// Distinct propositional triplets shared a projected image, so the
    /// numerator counts fewer triplets than `verified` lists.
    pub projection_collapsed: bool,
}

/// `|project(pg) ∩ kg| / |pg|`, with every propositional triplet classified
/// by whether its projection is in `kg`.
pub fn edge_score(pg: &RelationalGraph, kg: &RelationalGraph, phi: &Alignment) -> Result<EdgeVerdict> {
    let projected = pg.project(phi)?;
    let mut verdict = EdgeVerdict {
        pg_size: pg.len(),
        kg_size: kg.len(),
        empty_pg: pg.is_empty(),
        projection_collapsed: projected.len() < pg.len(),
        ..Default::default()
    };
    for t in pg {
        let image = Triplet::new(
            phi.target(&t.subject).expect("projection succeeded").clone(),
            t.relation.clone(),
            phi.target(&t.object).expect("projection succeeded").clone(),
        );
        if kg.contains(&image) {
            verdict.verified.push(VerifiedEdge {
                pg: t.clone(),
                projected: image,
            });
        } else {
            verdict.unverified.push(t.clone());
        }
    }
    if !pg.is_empty() {
        verdict.edge_score = projected.intersect_count(kg) as f64 / pg.len() as f64;
    }
    Ok(verdict)
}

/// Mean per-node contribution: 1 for exact, the similarity for matched, 0 for unmatched.
pub fn node_score(phi: &Alignment) -> f64 {
    if phi.is_empty() {
        return 0.0;
    }
    phi.iter().map(|(_, n)| n.score()).sum::<f64>() / phi.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionVerdict {
    pub option_index: usize,
    pub option: String,
    #[serde(flatten)]
    pub edge: EdgeVerdict,
    pub node_score: f64,
}

impl OptionVerdict {
    pub fn new(option_index: usize, option: impl Into<String>, edge: EdgeVerdict, phi: &Alignment) -> Self {
        OptionVerdict {
            option_index,
            option: option.into(),
            edge,
            node_score: node_score(phi),
        }
    }

    pub fn edge_score(&self) -> f64 {
        self.edge.edge_score
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionKind {
    Edge,
    NodeTiebreak,
    RandomTiebreak,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen_index: usize,
    pub kind: SelectionKind,
    /// Options still tied when the deciding stage ran.
    pub tie_set: Vec<usize>,
}

fn near_max(indices: &[usize], score: impl Fn(usize) -> f64) -> Vec<usize> {
    let best = indices.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    indices
        .iter()
        .copied()
        .filter(|&i| (score(i) - best).abs() <= TIE_TOLERANCE)
        .collect()
}

/// Pick from `(edge, node)` score pairs: highest edge score, then highest
/// node score, then a seeded uniform draw. The generator is only used when
/// both scores tie.
pub fn select_by_scores(scores: &[(f64, f64)], seed: u64) -> Selection {
    assert!(!scores.is_empty(), "nothing to select from");
    let all: Vec<usize> = (0..scores.len()).collect();
    let by_edge = near_max(&all, |i| scores[i].0);
    if let [only] = by_edge[..] {
        return Selection {
            chosen_index: only,
            kind: SelectionKind::Edge,
            tie_set: all,
        };
    }
    let by_node = near_max(&by_edge, |i| scores[i].1);
    if let [only] = by_node[..] {
        return Selection {
            chosen_index: only,
            kind: SelectionKind::NodeTiebreak,
            tie_set: by_edge,
        };
    }
    let pick = ChaCha8Rng::seed_from_u64(seed).random_range(0..by_node.len());
    Selection {
        chosen_index: by_node[pick],
        kind: SelectionKind::RandomTiebreak,
        tie_set: by_node,
    }
}

pub fn select_answer(verdicts: &[OptionVerdict], seed: u64) -> Selection {
    let scores: Vec<(f64, f64)> = verdicts.iter().map(|v| (v.edge_score(), v.node_score)).collect();
    select_by_scores(&scores, seed)
}

/// Everything computed for one option.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionTrace {
    #[serde(flatten)]
    pub verdict: OptionVerdict,
    pub pg: RelationalGraph,
    pub kg: RelationalGraph,
    pub alignment: Alignment,
    pub provenance: KgProvenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedTriplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Graph triplets with the placeholder spelled out for readers.
pub fn export_graph(g: &RelationalGraph) -> Vec<ExportedTriplet> {
    g.iter()
        .map(|t| ExportedTriplet {
            subject: t.subject.display(),
            relation: t.relation.display(),
            object: t.object.display(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub item_id: String,
    pub category: String,
    pub question: String,
    pub answer_index: usize,
    pub entity_linking: bool,
    pub template: Vec<ExportedTriplet>,
    pub options: Vec<OptionTrace>,
    pub chosen_index: usize,
    pub selection_kind: SelectionKind,
    pub tie_set: Vec<usize>,
    pub correct: bool,
    pub rng_seed: u64,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{AlignedNode, MatchKind};
    use crate::graph::Label;

    fn l(s: &str) -> Label {
        Label::new(s).unwrap()
    }

    fn g(ts: &[(&str, &str, &str)]) -> RelationalGraph {
        ts.iter().map(|(s, r, o)| Triplet::parse(s, r, o).unwrap()).collect()
    }

    fn phi(pairs: &[(&str, &str, f64, MatchKind)]) -> Alignment {
        Alignment::from_pairs(
            pairs
                .iter()
                .map(|&(s, t, w, k)| (l(s), AlignedNode::new(l(t), w, k))),
        )
    }

    #[test]
    fn full_inclusion_scores_one() {
        let pg = g(&[("a", "r", "b"), ("b", "s", "c")]);
        let kg = pg.union(&g(&[("x", "y", "z")]));
        let v = edge_score(&pg, &kg, &Alignment::identity(pg.nodes())).unwrap();
        assert_eq!(v.edge_score, 1.0);
        assert_eq!(v.verified.len(), 2);
        assert!(v.unverified.is_empty());
    }

    #[test]
    fn two_of_three_verified() {
        let pg = g(&[("a", "r", "b"), ("b", "s", "c"), ("c", "t", "a")]);
        let kg = g(&[("A", "r", "B"), ("B", "s", "c")]);
        let p = phi(&[
            ("a", "A", 0.8, MatchKind::Matched),
            ("b", "B", 0.7, MatchKind::Matched),
            ("c", "c", 1.0, MatchKind::Exact),
        ]);
        let v = edge_score(&pg, &kg, &p).unwrap();
        assert_eq!(v.edge_score, 2.0 / 3.0);
        assert_eq!(v.unverified, vec![Triplet::parse("c", "t", "a").unwrap()]);
    }

    #[test]
    fn empty_graphs() {
        let pg = g(&[("a", "r", "b")]);
        let v = edge_score(&pg, &RelationalGraph::new(), &Alignment::identity(pg.nodes())).unwrap();
        assert_eq!(v.edge_score, 0.0);
        let v = edge_score(&RelationalGraph::new(), &pg, &Alignment::default()).unwrap();
        assert_eq!(v.edge_score, 0.0);
        assert!(v.empty_pg);
    }

    #[test]
    fn collapse_is_flagged_and_counted_once() {
        let pg = g(&[("a", "r", "c"), ("b", "r", "c")]);
        let kg = g(&[("k", "r", "c")]);
        let p = phi(&[
            ("a", "k", 0.9, MatchKind::Matched),
            ("b", "k", 0.8, MatchKind::Matched),
            ("c", "c", 1.0, MatchKind::Exact),
        ]);
        let v = edge_score(&pg, &kg, &p).unwrap();
        assert!(v.projection_collapsed);
        assert_eq!(v.verified.len(), 2);
        assert_eq!(v.edge_score, 0.5);
    }

    #[test]
    fn node_score_examples() {
        let p = phi(&[
            ("a", "a", 1.0, MatchKind::Exact),
            ("b", "b", 1.0, MatchKind::Exact),
            ("c", "k", 0.6, MatchKind::Matched),
            ("d", "d", 0.0, MatchKind::Unmatched),
        ]);
        assert!((node_score(&p) - 0.65).abs() < 1e-12);
        assert_eq!(node_score(&phi(&[("x", "y", 0.91, MatchKind::Matched)])), 0.91);
        assert_eq!(node_score(&Alignment::identity([l("a"), l("b")])), 1.0);
        assert_eq!(node_score(&Alignment::default()), 0.0);
    }

    #[test]
    fn unique_edge_max_wins() {
        let s = select_by_scores(&[(0.2, 0.0), (0.9, 0.0), (0.5, 1.0), (0.1, 1.0)], 3);
        assert_eq!((s.chosen_index, s.kind), (1, SelectionKind::Edge));
    }

    #[test]
    fn node_score_breaks_edge_ties() {
        let s = select_by_scores(&[(0.5, 0.7), (0.5, 0.9), (0.1, 1.0), (0.1, 1.0)], 3);
        assert_eq!((s.chosen_index, s.kind), (1, SelectionKind::NodeTiebreak));
        assert_eq!(s.tie_set, vec![0, 1]);
    }

    #[test]
    fn full_tie_uses_the_seed() {
        let scores = [(0.5, 0.5); 4];
        let first = select_by_scores(&scores, 42);
        assert_eq!(first.kind, SelectionKind::RandomTiebreak);
        for _ in 0..3 {
            assert_eq!(select_by_scores(&scores, 42), first);
        }
        let picks: std::collections::BTreeSet<usize> =
            (0..64).map(|seed| select_by_scores(&scores, seed).chosen_index).collect();
        assert_eq!(picks.len(), 4);
    }

    #[test]
    fn near_ties_within_tolerance() {
        let s = select_by_scores(&[(1.0 / 3.0, 0.2), (1.0 - 2.0 / 3.0, 0.4), (0.0, 0.0), (0.0, 0.0)], 0);
        assert_eq!((s.chosen_index, s.kind), (1, SelectionKind::NodeTiebreak));
    }
}
