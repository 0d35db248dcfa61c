use std::collections::BTreeSet;

use proptest::prelude::*;

use kgmcqa_core::alignment::{residual_sets, AlignedNode, MatchKind};
use kgmcqa_core::kg::cap_summary;
use kgmcqa_core::parallel::{self, Execution};
use kgmcqa_core::scoring::select_by_scores;
use kgmcqa_core::{edge_score, node_score, solve_assignment, Alignment, Label, RelationalGraph, SelectionKind, Triplet};

const NODES: &[&str] = &["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
const RELATIONS: &[&str] = &["r", "s", "t"];

fn triplet() -> impl Strategy<Value = Triplet> {
    (0..NODES.len(), 0..RELATIONS.len(), 0..NODES.len())
        .prop_map(|(s, r, o)| Triplet::parse(NODES[s], RELATIONS[r], NODES[o]).unwrap())
}

fn graph(max: usize) -> impl Strategy<Value = RelationalGraph> {
    prop::collection::vec(triplet(), 0..=max).prop_map(|ts| ts.into_iter().collect())
}

fn weights(max_side: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, c), r)
    })
}

/// Best total over every injection of the smaller side into the larger, summed in row order.
fn brute_force(w: &[Vec<f64>]) -> f64 {
    let rows = w.len();
    let cols = w[0].len();
    fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>, picked: &mut Vec<(usize, usize)>, skips: usize, best: &mut f64) {
        if row == w.len() {
            let total: f64 = picked.iter().map(|&(r, c)| w[r][c]).sum();
            *best = best.max(total);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                picked.push((row, c));
                go(w, row + 1, used, picked, skips, best);
                picked.pop();
                used[c] = false;
            }
        }
        if skips > 0 {
            go(w, row + 1, used, picked, skips - 1, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(w, 0, &mut vec![false; cols], &mut Vec::new(), rows.saturating_sub(cols), &mut best);
    best
}

proptest! {
    #[test]
    fn union_is_a_set_union(a in graph(8), b in graph(8)) {
        let u = a.union(&b);
        prop_assert_eq!(&u, &b.union(&a));
        prop_assert_eq!(&a.union(&a), &a);
        prop_assert!(u.len() >= a.len().max(b.len()));
        prop_assert!(u.len() <= a.len() + b.len());
        prop_assert!(a.iter().chain(b.iter()).all(|t| u.contains(t)));
        prop_assert_eq!(u.len() + a.intersect_count(&b), a.len() + b.len());
    }

    #[test]
    fn intersect_count_counts_common_triplets(a in graph(8), b in graph(8)) {
        let oracle = a.iter().filter(|t| b.contains(t)).count();
        prop_assert_eq!(a.intersect_count(&b), oracle);
        prop_assert_eq!(b.intersect_count(&a), oracle);
    }

    #[test]
    fn substitution_round_trips_for_fresh_labels(g in graph(8), from in 0..NODES.len()) {
        let from = Label::new(NODES[from]).unwrap();
        let fresh = Label::new("omega").unwrap();
        let there = g.substitute(&from, &fresh);
        prop_assert!(!there.nodes().contains(&from));
        prop_assert_eq!(there.len(), g.len());
        prop_assert_eq!(there.substitute(&fresh, &from), g);
    }

    #[test]
    fn projection_under_identity_is_identity(g in graph(8)) {
        prop_assert_eq!(g.project(&Alignment::identity(g.nodes())).unwrap(), g);
    }

    #[test]
    fn residuals_partition(a in graph(6), b in graph(6)) {
        let (pa, pb) = (a.nodes(), b.nodes());
        let (ra, rb) = residual_sets(&pa, &pb);
        let shared: BTreeSet<Label> = pa.intersection(&pb).cloned().collect();
        prop_assert!(ra.is_disjoint(&pb) && rb.is_disjoint(&pa));
        prop_assert_eq!(ra.len() + shared.len(), pa.len());
        prop_assert_eq!(rb.len() + shared.len(), pb.len());
    }

    #[test]
    fn assignment_matches_brute_force(w in weights(5)) {
        let a = solve_assignment(&w);
        prop_assert_eq!(a.pairs.len(), w.len().min(w[0].len()));
        prop_assert_eq!(a.total, brute_force(&w));
        let rows: BTreeSet<usize> = a.pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<usize> = a.pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(rows.len(), a.pairs.len());
        prop_assert_eq!(cols.len(), a.pairs.len());
    }

    #[test]
    fn assignment_total_ignores_row_order(w in weights(5), rot in 0usize..5) {
        let mut shuffled = w.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let (a, b) = (solve_assignment(&w).total, solve_assignment(&shuffled).total);
        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn edge_score_is_bounded_and_monotone(pg in graph(8), kg in graph(8), extra in triplet()) {
        let phi = Alignment::identity(pg.nodes());
        let v = edge_score(&pg, &kg, &phi).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.edge_score));
        prop_assert_eq!(v.verified.len() + v.unverified.len(), pg.len());
        let bigger = edge_score(&pg, &kg.with(extra), &phi).unwrap();
        prop_assert!(bigger.edge_score >= v.edge_score);
        if pg.is_empty() {
            prop_assert!(v.empty_pg);
            prop_assert_eq!(v.edge_score, 0.0);
        }
    }

    #[test]
    fn node_score_is_the_mean_contribution(sims in prop::collection::vec(prop::option::of(0.0f64..=1.0), 1..8)) {
        let phi = Alignment::from_pairs(sims.iter().enumerate().map(|(i, s)| {
            let source = Label::new(format!("p{i}")).unwrap();
            let node = match s {
                Some(w) => AlignedNode::new(Label::new(format!("k{i}")).unwrap(), *w, MatchKind::Matched),
                None => AlignedNode::new(source.clone(), 0.0, MatchKind::Unmatched),
            };
            (source, node)
        }));
        let mean = sims.iter().map(|s| s.unwrap_or(0.0)).sum::<f64>() / sims.len() as f64;
        prop_assert!((node_score(&phi) - mean).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&node_score(&phi)));
    }

    #[test]
    fn unique_edge_maximum_ignores_node_scores_and_seed(
        edges in prop::collection::vec(0u8..=8, 4),
        nodes in prop::collection::vec(0.0f64..=1.0, 4),
        seed in any::<u64>(),
    ) {
        let best = *edges.iter().max().unwrap();
        prop_assume!(edges.iter().filter(|&&e| e == best).count() == 1);
        let scores: Vec<(f64, f64)> = edges.iter().zip(&nodes).map(|(&e, &n)| (f64::from(e) / 8.0, n)).collect();
        let s = select_by_scores(&scores, seed);
        prop_assert_eq!(s.kind, SelectionKind::Edge);
        prop_assert_eq!(Some(s.chosen_index), edges.iter().position(|&e| e == best));
        let flat: Vec<(f64, f64)> = scores.iter().map(|&(e, _)| (e, 0.5)).collect();
        prop_assert_eq!(select_by_scores(&flat, seed.wrapping_add(1)).chosen_index, s.chosen_index);
    }

    #[test]
    fn random_choice_stays_in_the_tie_set(n in 0.0f64..=1.0, seed in any::<u64>()) {
        let scores = [(0.5, n), (0.1, 1.0), (0.5, n), (0.5, n)];
        let s = select_by_scores(&scores, seed);
        prop_assert_eq!(s.kind, SelectionKind::RandomTiebreak);
        prop_assert!([0, 2, 3].contains(&s.chosen_index));
        prop_assert_eq!(select_by_scores(&scores, seed), s);
    }

    #[test]
    fn summary_cap_never_exceeds_the_cap(text in "[a-zé .!?]{0,300}", cap in 1usize..200) {
        let out = cap_summary(&text, cap);
        prop_assert!(out.chars().count() <= cap);
        prop_assert!(text.trim().starts_with(out));
    }

    #[test]
    fn parallel_map_equals_sequential(xs in prop::collection::vec(any::<u32>(), 0..200)) {
        let f = |x: &u32| x.wrapping_mul(2_654_435_761);
        prop_assert_eq!(parallel::map(&xs, Execution::Parallel, f), parallel::map(&xs, Execution::Sequential, f));
    }
}
