//! Entity linking: relabel graph nodes with the Wikipedia title they resolve to.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Label, RelationalGraph};
use crate::parallel::{self, Execution};
use crate::wiki::WikiSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub original: Label,
    pub linked: Option<String>,
    /// Set when this node shares its final label with at least one other node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_into: Option<Label>,
}

impl LinkResult {
    /// Label the node carries after linking.
    pub fn label(&self) -> Label {
        self.linked
            .as_deref()
            .and_then(|t| Label::new(t).ok())
            .unwrap_or_else(|| self.original.clone())
    }
}

pub fn link_node(label: &Label, wiki: &dyn WikiSource) -> Result<LinkResult> {
    let linked = wiki
        .search_title(label.raw())?
        .filter(|t| !t.trim().is_empty());
    Ok(LinkResult {
        original: label.clone(),
        linked,
        merged_into: None,
    })
}

#[derive(Clone, Debug, Default)]
pub struct Linked {
    pub graph: RelationalGraph,
    pub links: Vec<LinkResult>,
    pub warnings: Vec<String>,
}

/// Relabel every node of `g`. Relation labels are left alone.
///
/// When `fallback` is set, a node whose lookup fails on a transport error keeps
/// its label and a warning is recorded; otherwise the error is returned.
pub fn apply_linking(g: &RelationalGraph, wiki: &dyn WikiSource, exec: Execution, fallback: bool) -> Result<Linked> {
    let nodes: Vec<Label> = g.nodes().into_iter().collect();
    let outcomes = parallel::map(&nodes, exec, |n| link_node(n, wiki));

    let mut warnings = Vec::new();
    let mut links = Vec::with_capacity(nodes.len());
    for (node, outcome) in nodes.iter().zip(outcomes) {
        match outcome {
            Ok(link) => links.push(link),
            Err(e) if fallback && e.is_transport() => {
                warnings.push(format!("entity linking skipped for {:?}: {e}", node.raw()));
                links.push(LinkResult {
                    original: node.clone(),
                    linked: None,
                    merged_into: None,
                });
            }
            Err(e) => return Err(e),
        }
    }

    let mut fan_in: HashMap<Label, usize> = HashMap::new();
    for link in &links {
        *fan_in.entry(link.label()).or_default() += 1;
    }
    for link in &mut links {
        let target = link.label();
        if fan_in[&target] > 1 {
            link.merged_into = Some(target);
        }
    }

    let relabel: BTreeMap<Label, Label> = links.iter().map(|l| (l.original.clone(), l.label())).collect();
    let graph = g.map_nodes(|n| relabel[n].clone());
    Ok(Linked { graph, links, warnings })
}
