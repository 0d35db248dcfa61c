//! Answering one item end to end.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alignment::align;
use crate::backends::{EmbeddingBackend, ExtractionBackend};
use crate::error::Result;
use crate::graph::RelationalGraph;
use crate::kg::{build_kg, KgOptions, DEFAULT_SUMMARY_CAP};
use crate::linking::{apply_linking, LinkResult};
use crate::parallel::{self, Execution};
use crate::scoring::{
    edge_score, export_graph, select_answer, OptionTrace, OptionVerdict, SelectionKind, VerificationReport,
    REPORT_SCHEMA_VERSION,
};
use crate::template::{build_template, McqItem, PgTemplate, OPTION_COUNT};
use crate::wiki::WikiSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub entity_linking: bool,
    /// Residual pairs below this similarity are never matched.
    pub similarity_threshold: Option<f64>,
    pub summary_cap: usize,
    /// Fail the item on any lookup error instead of degrading with a warning.
    pub strict: bool,
    pub execution: Execution,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            entity_linking: true,
            similarity_threshold: Some(0.0),
            summary_cap: DEFAULT_SUMMARY_CAP,
            strict: false,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub extractor: String,
    pub embedder: String,
    pub embedding_dim: usize,
    pub wiki: String,
}

#[derive(Clone)]
pub struct Engine {
    extractor: Arc<dyn ExtractionBackend>,
    embedder: Arc<dyn EmbeddingBackend>,
    wiki: Arc<dyn WikiSource>,
    config: EngineConfig,
}

struct Linked {
    graph: RelationalGraph,
    links: Vec<LinkResult>,
}

impl Engine {
    pub fn new(
        extractor: Arc<dyn ExtractionBackend>,
        embedder: Arc<dyn EmbeddingBackend>,
        wiki: Arc<dyn WikiSource>,
        config: EngineConfig,
    ) -> Self {
        Engine {
            extractor,
            embedder,
            wiki,
            config,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn backends(&self) -> BackendInfo {
        BackendInfo {
            extractor: self.extractor.name().to_owned(),
            embedder: self.embedder.name().to_owned(),
            embedding_dim: self.embedder.dim(),
            wiki: self.wiki.kind().to_owned(),
        }
    }

    fn link(&self, g: RelationalGraph, warnings: &mut Vec<String>) -> Result<Linked> {
        if !self.config.entity_linking {
            return Ok(Linked { graph: g, links: Vec::new() });
        }
        let out = apply_linking(&g, self.wiki.as_ref(), self.config.execution, !self.config.strict)?;
        warnings.extend(out.warnings);
        Ok(Linked {
            graph: out.graph,
            links: out.links,
        })
    }

    fn evaluate_option(&self, index: usize, option: &str, template: &PgTemplate) -> Result<(OptionTrace, Vec<String>)> {
        let mut warnings = Vec::new();
        let pg_raw = template.instantiate(option)?;
        let pg = self.link(pg_raw, &mut warnings)?;

        let kg_opts = KgOptions {
            summary_cap: self.config.summary_cap,
            strict: self.config.strict,
            execution: self.config.execution,
        };
        let built = build_kg(&pg.graph, self.extractor.as_ref(), self.wiki.as_ref(), &kg_opts)?;
        warnings.extend(built.warnings);
        let kg = self.link(built.graph, &mut warnings)?;

        let phi = align(
            &pg.graph.nodes(),
            &kg.graph.nodes(),
            self.embedder.as_ref(),
            self.config.similarity_threshold,
        )?;
        let edge = edge_score(&pg.graph, &kg.graph, &phi)?;
        if edge.projection_collapsed {
            warnings.push("alignment mapped distinct triplets onto one knowledge triplet".into());
        }
        let verdict = OptionVerdict::new(index, option, edge, &phi);
        let mut links = pg.links;
        links.extend(kg.links);
        links.sort_by(|a, b| a.original.cmp(&b.original));
        links.dedup_by(|a, b| a.original == b.original);
        let trace = OptionTrace {
            verdict,
            pg: pg.graph,
            kg: kg.graph,
            alignment: phi,
            provenance: built.provenance,
            links,
        };
        Ok((trace, warnings.into_iter().map(|w| format!("option {}: {w}", index + 1)).collect()))
    }

    pub fn answer_item(&self, item: &McqItem, seed: u64) -> Result<VerificationReport> {
        let template = build_template(item, self.extractor.as_ref(), self.config.execution)?;
        let mut warnings: Vec<String> = template
            .warnings
            .iter()
            .map(|w| format!("option {}: {}", w.option_index + 1, w.message))
            .collect();
        if template.graph.is_empty() {
            warnings.push("template is empty; every option scores zero".into());
        } else if !template.has_placeholder() {
            warnings.push("template has no placeholder; options are indistinguishable".into());
        }

        let indices: Vec<usize> = (0..OPTION_COUNT).collect();
        let evaluated = parallel::try_map(&indices, self.config.execution, |&i| {
            self.evaluate_option(i, &item.options[i], &template)
        })?;

        let mut options = Vec::with_capacity(OPTION_COUNT);
        for (trace, w) in evaluated {
            warnings.extend(w);
            options.push(trace);
        }
        let verdicts: Vec<OptionVerdict> = options.iter().map(|t| t.verdict.clone()).collect();
        let selection = select_answer(&verdicts, seed);
        if selection.kind == SelectionKind::RandomTiebreak {
            warnings.push(format!(
                "options {:?} tied on both scores; chose at random",
                selection.tie_set.iter().map(|i| i + 1).collect::<Vec<_>>()
            ));
        }

        Ok(VerificationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            item_id: item.id.clone(),
            category: item.category.clone(),
            question: item.question.clone(),
            answer_index: item.answer_index,
            entity_linking: self.config.entity_linking,
            template: export_graph(&template.graph),
            options,
            chosen_index: selection.chosen_index,
            selection_kind: selection.kind,
            tie_set: selection.tie_set,
            correct: selection.chosen_index == item.answer_index,
            rng_seed: seed,
            warnings,
        })
    }
}
