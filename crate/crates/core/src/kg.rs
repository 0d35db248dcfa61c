//! Ground-truth knowledge graph for one option.
//!
//! Every node of the option's propositional graph is looked up on Wikipedia;
//! the lead section of the article found is capped and sent through relation
//! extraction, and the per-node graphs are unioned. The article text depends
//! on the option only through which nodes the propositional graph contains.

use serde::{Deserialize, Serialize};

use crate::backends::ExtractionBackend;
use crate::error::{Error, Result};
use crate::graph::{Label, RelationalGraph};
use crate::parallel::{self, Execution};
use crate::store::sha256_hex;
use crate::wiki::WikiSource;

pub const DEFAULT_SUMMARY_CAP: usize = 1200;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStatus {
    Fetched,
    NoPage,
    EmptyArticle,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgSource {
    pub label: Label,
    pub title: Option<String>,
    pub article_digest: Option<String>,
    pub triplet_count: usize,
    pub status: SourceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// The triplets this node's article contributed.
    #[serde(skip)]
    pub triplets: RelationalGraph,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KgProvenance {
    pub sources: Vec<KgSource>,
}

#[derive(Clone, Debug)]
pub struct KgOptions {
    pub summary_cap: usize,
    /// Fail on the first per-node error instead of skipping the node.
    pub strict: bool,
    pub execution: Execution,
}

impl Default for KgOptions {
    fn default() -> Self {
        KgOptions {
            summary_cap: DEFAULT_SUMMARY_CAP,
            strict: false,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct KgBuild {
    pub graph: RelationalGraph,
    pub provenance: KgProvenance,
    pub warnings: Vec<String>,
}

/// Truncate to at most `cap` characters, preferring the end of a sentence.
pub fn cap_summary(text: &str, cap: usize) -> &str {
    let text = text.trim();
    let Some((limit, _)) = text.char_indices().nth(cap) else {
        return text;
    };
    let head = &text[..limit];
    let sentence_end = head
        .char_indices()
        .rev()
        .find(|&(i, c)| {
            matches!(c, '.' | '!' | '?')
                && head[i + c.len_utf8()..]
                    .chars()
                    .next()
                    .is_none_or(char::is_whitespace)
        })
        .map(|(i, c)| i + c.len_utf8());
    match sentence_end {
        Some(end) => &head[..end],
        None => head.trim_end(),
    }
}

fn source_for(node: &Label, extractor: &dyn ExtractionBackend, wiki: &dyn WikiSource, cap: usize) -> Result<KgSource> {
    let mut source = KgSource {
        label: node.clone(),
        title: None,
        article_digest: None,
        triplet_count: 0,
        status: SourceStatus::NoPage,
        detail: None,
        triplets: RelationalGraph::new(),
    };
    let Some(title) = wiki.search_title(node.raw())? else {
        return Ok(source);
    };
    source.title = Some(title.clone());
    let article = match wiki.get_summary(&title) {
        Ok(a) => a,
        Err(Error::NotFound(_)) => return Ok(source),
        Err(e) => return Err(e),
    };
    let text = cap_summary(&article.summary, cap);
    source.article_digest = Some(sha256_hex(text.as_bytes()));
    if text.is_empty() {
        source.status = SourceStatus::EmptyArticle;
        return Ok(source);
    }
    source.triplets = extractor.extract(text)?;
    source.triplet_count = source.triplets.len();
    source.status = SourceStatus::Fetched;
    Ok(source)
}

pub fn build_kg(
    pg: &RelationalGraph,
    extractor: &dyn ExtractionBackend,
    wiki: &dyn WikiSource,
    options: &KgOptions,
) -> Result<KgBuild> {
    let mut warnings = Vec::new();
    if pg.is_empty() {
        warnings.push("propositional graph is empty; knowledge graph left empty".to_owned());
        return Ok(KgBuild {
            warnings,
            ..Default::default()
        });
    }

    let nodes: Vec<Label> = pg.nodes().into_iter().collect();
    let outcomes = parallel::map(&nodes, options.execution, |n| {
        source_for(n, extractor, wiki, options.summary_cap)
    });

    let mut sources = Vec::with_capacity(nodes.len());
    for (node, outcome) in nodes.into_iter().zip(outcomes) {
        match outcome {
            Ok(s) => sources.push(s),
            Err(e) if !options.strict => {
                warnings.push(format!("knowledge for {:?} skipped: {e}", node.raw()));
                sources.push(KgSource {
                    label: node,
                    title: None,
                    article_digest: None,
                    triplet_count: 0,
                    status: SourceStatus::Failed,
                    detail: Some(e.to_string()),
                    triplets: RelationalGraph::new(),
                });
            }
            Err(e) => return Err(e),
        }
    }

    let graph = sources
        .iter()
        .fold(RelationalGraph::new(), |acc, s| acc.union(&s.triplets));
    Ok(KgBuild {
        graph,
        provenance: KgProvenance { sources },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::FixtureExtractor;
    use crate::graph::Triplet;
    use crate::wiki::FixtureWiki;

    fn g(ts: &[(&str, &str, &str)]) -> RelationalGraph {
        ts.iter().map(|(s, r, o)| Triplet::parse(s, r, o).unwrap()).collect()
    }

    const OBAMA: &str = "Barack Obama is an American politician who served as the 44th president of the United States.";
    const HAWAII: &str = "Hawaii is an island state of the United States.";

    fn fixtures() -> (FixtureExtractor, FixtureWiki) {
        let mut ex = FixtureExtractor::new("fx");
        ex.insert(OBAMA, g(&[("Barack Obama", "position held", "President of the United States"), ("Barack Obama", "country of citizenship", "United States")]));
        ex.insert(HAWAII, g(&[("Hawaii", "country", "United States")]));
        let mut w = FixtureWiki::new();
        w.add_article("Barack Obama", OBAMA);
        w.add_article("Hawaii", HAWAII);
        w.add_search("Atlantis", None);
        (ex, w)
    }

    #[test]
    fn union_of_article_extractions() {
        let (ex, w) = fixtures();
        let pg = g(&[("Barack Obama", "born in", "Hawaii")]);
        let kg = build_kg(&pg, &ex, &w, &KgOptions::default()).unwrap();
        let expected = ex.extract(OBAMA).unwrap().union(&ex.extract(HAWAII).unwrap());
        assert_eq!(kg.graph, expected);
        assert_eq!(kg.graph.len(), 3);
        let counts: usize = kg.provenance.sources.iter().map(|s| s.triplet_count).sum();
        assert!(counts >= kg.graph.len());
    }

    #[test]
    fn missing_page_contributes_nothing() {
        let (ex, w) = fixtures();
        let pg = g(&[("Atlantis", "located in", "Hawaii")]);
        let kg = build_kg(&pg, &ex, &w, &KgOptions::default()).unwrap();
        assert_eq!(kg.graph, ex.extract(HAWAII).unwrap());
        let atlantis = &kg.provenance.sources[0];
        assert_eq!(atlantis.status, SourceStatus::NoPage);
        assert_eq!(atlantis.triplet_count, 0);
    }

    #[test]
    fn empty_pg_gives_empty_kg_with_warning() {
        let (ex, w) = fixtures();
        let kg = build_kg(&RelationalGraph::new(), &ex, &w, &KgOptions::default()).unwrap();
        assert!(kg.graph.is_empty());
        assert_eq!(kg.warnings.len(), 1);
    }

    #[test]
    fn strictness_controls_failures() {
        let (_, w) = fixtures();
        let ex = FixtureExtractor::new("empty");
        let pg = g(&[("Barack Obama", "born in", "Hawaii")]);
        let lenient = build_kg(&pg, &ex, &w, &KgOptions::default()).unwrap();
        assert!(lenient.graph.is_empty());
        assert_eq!(lenient.warnings.len(), 2);
        assert!(lenient.provenance.sources.iter().all(|s| s.status == SourceStatus::Failed));
        let strict = KgOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(build_kg(&pg, &ex, &w, &strict), Err(Error::MissingFixture { .. })));
    }

    #[test]
    fn summary_cap_prefers_sentence_boundary() {
        assert_eq!(cap_summary("Short.", 1200), "Short.");
        assert_eq!(cap_summary("One two. Three four. Five", 22), "One two. Three four.");
        assert_eq!(cap_summary("Version 1.5 is out", 12), "Version 1.5");
        assert_eq!(cap_summary("abcdef", 3), "abc");
        assert_eq!(cap_summary("é. ü", 2), "é.");
    }
}
