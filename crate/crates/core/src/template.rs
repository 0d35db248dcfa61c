//! Questions, datasets and propositional graph templates.
//!
//! Each option is substituted into the question, the sentence is sent through
//! relation extraction, and the option's node is replaced by the reserved
//! placeholder. The union of the four results is the template shared by every
//! option, so per-option graphs differ only in the option label.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::ExtractionBackend;
use crate::error::{Error, Result};
use crate::graph::{contains_whole_word, normalize_text, Label, RelationalGraph, SubstitutionOutcome};
use crate::parallel::{self, Execution};

pub const BLANK: &str = "{x}";
pub const OPTION_COUNT: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McqItem {
    pub id: String,
    pub category: String,
    /// Question text containing exactly one `{x}` blank.
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl McqItem {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id must be non-empty".into());
        }
        if self.category.trim().is_empty() {
            return Err("category must be non-empty".into());
        }
        let blanks = self.question.matches(BLANK).count();
        if blanks != 1 {
            return Err(format!("question must contain exactly one {BLANK} blank, found {blanks}"));
        }
        if self.options.len() != OPTION_COUNT {
            return Err(format!("expected {OPTION_COUNT} options, found {}", self.options.len()));
        }
        let mut seen = HashSet::new();
        for (i, o) in self.options.iter().enumerate() {
            let norm = normalize_text(o);
            if norm.is_empty() {
                return Err(format!("option {i} is empty"));
            }
            if Label::new(o.as_str()).is_ok_and(|l| l.is_placeholder() || l.mentions_placeholder()) {
                return Err(format!("option {i} uses the reserved placeholder \"#\""));
            }
            if !seen.insert(norm) {
                return Err(format!("option {i} ({o:?}) duplicates another option"));
            }
        }
        if self.answer_index >= OPTION_COUNT {
            return Err(format!("answer_index {} is outside 0..{OPTION_COUNT}", self.answer_index));
        }
        Ok(())
    }

    pub fn render_question(&self, option_index: usize) -> String {
        self.question.replacen(BLANK, &self.options[option_index], 1)
    }
}

pub fn render_question(item: &McqItem, option_index: usize) -> String {
    item.render_question(option_index)
}

/// 1-based line on which each top-level array element starts.
fn element_start_lines(text: &str) -> Vec<usize> {
    let mut lines = Vec::new();
    let (mut line, mut depth) = (1, 0usize);
    let (mut in_string, mut escaped) = (false, false);
    for c in text.chars() {
        if c == '\n' {
            line += 1;
        }
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' | '{' => {
                if depth == 1 {
                    lines.push(line);
                }
                depth += 1;
            }
            ']' | '}' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    lines
}

/// Load and validate a dataset file (JSON array of items).
pub fn load_dataset(path: &Path) -> Result<Vec<McqItem>> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, path)
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<McqItem>> {
    let fail = |line: usize, message: String| Error::Dataset {
        path: path.to_path_buf(),
        line,
        message,
    };
    let items: Vec<McqItem> = serde_json::from_str(text).map_err(|e| fail(e.line(), e.to_string()))?;
    if items.is_empty() {
        return Err(fail(1, "dataset contains no items".into()));
    }
    let starts = element_start_lines(text);
    let mut ids = HashSet::new();
    for (i, item) in items.iter().enumerate() {
        let line = starts.get(i).copied().unwrap_or(1);
        item.validate()
            .map_err(|m| fail(line, format!("item {:?}: {m}", item.id)))?;
        if !ids.insert(item.id.as_str()) {
            return Err(fail(line, format!("duplicate item id {:?}", item.id)));
        }
    }
    Ok(items)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateWarning {
    pub option_index: usize,
    pub option: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgTemplate {
    pub graph: RelationalGraph,
    pub warnings: Vec<TemplateWarning>,
    /// The raw extraction of each rendered question, in option order.
    pub extractions: Vec<RelationalGraph>,
}

fn option_label(option: &str) -> Result<Label> {
    Label::new(option)
}

fn collides_with_question(item: &McqItem, option: &Label) -> bool {
    let stripped = normalize_text(&item.question.replacen(BLANK, " ", 1));
    contains_whole_word(&stripped, option.norm())
}

pub fn build_template(item: &McqItem, extractor: &dyn ExtractionBackend, exec: Execution) -> Result<PgTemplate> {
    let indices: Vec<usize> = (0..OPTION_COUNT).collect();
    let extractions = parallel::try_map(&indices, exec, |&i| {
        let wrap = |e: Error| Error::OptionExtraction {
            index: i,
            option: item.options[i].clone(),
            source: Box::new(e),
        };
        let g = extractor.extract(&item.render_question(i)).map_err(wrap)?;
        if g.nodes().iter().any(|n| n.is_placeholder() || n.mentions_placeholder()) {
            return Err(wrap(Error::ReservedPlaceholder));
        }
        Ok(g)
    })?;

    let mut warnings = Vec::new();
    let mut warn = |i: usize, message: String| {
        warnings.push(TemplateWarning {
            option_index: i,
            option: item.options[i].clone(),
            message,
        })
    };
    let mut substituted = Vec::with_capacity(OPTION_COUNT);
    for (i, g) in extractions.iter().enumerate() {
        let option = option_label(&item.options[i])?;
        if collides_with_question(item, &option) {
            warn(i, "option text also occurs outside the blank; all matching node labels were substituted".into());
        }
        if g.is_empty() {
            warn(i, "extraction returned no triplets".into());
            substituted.push(RelationalGraph::new());
            continue;
        }
        let (s, outcome) = g.substitute_with_outcome(&option, &Label::placeholder());
        match outcome {
            SubstitutionOutcome::Exact(_) => {}
            SubstitutionOutcome::Substring(n) => {
                warn(i, format!("option matched inside {n} longer node label(s)"));
            }
            SubstitutionOutcome::NoMatch => {
                warn(i, "option not found among extracted nodes; contributed unchanged".into());
            }
        }
        substituted.push(s);
    }

    // Fold in canonical order so raw label choice does not depend on option order.
    substituted.sort_by_cached_key(RelationalGraph::to_canonical_json);
    let graph = substituted
        .iter()
        .fold(RelationalGraph::new(), |acc, g| acc.union(g));

    Ok(PgTemplate {
        graph,
        warnings,
        extractions,
    })
}

impl PgTemplate {
    pub fn has_placeholder(&self) -> bool {
        self.graph
            .nodes()
            .iter()
            .any(|n| n.is_placeholder() || n.mentions_placeholder())
    }

    pub fn instantiate(&self, option: &str) -> Result<RelationalGraph> {
        Ok(self.graph.replace_token(&Label::placeholder(), &option_label(option)?))
    }
}

pub fn instantiate(tmpl: &PgTemplate, option: &str) -> Result<RelationalGraph> {
    tmpl.instantiate(option)
}
