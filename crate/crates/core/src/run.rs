//! Dataset runs: per-item evaluation, summary statistics and output files.
//!
//! Output layout under the run directory:
//!
//! ```text
//! summary.json
//! reports/<item id>.json
//! dot/<item id>/option_<n>.dot        (with --export-dot)
//! dot/<item id>/option_<n>.kg.json
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Label;
use crate::parallel;
use crate::pipeline::{BackendInfo, Engine};
use crate::scoring::{select_answer, OptionVerdict, SelectionKind, VerificationReport};
use crate::store::{atomic_write, sanitize, sha256_hex};
use crate::template::McqItem;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Per-item seed from the run seed and the item id, so that an item's random
/// choice does not depend on its position in the dataset.
pub fn derive_seed(run_seed: u64, item_id: &str) -> u64 {
    let mut bytes = run_seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(item_id.as_bytes());
    let digest = hex::decode(sha256_hex(&bytes)).expect("hex digest");
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Answered,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub category: String,
    pub status: ItemStatus,
    pub answer_index: usize,
    pub chosen_index: Option<usize>,
    pub selection_kind: Option<SelectionKind>,
    pub correct: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ItemOutcome {
    fn answered(report: &VerificationReport) -> Self {
        ItemOutcome {
            id: report.item_id.clone(),
            category: report.category.clone(),
            status: ItemStatus::Answered,
            answer_index: report.answer_index,
            chosen_index: Some(report.chosen_index),
            selection_kind: Some(report.selection_kind),
            correct: report.correct,
            seed: report.rng_seed,
            error: None,
        }
    }

    fn failed(item: &McqItem, seed: u64, error: &Error) -> Self {
        ItemOutcome {
            id: item.id.clone(),
            category: item.category.clone(),
            status: ItemStatus::Failed,
            answer_index: item.answer_index,
            chosen_index: None,
            selection_kind: None,
            correct: false,
            seed,
            error: Some(error.to_string()),
        }
    }
}

/// Counts for one category.
///
/// `correct` and `incorrect` cover items decided by the edge or node score;
/// `unselectable` items needed a random draw, and
/// `unselectable_resolved_correct` of those drew the right answer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub unselectable: usize,
    pub unselectable_resolved_correct: usize,
    pub failed: usize,
    pub deterministic_accuracy: f64,
    pub accuracy: f64,
}

impl CategoryStats {
    pub fn tally<'a>(outcomes: impl IntoIterator<Item = &'a ItemOutcome>) -> Self {
        let mut s = CategoryStats::default();
        for o in outcomes {
            s.total += 1;
            match (o.status, o.selection_kind) {
                (ItemStatus::Failed, _) | (_, None) => s.failed += 1,
                (_, Some(SelectionKind::RandomTiebreak)) => {
                    s.unselectable += 1;
                    s.unselectable_resolved_correct += usize::from(o.correct);
                }
                _ if o.correct => s.correct += 1,
                _ => s.incorrect += 1,
            }
        }
        if s.total > 0 {
            s.deterministic_accuracy = s.correct as f64 / s.total as f64;
            s.accuracy = (s.correct + s.unselectable_resolved_correct) as f64 / s.total as f64;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub entity_linking: bool,
    pub similarity_threshold: Option<f64>,
    pub summary_cap: usize,
    pub strict: bool,
    pub backends: BackendInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub dataset_sha256: String,
    pub config: RunConfig,
    pub overall: CategoryStats,
    pub categories: BTreeMap<String, CategoryStats>,
    pub items: Vec<ItemOutcome>,
}

impl RunSummary {
    pub fn from_outcomes(dataset_sha256: String, config: RunConfig, items: Vec<ItemOutcome>) -> Self {
        let mut by_category: BTreeMap<String, Vec<&ItemOutcome>> = BTreeMap::new();
        for o in &items {
            by_category.entry(o.category.clone()).or_default().push(o);
        }
        let categories = by_category
            .into_iter()
            .map(|(c, os)| (c, CategoryStats::tally(os)))
            .collect();
        RunSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            dataset_sha256,
            config,
            overall: CategoryStats::tally(&items),
            categories,
            items,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization is infallible")
    }

    pub fn failed(&self) -> usize {
        self.overall.failed
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    /// Items evaluated at once; `None` uses one per CPU.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub reports: Vec<VerificationReport>,
}

/// Evaluate every item. In strict mode the first failing item aborts the run;
/// otherwise failures are recorded in the summary.
pub fn run_dataset(engine: &Engine, items: &[McqItem], dataset_sha256: &str, options: &RunOptions) -> Result<RunOutput> {
    let evaluate = || {
        parallel::map(items, engine.config().execution, |item| {
            let seed = derive_seed(options.seed, &item.id);
            (seed, engine.answer_item(item, seed))
        })
    };
    let results = with_jobs(options.jobs, engine.config().execution.is_parallel(), evaluate)?;

    let mut outcomes = Vec::with_capacity(items.len());
    let mut reports = Vec::new();
    for (item, (seed, result)) in items.iter().zip(results) {
        match result {
            Ok(report) => {
                outcomes.push(ItemOutcome::answered(&report));
                reports.push(report);
            }
            Err(e) if engine.config().strict => {
                return Err(Error::Precondition(format!("item {:?} failed: {e}", item.id)));
            }
            Err(e) => {
                log::warn!("item {:?} failed: {e}", item.id);
                outcomes.push(ItemOutcome::failed(item, seed, &e));
            }
        }
    }

    let cfg = engine.config();
    let config = RunConfig {
        seed: options.seed,
        entity_linking: cfg.entity_linking,
        similarity_threshold: cfg.similarity_threshold,
        summary_cap: cfg.summary_cap,
        strict: cfg.strict,
        backends: engine.backends(),
    };
    Ok(RunOutput {
        summary: RunSummary::from_outcomes(dataset_sha256.to_owned(), config, outcomes),
        reports,
    })
}

#[cfg(feature = "parallel")]
fn with_jobs<R: Send>(jobs: Option<usize>, parallel: bool, f: impl FnOnce() -> R + Send) -> Result<R> {
    if !parallel {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<R: Send>(_jobs: Option<usize>, _parallel: bool, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

fn file_stem(id: &str) -> String {
    sanitize(id)
}

fn check_unique_stems(reports: &[VerificationReport]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in reports {
        if !seen.insert(file_stem(&r.item_id)) {
            return Err(Error::Precondition(format!(
                "item id {:?} collides with another id after filename sanitizing",
                r.item_id
            )));
        }
    }
    Ok(())
}

/// Write the summary, one report per answered item and optionally the DOT traces.
pub fn write_outputs(out: &Path, output: &RunOutput, export_dot: bool) -> Result<()> {
    check_unique_stems(&output.reports)?;
    for report in &output.reports {
        let stem = file_stem(&report.item_id);
        atomic_write(&out.join("reports").join(format!("{stem}.json")), report.to_json().as_bytes())?;
        if export_dot {
            export_trace(report, &out.join("dot").join(&stem))?;
        }
    }
    atomic_write(&out.join("summary.json"), output.summary.to_json().as_bytes())
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// DOT rendering of one option's propositional graph: verified edges solid,
/// unverified edges dashed.
pub fn render_dot(report: &VerificationReport, option_index: usize) -> String {
    let trace = &report.options[option_index];
    let v = &trace.verdict;
    let mut dot = String::new();
    let title = format!(
        "{} option {}: {} (edge score {:.4}, node score {:.4})",
        report.item_id,
        option_index + 1,
        v.option,
        v.edge.edge_score,
        v.node_score
    );
    writeln!(dot, "digraph \"option_{}\" {{", option_index + 1).unwrap();
    writeln!(dot, "  label=\"{}\";", dot_escape(&title)).unwrap();
    writeln!(dot, "  labelloc=t;").unwrap();
    writeln!(dot, "  node [shape=box, style=rounded];").unwrap();

    if trace.pg.is_empty() {
        writeln!(dot, "  empty [label=\"(empty propositional graph)\", shape=note];").unwrap();
        dot.push_str("}\n");
        return dot;
    }

    let nodes: Vec<Label> = trace.pg.nodes().into_iter().collect();
    let id_of = |l: &Label| nodes.binary_search(l).expect("node of the graph");
    for (i, n) in nodes.iter().enumerate() {
        writeln!(dot, "  n{i} [label=\"{}\"];", dot_escape(n.raw())).unwrap();
    }
    let verified: HashSet<_> = v.edge.verified.iter().map(|e| &e.pg).collect();
    for t in &trace.pg {
        let style = if verified.contains(t) { "solid" } else { "dashed" };
        writeln!(
            dot,
            "  n{} -> n{} [label=\"{}\", style={style}];",
            id_of(&t.subject),
            id_of(&t.object),
            dot_escape(t.relation.raw())
        )
        .unwrap();
    }
    dot.push_str("}\n");
    dot
}

#[derive(Serialize)]
struct KgSidecar<'a> {
    item_id: &'a str,
    option_index: usize,
    option: &'a str,
    edge_score: f64,
    verified: &'a [crate::scoring::VerifiedEdge],
    knowledge_graph: &'a crate::graph::RelationalGraph,
}

/// One DOT file per option plus a sidecar listing the knowledge triplets.
pub fn export_trace(report: &VerificationReport, dir: &Path) -> Result<()> {
    for (i, trace) in report.options.iter().enumerate() {
        atomic_write(&dir.join(format!("option_{}.dot", i + 1)), render_dot(report, i).as_bytes())?;
        let sidecar = KgSidecar {
            item_id: &report.item_id,
            option_index: i,
            option: &trace.verdict.option,
            edge_score: trace.verdict.edge.edge_score,
            verified: &trace.verdict.edge.verified,
            knowledge_graph: &trace.kg,
        };
        atomic_write(
            &dir.join(format!("option_{}.kg.json", i + 1)),
            serde_json::to_string_pretty(&sidecar)?.as_bytes(),
        )?;
    }
    Ok(())
}

/// Recompute every figure in `out/summary.json` from the per-item reports.
/// Returns the discrepancies found; an empty list means the run is consistent.
pub fn check_consistency(out: &Path) -> Result<Vec<String>> {
    let summary: RunSummary = serde_json::from_slice(&fs::read(out.join("summary.json"))?)?;
    let mut problems = Vec::new();
    let mut recomputed = Vec::with_capacity(summary.items.len());

    for item in &summary.items {
        if item.status == ItemStatus::Failed {
            recomputed.push(item.clone());
            continue;
        }
        let path = out.join("reports").join(format!("{}.json", file_stem(&item.id)));
        let report: VerificationReport = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(e) => {
                problems.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let verdicts: Vec<OptionVerdict> = report.options.iter().map(|o| o.verdict.clone()).collect();
        let selection = select_answer(&verdicts, report.rng_seed);
        if selection.chosen_index != report.chosen_index || selection.kind != report.selection_kind {
            problems.push(format!("{}: recorded choice does not follow from the scores", item.id));
        }
        if report.correct != (report.chosen_index == report.answer_index) {
            problems.push(format!("{}: correctness flag disagrees with the answer key", item.id));
        }
        let outcome = ItemOutcome::answered(&report);
        if &outcome != item {
            problems.push(format!("{}: summary entry disagrees with the report", item.id));
        }
        recomputed.push(outcome);
    }

    let rebuilt = RunSummary::from_outcomes(summary.dataset_sha256.clone(), summary.config.clone(), recomputed);
    if rebuilt.overall != summary.overall {
        problems.push("overall statistics do not match the reports".into());
    }
    if rebuilt.categories != summary.categories {
        problems.push("per-category statistics do not match the reports".into());
    }
    Ok(problems)
}
