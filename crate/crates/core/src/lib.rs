//! Fill-in-the-blank multiple-choice answering by knowledge-graph verification.
//!
//! Each candidate completion is turned into a propositional graph through a
//! relation-extraction backend, checked against a knowledge graph built from
//! Wikipedia lead sections, and scored by how many of its relations hold. The
//! option with the highest score wins, with node similarity and then a seeded
//! draw breaking ties. Every decision is recorded in a [`VerificationReport`].

pub mod alignment;
pub mod backends;
pub mod error;
pub mod graph;
pub mod kg;
pub mod linking;
pub mod parallel;
pub mod pipeline;
pub mod run;
pub mod scoring;
pub mod store;
pub mod template;
pub mod transport;
pub mod wiki;

pub use alignment::{align, solve_assignment, AlignedNode, Alignment, Assignment, MatchKind};
pub use error::{Error, Result};
pub use graph::{Label, RelationalGraph, Triplet, PLACEHOLDER};
pub use parallel::Execution;
pub use pipeline::{Engine, EngineConfig};
pub use scoring::{edge_score, node_score, select_answer, OptionVerdict, SelectionKind, VerificationReport};
pub use template::{build_template, instantiate, McqItem, PgTemplate};
