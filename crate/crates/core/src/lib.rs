//! Knowledge-driven discovery and composition engine for IoT middleware
//! configuration.
//!
//! The crate is organised around the configuration flow:
//!
//! * [`kb`] holds the knowledge base of sensors, data processing components
//!   (DPCs), tasks and questions, plus its JSON file format.
//! * [`qa`] narrows the task set through question/answer constraints.
//! * [`composer`] enumerates validated solution DAGs for a task and explains
//!   unsatisfiable tasks through minimal missing-kind sets.
//! * [`context`] saturates the set of derivable context items.
//! * [`cost`] ranks alternative solutions under user weights.
//! * [`deploy`] turns a chosen solution into a deployment plan document.

pub mod composer;
pub mod context;
pub mod cost;
pub mod deploy;
pub mod kb;
pub mod qa;

pub use composer::{compose, ComposeLimits, ComposeOutcome, RecommendationReport, Solution, SolutionNode};
pub use context::{discover, Discovery};
pub use cost::{rank, Ranking, SolutionScore, WeightVector};
pub use deploy::{emit_plan, generate_plan, parse_plan, DeploymentPlan};
pub use kb::{DataItemKind, KnowledgeBase, ValueType};
pub use qa::{ConstraintSet, QaSession};
