//! Composition of sensors and DPCs into solution DAGs.
//!
//! [`compose`] enumerates every distinct solution that produces a task's
//! required stream from active sensors, and explains failures with a
//! [`RecommendationReport`] of minimal sets of kinds that would have to
//! become sensable.

mod recommend;
mod search;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kb::{DataItemKind, KnowledgeBase, ValidationReport, Violation};

pub use recommend::{MissingSet, RecommendationReport, SignatureUse};
pub use search::{satisfy_kind, KindSatisfaction, PartialSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposeLimits {
    pub max_depth: usize,
    pub max_solutions: usize,
    /// When set, every kind inside one solution has a single producer that
    /// all consumers share. When cleared, each consumer picks its producer
    /// independently.
    pub allow_shared_subtrees: bool,
}

impl Default for ComposeLimits {
    fn default() -> Self {
        Self {
            max_depth: 16,
            max_solutions: 64,
            allow_shared_subtrees: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SolutionNode {
    Sensor {
        sensor: String,
        output: DataItemKind,
    },
    Dpc {
        dpc: String,
        signature: usize,
        output: DataItemKind,
    },
}

impl SolutionNode {
    pub fn sensor(sensor: impl Into<String>, output: DataItemKind) -> Self {
        SolutionNode::Sensor {
            sensor: sensor.into(),
            output,
        }
    }

    pub fn dpc(dpc: impl Into<String>, signature: usize, output: DataItemKind) -> Self {
        SolutionNode::Dpc {
            dpc: dpc.into(),
            signature,
            output,
        }
    }

    pub fn output(&self) -> &DataItemKind {
        match self {
            SolutionNode::Sensor { output, .. } | SolutionNode::Dpc { output, .. } => output,
        }
    }

    pub fn resource(&self) -> &str {
        match self {
            SolutionNode::Sensor { sensor, .. } => sensor,
            SolutionNode::Dpc { dpc, .. } => dpc,
        }
    }

    pub fn is_sensor(&self) -> bool {
        matches!(self, SolutionNode::Sensor { .. })
    }
}

impl fmt::Display for SolutionNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolutionNode::Sensor { sensor, output } => write!(f, "{sensor}:{}", output.label),
            SolutionNode::Dpc {
                dpc,
                signature,
                output,
            } => write!(f, "{dpc}#{signature}:{}", output.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub producer: SolutionNode,
    pub consumer: SolutionNode,
    pub kind: DataItemKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sink {
    pub kind: DataItemKind,
    pub node: SolutionNode,
}

/// A DAG of sensor and DPC nodes whose sinks produce a required stream.
/// Sinks are kept in required-stream order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution {
    pub nodes: BTreeSet<SolutionNode>,
    pub edges: BTreeSet<Edge>,
    pub sinks: Vec<Sink>,
}

impl Solution {
    pub fn new(
        nodes: impl IntoIterator<Item = SolutionNode>,
        edges: impl IntoIterator<Item = Edge>,
        sinks: Vec<Sink>,
    ) -> Self {
        Self {
            nodes: nodes.into_iter().collect(),
            edges: edges.into_iter().collect(),
            sinks,
        }
    }

    pub fn canonical_hash(&self) -> String {
        canonical_hash(self)
    }

    /// Number of distinct physical resources (sensors and DPCs) used.
    pub fn resource_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| (n.is_sensor(), n.resource()))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Producers feeding `consumer`, keyed by input kind.
    pub fn inputs_of(&self, consumer: &SolutionNode) -> BTreeMap<&DataItemKind, &SolutionNode> {
        self.edges
            .iter()
            .filter(|e| &e.consumer == consumer)
            .map(|e| (&e.kind, &e.producer))
            .collect()
    }

    /// Compact infix rendering, e.g. `((s-ah, s-at) => c-1, s-lw) => c-2`.
    pub fn expression(&self) -> String {
        fn render(sol: &Solution, node: &SolutionNode) -> String {
            match node {
                SolutionNode::Sensor { sensor, .. } => sensor.clone(),
                SolutionNode::Dpc { dpc, signature, .. } => {
                    let parts: Vec<String> = sol.inputs_of(node).values().map(|p| render(sol, p)).collect();
                    if *signature == 0 {
                        format!("({}) => {dpc}", parts.join(", "))
                    } else {
                        format!("({}) => {dpc}#{signature}", parts.join(", "))
                    }
                }
            }
        }
        let sinks: Vec<String> = self.sinks.iter().map(|s| render(self, &s.node)).collect();
        sinks.join(" | ")
    }
}

/// Stable content hash: equal for solutions with the same nodes, edges and
/// sinks regardless of how they were built.
pub fn canonical_hash(solution: &Solution) -> String {
    // BTreeSet iteration gives a canonical node and edge order.
    let text = serde_json::to_string(&(&solution.nodes, &solution.edges, &solution.sinks))
        .expect("solution serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Checks every solution invariant against `kb`. Never fails.
pub fn validate_solution(kb: &KnowledgeBase, solution: &Solution) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |entity: String, field: &str, msg: String| out.push(Violation::new(entity, field, msg));

    for node in &solution.nodes {
        let ent = format!("node:{node}");
        match node {
            SolutionNode::Sensor { sensor, output } => match kb.sensor(sensor) {
                None => push(ent, "sensor", format!("unknown sensor `{sensor}`")),
                Some(s) => {
                    if !s.outputs.contains(output) {
                        push(ent.clone(), "output", format!("sensor `{sensor}` does not output {output}"));
                    }
                    if !s.active {
                        push(ent, "sensor", format!("sensor `{sensor}` is not active"));
                    }
                }
            },
            SolutionNode::Dpc {
                dpc,
                signature,
                output,
            } => match kb.dpc(dpc).map(|d| d.signatures.get(*signature)) {
                None => push(ent, "dpc", format!("unknown DPC `{dpc}`")),
                Some(None) => push(ent, "signature", format!("DPC `{dpc}` has no signature {signature}")),
                Some(Some(sig)) => {
                    if &sig.output != output {
                        push(ent.clone(), "output", format!("signature outputs {}, node claims {output}", sig.output));
                    }
                    let mut incoming: HashMap<&DataItemKind, usize> = HashMap::new();
                    for e in solution.edges.iter().filter(|e| &e.consumer == node) {
                        *incoming.entry(&e.kind).or_default() += 1;
                    }
                    for input in &sig.inputs {
                        match incoming.get(input) {
                            Some(1) => {}
                            None => push(ent.clone(), "inputs", format!("no incoming edge for {input}")),
                            Some(n) => push(ent.clone(), "inputs", format!("{n} incoming edges for {input}")),
                        }
                    }
                }
            },
        }
    }

    for e in &solution.edges {
        let ent = format!("edge:{}->{}", e.producer, e.consumer);
        if !solution.nodes.contains(&e.producer) || !solution.nodes.contains(&e.consumer) {
            push(ent.clone(), "nodes", "edge endpoint is not a node of the solution".into());
        }
        if e.producer.output() != &e.kind {
            push(ent.clone(), "kind", format!("producer outputs {}, edge carries {}", e.producer.output(), e.kind));
        }
        match &e.consumer {
            SolutionNode::Sensor { .. } => push(ent, "consumer", "a sensor cannot consume data".into()),
            SolutionNode::Dpc { dpc, signature, .. } => {
                let expected = kb.dpc(dpc).and_then(|d| d.signatures.get(*signature));
                if let Some(sig) = expected {
                    if !sig.inputs.contains(&e.kind) {
                        let hint = sig
                            .inputs
                            .iter()
                            .find(|k| k.label == e.kind.label)
                            .map(|k| format!(" (expects {k})"))
                            .unwrap_or_default();
                        push(ent, "kind", format!("consumer does not accept {}{hint}", e.kind));
                    }
                }
            }
        }
    }

    if solution.sinks.is_empty() {
        push("solution".into(), "sinks", "solution produces nothing".into());
    }
    let mut sink_kinds = HashSet::new();
    for s in &solution.sinks {
        let ent = format!("sink:{}", s.kind.label);
        if !sink_kinds.insert(&s.kind) {
            push(ent.clone(), "kind", "kind listed twice".into());
        }
        if !solution.nodes.contains(&s.node) {
            push(ent.clone(), "node", "sink node is not part of the solution".into());
        }
        if s.node.output() != &s.kind {
            push(ent, "node", format!("sink node outputs {}", s.node.output()));
        }
    }

    // Acyclicity and liveness over the node graph.
    let index: HashMap<&SolutionNode, usize> = solution.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut graph = petgraph::graph::DiGraph::<(), ()>::new();
    let ids: Vec<_> = (0..solution.nodes.len()).map(|_| graph.add_node(())).collect();
    for e in &solution.edges {
        if let (Some(p), Some(c)) = (index.get(&e.producer), index.get(&e.consumer)) {
            graph.add_edge(ids[*p], ids[*c], ());
        }
    }
    if petgraph::algo::is_cyclic_directed(&graph) {
        push("solution".into(), "edges", "solution graph has a cycle".into());
    }
    let mut live = vec![false; ids.len()];
    let mut stack: Vec<usize> = solution.sinks.iter().filter_map(|s| index.get(&s.node).copied()).collect();
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut live[i], true) {
            continue;
        }
        stack.extend(
            graph
                .neighbors_directed(ids[i], petgraph::Direction::Incoming)
                .map(|n| n.index()),
        );
    }
    for (node, alive) in solution.nodes.iter().zip(&live) {
        if !alive {
            push(format!("node:{node}"), "sinks", "node does not feed any sink".into());
        }
    }

    ValidationReport { violations: out }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeOutcome {
    /// Distinct solutions ordered by canonical hash.
    pub solutions: Vec<Solution>,
    pub report: RecommendationReport,
    /// A solution or alternative cap was hit; the list may be incomplete.
    pub truncated: bool,
    /// Some branch was cut at `max_depth`.
    pub depth_limited: bool,
}

/// Enumerates the solutions for `task_id`.
pub fn compose(kb: &KnowledgeBase, task_id: &str, limits: &ComposeLimits) -> Result<ComposeOutcome, ComposeError> {
    let task = kb.task(task_id).ok_or_else(|| ComposeError::UnknownTask(task_id.to_owned()))?;
    let required: Vec<_> = task
        .required_stream
        .iter()
        .map(|k| kb.kind_id(k).expect("task kinds are interned"))
        .collect();
    let run = search::run(kb, &required, limits, &HashSet::new(), usize::MAX);
    let mut solutions: Vec<Solution> = run.solutions.iter().map(|w| search::to_solution(kb, w, &required)).collect();
    solutions.sort_by_cached_key(canonical_hash);
    let report = recommend::report(kb, &required, limits, &run, solutions.is_empty());
    Ok(ComposeOutcome {
        solutions,
        report,
        truncated: run.truncated,
        depth_limited: run.depth_limited,
    })
}
