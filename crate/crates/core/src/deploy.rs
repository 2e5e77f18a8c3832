//! Deployment plans: a chosen solution, plus optional extra context items,
//! flattened into topologically ordered stages with explicit wiring.
//!
//! Stages are listed in canonical order (dependency depth, then resource id,
//! signature and output kind), so the emitted text depends only on the
//! solution's content and never on how it was built.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::composer::{validate_solution, Solution, SolutionNode};
use crate::context::discover;
use crate::kb::{DataItemKind, KnowledgeBase, ValidationReport};

pub const PLAN_FORMAT: u32 = 1;
pub const DEFAULT_RATE_SECONDS: f64 = 5.0;
pub const DEFAULT_WINDOW_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("solution is not valid against the knowledge base:\n{0}")]
    InvalidSolution(ValidationReport),
    #[error("{0} is not derivable from the active sensors")]
    UnderivableExtra(DataItemKind),
    #[error("plan parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("inconsistent plan: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceType {
    Sensor,
    Dpc,
}

/// KB metadata copied into the plan so it can be read without the KB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceInfo {
    #[serde(rename = "type")]
    pub resource_type: ResourceType,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageInput {
    pub kind: DataItemKind,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub id: String,
    pub resource: String,
    #[serde(rename = "type")]
    pub resource_type: ResourceType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<usize>,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<StageInput>,
    pub output: DataItemKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamItem {
    pub kind: DataItemKind,
    pub stage: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSettings {
    pub rate_seconds: f64,
    pub window_seconds: f64,
}

impl Default for StreamSettings {
    fn default() -> Self {
        Self {
            rate_seconds: DEFAULT_RATE_SECONDS,
            window_seconds: DEFAULT_WINDOW_SECONDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentPlan {
    pub format: u32,
    pub plan_id: String,
    pub kb_version: String,
    /// Canonical hash of the solution the plan was generated from.
    pub solution: String,
    pub stream: StreamSettings,
    pub stages: Vec<Stage>,
    /// Required stream in declared order, then extras sorted by kind.
    pub output_stream: Vec<StreamItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<DataItemKind>,
    pub resources: BTreeMap<String, ResourceInfo>,
}

type Wiring = BTreeMap<SolutionNode, BTreeMap<DataItemKind, SolutionNode>>;

struct Builder<'a> {
    kb: &'a KnowledgeBase,
    wiring: Wiring,
}

impl Builder<'_> {
    fn producer_of(&self, kind: &DataItemKind) -> Option<SolutionNode> {
        self.wiring.keys().find(|n| n.output() == kind).cloned()
    }

    fn ensure(&mut self, kind: &DataItemKind) -> Result<SolutionNode, PlanError> {
        if let Some(n) = self.producer_of(kind) {
            return Ok(n);
        }
        let discovery = discover(self.kb);
        if discovery.tier(kind).is_none() {
            return Err(PlanError::UnderivableExtra(kind.clone()));
        }
        let node = match discovery.table.derivations.get(kind) {
            None => {
                let used: HashSet<&str> = self
                    .wiring
                    .keys()
                    .filter(|n| n.is_sensor())
                    .map(|n| n.resource())
                    .collect();
                let candidates: Vec<&str> = self
                    .kb
                    .sensors_producing(kind)
                    .filter(|s| s.active)
                    .map(|s| s.id.as_str())
                    .collect();
                let sensor = candidates
                    .iter()
                    .copied()
                    .filter(|s| used.contains(s))
                    .min()
                    .or_else(|| candidates.iter().copied().min())
                    .expect("tier-0 kinds have an active sensor");
                let node = SolutionNode::sensor(sensor, kind.clone());
                self.wiring.insert(node.clone(), BTreeMap::new());
                node
            }
            Some(d) => {
                let mut inputs = BTreeMap::new();
                for k in &d.inputs {
                    inputs.insert(k.clone(), self.ensure(k)?);
                }
                let node = SolutionNode::dpc(d.dpc.clone(), d.signature, kind.clone());
                self.wiring.insert(node.clone(), inputs);
                node
            }
        };
        Ok(node)
    }
}

fn depths(wiring: &Wiring) -> HashMap<&SolutionNode, usize> {
    fn depth<'a>(w: &'a Wiring, n: &'a SolutionNode, memo: &mut HashMap<&'a SolutionNode, usize>) -> usize {
        if let Some(d) = memo.get(n) {
            return *d;
        }
        let d = w[n].values().map(|p| depth(w, p, memo) + 1).max().unwrap_or(0);
        memo.insert(n, d);
        d
    }
    let mut memo = HashMap::new();
    for n in wiring.keys() {
        depth(wiring, n, &mut memo);
    }
    memo
}

fn plan_hash(plan: &DeploymentPlan) -> String {
    let text = serde_json::to_string(&(&plan.kb_version, &plan.stream, &plan.stages, &plan.output_stream))
        .expect("plan serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Builds the plan for `solution`, adding derivations for `extras`.
pub fn generate_plan(
    kb: &KnowledgeBase,
    solution: &Solution,
    extras: &[DataItemKind],
) -> Result<DeploymentPlan, PlanError> {
    let report = validate_solution(kb, solution);
    if !report.is_clean() {
        return Err(PlanError::InvalidSolution(report));
    }

    let mut wiring: Wiring = solution.nodes.iter().map(|n| (n.clone(), BTreeMap::new())).collect();
    for e in &solution.edges {
        wiring
            .get_mut(&e.consumer)
            .expect("validated")
            .insert(e.kind.clone(), e.producer.clone());
    }
    let mut builder = Builder { kb, wiring };

    let required: BTreeSet<&DataItemKind> = solution.sinks.iter().map(|s| &s.kind).collect();
    let extras: BTreeSet<DataItemKind> = extras.iter().filter(|k| !required.contains(k)).cloned().collect();
    let mut extra_nodes = Vec::new();
    for k in &extras {
        extra_nodes.push((k.clone(), builder.ensure(k)?));
    }
    let wiring = builder.wiring;

    let depth = depths(&wiring);
    let mut order: Vec<&SolutionNode> = wiring.keys().collect();
    order.sort_by(|a, b| {
        let key = |n: &SolutionNode| {
            let sig = match n {
                SolutionNode::Sensor { .. } => 0,
                SolutionNode::Dpc { signature, .. } => *signature,
            };
            (depth[n], n.resource().to_owned(), sig, n.output().clone())
        };
        key(a).cmp(&key(b)).then_with(|| a.cmp(b))
    });
    let ids: HashMap<&SolutionNode, String> = order
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, format!("st-{}", i + 1)))
        .collect();

    let stages: Vec<Stage> = order
        .iter()
        .map(|n| {
            let (resource_type, signature) = match n {
                SolutionNode::Sensor { .. } => (ResourceType::Sensor, None),
                SolutionNode::Dpc { signature, .. } => (ResourceType::Dpc, Some(*signature)),
            };
            Stage {
                id: ids[n].clone(),
                resource: n.resource().to_owned(),
                resource_type,
                signature,
                depth: depth[n],
                inputs: wiring[*n]
                    .iter()
                    .map(|(k, p)| StageInput {
                        kind: k.clone(),
                        stage: ids[p].clone(),
                    })
                    .collect(),
                output: n.output().clone(),
            }
        })
        .collect();

    let mut output_stream: Vec<StreamItem> = solution
        .sinks
        .iter()
        .map(|s| StreamItem {
            kind: s.kind.clone(),
            stage: ids[&s.node].clone(),
        })
        .collect();
    output_stream.extend(extra_nodes.iter().map(|(k, n)| StreamItem {
        kind: k.clone(),
        stage: ids[n].clone(),
    }));

    let mut resources = BTreeMap::new();
    for n in wiring.keys() {
        let info = match n {
            SolutionNode::Sensor { sensor, .. } => {
                let s = kb.sensor(sensor).expect("validated");
                ResourceInfo {
                    resource_type: ResourceType::Sensor,
                    name: s.name.clone(),
                    context: s.context.clone(),
                }
            }
            SolutionNode::Dpc { dpc, .. } => {
                let d = kb.dpc(dpc).expect("validated");
                ResourceInfo {
                    resource_type: ResourceType::Dpc,
                    name: d.name.clone(),
                    context: d.context.clone(),
                }
            }
        };
        resources.insert(n.resource().to_owned(), info);
    }

    let mut plan = DeploymentPlan {
        format: PLAN_FORMAT,
        plan_id: String::new(),
        kb_version: kb.version_hash().to_owned(),
        solution: solution.canonical_hash(),
        stream: StreamSettings::default(),
        stages,
        output_stream,
        extras: extras.into_iter().collect(),
        resources,
    };
    plan.plan_id = plan_hash(&plan);
    Ok(plan)
}

/// Canonical text form: pretty JSON with a trailing newline.
pub fn emit_plan(plan: &DeploymentPlan) -> String {
    let mut text = serde_json::to_string_pretty(plan).expect("plan serializes");
    text.push('\n');
    text
}

/// Parses a plan document and checks its structure.
pub fn parse_plan(text: &str) -> Result<DeploymentPlan, PlanError> {
    let plan: DeploymentPlan = serde_json::from_str(text).map_err(|e| PlanError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    simulate(&plan)?;
    Ok(plan)
}

/// Fires each stage once its inputs exist and returns the kinds delivered
/// on the output stream. Fails if the plan is not executable as written.
pub fn simulate(plan: &DeploymentPlan) -> Result<Vec<DataItemKind>, PlanError> {
    let bad = |m: String| Err(PlanError::Inconsistent(m));
    if plan.format != PLAN_FORMAT {
        return bad(format!("unsupported plan format {}", plan.format));
    }
    let mut produced: HashMap<&str, &DataItemKind> = HashMap::new();
    let mut consumed: HashSet<&str> = HashSet::new();
    for stage in &plan.stages {
        match plan.resources.get(&stage.resource) {
            None => return bad(format!("stage {} uses undeclared resource `{}`", stage.id, stage.resource)),
            Some(r) if r.resource_type != stage.resource_type => {
                return bad(format!("stage {} disagrees with the type of `{}`", stage.id, stage.resource))
            }
            Some(_) => {}
        }
        if (stage.resource_type == ResourceType::Sensor) != stage.signature.is_none() {
            return bad(format!("stage {}: only DPC stages carry a signature", stage.id));
        }
        if stage.resource_type == ResourceType::Sensor && !stage.inputs.is_empty() {
            return bad(format!("sensor stage {} has inputs", stage.id));
        }
        let mut kinds = HashSet::new();
        for input in &stage.inputs {
            match produced.get(input.stage.as_str()) {
                None => return bad(format!("stage {} reads {} before it runs", stage.id, input.stage)),
                Some(k) if *k != &input.kind => {
                    return bad(format!("stage {} expects {} from {}, which outputs {k}", stage.id, input.kind, input.stage))
                }
                Some(_) => {}
            }
            if !kinds.insert(&input.kind) {
                return bad(format!("stage {} wires {} twice", stage.id, input.kind));
            }
            consumed.insert(&input.stage);
        }
        if produced.insert(&stage.id, &stage.output).is_some() {
            return bad(format!("duplicate stage id {}", stage.id));
        }
    }

    let mut delivered = Vec::new();
    let mut seen = HashSet::new();
    for item in &plan.output_stream {
        match produced.get(item.stage.as_str()) {
            Some(k) if *k == &item.kind => {}
            _ => return bad(format!("output {} is not produced by stage {}", item.kind, item.stage)),
        }
        if !seen.insert(&item.kind) {
            return bad(format!("output {} listed twice", item.kind));
        }
        consumed.insert(&item.stage);
        delivered.push(item.kind.clone());
    }
    if let Some(s) = plan.stages.iter().find(|s| !consumed.contains(s.id.as_str())) {
        return bad(format!("stage {} feeds nothing", s.id));
    }
    Ok(delivered)
}

/// True when the plan was generated against a different KB snapshot.
pub fn is_stale(plan: &DeploymentPlan, kb: &KnowledgeBase) -> bool {
    plan.kb_version != kb.version_hash()
}
