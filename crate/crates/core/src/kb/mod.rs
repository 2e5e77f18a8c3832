//! Knowledge base schema, indexes and ingestion.
//!
//! A [`KnowledgeBase`] is an immutable snapshot. Every mutating operation
//! returns a fresh value with rebuilt indexes, so readers holding an older
//! snapshot never observe a change.

mod format;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::Discovery;

pub use format::{
    from_document, load_kb, parse_document, parse_kb, resolve_entity, resolve_kind, save_kb, to_document, to_json, DpcDoc,
    EntityDoc, KbDocument, KindRef, QuestionDoc, SensorDoc, SignatureDoc, TaskDoc,
};
pub use validate::{validate_entity, validate_kb, ValidationReport, Violation};

/// Format version written by [`save_kb`] and accepted by [`load_kb`].
pub const FORMAT_VERSION: u32 = 1;

/// Unit tokens every knowledge base understands. A header may declare more.
pub const STARTER_UNITS: &[&str] = &[
    "none",
    "celsius",
    "fahrenheit",
    "kelvin",
    "percent",
    "ppm",
    "ppb",
    "ug_per_m3",
    "meter",
    "millimeter",
    "degree",
    "hectopascal",
    "lux",
    "volt",
    "watt",
    "second",
    "meter_per_second",
    "decibel",
    "count",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Boolean,
    Integer,
    Real,
    Text,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Boolean => "boolean",
            ValueType::Integer => "integer",
            ValueType::Real => "real",
            ValueType::Text => "text",
        })
    }
}

/// A typed, unit-bearing semantic data item. Two kinds are compatible only
/// when label, value type and unit are all equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataItemKind {
    pub label: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    pub unit: String,
}

impl DataItemKind {
    pub fn new(label: impl Into<String>, value_type: ValueType, unit: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            value_type,
            unit: unit.into(),
        }
    }
}

impl fmt::Display for DataItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}, {}]", self.label, self.value_type, self.unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Higher is better (accuracy, reliability).
    Benefit,
    /// Lower is better (energy, latency, monetary cost).
    Cost,
}

/// Registry entry for a context attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub polarity: Polarity,
    /// Value assumed when a resource does not declare the attribute.
    #[serde(default)]
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: u32,
    pub attributes: BTreeMap<String, AttributeSpec>,
    /// Unit tokens declared in addition to [`STARTER_UNITS`].
    pub units: BTreeSet<String>,
}

impl Default for Header {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION,
            attributes: BTreeMap::new(),
            units: BTreeSet::new(),
        }
    }
}

impl Header {
    pub fn knows_unit(&self, unit: &str) -> bool {
        STARTER_UNITS.contains(&unit) || self.units.contains(unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub id: String,
    pub name: String,
    pub outputs: BTreeSet<DataItemKind>,
    /// Whether the sensor has a live acquisition wrapper.
    pub active: bool,
    pub context: BTreeMap<String, f64>,
    pub domains: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub inputs: BTreeSet<DataItemKind>,
    pub output: DataItemKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dpc {
    pub id: String,
    pub name: String,
    pub signatures: Vec<Signature>,
    pub context: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptBinding {
    pub concept: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Task {
    pub id: String,
    pub name: String,
    pub required_stream: Vec<DataItemKind>,
    pub concepts: Vec<ConceptBinding>,
}

impl Task {
    pub fn binding(&self, concept: &str) -> Option<&str> {
        self.concepts
            .iter()
            .find(|b| b.concept == concept)
            .map(|b| b.value.as_str())
    }
}

/// Any entity that can be ingested through [`KnowledgeBase::add_description`].
#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    Sensor(Sensor),
    Dpc(Dpc),
    Task(Task),
    Question(Question),
}

impl Entity {
    pub fn id(&self) -> &str {
        match self {
            Entity::Sensor(s) => &s.id,
            Entity::Dpc(d) => &d.id,
            Entity::Task(t) => &t.id,
            Entity::Question(q) => &q.id,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Entity::Sensor(_) => "sensor",
            Entity::Dpc(_) => "dpc",
            Entity::Task(_) => "task",
            Entity::Question(_) => "question",
        }
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("knowledge base is invalid:\n{0}")]
    Invalid(ValidationReport),
    #[error("{entity} `{id}` collides with an existing id")]
    DuplicateId { entity: &'static str, id: String },
    #[error("task `{task}` binds concept `{concept}` which has no question")]
    DanglingConcept { task: String, concept: String },
    #[error("malformed {entity}:\n{report}")]
    Malformed {
        entity: &'static str,
        report: ValidationReport,
    },
}

/// Dense id of an interned [`DataItemKind`] inside one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KindId(pub u32);

/// A DPC signature addressed by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SigRef {
    pub dpc: u32,
    pub signature: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Index {
    kinds: Vec<DataItemKind>,
    kind_ids: HashMap<DataItemKind, KindId>,
    sensors_by_kind: Vec<Vec<u32>>,
    producers_by_kind: Vec<Vec<SigRef>>,
    consumers_by_kind: Vec<Vec<SigRef>>,
    sig_io: Vec<Vec<(Vec<KindId>, KindId)>>,
    sensor_by_id: HashMap<String, u32>,
    dpc_by_id: HashMap<String, u32>,
    task_by_id: HashMap<String, u32>,
    question_by_id: HashMap<String, u32>,
    question_by_concept: HashMap<String, u32>,
    tasks_by_binding: HashMap<(String, String), Vec<u32>>,
    tasks_by_id_order: Vec<u32>,
}

impl Index {
    fn intern(&mut self, kind: &DataItemKind) -> KindId {
        if let Some(id) = self.kind_ids.get(kind) {
            return *id;
        }
        let id = KindId(self.kinds.len() as u32);
        self.kinds.push(kind.clone());
        self.kind_ids.insert(kind.clone(), id);
        self.sensors_by_kind.push(Vec::new());
        self.producers_by_kind.push(Vec::new());
        self.consumers_by_kind.push(Vec::new());
        id
    }

    fn build(sensors: &[Sensor], dpcs: &[Dpc], tasks: &[Task], questions: &[Question]) -> Self {
        let mut ix = Index::default();
        for (i, s) in sensors.iter().enumerate() {
            ix.sensor_by_id.entry(s.id.clone()).or_insert(i as u32);
            for out in &s.outputs {
                let k = ix.intern(out);
                ix.sensors_by_kind[k.0 as usize].push(i as u32);
            }
        }
        for (i, d) in dpcs.iter().enumerate() {
            ix.dpc_by_id.entry(d.id.clone()).or_insert(i as u32);
            let mut io = Vec::with_capacity(d.signatures.len());
            for (j, sig) in d.signatures.iter().enumerate() {
                let r = SigRef {
                    dpc: i as u32,
                    signature: j as u32,
                };
                let k = ix.intern(&sig.output);
                ix.producers_by_kind[k.0 as usize].push(r);
                let mut inputs = Vec::with_capacity(sig.inputs.len());
                for input in &sig.inputs {
                    let ki = ix.intern(input);
                    ix.consumers_by_kind[ki.0 as usize].push(r);
                    inputs.push(ki);
                }
                io.push((inputs, k));
            }
            ix.sig_io.push(io);
        }
        for (i, q) in questions.iter().enumerate() {
            ix.question_by_id.entry(q.id.clone()).or_insert(i as u32);
            ix.question_by_concept.entry(q.concept.clone()).or_insert(i as u32);
        }
        for (i, t) in tasks.iter().enumerate() {
            ix.task_by_id.entry(t.id.clone()).or_insert(i as u32);
            for k in &t.required_stream {
                ix.intern(k);
            }
            for b in &t.concepts {
                ix.tasks_by_binding
                    .entry((b.concept.clone(), b.value.clone()))
                    .or_default()
                    .push(i as u32);
            }
        }
        let mut order: Vec<u32> = (0..tasks.len() as u32).collect();
        order.sort_by(|a, b| tasks[*a as usize].id.cmp(&tasks[*b as usize].id).then(a.cmp(b)));
        ix.tasks_by_id_order = order;
        for list in ix.tasks_by_binding.values_mut() {
            list.sort_by(|a, b| tasks[*a as usize].id.cmp(&tasks[*b as usize].id).then(a.cmp(b)));
            list.dedup();
        }
        // Deterministic producer order: sensors by id, signatures by (dpc id, index).
        for list in &mut ix.sensors_by_kind {
            list.sort_by(|a, b| sensors[*a as usize].id.cmp(&sensors[*b as usize].id).then(a.cmp(b)));
        }
        for list in ix.producers_by_kind.iter_mut().chain(ix.consumers_by_kind.iter_mut()) {
            list.sort_by(|a, b| {
                dpcs[a.dpc as usize]
                    .id
                    .cmp(&dpcs[b.dpc as usize].id)
                    .then(a.cmp(b))
            });
        }
        ix
    }
}

/// An immutable, indexed knowledge base snapshot.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    header: Header,
    shared_kinds: BTreeMap<String, DataItemKind>,
    sensors: Vec<Sensor>,
    dpcs: Vec<Dpc>,
    tasks: Vec<Task>,
    questions: Vec<Question>,
    /// Problems found while resolving a document (unknown kind labels).
    resolution_issues: Vec<Violation>,
    index: Index,
    discovery: OnceLock<Arc<Discovery>>,
    version_hash: OnceLock<String>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(Header::default(), BTreeMap::new(), vec![], vec![], vec![], vec![])
    }
}

impl PartialEq for KnowledgeBase {
    /// Structural equality up to collection ordering.
    fn eq(&self, other: &Self) -> bool {
        fn sorted<T, F: Fn(&T) -> &str>(v: &[T], id: F) -> Vec<&T> {
            let mut out: Vec<&T> = v.iter().collect();
            out.sort_by(|a, b| id(a).cmp(id(b)));
            out
        }
        self.header == other.header
            && self.shared_kinds == other.shared_kinds
            && sorted(&self.sensors, |s| &s.id) == sorted(&other.sensors, |s| &s.id)
            && sorted(&self.dpcs, |d| &d.id) == sorted(&other.dpcs, |d| &d.id)
            && sorted(&self.tasks, |t| &t.id) == sorted(&other.tasks, |t| &t.id)
            && sorted(&self.questions, |q| &q.id) == sorted(&other.questions, |q| &q.id)
    }
}

impl KnowledgeBase {
    pub fn new(
        header: Header,
        shared_kinds: BTreeMap<String, DataItemKind>,
        sensors: Vec<Sensor>,
        dpcs: Vec<Dpc>,
        tasks: Vec<Task>,
        questions: Vec<Question>,
    ) -> Self {
        let index = Index::build(&sensors, &dpcs, &tasks, &questions);
        Self {
            header,
            shared_kinds,
            sensors,
            dpcs,
            tasks,
            questions,
            resolution_issues: Vec::new(),
            index,
            discovery: OnceLock::new(),
            version_hash: OnceLock::new(),
        }
    }

    pub(crate) fn with_resolution_issues(mut self, issues: Vec<Violation>) -> Self {
        self.resolution_issues = issues;
        self
    }

    pub(crate) fn resolution_issues(&self) -> &[Violation] {
        &self.resolution_issues
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        load_kb(path)
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn shared_kinds(&self) -> &BTreeMap<String, DataItemKind> {
        &self.shared_kinds
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn dpcs(&self) -> &[Dpc] {
        &self.dpcs
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn sensor(&self, id: &str) -> Option<&Sensor> {
        self.index.sensor_by_id.get(id).map(|i| &self.sensors[*i as usize])
    }

    pub fn dpc(&self, id: &str) -> Option<&Dpc> {
        self.index.dpc_by_id.get(id).map(|i| &self.dpcs[*i as usize])
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.index.task_by_id.get(id).map(|i| &self.tasks[*i as usize])
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.index.question_by_id.get(id).map(|i| &self.questions[*i as usize])
    }

    pub fn question_for_concept(&self, concept: &str) -> Option<&Question> {
        self.index
            .question_by_concept
            .get(concept)
            .map(|i| &self.questions[*i as usize])
    }

    /// Tasks ordered by id.
    pub fn tasks_by_id(&self) -> impl Iterator<Item = &Task> + '_ {
        self.index.tasks_by_id_order.iter().map(|i| &self.tasks[*i as usize])
    }

    /// Tasks carrying the given concept binding, ordered by id.
    pub fn tasks_with_binding(&self, concept: &str, value: &str) -> impl Iterator<Item = &Task> + '_ {
        self.index
            .tasks_by_binding
            .get(&(concept.to_owned(), value.to_owned()))
            .into_iter()
            .flatten()
            .map(|i| &self.tasks[*i as usize])
    }

    pub(crate) fn task_positions_with_binding(&self, concept: &str, value: &str) -> &[u32] {
        self.index
            .tasks_by_binding
            .get(&(concept.to_owned(), value.to_owned()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn kind_id(&self, kind: &DataItemKind) -> Option<KindId> {
        self.index.kind_ids.get(kind).copied()
    }

    pub fn kind(&self, id: KindId) -> &DataItemKind {
        &self.index.kinds[id.0 as usize]
    }

    /// Every distinct kind mentioned anywhere in the knowledge base.
    pub fn kinds(&self) -> &[DataItemKind] {
        &self.index.kinds
    }

    /// Sensors (active or not) that output `kind`, ordered by id.
    pub fn sensors_producing(&self, kind: &DataItemKind) -> impl Iterator<Item = &Sensor> + '_ {
        self.kind_id(kind)
            .map(|k| self.index.sensors_by_kind[k.0 as usize].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|i| &self.sensors[*i as usize])
    }

    /// DPC signatures whose output is `kind`, ordered by (dpc id, index).
    pub fn signatures_producing(&self, kind: &DataItemKind) -> Vec<(&Dpc, usize)> {
        self.kind_id(kind)
            .map(|k| self.producer_refs(k))
            .unwrap_or(&[])
            .iter()
            .map(|r| (&self.dpcs[r.dpc as usize], r.signature as usize))
            .collect()
    }

    pub(crate) fn sensor_positions(&self, kind: KindId) -> &[u32] {
        &self.index.sensors_by_kind[kind.0 as usize]
    }

    pub(crate) fn producer_refs(&self, kind: KindId) -> &[SigRef] {
        &self.index.producers_by_kind[kind.0 as usize]
    }

    pub(crate) fn consumer_refs(&self, kind: KindId) -> &[SigRef] {
        &self.index.consumers_by_kind[kind.0 as usize]
    }

    /// Interned inputs (in kind order) and output of a signature.
    pub(crate) fn sig_io(&self, r: SigRef) -> (&[KindId], KindId) {
        let (inputs, output) = &self.index.sig_io[r.dpc as usize][r.signature as usize];
        (inputs, *output)
    }

    pub(crate) fn signature(&self, r: SigRef) -> &Signature {
        &self.dpcs[r.dpc as usize].signatures[r.signature as usize]
    }

    pub(crate) fn sensor_position(&self, id: &str) -> Option<u32> {
        self.index.sensor_by_id.get(id).copied()
    }

    /// Cached context discovery for this snapshot.
    pub(crate) fn discovery_cell(&self) -> &OnceLock<Arc<Discovery>> {
        &self.discovery
    }

    /// Content hash of the canonical serialization, used to detect drift
    /// between a plan and the knowledge base it was generated from.
    pub fn version_hash(&self) -> &str {
        self.version_hash.get_or_init(|| {
            let text = to_json(self);
            hex::encode(&Sha256::digest(text.as_bytes())[..8])
        })
    }

    /// Sensors and DPCs share one id namespace (both become plan resources);
    /// tasks and questions each have their own.
    fn id_taken(&self, entity: &Entity) -> bool {
        let id = entity.id();
        match entity {
            Entity::Sensor(_) | Entity::Dpc(_) => {
                self.index.sensor_by_id.contains_key(id) || self.index.dpc_by_id.contains_key(id)
            }
            Entity::Task(_) => self.index.task_by_id.contains_key(id),
            Entity::Question(_) => self.index.question_by_id.contains_key(id),
        }
    }

    /// Returns a new snapshot with `entity` inserted.
    pub fn add_description(&self, entity: Entity) -> Result<KnowledgeBase, KbError> {
        let report = validate_entity(&self.header, &entity);
        if !report.is_clean() {
            return Err(KbError::Malformed {
                entity: entity.type_name(),
                report,
            });
        }
        if self.id_taken(&entity) {
            return Err(KbError::DuplicateId {
                entity: entity.type_name(),
                id: entity.id().to_owned(),
            });
        }
        let mut sensors = self.sensors.clone();
        let mut dpcs = self.dpcs.clone();
        let mut tasks = self.tasks.clone();
        let mut questions = self.questions.clone();
        match entity {
            Entity::Sensor(s) => sensors.push(s),
            Entity::Dpc(d) => dpcs.push(d),
            Entity::Task(t) => {
                if let Some(b) = t
                    .concepts
                    .iter()
                    .find(|b| self.question_for_concept(&b.concept).is_none())
                {
                    return Err(KbError::DanglingConcept {
                        task: t.id.clone(),
                        concept: b.concept.clone(),
                    });
                }
                tasks.push(t)
            }
            Entity::Question(q) => {
                if let Some(existing) = self.question_for_concept(&q.concept) {
                    return Err(KbError::Malformed {
                        entity: "question",
                        report: ValidationReport {
                            violations: vec![Violation::new(
                                format!("question:{}", q.id),
                                "concept",
                                format!("concept `{}` already asked by `{}`", q.concept, existing.id),
                            )],
                        },
                    });
                }
                questions.push(q)
            }
        }
        Ok(KnowledgeBase::new(
            self.header.clone(),
            self.shared_kinds.clone(),
            sensors,
            dpcs,
            tasks,
            questions,
        ))
    }

    /// Returns a new snapshot with the given sensor's `active` flag set.
    pub fn with_sensor_active(&self, id: &str, active: bool) -> Option<KnowledgeBase> {
        let pos = self.sensor_position(id)? as usize;
        let mut sensors = self.sensors.clone();
        sensors[pos].active = active;
        Some(KnowledgeBase::new(
            self.header.clone(),
            self.shared_kinds.clone(),
            sensors,
            self.dpcs.clone(),
            self.tasks.clone(),
            self.questions.clone(),
        ))
    }
}

/// Free-function form of [`KnowledgeBase::add_description`].
pub fn add_description(kb: &KnowledgeBase, entity: Entity) -> Result<KnowledgeBase, KbError> {
    kb.add_description(entity)
}
