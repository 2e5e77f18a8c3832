//! The JSON knowledge base document.
//!
//! Entities may name a shared kind by its label or spell the kind out
//! inline. Saving writes entities sorted by id and uses the label form
//! whenever the kind equals the shared declaration of that label.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate_kb, AttributeSpec, ConceptBinding, DataItemKind, Dpc, Entity, Header, KbError, KnowledgeBase, Polarity,
    Question, Sensor, Signature, Task, ValidationReport, Violation, FORMAT_VERSION,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KindRef {
    Label(String),
    Inline(DataItemKind),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeDecl {
    Short(Polarity),
    Full(AttributeSpec),
}

impl AttributeDecl {
    fn spec(&self) -> AttributeSpec {
        match self {
            AttributeDecl::Short(polarity) => AttributeSpec {
                polarity: *polarity,
                default: 0.0,
            },
            AttributeDecl::Full(spec) => *spec,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub outputs: Vec<KindRef>,
    #[serde(default = "yes")]
    pub active: bool,
    #[serde(default)]
    pub context: BTreeMap<String, f64>,
    #[serde(default)]
    pub domains: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureDoc {
    pub inputs: Vec<KindRef>,
    pub output: KindRef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpcDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub signatures: Vec<SignatureDoc>,
    #[serde(default)]
    pub context: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub required_stream: Vec<KindRef>,
    #[serde(default)]
    pub concepts: Vec<ConceptBinding>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionDoc {
    pub id: String,
    pub text: String,
    pub concept: String,
}

/// Raw, unresolved form of a knowledge base file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbDocument {
    pub version: u32,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub units: Vec<String>,
    #[serde(default)]
    pub kinds: Vec<DataItemKind>,
    #[serde(default)]
    pub sensors: Vec<SensorDoc>,
    #[serde(default)]
    pub dpcs: Vec<DpcDoc>,
    #[serde(default)]
    pub tasks: Vec<TaskDoc>,
    #[serde(default)]
    pub questions: Vec<QuestionDoc>,
}

/// Parses the text of a knowledge base file without resolving references.
pub fn parse_document(text: &str) -> Result<KbDocument, KbError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: KbDocument = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        KbError::Parse {
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })?;
    // Reject trailing garbage after the document.
    de_end(text)?;
    Ok(doc)
}

fn de_end(text: &str) -> Result<(), KbError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde::de::IgnoredAny::deserialize(&mut de).and_then(|_| de.end()).map_err(|e| KbError::Parse {
        line: e.line(),
        column: e.column(),
        field: ".".into(),
        message: e.to_string(),
    })
}

struct Resolver<'a> {
    shared: &'a BTreeMap<String, DataItemKind>,
    issues: Vec<Violation>,
}

impl Resolver<'_> {
    fn resolve(&mut self, entity: &str, field: String, r: &KindRef) -> Option<DataItemKind> {
        match r {
            KindRef::Inline(k) => Some(k.clone()),
            KindRef::Label(label) => match self.shared.get(label) {
                Some(k) => Some(k.clone()),
                None => {
                    self.issues.push(Violation::new(
                        entity,
                        field,
                        format!("unknown kind label `{label}`"),
                    ));
                    None
                }
            },
        }
    }
}

/// Resolves a parsed document into a knowledge base. The result is always
/// built; unresolvable references are kept as violations that
/// [`validate_kb`] reports.
pub fn from_document(doc: KbDocument) -> KnowledgeBase {
    let header = Header {
        version: doc.version,
        attributes: doc.attributes.iter().map(|(k, v)| (k.clone(), v.spec())).collect(),
        units: doc.units.iter().cloned().collect(),
    };
    let mut shared = BTreeMap::new();
    let mut issues = Vec::new();
    for k in &doc.kinds {
        if shared.insert(k.label.clone(), k.clone()).is_some() {
            issues.push(Violation::new(
                format!("kind:{}", k.label),
                "label",
                "shared kind label declared more than once",
            ));
        }
    }
    let mut r = Resolver {
        shared: &shared,
        issues,
    };

    let sensors = doc
        .sensors
        .iter()
        .map(|s| {
            let ent = format!("sensor:{}", s.id);
            Sensor {
                id: s.id.clone(),
                name: s.name.clone(),
                outputs: s
                    .outputs
                    .iter()
                    .enumerate()
                    .filter_map(|(i, k)| r.resolve(&ent, format!("outputs[{i}]"), k))
                    .collect(),
                active: s.active,
                context: s.context.clone(),
                domains: s.domains.iter().cloned().collect(),
            }
        })
        .collect();

    let dpcs = doc
        .dpcs
        .iter()
        .map(|d| {
            let ent = format!("dpc:{}", d.id);
            let mut signatures = Vec::new();
            for (j, sig) in d.signatures.iter().enumerate() {
                let inputs: BTreeSet<DataItemKind> = sig
                    .inputs
                    .iter()
                    .enumerate()
                    .filter_map(|(i, k)| r.resolve(&ent, format!("signatures[{j}].inputs[{i}]"), k))
                    .collect();
                let output = r.resolve(&ent, format!("signatures[{j}].output"), &sig.output);
                if let Some(output) = output {
                    signatures.push(Signature { inputs, output });
                }
            }
            Dpc {
                id: d.id.clone(),
                name: d.name.clone(),
                signatures,
                context: d.context.clone(),
            }
        })
        .collect();

    let tasks = doc
        .tasks
        .iter()
        .map(|t| {
            let ent = format!("task:{}", t.id);
            Task {
                id: t.id.clone(),
                name: t.name.clone(),
                required_stream: t
                    .required_stream
                    .iter()
                    .enumerate()
                    .filter_map(|(i, k)| r.resolve(&ent, format!("required_stream[{i}]"), k))
                    .collect(),
                concepts: t.concepts.clone(),
            }
        })
        .collect();

    let questions = doc
        .questions
        .iter()
        .map(|q| Question {
            id: q.id.clone(),
            text: q.text.clone(),
            concept: q.concept.clone(),
        })
        .collect();

    let issues = r.issues;
    KnowledgeBase::new(header, shared, sensors, dpcs, tasks, questions).with_resolution_issues(issues)
}

/// One entity in document form, tagged with its type. Used to ingest a
/// single description into an existing knowledge base.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EntityDoc {
    Sensor(SensorDoc),
    Dpc(DpcDoc),
    Task(TaskDoc),
    Question(QuestionDoc),
}

/// Resolves kind labels against the shared kinds of `kb`.
pub fn resolve_kind(kb: &KnowledgeBase, r: &KindRef) -> Option<DataItemKind> {
    match r {
        KindRef::Inline(k) => Some(k.clone()),
        KindRef::Label(l) => kb.shared_kinds().get(l).cloned(),
    }
}

/// Turns an entity document into an entity of `kb`, failing on unknown
/// kind labels.
pub fn resolve_entity(kb: &KnowledgeBase, doc: &EntityDoc) -> Result<Entity, KbError> {
    // Route through the document resolver so that errors name the same
    // fields as whole-file loading does.
    let mut d = KbDocument {
        version: FORMAT_VERSION,
        attributes: BTreeMap::new(),
        units: Vec::new(),
        kinds: kb.shared_kinds().values().cloned().collect(),
        sensors: Vec::new(),
        dpcs: Vec::new(),
        tasks: Vec::new(),
        questions: Vec::new(),
    };
    let type_name = match doc {
        EntityDoc::Sensor(x) => {
            d.sensors.push(x.clone());
            "sensor"
        }
        EntityDoc::Dpc(x) => {
            d.dpcs.push(x.clone());
            "dpc"
        }
        EntityDoc::Task(x) => {
            d.tasks.push(x.clone());
            "task"
        }
        EntityDoc::Question(x) => {
            d.questions.push(x.clone());
            "question"
        }
    };
    let tmp = from_document(d);
    let issues = tmp.resolution_issues().to_vec();
    if !issues.is_empty() {
        return Err(KbError::Malformed {
            entity: type_name,
            report: ValidationReport { violations: issues },
        });
    }
    Ok(match doc {
        EntityDoc::Sensor(_) => Entity::Sensor(tmp.sensors()[0].clone()),
        EntityDoc::Dpc(_) => Entity::Dpc(tmp.dpcs()[0].clone()),
        EntityDoc::Task(_) => Entity::Task(tmp.tasks()[0].clone()),
        EntityDoc::Question(_) => Entity::Question(tmp.questions()[0].clone()),
    })
}

/// Parses and validates knowledge base text.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, KbError> {
    let kb = from_document(parse_document(text)?);
    let report = validate_kb(&kb);
    if report.is_clean() {
        Ok(kb)
    } else {
        Err(KbError::Invalid(report))
    }
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_kb(&text)
}

fn kind_ref(shared: &BTreeMap<String, DataItemKind>, kind: &DataItemKind) -> KindRef {
    match shared.get(&kind.label) {
        Some(k) if k == kind => KindRef::Label(kind.label.clone()),
        _ => KindRef::Inline(kind.clone()),
    }
}

pub fn to_document(kb: &KnowledgeBase) -> KbDocument {
    let shared = kb.shared_kinds();
    let kr = |k: &DataItemKind| kind_ref(shared, k);

    let mut sensors: Vec<SensorDoc> = kb
        .sensors()
        .iter()
        .map(|s| SensorDoc {
            id: s.id.clone(),
            name: s.name.clone(),
            outputs: s.outputs.iter().map(kr).collect(),
            active: s.active,
            context: s.context.clone(),
            domains: s.domains.iter().cloned().collect(),
        })
        .collect();
    sensors.sort_by(|a, b| a.id.cmp(&b.id));

    let mut dpcs: Vec<DpcDoc> = kb
        .dpcs()
        .iter()
        .map(|d| DpcDoc {
            id: d.id.clone(),
            name: d.name.clone(),
            signatures: d
                .signatures
                .iter()
                .map(|sig| SignatureDoc {
                    inputs: sig.inputs.iter().map(kr).collect(),
                    output: kr(&sig.output),
                })
                .collect(),
            context: d.context.clone(),
        })
        .collect();
    dpcs.sort_by(|a, b| a.id.cmp(&b.id));

    let mut tasks: Vec<TaskDoc> = kb
        .tasks()
        .iter()
        .map(|t| TaskDoc {
            id: t.id.clone(),
            name: t.name.clone(),
            required_stream: t.required_stream.iter().map(kr).collect(),
            concepts: t.concepts.clone(),
        })
        .collect();
    tasks.sort_by(|a, b| a.id.cmp(&b.id));

    let mut questions: Vec<QuestionDoc> = kb
        .questions()
        .iter()
        .map(|q| QuestionDoc {
            id: q.id.clone(),
            text: q.text.clone(),
            concept: q.concept.clone(),
        })
        .collect();
    questions.sort_by(|a, b| a.id.cmp(&b.id));

    KbDocument {
        version: kb.header().version,
        attributes: kb
            .header()
            .attributes
            .iter()
            .map(|(k, v)| (k.clone(), AttributeDecl::Full(*v)))
            .collect(),
        units: kb.header().units.iter().cloned().collect(),
        kinds: shared.values().cloned().collect(),
        sensors,
        dpcs,
        tasks,
        questions,
    }
}

/// Canonical text of a knowledge base.
pub fn to_json(kb: &KnowledgeBase) -> String {
    let mut text = serde_json::to_string_pretty(&to_document(kb)).expect("document serializes");
    text.push('\n');
    text
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbError> {
    let path = path.as_ref();
    fs::write(path, to_json(kb)).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })
}
