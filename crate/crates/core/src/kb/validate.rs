use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DataItemKind, Dpc, Entity, Header, KnowledgeBase, Question, Sensor, Task, ValueType, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `type:id`, e.g. `dpc:c-1`.
    pub entity: String,
    /// Field path inside the entity, e.g. `signatures[0].inputs[1]`.
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(entity: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            entity: entity.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.entity, self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

struct Checker<'a> {
    header: &'a Header,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn push(&mut self, entity: &str, field: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation::new(entity, field, message));
    }

    fn kind(&mut self, entity: &str, field: &str, k: &DataItemKind) {
        if k.label.is_empty() {
            self.push(entity, field, "empty semantic label");
        }
        if !self.header.knows_unit(&k.unit) {
            self.push(entity, field, format!("undeclared unit `{}` on `{}`", k.unit, k.label));
        }
        if matches!(k.value_type, ValueType::Boolean | ValueType::Text) && k.unit != "none" {
            self.push(
                entity,
                field,
                format!("{} kind `{}` must use unit `none`", k.value_type, k.label),
            );
        }
    }

    fn context(&mut self, entity: &str, context: &BTreeMap<String, f64>) {
        for (name, value) in context {
            let field = format!("context.{name}");
            if !self.header.attributes.contains_key(name) {
                self.push(entity, &field, format!("attribute `{name}` is not in the registry"));
            }
            if !value.is_finite() || *value < 0.0 {
                self.push(entity, &field, format!("value {value} must be finite and non-negative"));
            }
        }
    }

    fn id(&mut self, entity: &str, id: &str) {
        if id.is_empty() {
            self.push(entity, "id", "empty id");
        }
    }

    fn sensor(&mut self, s: &Sensor) {
        let ent = format!("sensor:{}", s.id);
        self.id(&ent, &s.id);
        if s.outputs.is_empty() {
            self.push(&ent, "outputs", "sensor declares no outputs");
        }
        for (i, k) in s.outputs.iter().enumerate() {
            self.kind(&ent, &format!("outputs[{i}]"), k);
        }
        self.context(&ent, &s.context);
    }

    fn dpc(&mut self, d: &Dpc) {
        let ent = format!("dpc:{}", d.id);
        self.id(&ent, &d.id);
        if d.signatures.is_empty() {
            self.push(&ent, "signatures", "DPC declares no signatures");
        }
        let mut seen = HashSet::new();
        for (j, sig) in d.signatures.iter().enumerate() {
            let base = format!("signatures[{j}]");
            if sig.inputs.is_empty() {
                self.push(&ent, format!("{base}.inputs"), "signature has no inputs");
            }
            if sig.inputs.contains(&sig.output) {
                self.push(&ent, &base, format!("signature consumes its own output `{}`", sig.output.label));
            }
            if !seen.insert(sig) {
                self.push(&ent, &base, "duplicate signature");
            }
            for (i, k) in sig.inputs.iter().enumerate() {
                self.kind(&ent, &format!("{base}.inputs[{i}]"), k);
            }
            self.kind(&ent, &format!("{base}.output"), &sig.output);
        }
        self.context(&ent, &d.context);
    }

    fn question(&mut self, q: &Question) {
        let ent = format!("question:{}", q.id);
        self.id(&ent, &q.id);
        if q.concept.is_empty() {
            self.push(&ent, "concept", "empty concept");
        }
    }

    fn task(&mut self, t: &Task) {
        let ent = format!("task:{}", t.id);
        self.id(&ent, &t.id);
        if t.required_stream.is_empty() {
            self.push(&ent, "required_stream", "task requires no data items");
        }
        let mut seen = HashSet::new();
        for (i, k) in t.required_stream.iter().enumerate() {
            let field = format!("required_stream[{i}]");
            if !seen.insert(k) {
                self.push(&ent, &field, format!("`{}` listed twice", k.label));
            }
            self.kind(&ent, &field, k);
        }
        let mut concepts = HashSet::new();
        for (i, b) in t.concepts.iter().enumerate() {
            let field = format!("concepts[{i}]");
            if b.concept.is_empty() || b.value.is_empty() {
                self.push(&ent, &field, "empty concept or value");
            }
            if !concepts.insert(&b.concept) {
                self.push(&ent, &field, format!("concept `{}` bound more than once", b.concept));
            }
        }
    }
}

/// Checks a single entity in isolation (no cross references).
pub fn validate_entity(header: &Header, entity: &Entity) -> ValidationReport {
    let mut c = Checker { header, out: Vec::new() };
    match entity {
        Entity::Sensor(s) => c.sensor(s),
        Entity::Dpc(d) => c.dpc(d),
        Entity::Task(t) => c.task(t),
        Entity::Question(q) => c.question(q),
    }
    ValidationReport { violations: c.out }
}

/// Lists every invariant violation of `kb`. Never fails.
pub fn validate_kb(kb: &KnowledgeBase) -> ValidationReport {
    let header = kb.header();
    let mut c = Checker { header, out: Vec::new() };
    c.out.extend(kb.resolution_issues().iter().cloned());

    if header.version != FORMAT_VERSION {
        c.push("header", "version", format!("unsupported format version {}", header.version));
    }
    for (name, spec) in &header.attributes {
        if name.is_empty() {
            c.push("header", "attributes", "empty attribute name");
        }
        if !spec.default.is_finite() || spec.default < 0.0 {
            c.push("header", format!("attributes.{name}.default"), "default must be finite and non-negative");
        }
    }
    for (label, k) in kb.shared_kinds() {
        let ent = format!("kind:{label}");
        c.kind(&ent, "kind", k);
    }

    let mut resource_ids: HashMap<&str, &str> = HashMap::new();
    for s in kb.sensors() {
        c.sensor(s);
        if let Some(prev) = resource_ids.insert(&s.id, "sensor") {
            c.push(&format!("sensor:{}", s.id), "id", format!("duplicate id (already used by a {prev})"));
        }
    }
    for d in kb.dpcs() {
        c.dpc(d);
        if let Some(prev) = resource_ids.insert(&d.id, "dpc") {
            c.push(&format!("dpc:{}", d.id), "id", format!("duplicate id (already used by a {prev})"));
        }
    }

    let mut question_ids = HashSet::new();
    let mut concepts: HashMap<&str, &str> = HashMap::new();
    for q in kb.questions() {
        c.question(q);
        let ent = format!("question:{}", q.id);
        if !question_ids.insert(q.id.as_str()) {
            c.push(&ent, "id", "duplicate id");
        }
        if let Some(prev) = concepts.insert(&q.concept, &q.id) {
            c.push(&ent, "concept", format!("concept `{}` already asked by `{prev}`", q.concept));
        }
    }

    let mut task_ids = HashSet::new();
    for t in kb.tasks() {
        c.task(t);
        let ent = format!("task:{}", t.id);
        if !task_ids.insert(t.id.as_str()) {
            c.push(&ent, "id", "duplicate id");
        }
        let bound: BTreeSet<&str> = t.concepts.iter().map(|b| b.concept.as_str()).collect();
        for concept in bound {
            if !concepts.contains_key(concept) {
                c.push(&ent, "concepts", format!("concept `{concept}` has no question"));
            }
        }
    }

    ValidationReport { violations: c.out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{from_document, parse_document};

    fn report(text: &str) -> ValidationReport {
        validate_kb(&from_document(parse_document(text).unwrap()))
    }

    #[test]
    fn duplicate_sensor_id_is_one_violation() {
        let r = report(
            r#"{"version":1,"sensors":[
                {"id":"s","outputs":[{"label":"a","type":"real","unit":"celsius"}]},
                {"id":"s","outputs":[{"label":"b","type":"real","unit":"celsius"}]}]}"#,
        );
        assert_eq!(r.violations.len(), 1, "{r}");
        assert_eq!(r.violations[0].field, "id");
    }

    #[test]
    fn task_concept_without_question_is_one_violation() {
        let r = report(
            r#"{"version":1,"tasks":[{"id":"t",
                "required_stream":[{"label":"a","type":"real","unit":"celsius"}],
                "concepts":[{"concept":"domain","value":"x"}]}]}"#,
        );
        assert_eq!(r.violations.len(), 1, "{r}");
        assert_eq!(r.violations[0].entity, "task:t");
    }

    #[test]
    fn undeclared_unit_names_the_signature() {
        let r = report(
            r#"{"version":1,"dpcs":[{"id":"c","signatures":[
                {"inputs":[{"label":"a","type":"real","unit":"furlongs"}],
                 "output":{"label":"b","type":"text","unit":"none"}}]}]}"#,
        );
        assert_eq!(r.violations.len(), 1, "{r}");
        assert_eq!(r.violations[0].entity, "dpc:c");
        assert_eq!(r.violations[0].field, "signatures[0].inputs[0]");
    }

    #[test]
    fn declared_unit_is_accepted() {
        let r = report(
            r#"{"version":1,"units":["furlongs"],"sensors":[
                {"id":"s","outputs":[{"label":"a","type":"real","unit":"furlongs"}]}]}"#,
        );
        assert!(r.is_clean(), "{r}");
    }

    #[test]
    fn boolean_kind_requires_unit_none() {
        let r = report(
            r#"{"version":1,"sensors":[{"id":"s","outputs":[{"label":"a","type":"boolean","unit":"celsius"}]}]}"#,
        );
        assert_eq!(r.violations.len(), 1, "{r}");
    }

    #[test]
    fn signature_consuming_own_output_and_unknown_attribute() {
        let r = report(
            r#"{"version":1,"dpcs":[{"id":"c","context":{"energy":1.0},"signatures":[
                {"inputs":[{"label":"a","type":"text","unit":"none"}],
                 "output":{"label":"a","type":"text","unit":"none"}}]}]}"#,
        );
        assert_eq!(r.violations.len(), 2, "{r}");
    }

    #[test]
    fn multi_valued_binding_is_rejected() {
        let r = report(
            r#"{"version":1,
                "questions":[{"id":"q","text":"?","concept":"domain"}],
                "tasks":[{"id":"t","required_stream":[{"label":"a","type":"real","unit":"celsius"}],
                "concepts":[{"concept":"domain","value":"x"},{"concept":"domain","value":"y"}]}]}"#,
        );
        assert_eq!(r.violations.len(), 1, "{r}");
    }
}
