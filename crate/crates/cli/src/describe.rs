//! Prompted entity descriptions.
//!
//! Kinds are given by shared label, or inline as `label:type:unit`. Lists
//! are comma separated and `name=value` pairs fill context attributes and
//! task concepts.

use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context as _, Result};
use senscomp_core::kb::{add_description, resolve_entity, EntityDoc};
use senscomp_core::KnowledgeBase;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Sensor,
    Dpc,
    Task,
    Question,
}

struct Prompter<'a, R, W> {
    input: &'a mut R,
    prompt: &'a mut W,
}

impl<R: BufRead, W: Write> Prompter<'_, R, W> {
    fn ask(&mut self, label: &str) -> Result<String> {
        write!(self.prompt, "{label}: ")?;
        self.prompt.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            bail!("input ended while asking for {label}");
        }
        Ok(line.trim().to_owned())
    }

    fn required(&mut self, label: &str) -> Result<String> {
        let v = self.ask(label)?;
        if v.is_empty() {
            bail!("{label} is required");
        }
        Ok(v)
    }
}

fn list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn kind(s: &str) -> Value {
    let parts: Vec<_> = s.split(':').collect();
    match parts.as_slice() {
        [label, ty, unit] => json!({"label": label, "type": ty, "unit": unit}),
        _ => json!(s),
    }
}

fn kinds(s: &str) -> Value {
    Value::Array(list(s).into_iter().map(kind).collect())
}

fn pairs(s: &str) -> Result<Vec<(String, String)>> {
    list(s)
        .into_iter()
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| anyhow!("expected name=value, got `{p}`"))?;
            Ok((k.trim().to_owned(), v.trim().to_owned()))
        })
        .collect()
}

fn context(s: &str) -> Result<Value> {
    let mut m = Map::new();
    for (k, v) in pairs(s)? {
        let n: f64 = v.parse().with_context(|| format!("`{k}` needs a number"))?;
        m.insert(k, json!(n));
    }
    Ok(Value::Object(m))
}

fn sensor<R: BufRead, W: Write>(p: &mut Prompter<'_, R, W>) -> Result<Value> {
    let id = p.required("id")?;
    let name = p.ask("name")?;
    let outputs = kinds(&p.required("outputs (kinds)")?);
    let ctx = context(&p.ask("context (attribute=value)")?)?;
    let domains = list(&p.ask("domains")?).into_iter().map(String::from).collect::<Vec<_>>();
    let active = !matches!(p.ask("active [Y/n]")?.to_ascii_lowercase().as_str(), "n" | "no");
    Ok(json!({
        "type": "sensor", "id": id, "name": name, "outputs": outputs,
        "active": active, "context": ctx, "domains": domains,
    }))
}

fn dpc<R: BufRead, W: Write>(p: &mut Prompter<'_, R, W>) -> Result<Value> {
    let id = p.required("id")?;
    let name = p.ask("name")?;
    let mut signatures = Vec::new();
    loop {
        let n = signatures.len();
        let inputs = p.ask(&format!("signature {n} inputs (blank to finish)"))?;
        if inputs.is_empty() {
            break;
        }
        let output = p.required(&format!("signature {n} output"))?;
        signatures.push(json!({"inputs": kinds(&inputs), "output": kind(&output)}));
    }
    let ctx = context(&p.ask("context (attribute=value)")?)?;
    Ok(json!({"type": "dpc", "id": id, "name": name, "signatures": signatures, "context": ctx}))
}

fn task<R: BufRead, W: Write>(p: &mut Prompter<'_, R, W>) -> Result<Value> {
    let id = p.required("id")?;
    let name = p.ask("name")?;
    let stream = kinds(&p.required("required stream (kinds)")?);
    let concepts: Vec<_> = pairs(&p.ask("concepts (concept=value)")?)?
        .into_iter()
        .map(|(c, v)| json!({"concept": c, "value": v}))
        .collect();
    Ok(json!({"type": "task", "id": id, "name": name, "required_stream": stream, "concepts": concepts}))
}

fn question<R: BufRead, W: Write>(p: &mut Prompter<'_, R, W>) -> Result<Value> {
    let id = p.required("id")?;
    let text = p.required("text")?;
    let concept = p.required("concept")?;
    Ok(json!({"type": "question", "id": id, "text": text, "concept": concept}))
}

/// Prompts for one entity and returns it with the KB that includes it.
pub fn run<R: BufRead, W: Write>(
    kb: &KnowledgeBase,
    kind: Kind,
    input: &mut R,
    prompt: &mut W,
) -> Result<(EntityDoc, KnowledgeBase)> {
    let mut p = Prompter { input, prompt };
    let value = match kind {
        Kind::Sensor => sensor(&mut p)?,
        Kind::Dpc => dpc(&mut p)?,
        Kind::Task => task(&mut p)?,
        Kind::Question => question(&mut p)?,
    };
    let doc: EntityDoc = serde_json::from_value(value).context("malformed description")?;
    let entity = resolve_entity(kb, &doc)?;
    let next = add_description(kb, entity)?;
    Ok((doc, next))
}

pub fn label(doc: &EntityDoc) -> (&'static str, &str) {
    match doc {
        EntityDoc::Sensor(x) => ("sensor", &x.id),
        EntityDoc::Dpc(x) => ("dpc", &x.id),
        EntityDoc::Task(x) => ("task", &x.id),
        EntityDoc::Question(x) => ("question", &x.id),
    }
}
