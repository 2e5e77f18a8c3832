//! Random knowledge bases and brute-force reference implementations used by
//! the property and acceptance suites. The oracles only read the public
//! entity lists and never touch the library's indexes or search code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use senscomp_core::composer::{Edge, Sink, Solution, SolutionNode};
use senscomp_core::kb::{parse_kb, validate_kb, Polarity};
use senscomp_core::qa::ConstraintSet;
use senscomp_core::{DataItemKind, KnowledgeBase};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn kb_from(doc: &Value) -> KnowledgeBase {
    let kb = parse_kb(&doc.to_string()).expect("generated KB parses");
    let report = validate_kb(&kb);
    assert!(report.is_clean(), "generated KB invalid: {report}\n{doc:#}");
    kb
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_sensors: usize,
    pub max_dpcs: usize,
    pub max_signatures: usize,
    pub max_kinds: usize,
    /// Kinds sit on five layers and signatures only read lower layers,
    /// which bounds the DPC depth at four and rules out cycles.
    pub layered: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            max_sensors: 8,
            max_dpcs: 8,
            max_signatures: 3,
            max_kinds: 8,
            layered: true,
        }
    }
}

/// A random composition KB with one task `t`, as a document.
pub fn composition_doc(rng: &mut ChaCha8Rng, shape: Shape) -> Value {
    let n_kinds = rng.gen_range(3..=shape.max_kinds);
    let layer = |i: usize| i * 5 / n_kinds;
    let kinds: Vec<Value> = (0..n_kinds)
        .map(|i| json!({"label": format!("k{i}"), "type": "text", "unit": "none"}))
        .collect();
    let label = |i: usize| format!("k{i}");

    let mut sensors = Vec::new();
    for s in 0..rng.gen_range(1..=shape.max_sensors) {
        let mut outs: BTreeSet<usize> = BTreeSet::new();
        for _ in 0..rng.gen_range(1..=2) {
            // Favour the lower layers so that tasks are often satisfiable.
            let hi = if rng.gen_bool(0.7) { (n_kinds / 2).max(1) } else { n_kinds };
            outs.insert(rng.gen_range(0..hi));
        }
        sensors.push(json!({
            "id": format!("s{s}"),
            "outputs": outs.iter().map(|&i| label(i)).collect::<Vec<_>>(),
            "active": rng.gen_bool(0.75),
            "context": {"energy": rng.gen_range(1..=4) as f64, "accuracy": rng.gen_range(5..=10) as f64 / 10.0},
        }));
    }

    let mut dpcs = Vec::new();
    for d in 0..rng.gen_range(0..=shape.max_dpcs) {
        let mut sigs: Vec<(BTreeSet<usize>, usize)> = Vec::new();
        for _ in 0..rng.gen_range(1..=shape.max_signatures) {
            let out = rng.gen_range(0..n_kinds);
            let pool: Vec<usize> = (0..n_kinds)
                .filter(|&i| i != out && (!shape.layered || layer(i) < layer(out)))
                .collect();
            if pool.is_empty() {
                continue;
            }
            let n = rng.gen_range(1..=3.min(pool.len()));
            let inputs: BTreeSet<usize> = pool.choose_multiple(rng, n).copied().collect();
            if !sigs.contains(&(inputs.clone(), out)) {
                sigs.push((inputs, out));
            }
        }
        if sigs.is_empty() {
            continue;
        }
        dpcs.push(json!({
            "id": format!("d{d}"),
            "signatures": sigs.iter().map(|(i, o)| json!({
                "inputs": i.iter().map(|&k| label(k)).collect::<Vec<_>>(),
                "output": label(*o),
            })).collect::<Vec<_>>(),
            "context": {"energy": rng.gen_range(1..=4) as f64, "accuracy": rng.gen_range(5..=10) as f64 / 10.0},
        }));
    }

    let n_req = rng.gen_range(1..=2.min(n_kinds));
    // Required kinds lean towards the upper layers so DPCs get exercised.
    let mut upper: Vec<usize> = (0..n_kinds).rev().collect();
    upper.truncate((n_kinds / 2).max(n_req) + 1);
    upper.truncate(n_kinds);
    let req: Vec<usize> = upper.choose_multiple(rng, n_req).copied().collect();

    json!({
        "version": 1,
        "attributes": {"energy": "cost", "accuracy": "benefit"},
        "kinds": kinds,
        "sensors": sensors,
        "dpcs": dpcs,
        "tasks": [{"id": "t", "required_stream": req.iter().map(|&i| label(i)).collect::<Vec<_>>()}],
    })
}

pub fn composition_kb(seed: u64, shape: Shape) -> KnowledgeBase {
    kb_from(&composition_doc(&mut rng(seed), shape))
}

// ---------------------------------------------------------------------------
// Composer oracle: enumerate every kind -> producer assignment reachable from
// the required stream, keep the acyclic ones.

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Producer {
    Sensor(String),
    Synthetic,
    Dpc(String, usize),
}

fn producers(kb: &KnowledgeBase, kind: &DataItemKind, extra: &BTreeSet<DataItemKind>) -> Vec<Producer> {
    let mut out = Vec::new();
    for s in kb.sensors() {
        if s.active && s.outputs.contains(kind) {
            out.push(Producer::Sensor(s.id.clone()));
        }
    }
    if extra.contains(kind) {
        out.push(Producer::Synthetic);
    }
    for d in kb.dpcs() {
        for (j, sig) in d.signatures.iter().enumerate() {
            if &sig.output == kind {
                out.push(Producer::Dpc(d.id.clone(), j));
            }
        }
    }
    out
}

fn inputs_of(kb: &KnowledgeBase, p: &Producer) -> Vec<DataItemKind> {
    match p {
        Producer::Dpc(id, j) => {
            let d = kb.dpcs().iter().find(|d| &d.id == id).unwrap();
            d.signatures[*j].inputs.iter().cloned().collect()
        }
        _ => Vec::new(),
    }
}

type Assignment = BTreeMap<DataItemKind, Producer>;

fn assignments(
    kb: &KnowledgeBase,
    extra: &BTreeSet<DataItemKind>,
    assign: &mut Assignment,
    pending: BTreeSet<DataItemKind>,
    out: &mut Vec<Assignment>,
    stop_after: usize,
) {
    if out.len() >= stop_after {
        return;
    }
    let Some(k) = pending.iter().next().cloned() else {
        if acyclic(kb, assign) {
            out.push(assign.clone());
        }
        return;
    };
    for p in producers(kb, &k, extra) {
        let mut next = pending.clone();
        next.remove(&k);
        for i in inputs_of(kb, &p) {
            if !assign.contains_key(&i) && i != k {
                next.insert(i);
            }
        }
        assign.insert(k.clone(), p);
        assignments(kb, extra, assign, next, out, stop_after);
        assign.remove(&k);
    }
}

fn acyclic(kb: &KnowledgeBase, assign: &Assignment) -> bool {
    // Colour-based DFS over the kind dependency relation.
    fn visit(kb: &KnowledgeBase, a: &Assignment, k: &DataItemKind, state: &mut BTreeMap<DataItemKind, u8>) -> bool {
        match state.get(k) {
            Some(1) => return false,
            Some(2) => return true,
            _ => {}
        }
        state.insert(k.clone(), 1);
        for i in inputs_of(kb, &a[k]) {
            if !visit(kb, a, &i, state) {
                return false;
            }
        }
        state.insert(k.clone(), 2);
        true
    }
    let mut state = BTreeMap::new();
    assign.keys().all(|k| visit(kb, assign, k, &mut state))
}

fn node(k: &DataItemKind, p: &Producer) -> SolutionNode {
    match p {
        Producer::Sensor(s) => SolutionNode::sensor(s.clone(), k.clone()),
        Producer::Dpc(d, j) => SolutionNode::dpc(d.clone(), *j, k.clone()),
        Producer::Synthetic => unreachable!("synthetic producers never reach a solution"),
    }
}

/// Every acyclic shared-producer solution for the task.
pub fn oracle_solutions(kb: &KnowledgeBase, task: &str) -> Vec<Solution> {
    let required = kb.task(task).unwrap().required_stream.clone();
    let mut found = Vec::new();
    assignments(
        kb,
        &BTreeSet::new(),
        &mut Assignment::new(),
        required.iter().cloned().collect(),
        &mut found,
        usize::MAX,
    );
    let mut out: Vec<Solution> = found
        .iter()
        .map(|a| {
            let nodes = a.iter().map(|(k, p)| node(k, p));
            let mut edges = Vec::new();
            for (k, p) in a {
                for i in inputs_of(kb, p) {
                    edges.push(Edge {
                        producer: node(&i, &a[&i]),
                        consumer: node(k, p),
                        kind: i,
                    });
                }
            }
            let sinks = required
                .iter()
                .map(|k| Sink {
                    kind: k.clone(),
                    node: node(k, &a[k]),
                })
                .collect();
            Solution::new(nodes, edges, sinks)
        })
        .collect();
    out.sort_by_key(|s| s.canonical_hash());
    out.dedup();
    out
}

/// Whether the task composes once every kind in `extra` becomes sensable.
pub fn oracle_enabled(kb: &KnowledgeBase, task: &str, extra: &BTreeSet<DataItemKind>) -> bool {
    let required = kb.task(task).unwrap().required_stream.clone();
    let mut found = Vec::new();
    assignments(
        kb,
        extra,
        &mut Assignment::new(),
        required.iter().cloned().collect(),
        &mut found,
        1,
    );
    !found.is_empty()
}

/// Kinds a missing set may draw from: not sensed by an active sensor, and
/// either produced by nothing or offered by an inactive sensor.
pub fn oracle_candidates(kb: &KnowledgeBase) -> BTreeSet<DataItemKind> {
    let mut all: BTreeSet<DataItemKind> = BTreeSet::new();
    for s in kb.sensors() {
        all.extend(s.outputs.iter().cloned());
    }
    for d in kb.dpcs() {
        for sig in &d.signatures {
            all.extend(sig.inputs.iter().cloned());
            all.insert(sig.output.clone());
        }
    }
    for t in kb.tasks() {
        all.extend(t.required_stream.iter().cloned());
    }
    all.into_iter()
        .filter(|k| !kb.sensors().iter().any(|s| s.active && s.outputs.contains(k)))
        .filter(|k| {
            let dpc_made = kb.dpcs().iter().any(|d| d.signatures.iter().any(|s| &s.output == k));
            let inactive = kb.sensors().iter().any(|s| !s.active && s.outputs.contains(k));
            !dpc_made || inactive
        })
        .collect()
}

/// Minimal enabling subsets of the candidates of size at most `max`.
pub fn oracle_missing_sets(kb: &KnowledgeBase, task: &str, max: usize) -> Vec<Vec<DataItemKind>> {
    let cands: Vec<DataItemKind> = oracle_candidates(kb).into_iter().collect();
    let mut found: Vec<BTreeSet<DataItemKind>> = Vec::new();
    // Increasing size, so any enabling superset of a found set is skipped.
    for size in 1..=max.min(cands.len()) {
        for combo in subsets(&cands, size) {
            if found.iter().any(|f| f.is_subset(&combo)) {
                continue;
            }
            if oracle_enabled(kb, task, &combo) {
                found.push(combo);
            }
        }
    }
    let mut out: Vec<Vec<DataItemKind>> = found.into_iter().map(|s| s.into_iter().collect()).collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn subsets(items: &[DataItemKind], size: usize) -> Vec<BTreeSet<DataItemKind>> {
    if size == 0 {
        return vec![BTreeSet::new()];
    }
    let mut out = Vec::new();
    for (i, first) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], size - 1) {
            rest.insert(first.clone());
            out.push(rest);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Context oracle: rescan every signature each round.

pub struct NaiveDiscovery {
    pub tiers: BTreeMap<DataItemKind, u32>,
    pub via: BTreeMap<DataItemKind, (String, usize)>,
}

pub fn oracle_discover(kb: &KnowledgeBase) -> NaiveDiscovery {
    let mut tiers = BTreeMap::new();
    for s in kb.sensors().iter().filter(|s| s.active) {
        for k in &s.outputs {
            tiers.insert(k.clone(), 0);
        }
    }
    let mut via = BTreeMap::new();
    let mut round = 0;
    loop {
        round += 1;
        let mut fired: BTreeMap<DataItemKind, (String, usize)> = BTreeMap::new();
        for d in kb.dpcs() {
            for (j, sig) in d.signatures.iter().enumerate() {
                if tiers.contains_key(&sig.output) {
                    continue;
                }
                if sig.inputs.iter().all(|i| tiers.get(i).is_some_and(|t| *t < round)) {
                    let cand = (d.id.clone(), j);
                    let slot = fired.entry(sig.output.clone()).or_insert_with(|| cand.clone());
                    if cand < *slot {
                        *slot = cand;
                    }
                }
            }
        }
        if fired.is_empty() {
            break;
        }
        for (k, v) in fired {
            tiers.insert(k.clone(), round);
            via.insert(k, v);
        }
    }
    NaiveDiscovery { tiers, via }
}

// ---------------------------------------------------------------------------
// QA: random task catalogues and linear-scan oracles.

pub fn qa_doc(rng: &mut ChaCha8Rng, max_tasks: usize) -> Value {
    let concepts = ["domain", "goal", "event", "scale"];
    let n_tasks = rng.gen_range(1..=max_tasks);
    let mut tasks = Vec::new();
    for t in 0..n_tasks {
        let mut bindings = Vec::new();
        for c in concepts {
            if rng.gen_bool(0.7) {
                bindings.push(json!({"concept": c, "value": format!("{c}-{}", rng.gen_range(0..4))}));
            }
        }
        tasks.push(json!({"id": format!("task-{t:02}"), "required_stream": ["k"], "concepts": bindings}));
    }
    let questions: Vec<Value> = concepts
        .iter()
        .enumerate()
        .map(|(i, c)| json!({"id": format!("q-{i}"), "text": format!("Which {c}?"), "concept": c}))
        .collect();
    json!({
        "version": 1,
        "kinds": [{"label": "k", "type": "text", "unit": "none"}],
        "sensors": [{"id": "s", "outputs": ["k"]}],
        "tasks": tasks,
        "questions": questions,
    })
}

fn oracle_question_concept<'a>(kb: &'a KnowledgeBase, q: &str) -> &'a str {
    kb.questions().iter().find(|x| x.id == q).map(|x| x.concept.as_str()).unwrap()
}

pub fn oracle_matching(kb: &KnowledgeBase, c: &ConstraintSet) -> Vec<String> {
    let mut out: Vec<String> = kb
        .tasks()
        .iter()
        .filter(|t| {
            c.iter().all(|con| {
                let concept = oracle_question_concept(kb, &con.question_id);
                t.concepts.iter().any(|b| b.concept == concept && b.value == con.answer)
            })
        })
        .map(|t| t.id.clone())
        .collect();
    out.sort();
    out
}

pub fn oracle_answers(kb: &KnowledgeBase, c: &ConstraintSet, q: &str) -> Vec<String> {
    let concept = oracle_question_concept(kb, q);
    let matching = oracle_matching(kb, c);
    let mut vals: Vec<String> = kb
        .tasks()
        .iter()
        .filter(|t| matching.contains(&t.id))
        .flat_map(|t| t.concepts.iter().filter(|b| b.concept == concept).map(|b| b.value.clone()))
        .collect();
    vals.sort();
    vals.dedup();
    vals
}

/// Unanswered questions with at least one value, by descending value count
/// and then id.
pub fn oracle_available(kb: &KnowledgeBase, c: &ConstraintSet) -> Vec<String> {
    let mut out: Vec<(usize, String)> = kb
        .questions()
        .iter()
        .filter(|q| !c.iter().any(|x| x.question_id == q.id))
        .map(|q| (oracle_answers(kb, c, &q.id).len(), q.id.clone()))
        .filter(|(n, _)| *n > 0)
        .collect();
    out.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    out.into_iter().map(|(_, q)| q).collect()
}

// ---------------------------------------------------------------------------
// Cost oracle: the textbook formulas, written out long-hand.

pub fn oracle_raw(kb: &KnowledgeBase, sol: &Solution, attr: &str) -> f64 {
    let spec = &kb.header().attributes[attr];
    let mut resources: Vec<(bool, String)> = sol.nodes.iter().map(|n| (n.is_sensor(), n.resource().to_owned())).collect();
    resources.sort();
    resources.dedup();
    let values: Vec<Option<f64>> = resources
        .iter()
        .map(|(is_sensor, id)| {
            let ctx = if *is_sensor {
                &kb.sensors().iter().find(|s| &s.id == id).unwrap().context
            } else {
                &kb.dpcs().iter().find(|d| &d.id == id).unwrap().context
            };
            ctx.get(attr).copied()
        })
        .collect();
    match spec.polarity {
        Polarity::Cost => values.iter().map(|v| v.unwrap_or(spec.default)).sum(),
        Polarity::Benefit => {
            let present: Vec<f64> = values.into_iter().flatten().collect();
            if present.is_empty() {
                spec.default
            } else {
                present.into_iter().fold(f64::MAX, f64::min)
            }
        }
    }
}

/// Totals per candidate from raw values, weights already summing to one.
pub fn oracle_totals(
    polarity: &BTreeMap<String, Polarity>,
    raws: &[BTreeMap<String, f64>],
    weights: &BTreeMap<String, f64>,
) -> Vec<f64> {
    let mut totals = vec![0.0; raws.len()];
    for (attr, pol) in polarity {
        let col: Vec<f64> = raws.iter().map(|r| r[attr]).collect();
        let min = col.iter().cloned().fold(f64::MAX, f64::min);
        let max = col.iter().cloned().fold(f64::MIN, f64::max);
        for (i, v) in col.iter().enumerate() {
            let norm = if max == min {
                0.0
            } else if *pol == Polarity::Cost {
                (v - min) / (max - min)
            } else {
                (max - v) / (max - min)
            };
            totals[i] += weights.get(attr).copied().unwrap_or(0.0) * norm;
        }
    }
    totals
}
